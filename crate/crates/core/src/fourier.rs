//! Fourier multipliers on the periodic lattice.
//!
//! Convention: the forward transform uses `e^{-2πik·x}`, so `∂_α` has symbol
//! `2πi k_α`, the Riesz transform `R_α` has symbol `i k_α/|k|` and `|∇|^s` has
//! symbol `|2πk|^s`. With these choices `R_α |∇| = ∂_α`.
//!
//! Homogeneous multipliers send the zero mode to zero. Odd multipliers (first
//! derivatives, Riesz transforms) also vanish on the Nyquist index of their
//! axis, which keeps real inputs real.

use crate::error::{Error, Result};
use crate::field::{Grid, Shape, TensorField};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Precomputed FFT plans and wavenumber tables for one grid.
#[derive(Clone)]
pub struct SpectralPlan {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Signed wavenumber of each index along an axis.
    wavenumber: Vec<f64>,
    /// `|k|` per lattice mode.
    kmag: Vec<f64>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("grid", &self.grid).finish()
    }
}

impl SpectralPlan {
    pub fn new(grid: Grid) -> Self {
        let m = grid.m();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let wavenumber: Vec<f64> =
            (0..m).map(|i| if i < m / 2 { i as f64 } else { i as f64 - m as f64 }).collect();
        let kmag = (0..grid.len())
            .map(|p| {
                let idx = grid.multi_index(p);
                (0..grid.dim()).map(|a| wavenumber[idx[a]].powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        Self { grid, forward, inverse, wavenumber, kmag }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Wavenumber vector of a mode (true values, Nyquist included).
    pub fn k(&self, p: usize) -> [f64; 3] {
        let idx = self.grid.multi_index(p);
        let mut k = [0.0; 3];
        for a in 0..self.grid.dim() {
            k[a] = self.wavenumber[idx[a]];
        }
        k
    }

    /// Wavenumber used by odd multipliers: zero on the Nyquist index.
    #[inline]
    pub fn k_odd(&self, p: usize, axis: usize) -> f64 {
        let idx = self.grid.multi_index(p);
        if idx[axis] == self.grid.m() / 2 {
            0.0
        } else {
            self.wavenumber[idx[axis]]
        }
    }

    #[inline]
    pub fn kmag(&self, p: usize) -> f64 {
        self.kmag[p]
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let m = self.grid.m();
        let n = self.grid.dim();
        let fft = if inverse { &self.inverse } else { &self.forward };
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for axis in 0..n {
            let stride = m.pow((n - 1 - axis) as u32);
            let blocks = data.len() / (m * stride);
            for b in 0..blocks {
                for o in 0..stride {
                    let base = b * m * stride + o;
                    for (i, l) in line.iter_mut().enumerate() {
                        *l = data[base + i * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (i, l) in line.iter().enumerate() {
                        data[base + i * stride] = *l;
                    }
                }
            }
        }
    }

    /// Unnormalised forward transform of a real scalar array.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    /// Inverse transform (normalised), returning the real part.
    pub fn inverse(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut data, true);
        let scale = 1.0 / self.grid.len() as f64;
        data.into_iter().map(|c| c.re * scale).collect()
    }

    /// Applies a multiplier given per mode index.
    pub fn apply(&self, f: &[f64], symbol: impl Fn(usize) -> Complex64) -> Vec<f64> {
        let mut hat = self.forward(f);
        for (p, c) in hat.iter_mut().enumerate() {
            *c *= symbol(p);
        }
        self.inverse(hat)
    }

    pub fn derivative_symbol(&self, p: usize, axis: usize) -> Complex64 {
        Complex64::new(0.0, 2.0 * PI * self.k_odd(p, axis))
    }

    pub fn riesz_symbol(&self, p: usize, axis: usize) -> Complex64 {
        let k = self.kmag[p];
        if k == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, self.k_odd(p, axis) / k)
    }

    pub fn fractional_symbol(&self, p: usize, s: f64) -> f64 {
        let k = self.kmag[p];
        if k == 0.0 {
            0.0
        } else {
            (2.0 * PI * k).powf(s)
        }
    }

    pub fn derivative(&self, f: &[f64], axis: usize) -> Vec<f64> {
        self.apply(f, |p| self.derivative_symbol(p, axis))
    }

    pub fn riesz_scalar(&self, f: &[f64], axis: usize) -> Vec<f64> {
        self.apply(f, |p| self.riesz_symbol(p, axis))
    }

    pub fn fractional_scalar(&self, f: &[f64], s: f64) -> Vec<f64> {
        self.apply(f, |p| Complex64::new(self.fractional_symbol(p, s), 0.0))
    }

    pub fn laplacian_scalar(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f, |p| Complex64::new(-(2.0 * PI * self.kmag[p]).powi(2), 0.0))
    }

    /// Mean-zero solution of `Δa = g` using the odd-wavenumber Laplacian
    /// `Σ_α (2πi k_α)^2`, so that `div ∘ grad` inverts it exactly.
    pub fn inverse_laplacian_odd(&self, g: &[f64]) -> Vec<f64> {
        let n = self.grid.dim();
        self.apply(g, |p| {
            let k2: f64 = (0..n).map(|a| self.k_odd(p, a).powi(2)).sum();
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-1.0 / (4.0 * PI * PI * k2), 0.0)
            }
        })
    }

    fn map_components(&self, f: &TensorField, op: impl Fn(&[f64]) -> Vec<f64>) -> TensorField {
        let comps: Vec<Vec<f64>> = f.components().iter().map(|c| op(c)).collect();
        TensorField::from_components(f.grid(), f.shape().clone(), &comps)
    }

    /// Riesz transform `R_α` applied slot-wise.
    pub fn riesz(&self, f: &TensorField, axis: usize) -> TensorField {
        self.map_components(f, |c| self.riesz_scalar(c, axis))
    }

    pub fn fractional_laplacian(&self, f: &TensorField, s: f64) -> TensorField {
        self.map_components(f, |c| self.fractional_scalar(c, s))
    }

    /// `|∇|^{-s}` on mean-zero inputs.
    pub fn inv_fractional(&self, g: &TensorField, s: f64) -> Result<TensorField> {
        let scale = g.max_abs().max(f64::MIN_POSITIVE);
        for mean in g.mean() {
            if mean.abs() > 1e-10 * scale {
                return Err(Error::NotMeanZero { mean });
            }
        }
        Ok(self.map_components(g, |c| self.fractional_scalar(c, -s)))
    }

    /// Zero-order divergence `Σ_α R_α G_α`, contracting the trailing axis.
    pub fn riesz_div(&self, g: &TensorField) -> Result<TensorField> {
        let n = self.grid.dim();
        let rows = trailing_rows(g, n)?;
        let comps = g.components();
        let out: Vec<Vec<f64>> = (0..rows)
            .map(|r| {
                let mut hat = vec![Complex64::new(0.0, 0.0); self.grid.len()];
                for a in 0..n {
                    let ga = self.forward(&comps[r * n + a]);
                    for (p, h) in hat.iter_mut().enumerate() {
                        *h += self.riesz_symbol(p, a) * ga[p];
                    }
                }
                self.inverse(hat)
            })
            .collect();
        let shape = g.shape().pop().unwrap_or_else(Shape::scalar);
        Ok(TensorField::from_components(self.grid, shape, &out))
    }

    /// Zero-order curl with entries `R_α G_β - R_β G_α`; the trailing vector
    /// axis becomes an antisymmetric `n×n` block.
    pub fn riesz_curl(&self, g: &TensorField) -> Result<TensorField> {
        let n = self.grid.dim();
        let rows = trailing_rows(g, n)?;
        let comps = g.components();
        let mut out = Vec::with_capacity(rows * n * n);
        for r in 0..rows {
            let hats: Vec<Vec<Complex64>> = (0..n).map(|b| self.forward(&comps[r * n + b])).collect();
            for a in 0..n {
                for b in 0..n {
                    if a == b {
                        out.push(vec![0.0; self.grid.len()]);
                        continue;
                    }
                    let hat: Vec<Complex64> = (0..self.grid.len())
                        .map(|p| self.riesz_symbol(p, a) * hats[b][p] - self.riesz_symbol(p, b) * hats[a][p])
                        .collect();
                    out.push(self.inverse(hat));
                }
            }
        }
        let shape = g.shape().pop().unwrap_or_else(Shape::scalar).push(n).push(n);
        Ok(TensorField::from_components(self.grid, shape, &out))
    }

    /// `[R_α, b](f) = R_α(bf) - b R_α(f)` for every axis; the axis is appended.
    pub fn commutator(&self, b: &TensorField, f: &TensorField) -> Result<TensorField> {
        b.expect_shape(&Shape::scalar())?;
        if b.grid() != f.grid() {
            return Err(Error::ShapeMismatch { expected: "same grid".into(), found: "different grid".into() });
        }
        let n = self.grid.dim();
        let bv = b.values();
        let mut out = Vec::with_capacity(f.slots() * n);
        for c in f.components() {
            let bf: Vec<f64> = c.iter().zip(bv).map(|(x, y)| x * y).collect();
            for a in 0..n {
                let r_bf = self.riesz_scalar(&bf, a);
                let r_f = self.riesz_scalar(&c, a);
                out.push(r_bf.iter().zip(&r_f).zip(bv).map(|((x, y), z)| x - z * y).collect());
            }
        }
        Ok(TensorField::from_components(self.grid, f.shape().push(n), &out))
    }

    /// Gradient with the trailing derivative axis appended.
    pub fn gradient(&self, f: &TensorField) -> TensorField {
        let n = self.grid.dim();
        let mut out = Vec::with_capacity(f.slots() * n);
        for c in f.components() {
            let hat = self.forward(&c);
            for a in 0..n {
                let d: Vec<Complex64> =
                    hat.iter().enumerate().map(|(p, h)| self.derivative_symbol(p, a) * h).collect();
                out.push(self.inverse(d));
            }
        }
        TensorField::from_components(self.grid, f.shape().push(n), &out)
    }

    /// Divergence contracting the trailing axis.
    pub fn divergence(&self, g: &TensorField) -> Result<TensorField> {
        let n = self.grid.dim();
        let rows = trailing_rows(g, n)?;
        let comps = g.components();
        let out: Vec<Vec<f64>> = (0..rows)
            .map(|r| {
                let mut hat = vec![Complex64::new(0.0, 0.0); self.grid.len()];
                for a in 0..n {
                    let ga = self.forward(&comps[r * n + a]);
                    for (p, h) in hat.iter_mut().enumerate() {
                        *h += self.derivative_symbol(p, a) * ga[p];
                    }
                }
                self.inverse(hat)
            })
            .collect();
        let shape = g.shape().pop().unwrap_or_else(Shape::scalar);
        Ok(TensorField::from_components(self.grid, shape, &out))
    }

    pub fn laplacian(&self, f: &TensorField) -> TensorField {
        self.map_components(f, |c| self.laplacian_scalar(c))
    }
}

/// Number of leading rows when the trailing axis must have length `n`.
pub(crate) fn trailing_rows(g: &TensorField, n: usize) -> Result<usize> {
    match g.shape().last() {
        Some(k) if k == n => Ok(g.slots() / n),
        _ => Err(Error::ShapeMismatch { expected: format!("trailing axis of length {n}"), found: g.shape().to_string() }),
    }
}

/// Riesz transform of a field along one axis.
pub fn riesz(f: &TensorField, axis: usize) -> TensorField {
    SpectralPlan::new(f.grid()).riesz(f, axis)
}

pub fn fractional_laplacian(f: &TensorField, s: f64) -> TensorField {
    SpectralPlan::new(f.grid()).fractional_laplacian(f, s)
}

pub fn inv_fractional(g: &TensorField, s: f64) -> Result<TensorField> {
    SpectralPlan::new(g.grid()).inv_fractional(g, s)
}

pub fn riesz_div(g: &TensorField) -> Result<TensorField> {
    SpectralPlan::new(g.grid()).riesz_div(g)
}

pub fn riesz_curl(g: &TensorField) -> Result<TensorField> {
    SpectralPlan::new(g.grid()).riesz_curl(g)
}

pub fn commutator(b: &TensorField, f: &TensorField) -> Result<TensorField> {
    SpectralPlan::new(f.grid()).commutator(b, f)
}

/// `max_{α,β} ‖R_α G_β - R_β G_α‖_p`, the zero-order curl size used by the
/// commutator and Hodge estimates. Rows (leading slots) are measured jointly.
pub fn riesz_curl_norm(plan: &SpectralPlan, g: &TensorField, p: f64) -> Result<f64> {
    let n = plan.grid().dim();
    let curl = plan.riesz_curl(g)?;
    let rows = curl.slots() / (n * n);
    let mut best: f64 = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let comps: Vec<Vec<f64>> = (0..rows).map(|r| curl.component(r * n * n + a * n + b)).collect();
            let entry = TensorField::from_components(plan.grid(), Shape::vector(rows), &comps);
            best = best.max(entry.lp_norm(p));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::random::band_limited;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid {
        Grid::new(2, 32).unwrap()
    }

    #[test]
    fn riesz_of_plane_wave() {
        let g = grid();
        let plan = SpectralPlan::new(g);
        let (k1, k2): (f64, f64) = (3.0, -2.0);
        let kn = (k1 * k1 + k2 * k2).sqrt();
        let f = TensorField::from_fn(g, |x| (2.0 * PI * (k1 * x[0] + k2 * x[1])).cos());
        for (axis, ka) in [(0, k1), (1, k2)] {
            let r = plan.riesz(&f, axis);
            let expect = TensorField::from_fn(g, |x| -(ka / kn) * (2.0 * PI * (k1 * x[0] + k2 * x[1])).sin());
            let err = r.sub(&expect).unwrap().max_abs();
            assert!(err < 1e-12, "axis {axis}: {err}");
        }
    }

    #[test]
    fn constants_are_annihilated() {
        let g = grid();
        let plan = SpectralPlan::new(g);
        let c = TensorField::constant(g, Shape::vector(2), &[3.0, -1.5]);
        assert!(plan.riesz(&c, 0).max_abs() < 1e-14);
        assert!(plan.riesz_div(&c).unwrap().max_abs() < 1e-14);
        assert!(plan.riesz_curl(&c).unwrap().max_abs() < 1e-14);
        let b = TensorField::constant(g, Shape::scalar(), &[2.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = band_limited(g, Shape::scalar(), 4, 1.0, &mut rng);
        assert!(plan.commutator(&b, &f).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn fractional_round_trip_and_laplacian() {
        let g = grid();
        let plan = SpectralPlan::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = band_limited(g, Shape::scalar(), 6, 1.0, &mut rng);
        let f0 = f.sub(&TensorField::constant(g, Shape::scalar(), &f.mean())).unwrap();
        let back = plan.inv_fractional(&plan.fractional_laplacian(&f0, 1.0), 1.0).unwrap();
        assert!(back.sub(&f0).unwrap().max_abs() < 1e-10);

        let lap2 = plan.fractional_laplacian(&f, 2.0);
        let lap = plan.laplacian(&f).scale(-1.0);
        assert!(lap2.sub(&lap).unwrap().max_abs() < 1e-9 * lap.max_abs());
    }

    #[test]
    fn inverse_rejects_nonzero_mean() {
        let g = grid();
        let c = TensorField::constant(g, Shape::scalar(), &[1.0]);
        assert!(matches!(inv_fractional(&c, 1.0), Err(Error::NotMeanZero { .. })));
    }

    #[test]
    fn riesz_times_half_laplacian_is_derivative() {
        // R_α |∇| f = +∂_α f under this crate's convention.
        let g = grid();
        let plan = SpectralPlan::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = band_limited(g, Shape::scalar(), 5, 1.0, &mut rng);
        for a in 0..2 {
            let lhs = plan.riesz(&plan.fractional_laplacian(&f, 1.0), a);
            let rhs = plan.derivative(f.values(), a);
            let err = lhs.values().iter().zip(&rhs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{err}");
        }
    }

    #[test]
    fn curl_of_gradient_vanishes() {
        let g = Grid::new(3, 16).unwrap();
        let plan = SpectralPlan::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = band_limited(g, Shape::scalar(), 3, 1.0, &mut rng);
        let grad = plan.gradient(&phi);
        let curl = plan.riesz_curl(&grad).unwrap();
        assert!(curl.max_abs() < 1e-10 * grad.max_abs());
        // antisymmetry
        for p in 0..g.len() {
            let c = curl.at(p);
            for a in 0..3 {
                for b in 0..3 {
                    assert_eq!(c[a * 3 + b], -c[b * 3 + a]);
                }
            }
        }
    }

    #[test]
    fn single_mode_rotational_field() {
        // G = (sin 2πx₂, 0): R_1 G_2 - R_2 G_1 = -R_2 G_1; R_2 sin(2πx₂) = -cos(2πx₂)·(-1)... per symbol i·1/1 on mode +1.
        let g = grid();
        let plan = SpectralPlan::new(g);
        let field = TensorField::from_fn_tensor(g, Shape::vector(2), |x, out| {
            out[0] = (2.0 * PI * x[1]).sin();
            out[1] = 0.0;
        });
        let curl = plan.riesz_curl(&field).unwrap();
        // symbol i k/|k| on sin(2πx) gives cos(2πx); entry [0][1] = R_0 G_1 - R_1 G_0 = -cos(2πx₂)
        for p in 0..g.len() {
            let x = g.coords(p);
            let expect = -(2.0 * PI * x[1]).cos();
            assert!((curl.at(p)[1] - expect).abs() < 1e-12);
            assert!((curl.at(p)[2] + expect).abs() < 1e-12);
        }
        assert!(plan.riesz_div(&field).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn commutator_of_two_modes() {
        // b = cos(2πx₁), f = cos(2πx₂): bf = ½cos(2π(x₁+x₂)) + ½cos(2π(x₁-x₂)).
        let g = grid();
        let plan = SpectralPlan::new(g);
        let b = TensorField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        let f = TensorField::from_fn(g, |x| (2.0 * PI * x[1]).cos());
        let out = plan.commutator(&b, &f).unwrap();
        let s2 = 2f64.sqrt();
        for p in 0..g.len() {
            let x = g.coords(p);
            let (sp, sm) = ((2.0 * PI * (x[0] + x[1])).sin(), (2.0 * PI * (x[0] - x[1])).sin());
            let c1 = (2.0 * PI * x[0]).cos();
            let s_f = (2.0 * PI * x[1]).sin();
            // R_1(bf) = -½(1/√2) sp - ½(1/√2) sm ; R_1 f = 0
            let e1 = -0.5 / s2 * sp - 0.5 / s2 * sm;
            // R_2(bf) = -½(1/√2) sp + ½(1/√2) sm ; R_2 f = -sin(2πx₂)
            let e2 = -0.5 / s2 * sp + 0.5 / s2 * sm - c1 * (-s_f);
            assert!((out.at(p)[0] - e1).abs() < 1e-12);
            assert!((out.at(p)[1] - e2).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval() {
        let g = Grid::new(3, 8).unwrap();
        let plan = SpectralPlan::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = band_limited(g, Shape::scalar(), 4, 1.0, &mut rng);
        let hat = plan.forward(f.values());
        let e_hat: f64 = hat.iter().map(|c| c.norm_sqr()).sum::<f64>() / g.len() as f64;
        let e: f64 = f.values().iter().map(|v| v * v).sum();
        assert!((e - e_hat).abs() < 1e-10 * e);
        let back = plan.inverse(hat);
        assert!(back.iter().zip(f.values()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
