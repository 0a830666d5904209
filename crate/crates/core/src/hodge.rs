//! Hodge splitting `F = ∇a + B` on the torus and on a ball.
//!
//! Fields may carry leading row axes: `F` of shape `[.., n]` gives `a` of
//! shape `[..]` and `B` of the same shape as `F`, each row split independently.

use crate::error::{Error, Result};
use crate::field::{gradient, DomainMask, Scheme, Shape, TensorField};
use crate::fourier::{riesz_curl_norm, trailing_rows, SpectralPlan};
use crate::linsolve::conjugate_gradient;
use crate::rearrange::{bmo_seminorm, lp_on, BallFamily};
use rayon::prelude::*;

/// Outcome of a Hodge split.
#[derive(Clone, Debug)]
pub struct HodgeResult {
    pub a: TensorField,
    pub b: TensorField,
    /// Gradient of `a` in the scheme used by the split.
    pub grad_a: TensorField,
    /// `‖F - ∇a - B‖₂` over the domain.
    pub reconstruction: f64,
    /// Relative residual of the Poisson solve (0 on the torus).
    pub solver_residual: f64,
    pub solver_iterations: usize,
    /// Ball variant: the Dirichlet domain.
    pub mask: Option<DomainMask>,
}

/// Measured estimate quantities at one exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HodgeRatios {
    pub p: f64,
    pub a_w1p: f64,
    pub b_lp: f64,
    pub riesz_div: f64,
    pub riesz_curl: f64,
    /// `‖a‖_{W^{1,p}} / ‖R·F‖_p`.
    pub a_ratio: f64,
    /// `‖B‖_p / ‖R^⊥F‖_p`.
    pub b_ratio: f64,
}

/// `num/den` with `0/0 = 0` and `x/0 = ∞`.
pub fn safe_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 1e-300 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Spectral Helmholtz split: `a = Δ^{-1} div F`, `B = F - ∇a`. The mean of
/// `F` stays in `B`, and `div B = 0` at the multiplier level.
pub fn hodge_torus(f: &TensorField) -> Result<HodgeResult> {
    let grid = f.grid();
    let n = grid.dim();
    trailing_rows(f, n)?;
    let plan = SpectralPlan::new(grid);
    let div = plan.divergence(f)?;
    let a_comps: Vec<Vec<f64>> = div.components().iter().map(|c| plan.inverse_laplacian_odd(c)).collect();
    let a = TensorField::from_components(grid, div.shape().clone(), &a_comps);
    let grad_a = plan.gradient(&a);
    let b = f.sub(&grad_a)?;
    let reconstruction = f.sub(&grad_a)?.sub(&b)?.l2_norm();
    Ok(HodgeResult { a, b, grad_a, reconstruction, solver_residual: 0.0, solver_iterations: 0, mask: None })
}

/// Dirichlet split on a masked ball: solve `L a = div F` with `a = 0` off the
/// mask, where `L = div ∘ grad` with central differences, then `B = F - ∇a`
/// on the mask. Inputs that are discrete central gradients of functions
/// vanishing off the mask give `B = 0` up to the solver tolerance.
pub fn hodge_ball(f: &TensorField, mask: &DomainMask, tol: f64) -> Result<HodgeResult> {
    let grid = f.grid();
    let n = grid.dim();
    let rows = trailing_rows(f, n)?;
    let norms = f.pointwise_norm();
    let peak = norms.iter().cloned().fold(0.0, f64::max);
    let tail = norms.iter().enumerate().filter(|(p, _)| !mask.contains(*p)).map(|(_, v)| *v).fold(0.0, f64::max);
    if peak > 0.0 && tail > 1e-10 * peak {
        return Err(Error::SupportViolation { tail: tail / peak });
    }
    let points = mask.points();
    let inv2h = 0.5 / grid.spacing();
    let div = crate::field::divergence(f, Scheme::Central)?;
    let div_comps = div.components();

    // -L on the unknowns: the Gram form of the central gradient, so SPD.
    let apply = |x: &[f64], y: &mut [f64]| {
        let mut full = vec![0.0; grid.len()];
        for (i, &p) in points.iter().enumerate() {
            full[p] = x[i];
        }
        let mut grad = vec![0.0; grid.len() * n];
        for p in 0..grid.len() {
            for a in 0..n {
                grad[p * n + a] = (full[grid.step(p, a, 1)] - full[grid.step(p, a, -1)]) * inv2h;
            }
        }
        for (i, &p) in points.iter().enumerate() {
            let mut acc = 0.0;
            for a in 0..n {
                acc += (grad[grid.step(p, a, 1) * n + a] - grad[grid.step(p, a, -1) * n + a]) * inv2h;
            }
            y[i] = -acc;
        }
    };
    let solved: Vec<Result<(Vec<f64>, usize, f64)>> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let rhs: Vec<f64> = points.iter().map(|&p| -div_comps[r][p]).collect();
            let mut x = vec![0.0; points.len()];
            let stats = conjugate_gradient(&apply, &rhs, &mut x, tol, 20 * points.len().max(100))?;
            let mut full = vec![0.0; grid.len()];
            for (i, &p) in points.iter().enumerate() {
                full[p] = x[i];
            }
            Ok((full, stats.iterations, stats.relative_residual))
        })
        .collect();
    let mut a_comps = Vec::with_capacity(rows);
    let (mut iters, mut resid) = (0, 0.0f64);
    for s in solved {
        let (c, it, res) = s?;
        a_comps.push(c);
        iters = iters.max(it);
        resid = resid.max(res);
    }
    let a_shape = f.shape().pop().unwrap_or_else(Shape::scalar);
    let a = TensorField::from_components(grid, a_shape, &a_comps);
    let grad_a = gradient(&a, Scheme::Central);
    let mut b = f.sub(&grad_a)?;
    for p in 0..grid.len() {
        if !mask.contains(p) {
            b.at_mut(p).copy_from_slice(f.at(p));
        }
    }
    let mut recon = f.sub(&grad_a)?.sub(&b)?;
    for p in 0..grid.len() {
        if !mask.contains(p) {
            recon.at_mut(p).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let reconstruction = recon.l2_norm();
    Ok(HodgeResult { a, b, grad_a, reconstruction, solver_residual: resid, solver_iterations: iters, mask: Some(mask.clone()) })
}

/// `‖a‖_{W^{1,p}}` and `‖B‖_p` on the split's domain against the torus norms
/// of `R·F` and `R^⊥F` (the zero extension of `F`).
pub fn estimate_ratios(f: &TensorField, split: &HodgeResult, p: f64) -> Result<HodgeRatios> {
    let plan = SpectralPlan::new(f.grid());
    let mask = split.mask.as_ref();
    let a_w1p = (lp_on(&split.a, mask, p).powf(p) + lp_on(&split.grad_a, mask, p).powf(p)).powf(1.0 / p);
    let b_lp = lp_on(&split.b, mask, p);
    let riesz_div = plan.riesz_div(f)?.lp_norm(p);
    let riesz_curl = riesz_curl_norm(&plan, f, p)?;
    Ok(HodgeRatios {
        p,
        a_w1p,
        b_lp,
        riesz_div,
        riesz_curl,
        a_ratio: safe_ratio(a_w1p, riesz_div),
        b_ratio: safe_ratio(b_lp, riesz_curl),
    })
}

/// Split of `F_i = Q_ij |∇w|^{-ε} ∇w^j` plus the two norm ratios it controls.
#[derive(Clone, Debug)]
pub struct TwistedHodge {
    pub split: HodgeResult,
    pub f: TensorField,
    pub eps: f64,
    /// `(n-ε)/(1-ε)`.
    pub exponent: f64,
    pub q_sup: f64,
    pub q_bmo: f64,
    /// `‖∇w‖_{L^{n-ε}}^{1-ε}` over the mask.
    pub grad_w_power: f64,
    /// `‖a‖_{W^{1,p}} / (‖Q‖_∞ ‖∇w‖^{1-ε})`.
    pub a_ratio: f64,
    /// `‖B‖_p / ((ε‖Q‖_∞ + [Q]_BMO) ‖∇w‖^{1-ε})`.
    pub b_ratio: f64,
}

/// Builds `F_i = Q_ij |∇w|^{-ε} ∇w^j` with central gradients; points with
/// `∇w = 0` give `F = 0`.
pub fn twisted_field(q: &TensorField, w: &TensorField, eps: f64) -> Result<TensorField> {
    let grid = w.grid();
    let n = grid.dim();
    let big_n = w.slots();
    q.expect_shape(&Shape::matrix(big_n, big_n))?;
    let dw = gradient(w, Scheme::Central);
    let norms = dw.pointwise_norm();
    let mut out = TensorField::zeros(grid, Shape::matrix(big_n, n));
    for p in 0..grid.len() {
        if norms[p] == 0.0 {
            continue;
        }
        let scale = norms[p].powf(-eps);
        let (qm, g) = (q.at(p), dw.at(p));
        let dst = out.at_mut(p);
        for i in 0..big_n {
            for a in 0..n {
                dst[i * n + a] = scale * (0..big_n).map(|j| qm[i * big_n + j] * g[j * n + a]).sum::<f64>();
            }
        }
    }
    Ok(out)
}

pub fn twisted_hodge(q: &TensorField, w: &TensorField, eps: f64, mask: &DomainMask, tol: f64) -> Result<TwistedHodge> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidExponent(format!("ε must lie in [0,1), got {eps}")));
    }
    let grid = w.grid();
    let n = grid.dim() as f64;
    let f = twisted_field(q, w, eps)?;
    let split = hodge_ball(&f, mask, tol)?;
    let exponent = (n - eps) / (1.0 - eps);
    let dw = gradient(w, Scheme::Central);
    let grad_w_power = lp_on(&dw, Some(mask), n - eps).powf(1.0 - eps);
    let q_sup = q.lp_norm(f64::INFINITY);
    let q_bmo = bmo_seminorm(q, &BallFamily::dyadic(grid, 1));
    let a_w1p = (lp_on(&split.a, Some(mask), exponent).powf(exponent)
        + lp_on(&split.grad_a, Some(mask), exponent).powf(exponent))
    .powf(1.0 / exponent);
    let b_lp = lp_on(&split.b, Some(mask), exponent);
    Ok(TwistedHodge {
        a_ratio: safe_ratio(a_w1p, q_sup * grad_w_power),
        b_ratio: safe_ratio(b_lp, (eps * q_sup + q_bmo) * grad_w_power),
        split,
        f,
        eps,
        exponent,
        q_sup,
        q_bmo,
        grad_w_power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::random::band_limited;
    use crate::field::{ball_mask, cutoff, divergence, periodic_offset, smoothstep_derivative, Grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pairing(a: &TensorField, b: &TensorField) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>() * a.grid().cell_volume()
    }

    #[test]
    fn torus_gradient_input() {
        let g = Grid::new(2, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = band_limited(g, Shape::scalar(), 6, 1.0, &mut rng);
        let f = gradient(&phi, Scheme::Spectral);
        let h = hodge_torus(&f).unwrap();
        assert!(h.b.max_abs() < 1e-10 * f.max_abs());
    }

    #[test]
    fn torus_divergence_free_mode() {
        let g = Grid::new(2, 32).unwrap();
        let f = TensorField::from_fn_tensor(g, Shape::vector(2), |x, out| {
            out[0] = (2.0 * PI * x[1]).sin();
            out[1] = (2.0 * PI * 2.0 * x[0]).cos();
        });
        let h = hodge_torus(&f).unwrap();
        assert!(h.a.max_abs() < 1e-12);
        assert!(h.b.sub(&f).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn torus_random_split() {
        let g = Grid::new(3, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = band_limited(g, Shape::matrix(2, 3), 7, 1.0, &mut rng);
        let h = hodge_torus(&f).unwrap();
        assert!(h.reconstruction < 1e-12);
        let div_b = SpectralPlan::new(g).divergence(&h.b).unwrap();
        assert!(div_b.max_abs() < 1e-10 * f.max_abs() * 16.0);
        assert!(pairing(&h.grad_a, &h.b).abs() < 1e-10);
        let r = estimate_ratios(&f, &h, 3.0).unwrap();
        assert!(r.b_ratio.is_finite() && r.a_ratio.is_finite());
        let r2 = estimate_ratios(&f.scale(3.0), &hodge_torus(&f.scale(3.0)).unwrap(), 3.0).unwrap();
        assert!((r.a_ratio - r2.a_ratio).abs() < 1e-12 * r.a_ratio);
        assert!((r.b_ratio - r2.b_ratio).abs() < 1e-12 * r.b_ratio);
    }

    #[test]
    fn ball_recovers_potential() {
        let g = Grid::new(2, 64).unwrap();
        let c = [0.5, 0.5];
        let mask = ball_mask(g, &c, 0.4).unwrap();
        let a0 = cutoff(g, &c, 0.1, 0.3).unwrap();
        // discrete gradient: exact recovery
        let f = gradient(&a0, Scheme::Central);
        let h = hodge_ball(&f, &mask, 1e-12).unwrap();
        assert!(h.b.l2_norm() < 1e-8 * f.l2_norm());
        assert!(h.a.sub(&a0).unwrap().max_abs() < 1e-9);
        // exact gradient of the quintic ramp: second-order convergence
        let (r_in, r_out) = (0.1, 0.3);
        let err = |m: usize| {
            let g = Grid::new(2, m).unwrap();
            let mask = ball_mask(g, &c, 0.4).unwrap();
            let a0 = cutoff(g, &c, r_in, r_out).unwrap();
            let f = TensorField::from_fn_tensor(g, Shape::vector(2), |x, out| {
                let d = periodic_offset(x, &c);
                let rho = (d[0] * d[0] + d[1] * d[1]).sqrt();
                if rho > 0.0 {
                    let slope = -smoothstep_derivative((r_out - rho) / (r_out - r_in)) / (r_out - r_in);
                    out[0] = slope * d[0] / rho;
                    out[1] = slope * d[1] / rho;
                }
            });
            let h = hodge_ball(&f, &mask, 1e-12).unwrap();
            h.a.sub(&a0).unwrap().max_abs()
        };
        let (e32, e64) = (err(32), err(64));
        assert!((e32 / e64).log2() > 1.8, "{e32} {e64}");
    }

    #[test]
    fn ball_divergence_free_input() {
        let g = Grid::new(2, 64).unwrap();
        let c = [0.5, 0.5];
        let mask = ball_mask(g, &c, 0.4).unwrap();
        // central-difference perp gradient of a bump is discretely divergence free
        let psi = cutoff(g, &c, 0.1, 0.3).unwrap();
        let d = gradient(&psi, Scheme::Central);
        let f = TensorField::from_fn_tensor(g, Shape::vector(2), |_, _| {});
        let mut f = f;
        for p in 0..g.len() {
            let v = d.at(p).to_vec();
            f.at_mut(p).copy_from_slice(&[-v[1], v[0]]);
        }
        assert!(divergence(&f, Scheme::Central).unwrap().max_abs() < 1e-10);
        let h = hodge_ball(&f, &mask, 1e-12).unwrap();
        assert!(h.a.max_abs() < 1e-10);
        assert!(h.b.sub(&f).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn ball_rejects_support_violation() {
        let g = Grid::new(2, 32).unwrap();
        let mask = ball_mask(g, &[0.5, 0.5], 0.2).unwrap();
        let f = TensorField::constant(g, Shape::vector(2), &[1.0, 0.0]);
        assert!(matches!(hodge_ball(&f, &mask, 1e-10), Err(Error::SupportViolation { .. })));
    }

    #[test]
    fn twisted_identity_reduces_to_gradient() {
        let g = Grid::new(2, 32).unwrap();
        let c = [0.5, 0.5];
        let mask = ball_mask(g, &c, 0.4).unwrap();
        let eta = cutoff(g, &c, 0.1, 0.3).unwrap();
        let w = TensorField::from_components(
            g,
            Shape::vector(2),
            &[eta.values().to_vec(), eta.values().iter().zip(g.coords(0).iter()).map(|(v, _)| 0.5 * v).collect()],
        );
        let q = TensorField::constant(g, Shape::matrix(2, 2), &[1.0, 0.0, 0.0, 1.0]);
        let t = twisted_hodge(&q, &w, 0.0, &mask, 1e-12).unwrap();
        assert!(t.split.b.l2_norm() < 1e-8 * t.f.l2_norm());
        assert!(t.a_ratio.is_finite());
        let t = twisted_hodge(&q, &w, 0.1, &mask, 1e-12).unwrap();
        assert!(t.b_ratio.is_finite() && t.b_ratio > 0.0);
    }
}
