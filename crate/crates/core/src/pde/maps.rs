//! Instance generators: sphere-valued maps, manifold potentials, H-systems.

use super::{Form, SystemInstance};
use crate::error::{Error, Result};
use crate::field::random::band_limited;
use crate::field::{DomainMask, Grid, Shape, TensorField};
use crate::fourier::SpectralPlan;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sphere-valued map with its exact gradient and Shatah potential
/// `Ω_ij = u^j ∇u^i - u^i ∇u^j`.
#[derive(Clone, Debug)]
pub struct SphereMap {
    pub u: TensorField,
    pub du: TensorField,
    pub omega: TensorField,
}

impl SphereMap {
    /// Potential-form instance `-div(w ∇u) = Ω · w ∇u` with Dirichlet data `u`.
    pub fn instance(&self, mask: &DomainMask, p: f64, delta: f64) -> Result<SystemInstance> {
        let mut inst = SystemInstance::homogeneous(mask.clone(), self.u.clone(), p, delta)?;
        inst.omega = self.omega.clone();
        inst.form = Form::Potential;
        inst.validate()?;
        Ok(inst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereParams {
    /// Target dimension `N` of `S^{N-1} ⊂ ℝ^N`, at least 2.
    pub target: usize,
    /// Peak of the angle fields; sets `‖∇u‖`.
    pub amplitude: f64,
    pub kmax: usize,
    pub seed: u64,
}

/// `u = (cos θ cos ψ, sin θ cos ψ, sin ψ, 0, …)` with `∇θ`, `∇ψ` spectral and
/// `∇u` by the chain rule; `ψ ≡ 0` when `N = 2` or `psi` is `None`.
pub fn sphere_map_from_angles(theta: &TensorField, psi: Option<&TensorField>, target: usize) -> Result<SphereMap> {
    if target < 2 || (psi.is_some() && target < 3) {
        return Err(Error::InvalidInstance(format!("target dimension {target} too small")));
    }
    let grid = theta.grid();
    let n = grid.dim();
    let plan = SpectralPlan::new(grid);
    let dtheta = plan.gradient(theta);
    let dpsi = psi.map(|p| plan.gradient(p));
    let mut u = TensorField::zeros(grid, Shape::vector(target));
    let mut du = TensorField::zeros(grid, Shape::matrix(target, n));
    for p in 0..grid.len() {
        let t = theta.at(p)[0];
        let s = psi.map_or(0.0, |f| f.at(p)[0]);
        let dt = dtheta.at(p);
        let ds: Vec<f64> = dpsi.as_ref().map_or(vec![0.0; n], |d| d.at(p).to_vec());
        let (st, ct, ss, cs) = (t.sin(), t.cos(), s.sin(), s.cos());
        let out = u.at_mut(p);
        out[0] = ct * cs;
        out[1] = st * cs;
        if target > 2 {
            out[2] = ss;
        }
        let out = du.at_mut(p);
        for a in 0..n {
            out[a] = -st * cs * dt[a] - ct * ss * ds[a];
            out[n + a] = ct * cs * dt[a] - st * ss * ds[a];
            if target > 2 {
                out[2 * n + a] = cs * ds[a];
            }
        }
    }
    let omega = shatah_potential(&u, &du);
    Ok(SphereMap { u, du, omega })
}

/// Random smooth sphere map: band-limited angles with peak `amplitude`.
pub fn manufacture_sphere_map(grid: Grid, params: &SphereParams) -> Result<SphereMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let theta = band_limited(grid, Shape::scalar(), params.kmax, params.amplitude, &mut rng);
    if params.target >= 3 {
        let psi = band_limited(grid, Shape::scalar(), params.kmax, 0.5 * params.amplitude, &mut rng);
        sphere_map_from_angles(&theta, Some(&psi), params.target)
    } else {
        sphere_map_from_angles(&theta, None, params.target)
    }
}

fn shatah_potential(u: &TensorField, du: &TensorField) -> TensorField {
    let grid = u.grid();
    let n = grid.dim();
    let nc = u.slots();
    let mut omega = TensorField::zeros(grid, Shape::new(vec![nc, nc, n]));
    for p in 0..grid.len() {
        let (v, d) = (u.at(p), du.at(p));
        let out = omega.at_mut(p);
        for i in 0..nc {
            for j in 0..nc {
                for a in 0..n {
                    out[(i * nc + j) * n + a] = v[j] * d[i * n + a] - v[i] * d[j * n + a];
                }
            }
        }
    }
    omega
}

/// Second fundamental form of the unit sphere: `A^i_{jk}(u) = -u^i δ_{jk}`,
/// written to `out[(i·N + j)·N + k]`.
pub fn sphere_second_fundamental_form(u: &[f64], out: &mut [f64]) {
    let nc = u.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..nc {
        for j in 0..nc {
            out[(i * nc + j) * nc + j] = -u[i];
        }
    }
}

/// `Ω_ij = Σ_k (A^i_{jk}(u) - A^j_{ik}(u)) ∇u^k`, antisymmetric by
/// construction. `a` fills the `N×N×N` table at a point.
pub fn manifold_potential(u: &TensorField, du: &TensorField, a: impl Fn(&[f64], &mut [f64])) -> Result<TensorField> {
    let grid = u.grid();
    let n = grid.dim();
    let nc = u.slots();
    du.expect_shape(&Shape::matrix(nc, n))?;
    let mut table = vec![0.0; nc * nc * nc];
    let mut omega = TensorField::zeros(grid, Shape::new(vec![nc, nc, n]));
    for p in 0..grid.len() {
        a(u.at(p), &mut table);
        let d = du.at(p);
        let out = omega.at_mut(p);
        for i in 0..nc {
            for j in 0..nc {
                for al in 0..n {
                    out[(i * nc + j) * n + al] = (0..nc)
                        .map(|k| (table[(i * nc + j) * nc + k] - table[(j * nc + i) * nc + k]) * d[k * n + al])
                        .sum();
                }
            }
        }
    }
    Ok(omega)
}

/// `H(u) = h0 + h1 sin(a·u)`: bounded and Lipschitz.
#[derive(Clone, Debug, PartialEq)]
pub struct HCoefficient {
    pub h0: f64,
    pub h1: f64,
    pub a: Vec<f64>,
}

impl HCoefficient {
    pub fn eval(&self, u: &[f64]) -> f64 {
        self.h0 + self.h1 * self.a.iter().zip(u).map(|(a, v)| a * v).sum::<f64>().sin()
    }
}

/// H-system data `-Δ_n u = H(u) ∂₁u × ⋯ × ∂ₙu` for a given map.
#[derive(Clone, Debug)]
pub struct HSystem {
    pub u: TensorField,
    /// Spectral gradient, `[n+1, n]`.
    pub du: TensorField,
    /// `H(u) ∂₁u × ⋯ × ∂ₙu`, `[n+1]`.
    pub rhs: TensorField,
    /// Commutator part plus the mean of the Riesz part, `[n+1]`.
    pub f: TensorField,
    /// `G = -R(|∇|^{-1} g)`, `[n+1, n]`.
    pub g: TensorField,
    /// Cofactor matrices of the row-deleted Jacobians, `[n+1, n, n]`.
    pub cofactor: TensorField,
    /// `‖R·B‖₂ / ‖B‖₂` over the cofactor rows.
    pub cofactor_divergence: f64,
    /// `max|f + div G - rhs| / max|rhs|`.
    pub reconstruction: f64,
}

fn minor_det(m: &[f64], size: usize, skip_r: usize, skip_c: usize) -> f64 {
    let rows: Vec<usize> = (0..size).filter(|&r| r != skip_r).collect();
    let cols: Vec<usize> = (0..size).filter(|&c| c != skip_c).collect();
    let k = size - 1;
    if k == 0 {
        return 1.0;
    }
    let sub = DMatrix::from_fn(k, k, |i, j| m[rows[i] * size + cols[j]]);
    sub.determinant()
}

/// Row-deleted Jacobian `D_k` (rows `∇u^j`, `j ≠ k`) at one point.
fn deleted(du: &[f64], n: usize, k: usize) -> Vec<f64> {
    (0..=n).filter(|&j| j != k).flat_map(|j| du[j * n..j * n + n].to_vec()).collect()
}

/// `cof(D_k)` for every `k`, from a gradient of shape `[n+1, n]`. Each row
/// of each cofactor matrix is divergence free when `du` is a gradient.
pub fn cofactor_field(du: &TensorField) -> Result<TensorField> {
    let grid = du.grid();
    let n = grid.dim();
    du.expect_shape(&Shape::matrix(n + 1, n))?;
    let mut out = TensorField::zeros(grid, Shape::new(vec![n + 1, n, n]));
    for p in 0..grid.len() {
        let d = du.at(p);
        let o = out.at_mut(p);
        for k in 0..=n {
            let m = deleted(d, n, k);
            for r in 0..n {
                for c in 0..n {
                    let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
                    o[(k * n + r) * n + c] = sign * minor_det(&m, n, r, c);
                }
            }
        }
    }
    Ok(out)
}

/// `∂₁u × ⋯ × ∂ₙu ∈ ℝ^{n+1}`, defined by `⟨X, w⟩ = det[∂₁u, …, ∂ₙu, w]`.
pub fn cross_product(du: &TensorField) -> Result<TensorField> {
    let grid = du.grid();
    let n = grid.dim();
    du.expect_shape(&Shape::matrix(n + 1, n))?;
    let mut x = TensorField::zeros(grid, Shape::vector(n + 1));
    for p in 0..grid.len() {
        let d = du.at(p);
        for (k, slot) in x.at_mut(p).iter_mut().enumerate() {
            let m = deleted(d, n, k);
            let sign = if (k + n) % 2 == 0 { 1.0 } else { -1.0 };
            *slot = sign * DMatrix::from_row_slice(n, n, &m).determinant();
        }
    }
    Ok(x)
}

/// Builds the H-system right-hand side for `u` (shape `[n+1]`) and splits it
/// as `f + div G`. With `L = |∇|u^{j₀}`, `j₀` the first index other than `k`,
///
/// ```text
/// H ∂_α u^{j₀} = R_α(H L) - [R_α, H](L),
/// ```
///
/// contracted with the first cofactor row of `D_k`. The commutator part goes
/// to `f`, the Riesz part `g` becomes `div G` after moving its mean to `f`.
pub fn manufacture_hsystem(u: &TensorField, h: &HCoefficient) -> Result<HSystem> {
    let grid = u.grid();
    let n = grid.dim();
    u.expect_shape(&Shape::vector(n + 1))?;
    if h.a.len() != n + 1 {
        return Err(Error::InvalidInstance("H coefficient has the wrong length".into()));
    }
    let plan = SpectralPlan::new(grid);
    let du = plan.gradient(u);
    let cofactor = cofactor_field(&du)?;
    let cross = cross_product(&du)?;
    let hval: Vec<f64> = (0..grid.len()).map(|p| h.eval(u.at(p))).collect();
    let rhs = cross.mul_scalar_field(&hval);

    let comps = u.components();
    let mut f_comps = vec![vec![0.0; grid.len()]; n + 1];
    let mut g_comps = vec![vec![0.0; grid.len()]; n + 1];
    for k in 0..=n {
        let j0 = if k == 0 { 1 } else { 0 };
        let sign = if (k + n) % 2 == 0 { 1.0 } else { -1.0 };
        let lap = plan.fractional_scalar(&comps[j0], 1.0);
        let hl: Vec<f64> = hval.iter().zip(&lap).map(|(a, b)| a * b).collect();
        for al in 0..n {
            let r_hl = plan.riesz_scalar(&hl, al);
            let r_l = plan.riesz_scalar(&lap, al);
            for p in 0..grid.len() {
                let cof = cofactor.at(p)[(k * n) * n + al];
                let comm = r_hl[p] - hval[p] * r_l[p];
                f_comps[k][p] -= sign * comm * cof;
                g_comps[k][p] += sign * r_hl[p] * cof;
            }
        }
        let mean = g_comps[k].iter().sum::<f64>() / grid.len() as f64;
        g_comps[k].iter_mut().for_each(|v| *v -= mean);
        f_comps[k].iter_mut().for_each(|v| *v += mean);
    }
    let f = TensorField::from_components(grid, Shape::vector(n + 1), &f_comps);
    let gsrc = TensorField::from_components(grid, Shape::vector(n + 1), &g_comps);
    let inv = plan.inv_fractional(&gsrc, 1.0)?;
    // G_{kβ} = -R_β |∇|^{-1} g_k
    let rows: Vec<TensorField> = (0..n).map(|b| plan.riesz(&inv, b)).collect();
    let mut g = TensorField::zeros(grid, Shape::matrix(n + 1, n));
    for p in 0..grid.len() {
        let out = g.at_mut(p);
        for k in 0..=n {
            for b in 0..n {
                out[k * n + b] = -rows[b].at(p)[k];
            }
        }
    }
    let div_g = plan.divergence(&g)?;
    let recon = f.add(&div_g)?.sub(&rhs)?.max_abs();
    let reconstruction = crate::hodge::safe_ratio(recon, rhs.max_abs());
    let rdiv = plan.riesz_div(&cofactor)?;
    let cofactor_divergence = crate::hodge::safe_ratio(rdiv.l2_norm(), cofactor.l2_norm());
    Ok(HSystem { u: u.clone(), du, rhs, f, g, cofactor, cofactor_divergence, reconstruction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::antisymmetry_defect;
    use std::f64::consts::TAU;

    #[test]
    fn sphere_map_is_unit_and_antisymmetric() {
        let g = Grid::new(2, 32).unwrap();
        let s = manufacture_sphere_map(g, &SphereParams { target: 3, amplitude: 1.0, kmax: 3, seed: 9 }).unwrap();
        for p in 0..g.len() {
            let r: f64 = s.u.at(p).iter().map(|v| v * v).sum();
            assert!((r - 1.0).abs() < 1e-12);
        }
        assert_eq!(antisymmetry_defect(&s.omega), 0.0);
        let a = manifold_potential(&s.u, &s.du, sphere_second_fundamental_form).unwrap();
        assert!(a.sub(&s.omega).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn equatorial_profile() {
        let g = Grid::new(2, 32).unwrap();
        let theta = TensorField::from_fn(g, |x| 0.3 * (TAU * x[0]).sin() + 0.2 * (TAU * x[1]).cos());
        let s = sphere_map_from_angles(&theta, None, 2).unwrap();
        let dtheta = SpectralPlan::new(g).gradient(&theta);
        for p in 0..g.len() {
            let om = s.omega.at(p);
            for a in 0..2 {
                assert!((om[(0 * 2 + 1) * 2 + a] + dtheta.at(p)[a]).abs() < 1e-12);
                assert!(om[a].abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_map_has_no_potential() {
        let g = Grid::new(2, 16).unwrap();
        let theta = TensorField::constant(g, Shape::scalar(), &[0.7]);
        let s = sphere_map_from_angles(&theta, None, 2).unwrap();
        assert_eq!(s.omega.max_abs(), 0.0);
        let a = manifold_potential(&s.u, &s.du, sphere_second_fundamental_form).unwrap();
        assert_eq!(a.max_abs(), 0.0);
    }

    #[test]
    fn cross_product_in_three_dimensions() {
        let g = Grid::new(2, 8).unwrap();
        let du = TensorField::constant(g, Shape::matrix(3, 2), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let x = cross_product(&du).unwrap();
        // (1,2,3) × (4,5,6) = (-3, 6, -3)
        assert_eq!(x.at(0), &[-3.0, 6.0, -3.0]);
    }

    #[test]
    fn affine_cofactor_is_constant() {
        let g = Grid::new(3, 8).unwrap();
        let vals: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let du = TensorField::constant(g, Shape::matrix(4, 3), &vals);
        let b = cofactor_field(&du).unwrap();
        let rdiv = SpectralPlan::new(g).riesz_div(&b).unwrap();
        assert_eq!(rdiv.max_abs(), 0.0);
    }

    #[test]
    fn hsystem_split_reconstructs() {
        use rand::SeedableRng;
        let g = Grid::new(2, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = band_limited(g, Shape::vector(3), 2, 0.3, &mut rng);
        let h = HCoefficient { h0: 1.0, h1: 0.5, a: vec![1.0, -0.5, 0.25] };
        let hs = manufacture_hsystem(&u, &h).unwrap();
        assert!(hs.cofactor_divergence <= 1e-6, "{}", hs.cofactor_divergence);
        assert!(hs.reconstruction <= 1e-8, "{}", hs.reconstruction);
    }
}
