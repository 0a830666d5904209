//! Weak-form residuals against smooth test fields supported inside the mask.

use super::{weight, Form, SystemInstance};
use crate::error::Result;
use crate::field::{gradient, periodic_offset, DomainMask, Scheme, Shape, TensorField};
use rand::Rng;
use std::f64::consts::{PI, TAU};

/// A test field `φ` (shape `[N]`) with its exact gradient (shape `[N, n]`).
#[derive(Clone, Debug)]
pub struct TestField {
    pub phi: TensorField,
    pub grad: TensorField,
}

impl TestField {
    /// `(Σ h^n (|φ|^p + |∇φ|^p))^{1/p}`.
    pub fn w1p_norm(&self, p: f64) -> f64 {
        let a = self.phi.pointwise_norm();
        let b = self.grad.pointwise_norm();
        let s: f64 = a.iter().zip(&b).map(|(x, y)| x.powf(p) + y.powf(p)).sum();
        (s * self.phi.grid().cell_volume()).powf(1.0 / p)
    }
}

/// Residual of a weak form: the largest `|pairing| / ‖φ‖_{W^{1,p}}` over the
/// test fields, and the same ratio for the sum of absolute term sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakResidual {
    pub value: f64,
    pub scale: f64,
}

impl WeakResidual {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.value / self.scale
        } else {
            0.0
        }
    }
}

/// Bump `(1 - ρ²)^8`, `ρ = |x - c|/R`, and `dψ/dρ`. Seven continuous
/// derivatives keep lattice sums of paired integrands accurate to far below
/// second-order truncation.
fn bump(rho: f64) -> (f64, f64) {
    if rho >= 1.0 {
        return (0.0, 0.0);
    }
    let t = 1.0 - rho * rho;
    (t.powi(8), -16.0 * rho * t.powi(7))
}

/// Builds `φ^i = ψ(x) T_i(x)` from a trigonometric factor with gradient.
fn modulated(
    mask: &DomainMask,
    ncomp: usize,
    trig: impl Fn(&[f64; 3], &mut [f64], &mut [f64]),
) -> TestField {
    let grid = mask.grid();
    let n = grid.dim();
    let h = grid.spacing();
    let radius = mask.radius() - 3.0 * h;
    let c = mask.center().to_vec();
    let mut phi = TensorField::zeros(grid, Shape::vector(ncomp));
    let mut grad = TensorField::zeros(grid, Shape::matrix(ncomp, n));
    let mut t = vec![0.0; ncomp];
    let mut dt = vec![0.0; ncomp * n];
    for p in 0..grid.len() {
        let d = periodic_offset(&grid.coords(p)[..n], &c);
        let r = d[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
        let (psi, dpsi) = bump(r / radius);
        if psi == 0.0 {
            continue;
        }
        trig(&d, &mut t, &mut dt);
        let out = phi.at_mut(p);
        for i in 0..ncomp {
            out[i] = psi * t[i];
        }
        let out = grad.at_mut(p);
        for i in 0..ncomp {
            for a in 0..n {
                let dpsi_a = if r > 0.0 { dpsi * d[a] / (r * radius) } else { 0.0 };
                out[i * n + a] = dpsi_a * t[i] + psi * dt[i * n + a];
            }
        }
    }
    TestField { phi, grad }
}

/// Fixed basis: a smooth bump inside the mask times `1`, `cos`, `sin` of
/// `π k·(x - c)/R` for `k = e_a` and `k = e_0 + e_1`, one component at a time.
pub fn bump_test_fields(mask: &DomainMask, ncomp: usize) -> Vec<TestField> {
    let n = mask.grid().dim();
    let radius = mask.radius() - 3.0 * mask.grid().spacing();
    let mut modes: Vec<[f64; 3]> = (0..n)
        .map(|a| {
            let mut k = [0.0; 3];
            k[a] = 1.0;
            k
        })
        .collect();
    modes.push([1.0, 1.0, 0.0]);
    let mut out = Vec::new();
    for comp in 0..ncomp {
        out.push(modulated(mask, ncomp, |_, t, dt| {
            t.iter_mut().for_each(|v| *v = 0.0);
            dt.iter_mut().for_each(|v| *v = 0.0);
            t[comp] = 1.0;
        }));
        for k in &modes {
            for shift in [0.0, 0.5 * PI] {
                out.push(modulated(mask, ncomp, |d, t, dt| {
                    t.iter_mut().for_each(|v| *v = 0.0);
                    dt.iter_mut().for_each(|v| *v = 0.0);
                    let arg = PI * (0..n).map(|a| k[a] * d[a]).sum::<f64>() / radius + shift;
                    t[comp] = arg.cos();
                    for a in 0..n {
                        dt[comp * n + a] = -arg.sin() * PI * k[a] / radius;
                    }
                }));
            }
        }
    }
    out
}

/// Random smooth test fields: the bump times three random plane waves per
/// component.
pub fn random_test_fields<R: Rng>(mask: &DomainMask, ncomp: usize, count: usize, rng: &mut R) -> Vec<TestField> {
    let n = mask.grid().dim();
    (0..count)
        .map(|_| {
            let waves: Vec<(usize, f64, [f64; 3], f64)> = (0..3 * ncomp)
                .map(|t| {
                    let mut k = [0.0; 3];
                    for slot in k.iter_mut().take(n) {
                        *slot = rng.random_range(-3i32..=3) as f64;
                    }
                    (t % ncomp, rng.random_range(-1.0..1.0), k, rng.random_range(0.0..TAU))
                })
                .collect();
            modulated(mask, ncomp, |d, t, dt| {
                t.iter_mut().for_each(|v| *v = 0.0);
                dt.iter_mut().for_each(|v| *v = 0.0);
                for (i, amp, k, ph) in &waves {
                    let arg = TAU * (0..n).map(|a| k[a] * d[a]).sum::<f64>() + ph;
                    t[*i] += amp * arg.cos();
                    for a in 0..n {
                        dt[i * n + a] -= amp * arg.sin() * TAU * k[a];
                    }
                }
            })
        })
        .collect()
}

/// Weak pairing `⟨Q w ∇u, ∇φ⟩ - ⟨f, φ⟩ + ⟨G, ∇φ⟩ - ⟨Ω · w ∇u, φ⟩` by lattice
/// sum, with `w = (|∇u|² + δ²)^{(p-2)/2}` and the last term present only in
/// potential form. Returns the value and the sum of absolute term sizes.
pub fn pairing(du: &TensorField, inst: &SystemInstance, t: &TestField) -> (f64, f64) {
    let grid = inst.grid();
    let n = grid.dim();
    let nc = inst.components();
    let potential = inst.form == Form::Potential;
    let mut terms = [0.0f64; 4];
    for p in 0..grid.len() {
        let phi = t.phi.at(p);
        let dphi = t.grad.at(p);
        if phi.iter().chain(dphi).all(|v| *v == 0.0) {
            continue;
        }
        let g = du.at(p);
        let s: f64 = g.iter().map(|v| v * v).sum();
        let w = weight(s, inst.p, inst.delta);
        let q = inst.q.at(p);
        let f = inst.f.at(p);
        let gg = inst.g.at(p);
        let om = inst.omega.at(p);
        for i in 0..nc {
            for a in 0..n {
                let flux: f64 = (0..nc).map(|j| q[i * nc + j] * g[j * n + a]).sum::<f64>() * w;
                terms[0] += flux * dphi[i * n + a];
                terms[2] += gg[i * n + a] * dphi[i * n + a];
            }
            terms[1] += f[i] * phi[i];
            if potential {
                let rhs: f64 = (0..nc)
                    .map(|j| (0..n).map(|a| om[(i * nc + j) * n + a] * g[j * n + a]).sum::<f64>())
                    .sum::<f64>()
                    * w;
                terms[3] += rhs * phi[i];
            }
        }
    }
    let vol = grid.cell_volume();
    let value = (terms[0] - terms[1] + terms[2] - terms[3]) * vol;
    let magnitude = terms.iter().map(|v| v.abs()).sum::<f64>() * vol;
    (value, magnitude)
}

/// Residual of `inst` at a state with gradient `du` over the given tests.
pub fn residual_with_gradient(du: &TensorField, inst: &SystemInstance, tests: &[TestField]) -> WeakResidual {
    let mut out = WeakResidual { value: 0.0, scale: 0.0 };
    for t in tests {
        let norm = t.w1p_norm(inst.p);
        if norm == 0.0 {
            continue;
        }
        let (v, m) = pairing(du, inst, t);
        out.value = out.value.max(v.abs() / norm);
        out.scale = out.scale.max(m / norm);
    }
    out
}

/// Residual of `inst` at `u` against [`bump_test_fields`], with `∇u` by
/// central differences.
pub fn residual(u: &TensorField, inst: &SystemInstance) -> Result<WeakResidual> {
    let u = u.clone().reshape(Shape::vector(inst.components()))?;
    let du = gradient(&u, Scheme::Central);
    let tests = bump_test_fields(&inst.mask, inst.components());
    Ok(residual_with_gradient(&du, inst, &tests))
}

/// `ψ = Qᵀφ` with `∇ψ = (∇Qᵀ)φ + Qᵀ∇φ`, using the given `∇Q` of shape
/// `[N, N, n]`.
pub fn pull_back_test(t: &TestField, q: &TensorField, grad_q: &TensorField) -> TestField {
    let grid = t.phi.grid();
    let n = grid.dim();
    let nc = t.phi.slots();
    let mut phi = TensorField::zeros(grid, Shape::vector(nc));
    let mut grad = TensorField::zeros(grid, Shape::matrix(nc, n));
    for p in 0..grid.len() {
        let (f, df, qm, dq) = (t.phi.at(p), t.grad.at(p), q.at(p), grad_q.at(p));
        let out = phi.at_mut(p);
        for i in 0..nc {
            out[i] = (0..nc).map(|j| qm[j * nc + i] * f[j]).sum();
        }
        let out = grad.at_mut(p);
        for i in 0..nc {
            for a in 0..n {
                out[i * n + a] =
                    (0..nc).map(|j| dq[(j * nc + i) * n + a] * f[j] + qm[j * nc + i] * df[j * n + a]).sum();
            }
        }
    }
    TestField { phi, grad }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ball_mask, Grid};
    use crate::pde::{manufacture, DataForm, SmoothMap, SmoothRotation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn test_field_gradients_are_exact() {
        let g = Grid::new(2, 64).unwrap();
        let mask = ball_mask(g, &[0.5, 0.5], 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tests = bump_test_fields(&mask, 2);
        tests.extend(random_test_fields(&mask, 2, 3, &mut rng));
        for t in &tests {
            let spectral = gradient(&t.phi, Scheme::Spectral);
            let err = spectral.sub(&t.grad).unwrap().max_abs();
            assert!(err < 1e-3 * t.grad.max_abs(), "{err}");
            for p in 0..g.len() {
                if !mask.contains(p) {
                    assert!(t.phi.at(p).iter().all(|v| *v == 0.0));
                }
            }
        }
    }

    #[test]
    fn manufactured_pair_has_small_residual_and_grows_with_perturbation() {
        let g = Grid::new(2, 64).unwrap();
        let mask = ball_mask(g, &[0.5, 0.5], 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // |∇u| bounded away from zero keeps the weight analytic in a wide strip.
        let mut u = SmoothMap::random(2, 2, 2, 0.05, &mut rng);
        u.linear = vec![[2.0, 0.5, 0.0], [-0.3, 1.8, 0.0]];
        let q = SmoothRotation::random(2, 2, 0.3, &mut rng);
        for form in [DataForm::Source, DataForm::Flux] {
            let mf = manufacture(&mask, &u, &q, 3.0, 1e-3, form).unwrap();
            let tests = bump_test_fields(&mask, 2);
            let r0 = residual_with_gradient(&mf.exact_gradient, &mf.instance, &tests);
            assert!(r0.relative() < 1e-9, "{form:?}: {}", r0.relative());
            let bump = SmoothMap::random(2, 2, 1, 1.0, &mut rng).sample_gradient(g);
            let mut last = r0.value;
            for eps in [1e-4, 1e-3, 1e-2, 1e-1] {
                let du = mf.exact_gradient.add(&bump.scale(eps)).unwrap();
                let r = residual_with_gradient(&du, &mf.instance, &tests).value;
                assert!(r > last);
                last = r;
            }
        }
    }

    #[test]
    fn constant_state_with_zero_data() {
        let g = Grid::new(2, 32).unwrap();
        let mask = ball_mask(g, &[0.5, 0.5], 0.4).unwrap();
        let u = TensorField::constant(g, Shape::vector(1), &[2.0]);
        let inst = SystemInstance::homogeneous(mask, u.clone(), 2.0, 1e-4).unwrap();
        assert_eq!(residual(&u, &inst).unwrap().value, 0.0);
    }
}
