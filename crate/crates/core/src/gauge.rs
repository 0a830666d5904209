//! Coulomb gauge over SO(N)-valued lattice fields.
//!
//! A potential `Ω` is a field of shape `[N, N, n]`: an antisymmetric matrix of
//! vector fields. For a rotation field `Q` the transformed potential is
//! `Ω^Q = Q∇Qᵀ + QΩQᵀ`, and the gauge is sought by minimizing `Σ|Ω^Q|²` over
//! `Q` with steps `Q ← exp(ξ)Q`.

use crate::error::{Error, Result};
use crate::field::{Grid, Shape, TensorField};
use crate::fourier::SpectralPlan;
use crate::hodge::safe_ratio;
use crate::pde::{Form, SystemInstance};
use crate::rearrange::{lorentz_norm_of, LorentzSpec};
use crate::verify::Report;
use crate::field::random::band_limited;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

/// Lattice field of rotation matrices, stored row-major per point.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationField {
    field: TensorField,
    size: usize,
}

impl RotationField {
    /// Validates `QᵀQ = I` to 1e-10 and `det Q = 1` to 1e-8 at every point.
    pub fn new(field: TensorField) -> Result<Self> {
        let dims = field.shape().dims().to_vec();
        if dims.len() != 2 || dims[0] != dims[1] || dims[0] == 0 {
            return Err(Error::ShapeMismatch { expected: "[N, N]".into(), found: field.shape().to_string() });
        }
        let q = Self { size: dims[0], field };
        let orth = q.orthogonality_defect();
        if orth > 1e-10 {
            return Err(Error::InvalidInstance(format!("rotation field is not orthogonal (defect {orth:e})")));
        }
        let det = q.determinant_defect();
        if det > 1e-8 {
            return Err(Error::InvalidInstance(format!("rotation field has det ≠ 1 (defect {det:e})")));
        }
        Ok(q)
    }

    pub fn identity(grid: Grid, size: usize) -> Self {
        let eye = DMatrix::<f64>::identity(size, size);
        Self::constant(grid, &eye)
    }

    /// Constant field; `r` is assumed to be a rotation.
    pub fn constant(grid: Grid, r: &DMatrix<f64>) -> Self {
        let size = r.nrows();
        let row_major: Vec<f64> = r.transpose().iter().cloned().collect();
        let field = TensorField::constant(grid, Shape::matrix(size, size), &row_major);
        Self { field, size }
    }

    pub fn from_fn(grid: Grid, size: usize, f: impl Fn(&[f64]) -> DMatrix<f64>) -> Result<Self> {
        let field = TensorField::from_fn_tensor(grid, Shape::matrix(size, size), |x, out| {
            let m = f(x);
            for i in 0..size {
                for j in 0..size {
                    out[i * size + j] = m[(i, j)];
                }
            }
        });
        Self::new(field)
    }

    pub fn grid(&self) -> Grid {
        self.field.grid()
    }

    /// Matrix size `N`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn field(&self) -> &TensorField {
        &self.field
    }

    pub fn into_field(self) -> TensorField {
        self.field
    }

    /// Row-major entries at lattice point `p`.
    pub fn at(&self, p: usize) -> &[f64] {
        self.field.at(p)
    }

    pub fn matrix(&self, p: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.size, self.size, self.at(p))
    }

    pub fn is_identity(&self) -> bool {
        let n = self.size;
        (0..self.grid().len()).all(|p| {
            let q = self.at(p);
            (0..n * n).all(|k| q[k] == if k / n == k % n { 1.0 } else { 0.0 })
        })
    }

    /// `max_x ‖QᵀQ - I‖_max`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.size;
        let mut worst = 0.0f64;
        for p in 0..self.grid().len() {
            let q = self.at(p);
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = (0..n).map(|k| q[k * n + i] * q[k * n + j]).sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((dot - target).abs());
                }
            }
        }
        worst
    }

    /// `max_x |det Q - 1|`.
    pub fn determinant_defect(&self) -> f64 {
        (0..self.grid().len()).map(|p| (self.matrix(p).determinant() - 1.0).abs()).fold(0.0, f64::max)
    }

    fn from_field_unchecked(field: TensorField) -> Self {
        let size = field.shape().dims()[0];
        Self { field, size }
    }
}

fn skew_part(f: TensorField, size: usize) -> TensorField {
    let n = f.grid().dim();
    let mut out = f.clone();
    for p in 0..f.grid().len() {
        let (src, dst) = (f.at(p), out.at_mut(p));
        for i in 0..size {
            for j in 0..size {
                for a in 0..n {
                    dst[(i * size + j) * n + a] = 0.5 * (src[(i * size + j) * n + a] - src[(j * size + i) * n + a]);
                }
            }
        }
    }
    out
}

/// Band-limited antisymmetric potential of shape `[N, N, n]` with modes
/// `|k_a| ≤ kmax` and peak entry `amplitude`.
pub fn random_potential<R: Rng>(grid: Grid, size: usize, kmax: usize, amplitude: f64, rng: &mut R) -> TensorField {
    let raw = band_limited(grid, Shape::new(vec![size, size, grid.dim()]), kmax, 1.0, rng);
    let f = skew_part(raw, size);
    let peak = f.max_abs();
    if peak > 0.0 {
        f.scale(amplitude / peak)
    } else {
        f
    }
}

/// `Q = exp(ξ(x))` for a band-limited antisymmetric `ξ` with peak entry
/// `amplitude`.
pub fn random_rotation<R: Rng>(grid: Grid, size: usize, kmax: usize, amplitude: f64, rng: &mut R) -> RotationField {
    let raw = band_limited(grid, Shape::matrix(size, size), kmax, 1.0, rng);
    let mut xi = raw.clone();
    for p in 0..grid.len() {
        let (src, dst) = (raw.at(p), xi.at_mut(p));
        for i in 0..size {
            for j in 0..size {
                dst[i * size + j] = 0.5 * (src[i * size + j] - src[j * size + i]);
            }
        }
    }
    let peak = xi.max_abs();
    let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
    exp_step(&RotationField::identity(grid, size), &xi, scale)
}

fn expect_potential(omega: &TensorField, size: usize, grid: Grid) -> Result<()> {
    if omega.grid() != grid {
        return Err(Error::ShapeMismatch { expected: "same grid".into(), found: "different grid".into() });
    }
    omega.expect_shape(&Shape::new(vec![size, size, grid.dim()]))
}

/// Spectral `∇Q`, shape `[N, N, n]`.
pub fn rotation_gradient(q: &RotationField) -> TensorField {
    SpectralPlan::new(q.grid()).gradient(q.field())
}

/// Pure-gauge potential `Q₀ᵀ∇Q₀`, taken as its skew part
/// `½(Q₀ᵀ∇Q₀ - ∇Q₀ᵀQ₀)` so that `omega_q(Q₀, ·)` cancels it exactly.
pub fn pure_gauge(q0: &RotationField) -> TensorField {
    let grid = q0.grid();
    let (nn, n) = (q0.size(), grid.dim());
    let dq = rotation_gradient(q0);
    let mut out = TensorField::zeros(grid, Shape::new(vec![nn, nn, n]));
    out.values_mut().par_chunks_mut(nn * nn * n).enumerate().for_each(|(p, dst)| {
        let (q, d) = (q0.at(p), dq.at(p));
        for i in 0..nn {
            for j in 0..nn {
                for a in 0..n {
                    let mut acc = 0.0;
                    for k in 0..nn {
                        acc += q[k * nn + i] * d[(k * nn + j) * n + a] - d[(k * nn + i) * n + a] * q[k * nn + j];
                    }
                    dst[(i * nn + j) * n + a] = 0.5 * acc;
                }
            }
        }
    });
    out
}

/// `Ω^Q = Q∇Qᵀ + QΩQᵀ` with `Q∇Qᵀ` taken as its skew part
/// `½(Q∇Qᵀ - ∇Q Qᵀ)`; the two agree in the continuum and the skew form keeps
/// the result antisymmetric at every lattice point.
pub fn omega_q(q: &RotationField, omega: &TensorField) -> Result<TensorField> {
    let grid = q.grid();
    expect_potential(omega, q.size(), grid)?;
    Ok(transform(q, &rotation_gradient(q), omega))
}

fn transform(q: &RotationField, dq: &TensorField, omega: &TensorField) -> TensorField {
    let grid = q.grid();
    let (nn, n) = (q.size(), grid.dim());
    let mut out = TensorField::zeros(grid, omega.shape().clone());
    out.values_mut().par_chunks_mut(nn * nn * n).enumerate().for_each(|(p, dst)| {
        let (qm, d, om) = (q.at(p), dq.at(p), omega.at(p));
        let mut tmp = vec![0.0; nn * nn];
        for a in 0..n {
            // tmp = Ω_α Qᵀ
            for i in 0..nn {
                for j in 0..nn {
                    tmp[i * nn + j] = (0..nn).map(|k| om[(i * nn + k) * n + a] * qm[j * nn + k]).sum();
                }
            }
            for i in 0..nn {
                for j in 0..nn {
                    let mut acc = 0.0;
                    for k in 0..nn {
                        acc += 0.5 * (qm[i * nn + k] * d[(j * nn + k) * n + a] - d[(i * nn + k) * n + a] * qm[j * nn + k]);
                        acc += qm[i * nn + k] * tmp[k * nn + j];
                    }
                    dst[(i * nn + j) * n + a] = acc;
                }
            }
        }
    });
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaugeConfig {
    /// Stop once `‖div Ω^Q‖₂ / ‖Ω^Q‖₂` falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest `‖Ω‖ₙ` treated as small data; only logged.
    pub smallness: f64,
    pub max_backtracks: usize,
}

impl Default for GaugeConfig {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iterations: 200, smallness: 0.5, max_backtracks: 30 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaugeStep {
    /// `½‖Ω^Q‖₂²` before the step.
    pub energy: f64,
    pub div_ratio: f64,
    /// Accepted step length (0 for the final record).
    pub step: f64,
}

/// Norms of the gauged potential and its inputs.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct GaugeDiagnostics {
    /// `‖div Ω^Q‖₂`.
    pub div_norm: f64,
    /// `‖div Ω^Q‖₂ / ‖Ω^Q‖₂`, 0 when `Ω^Q = 0`.
    pub div_ratio: f64,
    pub omega_l2: f64,
    pub omega_q_l2: f64,
    pub omega_n: f64,
    pub grad_q_n: f64,
    pub grad_q_n2: f64,
    pub omega_q_n1: f64,
    pub omega_n2: f64,
    pub riesz_perp_omega_n1: f64,
    /// `‖∇Q‖ₙ / ‖Ω‖ₙ`.
    pub grad_q_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct GaugeResult {
    pub q: RotationField,
    pub omega_q: TensorField,
    pub diagnostics: GaugeDiagnostics,
    pub history: Vec<GaugeStep>,
    pub iterations: usize,
    /// Divergence tolerance reached, or `Ω^Q` annihilated to rounding.
    pub converged: bool,
    /// `‖Ω‖ₙ ≤ config.smallness`.
    pub small_data: bool,
    /// Worst `‖QᵀQ - I‖` seen after any accepted step.
    pub orthogonality_drift: f64,
}

fn energy(f: &TensorField) -> f64 {
    0.5 * f.values().iter().map(|v| v * v).sum::<f64>() * f.grid().cell_volume()
}

fn exp_step(q: &RotationField, xi: &TensorField, t: f64) -> RotationField {
    let nn = q.size();
    let mut out = q.field().clone();
    out.values_mut().par_chunks_mut(nn * nn).enumerate().for_each(|(p, dst)| {
        let x = DMatrix::from_row_slice(nn, nn, xi.at(p)) * t;
        let e = x.exp() * q.matrix(p);
        for i in 0..nn {
            for j in 0..nn {
                dst[i * nn + j] = e[(i, j)];
            }
        }
    });
    RotationField::from_field_unchecked(out)
}

/// Coulomb gauge by descent on `E(Q) = ½‖Ω^Q‖₂²` from `Q ≡ I`.
///
/// The first variation along `Q ← exp(tξ)Q` is `∫⟨div Ω^Q, ξ⟩`, so the step
/// `ξ = Δ^{-1} div Ω^Q` descends; it is the `H¹`-preconditioned gradient and
/// removes the gradient part of `Ω^Q` to first order at `t = 1`. Steps halve
/// from 1 until the energy drops. Non-convergence is reported, not raised.
pub fn coulomb_gauge(omega: &TensorField, config: &GaugeConfig) -> Result<GaugeResult> {
    let grid = omega.grid();
    let n = grid.dim();
    let dims = omega.shape().dims().to_vec();
    if dims.len() != 3 || dims[0] != dims[1] || dims[2] != n {
        return Err(Error::ShapeMismatch { expected: format!("[N, N, {n}]"), found: omega.shape().to_string() });
    }
    let skew = crate::pde::antisymmetry_defect(omega);
    if skew > 1e-10 * omega.max_abs().max(1.0) {
        return Err(Error::InvalidInstance(format!("omega is not antisymmetric (defect {skew:e})")));
    }
    let nn = dims[0];
    let plan = SpectralPlan::new(grid);
    let omega_n = omega.lp_norm(n as f64);
    let omega_l2 = omega.l2_norm();
    let mut q = RotationField::identity(grid, nn);
    let mut oq = omega.clone();
    let mut e = energy(&oq);
    let mut history = Vec::new();
    let mut converged = false;
    let mut drift = 0.0f64;
    let mut iterations = 0;
    loop {
        let div = plan.divergence(&oq)?;
        let oq_l2 = oq.l2_norm();
        let ratio = safe_ratio(div.l2_norm(), oq_l2);
        if ratio <= config.tolerance || oq_l2 <= 1e-12 * omega_l2 {
            converged = true;
        }
        if converged || iterations == config.max_iterations {
            history.push(GaugeStep { energy: e, div_ratio: ratio, step: 0.0 });
            break;
        }
        let xi = TensorField::from_components(
            grid,
            div.shape().clone(),
            &div.components().iter().map(|c| plan.inverse_laplacian_odd(c)).collect::<Vec<_>>(),
        );
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..config.max_backtracks {
            let trial = exp_step(&q, &xi, t);
            let trial_oq = transform(&trial, &rotation_gradient(&trial), omega);
            let te = energy(&trial_oq);
            if te < e {
                accepted = Some((trial, trial_oq, te));
                break;
            }
            t *= 0.5;
        }
        let Some((nq, noq, ne)) = accepted else {
            history.push(GaugeStep { energy: e, div_ratio: ratio, step: 0.0 });
            break;
        };
        history.push(GaugeStep { energy: e, div_ratio: ratio, step: t });
        drift = drift.max(nq.orthogonality_defect());
        (q, oq, e) = (nq, noq, ne);
        iterations += 1;
    }
    let diagnostics = diagnose(&plan, &q, &oq, omega)?;
    Ok(GaugeResult {
        q,
        omega_q: oq,
        diagnostics,
        history,
        iterations,
        converged,
        small_data: omega_n <= config.smallness,
        orthogonality_drift: drift,
    })
}

fn diagnose(plan: &SpectralPlan, q: &RotationField, oq: &TensorField, omega: &TensorField) -> Result<GaugeDiagnostics> {
    let n = plan.grid().dim() as f64;
    let lorentz = |f: &TensorField, r: f64| -> Result<f64> { lorentz_norm_of(f, None, &LorentzSpec::double_starred(n, r)?) };
    let dq = rotation_gradient(q);
    let div_norm = plan.divergence(oq)?.l2_norm();
    let omega_q_l2 = oq.l2_norm();
    let omega_n = omega.lp_norm(n);
    let grad_q_n = dq.lp_norm(n);
    Ok(GaugeDiagnostics {
        div_norm,
        div_ratio: safe_ratio(div_norm, omega_q_l2),
        omega_l2: omega.l2_norm(),
        omega_q_l2,
        omega_n,
        grad_q_n,
        grad_q_n2: lorentz(&dq, 2.0)?,
        omega_q_n1: lorentz(oq, 1.0)?,
        omega_n2: lorentz(omega, 2.0)?,
        riesz_perp_omega_n1: lorentz(&plan.riesz_curl(omega)?, 1.0)?,
        grad_q_ratio: safe_ratio(grad_q_n, omega_n),
    })
}

/// The two regularization ratios
/// `‖∇Q‖_{(n,2)} / ‖Ω‖_{(n,2)}` and
/// `‖Ω^Q‖_{(n,1)} / (‖Ω‖²_{(n,2)} + ‖R^⊥Ω‖_{(n,1)})`.
/// `Ω = 0` gives `0/0`, reported as 0 and passing by vacuity.
pub fn gauge_regularization_report(result: &GaugeResult) -> Report {
    let d = &result.diagnostics;
    let grad_ratio = safe_ratio(d.grad_q_n2, d.omega_n2);
    let omega_ratio = safe_ratio(d.omega_q_n1, d.omega_n2 * d.omega_n2 + d.riesz_perp_omega_n1);
    let vacuous = d.omega_n2 == 0.0;
    let grid = result.q.grid();
    let mut r = Report::new("gauge_regularization", format!("n{}-m{}-N{}", grid.dim(), grid.m(), result.q.size()));
    r.param("converged", result.converged).param("small_data", result.small_data);
    r.measure("omega_n2", d.omega_n2)
        .measure("riesz_perp_omega_n1", d.riesz_perp_omega_n1)
        .measure("grad_q_n2", d.grad_q_n2)
        .measure("omega_q_n1", d.omega_q_n1)
        .gate("grad_q_ratio", grad_ratio, vacuous || grad_ratio.is_finite())
        .gate("omega_q_ratio", omega_ratio, vacuous || omega_ratio.is_finite());
    r
}

/// Rewrites a potential-form instance (with `Q ≡ I`) after multiplying the
/// system by `Q`: flux `Q w∇u`, coefficient `Ω̃ = -∇Q + QΩ` acting on `w∇u`,
/// data `f̃ = Qf - ∂_αQ G_α` and `G̃ = QG`. Testing the result against `φ`
/// equals testing the original against `Qᵀφ`, with `∇Q` from
/// [`rotation_gradient`].
pub fn rotate_system(instance: &SystemInstance, q: &RotationField) -> Result<SystemInstance> {
    instance.validate()?;
    if instance.form != Form::Potential || !instance.q.is_identity() {
        return Err(Error::InvalidInstance("rotate_system expects a potential-form instance with Q = I".into()));
    }
    let grid = instance.grid();
    let (nn, n) = (instance.components(), grid.dim());
    if q.grid() != grid || q.size() != nn {
        return Err(Error::ShapeMismatch { expected: format!("[{nn}, {nn}] rotations"), found: q.field().shape().to_string() });
    }
    let dq = rotation_gradient(q);
    let mut omega = TensorField::zeros(grid, instance.omega.shape().clone());
    let mut f = TensorField::zeros(grid, instance.f.shape().clone());
    let mut g = TensorField::zeros(grid, instance.g.shape().clone());
    for p in 0..grid.len() {
        let (qm, d, om, fi, gi) = (q.at(p), dq.at(p), instance.omega.at(p), instance.f.at(p), instance.g.at(p));
        let dst = omega.at_mut(p);
        for i in 0..nn {
            for j in 0..nn {
                for a in 0..n {
                    let rot: f64 = (0..nn).map(|k| qm[i * nn + k] * om[(k * nn + j) * n + a]).sum();
                    dst[(i * nn + j) * n + a] = rot - d[(i * nn + j) * n + a];
                }
            }
        }
        let dst = f.at_mut(p);
        for i in 0..nn {
            let mut acc = 0.0;
            for k in 0..nn {
                acc += qm[i * nn + k] * fi[k];
                acc -= (0..n).map(|a| d[(i * nn + k) * n + a] * gi[k * n + a]).sum::<f64>();
            }
            dst[i] = acc;
        }
        let dst = g.at_mut(p);
        for i in 0..nn {
            for a in 0..n {
                dst[i * n + a] = (0..nn).map(|k| qm[i * nn + k] * gi[k * n + a]).sum();
            }
        }
    }
    let out = SystemInstance { q: q.clone(), omega, f, g, ..instance.clone() };
    out.validate()?;
    Ok(out)
}
