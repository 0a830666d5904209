//! Numerical checks of the regularity estimates. Each returns a [`Report`]
//! with the measured constant and the gates it was compared against.
//!
//! Unknown constants of the estimates (`C(σ)`, `Γ`, `ν`, ...) are never fixed
//! in code: every experiment reports the smallest constant that makes its
//! inequality hold on the given instance.

use super::Report;
use crate::error::{Error, Result};
use crate::field::{ball_mask, gradient, DomainMask, Scheme, Shape, TensorField};
use crate::fourier::{riesz_curl_norm, SpectralPlan};
use crate::gauge::{coulomb_gauge, GaugeConfig, GaugeResult};
use crate::hodge::safe_ratio;
use crate::pde::{solve_gauged_system, solve_plaplace_dirichlet, SolverConfig, SystemInstance};
use crate::rearrange::{lorentz_norm_of, lp_on, LorentzSpec};

fn ball(grid: crate::field::Grid, center: &[f64], r: f64) -> Result<DomainMask> {
    ball_mask(grid, center, r)
}

/// `∫_B |F|^q`.
fn power_integral(f: &TensorField, mask: &DomainMask, q: f64) -> f64 {
    lp_on(f, Some(mask), q).powf(q)
}

/// `‖F‖_{L^{(n,∞)}(B)} = sup_t t^{1/n} F*(t)`.
fn weak_norm(f: &TensorField, mask: &DomainMask, n: f64) -> Result<f64> {
    lorentz_norm_of(f, Some(mask), &LorentzSpec::starred(n, f64::INFINITY)?)
}

/// `‖f‖_{L¹(B)}^{e} + ‖G‖_{L^{n/(n-1)}(B)}^{e}`.
fn data_term(inst: &SystemInstance, mask: &DomainMask, e: f64) -> f64 {
    let n = inst.grid().dim() as f64;
    lp_on(&inst.f, Some(mask), 1.0).powf(e) + lp_on(&inst.g, Some(mask), n / (n - 1.0)).powf(e)
}

fn instance_label(inst: &SystemInstance) -> String {
    let g = inst.grid();
    format!("n{}-m{}-N{}-r{}", g.dim(), g.m(), inst.components(), inst.mask.radius())
}

#[derive(Clone, Debug, PartialEq)]
pub struct IwaniecParams {
    /// Integrability `p`; `None` means `p = n`.
    pub p: Option<f64>,
    pub eps: Vec<f64>,
    /// Gate on `max r(ε) / min r(ε)`.
    pub spread_bound: f64,
}

impl Default for IwaniecParams {
    fn default() -> Self {
        Self { p: None, eps: vec![0.2, 0.1, 0.05, 0.025], spread_bound: 4.0 }
    }
}

/// `r(ε) = ‖R^⊥(|∇u|^ε ∇u)‖_{p/(1+ε)} / (ε ‖∇u‖_p^{1+ε})` at a single scale.
fn iwaniec_ratio(plan: &SpectralPlan, du: &TensorField, p: f64, eps: f64) -> Result<f64> {
    let norms = du.pointwise_norm();
    let weights: Vec<f64> = norms.iter().map(|&v| if v > 0.0 { v.powf(eps) } else { 0.0 }).collect();
    let f = du.mul_scalar_field(&weights);
    let lhs = riesz_curl_norm(plan, &f, p / (1.0 + eps))?;
    let rhs = du.lp_norm(p).powf(1.0 + eps);
    Ok(safe_ratio(lhs, eps * rhs))
}

/// Boundedness of the stability constant as `ε → 0`: `r(ε)` over the grid of
/// `ε` should vary by a bounded factor. `u` is a vector field whose gradient
/// is compactly supported in the torus.
pub fn exp_iwaniec_stability(u: &TensorField, params: &IwaniecParams) -> Result<Report> {
    let grid = u.grid();
    let n = grid.dim() as f64;
    let p = params.p.unwrap_or(n);
    if !(p > 1.0) {
        return Err(Error::InvalidExponent(format!("p = {p} must exceed 1")));
    }
    if params.eps.is_empty() || params.eps.iter().any(|&e| !(e > 0.0 && e <= 0.25)) {
        return Err(Error::InvalidExponent(format!("ε grid {:?} must lie in (0, 0.25]", params.eps)));
    }
    let plan = SpectralPlan::new(grid);
    let u = u.clone().reshape(Shape::vector(u.slots()))?;
    let du = plan.gradient(&u);
    let doubled = du.scale(2.0);
    let mut report = Report::new("iwaniec", format!("n{}-m{}-N{}", grid.dim(), grid.m(), u.slots()));
    report.param("p", p).param("eps", join(&params.eps));
    let mut ratios = Vec::new();
    let mut homogeneity: f64 = 0.0;
    for &eps in &params.eps {
        let r = iwaniec_ratio(&plan, &du, p, eps)?;
        let r2 = iwaniec_ratio(&plan, &doubled, p, eps)?;
        homogeneity = homogeneity.max(safe_ratio((r - r2).abs(), r));
        report.measure(&format!("r_eps_{eps}"), r);
        ratios.push(r);
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    let spread = safe_ratio(hi, lo);
    report
        .gate("finite", hi, ratios.iter().all(|r| r.is_finite()))
        .gate("spread", spread, spread <= params.spread_bound)
        .gate("homogeneity_defect", homogeneity, homogeneity <= 1e-10);
    Ok(report)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Dyadic radii `r0, r0/2, ...` down to `min`.
fn dyadic(r0: f64, factor: f64, min: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = r0;
    while r >= min * (1.0 - 1e-12) {
        out.push(r);
        r *= factor;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaccioppoliParams {
    pub theta: f64,
    pub eps: f64,
    /// Gate on the measured `σ̂`.
    pub sigma: f64,
    /// Configured `C(σ)` in front of the hole-filling term.
    pub c_hole: f64,
    /// Configured `C(ε, σ)` in front of the data term.
    pub c_data: f64,
}

impl Default for CaccioppoliParams {
    fn default() -> Self {
        Self { theta: 0.2, eps: 0.1, sigma: 0.5, c_hole: 1.0, c_data: 1.0 }
    }
}

/// Hole-filling decay of `R^{-ε}∫_{B(R)}|∇u|^{n-ε}` for a solution on the
/// instance ball. At each dyadic `R` with `B(2R)` inside the ball the report
/// holds `σ̂(R) = (L - C_h H - C_d D)₊ / A`, where `L = (θR)^{-ε}∫_{B(θR)}`,
/// `A = R^{-ε}∫_{B(R)}`, `H = R^{-ε}∫_{B(2R)} - L` and `D` is the data term
/// with exponent `(n-ε)/(n-1)`. The gate is `max σ̂ ≤ σ`.
pub fn exp_caccioppoli_decay(u: &TensorField, inst: &SystemInstance, params: &CaccioppoliParams) -> Result<Report> {
    inst.validate()?;
    let grid = inst.grid();
    let n = grid.dim() as f64;
    let (eps, theta) = (params.eps, params.theta);
    if !(theta > 0.0 && theta < 0.25) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidExponent(format!("need θ ∈ (0, 1/4) and ε ∈ (0, 1), got {theta}, {eps}")));
    }
    let u = u.clone().reshape(Shape::vector(inst.components()))?;
    let du = gradient(&u, Scheme::Central);
    let c = inst.mask.center().to_vec();
    let q = n - eps;
    let radii = dyadic(0.5 * inst.mask.radius(), 0.5, grid.spacing() / theta);
    if radii.is_empty() {
        return Err(Error::InvalidRadii("no dyadic radius resolves the inner ball".into()));
    }
    let mut report = Report::new("caccioppoli", instance_label(inst));
    report.param("theta", theta).param("eps", eps).param("c_hole", params.c_hole).param("c_data", params.c_data);
    let grad_q = gradient(inst.q.field(), Scheme::Central);
    report.measure("grad_q_n", lp_on(&grad_q, Some(&inst.mask), n));
    let mut worst: f64 = 0.0;
    for &r in &radii {
        let inner = power_integral(&du, &ball(grid, &c, theta * r)?, q) * (theta * r).powf(-eps);
        let mid = power_integral(&du, &ball(grid, &c, r)?, q) * r.powf(-eps);
        let outer = power_integral(&du, &ball(grid, &c, 2.0 * r)?, q) * r.powf(-eps);
        let data = data_term(inst, &ball(grid, &c, r)?, q / (n - 1.0));
        let hole = outer - inner;
        let sigma_hat = safe_ratio((inner - params.c_hole * hole - params.c_data * data).max(0.0), mid);
        report.measure(&format!("lhs_R{r}"), inner).measure(&format!("sigma_hat_R{r}"), sigma_hat);
        worst = worst.max(sigma_hat);
    }
    report.gate("sigma_hat", worst, worst <= params.sigma);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonParams {
    pub eps: f64,
    pub sigma: f64,
    /// Slice radius as a fraction of the instance ball.
    pub slice: f64,
}

impl Default for ComparisonParams {
    fn default() -> Self {
        Self { eps: 0.1, sigma: 0.5, slice: 0.6 }
    }
}

/// Distance to the `n`-harmonic replacement. `u` solves the instance on the
/// slice ball `B(ρ)`, `ρ = slice · r`, with the instance's Dirichlet data; `v`
/// solves the regularized `n`-Laplace equation there with the same data.
/// Reported: `L = ‖∇u - ∇v‖_{L^{n-ε}(B(ρ))}`, the data term `D` with exponent
/// `1/(n-1)`, `U = ‖∇u‖_{L^{n-ε}(B(4ρ/3))}` and the multiplicative slack
/// `L / (D + σU)`.
pub fn exp_harmonic_comparison(inst: &SystemInstance, config: &SolverConfig, params: &ComparisonParams) -> Result<Report> {
    inst.validate()?;
    let grid = inst.grid();
    let n = grid.dim() as f64;
    let c = inst.mask.center().to_vec();
    let rho = params.slice * inst.mask.radius();
    let slice = ball(grid, &c, rho)?;
    let sub = SystemInstance { mask: slice.clone(), ..inst.clone() };
    let u = solve_gauged_system(&sub, config)?;
    let v = solve_plaplace_dirichlet(&slice, &u.u, n, inst.delta, config)?;
    let du = gradient(&u.u, Scheme::Central);
    let dv = gradient(&v.u, Scheme::Central);
    let q = n - params.eps;
    let lhs = lp_on(&du.sub(&dv)?, Some(&slice), q);
    let data = data_term(inst, &slice, 1.0 / (n - 1.0));
    let upper = lp_on(&du, Some(&ball(grid, &c, (4.0 / 3.0) * rho)?), q);
    let slack = safe_ratio(lhs, data + params.sigma * upper);
    let mut report = Report::new("harmonic_comparison", instance_label(inst));
    report.param("eps", params.eps).param("sigma", params.sigma).param("slice", params.slice);
    report
        .measure("solver_residual_u", u.relative_residual)
        .measure("solver_residual_v", v.relative_residual)
        .measure("lhs", lhs)
        .measure("data", data)
        .measure("grad_u", upper)
        .gate("slack", slack, slack.is_finite());
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakLnParams {
    pub tau: f64,
    pub eps: f64,
    /// Gate on the measured `Γ̂`.
    pub gamma_bound: f64,
}

impl Default for WeakLnParams {
    fn default() -> Self {
        Self { tau: 0.2, eps: 0.1, gamma_bound: 10.0 }
    }
}

/// Weak-`Lⁿ` gradient estimate on the instance ball `B(r)`, read in unit-ball
/// scaling: `‖∇u‖_{(n,∞),B(τr)} ≤ Γ(D + r^{-ε/(n-ε)}‖∇u‖_{n-ε,B(r)}) + ½‖∇u‖_{(n,∞),B(r)}`.
/// Reports `Γ̂ = (L - ½W)₊ / (D + U)`.
pub fn exp_weak_ln_estimate(u: &TensorField, inst: &SystemInstance, params: &WeakLnParams) -> Result<Report> {
    inst.validate()?;
    let grid = inst.grid();
    let n = grid.dim() as f64;
    if !(params.tau > 0.0 && params.tau < 0.25) {
        return Err(Error::InvalidRadii(format!("τ = {} must lie in (0, 1/4)", params.tau)));
    }
    let u = u.clone().reshape(Shape::vector(inst.components()))?;
    let du = gradient(&u, Scheme::Central);
    let c = inst.mask.center().to_vec();
    let r = inst.mask.radius();
    let q = n - params.eps;
    let lhs = weak_norm(&du, &ball(grid, &c, params.tau * r)?, n)?;
    let whole = weak_norm(&du, &inst.mask, n)?;
    let strong = r.powf(-params.eps / q) * lp_on(&du, Some(&inst.mask), q);
    let data = data_term(inst, &inst.mask, 1.0 / (n - 1.0));
    let gamma = safe_ratio((lhs - 0.5 * whole).max(0.0), data + strong);
    let mut report = Report::new("weak_ln", instance_label(inst));
    report.param("tau", params.tau).param("eps", params.eps);
    report
        .measure("lhs", lhs)
        .measure("weak_whole", whole)
        .measure("strong", strong)
        .measure("data", data)
        .gate("gamma_hat", gamma, gamma <= params.gamma_bound);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayParams {
    pub lambda: f64,
    pub eps: f64,
    pub k: f64,
    /// Smallest radius, in lattice spacings, that counts as resolved.
    pub min_radius_cells: f64,
    /// Gate on `‖∇Q‖ₙ + ‖Ω^Q‖_{(n,1)}` when a gauge is supplied.
    pub smallness: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self { lambda: 0.5, eps: 0.1, k: 1.0, min_radius_cells: 2.0, smallness: 1.0 }
    }
}

/// `Φ(r) = ‖∇u‖^{n-ε}_{(n,∞),B(x,r)} + k r^{-ε} ∫_{B(x,r)} |∇u|^{n-ε}` on
/// radii `r_j = r₀ λ^j`; reports every ratio `Φ(λr)/Φ(r)`, `ν̂ = max` and the
/// rate `β̂ = log ν̂ / log λ`.
pub fn exp_decay_iteration(
    u: &TensorField,
    gauge: Option<&GaugeResult>,
    center: &[f64],
    radius: f64,
    params: &DecayParams,
) -> Result<Report> {
    let grid = u.grid();
    let n = grid.dim() as f64;
    if !(params.lambda > 0.0 && params.lambda < 1.0) || !(params.k > 0.0) {
        return Err(Error::InvalidExponent(format!("need λ ∈ (0,1) and k > 0, got {}, {}", params.lambda, params.k)));
    }
    let radii = dyadic(radius, params.lambda, params.min_radius_cells * grid.spacing());
    if radii.len() < 3 {
        return Err(Error::InsufficientLevels { found: radii.len(), needed: 3 });
    }
    let u = u.clone().reshape(Shape::vector(u.slots()))?;
    let du = gradient(&u, Scheme::Central);
    let q = n - params.eps;
    let phi = |r: f64| -> Result<f64> {
        let b = ball(grid, center, r)?;
        Ok(weak_norm(&du, &b, n)?.powf(q) + params.k * r.powf(-params.eps) * power_integral(&du, &b, q))
    };
    let values = radii.iter().map(|&r| phi(r)).collect::<Result<Vec<_>>>()?;
    let mut report = Report::new("decay", format!("n{}-m{}-N{}", grid.dim(), grid.m(), u.slots()));
    report.param("lambda", params.lambda).param("eps", params.eps).param("k", params.k);
    if let Some(g) = gauge {
        let small = g.diagnostics.grad_q_n + g.diagnostics.omega_q_n1;
        report
            .measure("omega_n2", g.diagnostics.omega_n2)
            .measure("grad_q_n", g.diagnostics.grad_q_n)
            .gate("gauge_converged", g.diagnostics.div_ratio, g.converged)
            .gate("smallness", small, small <= params.smallness);
    }
    let mut nu: f64 = 0.0;
    for (j, w) in values.windows(2).enumerate() {
        let ratio = safe_ratio(w[1], w[0]);
        report.measure(&format!("ratio_{j}"), ratio);
        nu = nu.max(ratio);
    }
    let beta = nu.ln() / params.lambda.ln();
    report
        .measure("levels", radii.len() as f64)
        .gate("nu_hat", nu, nu < 1.0)
        .gate("beta_hat", beta, beta > 0.0);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommutatorParams {
    pub p: f64,
    /// `(q₁, q₂, q₃)` with `1/q₁ = 1/q₂ + 1/q₃`.
    pub q: [f64; 3],
    pub bound: f64,
}

/// `‖[R, b] f‖_{(p,q₁)} / (‖∇b‖_{(n,q₂)} ‖f‖_{(p,q₃)})` over paired ensembles;
/// `[R, b]` stacks every axis. Double-starred (normed) Lorentz spaces.
pub fn commutator_ratios(bs: &[TensorField], fs: &[TensorField], params: &CommutatorParams) -> Result<Vec<f64>> {
    let [q1, q2, q3] = params.q;
    if ((1.0 / q1) - (1.0 / q2 + 1.0 / q3)).abs() > 1e-12 {
        return Err(Error::InvalidExponent(format!("1/{q1} ≠ 1/{q2} + 1/{q3}")));
    }
    if bs.len() != fs.len() || bs.is_empty() {
        return Err(Error::ShapeMismatch { expected: "two non-empty ensembles of equal size".into(), found: format!("{} and {}", bs.len(), fs.len()) });
    }
    let grid = bs[0].grid();
    let n = grid.dim() as f64;
    let plan = SpectralPlan::new(grid);
    let spec = |p, q| LorentzSpec::double_starred(p, q);
    bs.iter()
        .zip(fs)
        .map(|(b, f)| {
            let lhs = lorentz_norm_of(&plan.commutator(b, f)?, None, &spec(params.p, q1)?)?;
            let grad_b = lorentz_norm_of(&plan.gradient(b), None, &spec(n, q2)?)?;
            let norm_f = lorentz_norm_of(f, None, &spec(params.p, q3)?)?;
            Ok(safe_ratio(lhs, grad_b * norm_f))
        })
        .collect()
}

/// Ensemble maximum of [`commutator_ratios`], gated finite and `≤ bound`.
pub fn exp_commutator_lorentz(bs: &[TensorField], fs: &[TensorField], params: &CommutatorParams) -> Result<Report> {
    let ratios = commutator_ratios(bs, fs, params)?;
    let grid = bs[0].grid();
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let mut report = Report::new("commutator", format!("n{}-m{}-pairs{}", grid.dim(), grid.m(), ratios.len()));
    report.param("p", params.p).param("q", join(&params.q));
    report
        .measure("mean_ratio", ratios.iter().sum::<f64>() / ratios.len() as f64)
        .gate("finite", max, ratios.iter().all(|r| r.is_finite()))
        .gate("max_ratio", max, max <= params.bound);
    Ok(report)
}

/// Gauge gates on one potential: divergence ratio, `‖∇Q‖ₙ/‖Ω‖ₙ` and drift.
/// `pure` switches to the annihilation gate `‖Ω^Q‖₂ ≤ 1e-6 ‖Ω‖₂`.
pub fn exp_gauge(omega: &TensorField, config: &GaugeConfig, label: &str, pure: bool) -> Result<(Report, GaugeResult)> {
    let res = coulomb_gauge(omega, config)?;
    let d = res.diagnostics;
    let mut report = Report::new(if pure { "gauge_pure" } else { "gauge" }, label);
    report.param("tolerance", config.tolerance).param("small_data", res.small_data);
    report.measure("iterations", res.iterations as f64).measure("omega_n", d.omega_n);
    if pure {
        let frac = safe_ratio(d.omega_q_l2, d.omega_l2);
        report.gate("annihilation", frac, frac <= 1e-6);
    } else {
        report
            .gate("div_ratio", d.div_ratio, res.converged && d.div_ratio <= 1e-4)
            .gate("grad_q_ratio", d.grad_q_ratio, d.grad_q_ratio <= 10.0);
    }
    report.gate("orthogonality_drift", res.orthogonality_drift, res.orthogonality_drift <= 1e-10);
    Ok((report, res))
}

/// Adds a `name_stability` gate comparing one measurement across a grid
/// refinement: `max(a/b, b/a) ≤ 2`. Vanishing pairs pass.
pub fn refinement_gate(report: &mut Report, name: &str, coarse: f64, fine: f64) {
    let ratio = if coarse == 0.0 && fine == 0.0 { 1.0 } else { safe_ratio(coarse.max(fine), coarse.min(fine)) };
    report.gate(&format!("{name}_stability"), ratio, ratio <= 2.0);
}
