//! Closed-form maps and rotations for manufactured solutions.

use super::{weight, Form, SystemInstance};
use crate::error::{Error, Result};
use crate::field::{DomainMask, Grid, Shape, TensorField};
use crate::gauge::RotationField;
use nalgebra::DMatrix;
use rand::Rng;
use std::f64::consts::TAU;

/// `amplitude · sin(2π k·x + phase)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneWave {
    pub amplitude: f64,
    pub k: [f64; 3],
    pub phase: f64,
}

/// `u^i(x) = offset_i + linear_i · x + Σ waves_i(x)`, with exact derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothMap {
    pub dim: usize,
    pub offset: Vec<f64>,
    pub linear: Vec<[f64; 3]>,
    pub waves: Vec<Vec<PlaneWave>>,
}

impl SmoothMap {
    pub fn zero(components: usize, dim: usize) -> Self {
        Self { dim, offset: vec![0.0; components], linear: vec![[0.0; 3]; components], waves: vec![Vec::new(); components] }
    }

    /// Unit-order affine part plus `waves` plane waves per component with
    /// integer wavevectors in `[-2, 2]^n` and the given amplitude.
    pub fn random<R: Rng>(components: usize, dim: usize, waves: usize, amplitude: f64, rng: &mut R) -> Self {
        let mut map = Self::zero(components, dim);
        for i in 0..components {
            map.offset[i] = rng.random_range(-1.0..1.0);
            for a in 0..dim {
                map.linear[i][a] = rng.random_range(-1.0..1.0);
            }
            for _ in 0..waves {
                map.waves[i].push(random_wave(dim, amplitude, rng));
            }
        }
        map
    }

    pub fn components(&self) -> usize {
        self.offset.len()
    }

    pub fn value(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.components() {
            let mut v = self.offset[i] + (0..self.dim).map(|a| self.linear[i][a] * x[a]).sum::<f64>();
            for w in &self.waves[i] {
                v += w.amplitude * (TAU * dot(&w.k, x, self.dim) + w.phase).sin();
            }
            out[i] = v;
        }
    }

    /// `out[i·n + α] = ∂_α u^i`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for i in 0..self.components() {
            for a in 0..n {
                out[i * n + a] = self.linear[i][a];
            }
            for w in &self.waves[i] {
                let c = w.amplitude * TAU * (TAU * dot(&w.k, x, n) + w.phase).cos();
                for a in 0..n {
                    out[i * n + a] += c * w.k[a];
                }
            }
        }
    }

    /// `out[(i·n + α)·n + β] = ∂_α∂_β u^i`.
    pub fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.components() {
            for w in &self.waves[i] {
                let s = -w.amplitude * TAU * TAU * (TAU * dot(&w.k, x, n) + w.phase).sin();
                for a in 0..n {
                    for b in 0..n {
                        out[(i * n + a) * n + b] += s * w.k[a] * w.k[b];
                    }
                }
            }
        }
    }

    pub fn sample(&self, grid: Grid) -> TensorField {
        TensorField::from_fn_tensor(grid, Shape::vector(self.components()), |x, out| self.value(x, out))
    }

    pub fn sample_gradient(&self, grid: Grid) -> TensorField {
        TensorField::from_fn_tensor(grid, Shape::matrix(self.components(), grid.dim()), |x, out| self.gradient(x, out))
    }

    /// Same map with every coefficient multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.offset.iter_mut().for_each(|v| *v *= s);
        m.linear.iter_mut().for_each(|l| l.iter_mut().for_each(|v| *v *= s));
        m.waves.iter_mut().flatten().for_each(|w| w.amplitude *= s);
        m
    }
}

fn dot(k: &[f64; 3], x: &[f64], n: usize) -> f64 {
    (0..n).map(|a| k[a] * x[a]).sum()
}

fn random_wave<R: Rng>(dim: usize, amplitude: f64, rng: &mut R) -> PlaneWave {
    let mut k = [0.0; 3];
    while k.iter().all(|&v| v == 0.0) {
        for slot in k.iter_mut().take(dim) {
            *slot = rng.random_range(-2i32..=2) as f64;
        }
    }
    PlaneWave { amplitude, k, phase: rng.random_range(0.0..TAU) }
}

/// `Q(x) = base · exp(θ(x) K)` with `K` antisymmetric, so `∂_α Q = Q K ∂_α θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothRotation {
    pub base: DMatrix<f64>,
    pub generator: DMatrix<f64>,
    pub angle: SmoothMap,
}

impl SmoothRotation {
    pub fn identity(size: usize, dim: usize) -> Self {
        Self {
            base: DMatrix::identity(size, size),
            generator: DMatrix::zeros(size, size),
            angle: SmoothMap::zero(1, dim),
        }
    }

    /// Random unit generator (Frobenius norm √2) and a two-wave angle field
    /// with the given amplitude.
    pub fn random<R: Rng>(size: usize, dim: usize, amplitude: f64, rng: &mut R) -> Self {
        let mut k = DMatrix::zeros(size, size);
        for i in 0..size {
            for j in i + 1..size {
                let v: f64 = rng.random_range(-1.0..1.0);
                k[(i, j)] = v;
                k[(j, i)] = -v;
            }
        }
        let norm = k.norm();
        if norm > 0.0 {
            k *= 2f64.sqrt() / norm;
        }
        let mut angle = SmoothMap::zero(1, dim);
        angle.waves[0] = (0..2).map(|_| random_wave(dim, amplitude, rng)).collect();
        Self { base: DMatrix::identity(size, size), generator: k, angle }
    }

    pub fn size(&self) -> usize {
        self.base.nrows()
    }

    pub fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let mut theta = [0.0];
        self.angle.value(x, &mut theta);
        &self.base * (&self.generator * theta[0]).exp()
    }

    /// `Q(x)` and `∂_α Q(x)` for each axis.
    pub fn matrix_and_gradient(&self, x: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let q = self.matrix(x);
        let n = self.angle.dim;
        let mut dtheta = vec![0.0; n];
        self.angle.gradient(x, &mut dtheta);
        let qk = &q * &self.generator;
        let dq = dtheta.iter().map(|t| &qk * *t).collect();
        (q, dq)
    }

    pub fn sample(&self, grid: Grid) -> Result<RotationField> {
        RotationField::from_fn(grid, self.size(), |x| self.matrix(x))
    }
}

/// How the manufactured data enter the equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataForm {
    /// `f = -div(Q w ∇u*)`, `G = 0`.
    Source,
    /// `f = 0`, `G = -Q w ∇u*`.
    Flux,
}

#[derive(Clone, Debug)]
pub struct Manufactured {
    pub instance: SystemInstance,
    pub exact: TensorField,
    pub exact_gradient: TensorField,
}

/// Builds data for which `u*` solves `-div(Q w(∇u*) ∇u*) = f + div G`,
/// with Dirichlet data `u*`.
pub fn manufacture(
    mask: &DomainMask,
    u: &SmoothMap,
    q: &SmoothRotation,
    p: f64,
    delta: f64,
    form: DataForm,
) -> Result<Manufactured> {
    let grid = mask.grid();
    let n = grid.dim();
    let nc = u.components();
    if u.dim != n || q.angle.dim != n {
        return Err(Error::InvalidInstance("map dimension differs from the grid".into()));
    }
    if q.size() != nc {
        return Err(Error::InvalidInstance(format!("rotation size {} for {} components", q.size(), nc)));
    }
    let exact = u.sample(grid);
    let exact_gradient = u.sample_gradient(grid);
    let rot = q.sample(grid)?;
    let mut f = TensorField::zeros(grid, Shape::vector(nc));
    let mut gf = TensorField::zeros(grid, Shape::matrix(nc, n));
    let mut hess = vec![0.0; nc * n * n];
    for pt in 0..grid.len() {
        let x = grid.coords(pt);
        let g = exact_gradient.at(pt);
        let s: f64 = g.iter().map(|v| v * v).sum();
        let w = weight(s, p, delta);
        match form {
            DataForm::Flux => {
                let qm = rot.at(pt);
                let out = gf.at_mut(pt);
                for i in 0..nc {
                    for a in 0..n {
                        out[i * n + a] = -w * (0..nc).map(|j| qm[i * nc + j] * g[j * n + a]).sum::<f64>();
                    }
                }
            }
            DataForm::Source => {
                u.hessian(&x[..n], &mut hess);
                let (qm, dq) = q.matrix_and_gradient(&x[..n]);
                let c2 = (p - 2.0) * (s + delta * delta).powf(0.5 * (p - 4.0));
                // ∂_α w = c₂ Σ_{j,β} ∂_β u^j ∂_α∂_β u^j
                let dw: Vec<f64> = (0..n)
                    .map(|a| {
                        c2 * (0..nc)
                            .map(|j| (0..n).map(|b| g[j * n + b] * hess[(j * n + a) * n + b]).sum::<f64>())
                            .sum::<f64>()
                    })
                    .collect();
                let out = f.at_mut(pt);
                for i in 0..nc {
                    let mut div = 0.0;
                    for j in 0..nc {
                        for a in 0..n {
                            div += dq[a][(i, j)] * w * g[j * n + a]
                                + qm[(i, j)] * dw[a] * g[j * n + a]
                                + qm[(i, j)] * w * hess[(j * n + a) * n + a];
                        }
                    }
                    out[i] = -div;
                }
            }
        }
    }
    let instance = SystemInstance {
        p,
        delta,
        q: rot,
        omega: TensorField::zeros(grid, Shape::new(vec![nc, nc, n])),
        f,
        g: gf,
        boundary: exact.clone(),
        mask: mask.clone(),
        form: Form::Divergence,
    };
    instance.validate()?;
    Ok(Manufactured { instance, exact, exact_gradient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = SmoothMap::random(2, 3, 3, 0.4, &mut rng);
        let x = [0.31, 0.62, 0.47];
        let eps = 1e-6;
        let mut g = vec![0.0; 6];
        let mut hs = vec![0.0; 18];
        u.gradient(&x, &mut g);
        u.hessian(&x, &mut hs);
        for a in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp[a] += eps;
            xm[a] -= eps;
            let (mut vp, mut vm) = ([0.0; 2], [0.0; 2]);
            u.value(&xp, &mut vp);
            u.value(&xm, &mut vm);
            let (mut gp, mut gm) = (vec![0.0; 6], vec![0.0; 6]);
            u.gradient(&xp, &mut gp);
            u.gradient(&xm, &mut gm);
            for i in 0..2 {
                assert!(((vp[i] - vm[i]) / (2.0 * eps) - g[i * 3 + a]).abs() < 1e-7);
                for b in 0..3 {
                    let fd = (gp[i * 3 + b] - gm[i * 3 + b]) / (2.0 * eps);
                    assert!((fd - hs[(i * 3 + b) * 3 + a]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rotation_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = SmoothRotation::random(3, 2, 0.5, &mut rng);
        let x = [0.4, 0.7];
        let (m, dq) = q.matrix_and_gradient(&x);
        assert!((m.transpose() * &m - DMatrix::identity(3, 3)).amax() < 1e-12);
        for a in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[a] += 1e-6;
            xm[a] -= 1e-6;
            let fd = (q.matrix(&xp) - q.matrix(&xm)) / 2e-6;
            assert!((fd - &dq[a]).amax() < 1e-6);
        }
    }
}
