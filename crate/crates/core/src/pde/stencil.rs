//! Corner-averaged finite differences on a masked lattice.
//!
//! Each lattice cell contributes `h^n 2^{-n} Σ_c W(∇_c u)` where `∇_c u` is
//! built from the cell edges meeting at corner `c`. For `p = 2` this is the
//! standard `2n+1`-point Laplacian; for other `p` the stencil stays compact
//! and has no checkerboard null modes.

use crate::error::{Error, Result};
use crate::field::{DomainMask, Grid};

const NONE: usize = usize::MAX;

/// Masked lattice with Dirichlet layers and the cells used by the energy.
#[derive(Clone, Debug)]
pub struct Discretization {
    grid: Grid,
    ncomp: usize,
    slot: Vec<usize>,
    unknowns: Vec<usize>,
    cells: Vec<[usize; 8]>,
}

/// Per-corner data for linearized operators.
pub(crate) enum CornerCoefficients<'a> {
    /// `flux = Q w ∇v`.
    Lagged { w: &'a [f64], q: Option<&'a [f64]> },
    /// `flux = Q (w ∇v + c₂ (∇u : ∇v) ∇u)`.
    Newton { w: &'a [f64], c2: &'a [f64], grads: &'a [f64], q: Option<&'a [f64]> },
}

impl Discretization {
    /// Unknowns are mask points whose full `3^n` neighbourhood and whose
    /// axis neighbours at distance two lie in the mask; every other mask
    /// point carries Dirichlet data. Cells are those with all corners in the
    /// mask.
    pub fn new(mask: &DomainMask, ncomp: usize) -> Result<Self> {
        let grid = mask.grid();
        let n = grid.dim();
        let neighbourhood: Vec<[isize; 3]> = (0..3usize.pow(n as u32))
            .map(|mut k| {
                let mut o = [0isize; 3];
                for slot in o.iter_mut().take(n) {
                    *slot = (k % 3) as isize - 1;
                    k /= 3;
                }
                o
            })
            .collect();
        let mut slot = vec![NONE; grid.len()];
        let mut unknowns = Vec::new();
        for p in 0..grid.len() {
            if !mask.contains(p) {
                continue;
            }
            let full = neighbourhood.iter().all(|o| mask.contains(grid.offset(p, &o[..n])))
                && (0..n).all(|a| mask.contains(grid.step(p, a, 2)) && mask.contains(grid.step(p, a, -2)));
            if full {
                slot[p] = unknowns.len();
                unknowns.push(p);
            }
        }
        if unknowns.is_empty() {
            return Err(Error::InvalidInstance("mask has no interior points".into()));
        }
        let corners = 1usize << n;
        let mut cells = Vec::new();
        for p in 0..grid.len() {
            let mut cell = [NONE; 8];
            let mut inside = true;
            for (c, slot) in cell.iter_mut().enumerate().take(corners) {
                let o: Vec<isize> = (0..n).map(|a| ((c >> a) & 1) as isize).collect();
                let q = grid.offset(p, &o);
                inside &= mask.contains(q);
                *slot = q;
            }
            if inside {
                cells.push(cell);
            }
        }
        Ok(Self { grid, ncomp, slot, unknowns, cells })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn components(&self) -> usize {
        self.ncomp
    }

    /// Grid indices of the unknown points, ascending.
    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    pub fn is_unknown(&self, p: usize) -> bool {
        self.slot[p] != NONE
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    fn corners(&self) -> usize {
        1 << self.grid.dim()
    }

    /// Quadrature weight of one corner.
    fn corner_weight(&self) -> f64 {
        self.grid.cell_volume() / self.corners() as f64
    }

    /// Gradient at corner `c` of `cell`, written as `[N, n]` into `out`.
    #[inline]
    fn corner_gradient(&self, u: &[f64], cell: &[usize; 8], c: usize, out: &mut [f64]) {
        let n = self.grid.dim();
        let nc = self.ncomp;
        let inv_h = self.grid.m() as f64;
        for a in 0..n {
            let lo = cell[c & !(1 << a)];
            let hi = cell[c | (1 << a)];
            for i in 0..nc {
                out[i * n + a] = (u[hi * nc + i] - u[lo * nc + i]) * inv_h;
            }
        }
    }

    /// Adds `wq · flux · ∇_c φ` contributions for corner `c` to `r`.
    #[inline]
    fn scatter(&self, cell: &[usize; 8], c: usize, flux: &[f64], scale: f64, r: &mut [f64]) {
        let n = self.grid.dim();
        let nc = self.ncomp;
        for a in 0..n {
            let lo = cell[c & !(1 << a)];
            let hi = cell[c | (1 << a)];
            for i in 0..nc {
                let v = scale * flux[i * n + a];
                r[hi * nc + i] += v;
                r[lo * nc + i] -= v;
            }
        }
    }

    /// All corner gradients, `[cell][corner][N·n]` flattened.
    pub(crate) fn gradients(&self, u: &[f64]) -> Vec<f64> {
        let k = self.ncomp * self.grid.dim();
        let corners = self.corners();
        let mut out = vec![0.0; self.cells.len() * corners * k];
        for (ci, cell) in self.cells.iter().enumerate() {
            for c in 0..corners {
                let off = (ci * corners + c) * k;
                self.corner_gradient(u, cell, c, &mut out[off..off + k]);
            }
        }
        out
    }

    /// `∫ (|∇u|² + δ²)^{p/2}` by corner quadrature.
    pub fn dirichlet_energy(&self, u: &[f64], p: f64, delta: f64) -> f64 {
        let k = self.ncomp * self.grid.dim();
        let mut g = vec![0.0; k];
        let mut total = 0.0;
        for cell in &self.cells {
            for c in 0..self.corners() {
                self.corner_gradient(u, cell, c, &mut g);
                let s: f64 = g.iter().map(|v| v * v).sum();
                total += (s + delta * delta).powf(0.5 * p);
            }
        }
        total * self.corner_weight()
    }

    /// `J(u) = (1/p)∫(|∇u|²+δ²)^{p/2} + ∫ G:∇u − Σ_unknowns h^n f·u`, the
    /// functional whose stationary points solve the `Q ≡ I` problem.
    pub fn functional(&self, u: &[f64], p: f64, delta: f64, f: &[f64], g_flux: &[f64]) -> f64 {
        let n = self.grid.dim();
        let nc = self.ncomp;
        let k = nc * n;
        let mut g = vec![0.0; k];
        let mut total = 0.0;
        for cell in &self.cells {
            for c in 0..self.corners() {
                self.corner_gradient(u, cell, c, &mut g);
                let s: f64 = g.iter().map(|v| v * v).sum();
                let node = cell[c];
                let coupling: f64 = g.iter().zip(&g_flux[node * k..node * k + k]).map(|(a, b)| a * b).sum();
                total += (s + delta * delta).powf(0.5 * p) / p + coupling;
            }
        }
        let mut source = 0.0;
        for &q in &self.unknowns {
            source += (0..nc).map(|i| f[q * nc + i] * u[q * nc + i]).sum::<f64>();
        }
        total * self.corner_weight() - source * self.grid.cell_volume()
    }

    /// Nodal residual of the divergence-form system at the unknowns, and the
    /// matching sum of absolute contributions (for relative residuals).
    /// Layout of the returned vectors: `[unknown][component]`.
    pub(crate) fn residual(
        &self,
        u: &[f64],
        p: f64,
        delta: f64,
        q: Option<&[f64]>,
        f: &[f64],
        g_flux: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.dim();
        let nc = self.ncomp;
        let k = nc * n;
        let len = self.grid.len() * nc;
        let mut r = vec![0.0; len];
        let mut mag = vec![0.0; len];
        let mut g = vec![0.0; k];
        let mut flux = vec![0.0; k];
        let mut absflux = vec![0.0; k];
        let scale = self.corner_weight() * self.grid.m() as f64;
        for cell in &self.cells {
            for c in 0..self.corners() {
                self.corner_gradient(u, cell, c, &mut g);
                let s: f64 = g.iter().map(|v| v * v).sum();
                let w = super::weight(s, p, delta);
                let node = cell[c];
                let gf = &g_flux[node * k..node * k + k];
                match q {
                    Some(q) => {
                        let qm = &q[node * nc * nc..(node + 1) * nc * nc];
                        for i in 0..nc {
                            for a in 0..n {
                                let mut acc = 0.0;
                                let mut acc_abs = 0.0;
                                for j in 0..nc {
                                    let t = qm[i * nc + j] * w * g[j * n + a];
                                    acc += t;
                                    acc_abs += t.abs();
                                }
                                flux[i * n + a] = acc + gf[i * n + a];
                                absflux[i * n + a] = acc_abs + gf[i * n + a].abs();
                            }
                        }
                    }
                    None => {
                        for t in 0..k {
                            flux[t] = w * g[t] + gf[t];
                            absflux[t] = (w * g[t]).abs() + gf[t].abs();
                        }
                    }
                }
                self.scatter(cell, c, &flux, scale, &mut r);
                for a in 0..n {
                    let lo = cell[c & !(1 << a)];
                    let hi = cell[c | (1 << a)];
                    for i in 0..nc {
                        let v = scale * absflux[i * n + a];
                        mag[hi * nc + i] += v;
                        mag[lo * nc + i] += v;
                    }
                }
            }
        }
        let vol = self.grid.cell_volume();
        let mut out = Vec::with_capacity(self.unknowns.len() * nc);
        let mut out_mag = Vec::with_capacity(self.unknowns.len() * nc);
        for &node in &self.unknowns {
            for i in 0..nc {
                out.push(r[node * nc + i] - vol * f[node * nc + i]);
                out_mag.push(mag[node * nc + i] + vol * f[node * nc + i].abs());
            }
        }
        (out, out_mag)
    }

    /// Applies a linearized operator to `v` given on the unknowns.
    pub(crate) fn apply(&self, coef: &CornerCoefficients<'_>, v: &[f64], out: &mut [f64]) {
        let n = self.grid.dim();
        let nc = self.ncomp;
        let k = nc * n;
        let mut full = vec![0.0; self.grid.len() * nc];
        for (j, &node) in self.unknowns.iter().enumerate() {
            full[node * nc..node * nc + nc].copy_from_slice(&v[j * nc..j * nc + nc]);
        }
        let mut r = vec![0.0; full.len()];
        let mut g = vec![0.0; k];
        let mut flux = vec![0.0; k];
        let corners = self.corners();
        let scale = self.corner_weight() * self.grid.m() as f64;
        for (ci, cell) in self.cells.iter().enumerate() {
            for c in 0..corners {
                let idx = ci * corners + c;
                self.corner_gradient(&full, cell, c, &mut g);
                match coef {
                    CornerCoefficients::Lagged { w, q } => match q {
                        Some(q) => {
                            let qm = &q[cell[c] * nc * nc..(cell[c] + 1) * nc * nc];
                            for i in 0..nc {
                                for a in 0..n {
                                    flux[i * n + a] = w[idx] * (0..nc).map(|j| qm[i * nc + j] * g[j * n + a]).sum::<f64>();
                                }
                            }
                        }
                        None => {
                            for t in 0..k {
                                flux[t] = w[idx] * g[t];
                            }
                        }
                    },
                    CornerCoefficients::Newton { w, c2, grads, q } => {
                        let gu = &grads[idx * k..idx * k + k];
                        let dot: f64 = gu.iter().zip(&g).map(|(a, b)| a * b).sum();
                        for t in 0..k {
                            g[t] = w[idx] * g[t] + c2[idx] * dot * gu[t];
                        }
                        match q {
                            Some(q) => {
                                let qm = &q[cell[c] * nc * nc..(cell[c] + 1) * nc * nc];
                                for i in 0..nc {
                                    for a in 0..n {
                                        flux[i * n + a] = (0..nc).map(|j| qm[i * nc + j] * g[j * n + a]).sum::<f64>();
                                    }
                                }
                            }
                            None => flux.copy_from_slice(&g),
                        }
                    }
                }
                self.scatter(cell, c, &flux, scale, &mut r);
            }
        }
        for (j, &node) in self.unknowns.iter().enumerate() {
            out[j * nc..j * nc + nc].copy_from_slice(&r[node * nc..node * nc + nc]);
        }
    }

    /// Corner weights `w` and Newton coefficients `c₂ = (p-2)(s+δ²)^{(p-4)/2}`
    /// along with the corner gradients of `u`.
    pub(crate) fn coefficients(&self, u: &[f64], p: f64, delta: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let k = self.ncomp * self.grid.dim();
        let grads = self.gradients(u);
        let count = grads.len() / k;
        let mut w = Vec::with_capacity(count);
        let mut c2 = Vec::with_capacity(count);
        for g in grads.chunks(k) {
            let s: f64 = g.iter().map(|v| v * v).sum::<f64>() + delta * delta;
            w.push(s.powf(0.5 * (p - 2.0)));
            c2.push((p - 2.0) * s.powf(0.5 * (p - 4.0)));
        }
        (w, c2, grads)
    }

    /// Adds `step · v` (given on the unknowns) to the full-grid `u`.
    pub(crate) fn axpy(&self, u: &mut [f64], step: f64, v: &[f64]) {
        let nc = self.ncomp;
        for (j, &node) in self.unknowns.iter().enumerate() {
            for i in 0..nc {
                u[node * nc + i] += step * v[j * nc + i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ball_mask;

    #[test]
    fn unknowns_sit_two_layers_inside() {
        let g = Grid::new(2, 32).unwrap();
        let mask = ball_mask(g, &[0.5, 0.5], 0.4).unwrap();
        let d = Discretization::new(&mask, 1).unwrap();
        for &p in d.unknowns() {
            for a in 0..2 {
                for s in [-2, -1, 1, 2] {
                    assert!(mask.contains(g.step(p, a, s)));
                }
            }
        }
        assert!(d.unknowns().len() < mask.points().len());
    }

    #[test]
    fn p2_is_five_point_laplacian() {
        let g = Grid::new(2, 16).unwrap();
        let mask = ball_mask(g, &[0.5, 0.5], 0.4).unwrap();
        let d = Discretization::new(&mask, 1).unwrap();
        let u: Vec<f64> = (0..g.len()).map(|p| ((p * 7919) % 13) as f64).collect();
        let zeros = vec![0.0; g.len() * 2];
        let (r, _) = d.residual(&u, 2.0, 0.0, None, &vec![0.0; g.len()], &zeros);
        let h = g.spacing();
        for (j, &p) in d.unknowns().iter().enumerate() {
            let lap: f64 = (0..2).map(|a| u[g.step(p, a, 1)] + u[g.step(p, a, -1)] - 2.0 * u[p]).sum::<f64>() / (h * h);
            assert!((r[j] / g.cell_volume() + lap).abs() < 1e-9 * lap.abs().max(1.0));
        }
    }

    #[test]
    fn newton_operator_matches_finite_difference() {
        let g = Grid::new(2, 16).unwrap();
        let mask = ball_mask(g, &[0.5, 0.5], 0.4).unwrap();
        let d = Discretization::new(&mask, 2).unwrap();
        let u: Vec<f64> = (0..g.len() * 2).map(|i| (0.37 * i as f64).sin()).collect();
        let v: Vec<f64> = (0..d.unknowns().len() * 2).map(|i| (1.3 * i as f64).cos()).collect();
        let zf = vec![0.0; g.len() * 2];
        let zg = vec![0.0; g.len() * 4];
        let (p, delta) = (3.0, 0.1);
        let (w, c2, grads) = d.coefficients(&u, p, delta);
        let mut jv = vec![0.0; v.len()];
        d.apply(&CornerCoefficients::Newton { w: &w, c2: &c2, grads: &grads, q: None }, &v, &mut jv);
        let eps = 1e-6;
        let mut up = u.clone();
        d.axpy(&mut up, eps, &v);
        let mut um = u.clone();
        d.axpy(&mut um, -eps, &v);
        let (rp, _) = d.residual(&up, p, delta, None, &zf, &zg);
        let (rm, _) = d.residual(&um, p, delta, None, &zf, &zg);
        let scale = jv.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for i in 0..v.len() {
            let fd = (rp[i] - rm[i]) / (2.0 * eps);
            assert!((fd - jv[i]).abs() < 1e-6 * scale, "{i}: {fd} {}", jv[i]);
        }
    }
}
