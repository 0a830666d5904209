//! Lattice fields on the unit torus `[0,1)^n`.
//!
//! A [`TensorField`] stores one tensor per lattice point, point-major with the
//! tensor slots contiguous (row-major, last tensor index fastest). Lattice points
//! are ordered row-major as well, last axis fastest. This is exactly the payload
//! layout of the FLD1 file format in [`io`].

mod calculus;
pub mod io;
mod mask;
pub mod random;

pub use calculus::{divergence, gradient, laplacian, Scheme};
pub use mask::{ball_mask, cutoff, mean_on, periodic_distance, periodic_offset, smoothstep, smoothstep_derivative, DomainMask};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform periodic lattice with `m` points per axis on `[0,1)^n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    m: usize,
}

impl Grid {
    pub fn new(dim: usize, m: usize) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if !m.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("m must be power of two, got {m}")));
        }
        if m < 8 {
            return Err(Error::InvalidGrid(format!("m must be at least 8, got {m}")));
        }
        Ok(Self { dim, m })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Volume of one lattice cell, `h^n`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Total number of lattice points, `m^n`.
    #[inline]
    pub fn len(&self) -> usize {
        self.m.pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of a flat point index.
    #[inline]
    pub fn multi_index(&self, mut p: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for a in (0..self.dim).rev() {
            idx[a] = p % self.m;
            p /= self.m;
        }
        idx
    }

    /// Flat index of a multi-index; components are wrapped periodically.
    #[inline]
    pub fn flat_index(&self, idx: &[isize]) -> usize {
        let m = self.m as isize;
        idx.iter()
            .take(self.dim)
            .fold(0usize, |acc, &i| acc * self.m + i.rem_euclid(m) as usize)
    }

    /// Flat index of the neighbour `p + offset` with periodic wrap.
    #[inline]
    pub fn offset(&self, p: usize, offset: &[isize]) -> usize {
        let idx = self.multi_index(p);
        let mut shifted = [0isize; 3];
        for a in 0..self.dim {
            shifted[a] = idx[a] as isize + offset[a];
        }
        self.flat_index(&shifted[..self.dim])
    }

    /// Neighbour along one axis.
    #[inline]
    pub fn step(&self, p: usize, axis: usize, delta: isize) -> usize {
        let stride = self.m.pow((self.dim - 1 - axis) as u32);
        let i = (p / stride) % self.m;
        let j = (i as isize + delta).rem_euclid(self.m as isize) as usize;
        p - i * stride + j * stride
    }

    /// Physical coordinates `x_a = i_a h` of a lattice point.
    #[inline]
    pub fn coords(&self, p: usize) -> [f64; 3] {
        let idx = self.multi_index(p);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = idx[a] as f64 * h;
        }
        x
    }
}

/// Tensor shape of the per-point values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn vector(k: usize) -> Self {
        Shape(vec![k])
    }

    pub fn matrix(r: usize, c: usize) -> Self {
        Shape(vec![r, c])
    }

    pub fn new(dims: Vec<usize>) -> Self {
        Shape(dims)
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// Number of scalar slots per lattice point.
    pub fn slots(&self) -> usize {
        self.0.iter().product()
    }

    /// Shape with one more trailing axis of length `k`.
    pub fn push(&self, k: usize) -> Self {
        let mut d = self.0.clone();
        d.push(k);
        Shape(d)
    }

    /// Shape with the trailing axis removed.
    pub fn pop(&self) -> Option<Self> {
        let mut d = self.0.clone();
        d.pop()?;
        Some(Shape(d))
    }

    pub fn last(&self) -> Option<usize> {
        self.0.last().copied()
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_empty() {
            return write!(f, "scalar");
        }
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "[{}]", parts.join("x"))
    }
}

/// Values of a tensor quantity at every lattice point.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    grid: Grid,
    shape: Shape,
    values: Vec<f64>,
}

impl TensorField {
    pub fn zeros(grid: Grid, shape: Shape) -> Self {
        let len = grid.len() * shape.slots();
        Self { grid, shape, values: vec![0.0; len] }
    }

    /// Wraps raw values; rejects wrong lengths and non-finite entries.
    pub fn from_values(grid: Grid, shape: Shape, values: Vec<f64>) -> Result<Self> {
        let expected = grid.len() * shape.slots();
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected} values"),
                found: format!("{} values", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, shape, values })
    }

    /// Scalar field sampled from a function of the coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let n = grid.dim();
        let values = (0..grid.len()).map(|p| f(&grid.coords(p)[..n])).collect();
        Self { grid, shape: Shape::scalar(), values }
    }

    /// Tensor field sampled from a function writing all slots of one point.
    pub fn from_fn_tensor(grid: Grid, shape: Shape, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let n = grid.dim();
        let s = shape.slots();
        let mut values = vec![0.0; grid.len() * s];
        for (p, chunk) in values.chunks_mut(s).enumerate() {
            f(&grid.coords(p)[..n], chunk);
        }
        Self { grid, shape, values }
    }

    pub fn constant(grid: Grid, shape: Shape, value: &[f64]) -> Self {
        assert_eq!(value.len(), shape.slots());
        let values = value.iter().copied().cycle().take(grid.len() * shape.slots()).collect();
        Self { grid, shape, values }
    }

    /// Assembles a field from per-slot scalar components.
    pub fn from_components(grid: Grid, shape: Shape, comps: &[Vec<f64>]) -> Self {
        let s = shape.slots();
        assert_eq!(comps.len(), s);
        let mut values = vec![0.0; grid.len() * s];
        for (k, c) in comps.iter().enumerate() {
            for (p, v) in c.iter().enumerate() {
                values[p * s + k] = *v;
            }
        }
        Self { grid, shape, values }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    #[inline]
    pub fn slots(&self) -> usize {
        self.shape.slots()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// All slots of one lattice point.
    #[inline]
    pub fn at(&self, p: usize) -> &[f64] {
        let s = self.slots();
        &self.values[p * s..(p + 1) * s]
    }

    #[inline]
    pub fn at_mut(&mut self, p: usize) -> &mut [f64] {
        let s = self.slots();
        &mut self.values[p * s..(p + 1) * s]
    }

    /// One scalar slot at every lattice point.
    pub fn component(&self, k: usize) -> Vec<f64> {
        let s = self.slots();
        self.values.iter().skip(k).step_by(s).copied().collect()
    }

    pub fn components(&self) -> Vec<Vec<f64>> {
        (0..self.slots()).map(|k| self.component(k)).collect()
    }

    /// Pointwise Euclidean (Frobenius) norm.
    pub fn pointwise_norm(&self) -> Vec<f64> {
        self.values
            .chunks(self.slots().max(1))
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    pub fn norm_field(&self) -> TensorField {
        TensorField { grid: self.grid, shape: Shape::scalar(), values: self.pointwise_norm() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete `L^2` norm over the whole torus.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// Discrete `L^p` norm of the pointwise Euclidean norm over the torus.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let vol = self.grid.cell_volume();
        if p.is_infinite() {
            return self.pointwise_norm().into_iter().fold(0.0, f64::max);
        }
        (self.pointwise_norm().iter().map(|v| v.powf(p)).sum::<f64>() * vol).powf(1.0 / p)
    }

    /// Mean of every slot over the torus.
    pub fn mean(&self) -> Vec<f64> {
        let s = self.slots();
        let mut acc = vec![0.0; s];
        for chunk in self.values.chunks(s) {
            for (a, v) in acc.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        let len = self.grid.len() as f64;
        acc.iter_mut().for_each(|a| *a /= len);
        acc
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TensorField {
        TensorField { grid: self.grid, shape: self.shape.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, c: f64) -> TensorField {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &TensorField) -> Result<TensorField> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(TensorField { grid: self.grid, shape: self.shape.clone(), values })
    }

    pub fn sub(&self, other: &TensorField) -> Result<TensorField> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(TensorField { grid: self.grid, shape: self.shape.clone(), values })
    }

    /// Multiplies every slot by a scalar field.
    pub fn mul_scalar_field(&self, w: &[f64]) -> TensorField {
        let s = self.slots();
        let mut out = self.clone();
        for (chunk, &wp) in out.values.chunks_mut(s).zip(w) {
            chunk.iter_mut().for_each(|v| *v *= wp);
        }
        out
    }

    /// Same values, different shape with equal slot count.
    pub fn reshape(mut self, shape: Shape) -> Result<TensorField> {
        if shape.slots() != self.shape.slots() {
            return Err(Error::ShapeMismatch { expected: self.shape.to_string(), found: shape.to_string() });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn check_same(&self, other: &TensorField) -> Result<()> {
        if self.grid != other.grid || self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: format!("{} on m={} n={}", self.shape, self.grid.m(), self.grid.dim()),
                found: format!("{} on m={} n={}", other.shape, other.grid.m(), other.grid.dim()),
            });
        }
        Ok(())
    }

    pub fn expect_shape(&self, shape: &Shape) -> Result<()> {
        if &self.shape != shape {
            return Err(Error::ShapeMismatch { expected: shape.to_string(), found: self.shape.to_string() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let g = Grid::new(2, 64).unwrap();
        assert_eq!(g.len(), 4096);
        assert_eq!(g.spacing(), 1.0 / 64.0);
        assert_eq!(g.spacing() * g.m() as f64, 1.0);
        assert_eq!(Grid::new(3, 32).unwrap().len(), 32768);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        let err = Grid::new(2, 13).unwrap_err();
        assert!(err.to_string().contains("m must be power of two"));
        assert!(Grid::new(4, 16).is_err());
        assert!(Grid::new(1, 16).is_err());
        assert!(Grid::new(2, 4).is_err());
    }

    #[test]
    fn indexing_round_trips() {
        let g = Grid::new(3, 8).unwrap();
        for p in [0, 1, 7, 8, 63, 64, 511] {
            let idx = g.multi_index(p);
            let back = g.flat_index(&[idx[0] as isize, idx[1] as isize, idx[2] as isize]);
            assert_eq!(back, p);
        }
        // last axis fastest
        assert_eq!(g.multi_index(1), [0, 0, 1]);
        assert_eq!(g.step(0, 2, -1), 7);
        assert_eq!(g.step(0, 0, 1), 64);
        assert_eq!(g.offset(0, &[-1, 0, 1]), 7 * 64 + 1);
    }

    #[test]
    fn rejects_non_finite() {
        let g = Grid::new(2, 8).unwrap();
        let mut v = vec![0.0; 64];
        v[3] = f64::NAN;
        assert!(matches!(TensorField::from_values(g, Shape::scalar(), v), Err(Error::NonFinite(3))));
    }

    #[test]
    fn components_round_trip() {
        let g = Grid::new(2, 8).unwrap();
        let f = TensorField::from_fn_tensor(g, Shape::matrix(2, 3), |x, out| {
            for (k, o) in out.iter_mut().enumerate() {
                *o = k as f64 + x[0];
            }
        });
        let back = TensorField::from_components(g, f.shape().clone(), &f.components());
        assert_eq!(back, f);
    }
}
