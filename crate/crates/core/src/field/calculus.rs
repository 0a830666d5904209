use super::{Shape, TensorField};
use crate::error::Result;
use crate::fourier::{trailing_rows, SpectralPlan};

/// Discretisation used for first derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Fourier symbol `2πi k`, exact on band-limited fields.
    #[default]
    Spectral,
    /// Second-order central difference `(f(x+h) - f(x-h)) / 2h`.
    Central,
}

/// Gradient; appends a trailing axis of length `n`.
pub fn gradient(f: &TensorField, scheme: Scheme) -> TensorField {
    match scheme {
        Scheme::Spectral => SpectralPlan::new(f.grid()).gradient(f),
        Scheme::Central => central_gradient(f),
    }
}

/// Divergence contracting the trailing axis (which must have length `n`).
pub fn divergence(g: &TensorField, scheme: Scheme) -> Result<TensorField> {
    match scheme {
        Scheme::Spectral => SpectralPlan::new(g.grid()).divergence(g),
        Scheme::Central => central_divergence(g),
    }
}

/// `div ∘ grad` in the given scheme. The central version is the wide
/// (`2h`) stencil, so it factors exactly through the central gradient.
pub fn laplacian(f: &TensorField, scheme: Scheme) -> TensorField {
    match scheme {
        Scheme::Spectral => SpectralPlan::new(f.grid()).laplacian(f),
        Scheme::Central => central_divergence(&central_gradient(f)).expect("gradient has a trailing axis"),
    }
}

fn central_gradient(f: &TensorField) -> TensorField {
    let grid = f.grid();
    let n = grid.dim();
    let s = f.slots();
    let inv = 0.5 / grid.spacing();
    let mut out = TensorField::zeros(grid, f.shape().push(n));
    for p in 0..grid.len() {
        for a in 0..n {
            let fwd = f.at(grid.step(p, a, 1));
            let bwd = f.at(grid.step(p, a, -1));
            let dst = out.at_mut(p);
            for k in 0..s {
                dst[k * n + a] = (fwd[k] - bwd[k]) * inv;
            }
        }
    }
    out
}

fn central_divergence(g: &TensorField) -> Result<TensorField> {
    let grid = g.grid();
    let n = grid.dim();
    let rows = trailing_rows(g, n)?;
    let inv = 0.5 / grid.spacing();
    let shape = g.shape().pop().unwrap_or_else(Shape::scalar);
    let mut out = TensorField::zeros(grid, shape);
    for p in 0..grid.len() {
        let mut acc = vec![0.0; rows];
        for a in 0..n {
            let fwd = g.at(grid.step(p, a, 1));
            let bwd = g.at(grid.step(p, a, -1));
            for (r, v) in acc.iter_mut().enumerate() {
                *v += (fwd[r * n + a] - bwd[r * n + a]) * inv;
            }
        }
        out.at_mut(p).copy_from_slice(&acc);
    }
    Ok(out)
}
