//! Seeded random band-limited fields.

use super::{Grid, Shape, TensorField};
use crate::fourier::SpectralPlan;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

/// Random field whose Fourier modes satisfy `|k_a| ≤ kmax` on every axis,
/// scaled so that `max |value| = amplitude`. Slots are independent.
pub fn band_limited<R: Rng>(grid: Grid, shape: Shape, kmax: usize, amplitude: f64, rng: &mut R) -> TensorField {
    let plan = SpectralPlan::new(grid);
    let comps: Vec<Vec<f64>> = (0..shape.slots()).map(|_| band_limited_scalar(&plan, kmax, rng)).collect();
    let f = TensorField::from_components(grid, shape, &comps);
    let peak = f.max_abs();
    if peak > 0.0 {
        f.scale(amplitude / peak)
    } else {
        f
    }
}

/// Same as [`band_limited`] with every slot shifted to mean zero.
pub fn band_limited_mean_zero<R: Rng>(grid: Grid, shape: Shape, kmax: usize, amplitude: f64, rng: &mut R) -> TensorField {
    let f = band_limited(grid, shape.clone(), kmax, amplitude, rng);
    let mean = f.mean();
    f.sub(&TensorField::constant(grid, shape, &mean)).expect("same shape")
}

/// Coefficients are drawn in a fixed order over the box `|k_a| ≤ kmax`, so a
/// seed names one trigonometric polynomial whatever the resolution.
fn band_limited_scalar<R: Rng>(plan: &SpectralPlan, kmax: usize, rng: &mut R) -> Vec<f64> {
    let grid = plan.grid();
    let n = grid.dim();
    let kmax = kmax.min(grid.m() / 2 - 1) as isize;
    let side = (2 * kmax + 1) as usize;
    let mut hat = vec![Complex64::new(0.0, 0.0); grid.len()];
    for mut code in 0..side.pow(n as u32) {
        let mut k = [0isize; 3];
        for slot in k.iter_mut().take(n).rev() {
            *slot = (code % side) as isize - kmax;
            code /= side;
        }
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        hat[grid.flat_index(&k[..n])] = Complex64::new(re, im);
    }
    plan.inverse(hat)
}
