use super::{Grid, TensorField};
use crate::error::{Error, Result};

/// Signed periodic offset `x - c` folded into `[-1/2, 1/2)` per axis.
pub fn periodic_offset(x: &[f64], c: &[f64]) -> [f64; 3] {
    let mut d = [0.0; 3];
    for (a, (xi, ci)) in x.iter().zip(c).enumerate() {
        let t = xi - ci;
        d[a] = t - t.round();
    }
    d
}

/// Distance on the unit torus.
pub fn periodic_distance(x: &[f64], c: &[f64]) -> f64 {
    periodic_offset(x, c).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Weighted region of the lattice: a ball indicator or a smooth cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainMask {
    grid: Grid,
    weights: Vec<f64>,
    center: [f64; 3],
    radius: f64,
}

impl DomainMask {
    pub fn new(grid: Grid, weights: Vec<f64>, center: &[f64], radius: f64) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} weights", grid.len()),
                found: format!("{} weights", weights.len()),
            });
        }
        if let Some(i) = weights.iter().position(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::NonFinite(i));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::EmptyMask);
        }
        let mut c = [0.0; 3];
        c[..grid.dim()].copy_from_slice(&center[..grid.dim()]);
        Ok(Self { grid, weights, center: c, radius })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn center(&self) -> &[f64] {
        &self.center[..self.grid.dim()]
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `h^n Σ w`.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.grid.cell_volume()
    }

    #[inline]
    pub fn contains(&self, p: usize) -> bool {
        self.weights[p] > 0.0
    }

    /// Lattice points with positive weight, in index order.
    pub fn points(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&p| self.contains(p)).collect()
    }
}

fn check_fits(radius: f64) -> Result<()> {
    if !(radius > 0.0) {
        return Err(Error::InvalidRadii(format!("radius must be positive, got {radius}")));
    }
    if radius >= 0.5 {
        return Err(Error::BallTooLarge { radius });
    }
    Ok(())
}

/// Indicator of the closed periodic ball `|x - c| ≤ r`.
pub fn ball_mask(grid: Grid, center: &[f64], radius: f64) -> Result<DomainMask> {
    check_fits(radius)?;
    let n = grid.dim();
    let weights = (0..grid.len())
        .map(|p| if periodic_distance(&grid.coords(p)[..n], &center[..n]) <= radius { 1.0 } else { 0.0 })
        .collect();
    DomainMask::new(grid, weights, center, radius)
}

/// Quintic smoothstep `6t⁵ - 15t⁴ + 10t³` clamped to `[0,1]`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Derivative of [`smoothstep`].
pub fn smoothstep_derivative(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (t - 1.0) * (t - 1.0)
}

/// Radial cutoff: 1 on `B(c, r_in)`, 0 outside `B(c, r_out)`, quintic ramp between.
pub fn cutoff(grid: Grid, center: &[f64], r_in: f64, r_out: f64) -> Result<TensorField> {
    if !(r_in > 0.0 && r_in < r_out) {
        return Err(Error::InvalidRadii(format!("need 0 < r_in < r_out, got {r_in}, {r_out}")));
    }
    check_fits(r_out)?;
    let n = grid.dim();
    Ok(TensorField::from_fn(grid, |x| {
        let rho = periodic_distance(x, &center[..n]);
        smoothstep((r_out - rho) / (r_out - r_in))
    }))
}

/// Weighted mean of every slot over the mask.
pub fn mean_on(f: &TensorField, mask: &DomainMask) -> Result<Vec<f64>> {
    if f.grid() != mask.grid() {
        return Err(Error::ShapeMismatch { expected: "field on the mask grid".into(), found: "different grid".into() });
    }
    let total: f64 = mask.weights().iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyMask);
    }
    let mut acc = vec![0.0; f.slots()];
    for (p, &w) in mask.weights().iter().enumerate() {
        if w > 0.0 {
            for (a, v) in acc.iter_mut().zip(f.at(p)) {
                *a += w * v;
            }
        }
    }
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gradient, Scheme, Shape};

    #[test]
    fn cutoff_values() {
        let g = Grid::new(2, 64).unwrap();
        let c = [0.5, 0.5];
        let eta = cutoff(g, &c, 0.15, 0.3).unwrap();
        let centre = g.flat_index(&[32, 32]);
        assert_eq!(eta.values()[centre], 1.0);
        for p in 0..g.len() {
            let r = periodic_distance(&g.coords(p)[..2], &c);
            let v = eta.values()[p];
            assert!((0.0..=1.0).contains(&v));
            if r >= 0.3 {
                assert_eq!(v, 0.0);
            }
            if r <= 0.15 {
                assert_eq!(v, 1.0);
            }
        }
    }

    #[test]
    fn cutoff_gradient_bound() {
        let (r_in, r_out) = (0.1, 0.3);
        let bound = 4.0 / (r_out - r_in);
        // analytic ramp slope
        let peak = (0..=1000).map(|i| smoothstep_derivative(i as f64 / 1000.0)).fold(0.0, f64::max);
        assert!((peak - 1.875).abs() < 1e-12);
        assert!(peak / (r_out - r_in) <= bound);
        // lattice difference quotient
        let g = Grid::new(3, 32).unwrap();
        let eta = cutoff(g, &[0.5, 0.5, 0.5], r_in, r_out).unwrap();
        let d = gradient(&eta, Scheme::Central);
        assert!(d.lp_norm(f64::INFINITY) <= bound);
    }

    #[test]
    fn rejects_bad_radii() {
        let g = Grid::new(2, 16).unwrap();
        assert!(matches!(cutoff(g, &[0.5, 0.5], 0.2, 0.6), Err(Error::BallTooLarge { .. })));
        assert!(cutoff(g, &[0.5, 0.5], 0.3, 0.2).is_err());
        assert!(ball_mask(g, &[0.5, 0.5], 0.5).is_err());
    }

    #[test]
    fn means() {
        let g = Grid::new(2, 64).unwrap();
        let mask = ball_mask(g, &[0.5, 0.5], 0.3).unwrap();
        let c = TensorField::constant(g, Shape::scalar(), &[2.75]);
        assert!((mean_on(&c, &mask).unwrap()[0] - 2.75).abs() < 1e-14);
        let x1 = TensorField::from_fn(g, |x| x[0]);
        assert!((mean_on(&x1, &mask).unwrap()[0] - 0.5).abs() < g.spacing());
        let area = std::f64::consts::PI * 0.09;
        assert!((mask.measure() - area).abs() < 0.02);
    }

    #[test]
    fn empty_mask_rejected() {
        let g = Grid::new(2, 8).unwrap();
        assert!(matches!(DomainMask::new(g, vec![0.0; 64], &[0.5, 0.5], 0.1), Err(Error::EmptyMask)));
    }

    #[test]
    fn distance_wraps() {
        assert!((periodic_distance(&[0.05, 0.0], &[0.95, 0.0]) - 0.1).abs() < 1e-15);
    }
}
