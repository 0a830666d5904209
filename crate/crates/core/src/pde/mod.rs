//! Regularized n-Laplace systems on masked balls.
//!
//! The model problem is
//!
//! ```text
//! -div(Q (|∇u|² + δ²)^{(p-2)/2} ∇u) = f + div G          (divergence form)
//! -div(Q (|∇u|² + δ²)^{(p-2)/2} ∇u) = Ω · (|∇u|² + δ²)^{(p-2)/2} ∇u   (potential form)
//! ```
//!
//! for `u` with `N` components, with Dirichlet data on the outer layers of a
//! mask. Shapes: `u`, `f` are `[N]`, `G` is `[N, n]`, `Q` is `[N, N]` and `Ω`
//! is `[N, N, n]`.

mod manufactured;
mod maps;
mod residual;
mod solve;
mod stencil;

pub use manufactured::{manufacture, DataForm, Manufactured, PlaneWave, SmoothMap, SmoothRotation};
pub use maps::{
    cofactor_field, cross_product, manifold_potential, manufacture_hsystem, manufacture_sphere_map,
    sphere_map_from_angles, sphere_second_fundamental_form, HCoefficient, HSystem, SphereMap, SphereParams,
};
pub use residual::{
    bump_test_fields, pairing, pull_back_test, random_test_fields, residual, residual_with_gradient, TestField,
    WeakResidual,
};
pub use solve::{solve_gauged_system, solve_plaplace_dirichlet, PdeSolution};
pub use stencil::Discretization;

use crate::error::{Error, Result};
use crate::field::io::{read_field, write_field};
use crate::field::{gradient, DomainMask, Grid, Scheme, Shape, TensorField};
use crate::gauge::RotationField;
use std::fmt;
use std::path::Path;

/// Which right-hand side the instance carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Form {
    Potential,
    Divergence,
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Form::Potential => "potential",
            Form::Divergence => "divergence",
        })
    }
}

impl std::str::FromStr for Form {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "potential" => Ok(Form::Potential),
            "divergence" => Ok(Form::Divergence),
            other => Err(Error::InvalidInstance(format!("unknown form '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Relative residual target.
    pub tolerance: f64,
    pub max_outer: usize,
    /// Initial step length of each outer update, in `(0, 1]`.
    pub damping: f64,
    /// Floor on the relative tolerance of inner Krylov solves.
    pub inner_tolerance: f64,
    /// Switch from lagged-coefficient steps to Newton below this residual
    /// (used only when `Q ≡ I`).
    pub newton_below: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_outer: 200, damping: 1.0, inner_tolerance: 1e-12, newton_below: Some(1e-3) }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !(self.inner_tolerance > 0.0) {
            return Err(Error::InvalidInstance("solver tolerances must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInstance(format!("damping {} outside (0, 1]", self.damping)));
        }
        Ok(())
    }
}

/// Regularization weight `(|ξ|² + δ²)^{(p-2)/2}` for `s = |ξ|²`.
#[inline]
pub fn weight(s: f64, p: f64, delta: f64) -> f64 {
    (s + delta * delta).powf(0.5 * (p - 2.0))
}

#[derive(Clone, Debug)]
pub struct SystemInstance {
    pub p: f64,
    pub delta: f64,
    pub q: RotationField,
    pub omega: TensorField,
    pub f: TensorField,
    pub g: TensorField,
    pub boundary: TensorField,
    pub mask: DomainMask,
    pub form: Form,
}

impl SystemInstance {
    /// Divergence-form instance with `Q ≡ I`, `f = 0`, `G = 0`, `Ω = 0`.
    pub fn homogeneous(mask: DomainMask, boundary: TensorField, p: f64, delta: f64) -> Result<Self> {
        let grid = mask.grid();
        let n = grid.dim();
        let ncomp = boundary.slots();
        let boundary = boundary.reshape(Shape::vector(ncomp))?;
        let inst = Self {
            p,
            delta,
            q: RotationField::identity(grid, ncomp),
            omega: TensorField::zeros(grid, Shape::new(vec![ncomp, ncomp, n])),
            f: TensorField::zeros(grid, Shape::vector(ncomp)),
            g: TensorField::zeros(grid, Shape::matrix(ncomp, n)),
            boundary,
            mask,
            form: Form::Divergence,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn grid(&self) -> Grid {
        self.mask.grid()
    }

    /// Number of components `N`.
    pub fn components(&self) -> usize {
        self.boundary.slots()
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid();
        let n = grid.dim();
        let nc = self.components();
        if !(self.p > 1.0) {
            return Err(Error::InvalidExponent(format!("p = {} must exceed 1", self.p)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidInstance(format!("delta = {} must be non-negative", self.delta)));
        }
        for (name, field, shape) in [
            ("boundary", &self.boundary, Shape::vector(nc)),
            ("f", &self.f, Shape::vector(nc)),
            ("G", &self.g, Shape::matrix(nc, n)),
            ("omega", &self.omega, Shape::new(vec![nc, nc, n])),
            ("Q", self.q.field(), Shape::matrix(nc, nc)),
        ] {
            if field.grid() != grid {
                return Err(Error::InvalidInstance(format!("{name} lives on a different grid")));
            }
            field.expect_shape(&shape)?;
        }
        // rotated instances carry the general coefficient -∇Q + QΩ
        let skew = if self.q.is_identity() { antisymmetry_defect(&self.omega) } else { 0.0 };
        if skew > 1e-12 {
            return Err(Error::InvalidInstance(format!("omega is not antisymmetric (defect {skew:e})")));
        }
        Ok(())
    }

    /// Writes the instance as FLD1 files plus `manifest.txt`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mask = TensorField::from_values(self.grid(), Shape::scalar(), self.mask.weights().to_vec())?;
        let files: [(&str, &TensorField); 6] = [
            ("mask", &mask),
            ("boundary", &self.boundary),
            ("f", &self.f),
            ("G", &self.g),
            ("Q", self.q.field()),
            ("omega", &self.omega),
        ];
        let center: Vec<String> = self.mask.center().iter().map(|c| format!("{c}")).collect();
        let mut manifest = format!(
            "p = {}\ndelta = {}\nform = {}\ncenter = {}\nradius = {}\n",
            self.p,
            self.delta,
            self.form,
            center.join(" "),
            self.mask.radius()
        );
        for (key, field) in files {
            let name = format!("{key}.fld");
            write_field(field, dir.join(&name))?;
            manifest.push_str(&format!("{key} = {name}\n"));
        }
        std::fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = std::fs::read_to_string(dir.join("manifest.txt"))?;
        let mut entries = std::collections::BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config { line: i + 1, msg: format!("expected key = value, got '{line}'") })?;
            let key = k.trim().to_string();
            const KEYS: [&str; 11] =
                ["p", "delta", "form", "center", "radius", "mask", "boundary", "f", "G", "Q", "omega"];
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Config { line: i + 1, msg: format!("unknown key '{key}'") });
            }
            entries.insert(key, v.trim().to_string());
        }
        let get = |k: &str| {
            entries.get(k).ok_or_else(|| Error::Config { line: 0, msg: format!("manifest is missing '{k}'") })
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Config { line: 0, msg: format!("'{k}' is not a number") })
        };
        let p = num("p")?;
        let delta = num("delta")?;
        let radius = num("radius")?;
        let form: Form = get("form")?.parse()?;
        let center = get("center")?
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Config { line: 0, msg: "bad center".into() })?;
        let field = |k: &str| -> Result<TensorField> { read_field(dir.join(get(k)?)) };
        let weights = field("mask")?;
        let grid = weights.grid();
        if center.len() != grid.dim() {
            return Err(Error::Config { line: 0, msg: "center has the wrong dimension".into() });
        }
        let mask = DomainMask::new(grid, weights.into_values(), &center, radius)?;
        let inst = Self {
            p,
            delta,
            q: RotationField::new(field("Q")?)?,
            omega: field("omega")?,
            f: field("f")?,
            g: field("G")?,
            boundary: field("boundary")?,
            mask,
            form,
        };
        inst.validate()?;
        Ok(inst)
    }
}

/// `max |Ω_ij + Ω_ji|` over the lattice.
pub fn antisymmetry_defect(omega: &TensorField) -> f64 {
    let dims = omega.shape().dims();
    if dims.len() < 2 {
        return 0.0;
    }
    let (nc, rest) = (dims[0], dims[2..].iter().product::<usize>());
    let mut worst = 0.0f64;
    for p in 0..omega.grid().len() {
        let w = omega.at(p);
        for i in 0..nc {
            for j in 0..nc {
                for a in 0..rest {
                    worst = worst.max((w[(i * nc + j) * rest + a] + w[(j * nc + i) * rest + a]).abs());
                }
            }
        }
    }
    worst
}

/// Quadrature used by [`energy`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Quadrature {
    /// Spectral gradient, lattice sum weighted by the mask.
    #[default]
    Spectral,
    /// The solver's corner-averaged stencil over cells inside the mask.
    Corner,
}

/// `∫ |∇u|^p` over the mask (the whole torus when `mask` is `None`).
pub fn energy(u: &TensorField, p: f64, mask: Option<&DomainMask>, quad: Quadrature) -> Result<f64> {
    let grid = u.grid();
    match quad {
        Quadrature::Spectral => {
            let du = gradient(u, Scheme::Spectral);
            let norms = du.pointwise_norm();
            let total: f64 = match mask {
                Some(m) => norms.iter().zip(m.weights()).map(|(v, w)| w * v.powf(p)).sum(),
                None => norms.iter().map(|v| v.powf(p)).sum(),
            };
            Ok(total * grid.cell_volume())
        }
        Quadrature::Corner => {
            let full;
            let mask = match mask {
                Some(m) => m,
                None => {
                    full = DomainMask::new(grid, vec![1.0; grid.len()], &[0.5; 3], 0.5)?;
                    &full
                }
            };
            let disc = Discretization::new(mask, u.slots())?;
            Ok(disc.dirichlet_energy(u.values(), p, 0.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ball_mask;
    use std::f64::consts::PI;

    #[test]
    fn energy_of_sine() {
        let g = Grid::new(2, 64).unwrap();
        let u = TensorField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let e = energy(&u, 2.0, None, Quadrature::Spectral).unwrap();
        assert!((e - 2.0 * PI * PI).abs() < 1e-10);
        let e = energy(&u, 2.0, None, Quadrature::Corner).unwrap();
        let exact = 2.0 * PI * PI * ((PI / 64.0).sin() / (PI / 64.0)).powi(2);
        assert!((e - exact).abs() < 1e-10, "{e} {exact}");
    }

    #[test]
    fn energy_constant_and_homogeneity() {
        let g = Grid::new(2, 32).unwrap();
        let mask = ball_mask(g, &[0.5, 0.5], 0.4).unwrap();
        let c = TensorField::constant(g, Shape::scalar(), &[3.0]);
        for q in [Quadrature::Spectral, Quadrature::Corner] {
            assert_eq!(energy(&c, 3.0, Some(&mask), q).unwrap(), 0.0);
            let u = TensorField::from_fn(g, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
            let e1 = energy(&u, 3.0, Some(&mask), q).unwrap();
            let e2 = energy(&u.scale(2.5), 3.0, Some(&mask), q).unwrap();
            assert!((e2 / e1 - 2.5f64.powi(3)).abs() < 1e-12 * 2.5f64.powi(3));
        }
    }

    #[test]
    fn manifest_round_trip() {
        let g = Grid::new(2, 16).unwrap();
        let mask = ball_mask(g, &[0.5, 0.5], 0.4).unwrap();
        let b = TensorField::from_fn(g, |x| x[0] - x[1]);
        let mut inst = SystemInstance::homogeneous(mask, b, 2.0, 1e-4).unwrap();
        inst.f = TensorField::from_fn(g, |x| x[1] * x[1]).reshape(Shape::vector(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        inst.save(dir.path()).unwrap();
        let back = SystemInstance::load(dir.path()).unwrap();
        assert_eq!(back.f, inst.f);
        assert_eq!(back.boundary, inst.boundary);
        assert_eq!(back.mask, inst.mask);
        assert_eq!(back.p, 2.0);
        assert_eq!(back.form, Form::Divergence);

        let text = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        std::fs::write(dir.path().join("manifest.txt"), format!("{text}colour = red\n")).unwrap();
        assert!(matches!(SystemInstance::load(dir.path()), Err(Error::Config { .. })));
    }

    #[test]
    fn rejects_non_antisymmetric_omega() {
        let g = Grid::new(2, 8).unwrap();
        let mask = ball_mask(g, &[0.5, 0.5], 0.4).unwrap();
        let b = TensorField::zeros(g, Shape::vector(2));
        let mut inst = SystemInstance::homogeneous(mask, b, 2.0, 1e-4).unwrap();
        inst.omega.values_mut()[0] = 1.0; // Ω_11 ≠ 0 at the first point
        assert!(inst.validate().is_err());
    }
}
