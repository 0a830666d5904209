//! Matrix-free Krylov solvers.

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    /// Final `‖b - Ax‖ / ‖b‖`.
    pub relative_residual: f64,
}

/// Conjugate gradients for a symmetric positive definite operator, starting
/// from `x`. Stops when `‖r‖ ≤ tol ‖b‖`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(KrylovStats { iterations: it, relative_residual: rr.sqrt() / bnorm });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NoConvergence { iterations: it, residual: rr.sqrt() / bnorm });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let res = rr.sqrt() / bnorm;
    if res <= tol {
        Ok(KrylovStats { iterations: max_iter, relative_residual: res })
    } else {
        Err(Error::NoConvergence { iterations: max_iter, residual: res })
    }
}

/// BiCGSTAB for general nonsingular operators.
pub fn bicgstab(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut tmp = vec![0.0; n];
    apply(x, &mut tmp);
    let mut r: Vec<f64> = b.iter().zip(&tmp).map(|(b, a)| b - a).collect();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_iter {
        let res = norm(&r);
        if res <= tol * bnorm {
            return Ok(KrylovStats { iterations: it, relative_residual: res / bnorm });
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::NoConvergence { iterations: it, residual: res / bnorm });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        apply(&p, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            return Ok(KrylovStats { iterations: it + 1, relative_residual: norm(&s) / bnorm });
        }
        apply(&s, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
    }
    let res = norm(&r) / bnorm;
    Err(Error::NoConvergence { iterations: max_iter, residual: res })
}
