//! Restarted GMRES and preconditioned conjugate gradients on flat vectors,
//! with deterministic inner products.

use crate::error::{Error, Result};
use crate::grid::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    /// Final `‖b - Ax‖ / ‖b‖`.
    pub relative: f64,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Solves `A x = b` from `x = 0` with restarted GMRES(`restart`) and
/// modified Gram-Schmidt. Stops at `‖r‖ ≤ tol ‖b‖` or after `max_iter`
/// inner iterations in total.
pub fn gmres(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, KrylovOutcome) {
    let len = b.len();
    let mut x = vec![0.0; len];
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return (x, KrylovOutcome { iterations: 0, relative: 0.0 });
    }
    let mut total = 0;
    let mut r = b.to_vec();
    let mut rel = 1.0;
    let mut scratch = vec![0.0; len];
    while total < max_iter {
        let beta = norm(&r);
        rel = beta / b_norm;
        if rel <= tol {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..restart {
            if total >= max_iter {
                break;
            }
            let mut w = vec![0.0; len];
            apply(&basis[j], &mut w);
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[i][j] = hij;
                axpy(&mut w, -hij, v);
            }
            let wn = norm(&w);
            h[j + 1][j] = wn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if denom == 0.0 {
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = h[j + 1][j] / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            rel = g[j + 1].abs() / b_norm;
            if rel <= tol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution
        let mut yv = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for l in i + 1..used {
                s -= h[i][l] * yv[l];
            }
            yv[i] = s / h[i][i];
        }
        for (i, c) in yv.iter().enumerate() {
            axpy(&mut x, *c, &basis[i]);
        }
        apply(&x, &mut scratch);
        for i in 0..len {
            r[i] = b[i] - scratch[i];
        }
        rel = norm(&r) / b_norm;
        if rel <= tol || used == 0 {
            break;
        }
    }
    (x, KrylovOutcome { iterations: total, relative: rel })
}

/// Preconditioned conjugate gradients for a symmetric positive definite `A`.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precondition: impl Fn(&mut [f64]),
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, KrylovOutcome)> {
    let len = b.len();
    let mut x = vec![0.0; len];
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((x, KrylovOutcome { iterations: 0, relative: 0.0 }));
    }
    let mut r = b.to_vec();
    let mut z = r.clone();
    precondition(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; len];
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rel = norm(&r) / b_norm;
        if rel <= tol {
            return Ok((x, KrylovOutcome { iterations: it, relative: rel }));
        }
        z.copy_from_slice(&r);
        precondition(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..len {
            p[i] = z[i] + beta * p[i];
        }
    }
    let relative = norm(&r) / b_norm;
    Err(Error::LinearSolveStall { relative, iterations: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(x: &[f64], out: &mut [f64], diag: f64) {
        let n = x.len();
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            out[i] = diag * x[i] - l - r;
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 200;
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let apply = |x: &[f64], out: &mut [f64]| {
            tridiag(x, out, 3.0);
            for i in 1..x.len() {
                out[i] += 0.5 * x[i - 1];
            }
        };
        let (x, out) = gmres(apply, &b, 1e-10, 20, 500);
        assert!(out.relative <= 1e-10);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn gmres_handles_indefinite_diagonal() {
        let d: Vec<f64> = (0..50).map(|i| if i == 7 { -2.0 } else { 1.0 + i as f64 }).collect();
        let b = vec![1.0; 50];
        let (x, out) = gmres(|v, o| o.iter_mut().zip(v).zip(&d).for_each(|((o, v), d)| *o = d * v), &b, 1e-12, 60, 60);
        assert!(out.relative < 1e-12);
        assert!((x[7] + 0.5).abs() < 1e-10);
    }

    #[test]
    fn pcg_with_jacobi() {
        let n = 300;
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
        let (x, out) =
            pcg(|v, o| tridiag(v, o, 2.5), |z| z.iter_mut().for_each(|v| *v /= 2.5), &b, 1e-12, 500).unwrap();
        assert!(out.relative <= 1e-12);
        let mut ax = vec![0.0; n];
        tridiag(&x, &mut ax, 2.5);
        assert!(ax.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-9));
        assert!(matches!(pcg(|v, o| tridiag(v, o, 2.5), |_| {}, &b, 1e-30, 3), Err(Error::LinearSolveStall { .. })));
    }
}
