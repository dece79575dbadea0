//! Small dense/iterative numerical kernels: a Jacobi eigensolver for the
//! node-wise form matrices, a matrix-free BiCGStab solver for the implicit
//! time steps, and a two-parameter linear least-squares fit.
//!
//! Everything here is single-threaded with a fixed iteration order, so a
//! given input always reproduces the same bits.

use crate::error::{Error, Result};

/// Smallest eigenvalue of a small symmetric matrix (row-major, dim x dim),
/// computed with cyclic Jacobi rotations.
pub fn sym_min_eigenvalue(mat: &[f64], dim: usize) -> f64 {
    debug_assert_eq!(mat.len(), dim * dim);
    if dim == 1 {
        return mat[0];
    }
    let mut a = mat.to_vec();
    // Sweep until off-diagonal mass is negligible relative to the diagonal.
    let scale: f64 = a.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..dim {
            for q in (p + 1)..dim {
                off = off.max(a[p * dim + q].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[p * dim + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * dim + p];
                let aqq = a[q * dim + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k * dim + p];
                    let akq = a[k * dim + q];
                    a[k * dim + p] = c * akp - s * akq;
                    a[k * dim + q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p * dim + k];
                    let aqk = a[q * dim + k];
                    a[p * dim + k] = c * apk - s * aqk;
                    a[q * dim + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..dim).map(|i| a[i * dim + i]).fold(f64::INFINITY, f64::min)
}

/// Outcome of an iterative linear solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub residual: f64,
    pub iters: usize,
}

/// Matrix-free BiCGStab for `A x = b`, starting from `x0 = b`.
///
/// Converges to `||b - A x|| <= rtol * ||b||`; accepts a stagnated solve as
/// long as the achieved relative residual is below `accept_tol`, otherwise
/// reports `LinearSolveFailure`.
pub fn bicgstab<F>(
    apply: F,
    b: &[f64],
    rtol: f64,
    accept_tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, SolveStats)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats { residual: 0.0, iters: 0 }));
    }

    let mut x = b.to_vec();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let r0 = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];

    let mut best_x = x.clone();
    let mut best_res = norm2(&r) / bnorm;
    let mut iters = 0;

    while best_res > rtol && iters < max_iters {
        iters += 1;
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            break; // breakdown; fall through to the acceptance check
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        apply(&p, &mut v);
        let r0v = dot(&r0, &v);
        if r0v.abs() < 1e-300 {
            break;
        }
        alpha = rho / r0v;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) / bnorm <= rtol {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            apply(&x, &mut ax);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            let res = norm2(&r) / bnorm;
            if res < best_res {
                best_res = res;
                best_x.copy_from_slice(&x);
            }
            break;
        }
        apply(&s, &mut t);
        let tt = dot(&t, &t);
        if tt < 1e-300 {
            break;
        }
        omega = dot(&t, &s) / tt;
        if omega.abs() < 1e-300 {
            break;
        }
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        let res = norm2(&r) / bnorm;
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
    }

    if best_res <= accept_tol {
        Ok((best_x, SolveStats { residual: best_res, iters }))
    } else {
        Err(Error::LinearSolveFailure { residual: best_res, iters })
    }
}

/// Ordinary least squares for `y ~ a + b * x`; returns `(a, b, rms_residual)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let spread = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    if sxx == 0.0 || (spread.1 - spread.0).abs() < 1e-14 * (1.0 + spread.1.abs()) {
        return Err(Error::DegenerateFit);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (a + b * x);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((a, b, rms))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
