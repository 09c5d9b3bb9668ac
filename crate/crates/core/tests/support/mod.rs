//! Reference solver for the grid problem, written from scratch.
//!
//! The grid spline is parameterized by the Dirac weights `a` of its
//! innovation at the nodes `2πp/P`. With the mean fitted exactly the
//! problem is
//!
//! ```text
//! min ½‖Φa − ỹ‖² + λ‖a‖₁   subject to   Σ a = 0
//! ```
//!
//! where row pair `k` of `Φ` holds the real and imaginary parts of
//! `e^{−ikx_p} / (2π (ik)^M)`. Its dual is the projection of `ỹ` onto
//! `{θ : (φ_i − φ_j)ᵀθ ≤ 2λ for all i, j}` and the optimal value is
//! `½‖ỹ‖² − ½ dist(ỹ, ·)²`. The projection is computed exactly by a primal
//! active-set method; a FISTA solve of the primal is kept as a cross-check.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::TAU;

/// Real `2K_c × P` matrix.
pub fn forward_matrix(order: u32, p: usize, cutoff: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(2 * cutoff);
    for k in 1..=cutoff {
        let kf = k as f64;
        let ikm = Complex64::new(0.0, kf).powu(order);
        let entries: Vec<Complex64> = (0..p)
            .map(|j| Complex64::from_polar(1.0, -kf * TAU * j as f64 / p as f64) / (ikm * TAU))
            .collect();
        rows.push(entries.iter().map(|z| z.re).collect());
        rows.push(entries.iter().map(|z| z.im).collect());
    }
    rows
}

pub fn data_vector(coeffs: &[Complex64]) -> Vec<f64> {
    coeffs.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn apply(phi: &[Vec<f64>], a: &[f64]) -> Vec<f64> {
    phi.iter().map(|row| row.iter().zip(a).map(|(r, x)| r * x).sum()).collect()
}

fn apply_t(phi: &[Vec<f64>], r: &[f64]) -> Vec<f64> {
    let n = phi[0].len();
    (0..n).map(|j| phi.iter().zip(r).map(|(row, ri)| row[j] * ri).sum()).collect()
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn primal(phi: &[Vec<f64>], y: &[f64], lambda: f64, a: &[f64]) -> f64 {
    let r: Vec<f64> = apply(phi, a).iter().zip(y).map(|(u, v)| u - v).collect();
    0.5 * sq(&r) + lambda * a.iter().map(|x| x.abs()).sum::<f64>()
}

/// Optimal value of the grid problem (mean term excluded).
pub fn optimal_value(order: u32, p: usize, coeffs: &[Complex64], lambda: f64) -> f64 {
    let phi = forward_matrix(order, p, coeffs.len());
    let y = data_vector(coeffs);
    let theta = project(&phi, &y, lambda);
    let ty: f64 = theta.iter().zip(&y).map(|(a, b)| a * b).sum();
    ty - 0.5 * sq(&theta)
}

/// Projection of `y` onto the dual polytope.
pub fn project(phi: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let n = y.len();
    let p = phi[0].len();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| phi.iter().map(|row| row[j]).collect()).collect();
    let mut normals: Vec<Vec<f64>> = Vec::new();
    for i in 0..p {
        for j in 0..p {
            if i != j {
                normals.push(cols[i].iter().zip(&cols[j]).map(|(a, b)| a - b).collect());
            }
        }
    }
    let b = 2.0 * lambda;
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(a, b)| a * b).sum() };
    let scale = normals.iter().map(|a| sq(a).sqrt()).fold(0.0, f64::max) * sq(y).sqrt() + b;
    let feas_tol = 1e-14 * scale;

    let mut theta = vec![0.0; n];
    let mut work: Vec<usize> = Vec::new();
    for _ in 0..10_000 {
        // equality-constrained projection onto the working set
        let m = work.len();
        let (target, nu) = if m == 0 {
            (y.to_vec(), Vec::new())
        } else {
            let a = DMatrix::from_fn(m, n, |r, c| normals[work[r]][c]);
            let rhs = DVector::from_iterator(m, work.iter().map(|&w| dot(&normals[w], y) - b));
            let nu = (&a * a.transpose()).lu().solve(&rhs).expect("working set is independent");
            let t: Vec<f64> = (0..n).map(|c| y[c] - (0..m).map(|r| a[(r, c)] * nu[r]).sum::<f64>()).collect();
            (t, nu.iter().copied().collect::<Vec<f64>>())
        };
        let step: Vec<f64> = target.iter().zip(&theta).map(|(t, x)| t - x).collect();
        if sq(&step).sqrt() <= 1e-15 * (1.0 + sq(y).sqrt()) {
            match (0..m).min_by(|&i, &j| nu[i].total_cmp(&nu[j])) {
                Some(i) if nu[i] < 0.0 => {
                    work.remove(i);
                    continue;
                }
                _ => return theta,
            }
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for (idx, a) in normals.iter().enumerate() {
            if work.contains(&idx) {
                continue;
            }
            let ap = dot(a, &step);
            if ap > 0.0 {
                let room = (b - dot(a, &theta)).max(0.0);
                if room < alpha * ap - feas_tol {
                    alpha = room / ap;
                    blocking = Some(idx);
                }
            }
        }
        theta.iter_mut().zip(&step).for_each(|(x, s)| *x += alpha * s);
        if let Some(idx) = blocking {
            work.push(idx);
        }
    }
    panic!("active-set projection did not terminate");
}

/// `argmin ½‖a − v‖² + τ‖a‖₁` over `Σ a = 0`: soft thresholding of `v − μ`
/// with the shift `μ` found by bisection.
pub fn prox_zero_sum(v: &[f64], tau: f64) -> Vec<f64> {
    let soft = |mu: f64| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let u = x - mu;
                u.signum() * (u.abs() - tau).max(0.0)
            })
            .collect()
    };
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - tau;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + tau;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if soft(mid).iter().sum::<f64>() > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut a = soft(0.5 * (lo + hi));
    // the sum is piecewise linear in μ; spread what bisection leaves
    let s: f64 = a.iter().sum();
    let active: Vec<usize> = (0..a.len()).filter(|&i| a[i] != 0.0).collect();
    for &i in &active {
        a[i] -= s / active.len() as f64;
    }
    a
}

/// FISTA with adaptive restart on the primal; returns the weights and
/// objective after `iters` iterations.
pub fn fista(order: u32, p: usize, coeffs: &[Complex64], lambda: f64, iters: usize) -> (Vec<f64>, f64) {
    let phi = forward_matrix(order, p, coeffs.len());
    let y = data_vector(coeffs);
    let mut v = vec![1.0; p];
    v[0] = 2.0;
    let mut lip = 0.0;
    for _ in 0..500 {
        let w = apply_t(&phi, &apply(&phi, &v));
        let n = sq(&w).sqrt();
        lip = n / sq(&v).sqrt();
        v = w.iter().map(|x| x / n).collect();
    }
    let step = 1.0 / (1.01 * lip);
    let mut a = vec![0.0; p];
    let mut z = a.clone();
    let mut t: f64 = 1.0;
    let mut f_prev = primal(&phi, &y, lambda, &a);
    for _ in 0..iters {
        let r: Vec<f64> = apply(&phi, &z).iter().zip(&y).map(|(u, w)| u - w).collect();
        let g = apply_t(&phi, &r);
        let arg: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
        let a_new = prox_zero_sum(&arg, step * lambda);
        let f = primal(&phi, &y, lambda, &a_new);
        if f > f_prev {
            t = 1.0;
            z = a.clone();
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = a_new.iter().zip(&a).map(|(n, o)| n + (t - 1.0) / t_new * (n - o)).collect();
        a = a_new;
        t = t_new;
        f_prev = f;
    }
    (a, f_prev)
}
