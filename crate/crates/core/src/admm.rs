//! ADMM for the grid-restricted problem
//!
//! ```text
//! min_c ½‖H c − y‖² + λ (P/2π)^{M−1} ‖d ∗ c‖₁
//! ```
//!
//! with the splitting `z = d ∗ c`. Both `Re(HᴴH)` and `DᵀD` are circulant, so
//! the quadratic subproblem is diagonal in the DFT basis.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::bspline::{
    cyclic_convolve, cyclic_correlate, d_filter_dft, GridSpec, SplineCoefficients, SystemMatrix,
};
use crate::error::{Error, Result};
use crate::fourier::MeasurementVector;
use crate::refit::{best_offset, SupportProblem};

/// How the `c`-update linear system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolve {
    /// FFT diagonalization, dense Cholesky when `P < 2K_c + 1`.
    #[default]
    Auto,
    Fft,
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmParams {
    /// Augmented-Lagrangian parameter; `None` uses `λ(P/2π)^{M−1}`.
    pub rho: Option<f64>,
    pub max_iters: usize,
    /// Absolute primal tolerance (per √P).
    pub primal_tol: f64,
    /// Absolute dual tolerance (per √P).
    pub dual_tol: f64,
    pub rel_tol: f64,
    pub over_relaxation: f64,
    /// Residual balancing of `ρ` every few iterations.
    pub adaptive_rho: bool,
    /// Finish with an exact solve over the grid nodes when the iterate
    /// fails the optimality certificate.
    pub polish: bool,
    pub linear_solve: LinearSolve,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            rho: None,
            max_iters: 50_000,
            primal_tol: 1e-9,
            dual_tol: 1e-9,
            rel_tol: 1e-7,
            over_relaxation: 1.8,
            adaptive_rho: true,
            polish: true,
            linear_solve: LinearSolve::Auto,
        }
    }
}

impl AdmmParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if let Some(r) = self.rho {
            if !pos(r) {
                return Err(Error::invalid("rho must be positive"));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !pos(self.primal_tol) || !pos(self.dual_tol) || self.rel_tol.is_nan() || self.rel_tol < 0.0 {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if !(1.0..=1.9).contains(&self.over_relaxation) {
            return Err(Error::invalid("over_relaxation must lie in [1, 1.9]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdmmResult {
    pub c_star: SplineCoefficients,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    /// The dense solver was used because the grid is too coarse for the FFT path.
    pub dense_fallback: bool,
    /// The returned point comes from the finishing solve.
    pub polished: bool,
}

/// Componentwise soft thresholding.
pub fn prox_l1(v: &[f64], tau: f64) -> Vec<f64> {
    v.iter().map(|&x| x.signum() * (x.abs() - tau).max(0.0)).collect()
}

fn check_cutoff(grid: &GridSpec, y: &MeasurementVector) -> Result<()> {
    if grid.cutoff != y.cutoff() {
        return Err(Error::DimensionMismatch { expected: grid.cutoff, got: y.cutoff() });
    }
    Ok(())
}

fn objective_with(h: &SystemMatrix, c: &[f64], y: &MeasurementVector, lambda: f64) -> Result<f64> {
    let grid = h.grid();
    let r = h.apply(c)?.checked_sub(y)?;
    let tv: f64 = cyclic_convolve(grid.order, c).iter().map(|v| v.abs()).sum();
    Ok(0.5 * r.norm_sq() + lambda * grid.innovation_scale() * tv)
}

/// `½‖H c − y‖² + λ(P/2π)^{M−1}‖d ∗ c‖₁`.
pub fn objective(c: &SplineCoefficients, y: &MeasurementVector, lambda: f64) -> Result<f64> {
    check_cutoff(c.grid(), y)?;
    objective_with(&SystemMatrix::new(*c.grid()), c.values(), y, lambda)
}

/// `H c*`.
pub fn solution_measurement(result: &AdmmResult) -> MeasurementVector {
    SystemMatrix::new(*result.c_star.grid())
        .apply(result.c_star.values())
        .expect("coefficients match their grid")
}

/// Dual vector `s` on the grid for the point `c`, and the offending
/// constant mode of the gradient.
///
/// `s` solves `Dᵀ s = −Re(Hᴴ(Hc − y)) / μ` and is unique up to adding a
/// constant; the constant is chosen to minimize [`certificate_violation`].
pub fn dual_certificate(c: &SplineCoefficients, y: &MeasurementVector, lambda: f64) -> Result<(Vec<f64>, f64)> {
    check_cutoff(c.grid(), y)?;
    let grid = *c.grid();
    let p = grid.grid_points;
    let h = SystemMatrix::new(grid);
    let mu = lambda * grid.innovation_scale();
    let r = h.apply(c.values())?.checked_sub(y)?;
    let g = h.adjoint_real(&r)?;
    let g_mean = g.iter().sum::<f64>() / p as f64;

    let mut buf: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    h.forward_fft().process(&mut buf);
    let dft = d_filter_dft(grid.order, p);
    buf[0] = Complex64::new(0.0, 0.0);
    for j in 1..p {
        buf[j] = -buf[j] / (mu * dft[j].conj());
    }
    h.inverse_fft().process(&mut buf);
    let mut s: Vec<f64> = buf.iter().map(|v| v.re / p as f64).collect();

    let v = cyclic_convolve(grid.order, c.values());
    let signs = support_signs(&v);
    let (t, _) = best_offset(&s, &signs);
    s.iter_mut().for_each(|x| *x += t);
    Ok((s, g_mean / mu))
}

fn support_signs(v: &[f64]) -> Vec<f64> {
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.iter().map(|x| if vmax > 0.0 && x.abs() > 1e-9 * vmax { x.signum() } else { 0.0 }).collect()
}

/// Distance from optimality in dual units: entries of [`dual_certificate`]
/// on the support of `d ∗ c` must equal its sign, the rest must have
/// magnitude ≤ 1. Zero means `c` is optimal.
pub fn certificate_violation(c: &SplineCoefficients, y: &MeasurementVector, lambda: f64) -> Result<f64> {
    let (s, mean_part) = dual_certificate(c, y, lambda)?;
    let v = cyclic_convolve(c.grid().order, c.values());
    let signs = support_signs(&v);
    Ok(best_offset(&s, &signs).1 + mean_part.abs())
}

enum Solver {
    Fft {
        h: SystemMatrix,
        normal: Vec<f64>,
        d2: Vec<f64>,
    },
    Dense {
        normal: DMatrix<f64>,
        dtd: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
    },
}

impl Solver {
    fn new(h: &SystemMatrix, rho: f64, dense: bool) -> Self {
        let grid = h.grid();
        let p = grid.grid_points;
        if !dense {
            let d2 = d_filter_dft(grid.order, p).iter().map(|d| d.norm_sqr()).collect();
            return Solver::Fft { h: h.clone(), normal: h.normal_eigenvalues(), d2 };
        }
        let rows = h.dense();
        let normal = DMatrix::from_fn(p, p, |l, m| rows.iter().map(|r| (r[l].conj() * r[m]).re).sum());
        let mut dtd = DMatrix::zeros(p, p);
        for m in 0..p {
            let mut e = vec![0.0; p];
            e[m] = 1.0;
            let col = cyclic_correlate(grid.order, &cyclic_convolve(grid.order, &e));
            dtd.set_column(m, &DVector::from_vec(col));
        }
        let chol = Self::factor(&normal, &dtd, rho);
        Solver::Dense { normal, dtd, chol }
    }

    fn factor(normal: &DMatrix<f64>, dtd: &DMatrix<f64>, rho: f64) -> Cholesky<f64, Dyn> {
        Cholesky::new(normal + dtd * rho).expect("normal matrix plus ρDᵀD is positive definite")
    }

    fn set_rho(&mut self, rho: f64) {
        if let Solver::Dense { normal, dtd, chol } = self {
            *chol = Self::factor(normal, dtd, rho);
        }
    }

    fn solve(&self, rhs: &[f64], rho: f64) -> Vec<f64> {
        match self {
            Solver::Fft { h, normal, d2 } => {
                let p = rhs.len();
                let mut buf: Vec<Complex64> = rhs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                h.forward_fft().process(&mut buf);
                for j in 0..p {
                    buf[j] /= normal[j] + rho * d2[j];
                }
                h.inverse_fft().process(&mut buf);
                buf.iter().map(|v| v.re / p as f64).collect()
            }
            Solver::Dense { chol, .. } => chol.solve(&DVector::from_column_slice(rhs)).iter().copied().collect(),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve the grid problem for `y` on `grid`.
pub fn solve_discrete(
    y: &MeasurementVector,
    grid: &GridSpec,
    lambda: f64,
    params: &AdmmParams,
    warm_start: Option<&SplineCoefficients>,
) -> Result<AdmmResult> {
    check_cutoff(grid, y)?;
    params.validate()?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    if let Some(w) = warm_start {
        if w.grid() != grid {
            return Err(Error::invalid("warm start lives on a different grid"));
        }
    }
    let grid = *grid;
    let p = grid.grid_points;
    let order = grid.order;
    let h = SystemMatrix::new(grid);
    let mu = lambda * grid.innovation_scale();
    let mut rho = params.rho.unwrap_or(mu);
    let dense = match params.linear_solve {
        LinearSolve::Auto => !grid.is_unaliased(),
        LinearSolve::Fft => false,
        LinearSolve::Dense => true,
    };
    let dense_fallback = dense && params.linear_solve == LinearSolve::Auto;
    let mut solver = Solver::new(&h, rho, dense);

    let b = h.adjoint_real(y)?;
    let mut c = warm_start.map_or_else(|| vec![0.0; p], |w| w.values().to_vec());
    let mut z = cyclic_convolve(order, &c);
    let mut u = vec![0.0; p];
    let alpha = params.over_relaxation;
    let sqrt_p = (p as f64).sqrt();

    let mut iterations = 0;
    let mut converged = false;
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
    for it in 0..params.max_iters {
        iterations = it + 1;
        let zu: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a - b).collect();
        let rhs: Vec<f64> = b.iter().zip(cyclic_correlate(order, &zu)).map(|(bi, v)| bi + rho * v).collect();
        c = solver.solve(&rhs, rho);
        let dc = cyclic_convolve(order, &c);
        let relaxed: Vec<f64> = dc.iter().zip(&z).map(|(d, zo)| alpha * d + (1.0 - alpha) * zo).collect();
        let arg: Vec<f64> = relaxed.iter().zip(&u).map(|(a, b)| a + b).collect();
        let z_new = prox_l1(&arg, mu / rho);
        for i in 0..p {
            u[i] += relaxed[i] - z_new[i];
        }
        let dz: Vec<f64> = z_new.iter().zip(&z).map(|(a, b)| a - b).collect();
        r_norm = norm(&dc.iter().zip(&z_new).map(|(a, b)| a - b).collect::<Vec<_>>());
        s_norm = rho * norm(&cyclic_correlate(order, &dz));
        z = z_new;

        let eps_pri = sqrt_p * params.primal_tol + params.rel_tol * norm(&dc).max(norm(&z));
        let eps_dual = sqrt_p * params.dual_tol + params.rel_tol * rho * norm(&cyclic_correlate(order, &u));
        if r_norm <= eps_pri && s_norm <= eps_dual {
            converged = true;
            break;
        }
        if params.adaptive_rho && it % 10 == 9 {
            let scale = if r_norm > 10.0 * s_norm {
                2.0
            } else if s_norm > 10.0 * r_norm {
                0.5
            } else {
                1.0
            };
            if scale != 1.0 {
                rho *= scale;
                u.iter_mut().for_each(|v| *v /= scale);
                solver.set_rho(rho);
            }
        }
    }

    let mut c_star = SplineCoefficients::new(grid, c)?;
    let mut obj = objective_with(&h, c_star.values(), y, lambda)?;
    let mut polished = false;
    if params.polish {
        let before = certificate_violation(&c_star, y, lambda)?;
        if before > CERTIFICATE_TOL {
            let (c_pol, violation) = finish_on_grid(&grid, y, lambda)?;
            let obj_pol = objective_with(&h, c_pol.values(), y, lambda)?;
            if violation < before || obj_pol < obj {
                c_star = c_pol;
                obj = obj_pol;
                polished = true;
                converged = converged || violation <= CERTIFICATE_TOL;
            }
        }
    }
    Ok(AdmmResult {
        c_star,
        objective: obj,
        iterations,
        primal_residual: r_norm,
        dual_residual: s_norm,
        converged,
        dense_fallback,
        polished,
    })
}

/// Optimality-certificate violation below which a point counts as a solution.
pub const CERTIFICATE_TOL: f64 = 1e-6;

/// Exact solve over the innovation weights at all grid nodes.
fn finish_on_grid(grid: &GridSpec, y: &MeasurementVector, lambda: f64) -> Result<(SplineCoefficients, f64)> {
    let nodes: Vec<f64> = (0..grid.grid_points).map(|i| grid.node(i)).collect();
    let sol = SupportProblem::new(&nodes, grid.order, y).solve_l1(lambda);
    let c = SplineCoefficients::from_innovation(*grid, y.mean(), &sol.weights)?;
    Ok((c, sol.violation))
}
