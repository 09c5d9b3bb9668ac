//! Amplitude fitting on a fixed set of knot locations.
//!
//! With locations `x_1..x_n` fixed, the zero-mean part of the measurements
//! is linear in the Dirac weights, `ν_L(Σ aᵢ δ_{xᵢ}) = Φ a`. This module
//! solves
//!
//! ```text
//! min_a ½‖Φ a − ỹ‖² + λ‖a‖₁   subject to   Σ aᵢ = 0
//! ```
//!
//! either exactly for a fixed sign pattern (a linear KKT system) or through
//! its dual followed by sign-pattern polishing.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::fourier::{ik_pow, MeasurementVector, DIRAC_STREAM_COEFF};

/// Relative singular-value cutoff for the minimum-norm fixed-sign solve.
const RANK_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub(crate) struct SupportProblem {
    /// `2K_c × n`, real and imaginary parts of each frequency stacked.
    phi: DMatrix<f64>,
    target: DVector<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct SupportSolution {
    pub weights: Vec<f64>,
    pub rank_deficient: bool,
}

impl SupportProblem {
    pub fn new(locations: &[f64], order: u32, data: &MeasurementVector) -> Self {
        let kc = data.cutoff();
        let n = locations.len();
        let mut phi = DMatrix::zeros(2 * kc, n);
        for k in 1..=kc {
            let denom = ik_pow(k as f64, order);
            for (i, &x) in locations.iter().enumerate() {
                let v = Complex64::from_polar(DIRAC_STREAM_COEFF, -(k as f64) * x) / denom;
                phi[(2 * (k - 1), i)] = v.re;
                phi[(2 * (k - 1) + 1, i)] = v.im;
            }
        }
        let target = DVector::from_iterator(
            2 * kc,
            data.coeffs().iter().flat_map(|c| [c.re, c.im]),
        );
        Self { phi, target }
    }

    pub fn len(&self) -> usize {
        self.phi.ncols()
    }

    pub fn fidelity(&self, a: &[f64]) -> f64 {
        let r = &self.phi * DVector::from_column_slice(a) - &self.target;
        0.5 * r.norm_squared()
    }

    pub fn objective(&self, a: &[f64], lambda: f64) -> f64 {
        self.fidelity(a) + lambda * a.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Solve the equality-constrained problem with `‖a‖₁` replaced by
    /// `Σ sᵢ aᵢ` (`signs = None` gives plain least squares with `Σ a = 0`).
    /// Rank-deficient systems get the minimum-norm solution.
    pub fn solve_signed(&self, signs: Option<&[f64]>, lambda: f64) -> SupportSolution {
        let n = self.len();
        if n < 2 {
            return SupportSolution { weights: vec![0.0; n], rank_deficient: false };
        }
        // a = N b with a_last = −Σ b; B = Φ N keeps the conditioning of Φ
        let last = n - 1;
        let b_mat = DMatrix::from_fn(self.phi.nrows(), last, |r, j| self.phi[(r, j)] - self.phi[(r, last)]);
        let q = DVector::from_fn(last, |j, _| signs.map_or(0.0, |s| lambda * (s[j] - s[last])));
        let svd = b_mat.svd(true, true);
        let (u, v_t) = (svd.u.as_ref().expect("computed"), svd.v_t.as_ref().expect("computed"));
        let smax = svd.singular_values.max();
        let eps = RANK_TOL * smax.max(f64::MIN_POSITIVE);
        let mut b = DVector::zeros(last);
        let mut rank = 0;
        for (i, &sv) in svd.singular_values.iter().enumerate() {
            if sv <= eps {
                continue;
            }
            rank += 1;
            let vi = v_t.row(i).transpose();
            let coef = u.column(i).dot(&self.target) / sv - vi.dot(&q) / (sv * sv);
            b += vi * coef;
        }
        let mut weights: Vec<f64> = b.iter().copied().collect();
        weights.push(-b.sum());
        SupportSolution { weights, rank_deficient: rank < last }
    }

    /// `Φᵀ(Φa − ỹ)`.
    pub fn gradient(&self, a: &[f64]) -> Vec<f64> {
        let r = &self.phi * DVector::from_column_slice(a) - &self.target;
        (self.phi.transpose() * r).iter().copied().collect()
    }

    /// Largest violation of the optimality conditions at `a`, in units of `λ`.
    pub fn certificate_violation(&self, a: &[f64], lambda: f64) -> f64 {
        let s: Vec<f64> = self.gradient(a).iter().map(|g| -g / lambda).collect();
        let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let signs: Vec<f64> = a.iter().map(|v| if v.abs() > 1e-9 * amax { v.signum() } else { 0.0 }).collect();
        best_offset(&s, &signs).1
    }

    /// Iteratively solve the sign-fixed problem, removing entries whose
    /// sign flips. Returns the result only if it is sign-consistent.
    pub fn polish(&self, start: &[f64], lambda: f64) -> Option<SupportSolution> {
        let mut active: Vec<usize> = (0..self.len()).filter(|&i| start[i] != 0.0).collect();
        let mut signs: Vec<f64> = active.iter().map(|&i| start[i].signum()).collect();
        for _ in 0..8 {
            if active.is_empty() {
                return Some(SupportSolution { weights: vec![0.0; self.len()], rank_deficient: false });
            }
            let sub = self.restrict(&active);
            let sol = sub.solve_signed(Some(&signs), lambda);
            let flipped: Vec<bool> = sol.weights.iter().zip(&signs).map(|(w, s)| w * s < 0.0).collect();
            if !flipped.iter().any(|f| *f) {
                let mut full = vec![0.0; self.len()];
                for (&i, &w) in active.iter().zip(&sol.weights) {
                    full[i] = w;
                }
                return Some(SupportSolution { weights: full, rank_deficient: sol.rank_deficient });
            }
            let keep: Vec<usize> = (0..active.len()).filter(|&j| !flipped[j]).collect();
            active = keep.iter().map(|&j| active[j]).collect();
            signs = keep.iter().map(|&j| signs[j]).collect();
        }
        None
    }

    fn restrict(&self, cols: &[usize]) -> Self {
        let phi = DMatrix::from_fn(self.phi.nrows(), cols.len(), |r, c| self.phi[(r, cols[c])]);
        Self { phi, target: self.target.clone() }
    }

    /// ℓ1-regularized fit.
    ///
    /// The dual, `max_q ỹᵀq − ½‖q‖²` over `|Φᵢᵀq − ν| ≤ λ`, has only
    /// `2K_c + 1` unknowns and is solved by a primal-dual interior-point
    /// method. The dual fixes the residual `Φa − ỹ = −q` and the admissible
    /// signs, so the weights follow from a sign-constrained least-squares
    /// fit on the near-active locations and a final fixed-sign solve.
    pub fn solve_l1(&self, lambda: f64) -> L1Solution {
        let n = self.len();
        if n < 2 {
            return L1Solution { weights: vec![0.0; n], violation: 0.0 };
        }
        let dual = self.dual_interior_point(lambda);
        let mut best = L1Solution {
            violation: self.certificate_violation(&dual.weights, lambda),
            weights: dual.weights.clone(),
        };
        let rows = self.phi.nrows();
        let p = DVector::from_column_slice(&dual.x.as_slice()[..rows]);
        let nu = dual.x[rows];
        let eta: Vec<f64> = (self.phi.transpose() * &p).iter().map(|v| v - nu).collect();
        let fit_target = &self.target - &p * lambda;
        for delta in [1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3] {
            if best.violation <= 1e-9 {
                break;
            }
            let cand: Vec<usize> = (0..n).filter(|&i| eta[i].abs() >= 1.0 - delta).collect();
            if cand.len() < 2 {
                continue;
            }
            let col_scale = (0..n).map(|i| self.phi.column(i).norm()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
            let a = DMatrix::from_fn(rows + 1, cand.len(), |r, j| {
                let sg = eta[cand[j]].signum();
                if r < rows {
                    sg * self.phi[(r, cand[j])]
                } else {
                    sg * col_scale
                }
            });
            let mut b = DVector::zeros(rows + 1);
            b.rows_mut(0, rows).copy_from(&fit_target);
            let mag = nnls(&a, &b);
            let mut start = vec![0.0; n];
            for (j, &i) in cand.iter().enumerate() {
                start[i] = eta[i].signum() * mag[j];
            }
            for w in [self.polish(&start, lambda).map(|p| p.weights), Some(start)].into_iter().flatten() {
                let violation = self.certificate_violation(&w, lambda);
                if violation < best.violation {
                    best = L1Solution { weights: w, violation };
                }
            }
        }
        let mut out = self.refine(best, lambda);
        // restore the zero-sum constraint lost to NNLS rounding
        let drift: f64 = out.weights.iter().sum();
        if let Some(k) = (0..n).max_by(|&i, &j| out.weights[i].abs().total_cmp(&out.weights[j].abs())) {
            out.weights[k] -= drift;
        }
        out
    }

    /// Feature-sign search from `best`: add the worst violator, re-solve
    /// with fixed signs and line-search over sign changes, while the
    /// objective decreases.
    fn refine(&self, mut best: L1Solution, lambda: f64) -> L1Solution {
        let n = self.len();
        let mut a = best.weights.clone();
        let mut obj = self.objective(&a, lambda);
        for _ in 0..8 * self.phi.nrows() + 16 {
            let s: Vec<f64> = self.gradient(&a).iter().map(|g| -g / lambda).collect();
            let signs: Vec<f64> = a.iter().map(|v| if *v != 0.0 { v.signum() } else { 0.0 }).collect();
            let (t, violation) = best_offset(&s, &signs);
            if violation <= 1e-9 {
                break;
            }
            let mut theta = signs.clone();
            let offsets = (0..n).filter(|&i| signs[i] != 0.0).map(|i| signs[i] - s[i]);
            let (lo, hi) = offsets.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            let support_optimal = hi - lo <= 1e-7;
            let t = if lo.is_finite() { 0.5 * (lo + hi) } else { t };
            if !support_optimal {
            } else if let Some(i) = (0..n)
                .filter(|&i| signs[i] == 0.0 && (s[i] + t).abs() > 1.0)
                .max_by(|&i, &j| (s[i] + t).abs().total_cmp(&(s[j] + t).abs()))
            {
                theta[i] = (s[i] + t).signum();
            }
            let mut improved = false;
            for _ in 0..4 * n + 8 {
                let active: Vec<usize> = (0..n).filter(|&i| theta[i] != 0.0).collect();
                if active.len() < 2 {
                    break;
                }
                let th: Vec<f64> = active.iter().map(|&i| theta[i]).collect();
                let sol = self.restrict(&active).solve_signed(Some(&th), lambda);
                let mut target = vec![0.0; n];
                for (&i, &w) in active.iter().zip(&sol.weights) {
                    target[i] = w;
                }
                let mut taus = vec![1.0];
                for &i in &active {
                    if a[i] != 0.0 && target[i] * a[i] < 0.0 {
                        taus.push(a[i] / (a[i] - target[i]));
                    }
                }
                let (mut cand_best, mut cand_obj) = (None, obj);
                for &tau in &taus {
                    let mut c: Vec<f64> = a.iter().zip(&target).map(|(x, y)| x + tau * (y - x)).collect();
                    for &i in &active {
                        if tau < 1.0 && a[i] != 0.0 && (c[i] / a[i]).abs() < 1e-12 {
                            c[i] = 0.0;
                        }
                    }
                    let o = self.objective(&c, lambda);
                    if o < cand_obj {
                        cand_obj = o;
                        cand_best = Some((tau, c));
                    }
                }
                let Some((tau, c)) = cand_best else { break };
                improved = true;
                a = c;
                obj = cand_obj;
                let consistent = active.iter().all(|&i| a[i] * theta[i] >= 0.0);
                theta = a.iter().map(|v| if *v != 0.0 { v.signum() } else { 0.0 }).collect();
                if tau == 1.0 && consistent {
                    break;
                }
            }
            if !improved {
                break;
            }
        }
        let violation = self.certificate_violation(&a, lambda);
        if violation < best.violation {
            best = L1Solution { weights: a, violation };
        }
        best
    }

    /// Weights from the dual problem, scaled so that `q = λp` and the
    /// constraints read `|Φᵢᵀp − ν| ≤ 1`.
    fn dual_interior_point(&self, lambda: f64) -> DualSolution {
        let n = self.len();
        let rows = self.phi.nrows();
        let d = rows + 1;
        // G x = Φᵀp − ν for x = (p, ν)
        let g = DMatrix::from_fn(n, d, |i, j| if j < rows { self.phi[(j, i)] } else { -1.0 });
        let gt = g.transpose();
        let mut c = DVector::zeros(d);
        c.rows_mut(0, rows).copy_from(&(-&self.target));
        let q_diag = DVector::from_fn(d, |j, _| if j < rows { lambda } else { 0.0 });

        let mut x = DVector::<f64>::zeros(d);
        let ones = DVector::from_element(n, 1.0);
        let (mut sp, mut sm) = (ones.clone(), ones.clone());
        let (mut zp, mut zm) = (ones.clone(), ones.clone());
        let scale = 1.0 + c.amax();
        let mut best = (f64::INFINITY, DVector::zeros(n), DVector::zeros(d));
        let mut stalled = 0;

        for _ in 0..100 {
            let gx = &g * &x;
            let rd = q_diag.component_mul(&x) + &c + &gt * (&zp - &zm);
            let rpp = &gx + &sp - &ones;
            let rpm = -&gx + &sm - &ones;
            let mu = (sp.dot(&zp) + sm.dot(&zm)) / (2 * n) as f64;
            let zmax = zp.amax().max(zm.amax()).max(1.0);
            let merit = (rd.amax() / scale).max(rpp.amax()).max(rpm.amax()).max(mu / zmax);
            if merit < best.0 {
                best = (merit, &zp - &zm, x.clone());
                stalled = 0;
            } else {
                stalled += 1;
            }
            if merit < 1e-14 || stalled >= 8 {
                break;
            }
            let w = zp.component_div(&sp) + zm.component_div(&sm);
            let mut m = &gt * DMatrix::from_diagonal(&w) * &g;
            for j in 0..d {
                m[(j, j)] += q_diag[j];
            }
            let chol = match m.clone().cholesky() {
                Some(ch) => ch,
                None => {
                    let reg = 1e-14 * m.trace().max(f64::MIN_POSITIVE);
                    for j in 0..d {
                        m[(j, j)] += reg;
                    }
                    match m.cholesky() {
                        Some(ch) => ch,
                        None => break,
                    }
                }
            };
            let newton = |rcp: &DVector<f64>, rcm: &DVector<f64>| {
                let tp = (zp.component_mul(&rpp) - rcp).component_div(&sp);
                let tm = (zm.component_mul(&rpm) - rcm).component_div(&sm);
                let rhs = -&rd - &gt * (tp - tm);
                let dx = chol.solve(&rhs);
                let gdx = &g * &dx;
                let dsp = -&rpp - &gdx;
                let dsm = -&rpm + &gdx;
                let dzp = (-rcp - zp.component_mul(&dsp)).component_div(&sp);
                let dzm = (-rcm - zm.component_mul(&dsm)).component_div(&sm);
                (dx, dsp, dsm, dzp, dzm)
            };
            let max_step = |v: &DVector<f64>, dv: &DVector<f64>| {
                v.iter().zip(dv.iter()).fold(1.0f64, |a, (&vi, &di)| if di < 0.0 { a.min(-vi / di) } else { a })
            };
            let step_len = |dsp: &DVector<f64>, dsm: &DVector<f64>, dzp: &DVector<f64>, dzm: &DVector<f64>| {
                max_step(&sp, dsp).min(max_step(&sm, dsm)).min(max_step(&zp, dzp)).min(max_step(&zm, dzm))
            };

            let (_, dsp, dsm, dzp, dzm) = newton(&sp.component_mul(&zp), &sm.component_mul(&zm));
            let a_aff = step_len(&dsp, &dsm, &dzp, &dzm);
            let mu_aff = ((&sp + &dsp * a_aff).dot(&(&zp + &dzp * a_aff))
                + (&sm + &dsm * a_aff).dot(&(&zm + &dzm * a_aff)))
                / (2 * n) as f64;
            let sigma = (mu_aff / mu).powi(3).min(1.0);
            let rcp = sp.component_mul(&zp) + dsp.component_mul(&dzp) - DVector::from_element(n, sigma * mu);
            let rcm = sm.component_mul(&zm) + dsm.component_mul(&dzm) - DVector::from_element(n, sigma * mu);
            let (dx, dsp, dsm, dzp, dzm) = newton(&rcp, &rcm);
            let alpha = (0.995 * step_len(&dsp, &dsm, &dzp, &dzm)).min(1.0);
            x += dx * alpha;
            sp += dsp * alpha;
            sm += dsm * alpha;
            zp += dzp * alpha;
            zm += dzm * alpha;
        }
        DualSolution { weights: best.1.iter().copied().collect(), x: best.2 }
    }
}

struct DualSolution {
    /// Inequality multipliers, i.e. the weights.
    weights: Vec<f64>,
    /// `(p, ν)`.
    x: DVector<f64>,
}

/// Nonnegative least squares, `min ‖A x − b‖` over `x ≥ 0` (Lawson-Hanson).
pub(crate) fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let at = a.transpose();
    let tol = 1e-13 * (&at * b).amax().max(f64::MIN_POSITIVE);
    let lstsq = |cols: &[usize]| {
        let sub = DMatrix::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])]);
        let svd = sub.svd(true, true);
        let eps = 1e-13 * svd.singular_values.max();
        svd.solve(b, eps).expect("u and v were computed")
    };
    for _ in 0..3 * n + 10 {
        let w = &at * (b - a * &x);
        let Some(j) = (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&i, &k| w[i].total_cmp(&w[k])) else {
            break;
        };
        passive[j] = true;
        for _ in 0..3 * n + 10 {
            let cols: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let z = lstsq(&cols);
            if z.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &i) in cols.iter().enumerate() {
                    x[i] = z[k];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (k, &i) in cols.iter().enumerate() {
                if z[k] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - z[k]));
                }
            }
            for (k, &i) in cols.iter().enumerate() {
                x[i] += alpha * (z[k] - x[i]);
                if x[i] <= 1e-15 * z.amax() || (z[k] <= 0.0 && x[i] <= 0.0) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

#[derive(Debug, Clone)]
pub(crate) struct L1Solution {
    pub weights: Vec<f64>,
    /// [`SupportProblem::certificate_violation`] at `weights`.
    pub violation: f64,
}

/// Best constant `t` for the dual vector `s`: entries with nonzero `sign`
/// must satisfy `s + t = sign`, the others `|s + t| ≤ 1`. Returns `t` and
/// the remaining violation.
pub(crate) fn best_offset(s: &[f64], sign: &[f64]) -> (f64, f64) {
    let violation = |t: f64| {
        s.iter().zip(sign).fold(0.0f64, |m, (&si, &sg)| {
            let e = if sg != 0.0 { (si + t - sg).abs() } else { (si + t).abs() - 1.0 };
            m.max(e)
        })
    };
    // convex in t; golden-section search
    let smax = s.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (mut lo, mut hi) = (-smax - 2.0, smax + 2.0);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if violation(a) <= violation(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let t = 0.5 * (lo + hi);
    (t, violation(t).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{measure_innovation, ZeroMeanMeasure};

    fn data(w: &ZeroMeanMeasure, order: u32, kc: usize) -> MeasurementVector {
        measure_innovation(w, order, kc)
    }

    #[test]
    fn least_squares_recovers_generating_weights() {
        let w = ZeroMeanMeasure::new([(0.7, 1.5), (3.9, -1.5)]).unwrap();
        let y = data(&w, 2, 3);
        let p = SupportProblem::new(&[0.7, 3.9], 2, &y);
        let sol = p.solve_signed(None, 0.0);
        assert!((sol.weights[0] - 1.5).abs() < 1e-8);
        assert!((sol.weights[1] + 1.5).abs() < 1e-8);
        assert!(!sol.rank_deficient);
    }

    #[test]
    fn l1_fit_is_sparse_and_optimal() {
        let w = ZeroMeanMeasure::new([(0.7, 2.0), (2.5, -0.5), (4.4, -1.5)]).unwrap();
        let y = data(&w, 1, 4);
        let locs = [0.7, 1.2, 2.5, 3.3, 4.4, 5.8];
        let p = SupportProblem::new(&locs, 1, &y);
        let lambda = 1e-3;
        let sol = p.solve_l1(lambda);
        assert!(sol.violation < 1e-6);
        let s: f64 = sol.weights.iter().sum();
        assert!(s.abs() < 1e-12);
        // perturbations within the feasible set never decrease the objective
        let base = p.objective(&sol.weights, lambda);
        for i in 0..locs.len() {
            for j in 0..locs.len() {
                if i == j {
                    continue;
                }
                let mut a = sol.weights.clone();
                a[i] += 1e-6;
                a[j] -= 1e-6;
                assert!(p.objective(&a, lambda) >= base - 1e-15);
            }
        }
        assert!(sol.weights[1].abs() < 1e-12 && sol.weights[5].abs() < 1e-12);
    }
}
