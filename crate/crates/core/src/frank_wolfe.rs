//! Gridless solver over zero-mean measures.
//!
//! The penalized problem `min_w ½‖ỹ − ν_L(w)‖² + λ‖w‖` is lifted to its
//! epigraph `T(w, t) = ½‖ỹ − ν_L(w)‖² + λt` over
//! `C = {(w, t) : ‖w‖ ≤ t ≤ M}` with `M = ‖ỹ‖² / 2λ`. The extreme points
//! of `C` are `(0, 0)` and `(M/2 (δ_x − δ_y), M)`, so each linear
//! minimization reduces to locating the extrema of the certificate
//!
//! ```text
//! η = ν_L*(ỹ − ν_L(w)) / λ.
//! ```
//!
//! A solution is reached once `max η − min η ≤ 2` and the atoms of `w`
//! sit where `η` is extremal, i.e. the gap `t − ⟨w, η⟩` vanishes.

use crate::error::{Error, Result};
use crate::fourier::{
    apply_adjoint, measure_innovation, torus_distance, MeasurementVector, PeriodicSpline, TrigPolynomial, ZeroMeanMeasure,
};
use crate::refit::SupportProblem;

/// Atoms closer than this after an update are merged.
pub const FW_MERGE_TOL: f64 = 1e-9;

/// Weights below this fraction of `M` are dropped after an update.
pub const FW_DROP_REL: f64 = 1e-12;

/// Refit weights below this fraction of `‖a‖₁` are dropped.
pub const REFIT_DROP_REL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// `γ = 2 / (k + 2)`.
    Harmonic,
    /// Closed-form minimizer of `T` along the segment, clipped to `[0, 1]`.
    ExactLineSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwParams {
    /// `None` means `10·(2K_c + 1)`.
    pub max_outer_iters: Option<usize>,
    /// Slack on the `max η − min η ≤ 2` stopping test.
    pub stop_tol: f64,
    pub step_rule: StepRule,
    /// Coarse certificate samples per unit of frequency.
    pub grid_density: usize,
    pub refit: bool,
    /// Refit with the ℓ1 penalty (otherwise plain least squares).
    pub refit_l1: bool,
}

impl Default for FwParams {
    fn default() -> Self {
        Self {
            max_outer_iters: None,
            stop_tol: 1e-6,
            step_rule: StepRule::ExactLineSearch,
            grid_density: 16,
            refit: true,
            refit_l1: true,
        }
    }
}

impl FwParams {
    pub fn validate(&self) -> Result<()> {
        if self.grid_density < 8 {
            return Err(Error::Config(format!("grid_density must be at least 8, got {}", self.grid_density)));
        }
        if self.stop_tol.is_nan() || self.stop_tol <= 0.0 {
            return Err(Error::Config("stop_tol must be positive".into()));
        }
        if self.max_outer_iters == Some(0) {
            return Err(Error::Config("max_outer_iters must be positive".into()));
        }
        Ok(())
    }

    pub fn outer_iters(&self, cutoff: usize) -> usize {
        self.max_outer_iters.unwrap_or(10 * (2 * cutoff + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub objective: f64,
    pub oscillation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwState {
    pub w: ZeroMeanMeasure,
    /// Epigraph variable, `‖w‖ ≤ t ≤ bound_m`.
    pub t: f64,
    pub bound_m: f64,
    pub history: Vec<HistoryEntry>,
    pub converged: bool,
}

impl FwState {
    pub fn new(bound_m: f64) -> Self {
        Self { w: ZeroMeanMeasure::empty(), t: 0.0, bound_m, history: Vec::new(), converged: false }
    }

    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }
}

/// `M = ‖ỹ‖² / 2λ`.
pub fn bound_m(y: &MeasurementVector, lambda: f64) -> f64 {
    y.without_mean().norm_sq() / (2.0 * lambda)
}

/// `T(w, t) = ½‖ỹ − ν_L(w)‖² + λt`.
pub fn lifted_objective(w: &ZeroMeanMeasure, t: f64, y: &MeasurementVector, lambda: f64, order: u32) -> f64 {
    let r = &y.without_mean() - &measure_innovation(w, order, y.cutoff());
    0.5 * r.norm_sq() + lambda * t
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("lambda must be positive, got {lambda}")))
    }
}

/// `η = ν_L*(ỹ − ν_L(w)) / λ`.
pub fn certificate(w: &ZeroMeanMeasure, y: &MeasurementVector, lambda: f64, order: u32) -> Result<TrigPolynomial> {
    check_lambda(lambda)?;
    let r = &y.without_mean() - &measure_innovation(w, order, y.cutoff());
    Ok(apply_adjoint(&r, order).scaled(1.0 / lambda))
}

/// `dT(w, t)·(w̃, t̃) = −λ⟨w̃, η⟩ + λt̃`.
pub fn directional_derivative(
    w: &ZeroMeanMeasure,
    dw: &ZeroMeanMeasure,
    dt: f64,
    y: &MeasurementVector,
    lambda: f64,
    order: u32,
) -> Result<f64> {
    let eta = certificate(w, y, lambda, order)?;
    Ok(-lambda * dw.pair(&eta) + lambda * dt)
}

// ---------------------------------------------------------------------------
// Certificate extrema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrema {
    pub x_max: f64,
    pub eta_max: f64,
    pub x_min: f64,
    pub eta_min: f64,
    /// Set for a constant polynomial; locations are then 0.
    pub degenerate: bool,
}

impl Extrema {
    pub fn oscillation(&self) -> f64 {
        self.eta_max - self.eta_min
    }
}

/// Global extrema of `eta` on the torus: coarse scan at
/// `grid_density·max(degree, 1)` points, then safeguarded Newton on `η′`.
/// Ties go to the smallest location in `[0, 2π)`.
pub fn extremize(eta: &TrigPolynomial, grid_density: usize) -> Extrema {
    use std::f64::consts::TAU;
    if eta.is_constant() {
        let v = eta.mean();
        return Extrema { x_max: 0.0, eta_max: v, x_min: 0.0, eta_min: v, degenerate: true };
    }
    let n = grid_density.max(8) * eta.degree().max(1);
    let h = TAU / n as f64;
    let samples: Vec<f64> = (0..n).map(|i| eta.eval(i as f64 * h)).collect();
    let d1 = eta.derivative();
    let d2 = d1.derivative();
    let scale = eta.coeff_scale();
    let dtol = 1e-12 * scale * eta.degree() as f64;

    let best = |sign: f64| -> (f64, f64) {
        let mut cands: Vec<(f64, f64)> = Vec::new();
        for i in 0..n {
            let (prev, cur, next) = (samples[(i + n - 1) % n], samples[i], samples[(i + 1) % n]);
            if sign * cur >= sign * prev && sign * cur > sign * next {
                let x = refine_extremum(&d1, &d2, i as f64 * h, h, sign, dtol);
                cands.push((x, eta.eval(x)));
            }
        }
        if cands.is_empty() {
            let i = (0..n).max_by(|&a, &b| (sign * samples[a]).total_cmp(&(sign * samples[b]))).unwrap_or(0);
            cands.push((i as f64 * h, samples[i]));
        }
        let top = cands.iter().map(|c| sign * c.1).fold(f64::NEG_INFINITY, f64::max);
        let tie = 1e-13 * scale;
        cands
            .into_iter()
            .filter(|c| sign * c.1 >= top - tie)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("nonempty")
    };
    let (x_max, eta_max) = best(1.0);
    let (x_min, eta_min) = best(-1.0);
    Extrema { x_max, eta_max, x_min, eta_min, degenerate: false }
}

/// Newton with bisection fallback on `η′` inside `[x0 − h, x0 + h]`.
/// `sign = 1` looks for a maximum (`η′` goes from + to −).
fn refine_extremum(d1: &TrigPolynomial, d2: &TrigPolynomial, x0: f64, h: f64, sign: f64, dtol: f64) -> f64 {
    use crate::fourier::wrap;
    // g > 0 left of the extremum, g < 0 right of it
    let g = |x: f64| sign * d1.eval(x);
    let (mut lo, mut hi) = (x0 - h, x0 + h);
    if !(g(lo) >= 0.0 && g(hi) <= 0.0) {
        return wrap(x0);
    }
    let mut x = x0;
    for _ in 0..100 {
        let gx = g(x);
        if gx.abs() <= dtol {
            break;
        }
        if gx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let gp = sign * d2.eval(x);
        let newton = if gp < 0.0 { x - gx / gp } else { f64::NAN };
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    wrap(x)
}

// ---------------------------------------------------------------------------
// Iteration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub w: ZeroMeanMeasure,
    pub t: f64,
}

/// Linear minimization over `C` given the certificate extrema.
pub fn greedy_candidate(ext: &Extrema, bound_m: f64) -> Candidate {
    if !ext.degenerate && ext.oscillation() >= 2.0 && bound_m > 0.0 {
        Candidate { w: ZeroMeanMeasure::dipole(ext.x_max, ext.x_min, 0.5 * bound_m), t: bound_m }
    } else {
        Candidate { w: ZeroMeanMeasure::empty(), t: 0.0 }
    }
}

pub fn greedy_step(
    state: &FwState,
    y: &MeasurementVector,
    lambda: f64,
    order: u32,
    grid_density: usize,
) -> Result<Candidate> {
    let eta = certificate(&state.w, y, lambda, order)?;
    Ok(greedy_candidate(&extremize(&eta, grid_density), state.bound_m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refit {
    pub measure: ZeroMeanMeasure,
    pub rank_deficient: bool,
}

/// Re-optimize the weights on a fixed support, ℓ1-penalized or plain least
/// squares, under `Σ a = 0`. Tiny weights are dropped.
pub fn fully_corrective_refit(
    support: &[f64],
    y: &MeasurementVector,
    lambda: f64,
    order: u32,
    l1: bool,
) -> Result<Refit> {
    if support.is_empty() {
        return Err(Error::invalid("refit support is empty"));
    }
    if l1 {
        check_lambda(lambda)?;
    }
    let problem = SupportProblem::new(support, order, &y.without_mean());
    let (weights, rank_deficient) = if l1 {
        (problem.solve_l1(lambda).weights, false)
    } else {
        let sol = problem.solve_signed(None, 0.0);
        (sol.weights, sol.rank_deficient)
    };
    let l1_norm: f64 = weights.iter().map(|a| a.abs()).sum();
    let atoms = support
        .iter()
        .zip(&weights)
        .filter(|(_, a)| a.abs() >= REFIT_DROP_REL * l1_norm && **a != 0.0)
        .map(|(&x, &a)| crate::fourier::Atom { location: x, weight: a })
        .collect::<Vec<_>>();
    // restore the zero-sum constraint after dropping
    let mut measure = ZeroMeanMeasure::canonicalized(atoms, 0.0, 0.0);
    let drift = measure.total_mass();
    if drift != 0.0 && !measure.is_empty() {
        let n = measure.len() as f64;
        let fixed = measure
            .atoms()
            .iter()
            .map(|a| crate::fourier::Atom { location: a.location, weight: a.weight - drift / n })
            .collect();
        measure = ZeroMeanMeasure::canonicalized(fixed, 0.0, 0.0);
    }
    Ok(Refit { measure, rank_deficient })
}

/// How far `η` may sag between two atoms that are taken to sit on one peak.
const PEAK_SAG: f64 = 1e-6;

/// Atoms of one sign at adjacent locations sharing a flat peak of `η`.
fn peak_groups(w: &ZeroMeanMeasure, eta: &TrigPolynomial) -> Vec<Vec<crate::fourier::Atom>> {
    let atoms = w.atoms();
    let same_peak = |a: &crate::fourier::Atom, b: &crate::fourier::Atom| {
        if a.weight.signum() != b.weight.signum() {
            return false;
        }
        let s = a.weight.signum();
        let span = crate::fourier::wrap(b.location - a.location);
        let floor = (s * eta.eval(a.location)).min(s * eta.eval(b.location)) - PEAK_SAG;
        (1..16).all(|i| s * eta.eval(a.location + span * i as f64 / 16.0) >= floor)
    };
    let mut groups: Vec<Vec<crate::fourier::Atom>> = Vec::new();
    for a in atoms {
        match groups.last_mut() {
            Some(g) if same_peak(g.last().expect("nonempty"), a) => g.push(*a),
            _ => groups.push(vec![*a]),
        }
    }
    if groups.len() > 1 {
        let (first, last) = (groups[0][0], *groups[groups.len() - 1].last().expect("nonempty"));
        if same_peak(&last, &first) {
            let tail = groups.pop().expect("nonempty");
            groups[0].splice(0..0, tail);
        }
    }
    groups
}

/// `x − from` wrapped into `(−π, π]`.
fn signed_offset(from: f64, x: f64) -> f64 {
    use std::f64::consts::PI;
    let d = crate::fourier::wrap(x - from);
    if d > PI {
        d - std::f64::consts::TAU
    } else {
        d
    }
}

/// Consolidation rounds allowed per solve.
const MAX_CONSOLIDATIONS: usize = 4;

/// Peak re-centring passes per consolidation.
const RECENTRE_STEPS: usize = 20;

/// Replace each group of atoms on a shared certificate peak by one atom at
/// the peak and refit. `None` unless this removes atoms without raising `T`.
fn consolidate(
    state: &FwState,
    y: &MeasurementVector,
    lambda: f64,
    order: u32,
) -> Result<Option<(ZeroMeanMeasure, f64)>> {
    let eta = certificate(&state.w, y, lambda, order)?;
    let groups = peak_groups(&state.w, &eta);
    if groups.len() == state.w.len() {
        return Ok(None);
    }
    let d1 = eta.derivative();
    let d2 = d1.derivative();
    let dtol = 1e-12 * eta.coeff_scale() * eta.degree() as f64;
    let support: Vec<f64> = groups
        .iter()
        .map(|g| {
            if g.len() == 1 {
                return g[0].location;
            }
            let origin = g[0].location;
            let offsets: Vec<f64> = g.iter().map(|a| crate::fourier::wrap(a.location - origin)).collect();
            let mass: f64 = g.iter().map(|a| a.weight.abs()).sum();
            let centre = origin + g.iter().zip(&offsets).map(|(a, o)| a.weight.abs() * o).sum::<f64>() / mass;
            let half = offsets.last().copied().unwrap_or(0.0) + 1e-9;
            refine_extremum(&d1, &d2, centre, half, g[0].weight.signum(), dtol)
        })
        .collect();
    let before = lifted_objective(&state.w, state.t, y, lambda, order);
    let mut w = fully_corrective_refit(&support, y, lambda, order, true)?.measure;
    let mut objective = lifted_objective(&w, w.tv_norm(), y, lambda, order);
    // the merged atoms sit at peaks of the old certificate; re-centre them
    // on the peaks of their own until that stops helping
    for _ in 0..RECENTRE_STEPS {
        if w.is_empty() {
            break;
        }
        let eta = certificate(&w, y, lambda, order)?;
        let d1 = eta.derivative();
        let d2 = d1.derivative();
        let dtol = 1e-12 * eta.coeff_scale() * eta.degree() as f64;
        let window = std::f64::consts::PI / (4 * eta.degree().max(1)) as f64;
        let peaks: Vec<f64> =
            w.atoms().iter().map(|a| refine_extremum(&d1, &d2, a.location, window, a.weight.signum(), dtol)).collect();
        // damped: the peak of the current certificate overshoots
        let mut improved = None;
        let mut tau = 1.0;
        for _ in 0..8 {
            let moved: Vec<f64> = w
                .atoms()
                .iter()
                .zip(&peaks)
                .map(|(a, &x)| a.location + tau * signed_offset(a.location, x))
                .collect();
            let next = fully_corrective_refit(&moved, y, lambda, order, true)?.measure;
            let next_objective = lifted_objective(&next, next.tv_norm(), y, lambda, order);
            if next_objective < objective {
                improved = Some((next, next_objective));
                break;
            }
            tau *= 0.5;
        }
        match improved {
            Some((next, next_objective)) => {
                w = next;
                objective = next_objective;
            }
            None => break,
        }
    }
    let t = w.tv_norm();
    let fewer = w.len() < state.w.len();
    Ok((fewer && objective <= before && t <= state.bound_m).then_some((w, t)))
}

/// Frank-Wolfe on the lifted problem. The returned spline is `y₀ + L†w`.
///
/// When the stopping test passes, atoms sharing a certificate peak are
/// merged (no sliding otherwise) and the iteration resumes from the merged
/// point if that lowers `T`.
pub fn fw_solve(
    y: &MeasurementVector,
    lambda: f64,
    order: u32,
    params: &FwParams,
) -> Result<(PeriodicSpline, FwState)> {
    check_lambda(lambda)?;
    params.validate()?;
    if order < 1 {
        return Err(Error::invalid("order must be at least 1"));
    }
    let m = bound_m(y, lambda);
    let mut state = FwState::new(m);
    if y.cutoff() == 0 || m == 0.0 {
        state.history.push(HistoryEntry { iteration: 0, objective: 0.0, oscillation: 0.0 });
        state.converged = true;
        return Ok((PeriodicSpline::constant(order, y.mean()), state));
    }
    let ytil = y.without_mean();
    let max_iters = params.outer_iters(y.cutoff());
    let drop_tol = FW_DROP_REL * m;
    // every location inserted so far; the ℓ1 refit may revive any of them
    let mut pool: Vec<f64> = Vec::new();
    let mut steps = 0;
    let mut rounds = 0;

    loop {
        let eta = certificate(&state.w, y, lambda, order)?;
        let ext = extremize(&eta, params.grid_density);
        let objective = lifted_objective(&state.w, state.t, y, lambda, order);
        let iteration = state.history.len();
        state.history.push(HistoryEntry { iteration, objective, oscillation: ext.oscillation() });
        // gap towards (0, 0), in units of λ; nonnegative once the oscillation is ≤ 2
        let gap = state.t - state.w.pair(&eta);
        let cand = greedy_candidate(&ext, m);
        let stops = ext.degenerate
            || (ext.oscillation() <= 2.0 + params.stop_tol && gap <= params.stop_tol * state.t)
            || (cand.w.is_empty() && gap <= 0.0);
        if stops {
            if params.refit && params.refit_l1 && rounds < MAX_CONSOLIDATIONS {
                if let Some((w, t)) = consolidate(&state, y, lambda, order)? {
                    rounds += 1;
                    state.w = w;
                    state.t = t;
                    pool = state.w.locations();
                    continue;
                }
            }
            state.converged = true;
            break;
        }
        if steps == max_iters {
            break;
        }
        let dt = cand.t - state.t;
        let gamma = match params.step_rule {
            StepRule::Harmonic => 2.0 / (steps as f64 + 2.0),
            StepRule::ExactLineSearch => {
                let r = &ytil - &measure_innovation(&state.w, order, y.cutoff());
                let v = &measure_innovation(&cand.w, order, y.cutoff())
                    - &measure_innovation(&state.w, order, y.cutoff());
                let vv = v.norm_sq();
                if vv > 0.0 {
                    ((r.dot(&v) - lambda * dt) / vv).clamp(0.0, 1.0)
                } else if dt < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        steps += 1;
        state.w = state.w.combine(1.0 - gamma, &cand.w, gamma, FW_MERGE_TOL, drop_tol);
        state.t = ((1.0 - gamma) * state.t + gamma * cand.t).max(state.w.tv_norm());

        if params.refit && !state.w.is_empty() {
            let before = lifted_objective(&state.w, state.t, y, lambda, order);
            let support = if params.refit_l1 {
                for x in state.w.locations().into_iter().chain(cand.w.locations()) {
                    if !pool.iter().any(|&p| torus_distance(p, x) <= FW_MERGE_TOL) {
                        pool.push(x);
                    }
                }
                pool.clone()
            } else {
                state.w.locations()
            };
            let refit = fully_corrective_refit(&support, y, lambda, order, params.refit_l1)?;
            let t_new = refit.measure.tv_norm();
            let after = lifted_objective(&refit.measure, t_new, y, lambda, order);
            if after <= before && t_new <= m {
                state.w = refit.measure;
                state.t = t_new;
            }
        }
        debug_assert!(state.w.tv_norm() <= state.t * (1.0 + 1e-12) + 1e-300);
    }
    let spline = PeriodicSpline::from_innovation(order, y.mean(), &state.w);
    Ok((spline, state))
}
