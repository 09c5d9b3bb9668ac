//! Synthetic experiments: ground-truth generation, noisy measurement,
//! reconstruction with either solver, error metrics and the Monte-Carlo
//! convergence study.
//!
//! Randomness comes from ChaCha8 seeded with the run seed. Trial `t` draws
//! its ground truth from stream `2t` and its noise from stream `2t + 1`, so
//! results do not depend on the order in which trials run.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{self, AdmmParams};
use crate::bspline::{extract_knots, innovation, merge_knots, synthesize, GridSpec, DEFAULT_AMP_TOL};
use crate::error::{Error, Result};
use crate::fourier::{
    Evaluate, MeasurementVector, PeriodicSpline, TrigPolynomial, ZeroMeanMeasure,
};
use crate::frank_wolfe::{self, FwParams};

/// Points of the L∞ evaluation grid.
pub const EVAL_POINTS: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Reconstruct,
    Convergence,
    NoisyDemo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Admm,
    #[serde(alias = "fw")]
    FrankWolfe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub order: u32,
    pub cutoff: usize,
    /// One grid for single runs, the ladder for the convergence study.
    pub grid_points: Vec<usize>,
    pub lambda: f64,
    pub noise_sigma: f64,
    pub n_knots: usize,
    pub n_trials: usize,
    pub seed: u64,
    pub solver: SolverKind,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Reconstruct,
            order: 2,
            cutoff: 3,
            grid_points: vec![16],
            lambda: 1e-7,
            noise_sigma: 0.0,
            n_knots: 2,
            n_trials: 20,
            seed: 1,
            solver: SolverKind::Admm,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.order < 1 {
            return bad("order must be at least 1".into());
        }
        if self.n_trials < 1 {
            return bad("n_trials must be at least 1".into());
        }
        if self.n_knots < 2 {
            return bad(format!("need at least 2 knots, got {}", self.n_knots));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma must be nonnegative, got {}", self.noise_sigma));
        }
        if self.grid_points.is_empty() {
            return bad("no grid size given".into());
        }
        if let Some(&p) = self.grid_points.iter().find(|&&p| p <= 2 * self.cutoff) {
            return bad(format!("grid size {p} must exceed 2·cutoff = {}", 2 * self.cutoff));
        }
        if self.experiment == ExperimentKind::Convergence {
            if self.grid_points.len() < 3 {
                return bad("convergence study needs at least 3 grid sizes".into());
            }
            if self.grid_points.windows(2).any(|w| w[1] <= w[0]) {
                return bad("grid sizes must be increasing".into());
            }
        }
        Ok(())
    }

    fn single_grid(&self) -> usize {
        self.grid_points[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub linf_error: f64,
    pub raw_knots: usize,
    pub merged_knots: usize,
    pub objective: f64,
    pub solver_iterations: usize,
    pub converged: bool,
    pub wall_time_seconds: f64,
}

// ---------------------------------------------------------------------------
// Signals and measurements
// ---------------------------------------------------------------------------

/// Generators for trial `trial`: (ground truth, noise).
pub fn trial_rngs(seed: u64, trial: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut truth = ChaCha8Rng::seed_from_u64(seed);
    truth.set_stream(2 * trial as u64);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(2 * trial as u64 + 1);
    (truth, noise)
}

/// Random `D^M`-spline with one knot in each of `n_knots` equal arcs and
/// Dirac weights drawn from a standard normal vector projected onto the
/// zero-sum subspace. The mean is 0.
pub fn ground_truth_from_rng<R: Rng>(order: u32, n_knots: usize, rng: &mut R) -> Result<PeriodicSpline> {
    if n_knots < 2 {
        return Err(Error::invalid(format!("need at least 2 knots, got {n_knots}")));
    }
    if order < 1 {
        return Err(Error::invalid("order must be at least 1"));
    }
    let width = TAU / n_knots as f64;
    let locations: Vec<f64> = (0..n_knots).map(|n| width * (n as f64 + rng.random::<f64>())).collect();
    let mut weights: Vec<f64> = (0..n_knots).map(|_| StandardNormal.sample(rng)).collect();
    let mean = weights.iter().sum::<f64>() / n_knots as f64;
    weights.iter_mut().for_each(|w| *w -= mean);
    let w = ZeroMeanMeasure::canonicalized(
        locations.into_iter().zip(weights).map(|(location, weight)| crate::fourier::Atom { location, weight }).collect(),
        0.0,
        0.0,
    );
    Ok(PeriodicSpline::from_innovation(order, 0.0, &w))
}

/// Ground truth of trial 0 for `seed`.
pub fn generate_ground_truth(order: u32, n_knots: usize, seed: u64) -> Result<PeriodicSpline> {
    ground_truth_from_rng(order, n_knots, &mut trial_rngs(seed, 0).0)
}

/// Adds `N(0, σ²)` to the mean and to the real and imaginary part of every
/// coefficient.
pub fn add_noise_from_rng<R: Rng>(y: &MeasurementVector, sigma: f64, rng: &mut R) -> Result<MeasurementVector> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(y.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mean = y.mean() + normal.sample(rng);
    let coeffs = y
        .coeffs()
        .iter()
        .map(|c| c + num_complex::Complex64::new(normal.sample(rng), normal.sample(rng)))
        .collect();
    Ok(MeasurementVector::new(mean, coeffs))
}

pub fn add_noise(y: &MeasurementVector, sigma: f64, seed: u64) -> Result<MeasurementVector> {
    add_noise_from_rng(y, sigma, &mut trial_rngs(seed, 0).1)
}

/// Truncated Fourier series `y₀ + Σ_{k ≤ K_c} 2 Re(y_k e^{ikx})`.
pub fn lowpass_baseline(y: &MeasurementVector) -> TrigPolynomial {
    TrigPolynomial::new(y.mean(), y.coeffs().to_vec())
}

/// Evaluation grid on the torus; shifted by half a step when `half_offset`.
pub fn eval_grid(n_points: usize, half_offset: bool) -> Vec<f64> {
    let h = TAU / n_points as f64;
    let shift = if half_offset { 0.5 * h } else { 0.0 };
    (0..n_points).map(|i| i as f64 * h + shift).collect()
}

/// `max |f − g|` over `n_points` equispaced points (half-step offset for
/// `M = 1` so no sample falls on a jump).
pub fn linf_error<F: Evaluate + ?Sized, G: Evaluate + ?Sized>(f: &F, g: &G, n_points: usize, order: u32) -> f64 {
    assert!(n_points >= 2, "need at least 2 evaluation points");
    eval_grid(n_points, order == 1)
        .into_iter()
        .map(|x| (f.evaluate(x) - g.evaluate(x)).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub spline: PeriodicSpline,
    pub raw_knots: usize,
    pub merged: Vec<crate::bspline::KnotCluster>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solve at grid size `p` (ADMM) or gridless (Frank-Wolfe; `p` only sets
/// the knot merge distance).
pub fn reconstruct(
    y: &MeasurementVector,
    order: u32,
    p: usize,
    lambda: f64,
    solver: SolverKind,
) -> Result<Reconstruction> {
    let grid = GridSpec::new(order, p, y.cutoff())?;
    match solver {
        SolverKind::Admm => {
            let r = admm::solve_discrete(y, &grid, lambda, &AdmmParams::default(), None)?;
            let knots = extract_knots(&innovation(&r.c_star), DEFAULT_AMP_TOL);
            Ok(Reconstruction {
                spline: synthesize(&r.c_star),
                raw_knots: knots.len(),
                merged: merge_knots(&knots, grid.default_merge_distance(), DEFAULT_AMP_TOL),
                objective: r.objective,
                iterations: r.iterations,
                converged: r.converged,
            })
        }
        SolverKind::FrankWolfe => {
            let (spline, state) = frank_wolfe::fw_solve(y, lambda, order, &FwParams::default())?;
            let w = spline.innovation();
            Ok(Reconstruction {
                raw_knots: spline.n_knots(),
                merged: merge_knots(w.atoms(), grid.default_merge_distance(), DEFAULT_AMP_TOL),
                objective: frank_wolfe::lifted_objective(&state.w, state.w.tv_norm(), y, lambda, order),
                iterations: state.iterations(),
                converged: state.converged,
                spline,
            })
        }
    }
}

fn spline_linf(f: &PeriodicSpline, g: &PeriodicSpline) -> f64 {
    let xs = eval_grid(EVAL_POINTS, f.order() == 1);
    f.eval_many(&xs)
        .into_iter()
        .zip(g.eval_many(&xs))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Ground truth and measurements of trial `trial`.
pub fn trial_data(config: &ExperimentConfig, trial: usize) -> Result<(PeriodicSpline, MeasurementVector, MeasurementVector)> {
    let (mut truth_rng, mut noise_rng) = trial_rngs(config.seed, trial);
    let f0 = ground_truth_from_rng(config.order, config.n_knots, &mut truth_rng)?;
    let clean = f0.measure(config.cutoff);
    let noisy = add_noise_from_rng(&clean, config.noise_sigma, &mut noise_rng)?;
    Ok((f0, clean, noisy))
}

#[derive(Debug, Clone)]
pub struct SingleRun {
    pub ground_truth: PeriodicSpline,
    pub lowpass: TrigPolynomial,
    pub reconstruction: Reconstruction,
    pub linf_error: f64,
    pub lowpass_linf_error: f64,
    pub wall_time_seconds: f64,
}

/// Reconstruct the trial-0 signal of `config` at its first grid size.
pub fn run_single(config: &ExperimentConfig) -> Result<SingleRun> {
    config.validate()?;
    let (f0, clean, noisy) = trial_data(config, 0)?;
    let start = Instant::now();
    let rec = reconstruct(&noisy, config.order, config.single_grid(), config.lambda, config.solver)?;
    let wall = start.elapsed().as_secs_f64();
    let lowpass = lowpass_baseline(&clean);
    Ok(SingleRun {
        linf_error: spline_linf(&rec.spline, &f0),
        lowpass_linf_error: linf_error(&lowpass, &f0, EVAL_POINTS, config.order),
        ground_truth: f0,
        lowpass,
        reconstruction: rec,
        wall_time_seconds: wall,
    })
}

// ---------------------------------------------------------------------------
// Convergence study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    #[serde(rename = "P")]
    pub p: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub n_ok_trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    /// `s` in `error ≈ C / P^s`.
    pub slope: f64,
    pub log_c: f64,
    pub excluded_smallest: bool,
    /// Slope with every point included.
    pub slope_all: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub fit: SlopeFit,
    pub n_failed: usize,
    pub records: Vec<TrialRecord>,
}

fn least_squares_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fit `log e = log C − s log P`. The smallest `P` is dropped when it lies
/// more than 3 median absolute deviations off the line fitted to the
/// remaining points.
pub fn fit_slope(ps: &[usize], errors: &[f64]) -> Result<SlopeFit> {
    if ps.len() != errors.len() || ps.len() < 3 {
        return Err(Error::invalid("slope fit needs at least 3 matching points"));
    }
    if errors.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::invalid("slope fit needs positive finite errors"));
    }
    let lx: Vec<f64> = ps.iter().map(|&p| (p as f64).ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (b_all, c_all) = least_squares_line(&lx, &ly);
    let smallest = (0..ps.len()).min_by_key(|&i| ps[i]).expect("nonempty");
    let rest: Vec<usize> = (0..ps.len()).filter(|&i| i != smallest).collect();
    let rx: Vec<f64> = rest.iter().map(|&i| lx[i]).collect();
    let ry: Vec<f64> = rest.iter().map(|&i| ly[i]).collect();
    let (b_rest, c_rest) = least_squares_line(&rx, &ry);
    let mut resid: Vec<f64> = rx.iter().zip(&ry).map(|(x, y)| y - (c_rest + b_rest * x)).collect();
    let med = median(&mut resid);
    let mad = median(&mut resid.iter().map(|r| (r - med).abs()).collect::<Vec<_>>()).max(1e-12);
    let outlier = ly[smallest] - (c_rest + b_rest * lx[smallest]);
    let exclude = rest.len() >= 3 && (outlier - med).abs() > 3.0 * mad;
    let (b, c) = if exclude { (b_rest, c_rest) } else { (b_all, c_all) };
    Ok(SlopeFit { slope: -b, log_c: c, excluded_smallest: exclude, slope_all: -b_all })
}

/// Monte-Carlo study: per trial, draw a signal, measure it and solve on
/// every grid of the ladder. Non-converged solves are excluded from the
/// averages and counted in `n_failed`.
pub fn convergence_study(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let per_trial: Vec<Result<Vec<TrialRecord>>> = (0..config.n_trials)
        .into_par_iter()
        .map(|trial| {
            let (f0, _, y) = trial_data(config, trial)?;
            config
                .grid_points
                .iter()
                .map(|&p| {
                    let start = Instant::now();
                    let rec = reconstruct(&y, config.order, p, config.lambda, config.solver)?;
                    Ok(TrialRecord {
                        trial_id: trial,
                        p,
                        linf_error: spline_linf(&rec.spline, &f0),
                        raw_knots: rec.raw_knots,
                        merged_knots: rec.merged.len().min(rec.raw_knots),
                        objective: rec.objective,
                        solver_iterations: rec.iterations,
                        converged: rec.converged,
                        wall_time_seconds: start.elapsed().as_secs_f64(),
                    })
                })
                .collect()
        })
        .collect();
    let mut records = Vec::new();
    for r in per_trial {
        records.extend(r?);
    }
    records.sort_by_key(|r| (r.trial_id, r.p));

    let rows: Vec<ConvergenceRow> = config
        .grid_points
        .iter()
        .map(|&p| {
            let errs: Vec<f64> = records.iter().filter(|r| r.p == p && r.converged).map(|r| r.linf_error).collect();
            let n = errs.len();
            let mean = if n > 0 { errs.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let std = if n > 1 {
                (errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            ConvergenceRow { p, mean_error: mean, std_error: std, n_ok_trials: n }
        })
        .collect();
    let n_failed = records.iter().filter(|r| !r.converged).count();
    let usable: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.n_ok_trials > 0).collect();
    let fit = fit_slope(
        &usable.iter().map(|r| r.p).collect::<Vec<_>>(),
        &usable.iter().map(|r| r.mean_error).collect::<Vec<_>>(),
    )?;
    Ok(ConvergenceReport { rows, fit, n_failed, records })
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// C `printf("%.{prec}g")`.
pub fn format_g(x: f64, prec: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let prec = prec.max(1);
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", prec - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= prec as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (prec as i32 - 1 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x,f_reconstructed,f_ground_truth,f_lowpass` on the evaluation grid.
pub fn profile_csv(run: &SingleRun, order: u32) -> String {
    let xs = eval_grid(EVAL_POINTS, order == 1);
    let rec = run.reconstruction.spline.eval_many(&xs);
    let truth = run.ground_truth.eval_many(&xs);
    let mut out = String::from("x,f_reconstructed,f_ground_truth,f_lowpass\n");
    for (i, &x) in xs.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            format_g(x, 12),
            format_g(rec[i], 12),
            format_g(truth[i], 12),
            format_g(run.lowpass.eval(x), 12)
        );
    }
    out
}

pub fn convergence_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from("P,mean_error,std_error,n_ok_trials\n");
    for r in &report.rows {
        let _ = writeln!(out, "{},{},{},{}", r.p, format_g(r.mean_error, 12), format_g(r.std_error, 12), r.n_ok_trials);
    }
    out
}

/// Write every file or none: each goes to a temporary sibling first and
/// is renamed into place once all writes succeeded.
pub fn write_files_atomically(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut staged = Vec::new();
    for (name, contents) in files {
        let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
        if let Err(e) = std::fs::write(&tmp, contents) {
            for (t, _) in &staged {
                let _ = std::fs::remove_file(t);
            }
            let _ = std::fs::remove_file(&tmp);
            return Err(e.into());
        }
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dst) in &staged {
        std::fs::rename(tmp, dst)?;
    }
    Ok(())
}
