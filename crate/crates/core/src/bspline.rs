//! Uniform periodic B-splines on a `P`-point grid.
//!
//! A coefficient vector `c ∈ ℝ^P` represents `f = Σ_p c[p] β_per(· − 2πp/P)`.
//! Its innovation is `L f = Σ_p a[p] δ(· − 2πp/P)` with
//! `a = (P/2π)^{M−1} (d_L ∗ c)` and `d_L` the binomial filter whose DFT is
//! `(1 − e^{−ik2π/P})^M`. The B-spline is supported on `[0, M·2π/P]`.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fourier::{wrap, Atom, MeasurementVector, PeriodicSpline, ZeroMeanMeasure};

/// Relative amplitude below which [`synthesize`] treats an innovation entry as zero.
pub const SYNTHESIS_AMP_TOL: f64 = 1e-10;

/// Default relative amplitude threshold for [`extract_knots`].
pub const DEFAULT_AMP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub order: u32,
    pub grid_points: usize,
    pub cutoff: usize,
}

impl GridSpec {
    pub fn new(order: u32, grid_points: usize, cutoff: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("order must be at least 1"));
        }
        if grid_points == 0 {
            return Err(Error::invalid("grid must have at least one point"));
        }
        Ok(Self { order, grid_points, cutoff })
    }

    /// Grid step `h = 2π/P`.
    pub fn spacing(&self) -> f64 {
        TAU / self.grid_points as f64
    }

    pub fn node(&self, p: usize) -> f64 {
        p as f64 * self.spacing()
    }

    /// `(P/2π)^{M−1}`, the factor between `d_L ∗ c` and the innovation weights.
    pub fn innovation_scale(&self) -> f64 {
        (self.grid_points as f64 / TAU).powi(self.order as i32 - 1)
    }

    /// Whether the measured frequencies are unaliased on the grid (`P ≥ 2K_c + 1`).
    pub fn is_unaliased(&self) -> bool {
        self.grid_points > 2 * self.cutoff
    }

    /// Default merge distance for knot clusters, three grid steps.
    pub fn default_merge_distance(&self) -> f64 {
        3.0 * self.spacing()
    }
}

/// Fourier coefficient `β̂_per[k] = P^{M−1} ((1 − e^{−ik2π/P}) / (2πik))^M`, with
/// the limit `1/P` at `k = 0`.
pub fn bspline_fourier_coeff(grid: &GridSpec, k: i64) -> Complex64 {
    let p = grid.grid_points as f64;
    if k == 0 {
        return Complex64::new(1.0 / p, 0.0);
    }
    if k.rem_euclid(grid.grid_points as i64) == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let kf = k as f64;
    let num = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -kf * grid.spacing());
    let base = num / Complex64::new(0.0, TAU * kf);
    base.powu(grid.order) * p.powi(grid.order as i32 - 1)
}

/// Binomial innovation filter `d[m] = (−1)^m C(M, m)`, periodized modulo `P`.
pub fn d_filter(order: u32, grid_points: usize) -> Vec<f64> {
    assert!(grid_points >= 1);
    let mut d = vec![0.0; grid_points];
    let mut binom = 1.0;
    for m in 0..=order as usize {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        d[m % grid_points] += sign * binom;
        binom = binom * (order as usize - m) as f64 / (m + 1) as f64;
    }
    d
}

/// DFT of [`d_filter`], `(1 − e^{−ij2π/P})^M` for `j = 0..P`.
pub fn d_filter_dft(order: u32, grid_points: usize) -> Vec<Complex64> {
    let h = TAU / grid_points as f64;
    (0..grid_points)
        .map(|j| (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -(j as f64) * h)).powu(order))
        .collect()
}

/// `(d ∗ c)[p] = Σ_m d[m] c[p − m]` with indices modulo `P`, for a short filter.
pub(crate) fn cyclic_convolve(order: u32, c: &[f64]) -> Vec<f64> {
    let p = c.len();
    let taps = taps(order, p);
    (0..p)
        .map(|i| taps.iter().map(|&(m, dm)| dm * c[(i + p - m) % p]).sum())
        .collect()
}

/// Transpose of [`cyclic_convolve`]: `(dᵀ v)[q] = Σ_m d[m] v[q + m]`.
pub(crate) fn cyclic_correlate(order: u32, v: &[f64]) -> Vec<f64> {
    let p = v.len();
    let taps = taps(order, p);
    (0..p)
        .map(|i| taps.iter().map(|&(m, dm)| dm * v[(i + m) % p]).sum())
        .collect()
}

fn taps(order: u32, p: usize) -> Vec<(usize, f64)> {
    d_filter(order, p)
        .into_iter()
        .enumerate()
        .filter(|(_, v)| *v != 0.0)
        .collect()
}

/// B-spline coefficients on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCoefficients {
    grid: GridSpec,
    c: Vec<f64>,
}

impl SplineCoefficients {
    pub fn new(grid: GridSpec, c: Vec<f64>) -> Result<Self> {
        if c.len() != grid.grid_points {
            return Err(Error::DimensionMismatch { expected: grid.grid_points, got: c.len() });
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(Self { grid, c })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self { grid, c: vec![value; grid.grid_points] }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Coefficients of the uniform spline with the given mean and innovation
    /// weights (`a` must sum to zero).
    pub fn from_innovation(grid: GridSpec, mean: f64, a: &[f64]) -> Result<Self> {
        let p = grid.grid_points;
        if a.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: a.len() });
        }
        let mut buf: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v / grid.innovation_scale(), 0.0)).collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(p).process(&mut buf);
        let dft = d_filter_dft(grid.order, p);
        buf[0] = Complex64::new(mean * p as f64, 0.0);
        for j in 1..p {
            buf[j] /= dft[j];
        }
        planner.plan_fft_inverse(p).process(&mut buf);
        Self::new(grid, buf.iter().map(|v| v.re / p as f64).collect())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.c
    }

    pub fn into_values(self) -> Vec<f64> {
        self.c
    }

    pub fn mean(&self) -> f64 {
        self.c.iter().sum::<f64>() / self.c.len() as f64
    }
}

/// Innovation weights at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationVector {
    grid: GridSpec,
    a: Vec<f64>,
}

impl InnovationVector {
    pub fn new(grid: GridSpec, a: Vec<f64>) -> Result<Self> {
        if a.len() != grid.grid_points {
            return Err(Error::DimensionMismatch { expected: grid.grid_points, got: a.len() });
        }
        Ok(Self { grid, a })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.a
    }

    pub fn l1_norm(&self) -> f64 {
        self.a.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `a = (P/2π)^{M−1} (d_L ∗ c)`.
pub fn innovation(c: &SplineCoefficients) -> InnovationVector {
    let scale = c.grid.innovation_scale();
    let a = cyclic_convolve(c.grid.order, &c.c).into_iter().map(|v| v * scale).collect();
    InnovationVector { grid: c.grid, a }
}

/// Continuous-domain spline represented by `c`.
///
/// The mean is `mean(c)` (partition of unity) and the knots are the grid
/// nodes whose innovation exceeds [`SYNTHESIS_AMP_TOL`] relative to the largest one.
pub fn synthesize(c: &SplineCoefficients) -> PeriodicSpline {
    let a = innovation(c);
    let cut = SYNTHESIS_AMP_TOL * a.max_abs();
    let atoms: Vec<Atom> = a
        .a
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > cut)
        .map(|(p, &weight)| Atom { location: c.grid.node(p), weight })
        .collect();
    let w = ZeroMeanMeasure::canonicalized(atoms, 0.0, 0.0);
    PeriodicSpline::from_innovation(c.grid.order, c.mean(), &w)
}

/// Periodic B-spline `β_per(x)` via the truncated-power formula.
pub fn bspline_eval(grid: &GridSpec, x: f64) -> f64 {
    let m = grid.order as usize;
    let p = grid.grid_points as f64;
    let u0 = wrap(x) / grid.spacing();
    let mut fact = 1.0;
    for j in 2..m {
        fact *= j as f64;
    }
    let cardinal = |u: f64| -> f64 {
        if !(0.0..m as f64).contains(&u) {
            return 0.0;
        }
        let mut binom = 1.0;
        let mut acc = 0.0;
        for j in 0..=m {
            let t = u - j as f64;
            if t >= 0.0 {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * binom * t.powi(m as i32 - 1);
            }
            binom = binom * (m - j) as f64 / (j + 1) as f64;
        }
        acc / fact
    };
    let mut total = 0.0;
    let mut u = u0;
    while u < m as f64 {
        total += cardinal(u);
        u += p;
    }
    total
}

/// Truncated Fourier synthesis `Σ_{|k|≤K} β̂_per[k] e^{ikx}`.
pub fn bspline_eval_fourier(grid: &GridSpec, x: f64, max_freq: usize) -> f64 {
    let mut acc = bspline_fourier_coeff(grid, 0).re;
    for k in 1..=max_freq {
        acc += 2.0 * (bspline_fourier_coeff(grid, k as i64) * Complex64::from_polar(1.0, k as f64 * x)).re;
    }
    acc
}

/// Frequency count used by [`bspline_eval_fourier`] callers by default.
pub fn default_fourier_terms(grid: &GridSpec) -> usize {
    (16 * grid.grid_points).max(64)
}

/// System matrix `H_{k,ℓ} = e^{−ikℓ2π/P} β̂_per[k]`, `k = 0..=K_c`, `ℓ = 0..P`.
#[derive(Clone)]
pub struct SystemMatrix {
    grid: GridSpec,
    beta_hat: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SystemMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemMatrix").field("grid", &self.grid).finish()
    }
}

impl SystemMatrix {
    pub fn new(grid: GridSpec) -> Self {
        let beta_hat = (0..=grid.cutoff).map(|k| bspline_fourier_coeff(&grid, k as i64)).collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.grid_points);
        let inverse = planner.plan_fft_inverse(grid.grid_points);
        Self { grid, beta_hat, forward, inverse }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `β̂_per[k]` for `k = 0..=K_c`.
    pub fn beta_hat(&self) -> &[Complex64] {
        &self.beta_hat
    }

    /// Rows `k = 0..=K_c` of the materialized matrix.
    pub fn dense(&self) -> Vec<Vec<Complex64>> {
        let h = self.grid.spacing();
        self.beta_hat
            .iter()
            .enumerate()
            .map(|(k, b)| {
                (0..self.grid.grid_points)
                    .map(|l| b * Complex64::from_polar(1.0, -(k as f64) * l as f64 * h))
                    .collect()
            })
            .collect()
    }

    fn check_len(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.grid.grid_points {
            return Err(Error::DimensionMismatch { expected: self.grid.grid_points, got: c.len() });
        }
        Ok(())
    }

    fn to_measurement(&self, rows: Vec<Complex64>) -> MeasurementVector {
        MeasurementVector::new(rows[0].re, rows[1..].to_vec())
    }

    /// `H c` through a length-`P` FFT.
    pub fn apply(&self, c: &[f64]) -> Result<MeasurementVector> {
        self.check_len(c)?;
        let p = self.grid.grid_points;
        let mut buf: Vec<Complex64> = c.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let rows = self.beta_hat.iter().enumerate().map(|(k, b)| b * buf[k % p]).collect();
        Ok(self.to_measurement(rows))
    }

    /// `H c` with the materialized matrix.
    pub fn apply_dense(&self, c: &[f64]) -> Result<MeasurementVector> {
        self.check_len(c)?;
        let rows = self
            .dense()
            .iter()
            .map(|row| row.iter().zip(c).map(|(h, &v)| h * v).sum())
            .collect();
        Ok(self.to_measurement(rows))
    }

    /// `Re(Hᴴ z)`, the adjoint for the real inner product on measurements.
    pub fn adjoint_real(&self, z: &MeasurementVector) -> Result<Vec<f64>> {
        if z.cutoff() != self.grid.cutoff {
            return Err(Error::DimensionMismatch { expected: self.grid.cutoff, got: z.cutoff() });
        }
        let p = self.grid.grid_points;
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        for (k, b) in self.beta_hat.iter().enumerate() {
            buf[k % p] += b.conj() * z.get(k);
        }
        self.inverse.process(&mut buf);
        Ok(buf.iter().map(|v| v.re).collect())
    }

    /// Eigenvalues (DFT order) of the circulant operator `Re(HᴴH)`.
    pub fn normal_eigenvalues(&self) -> Vec<f64> {
        let p = self.grid.grid_points;
        let mut g = vec![0.0; p];
        for (k, b) in self.beta_hat.iter().enumerate() {
            let w = b.norm_sqr() * p as f64 / 2.0;
            g[k % p] += w;
            g[(p - k % p) % p] += w;
        }
        g
    }

    pub(crate) fn forward_fft(&self) -> &Arc<dyn Fft<f64>> {
        &self.forward
    }

    pub(crate) fn inverse_fft(&self) -> &Arc<dyn Fft<f64>> {
        &self.inverse
    }
}

/// Grid knots whose weight exceeds `amp_tol · ‖a‖_∞`.
pub fn extract_knots(a: &InnovationVector, amp_tol: f64) -> Vec<Atom> {
    let cut = amp_tol * a.max_abs();
    a.a.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > cut && **v != 0.0)
        .map(|(p, &weight)| Atom { location: a.grid.node(p), weight })
        .collect()
}

/// A group of nearby knots reported as a single knot.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotCluster {
    /// `|weight|`-weighted centroid on the torus, in `[0, 2π)`.
    pub centroid: f64,
    /// Net weight of the members.
    pub weight: f64,
    pub members: usize,
}

/// Merge knots lying within `dist_tol` of each other (transitively, on the
/// torus). Clusters whose `|net weight|` is at most `amp_tol` times the
/// largest cluster weight are dropped.
pub fn merge_knots(knots: &[Atom], dist_tol: f64, amp_tol: f64) -> Vec<KnotCluster> {
    if knots.is_empty() {
        return Vec::new();
    }
    let mut sorted: Vec<Atom> = knots
        .iter()
        .map(|k| Atom { location: wrap(k.location), weight: k.weight })
        .collect();
    sorted.sort_by(|a, b| a.location.total_cmp(&b.location));
    let n = sorted.len();

    // Start the sweep after the largest gap so no cluster straddles the seam.
    let gap = |i: usize| {
        if n == 1 {
            TAU
        } else {
            wrap(sorted[i].location - sorted[(i + n - 1) % n].location)
        }
    };
    let start = (0..n).max_by(|&i, &j| gap(i).total_cmp(&gap(j))).unwrap_or(0);

    let mut groups: Vec<Vec<Atom>> = Vec::new();
    for step in 0..n {
        let i = (start + step) % n;
        let atom = sorted[i];
        let joins = step > 0 && gap(i) <= dist_tol;
        if joins {
            groups.last_mut().expect("nonempty").push(atom);
        } else {
            groups.push(vec![atom]);
        }
    }

    let clusters: Vec<KnotCluster> = groups
        .into_iter()
        .map(|g| {
            let origin = g[0].location;
            let mass: f64 = g.iter().map(|a| a.weight.abs()).sum();
            let offset = if mass > 0.0 {
                g.iter().map(|a| a.weight.abs() * wrap(a.location - origin)).sum::<f64>() / mass
            } else {
                0.0
            };
            KnotCluster {
                centroid: wrap(origin + offset),
                weight: g.iter().map(|a| a.weight).sum(),
                members: g.len(),
            }
        })
        .collect();
    let largest = clusters.iter().fold(0.0_f64, |m, c| m.max(c.weight.abs()));
    let mut kept: Vec<KnotCluster> = clusters
        .into_iter()
        .filter(|c| c.weight.abs() > amp_tol * largest)
        .collect();
    kept.sort_by(|a, b| a.centroid.total_cmp(&b.centroid));
    kept
}
