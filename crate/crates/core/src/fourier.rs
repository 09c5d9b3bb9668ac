//! Fourier-series conventions and continuous-domain spline primitives.
//!
//! Coefficients follow `f̂[k] = (1/2π) ∫ f(x) e^{-ikx} dx`. Under this
//! convention the Dirac stream has coefficients [`DIRAC_STREAM_COEFF`] and the
//! periodic Green's function of `D^M`,
//!
//! ```text
//! g(x) = Σ_{k≠0} e^{ikx} / (ik)^M,
//! ```
//!
//! satisfies `D^M g = 2π·Ш − 1`. Consequently a [`PeriodicSpline`]
//! `a₀ + Σ aₙ g(· − xₙ)` has innovation `Σ (aₙ / DIRAC_STREAM_COEFF) δ(· − xₙ)`.
//! Spline amplitudes are stored in Green's-function units, measures in
//! true Dirac weights; [`PeriodicSpline::innovation`] and
//! [`PeriodicSpline::from_innovation`] convert between the two.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Fourier coefficient of the Dirac stream `Ш = Σ δ(· − 2πn)`.
pub const DIRAC_STREAM_COEFF: f64 = 1.0 / TAU;

/// Two atoms closer than this (torus metric) are the same location.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

/// Reduce `x` to `[0, 2π)`.
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Geodesic distance on the torus `ℝ / 2πℤ`.
pub fn torus_distance(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    d.min(TAU - d)
}

/// Anything that can be sampled on the torus.
pub trait Evaluate {
    fn evaluate(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Evaluate for F {
    fn evaluate(&self, x: f64) -> f64 {
        self(x)
    }
}

/// `(ik)^M` for integer `k`.
pub(crate) fn ik_pow(k: f64, order: u32) -> Complex64 {
    Complex64::new(0.0, k).powu(order)
}

// ---------------------------------------------------------------------------
// Measurement vectors
// ---------------------------------------------------------------------------

/// Observation `y ∈ ℝ × ℂ^{K_c}`: the real mean followed by the complex
/// coefficients of frequencies `1..=K_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    mean: f64,
    coeffs: Vec<Complex64>,
}

impl MeasurementVector {
    pub fn new(mean: f64, coeffs: Vec<Complex64>) -> Self {
        Self { mean, coeffs }
    }

    pub fn zeros(cutoff: usize) -> Self {
        Self {
            mean: 0.0,
            coeffs: vec![Complex64::new(0.0, 0.0); cutoff],
        }
    }

    pub fn cutoff(&self) -> usize {
        self.coeffs.len()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Coefficients for frequencies `1..=K_c`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Component `k` in `0..=K_c`; the mean slot is returned as a real complex.
    pub fn get(&self, k: usize) -> Complex64 {
        if k == 0 {
            Complex64::new(self.mean, 0.0)
        } else {
            self.coeffs[k - 1]
        }
    }

    /// Squared norm counting the mean once and each complex slot as `|·|²`.
    pub fn norm_sq(&self) -> f64 {
        self.mean * self.mean + self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Real inner product matching [`Self::norm_sq`].
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.cutoff(), other.cutoff(), "cutoff mismatch");
        self.mean * other.mean
            + self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| (a.conj() * b).re)
                .sum::<f64>()
    }

    /// Copy with the mean slot zeroed.
    pub fn without_mean(&self) -> Self {
        Self {
            mean: 0.0,
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            mean: self.mean * s,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Measurements of `f(· − x0)` given those of `f`.
    pub fn shifted(&self, x0: f64) -> Self {
        Self {
            mean: self.mean,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * Complex64::from_polar(1.0, -((i + 1) as f64) * x0))
                .collect(),
        }
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        if self.cutoff() != other.cutoff() {
            return Err(Error::DimensionMismatch {
                expected: self.cutoff(),
                got: other.cutoff(),
            });
        }
        Ok(self - other)
    }
}

impl std::ops::Sub for &MeasurementVector {
    type Output = MeasurementVector;

    fn sub(self, rhs: Self) -> MeasurementVector {
        assert_eq!(self.cutoff(), rhs.cutoff(), "cutoff mismatch");
        MeasurementVector {
            mean: self.mean - rhs.mean,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl std::ops::Add for &MeasurementVector {
    type Output = MeasurementVector;

    fn add(self, rhs: Self) -> MeasurementVector {
        assert_eq!(self.cutoff(), rhs.cutoff(), "cutoff mismatch");
        MeasurementVector {
            mean: self.mean + rhs.mean,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Green's functions
// ---------------------------------------------------------------------------

/// Truncated Fourier sum `Σ_{0<|k|≤K_t} e^{ikx}/(ik)^M`.
///
/// For `M ≥ 2` the truncation error is at most `2 Σ_{k>K_t} k^{-M}`.
pub fn green_eval(order: u32, x: f64, truncation: usize) -> Result<f64> {
    if order == 0 {
        return Err(Error::invalid("order must be at least 1"));
    }
    if truncation < 1 {
        return Err(Error::invalid("truncation must be at least 1"));
    }
    let xr = wrap(x);
    if order == 1 && (xr == 0.0 || TAU - xr < ATOM_MERGE_TOL) {
        return Err(Error::Discontinuity);
    }
    // 2 Re(e^{ikx} / (i^M k^M)); i^{-M} selects the trig term.
    let term = |k: usize| -> f64 {
        let kx = k as f64 * xr;
        let t = match order % 4 {
            0 => kx.cos(),
            1 => kx.sin(),
            2 => -kx.cos(),
            _ => -kx.sin(),
        };
        2.0 * t / (k as f64).powi(order as i32)
    };
    // Smallest terms first.
    Ok((1..=truncation).rev().map(term).sum())
}

/// Smallest `K_t` for which the tail bound `2 Σ_{k>K_t} k^{-M} ≤ tol` holds (`M ≥ 2`).
pub fn green_truncation_for_tol(order: u32, tol: f64) -> Result<usize> {
    if order < 2 {
        return Err(Error::invalid("the order-1 Green's series has no uniform tail bound"));
    }
    if tol <= 0.0 {
        return Err(Error::invalid("tolerance must be positive"));
    }
    // 2 Σ_{k>K} k^{-M} ≤ 2 ∫_K^∞ t^{-M} dt = 2 K^{1-M} / (M-1)
    let m = order as f64;
    let k = (2.0 / ((m - 1.0) * tol)).powf(1.0 / (m - 1.0)).ceil();
    Ok(k.max(1.0) as usize)
}

/// Closed-form periodic Green's function of `D^M`.
///
/// On `[0, 2π)` it equals `−(2π)^M / M! · B_M(x / 2π)` with `B_M` the
/// Bernoulli polynomial; for `M = 1` this is the sawtooth `π − x` and for
/// `M = 2` it is `−π²/3 + πx − x²/2`.
#[derive(Debug, Clone)]
pub struct GreenFunction {
    order: u32,
    /// Polynomial coefficients in `t = x/2π`, lowest degree first, already
    /// multiplied by `−(2π)^M / M!`.
    poly: Vec<f64>,
}

impl GreenFunction {
    pub fn new(order: u32) -> Self {
        assert!(order >= 1, "order must be at least 1");
        let m = order as usize;
        let bern = bernoulli_numbers(m);
        let mut fact = 1.0;
        for j in 2..=m {
            fact *= j as f64;
        }
        let scale = -TAU.powi(order as i32) / fact;
        // B_M(t) = Σ_j C(M, j) B_j t^{M-j}
        let mut poly = vec![0.0; m + 1];
        let mut binom = 1.0;
        for (j, b) in bern.iter().enumerate() {
            poly[m - j] = scale * binom * b;
            binom = binom * (m - j) as f64 / (j + 1) as f64;
        }
        Self { order, poly }
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Value at `x`; for `M = 1` the right limit is returned at the jump.
    pub fn eval(&self, x: f64) -> f64 {
        let t = wrap(x) / TAU;
        self.poly.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

/// Convenience wrapper around [`GreenFunction`].
pub fn green(order: u32, x: f64) -> f64 {
    match order {
        1 => {
            let xr = wrap(x);
            PI - xr
        }
        2 => {
            let xr = wrap(x);
            -PI * PI / 3.0 + PI * xr - 0.5 * xr * xr
        }
        _ => GreenFunction::new(order).eval(x),
    }
}

/// Bernoulli numbers `B_0..=B_n` with `B_1 = −1/2`.
fn bernoulli_numbers(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n + 1];
    b[0] = 1.0;
    for m in 1..=n {
        // B_m = −1/(m+1) Σ_{j<m} C(m+1, j) B_j
        let mut binom = 1.0;
        let mut acc = 0.0;
        for (j, bj) in b.iter().enumerate().take(m) {
            acc += binom * bj;
            binom = binom * (m + 1 - j) as f64 / (j + 1) as f64;
        }
        b[m] = -acc / (m as f64 + 1.0);
    }
    b
}

// ---------------------------------------------------------------------------
// Zero-mean measures
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// Finite sum of weighted Dirac masses on the torus with zero total mass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZeroMeanMeasure {
    atoms: Vec<Atom>,
}

impl ZeroMeanMeasure {
    pub fn empty() -> Self {
        Self { atoms: Vec::new() }
    }

    /// Canonicalize `(location, weight)` pairs and check the zero-mass invariant.
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|(location, weight)| Atom { location, weight })
            .collect();
        if atoms.iter().any(|a| !a.location.is_finite() || !a.weight.is_finite()) {
            return Err(Error::invalid("atom locations and weights must be finite"));
        }
        let m = Self::canonicalized(atoms, ATOM_MERGE_TOL, 0.0);
        let l1 = m.tv_norm();
        let mass = m.total_mass();
        if mass.abs() > 1e-12 * l1.max(f64::MIN_POSITIVE) {
            return Err(Error::invalid(format!(
                "measure has nonzero total mass {mass:e}"
            )));
        }
        Ok(m)
    }

    /// `weight · (δ_x − δ_y)`.
    pub fn dipole(x: f64, y: f64, weight: f64) -> Self {
        Self::canonicalized(
            vec![
                Atom { location: x, weight },
                Atom { location: y, weight: -weight },
            ],
            ATOM_MERGE_TOL,
            0.0,
        )
    }

    /// Wrap locations, merge atoms within `merge_tol` on the torus and drop
    /// atoms with `|weight| ≤ drop_tol`. The zero-mass invariant is not checked.
    pub fn canonicalized(mut atoms: Vec<Atom>, merge_tol: f64, drop_tol: f64) -> Self {
        for a in &mut atoms {
            a.location = wrap(a.location);
        }
        atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
        let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match out.last_mut() {
                Some(last) if a.location - last.location <= merge_tol => last.weight += a.weight,
                _ => out.push(a),
            }
        }
        if out.len() > 1 {
            let first = out[0];
            let last = out[out.len() - 1];
            if torus_distance(first.location, last.location) <= merge_tol {
                out[0].weight += last.weight;
                out.pop();
            }
        }
        out.retain(|a| a.weight.abs() > drop_tol);
        Self { atoms: out }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn locations(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.location).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    /// Total-variation norm, i.e. the ℓ1 norm of the weights.
    pub fn tv_norm(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight.abs()).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `⟨w, η⟩ = Σ wₙ η(xₙ)`.
    pub fn pair<E: Evaluate + ?Sized>(&self, eta: &E) -> f64 {
        self.atoms.iter().map(|a| a.weight * eta.evaluate(a.location)).sum()
    }

    /// `α·self + β·other`, canonicalized with the given tolerances.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64, merge_tol: f64, drop_tol: f64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { location: a.location, weight: alpha * a.weight })
            .chain(other.atoms.iter().map(|a| Atom {
                location: a.location,
                weight: beta * a.weight,
            }))
            .collect();
        Self::canonicalized(atoms, merge_tol, drop_tol)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom { location: a.location, weight: s * a.weight })
                .filter(|a| a.weight != 0.0)
                .collect(),
        }
    }
}

/// TV norm of a discrete measure.
pub fn tv_norm(w: &ZeroMeanMeasure) -> f64 {
    w.tv_norm()
}

// ---------------------------------------------------------------------------
// Trigonometric polynomials
// ---------------------------------------------------------------------------

/// Real trigonometric polynomial `mean + Σ_{k=1}^{K} 2 Re(c_k e^{ikx})`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    mean: f64,
    coeffs: Vec<Complex64>,
}

impl TrigPolynomial {
    pub fn new(mean: f64, coeffs: Vec<Complex64>) -> Self {
        Self { mean, coeffs }
    }

    pub fn zero(degree: usize) -> Self {
        Self::new(0.0, vec![Complex64::new(0.0, 0.0); degree])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        let z = Complex64::from_polar(1.0, x);
        let mut zk = Complex64::new(1.0, 0.0);
        let mut acc = 0.0;
        for c in &self.coeffs {
            zk *= z;
            acc += (c * zk).re;
        }
        self.mean + 2.0 * acc
    }

    pub fn derivative(&self) -> Self {
        Self {
            mean: 0.0,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * Complex64::new(0.0, (i + 1) as f64))
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            mean: self.mean * s,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Largest coefficient magnitude, a cheap scale for tolerances.
    pub fn coeff_scale(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| 2.0 * c.norm())
            .sum::<f64>()
            + self.mean.abs()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }
}

impl Evaluate for TrigPolynomial {
    fn evaluate(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

// ---------------------------------------------------------------------------
// Periodic L-splines
// ---------------------------------------------------------------------------

/// Periodic `D^M`-spline `a₀ + Σ aₙ g(· − xₙ)` with zero-sum amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSpline {
    order: u32,
    mean: f64,
    knots: Vec<f64>,
    amplitudes: Vec<f64>,
}

/// Result of a pointwise evaluation. `at_knot` is set when an order-1 spline
/// is sampled exactly at a jump, in which case `value` is the right limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineValue {
    pub value: f64,
    pub at_knot: bool,
}

impl PeriodicSpline {
    pub fn new(order: u32, mean: f64, knots: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("order must be at least 1"));
        }
        if knots.len() != amplitudes.len() {
            return Err(Error::DimensionMismatch {
                expected: knots.len(),
                got: amplitudes.len(),
            });
        }
        if !mean.is_finite() || amplitudes.iter().any(|a| !a.is_finite() || *a == 0.0) {
            return Err(Error::invalid("amplitudes must be finite and nonzero"));
        }
        if knots.iter().any(|x| !(0.0..TAU).contains(x)) {
            return Err(Error::invalid("knots must lie in [0, 2π)"));
        }
        let mut sorted = knots.clone();
        sorted.sort_by(f64::total_cmp);
        let distinct = sorted.windows(2).all(|w| w[1] - w[0] > ATOM_MERGE_TOL)
            && (sorted.len() < 2 || torus_distance(sorted[0], sorted[sorted.len() - 1]) > ATOM_MERGE_TOL);
        if !distinct {
            return Err(Error::invalid("knots must be pairwise distinct"));
        }
        let l1: f64 = amplitudes.iter().map(|a| a.abs()).sum();
        let sum: f64 = amplitudes.iter().sum();
        if sum.abs() > 1e-12 * l1.max(f64::MIN_POSITIVE) {
            return Err(Error::invalid(format!("amplitudes sum to {sum:e}, expected 0")));
        }
        Ok(Self { order, mean, knots, amplitudes })
    }

    pub fn constant(order: u32, mean: f64) -> Self {
        assert!(order >= 1);
        Self { order, mean, knots: Vec::new(), amplitudes: Vec::new() }
    }

    /// Spline `mean + L†w` for a measure `w` (weights are Dirac masses).
    ///
    /// Atoms are canonicalized and the amplitudes are projected onto the
    /// zero-sum subspace to absorb rounding.
    pub fn from_innovation(order: u32, mean: f64, w: &ZeroMeanMeasure) -> Self {
        assert!(order >= 1);
        let w = ZeroMeanMeasure::canonicalized(w.atoms.clone(), ATOM_MERGE_TOL, 0.0);
        let n = w.len();
        let drift = if n > 0 { w.total_mass() / n as f64 } else { 0.0 };
        let (knots, amplitudes) = w
            .atoms
            .iter()
            .map(|a| (a.location, DIRAC_STREAM_COEFF * (a.weight - drift)))
            .filter(|(_, a)| *a != 0.0)
            .unzip();
        Self { order, mean, knots, amplitudes }
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }

    /// Innovation `L f` as a measure.
    pub fn innovation(&self) -> ZeroMeanMeasure {
        ZeroMeanMeasure {
            atoms: self
                .knots
                .iter()
                .zip(&self.amplitudes)
                .map(|(&location, &a)| Atom { location, weight: a / DIRAC_STREAM_COEFF })
                .collect(),
        }
    }

    /// `‖L f‖_M`.
    pub fn tv(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.abs()).sum::<f64>() / DIRAC_STREAM_COEFF
    }

    /// Exact evaluation, with the right limit at order-1 jumps.
    pub fn eval_checked(&self, x: f64) -> SplineValue {
        let g = GreenFunction::new(self.order);
        self.eval_with(&g, x)
    }

    fn eval_with(&self, g: &GreenFunction, x: f64) -> SplineValue {
        let mut at_knot = false;
        let mut value = self.mean;
        for (&xn, &an) in self.knots.iter().zip(&self.amplitudes) {
            let d = wrap(x - xn);
            if self.order == 1 && (d < ATOM_MERGE_TOL || TAU - d < ATOM_MERGE_TOL) {
                at_knot = true;
                value += an * PI;
            } else {
                value += an * g.eval(d);
            }
        }
        SplineValue { value, at_knot }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_checked(x).value
    }

    /// Evaluate on many points, sharing the Green's-function setup.
    pub fn eval_many(&self, xs: &[f64]) -> Vec<f64> {
        let g = GreenFunction::new(self.order);
        xs.iter().map(|&x| self.eval_with(&g, x).value).collect()
    }

    /// `a₀ + Σ aₙ·green_eval(M, x − xₙ, K_t)` using the truncated series.
    pub fn eval_truncated(&self, x: f64, truncation: usize) -> Result<f64> {
        let mut value = self.mean;
        for (&xn, &an) in self.knots.iter().zip(&self.amplitudes) {
            value += an * green_eval(self.order, x - xn, truncation)?;
        }
        Ok(value)
    }

    /// Closed-form low-frequency Fourier coefficients `(f̂[0], …, f̂[K_c])`.
    pub fn measure(&self, cutoff: usize) -> MeasurementVector {
        let coeffs = (1..=cutoff)
            .map(|k| {
                let kf = k as f64;
                let s: Complex64 = self
                    .knots
                    .iter()
                    .zip(&self.amplitudes)
                    .map(|(&x, &a)| a * Complex64::from_polar(1.0, -kf * x))
                    .sum();
                s / ik_pow(kf, self.order)
            })
            .collect();
        MeasurementVector::new(self.mean, coeffs)
    }
}

impl Evaluate for PeriodicSpline {
    fn evaluate(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

/// `a₀ + Σ aₙ g(x − xₙ)` with a truncated Green's series.
pub fn spline_eval(s: &PeriodicSpline, x: f64, truncation: usize) -> Result<f64> {
    s.eval_truncated(x, truncation)
}

/// `ν(s)` in closed form.
pub fn measure(s: &PeriodicSpline, cutoff: usize) -> MeasurementVector {
    s.measure(cutoff)
}

/// Forward operator `ν_L = ν ∘ L†` on measures: slot 0 is always zero and
/// slot `k` is `DIRAC_STREAM_COEFF · Σ wₙ e^{-ikxₙ} / (ik)^M`.
pub fn measure_innovation(w: &ZeroMeanMeasure, order: u32, cutoff: usize) -> MeasurementVector {
    let coeffs = (1..=cutoff)
        .map(|k| {
            let kf = k as f64;
            let s: Complex64 = w
                .atoms
                .iter()
                .map(|a| a.weight * Complex64::from_polar(1.0, -kf * a.location))
                .sum();
            s * DIRAC_STREAM_COEFF / ik_pow(kf, order)
        })
        .collect();
    MeasurementVector::new(0.0, coeffs)
}

/// Adjoint of [`measure_innovation`]:
/// `x ↦ DIRAC_STREAM_COEFF · Σ_{k=1}^{K_c} Re(conj(z_k) e^{-ikx} / (ik)^M)`.
///
/// The mean slot of `z` is ignored. With this scaling,
/// `⟨w̃, apply_adjoint(z)⟩ = ⟨ν_L(w̃), z⟩` holds exactly.
pub fn apply_adjoint(z: &MeasurementVector, order: u32) -> TrigPolynomial {
    let coeffs = z
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, zk)| {
            let kf = (i + 1) as f64;
            // Re(conj(z) e^{-ikx}/(ik)^M) = Re(z e^{ikx}/(−ik)^M)
            zk * (0.5 * DIRAC_STREAM_COEFF) / ik_pow(-kf, order)
        })
        .collect();
    TrigPolynomial::new(0.0, coeffs)
}
