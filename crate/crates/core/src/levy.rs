//! Characteristic triplets and exponents of the supported Lévy families.
//!
//! Finite-activity jump measures are kept in the uncompensated form: the
//! exponent of a triplet `(mu, sigma, jumps)` is
//!
//! ```text
//! Psi(theta) = i<mu, theta> - theta sigma theta' / 2 + ∫ (e^{i<theta, x>} - 1) jumps(dx)
//! ```
//!
//! so `mu` is the drift of the continuous part. [`CharTriplet::to_unit_ball_truncated`]
//! and [`CharTriplet::from_unit_ball_truncated`] convert to and from the
//! convention where the integrand is compensated by `i<theta, x> 1{|x| <= 1}`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{Purpose, Streams};

/// Eigenvalue floor for positive semidefiniteness, applied after symmetrisation.
pub const PSD_TOLERANCE: f64 = 1e-10;

const I: Complex64 = Complex64::new(0.0, 1.0);

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn quad_form(sigma: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let n = theta.len();
    let mut acc = 0.0;
    for r in 0..n {
        if theta[r] == 0.0 {
            continue;
        }
        for c in 0..n {
            acc += theta[r] * sigma[(r, c)] * theta[c];
        }
    }
    acc
}

fn symmetrize(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    (sigma + sigma.transpose()) * 0.5
}

fn min_eigenvalue(sigma: &DMatrix<f64>) -> f64 {
    if sigma.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(sigma))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// A square root `F` with `F F' = sigma`, built from the eigendecomposition so
/// that singular covariances are accepted.
fn psd_factor(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sigma.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(sigma));
    let mut factor = eig.eigenvectors.clone();
    for c in 0..n {
        let s = eig.eigenvalues[c].max(0.0).sqrt();
        for r in 0..n {
            factor[(r, c)] *= s;
        }
    }
    factor
}

/// A value that is either exact (`std_error == None`) or a Monte Carlo mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: Complex64,
    pub std_error: Option<f64>,
}

impl Estimate {
    pub fn exact(value: Complex64) -> Self {
        Self {
            value,
            std_error: None,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.std_error.is_none()
    }

    /// Sum of independent estimates; standard errors add in quadrature.
    pub fn plus(self, other: Estimate) -> Estimate {
        let se = match (self.std_error, other.std_error) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0.0).hypot(b.unwrap_or(0.0))),
        };
        Estimate {
            value: self.value + other.value,
            std_error: se,
        }
    }

    pub fn map(self, f: impl FnOnce(Complex64) -> Complex64) -> Estimate {
        Estimate {
            value: f(self.value),
            std_error: self.std_error,
        }
    }
}

/// Settings for integrals against samplable jump measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
        }
    }
}

/// A point mass of a finite jump measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub point: Vec<f64>,
    pub rate: f64,
}

impl Atom {
    pub fn new(point: Vec<f64>, rate: f64) -> Self {
        Self { point, rate }
    }
}

/// Normalised jump-size laws that can be sampled but not summed exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum JumpSampler {
    /// Jumps `s * direction` with `s` exponential of the given mean.
    ExponentialRay { direction: Vec<f64>, mean: f64 },
    /// Jumps `s * direction` with `s` drawn from the density proportional to
    /// `s^{-1} e^{-rate s}` on `s > epsilon` (the tail of a gamma Lévy measure).
    GammaTail {
        direction: Vec<f64>,
        rate: f64,
        epsilon: f64,
    },
}

impl JumpSampler {
    fn direction(&self) -> &[f64] {
        match self {
            JumpSampler::ExponentialRay { direction, .. } => direction,
            JumpSampler::GammaTail { direction, .. } => direction,
        }
    }

    fn sample_scale<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpSampler::ExponentialRay { mean, .. } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
            JumpSampler::GammaTail { rate, epsilon, .. } => {
                sample_gamma_tail(rate * epsilon, rng) / rate
            }
        }
    }

    fn mean_scale(&self) -> f64 {
        match *self {
            JumpSampler::ExponentialRay { mean, .. } => mean,
            JumpSampler::GammaTail { rate, epsilon, .. } => {
                let a = rate * epsilon;
                (-a).exp() / (rate * exp_integral_e1(a))
            }
        }
    }
}

/// Draws `u > a` with density proportional to `u^{-1} e^{-u}`.
fn sample_gamma_tail<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a >= 1.0 {
        loop {
            let e: f64 = Exp1.sample(rng);
            let u = a + e;
            if rng.random::<f64>() * u <= a {
                return u;
            }
        }
    }
    // envelope e^{-a}/u on (a, 1) and e^{-u} on [1, ∞)
    let mass_low = (-a).exp() * (1.0 / a).ln();
    let mass_high = (-1.0f64).exp();
    loop {
        if rng.random::<f64>() * (mass_low + mass_high) < mass_low {
            // log-uniform on (a, 1), thinned by e^{-(u - a)}
            let u = a * (1.0 / a).powf(rng.random::<f64>());
            if rng.random::<f64>() <= (a - u).exp() {
                return u;
            }
        } else {
            let e: f64 = Exp1.sample(rng);
            let u = 1.0 + e;
            if rng.random::<f64>() * u <= 1.0 {
                return u;
            }
        }
    }
}

/// Exponential integral `E1(x) = ∫_x^∞ e^{-u}/u du` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    assert!(x > 0.0, "E1 is defined for positive arguments");
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER - x.ln() - sum
    } else {
        // modified Lentz continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// A finite (finite-activity) jump measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum JumpMeasure {
    Zero,
    Atoms(Vec<Atom>),
    Samplable {
        total_mass: f64,
        sampler: JumpSampler,
        mean_jump: Option<Vec<f64>>,
    },
}

impl JumpMeasure {
    pub fn atoms(atoms: Vec<Atom>) -> Self {
        if atoms.is_empty() {
            JumpMeasure::Zero
        } else {
            JumpMeasure::Atoms(atoms)
        }
    }

    pub fn samplable(total_mass: f64, sampler: JumpSampler) -> Result<Self> {
        if !(total_mass.is_finite() && total_mass > 0.0) {
            return Err(Error::InvalidJumpMeasure(format!(
                "total mass must be positive and finite, got {total_mass}"
            )));
        }
        let ok = match &sampler {
            JumpSampler::ExponentialRay { mean, .. } => *mean > 0.0 && mean.is_finite(),
            JumpSampler::GammaTail { rate, epsilon, .. } => {
                *rate > 0.0 && *epsilon > 0.0 && rate.is_finite() && epsilon.is_finite()
            }
        };
        if !ok || norm(sampler.direction()) == 0.0 {
            return Err(Error::InvalidJumpMeasure(format!(
                "sampler parameters out of range: {sampler:?}"
            )));
        }
        let m = sampler.mean_scale();
        let mean_jump = Some(sampler.direction().iter().map(|d| d * m).collect());
        Ok(JumpMeasure::Samplable {
            total_mass,
            sampler,
            mean_jump,
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, JumpMeasure::Zero)
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            JumpMeasure::Zero => 0.0,
            JumpMeasure::Atoms(a) => a.iter().map(|a| a.rate).sum(),
            JumpMeasure::Samplable { total_mass, .. } => *total_mass,
        }
    }

    /// Dimension of the jump points, `None` for the zero measure.
    pub fn dim(&self) -> Option<usize> {
        match self {
            JumpMeasure::Zero => None,
            JumpMeasure::Atoms(a) => a.first().map(|a| a.point.len()),
            JumpMeasure::Samplable { sampler, .. } => Some(sampler.direction().len()),
        }
    }

    /// Mean of the normalised jump law, when it is known in closed form.
    pub fn mean_jump(&self) -> Option<Vec<f64>> {
        match self {
            JumpMeasure::Zero => None,
            JumpMeasure::Atoms(atoms) => {
                let total = self.total_mass();
                let dim = atoms[0].point.len();
                let mut m = vec![0.0; dim];
                for a in atoms {
                    for (mi, p) in m.iter_mut().zip(&a.point) {
                        *mi += a.rate * p / total;
                    }
                }
                Some(m)
            }
            JumpMeasure::Samplable { mean_jump, .. } => mean_jump.clone(),
        }
    }

    /// One jump from the normalised measure.
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            JumpMeasure::Zero => Vec::new(),
            JumpMeasure::Atoms(atoms) => {
                let total: f64 = atoms.iter().map(|a| a.rate).sum();
                let mut u = rng.random::<f64>() * total;
                for a in atoms {
                    if u < a.rate {
                        return a.point.clone();
                    }
                    u -= a.rate;
                }
                atoms[atoms.len() - 1].point.clone()
            }
            JumpMeasure::Samplable { sampler, .. } => {
                let s = sampler.sample_scale(rng);
                sampler.direction().iter().map(|d| d * s).collect()
            }
        }
    }

    /// `∫ f(x) measure(dx)`: an exact sum for atoms, a Monte Carlo mean
    /// (with standard error) for samplable measures.
    pub fn integrate<F>(&self, f: F, mc: &MonteCarlo) -> Estimate
    where
        F: Fn(&[f64]) -> Complex64,
    {
        match self {
            JumpMeasure::Zero => Estimate::exact(Complex64::new(0.0, 0.0)),
            JumpMeasure::Atoms(atoms) => Estimate::exact(
                atoms
                    .iter()
                    .map(|a| f(&a.point) * a.rate)
                    .fold(Complex64::new(0.0, 0.0), |acc, v| acc + v),
            ),
            JumpMeasure::Samplable { total_mass, .. } => {
                let n = mc.samples.max(2);
                let mut rng = Streams::new(mc.seed).stream(Purpose::Integration, 0);
                let mut sum = Complex64::new(0.0, 0.0);
                let mut sq = 0.0;
                for _ in 0..n {
                    let v = f(&self.sample_jump(&mut rng));
                    sum += v;
                    sq += v.norm_sqr();
                }
                let mean = sum / n as f64;
                let var = ((sq / n as f64) - mean.norm_sqr()).max(0.0) * n as f64 / (n - 1) as f64;
                Estimate {
                    value: mean * *total_mass,
                    std_error: Some(*total_mass * (var / n as f64).sqrt()),
                }
            }
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self.dim() {
            Some(d) => Error::check_dim("jump measure", dim, d),
            None => Ok(()),
        }
    }
}

/// Lévy triplet `(mu, sigma, jumps)` in the uncompensated convention.
#[derive(Debug, Clone, PartialEq)]
pub struct CharTriplet {
    pub mu: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub jumps: JumpMeasure,
}

impl CharTriplet {
    pub fn zero(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            sigma: DMatrix::zeros(dim, dim),
            jumps: JumpMeasure::Zero,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn exponent(&self, theta: &[f64], mc: &MonteCarlo) -> Result<Estimate> {
        Error::check_dim("triplet exponent", self.dim(), theta.len())?;
        let gauss = Complex64::new(-0.5 * quad_form(&self.sigma, theta), dot(&self.mu, theta));
        let jumps = self
            .jumps
            .integrate(|x| (I * dot(theta, x)).exp() - 1.0, mc);
        Ok(jumps.map(|j| j + gauss))
    }

    /// `∫_{|x| <= 1} x jumps(dx)`, per coordinate, with standard errors when
    /// the measure is only samplable.
    pub fn unit_ball_mean(&self, mc: &MonteCarlo) -> (Vec<f64>, Option<Vec<f64>>) {
        let dim = self.dim();
        let mut mean = vec![0.0; dim];
        let mut se: Option<Vec<f64>> = None;
        for (k, m) in mean.iter_mut().enumerate() {
            let est = self.jumps.integrate(
                |x| {
                    if norm(x) <= 1.0 {
                        Complex64::new(x[k], 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                },
                mc,
            );
            *m = est.value.re;
            if let Some(s) = est.std_error {
                se.get_or_insert_with(|| vec![0.0; dim])[k] = s;
            }
        }
        (mean, se)
    }

    /// The same law with drift expressed relative to the unit-ball truncation.
    pub fn to_unit_ball_truncated(&self, mc: &MonteCarlo) -> CharTriplet {
        let (shift, _) = self.unit_ball_mean(mc);
        CharTriplet {
            mu: self.mu.iter().zip(&shift).map(|(m, s)| m + s).collect(),
            sigma: self.sigma.clone(),
            jumps: self.jumps.clone(),
        }
    }

    pub fn from_unit_ball_truncated(truncated: &CharTriplet, mc: &MonteCarlo) -> CharTriplet {
        let (shift, _) = truncated.unit_ball_mean(mc);
        CharTriplet {
            mu: truncated
                .mu
                .iter()
                .zip(&shift)
                .map(|(m, s)| m - s)
                .collect(),
            sigma: truncated.sigma.clone(),
            jumps: truncated.jumps.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TripletKind {
    General,
    Subordinator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    DimensionMismatch,
    NotSymmetric,
    NotPsd,
    NonFinite,
    InvalidAtom,
    InvalidMass,
    NonzeroCovariance,
    OrthantViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

/// Violated invariants of a triplet; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            message: message.into(),
            value: None,
        });
    }

    /// The first violation as an error, if any.
    pub fn into_result(self) -> Result<()> {
        let Some(v) = self.violations.into_iter().next() else {
            return Ok(());
        };
        Err(match v.kind {
            ViolationKind::OrthantViolation => Error::OrthantViolation(v.message),
            ViolationKind::NotPsd => Error::NotPsd {
                min_eigenvalue: v.value.unwrap_or(f64::NAN),
            },
            ViolationKind::InvalidAtom | ViolationKind::InvalidMass => {
                Error::InvalidJumpMeasure(v.message)
            }
            ViolationKind::DimensionMismatch => Error::InvalidParameter {
                name: "dimension",
                reason: v.message,
            },
            _ => Error::InvalidParameter {
                name: "triplet",
                reason: v.message,
            },
        })
    }
}

/// Lists every violated invariant of `triplet`.
pub fn validate_triplet(triplet: &CharTriplet, kind: TripletKind) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = triplet.dim();
    if triplet.mu.iter().any(|v| !v.is_finite()) {
        report.push(ViolationKind::NonFinite, "drift has non-finite entries");
    }
    if triplet.sigma.nrows() != n || triplet.sigma.ncols() != n {
        report.push(
            ViolationKind::DimensionMismatch,
            format!(
                "covariance is {}x{}, drift has dimension {n}",
                triplet.sigma.nrows(),
                triplet.sigma.ncols()
            ),
        );
    } else if triplet.sigma.iter().any(|v| !v.is_finite()) {
        report.push(
            ViolationKind::NonFinite,
            "covariance has non-finite entries",
        );
    } else {
        let asym = (&triplet.sigma - triplet.sigma.transpose()).abs().max();
        let scale = triplet.sigma.abs().max().max(1.0);
        if asym > PSD_TOLERANCE * scale {
            report.push(
                ViolationKind::NotSymmetric,
                format!("covariance asymmetry {asym:e}"),
            );
        }
        let min_eig = min_eigenvalue(&triplet.sigma);
        if min_eig < -PSD_TOLERANCE {
            report.push(
                ViolationKind::NotPsd,
                format!("covariance is not positive semidefinite: smallest eigenvalue {min_eig}"),
            );
            if let Some(v) = report.violations.last_mut() {
                v.value = Some(min_eig);
            }
        }
        if kind == TripletKind::Subordinator && triplet.sigma.iter().any(|v| *v != 0.0) {
            report.push(
                ViolationKind::NonzeroCovariance,
                "a subordinator has no Gaussian part",
            );
        }
    }
    if kind == TripletKind::Subordinator {
        for (i, d) in triplet.mu.iter().enumerate() {
            if *d < 0.0 {
                report.push(
                    ViolationKind::OrthantViolation,
                    format!("drift coordinate {i} is negative ({d})"),
                );
            }
        }
    }
    match &triplet.jumps {
        JumpMeasure::Zero => {}
        JumpMeasure::Atoms(atoms) => {
            for (i, a) in atoms.iter().enumerate() {
                if a.point.len() != n {
                    report.push(
                        ViolationKind::DimensionMismatch,
                        format!("atom {i} has dimension {}, expected {n}", a.point.len()),
                    );
                    continue;
                }
                if a.point.iter().any(|v| !v.is_finite()) {
                    report.push(ViolationKind::NonFinite, format!("atom {i} is not finite"));
                } else if a.point.iter().all(|v| *v == 0.0) {
                    report.push(
                        ViolationKind::InvalidAtom,
                        format!("atom {i} sits at the origin"),
                    );
                }
                if !(a.rate.is_finite() && a.rate > 0.0) {
                    report.push(
                        ViolationKind::InvalidAtom,
                        format!("atom {i} has non-positive rate {}", a.rate),
                    );
                }
                if kind == TripletKind::Subordinator && a.point.iter().any(|v| *v < 0.0) {
                    report.push(
                        ViolationKind::OrthantViolation,
                        format!("atom {i} at {:?} leaves the nonnegative orthant", a.point),
                    );
                }
            }
        }
        JumpMeasure::Samplable {
            total_mass,
            sampler,
            ..
        } => {
            if !(total_mass.is_finite() && *total_mass > 0.0) {
                report.push(
                    ViolationKind::InvalidMass,
                    format!("total mass {total_mass} is not positive and finite"),
                );
            }
            let dir = sampler.direction();
            if dir.len() != n {
                report.push(
                    ViolationKind::DimensionMismatch,
                    format!(
                        "sampler direction has dimension {}, expected {n}",
                        dir.len()
                    ),
                );
            }
            if kind == TripletKind::Subordinator && dir.iter().any(|v| *v < 0.0) {
                report.push(
                    ViolationKind::OrthantViolation,
                    "sampler direction leaves the nonnegative orthant",
                );
            }
        }
    }
    report
}

/// `i<mu, theta> - theta sigma theta' / 2`.
pub fn exponent_bm(mu: &[f64], sigma: &DMatrix<f64>, theta: &[f64]) -> Result<Complex64> {
    Error::check_dim("Brownian exponent (mu)", mu.len(), theta.len())?;
    Error::check_dim("Brownian exponent (sigma)", sigma.nrows(), theta.len())?;
    Error::check_dim("Brownian exponent (sigma)", sigma.ncols(), theta.len())?;
    let min_eig = min_eigenvalue(sigma);
    if min_eig < -PSD_TOLERANCE {
        return Err(Error::NotPsd {
            min_eigenvalue: min_eig,
        });
    }
    Ok(Complex64::new(
        -0.5 * quad_form(sigma, theta),
        dot(mu, theta),
    ))
}

/// `sum rate (e^{i<theta, x>} - 1)` over the atoms (uncompensated form).
pub fn exponent_cpp(atoms: &[Atom], theta: &[f64]) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for a in atoms {
        Error::check_dim("compound Poisson exponent", a.point.len(), theta.len())?;
        if !(a.rate.is_finite() && a.rate > 0.0) || a.point.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidJumpMeasure(format!(
                "atom {:?} with rate {} is not a valid jump",
                a.point, a.rate
            )));
        }
        acc += ((I * dot(theta, &a.point)).exp() - 1.0) * a.rate;
    }
    Ok(acc)
}

/// A characteristic exponent `theta -> Psi(theta)`.
pub trait CharExponent: Sync {
    fn dim(&self) -> usize;
    fn exponent(&self, theta: &[f64]) -> Result<Complex64>;
}

/// Exponent of independent blocks: the sum of each block's exponent on its
/// own slice of `theta`.
pub fn kac_stack_exponent(blocks: &[&dyn CharExponent], theta: &[f64]) -> Result<Complex64> {
    let total: usize = blocks.iter().map(|b| b.dim()).sum();
    Error::check_dim("stack exponent", total, theta.len())?;
    let mut offset = 0;
    let mut acc = Complex64::new(0.0, 0.0);
    for b in blocks {
        let d = b.dim();
        acc += b.exponent(&theta[offset..offset + d])?;
        offset += d;
    }
    Ok(acc)
}

/// A subordinator `S(d, jumps)` with jumps in the nonnegative orthant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubordinatorSpec {
    drift: Vec<f64>,
    jumps: JumpMeasure,
}

impl SubordinatorSpec {
    pub fn new(drift: Vec<f64>, jumps: JumpMeasure) -> Result<Self> {
        let spec = Self { drift, jumps };
        validate_triplet(&spec.as_triplet(), TripletKind::Subordinator).into_result()?;
        Ok(spec)
    }

    pub fn deterministic(drift: Vec<f64>) -> Result<Self> {
        Self::new(drift, JumpMeasure::Zero)
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            drift: vec![0.0; dim],
            jumps: JumpMeasure::Zero,
        }
    }

    pub fn with_atoms(drift: Vec<f64>, atoms: Vec<Atom>) -> Result<Self> {
        Self::new(drift, JumpMeasure::atoms(atoms))
    }

    /// A gamma subordinator along `direction` (Lévy density
    /// `shape s^{-1} e^{-rate s}` for the scalar size `s`) with jumps of size
    /// `s <= epsilon` replaced by their mean contribution as drift.
    ///
    /// When `epsilon` is `None` it is chosen so the removed expected time
    /// per unit time is below `1e-3` in every coordinate.
    pub fn gamma_truncated(
        direction: Vec<f64>,
        shape: f64,
        rate: f64,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "shape",
                reason: format!("must be positive, got {shape}"),
            });
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "rate",
                reason: format!("must be positive, got {rate}"),
            });
        }
        let scale = direction.iter().cloned().fold(0.0, f64::max);
        if scale <= 0.0 || direction.iter().any(|d| *d < 0.0) {
            return Err(Error::OrthantViolation(
                "gamma direction must be nonnegative and nonzero".into(),
            ));
        }
        let epsilon = epsilon.unwrap_or(1e-3 / (shape * scale));
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("must be positive, got {epsilon}"),
            });
        }
        // ∫_0^eps s * shape s^{-1} e^{-rate s} ds
        let removed = shape * (-(-rate * epsilon).exp_m1()) / rate;
        let drift = direction.iter().map(|d| d * removed).collect();
        let mass = shape * exp_integral_e1(rate * epsilon);
        let jumps = JumpMeasure::samplable(
            mass,
            JumpSampler::GammaTail {
                direction,
                rate,
                epsilon,
            },
        )?;
        Self::new(drift, jumps)
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn jumps(&self) -> &JumpMeasure {
        &self.jumps
    }

    pub fn is_deterministic(&self) -> bool {
        self.jumps.is_zero()
    }

    pub fn total_mass(&self) -> f64 {
        self.jumps.total_mass()
    }

    pub fn as_triplet(&self) -> CharTriplet {
        CharTriplet {
            mu: self.drift.clone(),
            sigma: DMatrix::zeros(self.dim(), self.dim()),
            jumps: self.jumps.clone(),
        }
    }

    /// Characteristic exponent `Psi_T`.
    pub fn exponent(&self, theta: &[f64], mc: &MonteCarlo) -> Result<Estimate> {
        self.as_triplet().exponent(theta, mc)
    }
}

/// `Lambda_T(z) = <d, z> + ∫ (1 - e^{-<z, t>}) T(dt)` for `Re z >= 0`.
pub fn laplace_exponent(
    spec: &SubordinatorSpec,
    z: &[Complex64],
    mc: &MonteCarlo,
) -> Result<Estimate> {
    Error::check_dim("Laplace exponent", spec.dim(), z.len())?;
    for (index, zi) in z.iter().enumerate() {
        if zi.re < 0.0 || !zi.re.is_finite() || !zi.im.is_finite() {
            return Err(Error::NegativeRealPart {
                index,
                value: zi.re,
            });
        }
    }
    let linear: Complex64 = spec.drift.iter().zip(z).map(|(d, zi)| zi * *d).sum();
    let jumps = spec.jumps.integrate(
        |t| {
            let zt: Complex64 = z.iter().zip(t).map(|(zi, ti)| zi * *ti).sum();
            1.0 - (-zt).exp()
        },
        mc,
    );
    Ok(jumps.map(|j| j + linear))
}

/// Brownian motion with drift `mu` and covariance `sigma` per unit time.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianMotion {
    mu: Vec<f64>,
    sigma: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl BrownianMotion {
    pub fn new(mu: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let triplet = CharTriplet {
            mu,
            sigma,
            jumps: JumpMeasure::Zero,
        };
        validate_triplet(&triplet, TripletKind::General).into_result()?;
        let sigma = symmetrize(&triplet.sigma);
        Ok(Self {
            factor: psd_factor(&sigma),
            mu: triplet.mu,
            sigma,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        let n = self.mu.len();
        let sd = dt.sqrt();
        let mut z = [0.0f64; 8];
        let mut z_heap;
        let z: &mut [f64] = if n <= 8 {
            &mut z[..n]
        } else {
            z_heap = vec![0.0; n];
            &mut z_heap
        };
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        for (r, o) in out.iter_mut().enumerate() {
            let acc: f64 = z
                .iter()
                .enumerate()
                .map(|(c, zc)| self.factor[(r, c)] * zc)
                .sum();
            *o = self.mu[r] * dt + sd * acc;
        }
    }
}

/// Driftless compound Poisson process with atomic jump measure.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundPoisson {
    dim: usize,
    jumps: JumpMeasure,
}

impl CompoundPoisson {
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        let triplet = CharTriplet {
            mu: vec![0.0; dim],
            sigma: DMatrix::zeros(dim, dim),
            jumps: JumpMeasure::atoms(atoms),
        };
        validate_triplet(&triplet, TripletKind::General).into_result()?;
        Ok(Self {
            dim,
            jumps: triplet.jumps,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        match &self.jumps {
            JumpMeasure::Atoms(a) => a,
            _ => &[],
        }
    }

    fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        out.fill(0.0);
        let count = poisson_count(self.jumps.total_mass() * dt, rng);
        for _ in 0..count {
            let x = self.jumps.sample_jump(rng);
            for (o, xi) in out.iter_mut().zip(&x) {
                *o += xi;
            }
        }
    }
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("finite positive Poisson mean");
    let k: f64 = p.sample(rng);
    k as u64
}

/// An exactly samplable subordinate Lévy process.
#[derive(Debug, Clone, PartialEq)]
pub enum SubordinateSpec {
    BrownianMotion(BrownianMotion),
    CompoundPoisson(CompoundPoisson),
    /// Independent blocks `(Y_1, ..., Y_d)` stacked in order.
    IndependentStack(Vec<SubordinateSpec>),
}

impl SubordinateSpec {
    pub fn brownian(mu: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        Ok(Self::BrownianMotion(BrownianMotion::new(mu, sigma)?))
    }

    pub fn standard_brownian(dim: usize) -> Self {
        Self::brownian(vec![0.0; dim], DMatrix::identity(dim, dim)).expect("identity is PSD")
    }

    /// The zero process in `dim` dimensions.
    pub fn zero(dim: usize) -> Self {
        Self::brownian(vec![0.0; dim], DMatrix::zeros(dim, dim)).expect("zero is PSD")
    }

    pub fn compound_poisson(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        Ok(Self::CompoundPoisson(CompoundPoisson::new(dim, atoms)?))
    }

    pub fn stack(blocks: Vec<SubordinateSpec>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidParameter {
                name: "stack",
                reason: "needs at least one block".into(),
            });
        }
        Ok(Self::IndependentStack(blocks))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::BrownianMotion(b) => b.mu.len(),
            Self::CompoundPoisson(c) => c.dim,
            Self::IndependentStack(blocks) => blocks.iter().map(|b| b.dim()).sum(),
        }
    }

    /// Block dimensions `n_1, ..., n_d` (a single block unless stacked).
    pub fn block_dims(&self) -> Vec<usize> {
        match self {
            Self::IndependentStack(blocks) => blocks.iter().map(|b| b.dim()).collect(),
            other => vec![other.dim()],
        }
    }

    /// True when every coordinate stays at zero.
    pub fn is_zero_process(&self) -> bool {
        match self {
            Self::BrownianMotion(b) => {
                b.mu.iter().all(|v| *v == 0.0) && b.sigma.iter().all(|v| *v == 0.0)
            }
            Self::CompoundPoisson(c) => c.jumps.is_zero(),
            Self::IndependentStack(blocks) => blocks.iter().all(|b| b.is_zero_process()),
        }
    }

    pub fn triplet(&self) -> CharTriplet {
        match self {
            Self::BrownianMotion(b) => CharTriplet {
                mu: b.mu.clone(),
                sigma: b.sigma.clone(),
                jumps: JumpMeasure::Zero,
            },
            Self::CompoundPoisson(c) => CharTriplet {
                mu: vec![0.0; c.dim],
                sigma: DMatrix::zeros(c.dim, c.dim),
                jumps: c.jumps.clone(),
            },
            Self::IndependentStack(blocks) => {
                let n = self.dim();
                let mut mu = Vec::with_capacity(n);
                let mut sigma = DMatrix::zeros(n, n);
                let mut atoms = Vec::new();
                let mut offset = 0;
                for b in blocks {
                    let t = b.triplet();
                    let d = t.dim();
                    mu.extend_from_slice(&t.mu);
                    sigma.view_mut((offset, offset), (d, d)).copy_from(&t.sigma);
                    if let JumpMeasure::Atoms(block_atoms) = &t.jumps {
                        for a in block_atoms {
                            let mut p = vec![0.0; n];
                            p[offset..offset + d].copy_from_slice(&a.point);
                            atoms.push(Atom::new(p, a.rate));
                        }
                    }
                    offset += d;
                }
                CharTriplet {
                    mu,
                    sigma,
                    jumps: JumpMeasure::atoms(atoms),
                }
            }
        }
    }

    /// Writes one draw of `X(dt)` into `out`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        match self {
            Self::BrownianMotion(b) => b.sample_increment(dt, rng, out),
            Self::CompoundPoisson(c) => c.sample_increment(dt, rng, out),
            Self::IndependentStack(blocks) => {
                let mut offset = 0;
                for b in blocks {
                    let d = b.dim();
                    b.sample_increment(dt, rng, &mut out[offset..offset + d]);
                    offset += d;
                }
            }
        }
    }

    pub(crate) fn exponent_unchecked(&self, theta: &[f64]) -> Complex64 {
        match self {
            Self::BrownianMotion(b) => {
                Complex64::new(-0.5 * quad_form(&b.sigma, theta), dot(&b.mu, theta))
            }
            Self::CompoundPoisson(c) => c
                .atoms()
                .iter()
                .map(|a| ((I * dot(theta, &a.point)).exp() - 1.0) * a.rate)
                .sum(),
            Self::IndependentStack(blocks) => {
                let mut offset = 0;
                let mut acc = Complex64::new(0.0, 0.0);
                for b in blocks {
                    let d = b.dim();
                    acc += b.exponent_unchecked(&theta[offset..offset + d]);
                    offset += d;
                }
                acc
            }
        }
    }
}

impl CharExponent for SubordinateSpec {
    fn dim(&self) -> usize {
        SubordinateSpec::dim(self)
    }

    fn exponent(&self, theta: &[f64]) -> Result<Complex64> {
        Error::check_dim("subordinate exponent", self.dim(), theta.len())?;
        Ok(self.exponent_unchecked(theta))
    }
}

impl CharTriplet {
    /// Validates dimensions of the jump part against the drift.
    pub fn check_jump_dim(&self) -> Result<()> {
        self.jumps.check_dim(self.dim())
    }
}
