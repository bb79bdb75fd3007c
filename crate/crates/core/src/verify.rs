//! Empirical characteristic functions, CLT-bounded comparisons and the
//! equality-in-law suites for strong versus weak subordination.
//!
//! For `N` i.i.d. samples the real and imaginary parts of the ECF each have
//! variance at most `1/N`, so `k·√(2/N)` bounds `|ecf − Φ|` at about `k`
//! standard deviations.

use std::fmt;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::{JumpMeasure, JumpSampler, MonteCarlo, SubordinateSpec, SubordinatorSpec};
use crate::rng::{Purpose, Streams};
use crate::subordination::{
    simulate_replicates, stacked_strong_exponent, states_at, weak_exponent, PathRecord,
    StackEmbedding, SubordinationKind,
};

pub const DEFAULT_K: f64 = 4.0;
pub const DEFAULT_GRID_SIZE: usize = 16;
pub const DEFAULT_GRID_SCALE: f64 = 0.5;
/// Minimum sample count for a comparison.
pub const MIN_SAMPLES: usize = 100;
/// Agreement required between two exact exponent evaluations.
pub const EXPONENT_TOLERANCE: f64 = 1e-10;

/// Samples per parallel chunk; fixed so the summation order never depends on
/// the thread count.
const CHUNK: usize = 4096;

/// `(1/N) Σ e^{i<theta, x_k>}`.
pub fn ecf(samples: &[Vec<f64>], theta: &[f64]) -> Result<Complex64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != theta.len()) {
        return Err(Error::DimensionMismatch {
            context: "ecf",
            expected: theta.len(),
            got: bad.len(),
        });
    }
    let partial: Vec<Complex64> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|x| {
                    let phase: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
                    Complex64::new(phase.cos(), phase.sin())
                })
                .sum::<Complex64>()
        })
        .collect();
    Ok(partial.into_iter().sum::<Complex64>() / samples.len() as f64)
}

/// Per-θ comparison of an ECF against a target characteristic function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcfReport {
    pub theta_grid: Vec<Vec<f64>>,
    pub ecf: Vec<Complex64>,
    pub target: Vec<Complex64>,
    pub bound: Vec<f64>,
    pub verdict: Vec<bool>,
    pub pass: bool,
    pub n: usize,
    pub k: f64,
}

impl EcfReport {
    pub fn deviations(&self) -> Vec<f64> {
        self.ecf
            .iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b).norm())
            .collect()
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations().into_iter().fold(0.0, f64::max)
    }

    /// Largest `|ecf − target| / bound` over the grid.
    pub fn max_ratio(&self) -> f64 {
        self.deviations()
            .iter()
            .zip(&self.bound)
            .map(|(d, b)| d / b)
            .fold(0.0, f64::max)
    }

    fn build(
        grid: &[Vec<f64>],
        ecf: Vec<Complex64>,
        target: Vec<Complex64>,
        bound: f64,
        n: usize,
        k: f64,
    ) -> Self {
        let verdict: Vec<bool> = ecf
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).norm() <= bound)
            .collect();
        Self {
            theta_grid: grid.to_vec(),
            pass: verdict.iter().all(|v| *v),
            bound: vec![bound; grid.len()],
            ecf,
            target,
            verdict,
            n,
            k,
        }
    }
}

impl fmt::Display for EcfReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let failed = self.verdict.iter().filter(|v| !**v).count();
        write!(
            f,
            "{} (N={}, k={}, {} of {} θ outside bound {:.4e}, max |diff| {:.4e})",
            if self.pass { "pass" } else { "FAIL" },
            self.n,
            self.k,
            failed,
            self.verdict.len(),
            self.bound.first().copied().unwrap_or(f64::NAN),
            self.max_deviation(),
        )
    }
}

fn check_grid(grid: &[Vec<f64>], dim: usize) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::DegenerateGrid("empty θ grid".into()));
    }
    if let Some(bad) = grid.iter().find(|t| t.len() != dim) {
        return Err(Error::DegenerateGrid(format!(
            "θ of dimension {} against samples of dimension {dim}",
            bad.len()
        )));
    }
    if grid.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateGrid("non-finite θ".into()));
    }
    Ok(())
}

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "k",
            reason: format!("must be positive, got {k}"),
        })
    }
}

fn ecf_grid(samples: &[Vec<f64>], grid: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    grid.iter().map(|theta| ecf(samples, theta)).collect()
}

/// Compares the ECF of `samples` with `target` on `grid`, bound `k·√(2/N)`.
pub fn cf_compare<F>(
    samples: &[Vec<f64>],
    target: F,
    grid: &[Vec<f64>],
    k: f64,
) -> Result<EcfReport>
where
    F: Fn(&[f64]) -> Result<Complex64>,
{
    check_k(k)?;
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            min: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    check_grid(grid, samples[0].len())?;
    let values = ecf_grid(samples, grid)?;
    let targets = grid.iter().map(|t| target(t)).collect::<Result<Vec<_>>>()?;
    let n = samples.len();
    Ok(EcfReport::build(
        grid,
        values,
        targets,
        k * (2.0 / n as f64).sqrt(),
        n,
        k,
    ))
}

/// Compares two independent samples; bound `k·√(2/N_a + 2/N_b)`, `target`
/// holds the ECF of `b` and `n` the smaller sample size.
pub fn cf_compare_two_sample(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    grid: &[Vec<f64>],
    k: f64,
) -> Result<EcfReport> {
    check_k(k)?;
    let n = a.len().min(b.len());
    if n < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            min: MIN_SAMPLES,
            got: n,
        });
    }
    check_grid(grid, a[0].len())?;
    let bound = k * (2.0 / a.len() as f64 + 2.0 / b.len() as f64).sqrt();
    Ok(EcfReport::build(
        grid,
        ecf_grid(a, grid)?,
        ecf_grid(b, grid)?,
        bound,
        n,
        k,
    ))
}

/// `size` points `scale·N(0, I_dim)` from a fixed-seed stream.
pub fn default_theta_grid(dim: usize, size: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = Streams::new(seed).stream(Purpose::Grid, 0);
    (0..size)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                })
                .collect()
        })
        .collect()
}

/// ECF comparisons of window increments `Z((w+1)·lag) − Z(w·lag)`, each window
/// against the first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    pub lag: f64,
    pub windows: usize,
    pub comparisons: Vec<EcfReport>,
    pub pass: bool,
}

pub fn increment_stationarity_check(
    paths: &[PathRecord],
    lag: f64,
    windows: usize,
    grid: &[Vec<f64>],
    k: f64,
) -> Result<StationarityReport> {
    if windows < 2 {
        return Err(Error::InvalidParameter {
            name: "windows",
            reason: format!("need at least 2, got {windows}"),
        });
    }
    if !(lag > 0.0 && lag.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "lag",
            reason: format!("must be positive, got {lag}"),
        });
    }
    let required = lag * windows as f64;
    if let Some(p) = paths.iter().find(|p| p.horizon < required) {
        return Err(Error::PathTooShort {
            horizon: p.horizon,
            required,
        });
    }
    let increments = |w: usize| -> Result<Vec<Vec<f64>>> {
        let lo = w as f64 * lag;
        let hi = (w + 1) as f64 * lag;
        paths
            .iter()
            .map(|p| {
                let a = p.value_at(lo)?;
                let b = p.value_at(hi.min(p.horizon))?;
                Ok(b.iter().zip(&a).map(|(x, y)| x - y).collect())
            })
            .collect()
    };
    let first = increments(0)?;
    let comparisons = (1..windows)
        .map(|w| cf_compare_two_sample(&increments(w)?, &first, grid, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(StationarityReport {
        lag,
        windows,
        pass: comparisons.iter().all(|c| c.pass),
        comparisons,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Deterministic,
    #[serde(rename = "finite_activity_C1")]
    FiniteActivityC1,
    #[serde(rename = "stacked_C3")]
    StackedC3,
    NegativeControl,
}

impl Scenario {
    pub fn id(self) -> &'static str {
        match self {
            Scenario::Deterministic => "deterministic",
            Scenario::FiniteActivityC1 => "finite_activity_C1",
            Scenario::StackedC3 => "stacked_C3",
            Scenario::NegativeControl => "negative_control",
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        [
            Scenario::Deterministic,
            Scenario::FiniteActivityC1,
            Scenario::StackedC3,
            Scenario::NegativeControl,
        ]
        .into_iter()
        .find(|s| s.id() == id)
        .ok_or_else(|| Error::ScenarioMismatch(format!("unknown scenario {id:?}")))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// The univariate pieces of a stacked subordination `T = A R`, `X = (Y_1..Y_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedParts {
    pub r: SubordinatorSpec,
    pub embedding: StackEmbedding,
    pub blocks: Vec<SubordinateSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityConfig {
    pub lag: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub subordinator: SubordinatorSpec,
    pub subordinate: SubordinateSpec,
    pub stacked: Option<StackedParts>,
    /// Time at which samples are compared; usually 1.
    pub time: f64,
    pub replicates: usize,
    pub k: f64,
    /// Points of dimension `2n`, `(theta1, theta2)`.
    pub grid: Vec<Vec<f64>>,
    /// Random θ used to compare stacked and weak exponents.
    pub exponent_points: usize,
    pub stationarity: Option<StationarityConfig>,
    pub mc: MonteCarlo,
}

impl SuiteConfig {
    /// Defaults: time 1, `N = 10^5`, `k = 4`, the default 16-point grid.
    pub fn new(subordinator: SubordinatorSpec, subordinate: SubordinateSpec) -> Self {
        let n = subordinator.dim();
        Self {
            subordinator,
            subordinate,
            stacked: None,
            time: 1.0,
            replicates: 100_000,
            k: DEFAULT_K,
            grid: default_theta_grid(2 * n, DEFAULT_GRID_SIZE, DEFAULT_GRID_SCALE, 0),
            exponent_points: 100,
            stationarity: None,
            mc: MonteCarlo::default(),
        }
    }

    /// Builds `T = A R` and `X = (Y_1..Y_d)` from their parts.
    pub fn stacked(
        r: SubordinatorSpec,
        embedding: StackEmbedding,
        blocks: Vec<SubordinateSpec>,
    ) -> Result<Self> {
        Error::check_dim("stacked blocks", embedding.blocks(), blocks.len())?;
        for (b, &m) in blocks.iter().zip(embedding.dims()) {
            Error::check_dim("stacked block", m, b.dim())?;
        }
        let t = embedding.embed_subordinator(&r)?;
        let x = if blocks.len() == 1 {
            blocks[0].clone()
        } else {
            SubordinateSpec::stack(blocks.clone())?
        };
        let mut config = Self::new(t, x);
        config.stacked = Some(StackedParts {
            r,
            embedding,
            blocks,
        });
        Ok(config)
    }
}

/// Agreement of `stacked_strong_exponent` with `weak_exponent`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentAgreement {
    pub points: usize,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Effect size of the strong-versus-weak mismatch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MismatchSummary {
    pub max_deviation: f64,
    pub bound: f64,
    /// `max_deviation / bound`.
    pub effect_size: f64,
    /// Mismatch is declared when some θ deviates by more than this multiple
    /// of the bound.
    pub threshold: f64,
    pub points_beyond_threshold: usize,
    pub mismatch_observed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub scenario: Scenario,
    pub n: usize,
    pub time: f64,
    pub strong_vs_target: EcfReport,
    pub weak_vs_target: EcfReport,
    pub strong_vs_weak: EcfReport,
    pub exponent_agreement: Option<ExponentAgreement>,
    pub negative_control: Option<MismatchSummary>,
    pub stationarity: Option<StationarityReport>,
    /// Scenario outcome: for the negative control, whether a mismatch was
    /// observed; otherwise whether every check passed.
    pub passed: bool,
}

impl SuiteReport {
    pub fn summary(&self) -> String {
        let mut out = format!(
            "scenario {}: {}\n  strong vs target: {}\n  weak vs target:   {}\n  strong vs weak:   {}\n",
            self.scenario,
            if self.passed { "PASS" } else { "FAIL" },
            self.strong_vs_target,
            self.weak_vs_target,
            self.strong_vs_weak,
        );
        if let Some(e) = &self.exponent_agreement {
            out += &format!(
                "  stacked vs weak exponent: max |diff| {:.3e} over {} θ (tolerance {:.0e})\n",
                e.max_abs_diff, e.points, e.tolerance
            );
        }
        if let Some(m) = &self.negative_control {
            out += &format!(
                "  mismatch: max |diff| {:.4e} = {:.2} x bound, {} θ beyond {} x bound\n",
                m.max_deviation, m.effect_size, m.points_beyond_threshold, m.threshold
            );
        }
        if let Some(s) = &self.stationarity {
            out += &format!(
                "  increment stationarity ({} windows of {}): {}\n",
                s.windows,
                s.lag,
                if s.pass { "pass" } else { "FAIL" }
            );
        }
        out
    }
}

/// Whether every jump has equal coordinates (condition C1 with `d = 0`).
fn jumps_on_diagonal(jumps: &JumpMeasure) -> bool {
    let diagonal = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
    match jumps {
        JumpMeasure::Zero => true,
        JumpMeasure::Atoms(atoms) => atoms.iter().all(|a| diagonal(&a.point)),
        JumpMeasure::Samplable { sampler, .. } => match sampler {
            JumpSampler::ExponentialRay { direction, .. }
            | JumpSampler::GammaTail { direction, .. } => diagonal(direction),
        },
    }
}

fn check_scenario(scenario: Scenario, config: &SuiteConfig) -> Result<()> {
    let t = &config.subordinator;
    let n = t.dim();
    let mismatch = |msg: String| Err(Error::ScenarioMismatch(msg));
    Error::check_dim("suite subordinate", n, config.subordinate.dim())?;
    if config.replicates < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            min: MIN_SAMPLES,
            got: config.replicates,
        });
    }
    check_k(config.k)?;
    check_grid(&config.grid, 2 * n)?;
    if !(config.time > 0.0 && config.time.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "time",
            reason: format!("must be positive, got {}", config.time),
        });
    }
    let driftless = t.drift().iter().all(|d| *d == 0.0);
    match scenario {
        Scenario::Deterministic => {
            if !t.is_deterministic() {
                return mismatch(
                    "deterministic scenario needs a subordinator without jumps".into(),
                );
            }
        }
        Scenario::FiniteActivityC1 => {
            if !driftless || t.jumps().is_zero() {
                return mismatch(
                    "finite_activity_C1 needs a driftless subordinator with jumps".into(),
                );
            }
            if !jumps_on_diagonal(t.jumps()) {
                return mismatch("finite_activity_C1 needs jumps with equal coordinates".into());
            }
        }
        Scenario::StackedC3 => {
            if config.stacked.is_none() {
                return mismatch("stacked_C3 needs the univariate stack parts".into());
            }
        }
        Scenario::NegativeControl => {
            if !driftless || t.jumps().is_zero() {
                return mismatch(
                    "negative_control needs a driftless subordinator with jumps".into(),
                );
            }
            if jumps_on_diagonal(t.jumps()) {
                return mismatch(
                    "negative_control needs jumps outside the diagonal (otherwise strong equals weak)".into(),
                );
            }
        }
    }
    Ok(())
}

fn exponent_agreement(
    config: &SuiteConfig,
    parts: &StackedParts,
    streams: &Streams,
) -> Result<ExponentAgreement> {
    let n = config.subordinator.dim();
    let mut rng = streams.stream(Purpose::Exponent, 0);
    let mut max_abs_diff: f64 = 0.0;
    let mut tolerance = EXPONENT_TOLERANCE;
    for _ in 0..config.exponent_points {
        let theta: Vec<f64> = (0..2 * n)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let (t1, t2) = theta.split_at(n);
        let stacked = stacked_strong_exponent(
            &parts.r,
            &parts.embedding,
            &parts.blocks,
            t1,
            t2,
            &config.mc,
        )?;
        let weak = weak_exponent(
            &config.subordinator,
            &config.subordinate,
            t1,
            t2,
            &config.mc,
        )?;
        if let (Some(a), Some(b)) = (stacked.std_error, weak.std_error) {
            // Both are Monte Carlo estimates from unrelated integrands.
            tolerance = tolerance.max(DEFAULT_K * a.hypot(b));
        }
        max_abs_diff = max_abs_diff.max((stacked.value - weak.value).norm());
    }
    Ok(ExponentAgreement {
        points: config.exponent_points,
        max_abs_diff,
        tolerance,
        pass: max_abs_diff <= tolerance,
    })
}

/// Runs strong and weak simulation for `scenario` and compares their time-`t`
/// ECFs with `exp(weak_exponent)` and with each other. The two-sample
/// comparison uses twice the one-sample bound.
pub fn equality_in_law_suite(
    scenario: Scenario,
    config: &SuiteConfig,
    streams: &Streams,
) -> Result<SuiteReport> {
    check_scenario(scenario, config)?;
    let t = &config.subordinator;
    let x = &config.subordinate;
    let n = t.dim();
    let horizon = match config.stationarity {
        Some(s) => config.time.max(s.lag * s.windows as f64),
        None => config.time,
    };
    let mut observations = vec![config.time];
    if let Some(s) = config.stationarity {
        observations.extend((1..=s.windows).map(|w| w as f64 * s.lag));
    }
    let strong_paths = simulate_replicates(
        SubordinationKind::Strong,
        t,
        x,
        horizon,
        &observations,
        &streams.child(1),
        config.replicates,
    )?;
    let weak_paths = simulate_replicates(
        SubordinationKind::Weak,
        t,
        x,
        horizon,
        &observations,
        &streams.child(2),
        config.replicates,
    )?;
    let strong = states_at(&strong_paths, config.time)?;
    let weak = states_at(&weak_paths, config.time)?;

    let targets: Vec<Complex64> = config
        .grid
        .iter()
        .map(|theta| {
            let (t1, t2) = theta.split_at(n);
            let psi = weak_exponent(t, x, t1, t2, &config.mc)?;
            Ok((psi.value * config.time).exp())
        })
        .collect::<Result<_>>()?;
    let target_at = |theta: &[f64]| -> Result<Complex64> {
        let i = config
            .grid
            .iter()
            .position(|g| g.as_slice() == theta)
            .expect("θ comes from the grid");
        Ok(targets[i])
    };
    let strong_vs_target = cf_compare(&strong, target_at, &config.grid, config.k)?;
    let weak_vs_target = cf_compare(&weak, target_at, &config.grid, config.k)?;
    // k' with k'·√(2/N_a + 2/N_b) = 2k·√(2/N) when N_a = N_b = N.
    let strong_vs_weak = cf_compare_two_sample(
        &strong,
        &weak,
        &config.grid,
        config.k * std::f64::consts::SQRT_2,
    )?;

    let exponent_agreement = match (&config.stacked, scenario) {
        (Some(parts), Scenario::StackedC3) => Some(exponent_agreement(config, parts, streams)?),
        _ => None,
    };

    let stationarity = match config.stationarity {
        Some(s) => Some(increment_stationarity_check(
            &strong_paths,
            s.lag,
            s.windows,
            &config.grid,
            config.k,
        )?),
        None => None,
    };

    let negative_control = (scenario == Scenario::NegativeControl).then(|| {
        let threshold = 2.0;
        let bound = strong_vs_target.bound[0];
        let beyond = strong_vs_target
            .deviations()
            .iter()
            .filter(|d| **d > threshold * bound)
            .count();
        MismatchSummary {
            max_deviation: strong_vs_target.max_deviation(),
            bound,
            effect_size: strong_vs_target.max_ratio(),
            threshold,
            points_beyond_threshold: beyond,
            mismatch_observed: beyond > 0,
        }
    });

    let passed = match &negative_control {
        Some(m) => m.mismatch_observed,
        None => {
            strong_vs_target.pass
                && weak_vs_target.pass
                && strong_vs_weak.pass
                && exponent_agreement.as_ref().is_none_or(|e| e.pass)
                && stationarity.as_ref().is_none_or(|s| s.pass)
        }
    };

    Ok(SuiteReport {
        scenario,
        n: config.replicates,
        time: config.time,
        strong_vs_target,
        weak_vs_target,
        strong_vs_weak,
        exponent_agreement,
        negative_control,
        stationarity,
        passed,
    })
}
