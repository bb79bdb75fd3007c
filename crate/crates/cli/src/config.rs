//! Experiment configuration: a strict TOML schema and its validated form.
//!
//! ```toml
//! seed = 42                       # required
//! scenario = "deterministic"      # verify only
//! horizon = 1.0                   # default 1
//! replicates = 100000             # default 100000
//! k = 4.0                         # ECF bound multiplier, default 4
//! mc_samples = 10000              # Monte Carlo draws for samplable jumps
//!
//! [subordinator]
//! drift = [1.0, 2.0]
//! atoms = [{ point = [1.0, 1.0], rate = 1.0 }]      # optional
//! # gamma = { direction = [1.0, 1.0], shape = 2.0, rate = 3.0 }
//!
//! [subordinate]
//! kind = "brownian"               # or "compound_poisson", "stack"
//! mu = [0.0, 0.0]
//! sigma = [[1.0, 0.5], [0.5, 1.0]]
//!
//! [grid]                          # either explicit points ...
//! points = [[0.0, 0.0, 1.0, 1.0]]
//! # ... or size/scale/seed of a normal grid (defaults 16, 0.5, 0)
//!
//! [exponent]
//! target = "weak"                 # or "stacked", "subordinate"
//!
//! [simulate]
//! kind = "strong"                 # or "weak"
//! mode = "time1"                  # or "paths"
//! observations = [0.5]
//!
//! [output]
//! dir = "out"
//! ```
//!
//! For stacked subordination replace `[subordinator]`/`[subordinate]` with a
//! `[stacked]` table holding `dims`, an `r` subordinator and `blocks`.

use std::path::PathBuf;

use levysub::verify::{
    default_theta_grid, Scenario, StackedParts, DEFAULT_GRID_SCALE, DEFAULT_GRID_SIZE, DEFAULT_K,
};
use levysub::{Atom, JumpMeasure, MonteCarlo, StackEmbedding, SubordinateSpec, SubordinatorSpec};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::CliError;

const DEFAULT_REPLICATES: usize = 100_000;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub scenario: Option<String>,
    pub horizon: Option<f64>,
    pub replicates: Option<usize>,
    pub k: Option<f64>,
    pub mc_samples: Option<usize>,
    pub subordinator: Option<SubordinatorConfig>,
    pub subordinate: Option<SubordinateConfig>,
    pub stacked: Option<StackedConfig>,
    pub grid: Option<GridConfig>,
    pub exponent: Option<ExponentConfig>,
    pub simulate: Option<SimulateConfig>,
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub point: Vec<f64>,
    pub rate: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    pub direction: Vec<f64>,
    pub shape: f64,
    pub rate: f64,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubordinatorConfig {
    pub drift: Vec<f64>,
    #[serde(default)]
    pub atoms: Vec<AtomConfig>,
    pub gamma: Option<GammaConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubordinateConfig {
    Brownian { mu: Vec<f64>, sigma: Vec<Vec<f64>> },
    CompoundPoisson { dim: usize, atoms: Vec<AtomConfig> },
    Stack { blocks: Vec<SubordinateConfig> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackedConfig {
    pub dims: Vec<usize>,
    pub r: SubordinatorConfig,
    pub blocks: Vec<SubordinateConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: Option<Vec<Vec<f64>>>,
    pub size: Option<usize>,
    pub scale: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentTarget {
    /// `Psi` of `(T, X ⊙ T)` at `(theta1, theta2)`.
    #[default]
    Weak,
    /// Closed form of stacked strong subordination; needs `[stacked]`.
    Stacked,
    /// `Psi_X` at `theta` of dimension `n`.
    Subordinate,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentConfig {
    #[serde(default)]
    pub target: ExponentTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulateKind {
    #[default]
    Strong,
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulateMode {
    /// One row per replicate: the state at the horizon.
    #[default]
    Time1,
    /// One CSV per replicate with the recorded path, plus a JSON lines dump.
    Paths,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub kind: SimulateKind,
    #[serde(default)]
    pub mode: SimulateMode,
    #[serde(default)]
    pub observations: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Points(Vec<Vec<f64>>),
    Normal { size: usize, scale: f64, seed: u64 },
}

impl GridSpec {
    pub fn points(&self, dim: usize) -> Vec<Vec<f64>> {
        match self {
            GridSpec::Points(p) => p.clone(),
            GridSpec::Normal { size, scale, seed } => default_theta_grid(dim, *size, *scale, *seed),
        }
    }
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenario: Option<Scenario>,
    pub subordinator: SubordinatorSpec,
    pub subordinate: SubordinateSpec,
    pub stacked: Option<StackedParts>,
    pub horizon: f64,
    pub replicates: usize,
    pub k: f64,
    pub mc: MonteCarlo,
    pub grid: GridSpec,
    pub exponent_target: ExponentTarget,
    pub simulate_kind: SimulateKind,
    pub simulate_mode: SimulateMode,
    pub observations: Vec<f64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn dim(&self) -> usize {
        self.subordinator.dim()
    }
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

pub fn parse_raw(text: &str) -> Result<RawConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))
}

/// Parses and validates; every problem found is reported.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    validate(parse_raw(text)?, &Overrides::default())
}

pub fn validate(raw: RawConfig, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut errors = Vec::new();
    let seed = overrides.seed.or(raw.seed);
    if seed.is_none() {
        errors.push("seed required".to_string());
    }
    let scenario = match raw.scenario.as_deref().map(Scenario::parse).transpose() {
        Ok(s) => s,
        Err(e) => {
            errors.push(e.to_string());
            None
        }
    };
    let horizon = raw.horizon.unwrap_or(1.0);
    if !(horizon > 0.0 && horizon.is_finite()) {
        errors.push(format!("horizon must be positive, got {horizon}"));
    }
    let replicates = overrides
        .replicates
        .or(raw.replicates)
        .unwrap_or(DEFAULT_REPLICATES);
    let k = raw.k.unwrap_or(DEFAULT_K);
    if !(k > 0.0 && k.is_finite()) {
        errors.push(format!("k must be positive, got {k}"));
    }
    let mc = MonteCarlo {
        samples: raw.mc_samples.unwrap_or(MonteCarlo::default().samples),
        seed: seed.unwrap_or(0),
    };
    if mc.samples == 0 {
        errors.push("mc_samples must be positive".into());
    }

    let processes = match (&raw.stacked, &raw.subordinator, &raw.subordinate) {
        (Some(stacked), None, None) => build_stacked(stacked, &mut errors),
        (Some(_), _, _) => {
            errors.push(
                "[stacked] replaces [subordinator] and [subordinate]; give one or the other".into(),
            );
            None
        }
        (None, Some(t), Some(x)) => {
            let t = build_subordinator(t, "subordinator", &mut errors);
            let x = build_subordinate(x, "subordinate", &mut errors);
            match (t, x) {
                (Some(t), Some(x)) if t.dim() != x.dim() => {
                    errors.push(format!(
                        "subordinator has dimension {} but subordinate has dimension {}",
                        t.dim(),
                        x.dim()
                    ));
                    None
                }
                (Some(t), Some(x)) => Some((t, x, None)),
                _ => None,
            }
        }
        (None, t, x) => {
            if t.is_none() {
                errors.push("[subordinator] required".into());
            }
            if x.is_none() {
                errors.push("[subordinate] required".into());
            }
            None
        }
    };

    let grid = raw.grid.unwrap_or_default();
    let grid = match grid.points {
        Some(points) => {
            if grid.size.is_some() || grid.scale.is_some() || grid.seed.is_some() {
                errors.push("grid: give either points or size/scale/seed".into());
            }
            if points.is_empty() {
                errors.push("grid: points must not be empty".into());
            }
            GridSpec::Points(points)
        }
        None => GridSpec::Normal {
            size: grid.size.unwrap_or(DEFAULT_GRID_SIZE),
            scale: grid.scale.unwrap_or(DEFAULT_GRID_SCALE),
            seed: grid.seed.unwrap_or(0),
        },
    };
    if let GridSpec::Normal { size: 0, .. } = grid {
        errors.push("grid: size must be positive".into());
    }

    let exponent_target = raw.exponent.unwrap_or_default().target;
    if exponent_target == ExponentTarget::Stacked && raw.stacked.is_none() {
        errors.push("exponent target \"stacked\" needs a [stacked] table".into());
    }
    let simulate = raw.simulate.unwrap_or_default();
    if simulate
        .observations
        .iter()
        .any(|o| !(*o >= 0.0 && *o <= horizon))
    {
        errors.push(format!("simulate.observations must lie in [0, {horizon}]"));
    }
    let output_dir = overrides
        .output_dir
        .clone()
        .or(raw.output.and_then(|o| o.dir))
        .unwrap_or_else(|| PathBuf::from("out"));

    match (errors.is_empty(), processes, seed) {
        (true, Some((subordinator, subordinate, stacked)), Some(seed)) => Ok(ExperimentConfig {
            seed,
            scenario,
            subordinator,
            subordinate,
            stacked,
            horizon,
            replicates,
            k,
            mc,
            grid,
            exponent_target,
            simulate_kind: simulate.kind,
            simulate_mode: simulate.mode,
            observations: simulate.observations,
            output_dir,
        }),
        _ => Err(CliError::Config(errors)),
    }
}

fn atoms(list: &[AtomConfig]) -> Vec<Atom> {
    list.iter()
        .map(|a| Atom::new(a.point.clone(), a.rate))
        .collect()
}

fn build_subordinator(
    c: &SubordinatorConfig,
    at: &str,
    errors: &mut Vec<String>,
) -> Option<SubordinatorSpec> {
    let result = match &c.gamma {
        Some(_) if !c.atoms.is_empty() => {
            errors.push(format!("{at}: give either atoms or gamma"));
            return None;
        }
        Some(g) if g.direction.len() != c.drift.len() => {
            errors.push(format!(
                "{at}: gamma direction and drift differ in dimension"
            ));
            return None;
        }
        // the truncation drift adds to the configured drift
        Some(g) => {
            SubordinatorSpec::gamma_truncated(g.direction.clone(), g.shape, g.rate, g.epsilon)
                .and_then(|gamma| {
                    let drift = c
                        .drift
                        .iter()
                        .zip(gamma.drift())
                        .map(|(a, b)| a + b)
                        .collect();
                    SubordinatorSpec::new(drift, gamma.jumps().clone())
                })
        }
        None if c.atoms.is_empty() => SubordinatorSpec::new(c.drift.clone(), JumpMeasure::Zero),
        None => SubordinatorSpec::with_atoms(c.drift.clone(), atoms(&c.atoms)),
    };
    result.map_err(|e| errors.push(format!("{at}: {e}"))).ok()
}

fn build_subordinate(
    c: &SubordinateConfig,
    at: &str,
    errors: &mut Vec<String>,
) -> Option<SubordinateSpec> {
    let result = match c {
        SubordinateConfig::Brownian { mu, sigma } => {
            let n = mu.len();
            if sigma.len() != n || sigma.iter().any(|row| row.len() != n) {
                errors.push(format!("{at}: sigma must be {n} x {n}"));
                return None;
            }
            let flat: Vec<f64> = sigma.iter().flatten().copied().collect();
            SubordinateSpec::brownian(mu.clone(), DMatrix::from_row_slice(n, n, &flat))
        }
        SubordinateConfig::CompoundPoisson { dim, atoms: list } => {
            SubordinateSpec::compound_poisson(*dim, atoms(list))
        }
        SubordinateConfig::Stack { blocks } => {
            let built: Vec<Option<SubordinateSpec>> = blocks
                .iter()
                .enumerate()
                .map(|(i, b)| build_subordinate(b, &format!("{at}.blocks[{i}]"), errors))
                .collect();
            let built: Option<Vec<SubordinateSpec>> = built.into_iter().collect();
            SubordinateSpec::stack(built?)
        }
    };
    result.map_err(|e| errors.push(format!("{at}: {e}"))).ok()
}

type Processes = (SubordinatorSpec, SubordinateSpec, Option<StackedParts>);

fn build_stacked(c: &StackedConfig, errors: &mut Vec<String>) -> Option<Processes> {
    let embedding = StackEmbedding::new(c.dims.clone())
        .map_err(|e| errors.push(format!("stacked.dims: {e}")))
        .ok();
    let r = build_subordinator(&c.r, "stacked.r", errors);
    let blocks: Vec<Option<SubordinateSpec>> = c
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| build_subordinate(b, &format!("stacked.blocks[{i}]"), errors))
        .collect();
    let blocks: Option<Vec<SubordinateSpec>> = blocks.into_iter().collect();
    let (embedding, r, blocks) = (embedding?, r?, blocks?);
    match levysub::verify::SuiteConfig::stacked(r, embedding, blocks) {
        Ok(suite) => Some((suite.subordinator, suite.subordinate, suite.stacked)),
        Err(e) => {
            errors.push(format!("stacked: {e}"));
            None
        }
    }
}
