//! Config-driven runs: exponent tables, simulation dumps and verification
//! reports. All outputs are deterministic functions of the config and seed.

pub mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use levysub::rng::Streams;
use levysub::subordination::{simulate_replicates, SubordinationKind};
use levysub::verify::{equality_in_law_suite, SuiteConfig, SuiteReport};
use levysub::{stacked_strong_exponent, weak_exponent, CharExponent, Estimate, PathRecord};
use serde::Serialize;
use thiserror::Error;

pub use config::{
    parse_config, ExperimentConfig, ExponentTarget, Overrides, SimulateKind, SimulateMode,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Core(#[from] levysub::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("JSON serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(_) => "model",
            CliError::Io { .. } => "io",
            CliError::Json(_) => "json",
        }
    }

    /// `{"error": {"kind": ..., "messages": [...]}}`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            messages: Vec<String>,
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: Body<'a>,
        }
        let messages = match self {
            CliError::Config(list) => list.clone(),
            other => vec![other.to_string()],
        };
        serde_json::to_string(&Wrapper {
            error: Body {
                kind: self.kind(),
                messages,
            },
        })
        .expect("error JSON is serializable")
    }
}

/// Shortest round-trip decimal, with `-0` written as `0`.
fn num(x: f64) -> String {
    format!("{}", x + 0.0)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(CliError::io(path))
}

/// Writes `exponent.csv`: `theta_1..theta_m, re_psi, im_psi, se` with `se`
/// empty for exact values. Returns the file path.
pub fn run_exponent(config: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let n = config.dim();
    let dim = match config.exponent_target {
        ExponentTarget::Subordinate => n,
        ExponentTarget::Weak | ExponentTarget::Stacked => 2 * n,
    };
    let grid = config.grid.points(dim);
    let rows = grid
        .iter()
        .map(|theta| {
            if theta.len() != dim {
                return Err(CliError::Config(vec![format!(
                    "grid point of dimension {} for a {dim}-dimensional exponent",
                    theta.len()
                )]));
            }
            let estimate = match config.exponent_target {
                ExponentTarget::Subordinate => Estimate::exact(config.subordinate.exponent(theta)?),
                ExponentTarget::Weak => weak_exponent(
                    &config.subordinator,
                    &config.subordinate,
                    &theta[..n],
                    &theta[n..],
                    &config.mc,
                )?,
                ExponentTarget::Stacked => {
                    let parts = config
                        .stacked
                        .as_ref()
                        .expect("validated: stacked target has parts");
                    stacked_strong_exponent(
                        &parts.r,
                        &parts.embedding,
                        &parts.blocks,
                        &theta[..n],
                        &theta[n..],
                        &config.mc,
                    )?
                }
            };
            Ok((theta, estimate))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let path = config.output_dir.join("exponent.csv");
    let mut w = create(&path)?;
    let write = |w: &mut BufWriter<File>| -> io::Result<()> {
        let header: Vec<String> = (1..=dim).map(|i| format!("theta_{i}")).collect();
        writeln!(w, "{},re_psi,im_psi,se", header.join(","))?;
        for (theta, e) in &rows {
            let cells: Vec<String> = theta.iter().map(|v| num(*v)).collect();
            let se = e.std_error.map(num).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{}",
                cells.join(","),
                num(e.value.re),
                num(e.value.im),
                se
            )?;
        }
        w.flush()
    };
    write(&mut w).map_err(CliError::io(&path))?;
    Ok(path)
}

fn kind(config: &ExperimentConfig) -> SubordinationKind {
    match config.simulate_kind {
        SimulateKind::Strong => SubordinationKind::Strong,
        SimulateKind::Weak => SubordinationKind::Weak,
    }
}

/// `time1` mode writes `samples.csv` (one row per replicate, the state at
/// the horizon); `paths` mode writes `paths/path_<i>.csv` per replicate and
/// `paths.jsonl`. Returns the written paths.
pub fn run_simulate(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let paths = simulate_replicates(
        kind(config),
        &config.subordinator,
        &config.subordinate,
        config.horizon,
        &config.observations,
        &Streams::new(config.seed),
        config.replicates,
    )?;
    let n = config.dim();
    match config.simulate_mode {
        SimulateMode::Time1 => {
            let path = config.output_dir.join("samples.csv");
            let mut w = create(&path)?;
            let write = |w: &mut BufWriter<File>| -> Result<(), CliError> {
                writeln!(w, "{}", PathRecord::csv_header(n)).map_err(CliError::io(&path))?;
                for p in &paths {
                    let state = p.value_at(config.horizon)?;
                    let cells: Vec<String> = state.iter().map(|v| num(*v)).collect();
                    writeln!(w, "{},{}", num(config.horizon), cells.join(","))
                        .map_err(CliError::io(&path))?;
                }
                w.flush().map_err(CliError::io(&path))
            };
            write(&mut w)?;
            Ok(vec![path])
        }
        SimulateMode::Paths => {
            let dir = config.output_dir.join("paths");
            fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
            let mut written = Vec::with_capacity(paths.len() + 1);
            for (i, p) in paths.iter().enumerate() {
                let path = dir.join(format!("path_{i:06}.csv"));
                let mut w = create(&path)?;
                writeln!(w, "{}", PathRecord::csv_header(n))
                    .and_then(|_| p.write_csv_rows(&mut w))
                    .and_then(|_| w.flush())
                    .map_err(CliError::io(&path))?;
                written.push(path);
            }
            let jsonl = config.output_dir.join("paths.jsonl");
            let mut w = create(&jsonl)?;
            for p in &paths {
                serde_json::to_writer(&mut w, p)?;
                writeln!(w).map_err(CliError::io(&jsonl))?;
            }
            w.flush().map_err(CliError::io(&jsonl))?;
            written.push(jsonl);
            Ok(written)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutput {
    pub seed: u64,
    pub passed: bool,
    pub report: SuiteReport,
}

/// Runs the configured scenario and writes `report.json`.
pub fn run_verify(config: &ExperimentConfig) -> Result<(VerifyOutput, PathBuf), CliError> {
    let Some(scenario) = config.scenario else {
        return Err(CliError::Config(vec!["verify needs a scenario".into()]));
    };
    if config.replicates < levysub::verify::MIN_SAMPLES {
        return Err(CliError::Config(vec![format!(
            "verify needs at least {} replicates, got {}",
            levysub::verify::MIN_SAMPLES,
            config.replicates
        )]));
    }
    let mut suite = match &config.stacked {
        Some(parts) => SuiteConfig::stacked(
            parts.r.clone(),
            parts.embedding.clone(),
            parts.blocks.clone(),
        )?,
        None => SuiteConfig::new(config.subordinator.clone(), config.subordinate.clone()),
    };
    suite.time = config.horizon;
    suite.replicates = config.replicates;
    suite.k = config.k;
    suite.mc = config.mc;
    suite.grid = config.grid.points(2 * config.dim());
    let report = equality_in_law_suite(scenario, &suite, &Streams::new(config.seed))?;
    let output = VerifyOutput {
        seed: config.seed,
        passed: report.passed,
        report,
    };
    let path = config.output_dir.join("report.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &output)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(CliError::io(&path))?;
    Ok((output, path))
}

/// Reads, overrides and validates a config file.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    config::validate(config::parse_raw(&text)?, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, -2.5e-17, 1.0 / 3.0, 12345.678, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(-0.0), "0");
        assert_eq!(num(1.0), "1");
    }

    #[test]
    fn error_json_lists_messages() {
        let e = CliError::Config(vec!["seed required".into(), "bad k".into()]);
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["kind"], "config");
        assert_eq!(v["error"]["messages"][0], "seed required");
    }
}
