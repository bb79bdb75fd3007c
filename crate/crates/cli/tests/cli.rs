use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use levysub::rng::{Purpose, Streams};
use levysub::sample_subordinate_at;
use levysub_cli::config::{GridSpec, SimulateMode};
use levysub_cli::{parse_config, run_exponent, run_simulate, CliError};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn levysub(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levysub"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

const BM: &str = r#"
[subordinate]
kind = "brownian"
mu = [0.0, 0.0]
sigma = [[1.0, 0.5], [0.5, 1.0]]
"#;

fn config_errors(text: &str) -> Vec<String> {
    match parse_config(text) {
        Err(CliError::Config(list)) => list,
        other => panic!("expected config errors, got {other:?}"),
    }
}

#[test]
fn minimal_config_gets_defaults() {
    let c = parse_config(&format!(
        "seed = 7\nscenario = \"deterministic\"\n[subordinator]\ndrift = [1.0, 2.0]\n{BM}"
    ))
    .unwrap();
    assert_eq!(c.seed, 7);
    assert_eq!(c.horizon, 1.0);
    assert_eq!(c.replicates, 100_000);
    assert_eq!(c.k, 4.0);
    assert_eq!(c.mc.samples, 10_000);
    assert_eq!(
        c.grid,
        GridSpec::Normal {
            size: 16,
            scale: 0.5,
            seed: 0
        }
    );
    assert_eq!(c.simulate_mode, SimulateMode::Time1);
    assert_eq!(c.output_dir, PathBuf::from("out"));
}

#[test]
fn config_errors_are_reported() {
    let negative = config_errors(&format!(
        "seed = 1\n[subordinator]\ndrift = [-1.0, 2.0]\n{BM}"
    ));
    assert!(
        negative.iter().any(|e| e.contains("orthant violation")),
        "{negative:?}"
    );

    let unseeded = config_errors(&format!("[subordinator]\ndrift = [1.0, 2.0]\n{BM}"));
    assert!(
        unseeded.iter().any(|e| e == "seed required"),
        "{unseeded:?}"
    );

    // several problems are reported together
    let both = config_errors(&format!("[subordinator]\ndrift = [-1.0, 2.0]\n{BM}"));
    assert_eq!(both.len(), 2, "{both:?}");

    let not_psd = config_errors(
        "seed = 1\n[subordinator]\ndrift = [1.0, 1.0]\n[subordinate]\nkind = \"brownian\"\nmu = [0.0, 0.0]\nsigma = [[1.0, 2.0], [2.0, 1.0]]\n",
    );
    assert!(not_psd[0].contains("positive semidefinite"), "{not_psd:?}");
}

#[test]
fn unknown_keys_are_rejected() {
    for text in [
        format!("seed = 1\ncolour = 3\n[subordinator]\ndrift = [1.0, 2.0]\n{BM}"),
        format!("seed = 1\n[subordinator]\ndrift = [1.0, 2.0]\nspeed = 1\n{BM}"),
        format!("seed = 1\n[subordinator]\ndrift = [1.0, 2.0]\n{BM}extra = true\n"),
        format!("seed = 1\n[subordinator]\ndrift = [1.0, 2.0]\n{BM}[grid]\nsize = 4\nwidth = 2\n"),
    ] {
        assert!(
            matches!(parse_config(&text), Err(CliError::Config(_))),
            "{text}"
        );
    }
}

#[test]
fn exponent_rows() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        "seed = 1\n[output]\ndir = {:?}\n[subordinator]\ndrift = [0.0, 0.0]\natoms = [{{ point = [1.0, 1.0], rate = 1.0 }}]\n[subordinate]\nkind = \"brownian\"\nmu = [0.0, 0.0]\nsigma = [[1.0, 0.0], [0.0, 1.0]]\n[grid]\npoints = [[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]\n",
        dir.path()
    );
    let path = run_exponent(&parse_config(&text).unwrap()).unwrap();
    let csv = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "theta_1,theta_2,theta_3,theta_4,re_psi,im_psi,se");
    assert_eq!(lines[1], "0,0,0,0,0,0,");
    let cells: Vec<&str> = lines[2].split(',').collect();
    let re: f64 = cells[4].parse().unwrap();
    assert!((re - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
    assert!((re + 0.63212).abs() < 1e-5);
    assert_eq!(cells[5], "0");
    assert_eq!(cells[6], "");
}

#[test]
fn exponent_is_deterministic_and_reports_mc_error() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = configs().join("gamma_exponent.toml");
    for dir in [&a, &b] {
        let out = levysub(&[
            "exponent",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--quiet",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stdout)
        );
        assert!(out.stdout.is_empty());
    }
    let first = fs::read(a.path().join("exponent.csv")).unwrap();
    assert_eq!(first, fs::read(b.path().join("exponent.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(
        text.lines().skip(1).all(|l| !l.ends_with(',')),
        "SE must be present for MC rows"
    );
}

#[test]
fn simulate_zero_subordinate_and_empty_runs() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        "seed = 3\nreplicates = 50\n[output]\ndir = {:?}\n[subordinator]\ndrift = [0.5, 0.0]\natoms = [{{ point = [1.0, 2.0], rate = 3.0 }}]\n[subordinate]\nkind = \"brownian\"\nmu = [0.0, 0.0]\nsigma = [[0.0, 0.0], [0.0, 0.0]]\n",
        dir.path()
    );
    let mut c = parse_config(&text).unwrap();
    let files = run_simulate(&c).unwrap();
    let csv = fs::read_to_string(&files[0]).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "time,T_1,T_2,Z_1,Z_2");
    assert_eq!(csv.lines().count(), 51);
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(&cells[3..], &["0", "0"]);
    }

    c.replicates = 0;
    let files = run_simulate(&c).unwrap();
    assert_eq!(
        fs::read_to_string(&files[0]).unwrap(),
        "time,T_1,T_2,Z_1,Z_2\n"
    );
}

#[test]
fn identity_time_change_reproduces_subordinate_draws() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        "seed = 11\nreplicates = 20\n[output]\ndir = {:?}\n[subordinator]\ndrift = [1.0, 1.0]\n{BM}",
        dir.path()
    );
    let c = parse_config(&text).unwrap();
    let files = run_simulate(&c).unwrap();
    let csv = fs::read_to_string(&files[0]).unwrap();
    let streams = Streams::new(11);
    for (i, line) in csv.lines().skip(1).enumerate() {
        let z: Vec<f64> = line
            .split(',')
            .skip(3)
            .map(|v| v.parse().unwrap())
            .collect();
        let direct = sample_subordinate_at(
            &c.subordinate,
            &[1.0, 1.0],
            &mut streams.stream(Purpose::Strong, i as u64),
        )
        .unwrap();
        assert_eq!(z, direct);
    }
}

#[test]
fn simulate_paths_mode() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        "seed = 5\nreplicates = 3\nhorizon = 2.0\n[simulate]\nkind = \"weak\"\nmode = \"paths\"\nobservations = [1.0]\n[output]\ndir = {:?}\n[subordinator]\ndrift = [0.0, 0.0]\natoms = [{{ point = [1.0, 1.0], rate = 1.0 }}]\n{BM}",
        dir.path()
    );
    let files = run_simulate(&parse_config(&text).unwrap()).unwrap();
    assert_eq!(files.len(), 4);
    let first = fs::read_to_string(&files[0]).unwrap();
    let rows: Vec<&str> = first.lines().collect();
    assert_eq!(rows[0], "time,T_1,T_2,Z_1,Z_2");
    assert!(rows[1].starts_with("0,0,0,0,0"));
    assert!(rows.iter().any(|r| r.starts_with("1,")));
    assert!(rows.last().unwrap().starts_with("2,"));
    let jsonl = fs::read_to_string(&files[3]).unwrap();
    assert_eq!(jsonl.lines().count(), 3);
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["horizon"], 2.0);
    }
}

fn verify(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    levysub(&args)
}

fn report(dir: &TempDir) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap()
}

#[test]
fn verify_deterministic_scenario_passes_and_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = configs().join("deterministic.toml");
    let out = verify(&cfg, a.path(), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("scenario deterministic: PASS"));
    assert_eq!(report(&a)["passed"], true);
    assert_eq!(report(&a)["report"]["strong_vs_target"]["n"], 100_000);
    assert_eq!(verify(&cfg, b.path(), &["--quiet"]).status.code(), Some(0));
    assert_eq!(
        fs::read(a.path().join("report.json")).unwrap(),
        fs::read(b.path().join("report.json")).unwrap()
    );
}

#[test]
fn verify_stacked_scenario_passes() {
    let dir = TempDir::new().unwrap();
    let out = verify(&configs().join("stacked.toml"), dir.path(), &["--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&dir);
    assert_eq!(r["report"]["scenario"], "stacked_C3");
    assert!(
        r["report"]["exponent_agreement"]["max_abs_diff"]
            .as_f64()
            .unwrap()
            <= 1e-10
    );
}

#[test]
fn verify_finite_activity_scenario_passes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        verify(
            &configs().join("finite_activity.toml"),
            dir.path(),
            &["--quiet"]
        )
        .status
        .code(),
        Some(0)
    );
}

#[test]
fn negative_control_exits_zero_on_mismatch() {
    let dir = TempDir::new().unwrap();
    let out = verify(
        &configs().join("negative_control.toml"),
        dir.path(),
        &["--quiet"],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(&dir);
    assert_eq!(r["report"]["negative_control"]["mismatch_observed"], true);
    assert!(
        r["report"]["negative_control"]["effect_size"]
            .as_f64()
            .unwrap()
            > 2.0
    );
}

#[test]
fn verify_failure_and_errors_set_exit_status() {
    let dir = TempDir::new().unwrap();
    // a deterministic config run as negative control is inconsistent
    let cfg = write_config(
        &dir,
        &format!(
            "seed = 1\nscenario = \"negative_control\"\n[subordinator]\ndrift = [1.0, 2.0]\n{BM}"
        ),
    );
    let out = verify(&cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"]["kind"], "model");

    let cfg = write_config(
        &dir,
        "seed = 1\nscenario = \"deterministic\"\n[subordinator\n",
    );
    let out = verify(&cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"]["kind"], "config");

    let cfg = write_config(
        &dir,
        &format!("scenario = \"deterministic\"\n[subordinator]\ndrift = [1.0, 2.0]\n{BM}"),
    );
    let out = verify(&cfg, dir.path(), &["--replicates", "50"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"]["messages"][0], "seed required");

    // --seed supplies the missing seed; 50 replicates is then too few
    let out = verify(&cfg, dir.path(), &["--replicates", "50", "--seed", "9"]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["error"]["messages"][0]
        .as_str()
        .unwrap()
        .contains("at least 100"));

    // a verdict failure (not an error): k = 0.01 makes the bound unattainable
    let cfg = write_config(
        &dir,
        &format!("seed = 1\nscenario = \"deterministic\"\nk = 0.01\nreplicates = 1000\n[subordinator]\ndrift = [1.0, 2.0]\n{BM}"),
    );
    let out = verify(&cfg, dir.path(), &["--quiet"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&dir)["passed"], false);
}
