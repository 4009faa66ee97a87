use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ris_pilot::allocation::Allocator;
use ris_pilot::cli::config::{resolve, RawConfig};
use ris_pilot::cli::output::{read_metrics_csv, read_powers_csv, MetricsRow, ValidationReport};
use ris_pilot::cli::{cmd_allocate, cmd_sweep};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ris-pilot"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SWEEP: &str = r#"
[power]
p_avg = "-13 dBm"

[two_ris]
d0_m = 50.0
elements = [16, 16]

[experiment]
seed = 11
trials = 300
allocators = ["uniform", "eq28", "exact"]
d_range = "-16:16:8"
"#;

#[test]
fn allocate_equal_array_doubling() {
    let dir = tempfile::tempdir().unwrap();
    // beta_1^2 = 16 beta_2^2
    let cfg = write(
        dir.path(),
        "fig2.toml",
        "[large_scale]\nbeta_sq = [1.6e-9, 1e-10]\nelements = [1, 1]\n[experiment]\nallocators = [\"eq29\", \"uniform\"]\n",
    );
    let out = run(&["allocate", "--config", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("eq29") && text.contains("pilot_power_dbm") && text.contains("phi"));

    let raw = RawConfig::parse(&fs::read_to_string(&cfg).unwrap()).unwrap();
    let table = cmd_allocate(&resolve(&raw).unwrap()).unwrap();
    let p = table.entries[0].powers.as_slice();
    assert!((p[1] / p[0] - 2.0).abs() < 1e-14);
}

#[test]
fn allocate_symmetric_rows_are_identical() {
    let raw = RawConfig::parse(
        "[two_ris]\nd0_m = 50.0\nelements = [8, 8]\n[experiment]\nallocators = [\"uniform\", \"eq27\", \"eq28\", \"eq29\", \"exact\"]\n",
    )
    .unwrap();
    let table = cmd_allocate(&resolve(&raw).unwrap()).unwrap();
    let first = table.entries[0].powers.as_slice().to_vec();
    for e in &table.entries {
        for (a, b) in e.powers.as_slice().iter().zip(&first) {
            assert!((a - b).abs() <= 1e-12 * b, "{:?}", e.allocator);
        }
    }
}

#[test]
fn missing_and_corrupt_inputs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", "[large_scale]\nelements = [4, 4]\n");
    let out = run(&["allocate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("large_scale.beta_sq"));

    let cfg = write(
        dir.path(),
        "b.toml",
        "[large_scale]\nbeta_sq = [1e-10, -1e-10]\nelements = [4, 4]\n",
    );
    let out = run(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("large_scale.beta_sq[1]"));

    let cfg = write(dir.path(), "c.toml", "[geometry]\nuser = [1.0, 2.0, 0.0]\n");
    let out = run(&["allocate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("geometry.bs"));

    let out = run(&["allocate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_passes_and_flags_small_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "v.toml",
        "[power]\np_avg = \"10 dBm\"\n[two_ris]\nd0_m = 30.0\nd_m = 6.0\nelements = [16, 8]\n[experiment]\ntrials = 20000\nseed = 3\n",
    );
    let out = run(&[
        "validate",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    let report: ValidationReport = serde_json::from_str(&stdout).unwrap();
    assert_eq!(serde_json::to_value(report.status).unwrap(), "pass");
    assert!(report.checks.len() >= 8);
    assert!(dir.path().join("report.json").exists());

    let out = run(&["validate", "--config", &cfg, "--trials", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let report: ValidationReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(serde_json::to_value(report.status).unwrap(), "inconclusive");
    assert!(report
        .checks
        .iter()
        .all(|c| serde_json::to_value(c.status).unwrap() == "inconclusive"));
}

#[test]
fn sweep_csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let raw = RawConfig::parse(SWEEP).unwrap();
    let result = cmd_sweep(&resolve(&raw).unwrap(), dir.path()).unwrap();
    let rows = read_metrics_csv(&dir.path().join("metrics.csv")).unwrap();
    let expected: Vec<MetricsRow> = result.rows.iter().map(MetricsRow::from).collect();
    assert_eq!(rows, expected);
    assert_eq!(rows.len(), 5 * 3);
    let powers = read_powers_csv(&dir.path().join("powers.csv")).unwrap();
    assert_eq!(powers.len(), 5 * 3 * 2);
    for p in &powers {
        let row = result.row(p.d_m, p.allocator).unwrap();
        assert_eq!(row.powers[p.ris_index], p.pilot_power_w);
    }
    let header = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(header.starts_with(
        "d_m,allocator,mean_gain,se_gain,mean_rate_bps_hz,se_rate,closed_form_gain\n"
    ));
    let header = fs::read_to_string(dir.path().join("powers.csv")).unwrap();
    assert!(header.starts_with("d_m,allocator,ris_index,pilot_power_w,pilot_power_dbm\n"));
    assert!(!header.contains('\r'));
}

#[test]
fn manifest_replay_and_worker_count_give_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SWEEP);
    let first = dir.path().join("first");
    let out = run(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        first.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = first.join("manifest.toml");
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(
        text.contains("[run]") && text.contains("command = \"sweep\"") && text.contains("[config")
    );

    let second = dir.path().join("second");
    let out = run(&[
        "sweep",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
        "--workers",
        "4",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["metrics.csv", "powers.csv"] {
        assert_eq!(
            fs::read(first.join(f)).unwrap(),
            fs::read(second.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn sweep_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SWEEP);
    let out = run(&[
        "sweep",
        "--config",
        &cfg,
        "--d-range",
        "4:-4:1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("d_range"));

    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "not a directory").unwrap();
    let out = run(&[
        "sweep",
        "--config",
        &cfg,
        "--trials",
        "5",
        "--out",
        blocker.join("x").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let cfg = write(
        dir.path(),
        "ls.toml",
        "[large_scale]\nbeta_sq = [1e-10]\nelements = [4]\n[experiment]\nd_range = \"0:1:1\"\n",
    );
    let out = run(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write(
        dir.path(),
        "cap.toml",
        "[large_scale]\nbeta_sq = [1e-10, 1e-12]\nelements = [4, 4]\n[experiment]\nallocators = [\"exact\"]\nsolver_tol = 1e-300\nsolver_max_iterations = 2\n",
    );
    let out = run(&["allocate", "--config", &cfg]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn symmetric_sweep_is_symmetric_about_the_midpoint() {
    let dir = tempfile::tempdir().unwrap();
    let raw = RawConfig::parse(
        "[power]\np_avg = \"-13 dBm\"\n[two_ris]\nd0_m = 50.0\nelements = [100, 100]\n[experiment]\ntrials = 2000\nallocators = [\"uniform\", \"eq28\"]\nd_range = \"-16:16:8\"\n",
    )
    .unwrap();
    let result = cmd_sweep(&resolve(&raw).unwrap(), dir.path()).unwrap();
    for a in [Allocator::Uniform, Allocator::LargeArray] {
        for d in [8.0, 16.0] {
            let (l, r) = (result.row(-d, a).unwrap(), result.row(d, a).unwrap());
            let se = (l.metrics.se_rate.powi(2) + r.metrics.se_rate.powi(2)).sqrt();
            assert!(
                (l.metrics.mean_rate - r.metrics.mean_rate).abs() <= 3.0 * se,
                "{a} at {d}"
            );
        }
    }
}

#[test]
fn larger_ris_gives_higher_rate_nearby() {
    let dir = tempfile::tempdir().unwrap();
    let raw = RawConfig::parse(
        "[power]\np_avg = \"-13 dBm\"\n[two_ris]\nd0_m = 50.0\nelements = [1000, 100]\n[experiment]\ntrials = 1000\nallocators = [\"uniform\", \"eq28\"]\nd_values = [-16.0, 16.0]\n",
    )
    .unwrap();
    let result = cmd_sweep(&resolve(&raw).unwrap(), dir.path()).unwrap();
    for a in [Allocator::Uniform, Allocator::LargeArray] {
        let near1 = result.row(-16.0, a).unwrap().metrics;
        let near2 = result.row(16.0, a).unwrap().metrics;
        let se = (near1.se_rate.powi(2) + near2.se_rate.powi(2)).sqrt();
        assert!(near1.mean_rate - near2.mean_rate > 3.0 * se);
    }
}
