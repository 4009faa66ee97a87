//! Command-line front end: `allocate`, `validate` and `sweep`.
//!
//! Exit codes: 0 success, 1 validation failure, 2 config or usage error,
//! 3 numerical failure, 4 I/O error.

pub mod config;
pub mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::allocation::{allocate, Allocator, PerRisPowers};
use crate::analysis::{alignment_mean, objective_phi_per_ris};
use crate::channel::{complex_gaussian, RngStream, StreamPurpose};
use crate::estimation::estimate_mse;
use crate::montecarlo::{
    closed_form_gain, simulate_samples, summarize, sweep_user, CsiMode, SweepResult,
};
use crate::numeric::mean_and_se;
use crate::scenario::watts_to_dbm;
use config::{resolve, Overrides, RawConfig, Resolved, Seed};
use output::{CheckResult, CheckStatus, RunInfo, RunManifest, ValidationReport};

/// Below this many trials the validation tolerances are not trusted.
pub const MIN_CONCLUSIVE_TRIALS: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
    ValidationFailed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ValidationFailed => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::ValidationFailed => f.write_str("validation failed"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ris-pilot",
    version,
    about = "Pilot power allocation for multi-RIS links"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print per-RIS pilot powers, phi and closed-form gain for each allocator
    Allocate(CommonArgs),
    /// Compare closed forms against Monte Carlo and emit a JSON report
    Validate(CommonArgs),
    /// Sweep the user position and write metrics and powers CSVs
    Sweep(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML experiment configuration
    #[arg(long, conflicts_with = "manifest")]
    pub config: Option<PathBuf>,
    /// Replay a saved run manifest
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated list of uniform, eq27, eq28, eq29, exact
    #[arg(long, value_delimiter = ',')]
    pub allocators: Option<Vec<String>>,
    /// User y-coordinates as start:stop:step (meters, inclusive)
    #[arg(long, allow_hyphen_values = true)]
    pub d_range: Option<String>,
    /// estimated, perfect or random-phase
    #[arg(long)]
    pub csi_mode: Option<String>,
    /// shortcut or protocol
    #[arg(long)]
    pub estimate_mode: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
            allocators: self.allocators.clone(),
            d_range: self.d_range.clone(),
            csi_mode: self.csi_mode.clone(),
            estimate_mode: self.estimate_mode.clone(),
            workers: self.workers,
        }
    }

    /// Loads the config or manifest and applies command-line overrides.
    pub fn load(&self) -> Result<Resolved, CliError> {
        let mut raw = match (&self.config, &self.manifest) {
            (Some(path), None) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                RawConfig::parse(&text)?
            }
            (None, Some(path)) => RunManifest::read(path)?.config,
            (None, None) => {
                return Err(CliError::Config(
                    "one of --config or --manifest is required".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "--config and --manifest are exclusive".into(),
                ))
            }
        };
        raw.apply(&self.overrides());
        resolve(&raw)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Allocate(args) => {
            let table = cmd_allocate(&args.load()?)?;
            print!("{table}");
            Ok(())
        }
        Command::Validate(args) => {
            let report = cmd_validate(&args.load()?)?;
            let json = report.to_json()?;
            println!("{json}");
            if let Some(dir) = &args.out {
                output::write_file(dir, output::REPORT_FILE, format!("{json}\n").as_bytes())?;
            }
            if report.status == CheckStatus::Fail {
                return Err(CliError::ValidationFailed);
            }
            Ok(())
        }
        Command::Sweep(args) => {
            let dir = args
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("sweep-out"));
            cmd_sweep(&args.load()?, &dir)?;
            eprintln!("wrote {}", dir.display());
            Ok(())
        }
    }
}

/// Runs the CLI and maps errors to exit codes.
pub fn main_with(cli: Cli) -> ExitCode {
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationEntry {
    pub allocator: Allocator,
    pub powers: PerRisPowers,
    pub phi: f64,
    pub closed_form_gain: f64,
    pub fallback_ris: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationTable {
    pub entries: Vec<AllocationEntry>,
}

impl fmt::Display for AllocationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<9} {:>4} {:>24} {:>24}",
            "allocator", "ris", "pilot_power_w", "pilot_power_dbm"
        )?;
        for e in &self.entries {
            for (k, &p) in e.powers.as_slice().iter().enumerate() {
                writeln!(
                    f,
                    "{:<9} {:>4} {:>24.16e} {:>24.16}",
                    e.allocator.id(),
                    k,
                    p,
                    watts_to_dbm(p)
                )?;
            }
        }
        writeln!(f)?;
        writeln!(
            f,
            "{:<9} {:>24} {:>24}",
            "allocator", "phi", "closed_form_gain"
        )?;
        for e in &self.entries {
            write!(
                f,
                "{:<9} {:>24.16e} {:>24.16e}",
                e.allocator.id(),
                e.phi,
                e.closed_form_gain
            )?;
            if !e.fallback_ris.is_empty() {
                write!(f, "  (fallback to p_avg at RIS {:?})", e.fallback_ris)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub fn cmd_allocate(r: &Resolved) -> Result<AllocationTable, CliError> {
    let link = &r.setup.link;
    let entries = r
        .allocators
        .iter()
        .map(|&a| {
            let out = allocate(
                a,
                &r.setup.ls,
                &link.elements,
                link.p_avg,
                link.sigma_z_sq,
                &r.exact,
            )?;
            Ok(AllocationEntry {
                allocator: a,
                phi: objective_phi_per_ris(
                    &r.setup.ls,
                    &link.elements,
                    out.powers.as_slice(),
                    link.sigma_z_sq,
                )?,
                closed_form_gain: closed_form_gain(
                    &r.setup.ls,
                    &link.elements,
                    &out.powers,
                    link.p_avg,
                    link.sigma_z_sq,
                    CsiMode::Estimated,
                )?,
                powers: out.powers,
                fallback_ris: out.fallback_ris,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(AllocationTable { entries })
}

fn judge(
    name: String,
    expected: f64,
    observed: f64,
    standard_error: f64,
    tolerance: f64,
    trials: u64,
) -> CheckResult {
    let abs_error = (observed - expected).abs();
    let status = if trials < MIN_CONCLUSIVE_TRIALS {
        CheckStatus::Inconclusive
    } else if abs_error <= tolerance {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    CheckResult {
        name,
        status,
        expected,
        observed,
        standard_error,
        abs_error,
        tolerance,
        note: (trials < MIN_CONCLUSIVE_TRIALS)
            .then(|| format!("fewer than {MIN_CONCLUSIVE_TRIALS} trials")),
    }
}

fn skipped(name: String, note: &str) -> CheckResult {
    CheckResult {
        name,
        status: CheckStatus::Skipped,
        expected: f64::NAN,
        observed: f64::NAN,
        standard_error: f64::NAN,
        abs_error: f64::NAN,
        tolerance: f64::NAN,
        note: Some(note.into()),
    }
}

/// Closed form versus Monte Carlo at the configured point.
///
/// Checks the per-term alignment mean and its zero imaginary part for every
/// RIS, then the ergodic gain for each allocator and for perfect and random
/// phases. Gains pass within `max(2%, 4 SE)`, alignment terms within `4 SE`.
pub fn cmd_validate(r: &Resolved) -> Result<ValidationReport, CliError> {
    let link = &r.setup.link;
    let ls = &r.setup.ls;
    let trials = r.trial.trials;
    let seed = r.trial.seed;
    let gaussian = ls.model().is_cascaded_rayleigh();
    let mut checks = Vec::new();

    let delta_sq = estimate_mse(link.p_avg, link.sigma_z_sq)?;
    for (k, &b2) in ls.beta_sq().iter().enumerate() {
        if !gaussian {
            checks.push(skipped(
                format!("alignment_mean[{k}]"),
                "closed form assumes cascaded Rayleigh fading",
            ));
            continue;
        }
        let mut rng = RngStream::for_trial(seed, k as u64, StreamPurpose::Auxiliary).rng();
        let mut re = Vec::with_capacity(trials as usize);
        let mut im = Vec::with_capacity(trials as usize);
        for _ in 0..trials {
            let h = complex_gaussian(&mut rng, b2);
            let g = h + complex_gaussian(&mut rng, delta_sq);
            let t = if g.norm() == 0.0 {
                h
            } else {
                g.conj() * h / g.norm()
            };
            re.push(t.re);
            im.push(t.im);
        }
        let (m, se) = mean_and_se(&re);
        checks.push(judge(
            format!("alignment_mean[{k}]"),
            alignment_mean(b2, delta_sq),
            m,
            se,
            4.0 * se,
            trials,
        ));
        let (m, se) = mean_and_se(&im);
        checks.push(judge(
            format!("alignment_imag[{k}]"),
            0.0,
            m,
            se,
            4.0 * se,
            trials,
        ));
    }

    let allocations = r
        .allocators
        .iter()
        .map(|&a| allocate(a, ls, &link.elements, link.p_avg, link.sigma_z_sq, &r.exact))
        .collect::<crate::Result<Vec<_>>>()?;
    let powers: Vec<PerRisPowers> = allocations.iter().map(|a| a.powers.clone()).collect();
    let gain_check = |name: String,
                      mode: CsiMode,
                      powers: &[PerRisPowers]|
     -> Result<Vec<CheckResult>, CliError> {
        if !gaussian {
            return Ok(powers
                .iter()
                .map(|_| skipped(name.clone(), "closed form assumes cascaded Rayleigh fading"))
                .collect());
        }
        let cfg = r.trial.with_csi_mode(mode);
        let samples = simulate_samples(link, ls, powers, &cfg)?;
        powers
            .iter()
            .zip(samples)
            .map(|(p, s)| {
                let m = summarize(&s, link.q, link.sigma_n_sq);
                let cf =
                    closed_form_gain(ls, &link.elements, p, link.p_avg, link.sigma_z_sq, mode)?;
                Ok(judge(
                    name.clone(),
                    cf,
                    m.mean_gain,
                    m.se_gain,
                    (0.02 * cf).max(4.0 * m.se_gain),
                    trials,
                ))
            })
            .collect()
    };
    let mut gains = gain_check(String::new(), CsiMode::Estimated, &powers)?;
    for (c, a) in gains.iter_mut().zip(&r.allocators) {
        c.name = format!("ergodic_gain[{}]", a.id());
    }
    checks.extend(gains);
    let uniform = vec![crate::allocation::allocate_average(
        &link.elements,
        link.p_avg,
    )?];
    checks.extend(gain_check(
        "ergodic_gain[perfect-csi]".into(),
        CsiMode::Perfect,
        &uniform,
    )?);
    checks.extend(gain_check(
        "ergodic_gain[random-phase]".into(),
        CsiMode::RandomPhase,
        &uniform,
    )?);

    Ok(ValidationReport::new(seed, trials, checks))
}

/// Runs the sweep and writes the metrics CSV, powers CSV and manifest into `dir`.
pub fn cmd_sweep(r: &Resolved, dir: &Path) -> Result<SweepResult, CliError> {
    let scenario = r.setup.scenario.as_ref().ok_or_else(|| {
        CliError::Config("sweep needs a geometric layout: provide [two_ris] or [geometry]".into())
    })?;
    let d_values = r.d_values.as_ref().ok_or_else(|| {
        CliError::Config("experiment.d_range: missing required value for sweep".into())
    })?;
    let start = Instant::now();
    let result = sweep_user(scenario, d_values, &r.allocators, &r.trial, &r.exact)?;
    let manifest = RunManifest {
        run: RunInfo {
            command: "sweep".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: Seed(r.trial.seed),
            duration_s: start.elapsed().as_secs_f64(),
        },
        config: r.canonical.clone(),
    };
    output::write_file(dir, output::METRICS_FILE, &output::metrics_csv(&result)?)?;
    output::write_file(dir, output::POWERS_FILE, &output::powers_csv(&result)?)?;
    output::write_file(dir, output::MANIFEST_FILE, manifest.to_toml()?.as_bytes())?;
    Ok(result)
}
