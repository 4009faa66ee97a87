//! Monte Carlo evaluation of ergodic gain and rate, and user-position sweeps.
//!
//! Trial `t` draws its channel, estimation noise and random phases from
//! dedicated ChaCha streams keyed by `(seed, t)`, so results do not depend on
//! how trials are scheduled across workers. Reductions run in trial order.
//!
//! All allocators evaluated at one point see the same channel draws and the
//! same unit-variance estimation noise (scaled by each allocation's MSE), and
//! every sweep point reuses the same streams. Differences between allocators
//! are therefore paired; see [`paired_difference`].

use std::str::FromStr;

use rayon::prelude::*;

use crate::allocation::{allocate, Allocator, ExactOptions, PerRisPowers};
use crate::analysis::{ergodic_gain_closed_form, incoherent_gain, perfect_csi_gain};
use crate::channel::{sample_cascade, RngStream, StreamPurpose};
use crate::estimation::{ls_estimate, ls_estimate_protocol, PilotAllocation, Training};
use crate::numeric::mean_and_se;
use crate::reflection::{
    achievable_rate, composite_channel, configure_phases, perfect_phases, random_phases,
};
use crate::scenario::{cascaded_large_scale, LargeScale, Scenario};
use crate::{Error, Result};

pub use crate::allocation::dynamic_range_db as dynamic_range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimateMode {
    /// Simulates every ON/OFF pilot slot.
    Protocol,
    /// Adds `CN(0, sigma_z^2 / p)` to the true channel.
    #[default]
    Shortcut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CsiMode {
    #[default]
    Estimated,
    Perfect,
    RandomPhase,
}

impl EstimateMode {
    pub fn id(self) -> &'static str {
        match self {
            EstimateMode::Protocol => "protocol",
            EstimateMode::Shortcut => "shortcut",
        }
    }
}

impl CsiMode {
    pub fn id(self) -> &'static str {
        match self {
            CsiMode::Estimated => "estimated",
            CsiMode::Perfect => "perfect",
            CsiMode::RandomPhase => "random-phase",
        }
    }
}

impl FromStr for EstimateMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "protocol" => Ok(EstimateMode::Protocol),
            "shortcut" => Ok(EstimateMode::Shortcut),
            other => Err(format!(
                "unknown estimate mode '{other}' (expected protocol or shortcut)"
            )),
        }
    }
}

impl FromStr for CsiMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "estimated" => Ok(CsiMode::Estimated),
            "perfect" => Ok(CsiMode::Perfect),
            "random-phase" | "random" => Ok(CsiMode::RandomPhase),
            other => Err(format!(
                "unknown CSI mode '{other}' (expected estimated, perfect or random-phase)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialConfig {
    pub trials: u64,
    pub seed: u64,
    pub estimate_mode: EstimateMode,
    pub csi_mode: CsiMode,
    /// Worker threads; `None` uses rayon's global pool.
    pub workers: Option<usize>,
    /// Keep per-trial samples in sweep rows (for paired comparisons).
    pub keep_samples: bool,
}

impl TrialConfig {
    pub fn new(trials: u64, seed: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::domain("trials", 0.0, "must be at least 1"));
        }
        Ok(TrialConfig {
            trials,
            seed,
            estimate_mode: EstimateMode::default(),
            csi_mode: CsiMode::default(),
            workers: None,
            keep_samples: false,
        })
    }

    pub fn with_csi_mode(mut self, mode: CsiMode) -> Self {
        self.csi_mode = mode;
        self
    }

    pub fn with_estimate_mode(mut self, mode: EstimateMode) -> Self {
        self.estimate_mode = mode;
        self
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_samples(mut self, keep: bool) -> Self {
        self.keep_samples = keep;
        self
    }
}

/// `|composite|^2` and rate of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSample {
    pub gain: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mean_gain: f64,
    pub se_gain: f64,
    /// Mean of `log2(1 + q |h|^2 / sigma_n^2)`.
    pub mean_rate: f64,
    pub se_rate: f64,
    /// `log2(1 + q E|h|^2 / sigma_n^2)`, the rate of the mean gain.
    pub rate_of_mean_gain: f64,
}

pub fn summarize(samples: &[TrialSample], q: f64, sigma_n_sq: f64) -> Metrics {
    let gains: Vec<f64> = samples.iter().map(|s| s.gain).collect();
    let rates: Vec<f64> = samples.iter().map(|s| s.rate).collect();
    let (mean_gain, se_gain) = mean_and_se(&gains);
    let (mean_rate, se_rate) = mean_and_se(&rates);
    Metrics {
        mean_gain,
        se_gain,
        mean_rate,
        se_rate,
        rate_of_mean_gain: (q * mean_gain / sigma_n_sq).ln_1p() / std::f64::consts::LN_2,
    }
}

/// Mean and standard error of the per-trial difference `a - b`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(mean_and_se(&d))
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::domain("workers", 0.0, "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Shape(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Per-link quantities the trial pipeline needs besides the large-scale gains.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub elements: Vec<usize>,
    pub p_avg: f64,
    pub sigma_z_sq: f64,
    pub q: f64,
    pub sigma_n_sq: f64,
}

impl LinkParams {
    pub fn of(s: &Scenario) -> Self {
        LinkParams {
            elements: s.elements(),
            p_avg: s.p_avg,
            sigma_z_sq: s.sigma_z_sq,
            q: s.q,
            sigma_n_sq: s.sigma_n_sq,
        }
    }
}

fn run_trial(
    s: &LinkParams,
    ls: &LargeScale,
    allocs: &[PilotAllocation],
    training: &Training,
    cfg: &TrialConfig,
    t: u64,
) -> Result<Vec<TrialSample>> {
    let stream = RngStream::for_trial(cfg.seed, t, StreamPurpose::Channel);
    let h = sample_cascade(ls, &s.elements, ls.model(), stream)?;
    let sample = |phases| -> Result<TrialSample> {
        let c = composite_channel(&h, &phases)?;
        Ok(TrialSample {
            gain: c.norm_sqr(),
            rate: achievable_rate(c, s.q, s.sigma_n_sq),
        })
    };
    match cfg.csi_mode {
        CsiMode::Perfect => Ok(vec![sample(perfect_phases(&h))?; allocs.len()]),
        CsiMode::RandomPhase => {
            let stream = RngStream::for_trial(cfg.seed, t, StreamPurpose::RandomPhase);
            Ok(vec![
                sample(random_phases(&h.elements(), stream))?;
                allocs.len()
            ])
        }
        CsiMode::Estimated => {
            let stream = RngStream::for_trial(cfg.seed, t, StreamPurpose::EstimationNoise);
            allocs
                .iter()
                .map(|a| {
                    let est = match cfg.estimate_mode {
                        EstimateMode::Shortcut => ls_estimate(&h, a, s.sigma_z_sq, stream)?,
                        EstimateMode::Protocol => {
                            ls_estimate_protocol(&h, a, s.sigma_z_sq, training, stream)?
                        }
                    };
                    sample(configure_phases(&est))
                })
                .collect()
        }
    }
}

/// Per-trial samples for several allocations over shared random draws.
/// `out[a][t]` is allocation `a` in trial `t`.
pub fn simulate_samples(
    s: &LinkParams,
    ls: &LargeScale,
    allocs: &[PerRisPowers],
    cfg: &TrialConfig,
) -> Result<Vec<Vec<TrialSample>>> {
    let elements = &s.elements;
    let expanded = allocs
        .iter()
        .map(|a| {
            a.check(elements, s.p_avg)?;
            a.to_pilot_allocation(elements, s.p_avg)
        })
        .collect::<Result<Vec<_>>>()?;
    if cfg.trials == 0 {
        return Err(Error::domain("trials", 0.0, "must be at least 1"));
    }
    let training = Training::unit(elements);
    let per_trial = with_pool(cfg.workers, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(s, ls, &expanded, &training, cfg, t))
            .collect::<Result<Vec<_>>>()
    })??;
    let mut out = vec![Vec::with_capacity(per_trial.len()); allocs.len()];
    for trial in per_trial {
        for (slot, sample) in out.iter_mut().zip(trial) {
            slot.push(sample);
        }
    }
    Ok(out)
}

/// Mean and standard error of gain and rate for one allocation.
pub fn simulate_metrics(s: &Scenario, alloc: &PerRisPowers, cfg: &TrialConfig) -> Result<Metrics> {
    let ls = cascaded_large_scale(s)?;
    let samples = simulate_samples(&LinkParams::of(s), &ls, std::slice::from_ref(alloc), cfg)?;
    Ok(summarize(&samples[0], s.q, s.sigma_n_sq))
}

/// Closed-form gain matching the CSI mode.
pub fn closed_form_gain(
    ls: &LargeScale,
    elements: &[usize],
    alloc: &PerRisPowers,
    p_avg: f64,
    sigma_z_sq: f64,
    mode: CsiMode,
) -> Result<f64> {
    Ok(match mode {
        CsiMode::Estimated => {
            let expanded = alloc.to_pilot_allocation(elements, p_avg)?;
            ergodic_gain_closed_form(ls, elements, &expanded, sigma_z_sq)?.total
        }
        CsiMode::Perfect => perfect_csi_gain(ls, elements),
        CsiMode::RandomPhase => incoherent_gain(ls, elements),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub d_m: f64,
    pub allocator: Allocator,
    pub metrics: Metrics,
    pub closed_form_gain: f64,
    /// Per-RIS pilot powers in watts.
    pub powers: Vec<f64>,
    /// RISs where the moderate-SNR form fell back to `p_avg`.
    pub fallback_ris: Vec<usize>,
    /// Per-trial samples when [`TrialConfig::keep_samples`] is set.
    pub samples: Option<Vec<TrialSample>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, d_m: f64, allocator: Allocator) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.d_m == d_m && r.allocator == allocator)
    }

    pub fn d_values(&self) -> Vec<f64> {
        let mut d: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !d.contains(&r.d_m) {
                d.push(r.d_m);
            }
        }
        d
    }
}

/// Moves the user along `y = d` for each `d`, allocates with every allocator
/// and simulates.
pub fn sweep_user(
    template: &Scenario,
    d_values: &[f64],
    allocators: &[Allocator],
    cfg: &TrialConfig,
    exact: &ExactOptions,
) -> Result<SweepResult> {
    if d_values.is_empty() {
        return Err(Error::Shape(
            "sweep needs at least one user position".into(),
        ));
    }
    if allocators.is_empty() {
        return Err(Error::Shape("sweep needs at least one allocator".into()));
    }
    let elements = template.elements();
    let mut rows = Vec::with_capacity(d_values.len() * allocators.len());
    for &d in d_values {
        let s = template.with_user_y(d);
        s.validate()?;
        let ls = cascaded_large_scale(&s)?;
        let allocations = allocators
            .iter()
            .map(|&a| allocate(a, &ls, &elements, s.p_avg, s.sigma_z_sq, exact))
            .collect::<Result<Vec<_>>>()?;
        let powers: Vec<PerRisPowers> = allocations.iter().map(|a| a.powers.clone()).collect();
        let samples = simulate_samples(&LinkParams::of(&s), &ls, &powers, cfg)?;
        for (a, samples) in allocations.into_iter().zip(samples) {
            rows.push(SweepRow {
                d_m: d,
                allocator: a.allocator,
                metrics: summarize(&samples, s.q, s.sigma_n_sq),
                closed_form_gain: closed_form_gain(
                    &ls,
                    &elements,
                    &a.powers,
                    s.p_avg,
                    s.sigma_z_sq,
                    cfg.csi_mode,
                )?,
                powers: a.powers.into_vec(),
                fallback_ris: a.fallback_ris,
                samples: cfg.keep_samples.then_some(samples),
            });
        }
    }
    Ok(SweepResult { rows })
}
