//! Experiment configuration: TOML with explicit units at the boundary.
//!
//! Powers are strings with a `W`, `mW` or `dBm` suffix, `c0` carries `dB`.
//! Exactly one layout section is required: `[two_ris]`, `[geometry]` or
//! `[large_scale]`.

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::allocation::{Allocator, ExactOptions};
use crate::montecarlo::{CsiMode, EstimateMode, LinkParams, TrialConfig};
use crate::scenario::{
    cascaded_large_scale, dbm_to_watts, two_ris_scenario, LargeScale, Position, RisSpec, Scenario,
};

pub const DEFAULT_TRIALS: u64 = 1000;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub power: RawPower,
    #[serde(default)]
    pub path_loss: RawPathLoss,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_ris: Option<RawTwoRis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<RawGeometry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub large_scale: Option<RawLargeScale>,
    #[serde(default)]
    pub experiment: RawExperiment,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPower {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_z: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_n: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_avg: Option<String>,
}

/// A Rician factor: a number or `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RicianValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPathLoss {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_br: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_ru: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rician_br: Option<RicianValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rician_ru: Option<RicianValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTwoRis {
    pub d0_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_m: Option<f64>,
    pub elements: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRis {
    pub position: Option<[f64; 3]>,
    pub elements: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGeometry {
    pub bs: Option<[f64; 3]>,
    pub user: Option<[f64; 3]>,
    #[serde(default)]
    pub ris: Vec<RawRis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLargeScale {
    pub beta_sq: Option<Vec<f64>>,
    pub elements: Option<Vec<usize>>,
}

/// TOML integers are signed 64-bit, so seeds above `i64::MAX` are written as strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed(pub u64);

impl Serialize for Seed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(self.0) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&self.0.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v).map(Seed).map_err(serde::de::Error::custom),
            Repr::Text(t) => t.trim().parse().map(Seed).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExperiment {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<Seed>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allocators: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_range: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csi_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver_max_iterations: Option<usize>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub allocators: Option<Vec<String>>,
    pub d_range: Option<String>,
    pub csi_mode: Option<String>,
    pub estimate_mode: Option<String>,
    pub workers: Option<usize>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        let e = &mut self.experiment;
        if let Some(v) = o.seed {
            e.seed = Some(Seed(v));
        }
        if let Some(v) = o.trials {
            e.trials = Some(v);
        }
        if let Some(v) = &o.allocators {
            e.allocators = Some(v.clone());
        }
        if let Some(v) = &o.d_range {
            e.d_range = Some(v.clone());
            e.d_values = None;
        }
        if let Some(v) = &o.csi_mode {
            e.csi_mode = Some(v.clone());
        }
        if let Some(v) = &o.estimate_mode {
            e.estimate_mode = Some(v.clone());
        }
        if let Some(v) = o.workers {
            e.workers = Some(v);
        }
    }
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn missing(field: &str) -> CliError {
    field_error(field, "missing required value")
}

/// Parses `"<number> <unit>"` with unit `W`, `mW` or `dBm` into watts.
pub fn parse_power(field: &str, text: &str) -> Result<f64, CliError> {
    let t = text.trim();
    let (number, watts): (&str, fn(f64) -> f64) = if let Some(n) = t.strip_suffix("dBm") {
        (n, dbm_to_watts)
    } else if let Some(n) = t.strip_suffix("mW") {
        (n, |x| x * 1e-3)
    } else if let Some(n) = t.strip_suffix('W') {
        (n, |x| x)
    } else {
        return Err(field_error(
            field,
            format!("'{text}' needs a unit suffix (W, mW or dBm)"),
        ));
    };
    let x: f64 = number
        .trim()
        .parse()
        .map_err(|_| field_error(field, format!("'{text}' is not a number with a unit")))?;
    let w = watts(x);
    if !(w > 0.0) || !w.is_finite() {
        return Err(field_error(
            field,
            format!("'{text}' must be a positive finite power"),
        ));
    }
    Ok(w)
}

/// Parses `"<number> dB"` into a dB value.
pub fn parse_db(field: &str, text: &str) -> Result<f64, CliError> {
    let n = text
        .trim()
        .strip_suffix("dB")
        .ok_or_else(|| field_error(field, format!("'{text}' needs a dB suffix")))?;
    let x: f64 = n
        .trim()
        .parse()
        .map_err(|_| field_error(field, format!("'{text}' is not a number")))?;
    if !x.is_finite() {
        return Err(field_error(field, "must be finite"));
    }
    Ok(x)
}

fn parse_rician(field: &str, v: &RicianValue) -> Result<f64, CliError> {
    let k = match v {
        RicianValue::Number(x) => *x,
        RicianValue::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" => f64::INFINITY,
            other => other
                .parse()
                .map_err(|_| field_error(field, format!("'{t}' is not a number or \"inf\"")))?,
        },
    };
    if !(k >= 0.0) {
        return Err(field_error(field, "must be nonnegative"));
    }
    Ok(k)
}

/// Parses `start:stop:step` into the inclusive grid `start, start + step, ...`.
pub fn parse_d_range(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(field_error(
            "experiment.d_range",
            format!("'{text}' must be start:stop:step"),
        ));
    }
    let num = |s: &str| -> Result<f64, CliError> {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| {
                field_error(
                    "experiment.d_range",
                    format!("'{s}' is not a finite number"),
                )
            })
    };
    let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(step > 0.0) {
        return Err(field_error("experiment.d_range", "step must be positive"));
    }
    if stop < start {
        return Err(field_error(
            "experiment.d_range",
            format!("'{text}' is empty"),
        ));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

fn check_finite(field: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(field_error(field, "must be finite"))
    }
}

fn position(field: &str, p: Option<[f64; 3]>) -> Result<Position, CliError> {
    let p = p.ok_or_else(|| missing(field))?;
    for (i, &c) in p.iter().enumerate() {
        check_finite(&format!("{field}[{i}]"), c)?;
    }
    Ok(Position::new(p[0], p[1], p[2]))
}

fn positive_elements(field: &str, m: &[usize]) -> Result<(), CliError> {
    if m.is_empty() {
        return Err(field_error(field, "needs at least one RIS"));
    }
    if let Some(i) = m.iter().position(|&x| x == 0) {
        return Err(field_error(&format!("{field}[{i}]"), "must be at least 1"));
    }
    Ok(())
}

/// Physical inputs after unit conversion.
#[derive(Debug, Clone)]
pub struct Setup {
    pub link: LinkParams,
    pub ls: LargeScale,
    /// Present for geometric layouts; required by sweeps.
    pub scenario: Option<Scenario>,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub setup: Setup,
    pub trial: TrialConfig,
    pub allocators: Vec<Allocator>,
    pub d_values: Option<Vec<f64>>,
    pub exact: ExactOptions,
    /// The same configuration with every default filled in and every power in watts.
    pub canonical: RawConfig,
}

fn watts_text(w: f64) -> String {
    format!("{w:e} W")
}

pub fn resolve(raw: &RawConfig) -> Result<Resolved, CliError> {
    let mut canonical = raw.clone();

    let pw = &raw.power;
    let sigma_z_sq = parse_power("power.sigma_z", pw.sigma_z.as_deref().unwrap_or("-110 dBm"))?;
    let sigma_n_sq = parse_power("power.sigma_n", pw.sigma_n.as_deref().unwrap_or("-90 dBm"))?;
    let q = parse_power("power.q", pw.q.as_deref().unwrap_or("40 dBm"))?;
    let p_avg = parse_power("power.p_avg", pw.p_avg.as_deref().unwrap_or("-13 dBm"))?;
    canonical.power = RawPower {
        sigma_z: Some(watts_text(sigma_z_sq)),
        sigma_n: Some(watts_text(sigma_n_sq)),
        q: Some(watts_text(q)),
        p_avg: Some(watts_text(p_avg)),
    };

    let pl = &raw.path_loss;
    let c0_db = parse_db("path_loss.c0", pl.c0.as_deref().unwrap_or("-20 dB"))?;
    let alpha_br = check_finite("path_loss.alpha_br", pl.alpha_br.unwrap_or(2.2))?;
    let alpha_ru = check_finite("path_loss.alpha_ru", pl.alpha_ru.unwrap_or(2.8))?;
    let k_br = parse_rician(
        "path_loss.rician_br",
        pl.rician_br
            .as_ref()
            .unwrap_or(&RicianValue::Text("inf".into())),
    )?;
    let k_ru = parse_rician(
        "path_loss.rician_ru",
        pl.rician_ru.as_ref().unwrap_or(&RicianValue::Number(0.0)),
    )?;
    let rician_out = |k: f64| {
        if k.is_infinite() {
            RicianValue::Text("inf".into())
        } else {
            RicianValue::Number(k)
        }
    };
    canonical.path_loss = RawPathLoss {
        c0: Some(format!("{c0_db:e} dB")),
        alpha_br: Some(alpha_br),
        alpha_ru: Some(alpha_ru),
        rician_br: Some(rician_out(k_br)),
        rician_ru: Some(rician_out(k_ru)),
    };

    let layouts = [
        raw.two_ris.is_some(),
        raw.geometry.is_some(),
        raw.large_scale.is_some(),
    ];
    match layouts.iter().filter(|x| **x).count() {
        0 => {
            return Err(CliError::Config(
                "missing layout: provide one of [two_ris], [geometry] or [large_scale]".into(),
            ))
        }
        1 => {}
        _ => {
            return Err(CliError::Config(
                "conflicting layouts: provide only one of [two_ris], [geometry] or [large_scale]"
                    .into(),
            ))
        }
    }

    let apply_physics = |s: &mut Scenario| {
        s.c0_db = c0_db;
        s.alpha_br = alpha_br;
        s.alpha_ru = alpha_ru;
        s.rician_k_br = k_br;
        s.rician_k_ru = k_ru;
        s.sigma_z_sq = sigma_z_sq;
        s.sigma_n_sq = sigma_n_sq;
        s.q = q;
    };
    let scenario_error = |e: crate::Error| CliError::Config(format!("invalid scenario: {e}"));

    let setup = if let Some(t) = &raw.two_ris {
        let d0 = check_finite(
            "two_ris.d0_m",
            t.d0_m.ok_or_else(|| missing("two_ris.d0_m"))?,
        )?;
        let d = check_finite("two_ris.d_m", t.d_m.unwrap_or(0.0))?;
        let m = t
            .elements
            .clone()
            .ok_or_else(|| missing("two_ris.elements"))?;
        if m.len() != 2 {
            return Err(field_error(
                "two_ris.elements",
                format!("needs exactly 2 entries, got {}", m.len()),
            ));
        }
        positive_elements("two_ris.elements", &m)?;
        let mut s = two_ris_scenario(d0, d, m[0], m[1], p_avg).map_err(scenario_error)?;
        apply_physics(&mut s);
        s.validate().map_err(scenario_error)?;
        canonical.two_ris = Some(RawTwoRis {
            d0_m: Some(d0),
            d_m: Some(d),
            elements: Some(m),
        });
        let ls = cascaded_large_scale(&s).map_err(scenario_error)?;
        Setup {
            link: LinkParams::of(&s),
            ls,
            scenario: Some(s),
        }
    } else if let Some(g) = &raw.geometry {
        let bs = position("geometry.bs", g.bs)?;
        let user = position("geometry.user", g.user)?;
        if g.ris.is_empty() {
            return Err(missing("geometry.ris"));
        }
        let ris = g
            .ris
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let elements = r
                    .elements
                    .ok_or_else(|| missing(&format!("geometry.ris[{i}].elements")))?;
                if elements == 0 {
                    return Err(field_error(
                        &format!("geometry.ris[{i}].elements"),
                        "must be at least 1",
                    ));
                }
                Ok(RisSpec {
                    elements,
                    position: position(&format!("geometry.ris[{i}].position"), r.position)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut s = two_ris_scenario(50.0, 0.0, 1, 1, p_avg).map_err(scenario_error)?;
        s.bs_position = bs;
        s.user_position = user;
        s.ris = ris;
        apply_physics(&mut s);
        s.validate().map_err(scenario_error)?;
        let ls = cascaded_large_scale(&s).map_err(scenario_error)?;
        Setup {
            link: LinkParams::of(&s),
            ls,
            scenario: Some(s),
        }
    } else {
        let l = raw.large_scale.as_ref().expect("one layout present");
        let beta_sq = l
            .beta_sq
            .clone()
            .ok_or_else(|| missing("large_scale.beta_sq"))?;
        let elements = l
            .elements
            .clone()
            .ok_or_else(|| missing("large_scale.elements"))?;
        if let Some(i) = beta_sq.iter().position(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(field_error(
                &format!("large_scale.beta_sq[{i}]"),
                format!("must be positive and finite, got {}", beta_sq[i]),
            ));
        }
        positive_elements("large_scale.elements", &elements)?;
        if elements.len() != beta_sq.len() {
            return Err(field_error(
                "large_scale.elements",
                format!(
                    "{} entries for {} beta_sq values",
                    elements.len(),
                    beta_sq.len()
                ),
            ));
        }
        let ls = LargeScale::from_beta_sq(beta_sq).map_err(scenario_error)?;
        Setup {
            link: LinkParams {
                elements,
                p_avg,
                sigma_z_sq,
                q,
                sigma_n_sq,
            },
            ls,
            scenario: None,
        }
    };

    let e = &raw.experiment;
    let seed = e.seed.map_or(DEFAULT_SEED, |s| s.0);
    let trials = e.trials.unwrap_or(DEFAULT_TRIALS);
    if trials == 0 {
        return Err(field_error("experiment.trials", "must be at least 1"));
    }
    let allocator_ids = e
        .allocators
        .clone()
        .unwrap_or_else(|| vec!["uniform".into(), "eq28".into(), "exact".into()]);
    if allocator_ids.is_empty() {
        return Err(field_error(
            "experiment.allocators",
            "needs at least one allocator",
        ));
    }
    let mut allocators = Vec::new();
    for id in &allocator_ids {
        let a: Allocator = id
            .parse()
            .map_err(|m| field_error("experiment.allocators", m))?;
        if !allocators.contains(&a) {
            allocators.push(a);
        }
    }
    let csi_mode: CsiMode = e
        .csi_mode
        .as_deref()
        .unwrap_or("estimated")
        .parse()
        .map_err(|m| field_error("experiment.csi_mode", m))?;
    let estimate_mode: EstimateMode = e
        .estimate_mode
        .as_deref()
        .unwrap_or("shortcut")
        .parse()
        .map_err(|m| field_error("experiment.estimate_mode", m))?;
    if e.workers == Some(0) {
        return Err(field_error("experiment.workers", "must be at least 1"));
    }
    let d_values = match (&e.d_range, &e.d_values) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "experiment: give either d_range or d_values, not both".into(),
            ))
        }
        (Some(r), None) => Some(parse_d_range(r)?),
        (None, Some(v)) => {
            if v.is_empty() {
                return Err(field_error("experiment.d_values", "is empty"));
            }
            for (i, &d) in v.iter().enumerate() {
                check_finite(&format!("experiment.d_values[{i}]"), d)?;
            }
            Some(v.clone())
        }
        (None, None) => None,
    };
    let defaults = ExactOptions::default();
    let exact = ExactOptions {
        tol: e.solver_tol.unwrap_or(defaults.tol),
        max_iterations: e.solver_max_iterations.unwrap_or(defaults.max_iterations),
        ..defaults
    };
    if !(exact.tol > 0.0) {
        return Err(field_error("experiment.solver_tol", "must be positive"));
    }
    let trial = TrialConfig::new(trials, seed)
        .map_err(|err| field_error("experiment.trials", err))?
        .with_csi_mode(csi_mode)
        .with_estimate_mode(estimate_mode)
        .with_workers(e.workers);

    canonical.experiment = RawExperiment {
        seed: Some(Seed(seed)),
        trials: Some(trials),
        allocators: Some(allocators.iter().map(|a| a.id().to_string()).collect()),
        d_range: None,
        d_values: d_values.clone(),
        csi_mode: Some(csi_mode.id().into()),
        estimate_mode: Some(estimate_mode.id().into()),
        workers: e.workers,
        solver_tol: Some(exact.tol),
        solver_max_iterations: Some(exact.max_iterations),
    };

    Ok(Resolved {
        setup,
        trial,
        allocators,
        d_values,
        exact,
        canonical,
    })
}
