//! Closed-form ergodic channel gain under imperfect CSI.
//!
//! With `h ~ CN(0, beta^2)` and LS error `eps ~ CN(0, delta^2)`, each co-phased
//! term `(h + eps)^* h / |h + eps|` has mean `sqrt(pi) beta^2 / (2 sqrt(beta^2 + delta^2))`
//! and zero imaginary mean. Expanding `E|sum_{k,m} phi_hat h|^2` with these
//! moments gives
//!
//! ```text
//! E|h|^2 = sum_k M_k beta_k^2 + (pi / 4) * phi(P)
//! phi(P) = sum_k beta_k^4 sum_m a_{k,m} sum_{m' != m} a_{k,m'}
//!        + sum_k sum_m beta_k^2 a_{k,m} sum_{k' != k} sum_{m'} beta_{k'}^2 a_{k',m'}
//! a_{k,m} = (beta_k^2 + sigma_z^2 / p_{k,m})^{-1/2}
//! ```
//!
//! These moments only hold for the cascaded-Rayleigh model; [`GainBreakdown`]
//! carries a flag when the large-scale description uses another model.
//!
//! The pairwise sums are evaluated as `sum_i x_i (X - x_i)` with compensated
//! accumulation, which is `O(M)` and has no cancellation.

use std::f64::consts::PI;

use crate::estimation::PilotAllocation;
use crate::numeric::compensated_sum;
use crate::scenario::LargeScale;
use crate::{Error, Result};

const PI_OVER_4: f64 = PI / 4.0;

/// Mean of the real part of one co-phased term.
pub fn alignment_mean(beta_sq: f64, delta_sq: f64) -> f64 {
    PI.sqrt() * beta_sq / (2.0 * (beta_sq + delta_sq).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainBreakdown {
    /// `sum_k M_k beta_k^2`.
    pub incoherent: f64,
    /// Pairs of distinct elements on the same RIS.
    pub intra_ris: f64,
    /// Pairs of elements on different RISs.
    pub inter_ris: f64,
    pub total: f64,
    /// False when the channel model is not cascaded Rayleigh and the closed
    /// form is only an approximation.
    pub gaussian_model: bool,
}

fn check_layout(ls: &LargeScale, elements: &[usize], alloc: &PilotAllocation) -> Result<()> {
    if elements.len() != ls.len() || alloc.elements() != elements {
        return Err(Error::Shape(format!(
            "{} RISs with elements {:?} vs allocation layout {:?}",
            ls.len(),
            elements,
            alloc.elements()
        )));
    }
    Ok(())
}

/// `sum_i x_i * (sum_j x_j - x_i)`, i.e. the sum over ordered distinct pairs.
fn distinct_pair_sum(x: &[f64]) -> f64 {
    let total = compensated_sum(x.iter().copied());
    compensated_sum(x.iter().map(|&v| v * (total - v).max(0.0)))
}

struct Structured {
    intra_raw: f64,
    inter_raw: f64,
}

fn structured_terms(ls: &LargeScale, alloc: &PilotAllocation, sigma_z_sq: f64) -> Structured {
    let mut intra = Vec::with_capacity(ls.len());
    let mut per_ris = Vec::with_capacity(ls.len());
    for (&b2, pk) in ls.beta_sq().iter().zip(alloc.powers()) {
        let a: Vec<f64> = pk
            .iter()
            .map(|&p| 1.0 / (b2 + sigma_z_sq / p).sqrt())
            .collect();
        intra.push(b2 * b2 * distinct_pair_sum(&a));
        per_ris.push(b2 * compensated_sum(a.iter().copied()));
    }
    Structured {
        intra_raw: compensated_sum(intra),
        inter_raw: distinct_pair_sum(&per_ris),
    }
}

/// Closed-form `E|h|^2` split into its three summands.
pub fn ergodic_gain_closed_form(
    ls: &LargeScale,
    elements: &[usize],
    alloc: &PilotAllocation,
    sigma_z_sq: f64,
) -> Result<GainBreakdown> {
    check_layout(ls, elements, alloc)?;
    let incoherent = incoherent_gain(ls, elements);
    let s = structured_terms(ls, alloc, sigma_z_sq);
    let intra_ris = PI_OVER_4 * s.intra_raw;
    let inter_ris = PI_OVER_4 * s.inter_raw;
    Ok(GainBreakdown {
        incoherent,
        intra_ris,
        inter_ris,
        total: incoherent + intra_ris + inter_ris,
        gaussian_model: ls.model().is_cascaded_rayleigh(),
    })
}

/// The allocation-dependent objective `phi(P)`.
pub fn objective_phi(
    ls: &LargeScale,
    elements: &[usize],
    alloc: &PilotAllocation,
    sigma_z_sq: f64,
) -> Result<f64> {
    check_layout(ls, elements, alloc)?;
    let s = structured_terms(ls, alloc, sigma_z_sq);
    Ok(s.intra_raw + s.inter_raw)
}

/// `sum_k M_k beta_k^2`: the gain with independent random phases.
pub fn incoherent_gain(ls: &LargeScale, elements: &[usize]) -> f64 {
    compensated_sum(
        ls.beta_sq()
            .iter()
            .zip(elements)
            .map(|(&b, &m)| m as f64 * b),
    )
}

/// Gain with perfect CSI: `sum M beta^2 + (pi/4)((sum M beta)^2 - sum M beta^2)`.
pub fn perfect_csi_gain(ls: &LargeScale, elements: &[usize]) -> f64 {
    let incoherent = incoherent_gain(ls, elements);
    let coherent = compensated_sum(ls.beta().iter().zip(elements).map(|(&b, &m)| m as f64 * b));
    incoherent + PI_OVER_4 * (coherent * coherent - incoherent)
}

fn check_per_ris(ls: &LargeScale, elements: &[usize], powers: &[f64]) -> Result<()> {
    if elements.len() != ls.len() || powers.len() != ls.len() {
        return Err(Error::Shape(format!(
            "{} RISs, {} element counts, {} powers",
            ls.len(),
            elements.len(),
            powers.len()
        )));
    }
    if let Some(&p) = powers.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::domain("pilot power", p, "must be positive"));
    }
    Ok(())
}

/// `phi` restricted to equal power within each RIS:
/// `(sum_k beta_k^2 M_k a_k)^2 - sum_k beta_k^4 M_k a_k^2`.
pub fn objective_phi_per_ris(
    ls: &LargeScale,
    elements: &[usize],
    powers: &[f64],
    sigma_z_sq: f64,
) -> Result<f64> {
    check_per_ris(ls, elements, powers)?;
    let mut intra = Vec::with_capacity(ls.len());
    let mut per_ris = Vec::with_capacity(ls.len());
    for ((&b2, &m), &p) in ls.beta_sq().iter().zip(elements).zip(powers) {
        let a = 1.0 / (b2 + sigma_z_sq / p).sqrt();
        let m = m as f64;
        intra.push(b2 * b2 * a * a * m * (m - 1.0));
        per_ris.push(b2 * m * a);
    }
    Ok(compensated_sum(intra) + distinct_pair_sum(&per_ris))
}

/// Intermediate sums of the per-RIS stationarity condition.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityDiagnostics {
    /// `A_k = sum_m a_{k,m}`.
    pub a: Vec<f64>,
    /// `B_k = sum_{k' != k} sum_m beta_{k'}^2 a_{k',m}`.
    pub b: Vec<f64>,
    /// Per-element gradient of `phi`; equals the multiplier at a stationary point.
    pub residual: Vec<f64>,
}

/// Stationarity diagnostics at per-RIS powers `p_k`.
///
/// `residual_k = sigma^2 beta_k^2 / (p_k^2 (beta_k^2 + sigma^2/p_k)^{3/2}) * sum_j beta_j^2 M_j a_j
///             - sigma^2 beta_k^4 / (p_k^2 (beta_k^2 + sigma^2/p_k)^2)`
pub fn stationarity_diagnostics(
    ls: &LargeScale,
    elements: &[usize],
    powers: &[f64],
    sigma_z_sq: f64,
) -> Result<StationarityDiagnostics> {
    check_per_ris(ls, elements, powers)?;
    let a_unit: Vec<f64> = ls
        .beta_sq()
        .iter()
        .zip(powers)
        .map(|(&b2, &p)| 1.0 / (b2 + sigma_z_sq / p).sqrt())
        .collect();
    let weighted: Vec<f64> = ls
        .beta_sq()
        .iter()
        .zip(elements)
        .zip(&a_unit)
        .map(|((&b2, &m), &a)| b2 * m as f64 * a)
        .collect();
    let total = compensated_sum(weighted.iter().copied());
    let residual = ls
        .beta_sq()
        .iter()
        .zip(powers)
        .zip(&a_unit)
        .map(|((&b2, &p), &a)| sigma_z_sq * b2 * a * a * a / (p * p) * (total - b2 * a))
        .collect();
    Ok(StationarityDiagnostics {
        a: elements
            .iter()
            .zip(&a_unit)
            .map(|(&m, &a)| m as f64 * a)
            .collect(),
        b: weighted.iter().map(|w| total - w).collect(),
        residual,
    })
}

/// Per-element stationarity values; all equal at a constrained stationary point.
pub fn stationarity_residual(
    ls: &LargeScale,
    elements: &[usize],
    powers: &[f64],
    sigma_z_sq: f64,
) -> Result<Vec<f64>> {
    Ok(stationarity_diagnostics(ls, elements, powers, sigma_z_sq)?.residual)
}
