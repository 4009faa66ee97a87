//! Pilot power allocators.
//!
//! Every allocator assigns one power per RIS; all elements of a RIS share it.
//! Outputs always satisfy the budget `sum_k M_k p_k = (sum_k M_k) p_avg`.
//!
//! | allocator | rule |
//! |-----------|------|
//! | uniform   | `p_k = p_avg` |
//! | moderate SNR | `p_k ∝ sqrt(S / beta_k - 1)`, `S = sum_j beta_j M_j` |
//! | large array  | `p_k ∝ 1 / sqrt(beta_k)`, weighted by `M_k` in the budget |
//! | equal array  | `p_k = K p_avg / (sqrt(beta_k) sum_j beta_j^{-1/2})` |
//! | exact        | numeric maximiser of `phi` ([`exact`]) |

pub mod exact;

use std::fmt;
use std::str::FromStr;

use crate::estimation::{PilotAllocation, BUDGET_RTOL};
use crate::numeric::compensated_sum;
use crate::scenario::LargeScale;
use crate::{Error, Result};

pub use exact::{
    allocate_exact_numeric, exact_multistart, solve_exact, ExactOptions, ExactSolution,
    MultiStartReport,
};

/// One pilot power per RIS.
#[derive(Debug, Clone, PartialEq)]
pub struct PerRisPowers(Vec<f64>);

impl PerRisPowers {
    /// Checks positivity and the budget against the given element counts.
    pub fn new(powers: Vec<f64>, elements: &[usize], p_avg: f64) -> Result<Self> {
        let out = PerRisPowers(powers);
        out.check(elements, p_avg)?;
        Ok(out)
    }

    pub fn check(&self, elements: &[usize], p_avg: f64) -> Result<()> {
        if self.0.len() != elements.len() {
            return Err(Error::Shape(format!(
                "{} powers for {} RISs",
                self.0.len(),
                elements.len()
            )));
        }
        if let Some(&p) = self.0.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(Error::domain(
                "pilot power",
                p,
                "must be positive and finite",
            ));
        }
        let budget = elements.iter().sum::<usize>() as f64 * p_avg;
        let spent = compensated_sum(self.0.iter().zip(elements).map(|(&p, &m)| p * m as f64));
        if (spent - budget).abs() > BUDGET_RTOL * budget {
            return Err(Error::domain(
                "pilot budget",
                spent,
                "sum_k M_k p_k must equal (sum_k M_k) p_avg",
            ));
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Expands to per-element powers.
    pub fn to_pilot_allocation(&self, elements: &[usize], p_avg: f64) -> Result<PilotAllocation> {
        PilotAllocation::from_per_ris(&self.0, elements, p_avg)
    }
}

/// `10 log10(max p / min p)`.
pub fn dynamic_range_db(powers: &PerRisPowers) -> f64 {
    let max = powers.0.iter().copied().fold(f64::MIN, f64::max);
    let min = powers.0.iter().copied().fold(f64::MAX, f64::min);
    10.0 * (max / min).log10()
}

pub fn allocate_average(elements: &[usize], p_avg: f64) -> Result<PerRisPowers> {
    PerRisPowers::new(vec![p_avg; elements.len()], elements, p_avg)
}

/// Normalises nonnegative weights into powers meeting the budget.
fn normalise(weights: &[f64], elements: &[usize], p_avg: f64) -> Result<PerRisPowers> {
    let slots = elements.iter().sum::<usize>() as f64;
    let spent = compensated_sum(weights.iter().zip(elements).map(|(&w, &m)| w * m as f64));
    PerRisPowers::new(
        weights.iter().map(|w| w / spent * slots * p_avg).collect(),
        elements,
        p_avg,
    )
}

fn check_lengths(ls: &LargeScale, elements: &[usize]) -> Result<()> {
    if ls.len() != elements.len() {
        return Err(Error::Shape(format!(
            "{} element counts for {} RISs",
            elements.len(),
            ls.len()
        )));
    }
    if elements.contains(&0) {
        return Err(Error::Shape("every RIS needs at least one element".into()));
    }
    Ok(())
}

fn moderate_snr_radicands(ls: &LargeScale, elements: &[usize]) -> Vec<f64> {
    let weighted = compensated_sum(ls.beta().iter().zip(elements).map(|(&b, &m)| b * m as f64));
    ls.beta().iter().map(|&b| weighted / b - 1.0).collect()
}

/// Moderate-SNR closed form: `p_k ∝ sqrt(S / beta_k - 1)`.
///
/// Fails with [`Error::Infeasible`] naming the first RIS whose radicand is not
/// positive.
pub fn allocate_moderate_snr(
    ls: &LargeScale,
    elements: &[usize],
    p_avg: f64,
) -> Result<PerRisPowers> {
    check_lengths(ls, elements)?;
    let radicands = moderate_snr_radicands(ls, elements);
    if let Some((ris, &radicand)) = radicands.iter().enumerate().find(|(_, r)| !(**r > 0.0)) {
        return Err(Error::Infeasible { ris, radicand });
    }
    let weights: Vec<f64> = radicands.iter().map(|r| r.sqrt()).collect();
    normalise(&weights, elements, p_avg)
}

/// Like [`allocate_moderate_snr`], but RISs with a nonpositive radicand get
/// `p_avg` and the rest share the remaining budget by the closed-form weights.
/// Returns the indices that fell back.
pub fn allocate_moderate_snr_with_fallback(
    ls: &LargeScale,
    elements: &[usize],
    p_avg: f64,
) -> Result<(PerRisPowers, Vec<usize>)> {
    check_lengths(ls, elements)?;
    let radicands = moderate_snr_radicands(ls, elements);
    let flagged: Vec<usize> = (0..radicands.len())
        .filter(|&k| !(radicands[k] > 0.0))
        .collect();
    if flagged.is_empty() {
        return Ok((allocate_moderate_snr(ls, elements, p_avg)?, flagged));
    }
    let free: Vec<usize> = (0..radicands.len())
        .filter(|k| !flagged.contains(k))
        .collect();
    let mut powers = vec![p_avg; elements.len()];
    if !free.is_empty() {
        let free_slots: usize = free.iter().map(|&k| elements[k]).sum();
        let spent = compensated_sum(
            free.iter()
                .map(|&k| radicands[k].sqrt() * elements[k] as f64),
        );
        for &k in &free {
            powers[k] = radicands[k].sqrt() / spent * free_slots as f64 * p_avg;
        }
    }
    Ok((PerRisPowers::new(powers, elements, p_avg)?, flagged))
}

/// Large-array closed form:
/// `p_k = (sum M) p_avg / (sqrt(beta_k) sum_j M_j / sqrt(beta_j))`.
///
/// Equal element counts reduce this to [`allocate_equal_m`], which is then
/// called directly.
pub fn allocate_large_m(ls: &LargeScale, elements: &[usize], p_avg: f64) -> Result<PerRisPowers> {
    check_lengths(ls, elements)?;
    if elements.windows(2).all(|w| w[0] == w[1]) {
        let out = allocate_equal_m(ls, elements.len(), p_avg)?;
        out.check(elements, p_avg)?;
        return Ok(out);
    }
    let slots = elements.iter().sum::<usize>() as f64;
    let root: Vec<f64> = ls.beta().iter().map(|b| b.sqrt()).collect();
    let denom = compensated_sum(root.iter().zip(elements).map(|(&r, &m)| m as f64 / r));
    PerRisPowers::new(
        root.iter().map(|&r| slots * p_avg / (r * denom)).collect(),
        elements,
        p_avg,
    )
}

/// Equal-array closed form, the inverse square-root law
/// `p_k = K p_avg / (sqrt(beta_k) sum_j beta_j^{-1/2})`.
///
/// Assumes every RIS has the same number of elements.
pub fn allocate_equal_m(ls: &LargeScale, ris_count: usize, p_avg: f64) -> Result<PerRisPowers> {
    if ris_count != ls.len() {
        return Err(Error::Shape(format!(
            "{} RISs requested, {} large-scale gains",
            ris_count,
            ls.len()
        )));
    }
    let k = ris_count as f64;
    let root: Vec<f64> = ls.beta().iter().map(|b| b.sqrt()).collect();
    let denom = compensated_sum(root.iter().map(|r| 1.0 / r));
    PerRisPowers::new(
        root.iter().map(|&r| k * p_avg / (r * denom)).collect(),
        &vec![1; ris_count],
        p_avg,
    )
}

/// Allocator identifiers accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Allocator {
    Uniform,
    ModerateSnr,
    LargeArray,
    EqualArray,
    Exact,
}

impl Allocator {
    pub const ALL: [Allocator; 5] = [
        Allocator::Uniform,
        Allocator::ModerateSnr,
        Allocator::LargeArray,
        Allocator::EqualArray,
        Allocator::Exact,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Allocator::Uniform => "uniform",
            Allocator::ModerateSnr => "eq27",
            Allocator::LargeArray => "eq28",
            Allocator::EqualArray => "eq29",
            Allocator::Exact => "exact",
        }
    }
}

impl fmt::Display for Allocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Allocator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" | "average" => Ok(Allocator::Uniform),
            "eq27" | "moderate-snr" => Ok(Allocator::ModerateSnr),
            "eq28" | "large-array" => Ok(Allocator::LargeArray),
            "eq29" | "equal-array" => Ok(Allocator::EqualArray),
            "exact" => Ok(Allocator::Exact),
            other => Err(format!(
                "unknown allocator '{other}' (expected one of uniform, eq27, eq28, eq29, exact)"
            )),
        }
    }
}

/// Output of [`allocate`]: powers plus the RISs where the moderate-SNR form
/// fell back to `p_avg`.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub allocator: Allocator,
    pub powers: PerRisPowers,
    pub fallback_ris: Vec<usize>,
}

/// Runs one allocator on a layout.
pub fn allocate(
    allocator: Allocator,
    ls: &LargeScale,
    elements: &[usize],
    p_avg: f64,
    sigma_z_sq: f64,
    exact: &ExactOptions,
) -> Result<Allocation> {
    check_lengths(ls, elements)?;
    let (powers, fallback_ris) = match allocator {
        Allocator::Uniform => (allocate_average(elements, p_avg)?, vec![]),
        Allocator::ModerateSnr => allocate_moderate_snr_with_fallback(ls, elements, p_avg)?,
        Allocator::LargeArray => (allocate_large_m(ls, elements, p_avg)?, vec![]),
        Allocator::EqualArray => {
            if !elements.windows(2).all(|w| w[0] == w[1]) {
                return Err(Error::Shape(format!(
                    "equal-array allocation needs equal element counts, got {elements:?}"
                )));
            }
            let out = allocate_equal_m(ls, elements.len(), p_avg)?;
            out.check(elements, p_avg)?;
            (out, vec![])
        }
        Allocator::Exact => (
            solve_exact(ls, elements, p_avg, sigma_z_sq, exact)?.powers,
            vec![],
        ),
    };
    Ok(Allocation {
        allocator,
        powers,
        fallback_ris,
    })
}
