//! ON/OFF uplink pilot protocol and per-element least-squares estimation.
//!
//! One RIS element is switched on per pilot slot, so slot `(k, m)` observes
//! only `h_{k,m}`:
//!
//! ```text
//! y = (phi h)^* sqrt(p) x + z,        z ~ CN(0, sigma_z^2)
//! h_hat = y^* x phi^* / sqrt(p) = h + eps,   eps ~ CN(0, sigma_z^2 / p)
//! ```
//!
//! Two equivalent routes are provided: [`ls_estimate_protocol`] simulates the
//! observation and inverts it; [`ls_estimate`] draws the error term directly.

use num_complex::Complex64;

use crate::channel::{complex_gaussian, ChannelRealization, RngStream};
use crate::numeric::compensated_sum;
use crate::{Error, Result};

/// Relative tolerance on the pilot budget.
pub const BUDGET_RTOL: f64 = 1e-9;

/// Per-element pilot powers together with the budget they exhaust.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotAllocation {
    powers: Vec<Vec<f64>>,
    budget: f64,
}

impl PilotAllocation {
    /// Validates positivity and `sum p_{k,m} = (sum M_k) p_avg`.
    pub fn new(powers: Vec<Vec<f64>>, p_avg: f64) -> Result<Self> {
        if !(p_avg > 0.0) || !p_avg.is_finite() {
            return Err(Error::domain(
                "p_avg",
                p_avg,
                "average pilot power must be positive",
            ));
        }
        if powers.is_empty() || powers.iter().any(Vec::is_empty) {
            return Err(Error::Shape("every RIS needs at least one pilot".into()));
        }
        if let Some(&p) = powers
            .iter()
            .flatten()
            .find(|p| !(**p > 0.0) || !p.is_finite())
        {
            return Err(Error::domain(
                "pilot power",
                p,
                "must be positive and finite",
            ));
        }
        let slots: usize = powers.iter().map(Vec::len).sum();
        let budget = slots as f64 * p_avg;
        let total = compensated_sum(powers.iter().flatten().copied());
        if (total - budget).abs() > BUDGET_RTOL * budget {
            return Err(Error::domain(
                "pilot budget",
                total,
                "powers must sum to (sum M_k) * p_avg",
            ));
        }
        Ok(PilotAllocation { powers, budget })
    }

    pub fn uniform(elements: &[usize], p_avg: f64) -> Result<Self> {
        Self::new(elements.iter().map(|&m| vec![p_avg; m]).collect(), p_avg)
    }

    /// Replicates one power per RIS across its elements.
    pub fn from_per_ris(per_ris: &[f64], elements: &[usize], p_avg: f64) -> Result<Self> {
        if per_ris.len() != elements.len() {
            return Err(Error::Shape(format!(
                "{} per-RIS powers for {} RISs",
                per_ris.len(),
                elements.len()
            )));
        }
        Self::new(
            per_ris
                .iter()
                .zip(elements)
                .map(|(&p, &m)| vec![p; m])
                .collect(),
            p_avg,
        )
    }

    pub fn powers(&self) -> &[Vec<f64>] {
        &self.powers
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn elements(&self) -> Vec<usize> {
        self.powers.iter().map(Vec::len).collect()
    }
}

/// LS estimates and their per-element MSE.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    estimates: Vec<Vec<Complex64>>,
    mse: Vec<Vec<f64>>,
}

impl ChannelEstimate {
    pub fn new(estimates: Vec<Vec<Complex64>>, mse: Vec<Vec<f64>>) -> Self {
        ChannelEstimate { estimates, mse }
    }

    /// Noise-free estimate (`h_hat = h`, zero MSE).
    pub fn perfect(h: &ChannelRealization) -> Self {
        let estimates = h.coefficients().to_vec();
        let mse = estimates.iter().map(|r| vec![0.0; r.len()]).collect();
        ChannelEstimate { estimates, mse }
    }

    pub fn estimates(&self) -> &[Vec<Complex64>] {
        &self.estimates
    }

    pub fn mse(&self) -> &[Vec<f64>] {
        &self.mse
    }
}

/// `delta^2 = sigma_z^2 / p`.
pub fn estimate_mse(p: f64, sigma_z_sq: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::domain("pilot power", p, "must be positive"));
    }
    Ok(sigma_z_sq / p)
}

/// Number of pilot slots the ON/OFF protocol needs.
pub fn pilot_overhead(elements: &[usize]) -> usize {
    elements.iter().sum()
}

fn check_shapes(h: &ChannelRealization, alloc: &PilotAllocation) -> Result<()> {
    if h.elements() != alloc.elements() {
        return Err(Error::Shape(format!(
            "channel layout {:?} vs allocation layout {:?}",
            h.elements(),
            alloc.elements()
        )));
    }
    Ok(())
}

/// Shortcut estimator: `h_hat = h + sqrt(sigma_z^2 / p) w` with `w ~ CN(0, 1)`.
///
/// The unit draws `w` depend only on `stream`, so two allocations estimated
/// from the same stream share their noise up to scaling.
pub fn ls_estimate(
    h: &ChannelRealization,
    alloc: &PilotAllocation,
    sigma_z_sq: f64,
    stream: RngStream,
) -> Result<ChannelEstimate> {
    check_shapes(h, alloc)?;
    let mut rng = stream.rng();
    let mut estimates = Vec::with_capacity(h.coefficients().len());
    let mut mse = Vec::with_capacity(h.coefficients().len());
    for (hk, pk) in h.coefficients().iter().zip(alloc.powers()) {
        let mut est_k = Vec::with_capacity(hk.len());
        let mut mse_k = Vec::with_capacity(hk.len());
        for (&hm, &p) in hk.iter().zip(pk) {
            let d2 = estimate_mse(p, sigma_z_sq)?;
            let w = complex_gaussian(&mut rng, 1.0);
            est_k.push(hm + w * d2.sqrt());
            mse_k.push(d2);
        }
        estimates.push(est_k);
        mse.push(mse_k);
    }
    Ok(ChannelEstimate { estimates, mse })
}

/// Unit-modulus training reflection coefficients and pilot symbols, one per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Training {
    reflection: Vec<Vec<Complex64>>,
    pilots: Vec<Vec<Complex64>>,
}

impl Training {
    pub fn new(reflection: Vec<Vec<Complex64>>, pilots: Vec<Vec<Complex64>>) -> Result<Self> {
        let layout = |v: &Vec<Vec<Complex64>>| v.iter().map(Vec::len).collect::<Vec<_>>();
        if layout(&reflection) != layout(&pilots) {
            return Err(Error::Shape(
                "training reflection and pilot layouts differ".into(),
            ));
        }
        if let Some(c) = reflection
            .iter()
            .chain(&pilots)
            .flatten()
            .find(|c| (c.norm() - 1.0).abs() > 1e-12)
        {
            return Err(Error::domain(
                "training symbol",
                c.norm(),
                "must have unit modulus",
            ));
        }
        Ok(Training { reflection, pilots })
    }

    /// `phi = 1`, `x = 1` in every slot.
    pub fn unit(elements: &[usize]) -> Self {
        let ones: Vec<Vec<Complex64>> = elements
            .iter()
            .map(|&m| vec![Complex64::new(1.0, 0.0); m])
            .collect();
        Training {
            reflection: ones.clone(),
            pilots: ones,
        }
    }
}

/// Received pilot in one ON/OFF slot.
pub fn pilot_observation(
    h: Complex64,
    reflection: Complex64,
    p: f64,
    pilot: Complex64,
    noise: Complex64,
) -> Complex64 {
    (reflection * h).conj() * p.sqrt() * pilot + noise
}

/// LS inversion of one slot's observation.
pub fn ls_invert(y: Complex64, p: f64, pilot: Complex64, reflection: Complex64) -> Complex64 {
    y.conj() * pilot * reflection.conj() / p.sqrt()
}

/// Protocol-level estimator: simulates every ON/OFF slot and inverts it.
pub fn ls_estimate_protocol(
    h: &ChannelRealization,
    alloc: &PilotAllocation,
    sigma_z_sq: f64,
    training: &Training,
    stream: RngStream,
) -> Result<ChannelEstimate> {
    check_shapes(h, alloc)?;
    if training.pilots.iter().map(Vec::len).collect::<Vec<_>>() != alloc.elements() {
        return Err(Error::Shape(
            "training layout does not match channel layout".into(),
        ));
    }
    let sigma_z = sigma_z_sq.sqrt();
    let mut rng = stream.rng();
    let mut estimates = Vec::with_capacity(h.coefficients().len());
    let mut mse = Vec::with_capacity(h.coefficients().len());
    for (k, (hk, pk)) in h.coefficients().iter().zip(alloc.powers()).enumerate() {
        let mut est_k = Vec::with_capacity(hk.len());
        let mut mse_k = Vec::with_capacity(hk.len());
        for (m, (&hm, &p)) in hk.iter().zip(pk).enumerate() {
            let d2 = estimate_mse(p, sigma_z_sq)?;
            let (phi, x) = (training.reflection[k][m], training.pilots[k][m]);
            let z = complex_gaussian(&mut rng, 1.0) * sigma_z;
            let y = pilot_observation(hm, phi, p, x, z);
            est_k.push(ls_invert(y, p, x, phi));
            mse_k.push(d2);
        }
        estimates.push(est_k);
        mse.push(mse_k);
    }
    Ok(ChannelEstimate { estimates, mse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_cascade;
    use crate::numeric::mean_and_se;
    use crate::scenario::{dbm_to_watts, ChannelModel, LargeScale};

    fn channel(beta_sq: Vec<f64>, elements: &[usize], seed: u64) -> ChannelRealization {
        let ls = LargeScale::from_beta_sq(beta_sq).unwrap();
        sample_cascade(
            &ls,
            elements,
            ChannelModel::CASCADED_RAYLEIGH,
            RngStream::new(seed, 0),
        )
        .unwrap()
    }

    #[test]
    fn mse_values() {
        assert_eq!(estimate_mse(3.5, 3.5).unwrap(), 1.0);
        let p = dbm_to_watts(-13.0);
        assert!((p - 5.0119e-5).abs() / 5.0119e-5 < 1e-4);
        let d2 = estimate_mse(p, 1e-14).unwrap();
        assert!((d2 - 1.9953e-10).abs() / 1.9953e-10 < 1e-4);
        assert_eq!(estimate_mse(f64::INFINITY, 1e-14).unwrap(), 0.0);
        assert!(estimate_mse(0.0, 1.0).is_err());
        assert!(estimate_mse(-1.0, 1.0).is_err());
    }

    #[test]
    fn overhead() {
        assert_eq!(pilot_overhead(&[100, 100]), 200);
        assert_eq!(pilot_overhead(&[1]), 1);
        assert_eq!(pilot_overhead(&[1000, 100]), 1100);
    }

    #[test]
    fn allocation_validation() {
        assert!(PilotAllocation::new(vec![vec![1.0, 1.0]], 1.0).is_ok());
        assert!(PilotAllocation::new(vec![vec![1.5, 0.5]], 1.0).is_ok());
        assert!(PilotAllocation::new(vec![vec![1.5, 0.6]], 1.0).is_err());
        assert!(PilotAllocation::new(vec![vec![2.0, 0.0]], 1.0).is_err());
        assert!(PilotAllocation::from_per_ris(&[1.0], &[2, 2], 1.0).is_err());
        let a = PilotAllocation::from_per_ris(&[0.5, 1.5], &[3, 3], 1.0).unwrap();
        assert_eq!(a.budget(), 6.0);
        assert_eq!(a.powers()[1], vec![1.5; 3]);
    }

    #[test]
    fn noiseless_estimate_is_exact() {
        let h = channel(vec![1.0, 0.3], &[5, 7], 1);
        let alloc = PilotAllocation::uniform(&[5, 7], 1e-3).unwrap();
        let est = ls_estimate(&h, &alloc, 0.0, RngStream::new(2, 0)).unwrap();
        assert_eq!(est.estimates(), h.coefficients());
    }

    #[test]
    fn protocol_is_invariant_to_exact_unit_training() {
        let h = channel(vec![1.0], &[4], 3);
        let alloc = PilotAllocation::uniform(&[4], 0.25).unwrap();
        let j = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let base = Training::unit(&[4]);
        let other =
            Training::new(vec![vec![j, -one, -j, one]], vec![vec![-j, j, -one, one]]).unwrap();
        // noiseless: bit-identical
        let a = ls_estimate_protocol(&h, &alloc, 0.0, &base, RngStream::new(1, 1)).unwrap();
        let b = ls_estimate_protocol(&h, &alloc, 0.0, &other, RngStream::new(1, 1)).unwrap();
        assert_eq!(a.estimates(), b.estimates());
        assert_eq!(a.estimates(), h.coefficients());
        // noisy, same noise seed: the error term is only rotated
        let a = ls_estimate_protocol(&h, &alloc, 0.1, &base, RngStream::new(1, 1)).unwrap();
        let b = ls_estimate_protocol(&h, &alloc, 0.1, &other, RngStream::new(1, 1)).unwrap();
        for ((ea, eb), hm) in a.estimates()[0]
            .iter()
            .zip(&b.estimates()[0])
            .zip(&h.coefficients()[0])
        {
            assert!(
                ((ea - hm).norm() - (eb - hm).norm()).abs()
                    <= 4.0 * f64::EPSILON * ea.norm().max(eb.norm())
            );
        }
    }

    #[test]
    fn protocol_invariant_to_arbitrary_unit_training() {
        let h = channel(vec![2.0], &[16], 8);
        let alloc = PilotAllocation::uniform(&[16], 1.0).unwrap();
        let phases = |off: f64| -> Vec<Vec<Complex64>> {
            vec![(0..16)
                .map(|i| Complex64::from_polar(1.0, off + 0.37 * i as f64))
                .collect()]
        };
        let t = Training::new(phases(0.1), phases(2.0)).unwrap();
        let est = ls_estimate_protocol(&h, &alloc, 0.0, &t, RngStream::new(0, 0)).unwrap();
        for (e, hm) in est.estimates()[0].iter().zip(&h.coefficients()[0]) {
            assert!((e - hm).norm() <= 1e-15 * hm.norm());
        }
    }

    #[test]
    fn training_rejects_non_unit() {
        let t = Training::new(
            vec![vec![Complex64::new(0.5, 0.0)]],
            vec![vec![Complex64::new(1.0, 0.0)]],
        );
        assert!(t.is_err());
    }

    #[test]
    fn error_variance_matches_mse() {
        // h = 0, p = sigma_z^2: h_hat is pure noise with variance 1.
        let n = 1_000_000;
        let h = ChannelRealization::new(vec![vec![Complex64::new(0.0, 0.0); n]]);
        let sigma = 1e-3;
        let alloc = PilotAllocation::uniform(&[n], sigma).unwrap();
        let est = ls_estimate(&h, &alloc, sigma, RngStream::new(5, 0)).unwrap();
        let p: Vec<f64> = est.estimates()[0].iter().map(|c| c.norm_sqr()).collect();
        let (m, _) = mean_and_se(&p);
        assert!((m - 1.0).abs() < 0.005, "{m}");
    }

    #[test]
    fn unbiased_and_uncorrelated_with_channel() {
        let n = 200_000;
        let h = channel(vec![1.0], &[n], 6);
        let p = 4.0;
        let sigma = 1.0;
        let alloc = PilotAllocation::uniform(&[n], p).unwrap();
        let est = ls_estimate(&h, &alloc, sigma, RngStream::new(6, 1)).unwrap();
        let errs: Vec<Complex64> = est.estimates()[0]
            .iter()
            .zip(&h.coefficients()[0])
            .map(|(e, h)| e - h)
            .collect();
        let delta = (sigma / p).sqrt();
        let mean: Complex64 = errs.iter().sum::<Complex64>() / n as f64;
        assert!(mean.norm() < 4.0 * delta / (n as f64).sqrt());
        let mse: Vec<f64> = errs.iter().map(|e| e.norm_sqr()).collect();
        let (m, se) = mean_and_se(&mse);
        assert!((m - 0.25).abs() < 5.0 * se);
        let corr: Complex64 = errs
            .iter()
            .zip(&h.coefficients()[0])
            .map(|(e, h)| e * h.conj())
            .sum::<Complex64>()
            / (n as f64 * delta);
        assert!(corr.norm() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn protocol_and_shortcut_agree_in_distribution() {
        let n = 200_000;
        let h = ChannelRealization::new(vec![vec![Complex64::new(0.3, -0.2); n]]);
        let alloc = PilotAllocation::uniform(&[n], 2.0).unwrap();
        let a = ls_estimate(&h, &alloc, 1.0, RngStream::new(7, 0)).unwrap();
        let b = ls_estimate_protocol(&h, &alloc, 1.0, &Training::unit(&[n]), RngStream::new(7, 1))
            .unwrap();
        for f in [
            |c: &Complex64| c.re,
            |c: &Complex64| c.im,
            |c: &Complex64| c.norm_sqr(),
        ] {
            let xa: Vec<f64> = a.estimates()[0].iter().map(f).collect();
            let xb: Vec<f64> = b.estimates()[0].iter().map(f).collect();
            let (ma, sa) = mean_and_se(&xa);
            let (mb, sb) = mean_and_se(&xb);
            assert!((ma - mb).abs() < 3.0 * (sa * sa + sb * sb).sqrt());
        }
    }
}
