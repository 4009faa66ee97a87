//! RIS phase configuration, downlink composite channel and achievable rate.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{ChannelRealization, RngStream};
use crate::estimation::ChannelEstimate;
use crate::{Error, Result};

/// Unit-modulus reflection coefficients, grouped per RIS.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    coefficients: Vec<Vec<Complex64>>,
}

impl PhaseConfig {
    pub fn coefficients(&self) -> &[Vec<Complex64>] {
        &self.coefficients
    }
}

/// `h^* / |h|`, with the degenerate `h = 0` mapped to 1.
#[inline]
pub fn align_phase(h: Complex64) -> Complex64 {
    let mag = h.norm();
    if mag == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        h.conj() / mag
    }
}

fn aligned(coefficients: &[Vec<Complex64>]) -> PhaseConfig {
    PhaseConfig {
        coefficients: coefficients
            .iter()
            .map(|r| r.iter().map(|&h| align_phase(h)).collect())
            .collect(),
    }
}

/// Co-phases every element with its channel estimate.
pub fn configure_phases(est: &ChannelEstimate) -> PhaseConfig {
    aligned(est.estimates())
}

/// Co-phases with the true channel (perfect CSI).
pub fn perfect_phases(h: &ChannelRealization) -> PhaseConfig {
    aligned(h.coefficients())
}

/// Independent uniform phases on every element.
pub fn random_phases(elements: &[usize], stream: RngStream) -> PhaseConfig {
    let mut rng = stream.rng();
    PhaseConfig {
        coefficients: elements
            .iter()
            .map(|&m| {
                (0..m)
                    .map(|_| {
                        Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
                    })
                    .collect()
            })
            .collect(),
    }
}

/// `sum_k sum_m phi_{k,m} h_{k,m}`.
pub fn composite_channel(h: &ChannelRealization, phases: &PhaseConfig) -> Result<Complex64> {
    if h.elements() != phases.coefficients.iter().map(Vec::len).collect::<Vec<_>>() {
        return Err(Error::Shape(
            "phase configuration does not match channel layout".into(),
        ));
    }
    Ok(h.coefficients()
        .iter()
        .zip(&phases.coefficients)
        .flat_map(|(hk, pk)| hk.iter().zip(pk).map(|(h, p)| p * h))
        .sum())
}

/// Shannon rate `log2(1 + q |h|^2 / sigma_n^2)` in bits/s/Hz.
pub fn achievable_rate(composite: Complex64, q: f64, sigma_n_sq: f64) -> f64 {
    (q * composite.norm_sqr() / sigma_n_sq).ln_1p() / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_cascade;
    use crate::estimation::{ls_estimate, PilotAllocation};
    use crate::numeric::mean_and_se;
    use crate::scenario::{ChannelModel, LargeScale};
    use proptest::prelude::*;
    use rayon::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn phase_examples() {
        assert_eq!(align_phase(c(1.0, 0.0)), c(1.0, 0.0));
        let p = align_phase(c(3.0, 4.0));
        assert!((p - c(0.6, -0.8)).norm() < 1e-15);
        assert_eq!(align_phase(c(0.0, 0.0)), c(1.0, 0.0));
    }

    #[test]
    fn perfect_csi_aligns_every_term() {
        let ls = LargeScale::from_beta_sq(vec![1.0, 0.1]).unwrap();
        let h = sample_cascade(
            &ls,
            &[20, 30],
            ChannelModel::CASCADED_RAYLEIGH,
            RngStream::new(1, 0),
        )
        .unwrap();
        let phases = perfect_phases(&h);
        for (hk, pk) in h.coefficients().iter().zip(phases.coefficients()) {
            for (h, p) in hk.iter().zip(pk) {
                let t = p * h;
                assert!((t.re - h.norm()).abs() <= 1e-15 * h.norm());
                assert!(t.im.abs() <= 1e-15 * h.norm());
            }
        }
        let est = crate::estimation::ChannelEstimate::perfect(&h);
        assert_eq!(configure_phases(&est), phases);
    }

    #[test]
    fn coherent_sum_of_magnitudes() {
        let h = ChannelRealization::new(vec![vec![c(0.0, 1.0)], vec![c(-2.0, 0.0)]]);
        let comp = composite_channel(&h, &perfect_phases(&h)).unwrap();
        assert!((comp - c(3.0, 0.0)).norm() < 1e-15);
        let zero = ChannelRealization::new(vec![vec![c(0.0, 0.0); 3]]);
        assert_eq!(
            composite_channel(&zero, &perfect_phases(&zero)).unwrap(),
            c(0.0, 0.0)
        );
    }

    #[test]
    fn rates() {
        assert_eq!(achievable_rate(c(0.0, 0.0), 1.0, 1.0), 0.0);
        assert!((achievable_rate(c(1.0, 0.0), 2.0, 2.0) - 1.0).abs() < 1e-15);
        let r = achievable_rate(c(1e-6, 0.0), 10.0, 1e-12);
        assert!((r - 11f64.log2()).abs() < 1e-12);
        assert!((r - 3.4594).abs() < 1e-4);
    }

    #[test]
    fn random_phases_give_incoherent_gain() {
        // E|sum phi h|^2 = M beta^2 for independent uniform phases.
        let m = 10_000;
        let trials = 10_000u64;
        let ls = LargeScale::from_beta_sq(vec![1.0]).unwrap();
        let gains: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let h = sample_cascade(
                    &ls,
                    &[m],
                    ChannelModel::CASCADED_RAYLEIGH,
                    RngStream::new(3, 2 * t),
                )
                .unwrap();
                let ph = random_phases(&[m], RngStream::new(3, 2 * t + 1));
                composite_channel(&h, &ph).unwrap().norm_sqr()
            })
            .collect();
        let (mean, _) = mean_and_se(&gains);
        assert!((mean / m as f64 - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn random_phases_are_unit_modulus() {
        let ph = random_phases(&[100, 5], RngStream::new(0, 0));
        assert!(ph
            .coefficients()
            .iter()
            .flatten()
            .all(|p| (p.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn better_estimates_give_more_gain() {
        let m = 16;
        let trials = 10_000u64;
        let ls = LargeScale::from_beta_sq(vec![1.0]).unwrap();
        let alloc = PilotAllocation::uniform(&[m], 1.0).unwrap();
        let diff: Vec<f64> = (0..trials)
            .map(|t| {
                let h = sample_cascade(
                    &ls,
                    &[m],
                    ChannelModel::CASCADED_RAYLEIGH,
                    RngStream::new(4, 2 * t),
                )
                .unwrap();
                let est = ls_estimate(&h, &alloc, 1.0, RngStream::new(4, 2 * t + 1)).unwrap();
                let perfect = composite_channel(&h, &perfect_phases(&h))
                    .unwrap()
                    .norm_sqr();
                let noisy = composite_channel(&h, &configure_phases(&est))
                    .unwrap()
                    .norm_sqr();
                perfect - noisy
            })
            .collect();
        let (mean, se) = mean_and_se(&diff);
        assert!(mean > 3.0 * se, "{mean} vs {se}");
    }

    fn arb_channel() -> impl Strategy<Value = (Vec<Complex64>, Vec<Complex64>)> {
        prop::collection::vec(
            (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
            1..40,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(a, b, e, f)| (c(a, b), c(a + e, b + f)))
                .unzip()
        })
    }

    proptest! {
        #[test]
        fn composite_bounded_by_coherent_sum((h, est) in arb_channel()) {
            let bound: f64 = h.iter().map(|x| x.norm()).sum();
            let h = ChannelRealization::new(vec![h]);
            let est = ChannelEstimate::new(vec![est.clone()], vec![vec![0.0; est.len()]]);
            let comp = composite_channel(&h, &configure_phases(&est)).unwrap();
            prop_assert!(comp.norm() <= bound * (1.0 + 1e-9));
        }

        #[test]
        fn global_phase_invariance((h, est) in arb_channel(), theta in 0.0f64..6.3) {
            let rot = Complex64::from_polar(1.0, theta);
            let n = h.len();
            let base = composite_channel(
                &ChannelRealization::new(vec![h.clone()]),
                &configure_phases(&ChannelEstimate::new(vec![est.clone()], vec![vec![0.0; n]])),
            ).unwrap();
            let rh: Vec<_> = h.iter().map(|x| x * rot).collect();
            let re: Vec<_> = est.iter().map(|x| x * rot).collect();
            let rotated = composite_channel(
                &ChannelRealization::new(vec![rh]),
                &configure_phases(&ChannelEstimate::new(vec![re], vec![vec![0.0; n]])),
            ).unwrap();
            prop_assert!((base.norm() - rotated.norm()).abs() <= 1e-12 * base.norm().max(1.0));
        }
    }
}
