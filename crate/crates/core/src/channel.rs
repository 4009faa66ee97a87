//! Random cascaded reflection channels `h_{k,m} = u_{k,m} v*_{k,m}`.
//!
//! Each hop is a Rician mixture of a fixed line-of-sight term and a
//! circularly-symmetric Gaussian term. With `K_br = inf` and `K_ru = 0` the
//! cascaded coefficient is exactly `CN(0, beta_k^2)`, i.i.d. across elements.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scenario::{ChannelModel, LargeScale, Scenario};
use crate::{Error, Result};

/// Independent purposes a single trial draws randomness for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    Channel = 0,
    EstimationNoise = 1,
    RandomPhase = 2,
    Auxiliary = 3,
}

const PURPOSES_PER_TRIAL: u64 = 4;

/// Identifies one reproducible ChaCha8 keystream.
///
/// The seed selects the key and `stream_id` the ChaCha stream (nonce), so
/// distinct ids give independent sequences without any shared state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub const fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Stream dedicated to one purpose within one trial.
    pub const fn for_trial(seed: u64, trial: u64, purpose: StreamPurpose) -> Self {
        RngStream {
            seed,
            stream_id: trial * PURPOSES_PER_TRIAL + purpose as u64,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Draws from `CN(0, variance)`: two independent real Gaussians of variance
/// `variance / 2`.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * scale, im * scale)
}

/// One draw of every cascaded coefficient, grouped per RIS.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    coefficients: Vec<Vec<Complex64>>,
}

impl ChannelRealization {
    pub fn new(coefficients: Vec<Vec<Complex64>>) -> Self {
        ChannelRealization { coefficients }
    }

    pub fn coefficients(&self) -> &[Vec<Complex64>] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<Vec<Complex64>> {
        self.coefficients
    }

    pub fn elements(&self) -> Vec<usize> {
        self.coefficients.iter().map(Vec::len).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.coefficients.iter().flatten()
    }
}

fn rician_hop<R: rand::Rng + ?Sized>(
    rng: &mut R,
    gain: f64,
    k_factor: f64,
    los_phase: f64,
) -> Complex64 {
    let amplitude = gain.sqrt();
    if k_factor == f64::INFINITY {
        return Complex64::from_polar(amplitude, los_phase);
    }
    let scattered = complex_gaussian(rng, 1.0);
    if k_factor == 0.0 {
        return scattered * amplitude;
    }
    let los = Complex64::from_polar((k_factor / (k_factor + 1.0)).sqrt(), los_phase);
    (los + scattered * (1.0 / (k_factor + 1.0)).sqrt()) * amplitude
}

/// Samples the scenario's channels. Equivalent to [`sample_cascade`] with the
/// scenario's element counts and Rician factors.
pub fn sample_channels(
    s: &Scenario,
    ls: &LargeScale,
    stream: RngStream,
) -> Result<ChannelRealization> {
    sample_cascade(ls, &s.elements(), s.channel_model(), stream)
}

/// Samples with zero line-of-sight phase on every element.
pub fn sample_cascade(
    ls: &LargeScale,
    elements: &[usize],
    model: ChannelModel,
    stream: RngStream,
) -> Result<ChannelRealization> {
    let zeros: Vec<Vec<f64>> = elements.iter().map(|&m| vec![0.0; m]).collect();
    sample_cascade_with_los_phases(ls, elements, model, &zeros, stream)
}

/// Samples with an explicit per-element line-of-sight phase profile, applied
/// to both hops' LoS components.
pub fn sample_cascade_with_los_phases(
    ls: &LargeScale,
    elements: &[usize],
    model: ChannelModel,
    los_phases: &[Vec<f64>],
    stream: RngStream,
) -> Result<ChannelRealization> {
    if elements.len() != ls.len() {
        return Err(Error::Shape(format!(
            "{} element counts for {} RISs",
            elements.len(),
            ls.len()
        )));
    }
    if los_phases.len() != elements.len()
        || los_phases.iter().zip(elements).any(|(p, &m)| p.len() != m)
    {
        return Err(Error::Shape(
            "LoS phase profile does not match element counts".into(),
        ));
    }
    let mut rng = stream.rng();
    let coefficients = ls
        .links()
        .iter()
        .zip(elements)
        .zip(los_phases)
        .map(|((link, &m), phases)| {
            (0..m)
                .map(|i| {
                    let u = rician_hop(&mut rng, link.bs_ris, model.rician_k_br, phases[i]);
                    let v = rician_hop(&mut rng, link.ris_user, model.rician_k_ru, phases[i]);
                    u * v.conj()
                })
                .collect()
        })
        .collect();
    Ok(ChannelRealization { coefficients })
}
