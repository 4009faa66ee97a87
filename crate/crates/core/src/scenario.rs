//! System geometry, unit conversions and large-scale path loss.
//!
//! All power quantities are stored in linear watts. dB and dBm only appear at
//! the configuration boundary through [`dbm_to_watts`] and [`db_to_linear`].

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Height of the BS and both RISs in the two-RIS layout.
pub const TWO_RIS_HEIGHT_M: f64 = 10.0;
/// Half the separation between the two RISs (they sit at y = -d_v and y = +d_v).
pub const TWO_RIS_HALF_SPACING_M: f64 = 10.0;
/// Horizontal offset between the RIS line and the user line.
pub const TWO_RIS_USER_OFFSET_M: f64 = 2.0;
/// Default x-coordinate of the RIS line. Not a published value; see README.
pub const DEFAULT_D0_M: f64 = 50.0;

pub fn dbm_to_watts(x_dbm: f64) -> f64 {
    10f64.powf((x_dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Power-law path loss `C0 * d^-alpha` as a linear gain, with `C0` given in dB
/// at the 1 m reference distance.
pub fn path_loss(d: f64, c0_db: f64, alpha: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::domain("distance", d, "must be positive and finite"));
    }
    Ok(db_to_linear(c0_db) * d.powf(-alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RisSpec {
    pub elements: usize,
    pub position: Position,
}

/// Rician factors of the two hops. `f64::INFINITY` is pure line of sight and
/// `0.0` is Rayleigh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub rician_k_br: f64,
    pub rician_k_ru: f64,
}

impl ChannelModel {
    /// Deterministic BS-RIS hop and Rayleigh RIS-user hop, for which the
    /// cascaded coefficient is exactly `CN(0, beta^2)`.
    pub const CASCADED_RAYLEIGH: ChannelModel = ChannelModel {
        rician_k_br: f64::INFINITY,
        rician_k_ru: 0.0,
    };

    pub fn is_cascaded_rayleigh(&self) -> bool {
        self.rician_k_br == f64::INFINITY && self.rician_k_ru == 0.0
    }
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self::CASCADED_RAYLEIGH
    }
}

/// Complete physical description of one multi-RIS link. The direct BS-user
/// path is blocked and contributes nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub bs_position: Position,
    pub user_position: Position,
    pub ris: Vec<RisSpec>,
    pub c0_db: f64,
    pub alpha_br: f64,
    pub alpha_ru: f64,
    pub rician_k_br: f64,
    pub rician_k_ru: f64,
    /// BS receiver noise power (W).
    pub sigma_z_sq: f64,
    /// User receiver noise power (W).
    pub sigma_n_sq: f64,
    /// Downlink transmit power (W).
    pub q: f64,
    /// Average uplink pilot power (W).
    pub p_avg: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.ris.is_empty() {
            return Err(Error::Shape("scenario needs at least one RIS".into()));
        }
        let mut points = vec![self.bs_position, self.user_position];
        for r in &self.ris {
            if r.elements == 0 {
                return Err(Error::domain(
                    "elements",
                    0.0,
                    "every RIS needs at least one element",
                ));
            }
            points.push(r.position);
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::domain(
                "position",
                p.x + p.y + p.z,
                "coordinates must be finite",
            ));
        }
        if !self.c0_db.is_finite() {
            return Err(Error::domain("c0_db", self.c0_db, "must be finite"));
        }
        for (name, v) in [("alpha_br", self.alpha_br), ("alpha_ru", self.alpha_ru)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(
                    name,
                    v,
                    "path-loss exponent must be positive",
                ));
            }
        }
        for (name, v) in [
            ("rician_k_br", self.rician_k_br),
            ("rician_k_ru", self.rician_k_ru),
        ] {
            if !(v >= 0.0) {
                return Err(Error::domain(name, v, "Rician factor must be nonnegative"));
            }
        }
        for (name, v) in [
            ("sigma_z_sq", self.sigma_z_sq),
            ("sigma_n_sq", self.sigma_n_sq),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(name, v, "noise power must be nonnegative"));
            }
        }
        for (name, v) in [("q", self.q), ("p_avg", self.p_avg)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(name, v, "power must be positive"));
            }
        }
        Ok(())
    }

    pub fn elements(&self) -> Vec<usize> {
        self.ris.iter().map(|r| r.elements).collect()
    }

    pub fn channel_model(&self) -> ChannelModel {
        ChannelModel {
            rician_k_br: self.rician_k_br,
            rician_k_ru: self.rician_k_ru,
        }
    }

    /// Copy of the scenario with the user moved to y-coordinate `d`.
    pub fn with_user_y(&self, d: f64) -> Scenario {
        let mut s = self.clone();
        s.user_position.y = d;
        s
    }
}

/// Geometry of the symmetric two-RIS deployment: BS at `(0, 0, 10)`, RIS-1 at
/// `(d0, -10, 10)`, RIS-2 at `(d0, 10, 10)`, user at `(d0 - 2, d, 0)`.
///
/// Noise and power levels default to sigma_z^2 = -110 dBm, sigma_n^2 = -90 dBm,
/// q = 40 dBm; C0 = -20 dB, alpha_br = 2.2, alpha_ru = 2.8, K_br = inf, K_ru = 0.
pub fn two_ris_scenario(d0: f64, d: f64, m1: usize, m2: usize, p_avg: f64) -> Result<Scenario> {
    if !(d0 > TWO_RIS_USER_OFFSET_M) {
        return Err(Error::domain(
            "d0",
            d0,
            "RIS line must lie beyond the user offset",
        ));
    }
    let s = Scenario {
        bs_position: Position::new(0.0, 0.0, TWO_RIS_HEIGHT_M),
        user_position: Position::new(d0 - TWO_RIS_USER_OFFSET_M, d, 0.0),
        ris: vec![
            RisSpec {
                elements: m1,
                position: Position::new(d0, -TWO_RIS_HALF_SPACING_M, TWO_RIS_HEIGHT_M),
            },
            RisSpec {
                elements: m2,
                position: Position::new(d0, TWO_RIS_HALF_SPACING_M, TWO_RIS_HEIGHT_M),
            },
        ],
        c0_db: -20.0,
        alpha_br: 2.2,
        alpha_ru: 2.8,
        rician_k_br: f64::INFINITY,
        rician_k_ru: 0.0,
        sigma_z_sq: dbm_to_watts(-110.0),
        sigma_n_sq: dbm_to_watts(-90.0),
        q: dbm_to_watts(40.0),
        p_avg,
    };
    s.validate()?;
    Ok(s)
}

/// Per-hop path gains of one RIS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGains {
    pub bs_ris: f64,
    pub ris_user: f64,
}

/// Cascaded large-scale gains `beta_k^2` and their square roots.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    beta_sq: Vec<f64>,
    beta: Vec<f64>,
    links: Vec<LinkGains>,
    model: ChannelModel,
}

impl LargeScale {
    /// Builds large-scale gains directly from `beta_k^2`, attributing the whole
    /// gain to the RIS-user hop under the cascaded-Rayleigh model.
    pub fn from_beta_sq(beta_sq: Vec<f64>) -> Result<Self> {
        let links = beta_sq
            .iter()
            .map(|&b| LinkGains {
                bs_ris: 1.0,
                ris_user: b,
            })
            .collect();
        Self::from_links(links, ChannelModel::CASCADED_RAYLEIGH)
    }

    pub fn from_links(links: Vec<LinkGains>, model: ChannelModel) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::Shape(
                "large-scale gains need at least one RIS".into(),
            ));
        }
        let beta_sq: Vec<f64> = links.iter().map(|l| l.bs_ris * l.ris_user).collect();
        if let Some(&b) = beta_sq.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
            return Err(Error::domain(
                "beta_sq",
                b,
                "cascaded gain must be positive and finite",
            ));
        }
        let beta = beta_sq.iter().map(|b| b.sqrt()).collect();
        Ok(LargeScale {
            beta_sq,
            beta,
            links,
            model,
        })
    }

    pub fn beta_sq(&self) -> &[f64] {
        &self.beta_sq
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn links(&self) -> &[LinkGains] {
        &self.links
    }

    pub fn model(&self) -> ChannelModel {
        self.model
    }

    pub fn len(&self) -> usize {
        self.beta_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_sq.is_empty()
    }
}

/// Evaluates `beta_k^2 = PL(BS, RIS_k) * PL(RIS_k, user)` for every RIS.
pub fn cascaded_large_scale(s: &Scenario) -> Result<LargeScale> {
    s.validate()?;
    let links = s
        .ris
        .iter()
        .map(|r| {
            Ok(LinkGains {
                bs_ris: path_loss(s.bs_position.distance(&r.position), s.c0_db, s.alpha_br)?,
                ris_user: path_loss(r.position.distance(&s.user_position), s.c0_db, s.alpha_ru)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LargeScale::from_links(links, s.channel_model())
}
