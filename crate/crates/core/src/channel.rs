//! Link geometry, path loss and Rician channel realizations.
//!
//! All three links (BS to user, BS to surface, surface to user) are drawn as
//! `√β(d) · (√(κ/(1+κ)) H_LoS + √(1/(1+κ)) H_NLoS)`. The LoS part is the outer
//! product of half-wavelength ULA steering vectors whose angles come from the
//! 2-D node positions; every array (BS, surface, user) is laid along the same
//! axis and angles are measured from the x-axis.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{CMat, C64};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid system configuration: {0}")]
    System(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// dB to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Thermal noise power over `bandwidth_hz` with the given noise figure.
pub fn noise_power_watts(psd_dbm_hz: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    dbm_to_watts(psd_dbm_hz + 10.0 * bandwidth_hz.log10() + noise_figure_db)
}

/// Array sizes, power budgets and noise, all in linear units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_streams: usize,
    pub n_ris: usize,
    pub n_active: usize,
    /// Watts.
    pub max_bs_power: f64,
    pub amp_factor: f64,
    /// Watts.
    pub noise_power: f64,
    /// Linear residual self-interference factor.
    pub residual_si: f64,
}

impl SystemConfig {
    /// 4×2 MIMO, 50-element surface, 40 dBm, 20 MHz with a 10 dB noise
    /// figure, 1 dB residual SI, amplification 10.
    pub fn reference(n_active: usize) -> Self {
        Self {
            n_tx: 4,
            n_rx: 2,
            n_streams: 2,
            n_ris: 50,
            n_active,
            max_bs_power: dbm_to_watts(40.0),
            amp_factor: 10.0,
            noise_power: noise_power_watts(-169.0, 20e6, 10.0),
            residual_si: db_to_linear(1.0),
        }
    }

    /// The reference link with a 16-element surface and two active elements.
    pub fn desk() -> Self {
        Self {
            n_ris: 16,
            ..Self::reference(2)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::System(m.to_string()));
        if self.n_tx == 0 || self.n_rx == 0 || self.n_ris == 0 {
            return fail("antenna and element counts must be positive");
        }
        if self.n_streams == 0 || self.n_streams > self.n_tx.min(self.n_rx) {
            return fail("n_streams must be in 1..=min(n_tx, n_rx)");
        }
        if self.n_active > self.n_ris {
            return fail("n_active must not exceed n_ris");
        }
        if !(self.amp_factor >= 1.0) || !self.amp_factor.is_finite() {
            return fail("amp_factor must be finite and >= 1");
        }
        if !(self.max_bs_power > 0.0 && self.noise_power > 0.0)
            || !self.max_bs_power.is_finite()
            || !self.noise_power.is_finite()
        {
            return fail("powers must be finite and positive");
        }
        if !(self.residual_si >= 0.0) || !self.residual_si.is_finite() {
            return fail("residual_si must be finite and nonnegative");
        }
        Ok(())
    }

    /// Length of the encoded channel state.
    pub fn state_dim(&self) -> usize {
        2 * (self.n_rx * self.n_tx + self.n_ris * self.n_tx + self.n_rx * self.n_ris)
    }

    /// Length of the raw action vector.
    pub fn action_dim(&self) -> usize {
        2 * self.n_tx * self.n_streams + 2 * self.n_ris
    }
}

/// One value per link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerLink<T> {
    /// BS to user.
    pub direct: T,
    /// BS to surface.
    pub tx_ris: T,
    /// Surface to user.
    pub ris_rx: T,
}

mod rician_serde {
    //! Rician factors may be `+∞`, which JSON cannot carry as a number.
    use serde::{de, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Factor {
        Num(f64),
        Text(String),
    }

    fn parse<'de, D: Deserializer<'de>>(f: Factor) -> Result<f64, D::Error> {
        match f {
            Factor::Num(x) => Ok(x),
            Factor::Text(s) => match s.to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
                other => Err(de::Error::custom(format!("invalid Rician factor `{other}`"))),
            },
        }
    }

    fn emit<S: Serializer>(x: f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() && x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(x)
        }
    }

    pub fn serialize<S: Serializer>(k: &super::PerLink<f64>, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        struct Wrap(f64);
        impl serde::Serialize for Wrap {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                emit(self.0, s)
            }
        }
        let mut st = s.serialize_struct("PerLink", 3)?;
        st.serialize_field("direct", &Wrap(k.direct))?;
        st.serialize_field("tx_ris", &Wrap(k.tx_ris))?;
        st.serialize_field("ris_rx", &Wrap(k.ris_rx))?;
        st.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<super::PerLink<f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            direct: Factor,
            tx_ris: Factor,
            ris_rx: Factor,
        }
        let raw = Raw::deserialize(d)?;
        Ok(super::PerLink {
            direct: parse::<D>(raw.direct)?,
            tx_ris: parse::<D>(raw.tx_ris)?,
            ris_rx: parse::<D>(raw.ris_rx)?,
        })
    }
}

/// Node positions and large-scale fading parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryParams {
    pub bs_pos: [f64; 2],
    pub ris_pos: [f64; 2],
    pub user_pos: [f64; 2],
    pub beta0_db: f64,
    pub d0: f64,
    pub exponents: PerLink<f64>,
    #[serde(with = "rician_serde")]
    pub rician_k: PerLink<f64>,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            bs_pos: [0.0, 0.0],
            ris_pos: [50.0, 0.0],
            user_pos: [45.0, 2.0],
            beta0_db: -30.0,
            d0: 1.0,
            exponents: PerLink {
                direct: 3.5,
                tx_ris: 2.2,
                ris_rx: 2.0,
            },
            rician_k: PerLink {
                direct: 0.0,
                tx_ris: 1.0,
                ris_rx: f64::INFINITY,
            },
        }
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Azimuth of the direction from `from` to `to`.
fn azimuth(from: [f64; 2], to: [f64; 2]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

impl GeometryParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Geometry(m.to_string()));
        let d = self.distances();
        if !(d.direct > 0.0 && d.tx_ris > 0.0 && d.ris_rx > 0.0) {
            return fail("all pairwise distances must be positive");
        }
        let e = self.exponents;
        if !(e.direct > 0.0 && e.tx_ris > 0.0 && e.ris_rx > 0.0) {
            return fail("path-loss exponents must be positive");
        }
        if !(self.d0 > 0.0) {
            return fail("d0 must be positive");
        }
        let k = self.rician_k;
        if !(k.direct >= 0.0 && k.tx_ris >= 0.0 && k.ris_rx >= 0.0) {
            return fail("Rician factors must be nonnegative");
        }
        Ok(())
    }

    pub fn distances(&self) -> PerLink<f64> {
        PerLink {
            direct: distance(self.bs_pos, self.user_pos),
            tx_ris: distance(self.bs_pos, self.ris_pos),
            ris_rx: distance(self.ris_pos, self.user_pos),
        }
    }

    /// Linear large-scale power gain of each link.
    pub fn link_gains(&self) -> PerLink<f64> {
        let d = self.distances();
        PerLink {
            direct: path_loss(d.direct, self.exponents.direct, self),
            tx_ris: path_loss(d.tx_ris, self.exponents.tx_ris, self),
            ris_rx: path_loss(d.ris_rx, self.exponents.ris_rx, self),
        }
    }
}

/// `β(d) = β₀ (d/d₀)^(−ε)` as a linear power gain.
pub fn path_loss(d: f64, exponent: f64, geo: &GeometryParams) -> f64 {
    db_to_linear(geo.beta0_db) * (d / geo.d0).powf(-exponent)
}

/// Half-wavelength ULA response, entry `k` is `exp(jπ k sin(angle))`.
pub fn steering_vector(n_elements: usize, angle: f64) -> Vec<C64> {
    let s = angle.sin();
    (0..n_elements)
        .map(|k| C64::from_polar(1.0, PI * k as f64 * s))
        .collect()
}

/// One realization of the three channel matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// `N_r × N_t`.
    pub h_direct: CMat,
    /// `N × N_t`.
    pub h_tx_ris: CMat,
    /// `N_r × N`.
    pub h_ris_rx: CMat,
    /// Large-scale power gain of each link, used for state normalization.
    pub link_gains: PerLink<f64>,
}

impl ChannelSet {
    pub fn check_dims(&self, cfg: &SystemConfig) -> bool {
        self.h_direct.shape() == (cfg.n_rx, cfg.n_tx)
            && self.h_tx_ris.shape() == (cfg.n_ris, cfg.n_tx)
            && self.h_ris_rx.shape() == (cfg.n_rx, cfg.n_ris)
    }
}

fn rician_link(
    rng: &mut ChaCha8Rng,
    n_out: usize,
    n_in: usize,
    gain: f64,
    kappa: f64,
    arrival: f64,
    departure: f64,
) -> CMat {
    let (w_los, w_nlos) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    };
    let a_rx = steering_vector(n_out, arrival);
    let a_tx = steering_vector(n_in, departure);
    let amp = gain.sqrt();
    let half = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(n_out, n_in, |r, c| {
        let mut h = a_rx[r] * a_tx[c].conj() * w_los;
        if w_nlos > 0.0 {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            h += C64::new(re, im) * (half * w_nlos);
        }
        h * amp
    })
}

/// Draws an i.i.d. channel realization. `(cfg, geo, seed)` fully determines
/// the result.
pub fn draw_channel(cfg: &SystemConfig, geo: &GeometryParams, seed: u64) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gains = geo.link_gains();
    let k = geo.rician_k;
    let (bs, ris, ue) = (geo.bs_pos, geo.ris_pos, geo.user_pos);
    let h_direct = rician_link(
        &mut rng,
        cfg.n_rx,
        cfg.n_tx,
        gains.direct,
        k.direct,
        azimuth(ue, bs),
        azimuth(bs, ue),
    );
    let h_tx_ris = rician_link(
        &mut rng,
        cfg.n_ris,
        cfg.n_tx,
        gains.tx_ris,
        k.tx_ris,
        azimuth(ris, bs),
        azimuth(bs, ris),
    );
    let h_ris_rx = rician_link(
        &mut rng,
        cfg.n_rx,
        cfg.n_ris,
        gains.ris_rx,
        k.ris_rx,
        azimuth(ue, ris),
        azimuth(ris, ue),
    );
    ChannelSet {
        h_direct,
        h_tx_ris,
        h_ris_rx,
        link_gains: gains,
    }
}

/// Mixes a master seed, a stream tag and an index into an independent seed
/// (SplitMix64 finalizer applied to each input in turn).
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ stream) ^ index)
}
