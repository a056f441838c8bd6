//! System model and RL environment for the hybrid surface.
//!
//! Holds the surface configuration, the colored noise covariance, the
//! spectral-efficiency objective and the state/action encodings used by the
//! agent.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{draw_channel, ChannelSet, GeometryParams, PerLink, SystemConfig};
use crate::numerics::{self, CMat, NumericsError, C64};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("action has length {got}, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("state has length {got}, expected {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("channel dimensions do not match the system configuration")]
    ChannelShape,
    #[error("invalid surface configuration: {0}")]
    InvalidSurface(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// How the active elements are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HrisMode {
    /// All elements passive.
    Passive,
    /// A predetermined active set.
    Fixed,
    /// Active set re-chosen per channel realization.
    Dynamic,
}

impl HrisMode {
    pub fn name(self) -> &'static str {
        match self {
            HrisMode::Passive => "passive",
            HrisMode::Fixed => "fixed",
            HrisMode::Dynamic => "dynamic",
        }
    }
}

impl std::fmt::Display for HrisMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for HrisMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "passive" => Ok(HrisMode::Passive),
            "fixed" => Ok(HrisMode::Fixed),
            "dynamic" => Ok(HrisMode::Dynamic),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// `K` indices spread evenly over `N` elements: `⌊iN/K⌋`.
pub fn evenly_spaced_active_set(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| i * n / k).collect()
}

/// Per-element phases, amplitudes and the active index set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrisConfig {
    phases: Vec<f64>,
    amplitudes: Vec<f64>,
    active_set: Vec<usize>,
}

impl HrisConfig {
    /// Amplitudes follow from the active set: `amp_factor` on active
    /// elements, 1 elsewhere.
    pub fn new(phases: Vec<f64>, mut active_set: Vec<usize>, amp_factor: f64) -> Result<Self, EnvError> {
        let n = phases.len();
        if let Some(p) = phases.iter().find(|p| !(**p >= 0.0 && **p < 2.0 * PI)) {
            return Err(EnvError::InvalidSurface(format!("phase {p} outside [0, 2π)")));
        }
        active_set.sort_unstable();
        if active_set.windows(2).any(|w| w[0] == w[1]) {
            return Err(EnvError::InvalidSurface("duplicate active index".into()));
        }
        if active_set.last().is_some_and(|&i| i >= n) {
            return Err(EnvError::InvalidSurface("active index out of range".into()));
        }
        let mut amplitudes = vec![1.0; n];
        for &i in &active_set {
            amplitudes[i] = amp_factor;
        }
        Ok(Self {
            phases,
            amplitudes,
            active_set,
        })
    }

    pub fn passive(phases: Vec<f64>) -> Result<Self, EnvError> {
        Self::new(phases, Vec::new(), 1.0)
    }

    pub fn n_elements(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn active_set(&self) -> &[usize] {
        &self.active_set
    }

    pub fn is_active(&self, n: usize) -> bool {
        self.active_set.binary_search(&n).is_ok()
    }

    /// Replaces one phase, wrapping it into `[0, 2π)`.
    pub fn set_phase(&mut self, n: usize, phase: f64) {
        self.phases[n] = wrap_phase(phase);
    }

    /// Reflection coefficients `α_n = |α_n| e^{jφ_n}`.
    pub fn coefficients(&self) -> Vec<C64> {
        self.phases
            .iter()
            .zip(&self.amplitudes)
            .map(|(p, a)| C64::from_polar(*a, *p))
            .collect()
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let w = phase.rem_euclid(two_pi);
    if w >= two_pi {
        0.0
    } else {
        w
    }
}

/// `(Θ, Θ_𝒜)`: the full diagonal coefficient matrix and its active part.
pub fn theta_matrix(h: &HrisConfig) -> (CMat, CMat) {
    let coeffs = h.coefficients();
    let active: Vec<C64> = coeffs
        .iter()
        .enumerate()
        .map(|(n, c)| if h.is_active(n) { *c } else { C64::new(0.0, 0.0) })
        .collect();
    (CMat::from_diag(&coeffs), CMat::from_diag(&active))
}

/// Transmit precoder `F` (`N_t × N_s`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precoder {
    pub f: CMat,
}

impl Precoder {
    pub fn power(&self) -> f64 {
        self.f.frobenius_norm_sqr()
    }

    /// Equal power on each stream, stream `i` on antenna `i`.
    pub fn uniform(cfg: &SystemConfig) -> Self {
        let a = (cfg.max_bs_power / cfg.n_streams as f64).sqrt();
        Self {
            f: CMat::from_fn(cfg.n_tx, cfg.n_streams, |r, c| {
                if r == c {
                    C64::new(a, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        }
    }

    /// Scales `f` onto the power boundary. Returns `None` for a zero matrix.
    pub fn project(f: CMat, max_power: f64) -> Option<Self> {
        let norm = f.frobenius_norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return None;
        }
        Some(Self {
            f: f.scale_real(max_power.sqrt() / norm),
        })
    }
}

/// `H_d + H_r Θ H_t` for the given coefficients.
pub fn effective_channel(coeffs: &[C64], ch: &ChannelSet) -> CMat {
    let (h_r, h_t) = (&ch.h_ris_rx, &ch.h_tx_ris);
    let mut out = ch.h_direct.clone();
    for r in 0..h_r.rows() {
        for (n, theta) in coeffs.iter().enumerate() {
            let g = h_r[(r, n)] * theta;
            for c in 0..h_t.cols() {
                out[(r, c)] += g * h_t[(n, c)];
            }
        }
    }
    out
}

/// `R_n = σ²(I + (1+η) H_r Θ_𝒜 Θ_𝒜ᴴ H_rᴴ)`.
pub fn noise_covariance(h: &HrisConfig, ch: &ChannelSet, cfg: &SystemConfig) -> CMat {
    noise_covariance_for(h.active_set(), h.amplitudes(), ch, cfg)
}

fn noise_covariance_for(
    active: &[usize],
    amplitudes: &[f64],
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> CMat {
    let h_r = &ch.h_ris_rx;
    let nr = h_r.rows();
    let mut r = CMat::identity(nr);
    let w = 1.0 + cfg.residual_si;
    for i in 0..nr {
        for j in 0..=i {
            let s: C64 = active
                .iter()
                .map(|&n| h_r[(i, n)] * h_r[(j, n)].conj() * (amplitudes[n] * amplitudes[n]))
                .sum();
            r[(i, j)] += s * w;
            if i != j {
                r[(j, i)] = r[(i, j)].conj();
            }
        }
    }
    r.scale_real(cfg.noise_power)
}

/// Spectral efficiency in bps/Hz, `log₂ det(I + H_eff F Fᴴ H_effᴴ R_n⁻¹)`,
/// evaluated as `log₂ det(I + G Gᴴ)` with `G = L⁻¹ H_eff F`, `R_n = L Lᴴ`.
pub fn spectral_efficiency(
    f: &Precoder,
    h: &HrisConfig,
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<f64, EnvError> {
    if !ch.check_dims(cfg) || h.n_elements() != cfg.n_ris || f.f.shape() != (cfg.n_tx, cfg.n_streams) {
        return Err(EnvError::ChannelShape);
    }
    let link = WhitenedLink::new(h.active_set(), h.amplitudes(), ch, cfg)?;
    link.spectral_efficiency(&h.coefficients(), ch, &f.f)
}

/// Channel matrices pre-multiplied by `L⁻¹` for a fixed active set.
///
/// The noise covariance depends on the active set and the amplitudes only,
/// so phase changes can reuse the factorization.
#[derive(Debug, Clone)]
pub struct WhitenedLink {
    /// `L⁻¹ H_d`.
    pub direct: CMat,
    /// `L⁻¹ H_r`.
    pub ris_rx: CMat,
}

impl WhitenedLink {
    pub fn new(
        active: &[usize],
        amplitudes: &[f64],
        ch: &ChannelSet,
        cfg: &SystemConfig,
    ) -> Result<Self, NumericsError> {
        let rn = noise_covariance_for(active, amplitudes, ch, cfg);
        let l = numerics::cholesky(&rn)?;
        Ok(Self {
            direct: numerics::forward_solve(&l, &ch.h_direct)?,
            ris_rx: numerics::forward_solve(&l, &ch.h_ris_rx)?,
        })
    }

    /// `L⁻¹ H_eff`.
    pub fn channel(&self, coeffs: &[C64], ch: &ChannelSet) -> CMat {
        let whitened = ChannelSet {
            h_direct: self.direct.clone(),
            h_tx_ris: ch.h_tx_ris.clone(),
            h_ris_rx: self.ris_rx.clone(),
            link_gains: ch.link_gains,
        };
        effective_channel(coeffs, &whitened)
    }

    pub fn spectral_efficiency(&self, coeffs: &[C64], ch: &ChannelSet, f: &CMat) -> Result<f64, EnvError> {
        let g = self.channel(coeffs, ch).matmul(f)?;
        Ok(numerics::logdet_identity_plus_gram(&g)? / LN_2)
    }
}

/// Channel state vector: the Re/Im vectorization of `H_d`, `H_t`, `H_r`,
/// each block divided by the square root of its link gain.
pub fn encode_state(ch: &ChannelSet) -> Vec<f64> {
    let g = ch.link_gains;
    let mut out = Vec::new();
    for (m, gain) in [
        (&ch.h_direct, g.direct),
        (&ch.h_tx_ris, g.tx_ris),
        (&ch.h_ris_rx, g.ris_rx),
    ] {
        let s = 1.0 / gain.sqrt();
        out.extend(m.vectorize_reim().into_iter().map(|x| x * s));
    }
    out
}

/// Inverse of [`encode_state`].
pub fn decode_state(state: &[f64], cfg: &SystemConfig, gains: PerLink<f64>) -> Result<ChannelSet, EnvError> {
    if state.len() != cfg.state_dim() {
        return Err(EnvError::StateLength {
            expected: cfg.state_dim(),
            got: state.len(),
        });
    }
    let shapes = [
        (cfg.n_rx, cfg.n_tx, gains.direct),
        (cfg.n_ris, cfg.n_tx, gains.tx_ris),
        (cfg.n_rx, cfg.n_ris, gains.ris_rx),
    ];
    let mut mats = Vec::with_capacity(3);
    let mut offset = 0;
    for (r, c, gain) in shapes {
        let len = 2 * r * c;
        let s = gain.sqrt();
        let block: Vec<f64> = state[offset..offset + len].iter().map(|x| x * s).collect();
        mats.push(CMat::from_reim(r, c, &block)?);
        offset += len;
    }
    let h_ris_rx = mats.pop().expect("three blocks");
    let h_tx_ris = mats.pop().expect("three blocks");
    let h_direct = mats.pop().expect("three blocks");
    Ok(ChannelSet {
        h_direct,
        h_tx_ris,
        h_ris_rx,
        link_gains: gains,
    })
}

/// A decoded, feasible action.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedAction {
    pub precoder: Precoder,
    pub hris: HrisConfig,
    /// The precoder block was all zeros and [`Precoder::uniform`] was used.
    pub precoder_fallback: bool,
}

/// `K` indices with the largest scores, ties to the lowest index, sorted.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Maps a raw action to a precoder on the power boundary and a surface
/// configuration satisfying the amplitude and phase constraints.
///
/// Layout: `[vec Re F; vec Im F; N selection scores; N phase logits]`.
/// Phases are `π(tanh(u) + 1)` wrapped into `[0, 2π)`.
pub fn decode_action(
    raw: &[f64],
    cfg: &SystemConfig,
    mode: HrisMode,
    fixed_active_set: Option<&[usize]>,
) -> Result<DecodedAction, EnvError> {
    let expected = cfg.action_dim();
    if raw.len() != expected {
        return Err(EnvError::ActionLength {
            expected,
            got: raw.len(),
        });
    }
    let nf = 2 * cfg.n_tx * cfg.n_streams;
    let n = cfg.n_ris;
    let f_raw = CMat::from_reim(cfg.n_tx, cfg.n_streams, &raw[..nf])?;
    let (precoder, precoder_fallback) = match Precoder::project(f_raw, cfg.max_bs_power) {
        Some(p) => (p, false),
        None => (Precoder::uniform(cfg), true),
    };
    let scores = &raw[nf..nf + n];
    let active = match mode {
        HrisMode::Passive => Vec::new(),
        HrisMode::Fixed => match fixed_active_set {
            Some(set) => set.to_vec(),
            None => evenly_spaced_active_set(n, cfg.n_active),
        },
        HrisMode::Dynamic => top_k(scores, cfg.n_active),
    };
    let phases = raw[nf + n..]
        .iter()
        .map(|u| wrap_phase(PI * (u.tanh() + 1.0)))
        .collect();
    let hris = HrisConfig::new(phases, active, cfg.amp_factor)?;
    Ok(DecodedAction {
        precoder,
        hris,
        precoder_fallback,
    })
}

/// A raw action that decodes back to `(precoder, hris)`.
pub fn encode_action(precoder: &Precoder, hris: &HrisConfig) -> Vec<f64> {
    let mut out = precoder.f.vectorize_reim();
    out.extend((0..hris.n_elements()).map(|n| if hris.is_active(n) { 1.0 } else { 0.0 }));
    out.extend(hris.phases().iter().map(|p| (p / PI - 1.0).atanh()));
    out
}

/// One transition.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    /// Spectral efficiency in bps/Hz.
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// The channel behind `next_state`.
    pub next_channel: ChannelSet,
    pub precoder_fallback: bool,
}

/// The environment: each step is an independent channel realization.
#[derive(Debug, Clone)]
pub struct HrisEnv {
    pub cfg: SystemConfig,
    pub geo: GeometryParams,
    pub mode: HrisMode,
    pub fixed_active_set: Option<Vec<usize>>,
}

impl HrisEnv {
    pub fn new(cfg: SystemConfig, geo: GeometryParams, mode: HrisMode) -> Self {
        Self {
            cfg,
            geo,
            mode,
            fixed_active_set: None,
        }
    }

    pub fn channel(&self, seed: u64) -> ChannelSet {
        draw_channel(&self.cfg, &self.geo, seed)
    }

    pub fn decode(&self, raw: &[f64]) -> Result<DecodedAction, EnvError> {
        decode_action(raw, &self.cfg, self.mode, self.fixed_active_set.as_deref())
    }

    /// Spectral efficiency of a raw action on `ch`.
    pub fn reward(&self, raw: &[f64], ch: &ChannelSet) -> Result<(f64, bool), EnvError> {
        let d = self.decode(raw)?;
        let se = spectral_efficiency(&d.precoder, &d.hris, ch, &self.cfg)?;
        Ok((se, d.precoder_fallback))
    }

    pub fn step(&self, raw_action: &[f64], ch: &ChannelSet, next_seed: u64) -> Result<EnvStep, EnvError> {
        let (reward, precoder_fallback) = self.reward(raw_action, ch)?;
        let next_channel = self.channel(next_seed);
        Ok(EnvStep {
            state: encode_state(ch),
            action: raw_action.to_vec(),
            reward,
            next_state: encode_state(&next_channel),
            next_channel,
            precoder_fallback,
        })
    }
}
