//! Classical reference optimizers.
//!
//! The alternating optimizer (`ao-surrogate`) alternates a water-filling
//! precoder with per-element phase coordinate ascent and, for the dynamic
//! surface, a greedy choice of active elements. Every accepted step is an
//! ascent step, so the SE trace of a restart never decreases.

use std::f64::consts::PI;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{derive_seed, ChannelSet, SystemConfig};
use crate::env::{evenly_spaced_active_set, EnvError, HrisConfig, HrisMode, Precoder, WhitenedLink};
use crate::numerics::{self, CMat, C64};

/// Seed stream tag for optimizer restarts.
const RESTART_STREAM: u64 = 0xA0_5EED;

/// Label used for the alternating optimizer in all outputs.
pub const AO_LABEL: &str = "ao-surrogate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AoSettings {
    pub max_sweeps: usize,
    /// bps/Hz.
    pub se_tol: f64,
    pub phase_grid: usize,
    pub restarts: usize,
    /// Golden-section refinement around the best grid phase.
    #[serde(default = "default_refine")]
    pub refine: bool,
}

fn default_refine() -> bool {
    true
}

impl Default for AoSettings {
    fn default() -> Self {
        Self {
            max_sweeps: 20,
            se_tol: 1e-3,
            phase_grid: 64,
            restarts: 4,
            refine: true,
        }
    }
}

impl AoSettings {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_sweeps < 1 {
            return Err("max_sweeps must be >= 1".into());
        }
        if self.phase_grid < 2 {
            return Err("phase_grid must be >= 2".into());
        }
        if !(self.se_tol > 0.0) {
            return Err("se_tol must be positive".into());
        }
        if self.restarts < 1 {
            return Err("restarts must be >= 1".into());
        }
        Ok(())
    }
}

/// Active-element policy for the classical optimizers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AoMode {
    Passive,
    Fixed(Vec<usize>),
    Dynamic,
}

impl AoMode {
    /// Fixed mode uses the evenly spaced default set.
    pub fn from_mode(mode: HrisMode, cfg: &SystemConfig) -> Self {
        match mode {
            HrisMode::Passive => AoMode::Passive,
            HrisMode::Fixed => AoMode::Fixed(evenly_spaced_active_set(cfg.n_ris, cfg.n_active)),
            HrisMode::Dynamic => AoMode::Dynamic,
        }
    }
}

/// Power levels `p_i = max(0, μ − 1/g_i)` with `Σ p_i = total`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterLevel {
    pub powers: Vec<f64>,
    pub mu: f64,
}

/// Water-filling over channel gains `g_i` (squared singular values of the
/// whitened channel).
///
/// The water level is bracketed by bisection to `1e-10·total`; the level is
/// then solved exactly on the resulting set of open modes, dropping any mode
/// that would receive negative power, so the budget is met to rounding.
pub fn waterfill_powers(gains: &[f64], total: f64) -> WaterLevel {
    let usable: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    let mut powers = vec![0.0; gains.len()];
    if usable.is_empty() || !(total > 0.0) {
        return WaterLevel { powers, mu: 0.0 };
    }
    let inv: Vec<f64> = gains.iter().map(|g| if *g > 0.0 { 1.0 / g } else { f64::INFINITY }).collect();
    let filled = |mu: f64| -> f64 { usable.iter().map(|&i| (mu - inv[i]).max(0.0)).sum() };
    let mut lo = 0.0;
    let mut hi = total + usable.iter().map(|&i| inv[i]).fold(0.0, f64::max);
    while hi - lo > 1e-10 * total {
        let mid = 0.5 * (lo + hi);
        if filled(mid) > total {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut open: Vec<usize> = usable.iter().copied().filter(|&i| inv[i] < hi).collect();
    let mut mu;
    loop {
        mu = (total + open.iter().map(|&i| inv[i]).sum::<f64>()) / open.len() as f64;
        let before = open.len();
        open.retain(|&i| mu - inv[i] > 0.0);
        if open.len() == before {
            break;
        }
    }
    for &i in &open {
        powers[i] = mu - inv[i];
    }
    WaterLevel { powers, mu }
}

/// Output of [`waterfill_precoder`].
#[derive(Debug, Clone)]
pub struct WaterFilled {
    pub precoder: Precoder,
    /// Mode gains `σ_i²` of the whitened channel, strongest first.
    pub gains: Vec<f64>,
    pub powers: Vec<f64>,
    pub mu: f64,
    /// Every singular value was below `1e-14`; the uniform precoder is
    /// returned instead.
    pub degenerate: bool,
}

/// Capacity-achieving precoder for a fixed surface configuration.
pub fn waterfill_precoder(h: &HrisConfig, ch: &ChannelSet, cfg: &SystemConfig) -> Result<WaterFilled, EnvError> {
    let link = WhitenedLink::new(h.active_set(), h.amplitudes(), ch, cfg)?;
    waterfill_on_link(&link, &h.coefficients(), ch, cfg)
}

fn waterfill_on_link(
    link: &WhitenedLink,
    coeffs: &[C64],
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<WaterFilled, EnvError> {
    let g = link.channel(coeffs, ch);
    let d = numerics::svd(&g)?;
    let modes = cfg.n_streams.min(d.s.len());
    let sing = &d.s[..modes];
    if sing.iter().all(|s| *s < 1e-14) {
        return Ok(WaterFilled {
            precoder: Precoder::uniform(cfg),
            gains: sing.iter().map(|s| s * s).collect(),
            powers: vec![0.0; modes],
            mu: 0.0,
            degenerate: true,
        });
    }
    let gains: Vec<f64> = sing.iter().map(|s| s * s).collect();
    let level = waterfill_powers(&gains, cfg.max_bs_power);
    let f = CMat::from_fn(cfg.n_tx, cfg.n_streams, |r, c| {
        if c < modes {
            d.v[(r, c)] * level.powers[c].sqrt()
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(WaterFilled {
        precoder: Precoder { f },
        gains,
        powers: level.powers,
        mu: level.mu,
        degenerate: false,
    })
}

/// SE evaluator for a fixed precoder and active set. Every call recomputes
/// the whitened effective channel in the same order, so equal coefficients
/// give bit-identical values.
struct SeEval {
    /// `L⁻¹ H_d F`, `N_r × N_s`.
    direct_f: CMat,
    /// `L⁻¹ H_r`, `N_r × N`.
    ris_rx: CMat,
    /// `H_t F`, `N × N_s`.
    tx_ris_f: CMat,
}

impl SeEval {
    fn new(link: &WhitenedLink, ch: &ChannelSet, f: &CMat) -> Result<Self, EnvError> {
        Ok(Self {
            direct_f: link.direct.matmul(f)?,
            ris_rx: link.ris_rx.clone(),
            tx_ris_f: ch.h_tx_ris.matmul(f)?,
        })
    }

    fn eval(&self, coeffs: &[C64]) -> Result<f64, EnvError> {
        let mut e = self.direct_f.clone();
        let (nr, ns) = e.shape();
        for r in 0..nr {
            for (n, theta) in coeffs.iter().enumerate() {
                let w = self.ris_rx[(r, n)] * theta;
                for s in 0..ns {
                    e[(r, s)] += w * self.tx_ris_f[(n, s)];
                }
            }
        }
        Ok(numerics::logdet_identity_plus_gram(&e)? / std::f64::consts::LN_2)
    }
}

fn evaluate(f: &Precoder, h: &HrisConfig, ch: &ChannelSet, cfg: &SystemConfig) -> Result<f64, EnvError> {
    let link = WhitenedLink::new(h.active_set(), h.amplitudes(), ch, cfg)?;
    SeEval::new(&link, ch, &f.f)?.eval(&h.coefficients())
}

/// Result of one coordinate-ascent sweep.
#[derive(Debug, Clone)]
pub struct AscentSweep {
    pub hris: HrisConfig,
    pub se: f64,
    /// SE after each element's update, starting with the incumbent.
    pub trace: Vec<f64>,
}

/// Golden-section search for a maximum of `f` on `[a, b]`.
fn golden_max(
    mut a: f64,
    mut b: f64,
    tol: f64,
    mut f: impl FnMut(f64) -> Result<f64, EnvError>,
) -> Result<(f64, f64), EnvError> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// One sweep over the elements in index order: grid search over
/// `phase_grid` phases, optional golden-section refinement to `1e-4` rad,
/// and the best candidate replaces the incumbent only if it is strictly
/// better. Amplitudes and the active set are left unchanged.
pub fn phase_coordinate_ascent(
    f: &Precoder,
    h: &HrisConfig,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    s: &AoSettings,
) -> Result<AscentSweep, EnvError> {
    let link = WhitenedLink::new(h.active_set(), h.amplitudes(), ch, cfg)?;
    let evaluator = SeEval::new(&link, ch, &f.f)?;
    ascent_sweep(&evaluator, h, s)
}

fn ascent_sweep(evaluator: &SeEval, h: &HrisConfig, s: &AoSettings) -> Result<AscentSweep, EnvError> {
    let mut hris = h.clone();
    let mut coeffs = hris.coefficients();
    let mut best = evaluator.eval(&coeffs)?;
    let mut trace = Vec::with_capacity(hris.n_elements() + 1);
    trace.push(best);
    let step = 2.0 * PI / s.phase_grid as f64;
    for n in 0..hris.n_elements() {
        let amp = hris.amplitudes()[n];
        let incumbent = coeffs[n];
        let mut se_at = |phase: f64| -> Result<f64, EnvError> {
            coeffs[n] = C64::from_polar(amp, phase);
            evaluator.eval(&coeffs)
        };
        let mut cand = (hris.phases()[n], best);
        for k in 0..s.phase_grid {
            let phase = k as f64 * step;
            let v = se_at(phase)?;
            if v > cand.1 {
                cand = (phase, v);
            }
        }
        if s.refine {
            let centre = cand.0;
            let (p, v) = golden_max(centre - step, centre + step, 1e-4, &mut se_at)?;
            if v > cand.1 {
                cand = (p, v);
            }
        }
        coeffs[n] = incumbent;
        if cand.1 > best {
            // wrapping into [0, 2π) can move the phase by an ulp, so the
            // stored configuration is re-evaluated before it is accepted
            let old_phase = hris.phases()[n];
            hris.set_phase(n, cand.0);
            coeffs[n] = C64::from_polar(amp, hris.phases()[n]);
            let v = evaluator.eval(&coeffs)?;
            if v > best {
                best = v;
            } else {
                hris.set_phase(n, old_phase);
                coeffs[n] = incumbent;
            }
        }
        trace.push(best);
    }
    // The returned SE is a fresh evaluation of the returned configuration.
    let se = evaluator.eval(&hris.coefficients())?;
    Ok(AscentSweep { hris, se, trace })
}

/// Greedily activates `k` elements, one at a time, each time picking the
/// element whose activation maximizes SE for the current precoder and
/// phases. Ties go to the lowest index.
pub fn greedy_active_selection(
    f: &Precoder,
    h: &HrisConfig,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    k: usize,
) -> Result<Vec<usize>, EnvError> {
    let n = h.n_elements();
    let mut active: Vec<usize> = Vec::with_capacity(k);
    for _ in 0..k.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for cand in 0..n {
            if active.contains(&cand) {
                continue;
            }
            let mut trial = active.clone();
            trial.push(cand);
            let cfg_h = HrisConfig::new(h.phases().to_vec(), trial, cfg.amp_factor)?;
            let v = evaluate(f, &cfg_h, ch, cfg)?;
            if best.map_or(true, |(_, bv)| v > bv) {
                best = Some((cand, v));
            }
        }
        active.push(best.expect("at least one candidate").0);
    }
    active.sort_unstable();
    Ok(active)
}

/// Result of [`ao_optimize`].
#[derive(Debug, Clone)]
pub struct AoResult {
    pub precoder: Precoder,
    pub hris: HrisConfig,
    pub se: f64,
    /// Sweeps used by the winning restart.
    pub sweeps: usize,
    /// SE after every accepted or rejected substep, one trace per restart.
    pub traces: Vec<Vec<f64>>,
}

/// Random phases (drawn first) and, for the dynamic mode, a random active
/// set of size `K`.
fn random_start(cfg: &SystemConfig, mode: &AoMode, rng: &mut ChaCha8Rng) -> Result<HrisConfig, EnvError> {
    let phases: Vec<f64> = (0..cfg.n_ris)
        .map(|_| crate::env::wrap_phase(rng.random_range(0.0..2.0 * PI)))
        .collect();
    let active = match mode {
        AoMode::Passive => Vec::new(),
        AoMode::Fixed(set) => set.clone(),
        AoMode::Dynamic if cfg.n_active == 0 => Vec::new(),
        AoMode::Dynamic => index::sample(rng, cfg.n_ris, cfg.n_active).into_vec(),
    };
    HrisConfig::new(phases, active, cfg.amp_factor)
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, RESTART_STREAM, restart as u64))
}

/// Alternating optimization from `s.restarts` random starts; the best
/// restart is returned.
pub fn ao_optimize(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    mode: &AoMode,
    s: &AoSettings,
    seed: u64,
) -> Result<AoResult, EnvError> {
    let mut best: Option<AoResult> = None;
    let mut traces = Vec::with_capacity(s.restarts);
    for r in 0..s.restarts.max(1) {
        let mut rng = restart_rng(seed, r);
        let h0 = random_start(cfg, mode, &mut rng)?;
        let (precoder, hris, se, sweeps, trace) = ao_restart(ch, cfg, mode, s, h0)?;
        traces.push(trace);
        if best.as_ref().map_or(true, |b| se > b.se) {
            best = Some(AoResult {
                precoder,
                hris,
                se,
                sweeps,
                traces: Vec::new(),
            });
        }
    }
    let mut out = best.expect("at least one restart");
    out.traces = traces;
    Ok(out)
}

type RestartOutcome = (Precoder, HrisConfig, f64, usize, Vec<f64>);

fn ao_restart(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    mode: &AoMode,
    s: &AoSettings,
    h0: HrisConfig,
) -> Result<RestartOutcome, EnvError> {
    let mut hris = h0;
    let mut precoder = waterfill_precoder(&hris, ch, cfg)?.precoder;
    let mut se = evaluate(&precoder, &hris, ch, cfg)?;
    let mut trace = vec![se];
    let mut sweeps = 0;
    for sweep in 0..s.max_sweeps {
        let start = se;
        let link = WhitenedLink::new(hris.active_set(), hris.amplitudes(), ch, cfg)?;
        let asc = ascent_sweep(&SeEval::new(&link, ch, &precoder.f)?, &hris, s)?;
        if asc.se >= se {
            hris = asc.hris;
            se = asc.se;
        }
        trace.push(se);

        if *mode == AoMode::Dynamic && sweep == 0 && cfg.n_active > 0 {
            let set = greedy_active_selection(&precoder, &hris, ch, cfg, cfg.n_active)?;
            let cand = HrisConfig::new(hris.phases().to_vec(), set, cfg.amp_factor)?;
            let v = evaluate(&precoder, &cand, ch, cfg)?;
            if v >= se {
                hris = cand;
                se = v;
            }
            trace.push(se);
        }

        let wf = waterfill_precoder(&hris, ch, cfg)?.precoder;
        let v = evaluate(&wf, &hris, ch, cfg)?;
        if v >= se {
            precoder = wf;
            se = v;
        }
        trace.push(se);
        sweeps = sweep + 1;
        if se - start < s.se_tol {
            break;
        }
    }
    Ok((precoder, hris, se, sweeps, trace))
}

/// Random phases, the mode's active set (random for the dynamic mode) and a
/// water-filled precoder. Uses the same start as restart 0 of
/// [`ao_optimize`] with the same seed.
pub fn random_baseline(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    mode: &AoMode,
    seed: u64,
) -> Result<(Precoder, HrisConfig, f64), EnvError> {
    let mut rng = restart_rng(seed, 0);
    let hris = random_start(cfg, mode, &mut rng)?;
    let precoder = waterfill_precoder(&hris, ch, cfg)?.precoder;
    let se = evaluate(&precoder, &hris, ch, cfg)?;
    Ok((precoder, hris, se))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_modes_split_evenly() {
        let w = waterfill_powers(&[3.0, 3.0], 2.0);
        assert!((w.powers[0] - 1.0).abs() < 1e-12 && (w.powers[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_levels() {
        // 2μ − 1/2 − 1 = 1
        let w = waterfill_powers(&[2.0, 1.0], 1.0);
        assert!((w.mu - 1.25).abs() < 1e-12);
        assert!((w.powers[0] - 0.75).abs() < 1e-12);
        assert!((w.powers[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn weak_mode_gets_nothing() {
        let w = waterfill_powers(&[10.0, 0.01], 1.0);
        assert_eq!(w.powers[1], 0.0);
        assert!((w.powers[0] - 1.0).abs() < 1e-12);
        assert!(w.mu <= 1.0 / 0.01);
    }

    #[test]
    fn zero_gains() {
        let w = waterfill_powers(&[0.0, 0.0], 1.0);
        assert_eq!(w.powers, vec![0.0, 0.0]);
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, v) = golden_max(0.0, 2.0, 1e-8, |x| Ok(-(x - 0.7) * (x - 0.7))).unwrap();
        assert!((x - 0.7).abs() < 1e-6);
        assert!(v <= 0.0);
    }

    #[test]
    fn settings_validation() {
        assert!(AoSettings::default().validate().is_ok());
        let s = AoSettings {
            phase_grid: 1,
            ..AoSettings::default()
        };
        assert!(s.validate().is_err());
    }
}
