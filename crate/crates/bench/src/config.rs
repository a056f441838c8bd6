//! Experiment configuration: named profiles, JSON overrides, validation and
//! the content hash recorded in every artifact.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hris_core::ppo::PpoHyper;
use hris_core::{AoSettings, GeometryParams, HrisMode, SystemConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 16-element surface, two active elements, short training.
    Desk,
    /// 50-element surface, six active elements, full-length training.
    Paper,
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(format!("unknown profile `{other}` (expected desk or paper)")),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Train,
    Evaluate,
    SweepK,
    BenchRuntime,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Train => "train",
            Experiment::Evaluate => "evaluate",
            Experiment::SweepK => "sweep-k",
            Experiment::BenchRuntime => "bench-runtime",
        })
    }
}

/// Where the SE sweep gets its policies from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrlSource {
    /// Only the classical optimizers are swept.
    None,
    /// `checkpoint_<mode>_k<K>.json` in the output directory.
    Checkpoint,
    /// Train one agent per (mode, K) before evaluating.
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub k_values: Vec<usize>,
    pub drl: DrlSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeSettings {
    pub n_values: Vec<usize>,
    /// Timed policy inferences per surface size.
    pub drl_trials: usize,
    /// Timed optimizer solves per surface size.
    pub ao_trials: usize,
    /// Untimed calls before measuring.
    pub warmup: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub experiment: Experiment,
    pub mode: HrisMode,
    pub seed: u64,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub eval_channels: usize,
    pub output_dir: PathBuf,
    pub system: SystemConfig,
    pub geometry: GeometryParams,
    pub ppo: PpoHyper,
    pub ao: AoSettings,
    pub sweep: SweepSettings,
    pub runtime: RuntimeSettings,
}

impl ExperimentConfig {
    pub fn profile_defaults(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self {
                profile,
                experiment: Experiment::Train,
                mode: HrisMode::Dynamic,
                seed: 1,
                episodes: 2000,
                steps_per_episode: DESK_STEPS_PER_EPISODE,
                eval_channels: 50,
                output_dir: PathBuf::from("results"),
                system: SystemConfig::desk(),
                geometry: GeometryParams::default(),
                ppo: PpoHyper::default(),
                ao: AoSettings::default(),
                sweep: SweepSettings {
                    k_values: vec![0, 1, 2, 3, 4],
                    drl: DrlSource::None,
                },
                runtime: RuntimeSettings {
                    n_values: vec![16, 50, 100],
                    drl_trials: 100,
                    ao_trials: 100,
                    warmup: 5,
                },
            },
            Profile::Paper => Self {
                profile,
                experiment: Experiment::Train,
                mode: HrisMode::Dynamic,
                seed: 1,
                episodes: 200_000,
                steps_per_episode: 1000,
                eval_channels: 100,
                output_dir: PathBuf::from("results"),
                system: SystemConfig::reference(6),
                geometry: GeometryParams::default(),
                ppo: PpoHyper::default(),
                ao: AoSettings::default(),
                sweep: SweepSettings {
                    k_values: vec![0, 2, 4, 6, 8, 10],
                    drl: DrlSource::None,
                },
                runtime: RuntimeSettings {
                    n_values: vec![50, 100, 150],
                    drl_trials: 100,
                    ao_trials: 100,
                    warmup: 5,
                },
            },
        }
    }

    /// Profile defaults overlaid with a partial JSON document. Objects merge
    /// key by key; any other value replaces the default. Unknown keys are
    /// rejected at every level.
    pub fn from_json_overrides(profile: Profile, overrides: &str) -> Result<Self, BenchError> {
        let user: Value = serde_json::from_str(overrides).map_err(|e| BenchError::Config(format!("config is not valid JSON: {e}")))?;
        if !user.is_object() {
            return Err(BenchError::Config("config must be a JSON object".into()));
        }
        let profile = match user.get("profile") {
            Some(p) => serde_json::from_value(p.clone()).map_err(|e| BenchError::Config(format!("profile: {e}")))?,
            None => profile,
        };
        let mut base = serde_json::to_value(Self::profile_defaults(profile)).expect("defaults serialize");
        merge(&mut base, user);
        let cfg: Self = serde_json::from_value(base).map_err(|e| BenchError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(profile: Profile, path: Option<&Path>) -> Result<Self, BenchError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| BenchError::Config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json_overrides(profile, &text)
            }
            None => {
                let cfg = Self::profile_defaults(profile);
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        self.system.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        self.geometry.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        self.ppo.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        self.ao.validate().map_err(|e| BenchError::Config(format!("ao: {e}")))?;
        if self.episodes == 0 || self.steps_per_episode == 0 {
            return bad("episodes and steps_per_episode must be positive".into());
        }
        if self.eval_channels == 0 {
            return bad("eval_channels must be positive".into());
        }
        if self.sweep.k_values.is_empty() {
            return bad("sweep.k_values must not be empty".into());
        }
        if let Some(k) = self.sweep.k_values.iter().find(|k| **k > self.system.n_ris) {
            return bad(format!("sweep.k_values contains {k} > n_ris = {}", self.system.n_ris));
        }
        let rt = &self.runtime;
        if rt.n_values.is_empty() || rt.drl_trials == 0 || rt.ao_trials == 0 {
            return bad("runtime.n_values, drl_trials and ao_trials must be nonempty/positive".into());
        }
        if let Some(n) = rt.n_values.iter().find(|n| **n < self.system.n_active) {
            return bad(format!("runtime.n_values contains {n} < n_active = {}", self.system.n_active));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form. The
    /// output directory is left out: moving results does not change them.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("config is an object").remove("output_dir");
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Steps per logged episode for the desk profile. 2000 episodes of 64 steps
/// give 62 full 2048-step updates.
pub const DESK_STEPS_PER_EPISODE: usize = 64;

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for p in [Profile::Desk, Profile::Paper] {
            ExperimentConfig::profile_defaults(p).validate().unwrap();
        }
    }

    #[test]
    fn overrides_merge_into_nested_blocks() {
        let cfg = ExperimentConfig::from_json_overrides(Profile::Desk, r#"{"system": {"n_active": 3}, "seed": 9}"#).unwrap();
        assert_eq!(cfg.system.n_active, 3);
        assert_eq!(cfg.system.n_ris, 16);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [r#"{"sed": 1}"#, r#"{"system": {"n_ris2": 4}}"#, r#"{"ppo": {"lr": 0.1}}"#] {
            assert!(matches!(ExperimentConfig::from_json_overrides(Profile::Desk, doc), Err(BenchError::Config(_))), "{doc}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for doc in [r#"{"system": {"n_active": 17}}"#, r#"{"episodes": 0}"#, r#"{"ao": {"phase_grid": 1}}"#, "[1]"] {
            assert!(ExperimentConfig::from_json_overrides(Profile::Desk, doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn profile_key_selects_base() {
        let cfg = ExperimentConfig::from_json_overrides(Profile::Desk, r#"{"profile": "paper"}"#).unwrap();
        assert_eq!(cfg.system.n_ris, 50);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::profile_defaults(Profile::Desk);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        let mut c = a.clone();
        c.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), c.hash());
    }
}
