//! Hybrid active-passive RIS assisted MIMO downlink: channel simulation,
//! spectral-efficiency objective, a PPO agent that maps channel state to a
//! precoder and surface configuration, and classical reference optimizers.

pub mod baselines;
pub mod channel;
pub mod env;
pub mod numerics;
pub mod ppo;

pub use baselines::{ao_optimize, random_baseline, AoMode, AoResult, AoSettings, AO_LABEL};
pub use channel::{derive_seed, draw_channel, ChannelSet, GeometryParams, PerLink, SystemConfig};
pub use env::{
    decode_action, encode_state, spectral_efficiency, DecodedAction, EnvError, HrisConfig, HrisEnv, HrisMode,
    Precoder,
};
pub use numerics::{CMat, NumericsError, C64};
