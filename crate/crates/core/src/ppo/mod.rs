//! Proximal policy optimization for the surface environment.
//!
//! Rollouts are collected in batches of `batch_len` steps with a frozen
//! policy. Because consecutive channel realizations are independent, the
//! next state never depends on the action, so a batch is collected by
//! drawing its channels first and running the networks over the whole batch
//! at once.

pub mod mlp;
pub mod policy;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::derive_seed;
use crate::env::{encode_state, EnvError, HrisEnv};
pub use mlp::{Adam, Dense, Mlp, Parameters};
pub use policy::{gaussian_log_prob, Actor, Critic, LOG_STD_MAX, LOG_STD_MIN};

const CHANNEL_STREAM: u64 = 0xC4A7;
const NOISE_STREAM: u64 = 0x7015E;
const SHUFFLE_STREAM: u64 = 0x5_4FF1E;
const INIT_STREAM: u64 = 0x1717;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PpoError {
    #[error("non-finite gradient in epoch {epoch}, minibatch {minibatch}")]
    NonFiniteGradient { epoch: usize, minibatch: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoHyper {
    pub gamma: f64,
    pub lam: f64,
    pub clip_eps: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub batch_len: usize,
    pub minibatch_size: usize,
    pub epochs_per_update: usize,
    pub entropy_coef: f64,
    pub reward_scale: f64,
    pub hidden: Vec<usize>,
    /// Initial value of every policy `log_std` entry.
    #[serde(default)]
    pub init_log_std: f64,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lam: 0.95,
            clip_eps: 0.2,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            batch_len: 2048,
            minibatch_size: 256,
            epochs_per_update: 10,
            entropy_coef: 0.0,
            reward_scale: 10.0,
            hidden: vec![256, 256],
            init_log_std: 0.0,
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<(), PpoError> {
        let fail = |m: &str| Err(PpoError::InvalidHyper(m.into()));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return fail("gamma and lam must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return fail("clip_eps must be positive");
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return fail("learning rates must be positive");
        }
        if self.batch_len == 0 || self.minibatch_size == 0 || self.epochs_per_update == 0 {
            return fail("batch_len, minibatch_size and epochs_per_update must be positive");
        }
        if !(self.entropy_coef >= 0.0) {
            return fail("entropy_coef must be nonnegative");
        }
        if !(self.reward_scale > 0.0) {
            return fail("reward_scale must be positive");
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.init_log_std) {
            return fail("init_log_std must lie in the log_std clamp range");
        }
        if self.hidden.iter().any(|h| *h == 0) {
            return fail("hidden widths must be positive");
        }
        Ok(())
    }
}

/// `δ = r + γ v_next − v`.
pub fn td_error(r: f64, v_next: f64, v: f64, gamma: f64) -> f64 {
    r + gamma * v_next - v
}

/// `Â_t = δ_t + γλ Â_{t+1}`, i.e. `Σ_k (γλ)^k δ_{t+k}` to the end of the
/// sequence.
pub fn gae(deltas: &[f64], gamma: f64, lam: f64) -> Vec<f64> {
    let mut adv = vec![0.0; deltas.len()];
    let mut running = 0.0;
    for t in (0..deltas.len()).rev() {
        running = deltas[t] + gamma * lam * running;
        adv[t] = running;
    }
    adv
}

/// `V^targ = Â + V_old(s)`.
pub fn value_target(adv: f64, v_old: f64) -> f64 {
    adv + v_old
}

/// Rollout buffer with computed advantages and value targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Array1<f64>,
    /// Raw spectral efficiency, bps/Hz.
    pub rewards: Array1<f64>,
    pub values: Array1<f64>,
    pub next_values: Array1<f64>,
    pub advantages: Array1<f64>,
    pub targets: Array1<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Appends the records of `other`; advantages must be recomputed.
    pub fn append(&mut self, other: &Trajectory) {
        let cat2 = |a: &Array2<f64>, b: &Array2<f64>| {
            ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("matching widths")
        };
        let cat1 = |a: &Array1<f64>, b: &Array1<f64>| {
            ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("1-D")
        };
        self.states = cat2(&self.states, &other.states);
        self.actions = cat2(&self.actions, &other.actions);
        self.log_probs = cat1(&self.log_probs, &other.log_probs);
        self.rewards = cat1(&self.rewards, &other.rewards);
        self.values = cat1(&self.values, &other.values);
        self.next_values = cat1(&self.next_values, &other.next_values);
        self.advantages = cat1(&self.advantages, &other.advantages);
        self.targets = cat1(&self.targets, &other.targets);
    }

    /// Fills `advantages` and `targets` from rewards (divided by
    /// `reward_scale`) and value estimates.
    pub fn compute_advantages(&mut self, hp: &PpoHyper) {
        let deltas: Vec<f64> = (0..self.len())
            .map(|t| {
                td_error(
                    self.rewards[t] / hp.reward_scale,
                    self.next_values[t],
                    self.values[t],
                    hp.gamma,
                )
            })
            .collect();
        self.advantages = Array1::from(gae(&deltas, hp.gamma, hp.lam));
        self.targets = Array1::from_iter(
            self.advantages
                .iter()
                .zip(&self.values)
                .map(|(a, v)| value_target(*a, *v)),
        );
    }
}

/// Samples used for one gradient step.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub old_log_probs: Array1<f64>,
    /// Already normalized.
    pub advantages: Array1<f64>,
    pub targets: Array1<f64>,
}

/// Per-sample clipped surrogate `min(p Â, clip(p, 1−ε, 1+ε) Â)`.
pub fn clipped_objective(ratio: f64, adv: f64, clip_eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv)
}

/// Statistics of the actor loss on one minibatch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActorLossStats {
    pub surrogate: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Actor loss `−(mean clipped surrogate + c_H · entropy)` and its gradient
/// (order of [`Parameters::tensors`] for [`Actor`]).
pub fn actor_loss(actor: &Actor, mb: &Minibatch, hp: &PpoHyper) -> (f64, Vec<Vec<f64>>, ActorLossStats) {
    let b = mb.states.nrows();
    let (means, cache) = actor.net.forward_cached(mb.states.view());
    let std: Vec<f64> = actor.log_std.iter().map(|v| v.exp()).collect();
    let d = actor.action_dim();
    let mut grad_mean = Array2::<f64>::zeros((b, d));
    let mut grad_log_std = vec![0.0; d];
    let mut stats = ActorLossStats::default();
    let mut surrogate = 0.0;
    for i in 0..b {
        let mean_i = means.row(i);
        let act_i = mb.actions.row(i);
        let lp = gaussian_log_prob(
            act_i.as_slice().expect("contiguous"),
            mean_i.as_slice().expect("contiguous"),
            actor.log_std.as_slice().expect("contiguous"),
        );
        let log_ratio = lp - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = mb.advantages[i];
        let obj = clipped_objective(ratio, adv, hp.clip_eps);
        surrogate += obj;
        stats.mean_ratio += ratio;
        if (ratio - 1.0).abs() > hp.clip_eps {
            stats.clip_fraction += 1.0;
        }
        stats.approx_kl += (ratio - 1.0) - log_ratio;
        // gradient flows only through the unclipped branch
        if ratio * adv <= ratio.clamp(1.0 - hp.clip_eps, 1.0 + hp.clip_eps) * adv {
            let coef = -ratio * adv / b as f64;
            for j in 0..d {
                let z = (act_i[j] - mean_i[j]) / std[j];
                grad_mean[[i, j]] = coef * z / std[j];
                grad_log_std[j] += coef * (z * z - 1.0);
            }
        }
    }
    let bf = b as f64;
    surrogate /= bf;
    stats.surrogate = surrogate;
    stats.mean_ratio /= bf;
    stats.clip_fraction /= bf;
    stats.approx_kl /= bf;
    for g in grad_log_std.iter_mut() {
        *g -= hp.entropy_coef;
    }
    let loss = -surrogate - hp.entropy_coef * actor.entropy();
    let mut grads = actor.net.backward(&cache, grad_mean);
    grads.push(grad_log_std);
    (loss, grads, stats)
}

/// Critic loss `mean (V(s) − V^targ)²` and its gradient.
pub fn critic_loss(critic: &Critic, mb: &Minibatch) -> (f64, Vec<Vec<f64>>) {
    let b = mb.states.nrows() as f64;
    let (values, cache) = critic.values_cached(mb.states.view());
    let diff = &values - &mb.targets;
    let loss = diff.mapv(|x| x * x).sum() / b;
    let grad = (diff * (2.0 / b)).insert_axis(Axis(1));
    (loss, critic.net.backward(&cache, grad))
}

/// Summary of one [`ppo_update`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub kl_estimate: f64,
    pub minibatches: usize,
}

/// Actor, critic and their optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub actor: Actor,
    pub critic: Critic,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

impl Agent {
    pub fn new(state_dim: usize, action_dim: usize, hp: &PpoHyper, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, INIT_STREAM, 0));
        let mut actor = Actor::new(state_dim, &hp.hidden, action_dim, &mut rng);
        actor.log_std.fill(hp.init_log_std);
        let critic = Critic::new(state_dim, &hp.hidden, &mut rng);
        let actor_opt = Adam::new(&actor, hp.lr_actor);
        let critic_opt = Adam::new(&critic, hp.lr_critic);
        Self {
            actor,
            critic,
            actor_opt,
            critic_opt,
        }
    }
}

fn normalize(x: &Array1<f64>) -> Array1<f64> {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.mapv(|v| (v - mean) * (v - mean)).sum() / n;
    let std = var.sqrt();
    x.mapv(|v| (v - mean) / (std + 1e-8))
}

fn gather_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

fn gather(v: &Array1<f64>, idx: &[usize]) -> Array1<f64> {
    v.select(Axis(0), idx)
}

/// `epochs_per_update` passes over shuffled minibatches of the trajectory,
/// one Adam step for the critic and one for the actor per minibatch.
/// Advantages are normalized over the whole batch first.
pub fn ppo_update(
    agent: &mut Agent,
    traj: &Trajectory,
    hp: &PpoHyper,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, PpoError> {
    let n = traj.len();
    let adv = normalize(&traj.advantages);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    for epoch in 0..hp.epochs_per_update {
        order.shuffle(rng);
        for (k, chunk) in order.chunks(hp.minibatch_size).enumerate() {
            let mb = Minibatch {
                states: gather_rows(&traj.states, chunk),
                actions: gather_rows(&traj.actions, chunk),
                old_log_probs: gather(&traj.log_probs, chunk),
                advantages: gather(&adv, chunk),
                targets: gather(&traj.targets, chunk),
            };
            let (c_loss, c_grads) = critic_loss(&agent.critic, &mb);
            let (a_loss, a_grads, a_stats) = actor_loss(&agent.actor, &mb, hp);
            let finite = |g: &[Vec<f64>]| g.iter().all(|t| t.iter().all(|x| x.is_finite()));
            if !finite(&c_grads) || !finite(&a_grads) {
                return Err(PpoError::NonFiniteGradient { epoch, minibatch: k });
            }
            agent.critic_opt.update(&mut agent.critic, &c_grads);
            agent.actor_opt.update(&mut agent.actor, &a_grads);
            agent.actor.clamp_log_std();

            stats.actor_loss += a_loss;
            stats.critic_loss += c_loss;
            stats.mean_ratio += a_stats.mean_ratio;
            stats.clip_fraction += a_stats.clip_fraction;
            stats.kl_estimate += a_stats.approx_kl;
            stats.minibatches += 1;
        }
    }
    let m = stats.minibatches.max(1) as f64;
    stats.actor_loss /= m;
    stats.critic_loss /= m;
    stats.mean_ratio /= m;
    stats.clip_fraction /= m;
    stats.kl_estimate /= m;
    Ok(stats)
}

/// Deterministic action: the policy mean.
pub fn infer(actor: &Actor, state: &[f64]) -> Vec<f64> {
    actor.net.forward_one(state)
}

/// One logged episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Mean raw spectral efficiency over the episode, bps/Hz.
    pub mean_se: f64,
    pub mean_scaled_reward: f64,
    /// From the most recent update (zero before the first).
    pub clip_fraction: f64,
    pub kl_estimate: f64,
}

/// Complete training state: a serialized trainer resumes bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trainer {
    pub agent: Agent,
    pub hp: PpoHyper,
    pub seed: u64,
    pub steps_per_episode: usize,
    /// Environment steps taken so far.
    pub steps_done: u64,
    pub updates_done: u64,
    pub last_update: UpdateStats,
    pub curve: Vec<EpisodeLog>,
    noise_rng: ChaCha8Rng,
    shuffle_rng: ChaCha8Rng,
    /// Rewards of the episode in progress.
    pending: Vec<f64>,
    /// Steps collected since the last update.
    buffer: Option<Trajectory>,
}

impl Trainer {
    pub fn new(env: &HrisEnv, hp: PpoHyper, steps_per_episode: usize, seed: u64) -> Result<Self, PpoError> {
        hp.validate()?;
        if steps_per_episode == 0 {
            return Err(PpoError::InvalidHyper("steps_per_episode must be positive".into()));
        }
        let agent = Agent::new(env.cfg.state_dim(), env.cfg.action_dim(), &hp, seed);
        Ok(Self {
            agent,
            hp,
            seed,
            steps_per_episode,
            steps_done: 0,
            updates_done: 0,
            last_update: UpdateStats::default(),
            curve: Vec::new(),
            noise_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, NOISE_STREAM, 0)),
            shuffle_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, SHUFFLE_STREAM, 0)),
            pending: Vec::new(),
            buffer: None,
        })
    }

    /// Seed of the channel seen at global step `t`.
    pub fn channel_seed(&self, t: u64) -> u64 {
        derive_seed(self.seed, CHANNEL_STREAM, t)
    }

    /// Collects `n` steps with the current policy. Advantages are left at
    /// zero; see [`Trajectory::compute_advantages`].
    pub fn collect(&mut self, env: &HrisEnv, n: usize) -> Result<Trajectory, PpoError> {
        let t0 = self.steps_done;
        let channels: Vec<_> = (0..=n as u64).map(|i| env.channel(self.channel_seed(t0 + i))).collect();
        let ds = env.cfg.state_dim();
        let mut all_states = Array2::<f64>::zeros((n + 1, ds));
        for (i, ch) in channels.iter().enumerate() {
            all_states.row_mut(i).assign(&ArrayView1::from(&encode_state(ch)));
        }
        let states = all_states.slice(s![..n, ..]).to_owned();
        let means = self.agent.actor.means(states.view());
        let all_values = self.agent.critic.values(all_states.view());
        let da = env.cfg.action_dim();
        let mut actions = Array2::<f64>::zeros((n, da));
        let mut log_probs = Array1::<f64>::zeros(n);
        let mut rewards = Array1::<f64>::zeros(n);
        for i in 0..n {
            let (a, lp) = self.agent.actor.sample(means.row(i), &mut self.noise_rng);
            let (r, _) = env.reward(&a, &channels[i])?;
            actions.row_mut(i).assign(&ArrayView1::from(&a));
            log_probs[i] = lp;
            rewards[i] = r;
        }
        self.steps_done += n as u64;
        Ok(Trajectory {
            states,
            actions,
            log_probs,
            rewards,
            values: all_values.slice(s![..n]).to_owned(),
            next_values: all_values.slice(s![1..]).to_owned(),
            advantages: Array1::zeros(n),
            targets: Array1::zeros(n),
        })
    }

    fn log_rewards(&mut self, rewards: ArrayView1<f64>) {
        for &r in rewards {
            self.pending.push(r);
            if self.pending.len() == self.steps_per_episode {
                let n = self.pending.len() as f64;
                let mean_se = self.pending.iter().sum::<f64>() / n;
                self.curve.push(EpisodeLog {
                    episode: self.curve.len(),
                    mean_se,
                    mean_scaled_reward: mean_se / self.hp.reward_scale,
                    clip_fraction: self.last_update.clip_fraction,
                    kl_estimate: self.last_update.kl_estimate,
                });
                self.pending.clear();
            }
        }
    }

    /// Steps collected but not yet used for an update.
    pub fn buffered_steps(&self) -> usize {
        self.buffer.as_ref().map_or(0, Trajectory::len)
    }

    /// Trains until `episodes` more episodes have been logged. An update runs
    /// whenever `batch_len` steps have accumulated. Steps left over at the end
    /// stay buffered, so splitting a run across calls (or a checkpoint)
    /// reproduces the uninterrupted run exactly.
    pub fn run(
        &mut self,
        env: &HrisEnv,
        episodes: usize,
        mut on_episode: impl FnMut(&EpisodeLog),
    ) -> Result<(), PpoError> {
        let target = self.curve.len() + episodes;
        while self.curve.len() < target {
            let remaining = (target - self.curve.len()) * self.steps_per_episode - self.pending.len();
            let n = remaining.min(self.hp.batch_len - self.buffered_steps());
            let chunk = self.collect(env, n)?;
            let before = self.curve.len();
            // episodes report the last update that finished before their final step
            self.log_rewards(chunk.rewards.view());
            match self.buffer.as_mut() {
                Some(b) => b.append(&chunk),
                None => self.buffer = Some(chunk),
            }
            if self.buffered_steps() == self.hp.batch_len {
                let mut traj = self.buffer.take().expect("buffer is full");
                traj.compute_advantages(&self.hp);
                self.last_update = ppo_update(&mut self.agent, &traj, &self.hp, &mut self.shuffle_rng)?;
                self.updates_done += 1;
            }
            for log in &self.curve[before..] {
                on_episode(log);
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, env: &HrisEnv) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            system: env.cfg.clone(),
            mode: env.mode,
            trainer: self.clone(),
        }
    }
}

/// Trains a fresh agent for `episodes` episodes.
pub fn train(
    env: &HrisEnv,
    hp: &PpoHyper,
    episodes: usize,
    steps_per_episode: usize,
    seed: u64,
) -> Result<Trainer, PpoError> {
    let mut trainer = Trainer::new(env, hp.clone(), steps_per_episode, seed)?;
    trainer.run(env, episodes, |_| {})?;
    Ok(trainer)
}

pub const CHECKPOINT_FORMAT: &str = "hris-ppo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing JSON checkpoint: networks, optimizer moments,
/// hyperparameters, RNG states and the logged curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub system: crate::channel::SystemConfig,
    pub mode: crate::env::HrisMode,
    pub trainer: Trainer,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, PpoError> {
        let ck: Checkpoint = serde_json::from_str(s).map_err(|e| PpoError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(PpoError::Checkpoint(format!("unexpected format `{}`", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(PpoError::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        Ok(ck)
    }
}

/// Means of the policy on a batch of states.
pub fn infer_batch(actor: &Actor, states: ArrayView2<f64>) -> Array2<f64> {
    actor.means(states)
}
