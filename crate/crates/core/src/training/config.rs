use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the edge replica of the actor is refreshed from at the start of a
/// session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSync {
    /// The edge runs the current cloud actor.
    Actor,
    /// The edge is overwritten with the target actor every session.
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_critic: f64,
    pub lr_actor: f64,
    /// Learning rate of the actor network in the supervised warmup.
    pub lr_warmup: f64,
    /// Learning rate of the shared embedding tables in the supervised warmup.
    pub lr_warmup_shared: f64,
    pub batch_size: usize,
    /// Weight of the conservative penalty in offline training.
    pub alpha: f64,
    /// Number of proposal actions for the conservative penalty.
    pub cql_proposals: usize,
    pub cql_sigma: f64,
    /// Weight of the goal-distance term in the actor objective.
    pub goal_weight: f64,
    /// Exploration noise, annealed linearly from start to end.
    pub noise_start: f64,
    pub noise_end: f64,
    /// Training sessions for online training.
    pub sessions: usize,
    /// Sessions per simulated user before the episode terminates.
    pub episode_len: usize,
    /// Passes over the log in offline training.
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub replay_capacity: usize,
    /// Multiplier applied to `r^h` before it enters the Bellman target.
    pub reward_scale: f64,
    pub l1: f64,
    pub l2: f64,
    pub edge_sync: EdgeSync,
    /// Critic updates between refreshes of cached history-session embeddings.
    pub history_cache_refresh: usize,
    /// Whether the actor is trained through the critic; off for the
    /// critic-free ablation.
    pub use_critic: bool,
    /// Save a checkpoint every this many steps (0 disables).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.001,
            lr_critic: 1e-3,
            lr_actor: 1e-4,
            lr_warmup: 3e-4,
            lr_warmup_shared: 3e-2,
            batch_size: 64,
            alpha: 0.0,
            cql_proposals: 10,
            cql_sigma: 0.2,
            goal_weight: 1.0,
            noise_start: 0.1,
            noise_end: 0.01,
            sessions: 2000,
            episode_len: 10,
            epochs: 1,
            warmup_epochs: 0,
            replay_capacity: 10_000,
            reward_scale: 0.1,
            l1: 0.0,
            l2: 0.0,
            edge_sync: EdgeSync::Actor,
            history_cache_refresh: 25,
            use_critic: true,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return bad("alpha must be >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if self.cql_proposals == 0 {
            return bad("at least one proposal action is needed");
        }
        if self.episode_len == 0 || self.replay_capacity < self.batch_size {
            return bad("episode length must be positive and replay must hold a batch");
        }
        for (name, v) in [
            ("lr_critic", self.lr_critic),
            ("lr_actor", self.lr_actor),
            ("lr_warmup", self.lr_warmup),
            ("lr_warmup_shared", self.lr_warmup_shared),
            ("reward_scale", self.reward_scale),
            ("goal_weight", self.goal_weight),
            ("noise_start", self.noise_start),
            ("noise_end", self.noise_end),
            ("cql_sigma", self.cql_sigma),
            ("l1", self.l1),
            ("l2", self.l2),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Exploration scale after `done` of `total` sessions.
    pub fn noise_at(&self, done: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.noise_start;
        }
        let f = (done as f64 / (total - 1) as f64).min(1.0);
        self.noise_start + (self.noise_end - self.noise_start) * f
    }
}
