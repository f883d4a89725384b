use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::MetricRecord;
use super::replay::ReplayBuffer;
use crate::agents::{
    AgentParams, Agents, HighState, LowState, ObservedLow, ObservedState, SessionCache,
};
use crate::error::{Error, Result};
use crate::numcore::tensor::softmax;
use crate::numcore::{AdamConfig, ParamStore};

/// High-level transition with raw ids; encoders are applied when sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: ObservedState,
    /// Low-level observation at the first step of the session, used for
    /// policy proposals.
    pub low: Option<ObservedLow>,
    /// Exposed item list `a^h_t`.
    pub action: Vec<i64>,
    pub reward: f64,
    pub next_state: ObservedState,
    /// First-step observation of the next session, for the target policy.
    pub next_low: Option<ObservedLow>,
    /// Logged next action `a^h_{t+1}`.
    pub next_action: Option<Vec<i64>>,
    pub terminal: bool,
}

/// How the bootstrap action and critic are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// `Q_{w'}(s', pi_{theta'}(s'))`, falling back to the logged next action.
    Online,
    /// `Q_w(s', a^h_{t+1})` with the logged next action.
    Offline,
}

/// `y = r + gamma * q_next`, or `r` at episode end.
pub fn td_target(reward: f64, gamma: f64, q_next: Option<f64>) -> f64 {
    match q_next {
        Some(q) => reward + gamma * q,
        None => reward,
    }
}

/// Softmax-weighted mean of proposal values and its gradient with respect to
/// each value: `d/dQ_m sum_j p_j Q_j = p_m (1 + Q_m - mean)`.
pub fn soft_weighted_mean(qs: &[f64]) -> (f64, Vec<f64>) {
    let p = softmax(qs);
    let mean: f64 = p.iter().zip(qs).map(|(a, b)| a * b).sum();
    let grads = p
        .iter()
        .zip(qs)
        .map(|(pm, qm)| pm * (1.0 + qm - mean))
        .collect();
    (mean, grads)
}

/// `alpha * (softmax-weighted proposal Q - data Q)`.
pub fn cql_penalty_value(proposal_q: &[f64], data_q: f64, alpha: f64) -> f64 {
    if alpha == 0.0 || proposal_q.is_empty() {
        return 0.0;
    }
    alpha * (soft_weighted_mean(proposal_q).0 - data_q)
}

/// `target <- tau * net + (1 - tau) * target`.
pub fn soft_update(net: &ParamStore, target: &mut ParamStore, tau: f64) -> Result<()> {
    net.soft_update_into(target, tau)
}

/// One low-level sample for the actor objective.
#[derive(Debug, Clone)]
pub struct ActorStep {
    pub high: HighState,
    pub low: LowState,
    pub goal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CriticStats {
    pub td_loss: f64,
    pub cql_penalty: f64,
    pub mean_q: f64,
}

/// Agents, target networks, replay memory and optimizer state.
pub struct Trainer {
    pub agents: Agents,
    pub params: AgentParams,
    pub target_critic: ParamStore,
    pub target_actor: ParamStore,
    pub config: TrainConfig,
    pub replay: ReplayBuffer<Transition>,
    pub metrics: Vec<MetricRecord>,
    pub(crate) cache: SessionCache,
    pub(crate) rng: ChaCha8Rng,
    adam: AdamConfig,
    critic_updates: u64,
    actor_updates: u64,
    checkpoint_dir: Option<PathBuf>,
}

impl Trainer {
    pub fn new(agents: Agents, params: AgentParams, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let replay = ReplayBuffer::new(config.replay_capacity, config.seed ^ 0x5eed_5eed)?;
        Ok(Self {
            target_critic: params.critic.clone(),
            target_actor: params.actor.clone(),
            agents,
            params,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            replay,
            metrics: Vec::new(),
            cache: SessionCache::new(),
            adam: AdamConfig::default(),
            critic_updates: 0,
            actor_updates: 0,
            checkpoint_dir: None,
        })
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    pub fn set_checkpoint_dir(&mut self, dir: Option<PathBuf>) {
        self.checkpoint_dir = dir;
    }

    pub fn checkpoint_dir(&self) -> Option<&Path> {
        self.checkpoint_dir.as_deref()
    }

    pub fn save_checkpoint(&self, name: &str) -> Result<Option<PathBuf>> {
        let Some(dir) = &self.checkpoint_dir else {
            return Ok(None);
        };
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        self.agents.save(&self.params, &path)?;
        Ok(Some(path))
    }

    pub(crate) fn maybe_checkpoint(&self, step: usize) -> Result<()> {
        let every = self.config.checkpoint_every;
        if every > 0 && step > 0 && step % every == 0 {
            self.save_checkpoint(&format!("step-{step:07}.json"))?;
        }
        Ok(())
    }

    pub fn encode_high(&mut self, obs: &ObservedState) -> Result<HighState> {
        self.agents
            .encode_high(&self.params.shared, obs, &mut self.cache)
    }

    /// Bootstrap value of `tr.next_state` under `mode`, or `None` at episode
    /// end.
    pub fn bootstrap(&mut self, tr: &Transition, mode: TargetMode) -> Result<Option<f64>> {
        if tr.terminal {
            return Ok(None);
        }
        let shared = &self.params.shared;
        let s_next = self
            .agents
            .encode_high(shared, &tr.next_state, &mut self.cache)?;
        match mode {
            TargetMode::Online => {
                let a = match (&tr.next_low, &tr.next_action) {
                    (Some(low), _) => {
                        let ls = self.agents.low_state(shared, low, &[])?;
                        self.agents
                            .actor_policy_with(shared, &self.target_actor, &ls)?
                            .e_hat
                    }
                    (None, Some(ids)) => self.agents.encode_action(shared, ids)?.l,
                    (None, None) => {
                        return Err(Error::InvalidState("transition has no next action".into()));
                    }
                };
                Ok(Some(self.agents.critic.q(
                    &self.target_critic,
                    &s_next,
                    &a,
                )?))
            }
            TargetMode::Offline => {
                let ids = tr.next_action.as_ref().ok_or_else(|| {
                    Error::InvalidState("offline transition lacks a^h_{t+1}".into())
                })?;
                let a = self.agents.encode_action(shared, ids)?;
                Ok(Some(self.agents.critic.q(
                    &self.params.critic,
                    &s_next,
                    &a.l,
                )?))
            }
        }
    }

    pub fn bellman_target(&mut self, tr: &Transition, mode: TargetMode) -> Result<f64> {
        let q_next = self.bootstrap(tr, mode)?;
        Ok(td_target(
            tr.reward * self.config.reward_scale,
            self.config.gamma,
            q_next,
        ))
    }

    /// Mean squared Bellman residual at the logged actions, without updating.
    pub fn critic_loss(&mut self, batch: &[Transition], mode: TargetMode) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("critic batch"));
        }
        let mut total = 0.0;
        for tr in batch {
            let y = self.bellman_target(tr, mode)?;
            let s = self.encode_high(&tr.state)?;
            let a = self.agents.encode_action(&self.params.shared, &tr.action)?;
            let q = self.agents.critic.q(&self.params.critic, &s, &a.l)?;
            total += (q - y) * (q - y);
        }
        Ok(total / batch.len() as f64)
    }

    /// Policy output at the first step of `low` plus Gaussian perturbations.
    fn proposals(&mut self, low: &ObservedLow) -> Result<Vec<Vec<f64>>> {
        let shared = &self.params.shared;
        let ls = self.agents.low_state(shared, low, &[])?;
        let base = self
            .agents
            .actor_policy_with(shared, &self.params.actor, &ls)?
            .e_hat;
        let noise =
            Normal::new(0.0, self.config.cql_sigma).map_err(|e| Error::Config(e.to_string()))?;
        let mut out = Vec::with_capacity(self.config.cql_proposals);
        out.push(base.clone());
        while out.len() < self.config.cql_proposals {
            out.push(
                base.iter()
                    .map(|v| v + noise.sample(&mut self.rng))
                    .collect(),
            );
        }
        Ok(out)
    }

    /// Conservative penalty over a batch, averaged, without updating.
    pub fn cql_penalty(&mut self, batch: &[Transition], alpha: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("penalty batch"));
        }
        let mut total = 0.0;
        for tr in batch {
            let low = tr.low.as_ref().ok_or_else(|| {
                Error::InvalidState("penalty needs a low-level observation".into())
            })?;
            let props = self.proposals(low)?;
            let s = self.encode_high(&tr.state)?;
            let qs = props
                .iter()
                .map(|a| self.agents.critic.q(&self.params.critic, &s, a))
                .collect::<Result<Vec<_>>>()?;
            let a = self.agents.encode_action(&self.params.shared, &tr.action)?;
            let q_data = self.agents.critic.q(&self.params.critic, &s, &a.l)?;
            total += cql_penalty_value(&qs, q_data, alpha);
        }
        Ok(total / batch.len() as f64)
    }

    /// One gradient step on `w` (and the shared encoders) minimizing the
    /// Bellman residual plus `alpha` times the conservative penalty, followed
    /// by the target-critic soft update.
    pub fn critic_update(
        &mut self,
        batch: &[Transition],
        mode: TargetMode,
        alpha: f64,
    ) -> Result<CriticStats> {
        if batch.is_empty() {
            return Err(Error::Empty("critic batch"));
        }
        let targets = batch
            .iter()
            .map(|tr| self.bellman_target(tr, mode))
            .collect::<Result<Vec<_>>>()?;
        let stats = self.accumulate_critic_grads(batch, &targets, alpha)?;
        let cfg = &self.config;
        self.params.critic.add_regularization(cfg.l1, cfg.l2);
        self.params.shared.add_regularization(cfg.l1, cfg.l2);
        self.params.critic.adam_step(cfg.lr_critic, &self.adam);
        self.params.shared.adam_step(cfg.lr_critic, &self.adam);
        soft_update(&self.params.critic, &mut self.target_critic, cfg.tau)?;
        self.critic_updates += 1;
        if cfg.history_cache_refresh > 0
            && self.critic_updates % cfg.history_cache_refresh as u64 == 0
        {
            self.cache.clear();
        }
        check_finite(&self.params.critic, "critic update")?;
        Ok(stats)
    }

    /// Adds the gradient of the batch loss against fixed `targets` to the
    /// critic and shared stores without stepping.
    pub fn accumulate_critic_grads(
        &mut self,
        batch: &[Transition],
        targets: &[f64],
        alpha: f64,
    ) -> Result<CriticStats> {
        if batch.is_empty() || batch.len() != targets.len() {
            return Err(Error::Empty("critic batch"));
        }
        let n = batch.len() as f64;
        let mut stats = CriticStats::default();
        for (tr, &y) in batch.iter().zip(targets) {
            let s = self.encode_high(&tr.state)?;
            let enc = &self.agents.encoders;
            let rows = tr
                .action
                .iter()
                .map(|&i| enc.items.lookup(&self.params.shared, i))
                .collect::<Result<Vec<_>>>()?;
            let (a, sre_caches) = enc.sre.encode_cached(&self.params.shared, &rows)?;
            let critic = &self.agents.critic;
            let (q, cache) = critic.forward_cached(&self.params.critic, &s, &a.vector)?;
            let resid = q - y;
            stats.td_loss += resid * resid / n;
            stats.mean_q += q / n;
            let mut dq = 2.0 * resid / n;
            let mut d_u = vec![0.0; s.u.len()];
            let mut d_co = vec![0.0; s.c_o.len()];
            if alpha > 0.0 {
                let low = tr.low.as_ref().ok_or_else(|| {
                    Error::InvalidState("penalty needs a low-level observation".into())
                })?;
                let props = self.proposals(low)?;
                let critic = &self.agents.critic;
                let mut evals = Vec::with_capacity(props.len());
                for p in &props {
                    evals.push(critic.forward_cached(&self.params.critic, &s, p)?);
                }
                let qs: Vec<f64> = evals.iter().map(|(q, _)| *q).collect();
                let (mean, grads) = soft_weighted_mean(&qs);
                stats.cql_penalty += alpha * (mean - q) / n;
                dq -= alpha / n;
                for ((_, c), g) in evals.iter().zip(grads) {
                    let gi = critic.backward(&mut self.params.critic, &s, c, alpha * g / n);
                    add(&mut d_u, &gi.u);
                    add(&mut d_co, &gi.c_o);
                }
            }
            let critic = &self.agents.critic;
            let g = critic.backward(&mut self.params.critic, &s, &cache, dq);
            add(&mut d_u, &g.u);
            add(&mut d_co, &g.c_o);
            let enc = &self.agents.encoders;
            enc.users
                .accumulate(&mut self.params.shared, tr.state.user, &d_u)?;
            enc.outra
                .backward(&mut self.params.shared, &tr.state.outra, &d_co)?;
            enc.sre
                .backward(&mut self.params.shared, &sre_caches, &g.action);
        }
        Ok(stats)
    }

    /// Samples `N` transitions and runs [`Trainer::critic_update`].
    pub fn critic_update_from_replay(
        &mut self,
        mode: TargetMode,
        alpha: f64,
    ) -> Result<CriticStats> {
        let idx = self.replay.sample_indices(self.config.batch_size)?;
        let batch: Vec<Transition> = idx
            .into_iter()
            .map(|i| self.replay.get(i).cloned().expect("sampled index in range"))
            .collect();
        self.critic_update(&batch, mode, alpha)
    }

    /// One Adam step on the actor ascending
    /// `mean[Q_w(s^h, pi(s^l)) - goal_weight * ||g - pi(s^l)||^2]`.
    /// The shared encoders and the critic are left untouched. Returns the
    /// mean objective.
    pub fn actor_update(&mut self, steps: &[ActorStep]) -> Result<f64> {
        if steps.is_empty() {
            return Ok(0.0);
        }
        let objective = self.accumulate_actor_grads(steps)?;
        let cfg = &self.config;
        self.params.actor.add_regularization(cfg.l1, cfg.l2);
        self.params.actor.adam_step(cfg.lr_actor, &self.adam);
        self.actor_updates += 1;
        check_finite(&self.params.actor, "actor update")?;
        Ok(objective)
    }

    /// Adds the gradient of the negated actor objective to the actor store
    /// without stepping; returns the objective.
    pub fn accumulate_actor_grads(&mut self, steps: &[ActorStep]) -> Result<f64> {
        let n = steps.len() as f64;
        let mut objective = 0.0;
        for st in steps {
            let refs: Vec<&[f64]> = st.low.selected.iter().map(Vec::as_slice).collect();
            let sre = self
                .agents
                .encoders
                .sre
                .encode(&self.params.shared, &refs)?;
            let actor = &self.agents.actor;
            let (e_hat, cache) = actor.forward_cached(
                &self.params.actor,
                &st.low.u,
                &st.low.c_o,
                &sre.vector,
                &st.low.device,
            )?;
            let mut d = vec![0.0; e_hat.len()];
            if self.config.use_critic {
                let (q, g) =
                    self.agents
                        .critic
                        .action_gradient(&self.params.critic, &st.high, &e_hat)?;
                objective += q / n;
                for (di, gi) in d.iter_mut().zip(&g) {
                    *di -= gi / n;
                }
            }
            if let Some(goal) = &st.goal {
                let w = self.config.goal_weight;
                for ((di, e), g) in d.iter_mut().zip(&e_hat).zip(goal) {
                    objective -= w * (e - g) * (e - g) / n;
                    *di += 2.0 * w * (e - g) / n;
                }
            }
            actor.backward(&mut self.params.actor, &st.low.device, &cache, &d)?;
        }
        Ok(objective)
    }

    pub fn soft_update_target_actor(&mut self) -> Result<()> {
        soft_update(&self.params.actor, &mut self.target_actor, self.config.tau)
    }
}

fn add(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

fn check_finite(store: &ParamStore, what: &'static str) -> Result<()> {
    if store
        .params()
        .all(|p| p.value().values().iter().all(|v| v.is_finite()))
    {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
