use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::EdgeSync;
use super::metrics::MetricRecord;
use super::trainer::{ActorStep, TargetMode, Trainer, Transition};
use crate::agents::{select_item, LowAction, LowState, ObservedLow, ObservedState};
use crate::dataio::SessionLogRecord;
use crate::error::{Error, Result};
use crate::numcore::tensor::{dot, sigmoid};
use crate::numcore::AdamConfig;

/// What the cloud and the edge observe at the start of a session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionStart {
    pub high: ObservedState,
    pub low: ObservedLow,
    pub candidates: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub clicks: Vec<u8>,
    pub reward: f64,
}

/// An interactive recommendation environment driven one session at a time.
pub trait Environment {
    fn users(&self) -> Vec<i64>;
    /// Starts an episode for `user`.
    fn reset(&mut self, user: i64) -> Result<()>;
    fn begin_session(&mut self) -> Result<SessionStart>;
    fn step(&mut self, item: i64) -> Result<()>;
    fn end_session(&mut self) -> Result<SessionOutcome>;
}

/// How items are picked during online training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    #[default]
    Actor,
    /// Greedy `arg max Q` over candidate-completed sessions; the actor is
    /// not trained.
    CriticArgmax,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainSummary {
    pub sessions: usize,
    pub rewards: Vec<f64>,
    pub critic_updates: u64,
    pub actor_updates: u64,
}

/// Online training: per session, sync, `K` on-policy steps each followed by an
/// actor update, then the delayed stage (target-actor soft update, reward,
/// transition) and one critic batch update once the buffer exceeds `N`.
pub fn train_online<E: Environment>(
    trainer: &mut Trainer,
    env: &mut E,
    selector: Selector,
) -> Result<TrainSummary> {
    match run_online(trainer, env, selector) {
        Ok(s) => Ok(s),
        Err(e) => {
            trainer.save_checkpoint("abort.json")?;
            Err(e)
        }
    }
}

fn run_online<E: Environment>(
    trainer: &mut Trainer,
    env: &mut E,
    selector: Selector,
) -> Result<TrainSummary> {
    let total = trainer.config.sessions;
    let mut summary = TrainSummary::default();
    if total == 0 {
        return Ok(summary);
    }
    let mut users = env.users();
    if users.is_empty() {
        return Err(Error::Empty("environment users"));
    }
    users.shuffle(&mut trainer.rng);
    let k_len = trainer.agents.config.session_len;
    let episode_len = trainer.config.episode_len;
    let mut user_cursor = 0;
    let mut next_start: Option<SessionStart> = None;
    let mut prev_exposed: Option<Vec<i64>> = None;
    let mut in_episode = 0;
    for session in 0..total {
        let start = match next_start.take() {
            Some(s) => s,
            None => {
                let user = users[user_cursor % users.len()];
                user_cursor += 1;
                if user_cursor % users.len() == 0 {
                    users.shuffle(&mut trainer.rng);
                }
                env.reset(user)?;
                in_episode = 0;
                prev_exposed = None;
                env.begin_session()?
            }
        };
        let s_h = trainer.encode_high(&start.high)?;
        let goal = match &prev_exposed {
            Some(ids) if trainer.config.goal_weight > 0.0 => {
                Some(trainer.agents.make_goal(&trainer.params.shared, ids)?.g)
            }
            _ => None,
        };
        let mut pool = trainer
            .agents
            .pool(&trainer.params.shared, start.candidates.clone())?;
        let sigma = trainer.config.noise_at(session, total);
        let noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
        let mut chosen: Vec<i64> = Vec::with_capacity(k_len);
        let mut objective = 0.0;
        for _ in 0..k_len {
            let ls = trainer
                .agents
                .low_state(&trainer.params.shared, &start.low, &chosen)?;
            let idx = match selector {
                Selector::Actor => {
                    let edge = match trainer.config.edge_sync {
                        EdgeSync::Actor => &trainer.params.actor,
                        EdgeSync::Target => &trainer.target_actor,
                    };
                    let mut e_hat = trainer
                        .agents
                        .actor_policy_with(&trainer.params.shared, edge, &ls)?
                        .e_hat;
                    if sigma > 0.0 {
                        e_hat
                            .iter_mut()
                            .for_each(|v| *v += noise.sample(&mut trainer.rng));
                    }
                    select_item(&LowAction { e_hat }, &pool)?
                }
                Selector::CriticArgmax => {
                    trainer
                        .agents
                        .critic_select(&trainer.params, &s_h, &chosen, &pool)?
                }
            };
            let id = pool.mark(idx)?;
            env.step(id)?;
            chosen.push(id);
            if selector == Selector::Actor {
                objective += trainer.actor_update(&[ActorStep {
                    high: s_h.clone(),
                    low: ls,
                    goal: goal.clone(),
                }])? / k_len as f64;
            }
        }
        trainer.soft_update_target_actor()?;
        let outcome = env.end_session()?;
        summary.rewards.push(outcome.reward);
        in_episode += 1;
        let terminal = in_episode >= episode_len;
        let upcoming = if terminal {
            None
        } else {
            Some(env.begin_session()?)
        };
        trainer.replay.push(Transition {
            state: start.high.clone(),
            low: Some(start.low.clone()),
            action: chosen.clone(),
            reward: outcome.reward,
            next_state: upcoming
                .as_ref()
                .map_or_else(|| start.high.clone(), |s| s.high.clone()),
            next_low: upcoming.as_ref().map(|s| s.low.clone()),
            next_action: None,
            terminal,
        });
        let mut record = MetricRecord {
            step: session,
            td_loss: None,
            cql_penalty: None,
            actor_objective: (selector == Selector::Actor).then_some(objective),
            mean_q: None,
        };
        if trainer.config.use_critic && trainer.replay.len() > trainer.config.batch_size {
            let stats = trainer.critic_update_from_replay(TargetMode::Online, 0.0)?;
            record.td_loss = Some(stats.td_loss);
            record.mean_q = Some(stats.mean_q);
        }
        trainer.metrics.push(record);
        trainer.maybe_checkpoint(session + 1)?;
        prev_exposed = Some(chosen);
        next_start = upcoming;
        summary.sessions += 1;
    }
    summary.critic_updates = trainer.critic_updates();
    summary.actor_updates = trainer.actor_updates();
    Ok(summary)
}

/// Converts a log line into a replay transition.
pub fn transition_from_log(rec: &SessionLogRecord) -> Transition {
    Transition {
        state: rec.state.clone(),
        low: Some(rec.low_at(0)),
        action: rec.action.clone(),
        reward: rec.reward,
        next_state: rec.next_state.clone().unwrap_or_else(|| rec.state.clone()),
        next_low: None,
        next_action: rec.next_action.clone(),
        terminal: rec.next_state.is_none(),
    }
}

/// Offline training over logged sessions: per line, store the transition,
/// run one critic step on `L + alpha * L_off` once the buffer exceeds `N`,
/// then `K` edge-stage actor steps along the logged items.
pub fn train_offline(trainer: &mut Trainer, records: &[SessionLogRecord]) -> Result<TrainSummary> {
    let mut summary = TrainSummary::default();
    let k_len = trainer.agents.config.session_len;
    let alpha = trainer.config.alpha;
    let mut step = 0;
    for _ in 0..trainer.config.epochs {
        for rec in records {
            rec.validate(k_len)?;
            trainer.replay.push(transition_from_log(rec));
            let mut record = MetricRecord {
                step,
                td_loss: None,
                cql_penalty: None,
                actor_objective: None,
                mean_q: None,
            };
            if trainer.config.use_critic && trainer.replay.len() > trainer.config.batch_size {
                let stats = trainer.critic_update_from_replay(TargetMode::Offline, alpha)?;
                record.td_loss = Some(stats.td_loss);
                record.mean_q = Some(stats.mean_q);
                record.cql_penalty = Some(stats.cql_penalty);
            }
            let s_h = trainer.encode_high(&rec.state)?;
            let goal = if trainer.config.goal_weight > 0.0 {
                Some(
                    trainer
                        .agents
                        .make_goal(&trainer.params.shared, &rec.action)?
                        .g,
                )
            } else {
                None
            };
            let mut objective = 0.0;
            for k in 0..k_len {
                let ls = trainer.agents.low_state(
                    &trainer.params.shared,
                    &rec.low_at(k),
                    &rec.action[..k],
                )?;
                objective += trainer.actor_update(&[ActorStep {
                    high: s_h.clone(),
                    low: ls,
                    goal: goal.clone(),
                }])? / k_len as f64;
            }
            trainer.soft_update_target_actor()?;
            record.actor_objective = Some(objective);
            trainer.metrics.push(record);
            summary.rewards.push(rec.reward);
            summary.sessions += 1;
            step += 1;
            trainer.maybe_checkpoint(step)?;
        }
    }
    summary.critic_updates = trainer.critic_updates();
    summary.actor_updates = trainer.actor_updates();
    Ok(summary)
}

/// Click-prediction warmup: `sigmoid(ê_k · e_k)` is fit to the logged click
/// of item `k` by binary cross-entropy. Gradients reach the actor, the user
/// rows, the outra tables and the item rows; the SRE is held fixed. Returns
/// the mean loss of each epoch.
pub fn supervised_warmup(
    trainer: &mut Trainer,
    records: &[SessionLogRecord],
    epochs: usize,
) -> Result<Vec<f64>> {
    let adam = AdamConfig::default();
    let mut losses = Vec::with_capacity(epochs);
    let k_len = trainer.agents.config.session_len;
    for _ in 0..epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for rec in records {
            rec.validate(k_len)?;
            for k in 0..k_len {
                let ls: LowState = trainer.agents.low_state(
                    &trainer.params.shared,
                    &rec.low_at(k),
                    &rec.action[..k],
                )?;
                let refs: Vec<&[f64]> = ls.selected.iter().map(Vec::as_slice).collect();
                let sre = trainer
                    .agents
                    .encoders
                    .sre
                    .encode(&trainer.params.shared, &refs)?;
                let actor = &trainer.agents.actor;
                let (e_hat, cache) = actor.forward_cached(
                    &trainer.params.actor,
                    &ls.u,
                    &ls.c_o,
                    &sre.vector,
                    &ls.device,
                )?;
                let item = rec.action[k];
                let e = trainer
                    .agents
                    .encoders
                    .embed_item(&trainer.params.shared, item)?
                    .to_vec();
                let p = sigmoid(dot(&e_hat, &e));
                let y = rec.clicks[k] as f64;
                total += bce(p, y);
                count += 1;
                let dz = (p - y) / k_len as f64;
                let d_out: Vec<f64> = e.iter().map(|v| dz * v).collect();
                let d_item: Vec<f64> = e_hat.iter().map(|v| dz * v).collect();
                let [d_u, d_co, _] =
                    actor.backward(&mut trainer.params.actor, &ls.device, &cache, &d_out)?;
                let enc = &trainer.agents.encoders;
                let shared = &mut trainer.params.shared;
                enc.items.accumulate(shared, item, &d_item)?;
                enc.users.accumulate(shared, rec.state.user, &d_u)?;
                enc.outra.backward(shared, &rec.state.outra, &d_co)?;
            }
            trainer
                .params
                .actor
                .adam_step(trainer.config.lr_warmup, &adam);
            trainer
                .params
                .shared
                .adam_step(trainer.config.lr_warmup_shared, &adam);
        }
        trainer
            .target_actor
            .copy_values_from(&trainer.params.actor)?;
        losses.push(if count == 0 {
            0.0
        } else {
            total / count as f64
        });
    }
    Ok(losses)
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}
