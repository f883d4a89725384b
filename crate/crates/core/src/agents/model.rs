use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::actor::{Actor, ActorConfig};
use super::critic::{Critic, CriticConfig};
use super::state::{
    select_item, CandidatePool, Goal, GoalSource, HighAction, HighState, LowAction, LowState,
    ObservedLow, ObservedState,
};
use crate::encoders::{Encoders, Vocab};
use crate::error::{Error, Result};
use crate::numcore::params::Checkpoint;
use crate::numcore::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Embedding size `L` shared by items, sessions, users and contexts.
    pub dim: usize,
    /// Items per session `K`.
    pub session_len: usize,
    /// Maximum number of history sessions `N^l` kept in the high-level state.
    pub history_len: usize,
    pub critic: CriticConfig,
    pub actor: ActorConfig,
    /// Initialize the SRE so that session embeddings start in item space.
    pub aligned_sre: bool,
}

/// Parameters of both agents. `shared` holds the encoders used by both.
#[derive(Debug, Clone)]
pub struct AgentParams {
    pub shared: ParamStore,
    pub critic: ParamStore,
    pub actor: ParamStore,
}

/// Layer layout of the critic, the actor and the shared encoders.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Agents {
    pub config: AgentConfig,
    pub vocab: Vocab,
    pub encoders: Encoders,
    pub critic: Critic,
    pub actor: Actor,
}

/// SRE embeddings of item-id lists, keyed by content.
#[derive(Debug, Default, Clone)]
pub struct SessionCache {
    map: HashMap<Vec<i64>, Vec<f64>>,
}

impl SessionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct AgentCheckpoint {
    agents: Agents,
    shared: Checkpoint,
    critic: Checkpoint,
    actor: Checkpoint,
}

impl Agents {
    pub fn build<R: Rng + ?Sized>(
        config: &AgentConfig,
        vocab: &Vocab,
        rng: &mut R,
        item_rows: Option<&[Vec<f64>]>,
        app_rows: Option<&[Vec<f64>]>,
    ) -> Result<(Self, AgentParams)> {
        vocab.validate()?;
        if config.session_len == 0 || config.history_len == 0 {
            return Err(Error::Config(
                "session and history lengths must be positive".into(),
            ));
        }
        let mut shared = ParamStore::new();
        let mut critic_store = ParamStore::new();
        let mut actor_store = ParamStore::new();
        let encoders = Encoders::new(
            &mut shared,
            rng,
            vocab,
            config.dim,
            config.session_len,
            item_rows,
            config.aligned_sre,
        )?;
        let critic = Critic::new(&mut critic_store, rng, config.dim, &config.critic)?;
        let actor = Actor::new(
            &mut actor_store,
            rng,
            vocab,
            config.dim,
            &config.actor,
            app_rows,
        )?;
        Ok((
            Self {
                config: config.clone(),
                vocab: *vocab,
                encoders,
                critic,
                actor,
            },
            AgentParams {
                shared,
                critic: critic_store,
                actor: actor_store,
            },
        ))
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// SRE embedding of `ids`, memoized in `cache`.
    pub fn session_embedding(
        &self,
        shared: &ParamStore,
        ids: &[i64],
        cache: &mut SessionCache,
    ) -> Result<Vec<f64>> {
        if let Some(v) = cache.map.get(ids) {
            return Ok(v.clone());
        }
        let v = self.encoders.encode_items(shared, ids)?.vector;
        cache.map.insert(ids.to_vec(), v.clone());
        Ok(v)
    }

    pub fn encode_high(
        &self,
        shared: &ParamStore,
        obs: &ObservedState,
        cache: &mut SessionCache,
    ) -> Result<HighState> {
        let keep = obs.history.len().min(self.config.history_len);
        let history = obs.history[obs.history.len() - keep..]
            .iter()
            .map(|ids| self.session_embedding(shared, ids, cache))
            .collect::<Result<Vec<_>>>()?;
        Ok(HighState {
            u: self.encoders.embed_user(shared, obs.user)?.to_vec(),
            history,
            c_o: self.encoders.encode_outra_context(shared, &obs.outra)?,
        })
    }

    pub fn encode_action(&self, shared: &ParamStore, ids: &[i64]) -> Result<HighAction> {
        Ok(HighAction {
            l: self.encoders.encode_items(shared, ids)?.vector,
        })
    }

    pub fn low_state(
        &self,
        shared: &ParamStore,
        obs: &ObservedLow,
        selected: &[i64],
    ) -> Result<LowState> {
        Ok(LowState {
            u: self.encoders.embed_user(shared, obs.user)?.to_vec(),
            c_o: self.encoders.encode_outra_context(shared, &obs.outra)?,
            device: obs.device.clone(),
            selected: selected
                .iter()
                .map(|&i| self.encoders.embed_item(shared, i).map(<[f64]>::to_vec))
                .collect::<Result<_>>()?,
        })
    }

    pub fn critic_q(&self, params: &AgentParams, s: &HighState, a: &HighAction) -> Result<f64> {
        self.critic.q(&params.critic, s, &a.l)
    }

    pub fn actor_policy(&self, params: &AgentParams, s: &LowState) -> Result<LowAction> {
        self.actor_policy_with(&params.shared, &params.actor, s)
    }

    /// Policy under an explicit actor store, e.g. a target copy.
    pub fn actor_policy_with(
        &self,
        shared: &ParamStore,
        actor: &ParamStore,
        s: &LowState,
    ) -> Result<LowAction> {
        if s.selected.len() >= self.config.session_len {
            return Err(Error::InvalidState("session already complete".into()));
        }
        let refs: Vec<&[f64]> = s.selected.iter().map(Vec::as_slice).collect();
        let sre = self.encoders.sre.encode(shared, &refs)?;
        Ok(LowAction {
            e_hat: self
                .actor
                .forward(actor, &s.u, &s.c_o, &sre.vector, &s.device)?,
        })
    }

    /// Goal from a logged or exposed session list.
    pub fn make_goal(&self, shared: &ParamStore, exposed: &[i64]) -> Result<Goal> {
        Ok(Goal {
            g: self.encoders.encode_items(shared, exposed)?.vector,
            source: GoalSource::LoggedSession,
        })
    }

    /// Completes a session of `K` items with the actor. With `noise`, a
    /// Gaussian perturbation of the given scale is added to `e_hat` before
    /// each selection.
    pub fn rollout<R: Rng + ?Sized>(
        &self,
        params: &AgentParams,
        obs: &ObservedLow,
        pool: &mut CandidatePool,
        mut noise: Option<(&mut R, f64)>,
    ) -> Result<Vec<i64>> {
        let shared = &params.shared;
        let u = self.encoders.embed_user(shared, obs.user)?.to_vec();
        let c_o = self.encoders.encode_outra_context(shared, &obs.outra)?;
        let device = self.actor.device_latent(&params.actor, &obs.device)?;
        let mut l = crate::encoders::SessionEmbedding::zero(self.dim());
        let mut chosen = Vec::with_capacity(self.config.session_len);
        for _ in 0..self.config.session_len {
            let mut e_hat = self
                .actor
                .head(&params.actor, &u, &c_o, &l.vector, &device)?;
            if let Some((rng, sigma)) = noise.as_mut() {
                if *sigma > 0.0 {
                    let n = Normal::new(0.0, *sigma).map_err(|e| Error::Config(e.to_string()))?;
                    e_hat.iter_mut().for_each(|v| *v += n.sample(&mut **rng));
                }
            }
            let idx = select_item(&LowAction { e_hat }, pool)?;
            let id = pool.mark(idx)?;
            l = self
                .encoders
                .sre
                .step(shared, &l, self.encoders.embed_item(shared, id)?)?;
            chosen.push(id);
        }
        Ok(chosen)
    }

    /// Completes a session by scoring each remaining candidate `c` with
    /// `Q(s, SRE(selected ++ [c]))` and taking the best, lowest index on ties.
    pub fn critic_rollout(
        &self,
        params: &AgentParams,
        s: &HighState,
        pool: &mut CandidatePool,
    ) -> Result<Vec<i64>> {
        let mut chosen: Vec<i64> = Vec::with_capacity(self.config.session_len);
        for _ in 0..self.config.session_len {
            let idx = self.critic_select(params, s, &chosen, pool)?;
            chosen.push(pool.mark(idx)?);
        }
        Ok(chosen)
    }

    pub fn critic_select(
        &self,
        params: &AgentParams,
        s: &HighState,
        selected: &[i64],
        pool: &CandidatePool,
    ) -> Result<usize> {
        let shared = &params.shared;
        let base = self.encoders.encode_items(shared, selected)?;
        let mut best: Option<(usize, f64)> = None;
        for i in pool.remaining() {
            let a = self.encoders.sre.step(shared, &base, pool.embedding(i))?;
            let q = self.critic.q(&params.critic, s, &a.vector)?;
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((i, q));
            }
        }
        best.map(|(i, _)| i).ok_or(Error::PoolExhausted)
    }

    /// Candidate pool with embeddings from the item table.
    pub fn pool(&self, shared: &ParamStore, ids: Vec<i64>) -> Result<CandidatePool> {
        let embeddings = ids
            .iter()
            .map(|&i| self.encoders.embed_item(shared, i).map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        CandidatePool::new(ids, embeddings)
    }

    pub fn save(&self, params: &AgentParams, path: &Path) -> Result<()> {
        let ckpt = AgentCheckpoint {
            agents: self.clone(),
            shared: params.shared.to_checkpoint(),
            critic: params.critic.to_checkpoint(),
            actor: params.actor.to_checkpoint(),
        };
        std::fs::write(path, serde_json::to_vec(&ckpt)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, AgentParams)> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let ckpt: AgentCheckpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        Ok((
            ckpt.agents,
            AgentParams {
                shared: ParamStore::from_checkpoint(ckpt.shared)?,
                critic: ParamStore::from_checkpoint(ckpt.critic)?,
                actor: ParamStore::from_checkpoint(ckpt.actor)?,
            },
        ))
    }
}
