use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::report::{auc, MetricsReport};
use crate::agents::{AgentParams, Agents, SessionCache};
use crate::dataio::SessionLogRecord;
use crate::envsim::{ActorView, Simulator};
use crate::error::{Error, Result};
use crate::numcore::tensor::dot;
use crate::training::SessionStart;

/// Something that fills a session of `k` items from the candidates.
pub trait Policy {
    fn select(&mut self, start: &SessionStart, k: usize) -> Result<Vec<i64>>;

    /// The actor-side observation the policy consumes.
    fn view(&self) -> ActorView {
        ActorView::Edge
    }
}

/// Uniform picks without replacement.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn select(&mut self, start: &SessionStart, k: usize) -> Result<Vec<i64>> {
        if start.candidates.len() < k {
            return Err(Error::PoolExhausted);
        }
        Ok(sample(&mut self.rng, start.candidates.len(), k)
            .into_iter()
            .map(|i| start.candidates[i])
            .collect())
    }
}

/// Greedy actor rollout without exploration noise.
pub struct ActorPolicy<'a> {
    pub agents: &'a Agents,
    pub params: &'a AgentParams,
    pub view: ActorView,
}

impl Policy for ActorPolicy<'_> {
    fn select(&mut self, start: &SessionStart, k: usize) -> Result<Vec<i64>> {
        if k != self.agents.config.session_len {
            return Err(Error::Config(
                "session length differs from the agents'".into(),
            ));
        }
        let mut pool = self
            .agents
            .pool(&self.params.shared, start.candidates.clone())?;
        self.agents
            .rollout::<ChaCha8Rng>(self.params, &start.low, &mut pool, None)
    }

    fn view(&self) -> ActorView {
        self.view
    }
}

/// `arg max Q` over candidate-completed sessions.
pub struct CriticPolicy<'a> {
    pub agents: &'a Agents,
    pub params: &'a AgentParams,
    cache: SessionCache,
}

impl<'a> CriticPolicy<'a> {
    pub fn new(agents: &'a Agents, params: &'a AgentParams) -> Self {
        Self {
            agents,
            params,
            cache: SessionCache::new(),
        }
    }
}

impl Policy for CriticPolicy<'_> {
    fn select(&mut self, start: &SessionStart, k: usize) -> Result<Vec<i64>> {
        if k != self.agents.config.session_len {
            return Err(Error::Config(
                "session length differs from the agents'".into(),
            ));
        }
        let s = self
            .agents
            .encode_high(&self.params.shared, &start.high, &mut self.cache)?;
        let mut pool = self
            .agents
            .pool(&self.params.shared, start.candidates.clone())?;
        self.agents.critic_rollout(self.params, &s, &mut pool)
    }
}

/// Seed of the candidate pool shown to `user` in evaluation `round`.
pub fn pool_seed(seed: u64, round: usize, user: i64) -> u64 {
    let mut z = seed
        ^ (round as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (user as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// S-rating: each round resets every simulated user to the starting
/// history and lets `policy` fill one session from a freshly drawn pool;
/// the round's value is the mean oracle rating of the exposed items.
pub fn eval_srating(
    policy: &mut dyn Policy,
    sim: &Simulator,
    rounds: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let k = sim.config.session_len;
    let view = policy.view();
    let mut values = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let mut sum = 0u64;
        let mut n = 0usize;
        for user in sim.users() {
            let mut state = sim.env_reset(user)?;
            let mut rng = ChaCha8Rng::seed_from_u64(pool_seed(seed, round, user));
            sim.begin_session(&mut state, &mut rng)?;
            let items = policy.select(&sim.session_start(&state, view), k)?;
            for item in items {
                sum += sim.env_step(&mut state, item)? as u64;
                n += 1;
            }
            sim.env_session_end(&mut state)?;
        }
        values.push(sum as f64 / n.max(1) as f64);
    }
    MetricsReport::from_rounds("s_rating", &values, "")
}

pub fn baseline_random(sim: &Simulator, rounds: usize, seed: u64) -> Result<MetricsReport> {
    eval_srating(&mut RandomPolicy::new(seed), sim, rounds, seed)
}

/// Actor scores `e_hat_k . e_item` of every logged item, with its click.
pub fn score_logged_items(
    agents: &Agents,
    params: &AgentParams,
    records: &[SessionLogRecord],
) -> Result<Vec<(i64, i64, f64, u8)>> {
    let k_len = agents.config.session_len;
    let mut out = Vec::with_capacity(records.len() * k_len);
    for rec in records {
        rec.validate(k_len)?;
        for k in 0..k_len {
            let ls = agents.low_state(&params.shared, &rec.low_at(k), &rec.action[..k])?;
            let e_hat = agents.actor_policy(params, &ls)?.e_hat;
            let item = rec.action[k];
            let e = agents.encoders.embed_item(&params.shared, item)?;
            out.push((rec.state.user, item, dot(&e_hat, e), rec.clicks[k]));
        }
    }
    Ok(out)
}

/// D-AUC of the actor's scores against the logged clicks.
pub fn eval_auc(
    agents: &Agents,
    params: &AgentParams,
    records: &[SessionLogRecord],
) -> Result<MetricsReport> {
    let scored = score_logged_items(agents, params, records)?;
    let scores: Vec<f64> = scored.iter().map(|s| s.2).collect();
    let labels: Vec<u8> = scored.iter().map(|s| s.3).collect();
    MetricsReport::from_rounds("d_auc", &[auc(&scores, &labels)?], "")
}
