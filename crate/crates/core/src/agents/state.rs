use serde::{Deserialize, Serialize};

use crate::encoders::{DeviceFeatures, OutraFeatures};
use crate::error::{check_len, Error, Result};
use crate::numcore::tensor::dot;

/// High-level state as raw ids: user, past sessions (item-id lists, oldest
/// first) and outra-session features.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservedState {
    pub user: i64,
    pub history: Vec<Vec<i64>>,
    pub outra: OutraFeatures,
}

/// Raw inputs of the low-level state at one step, minus the items selected
/// so far in the session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservedLow {
    pub user: i64,
    pub outra: OutraFeatures,
    pub device: Vec<DeviceFeatures>,
}

/// `s^h = [u, l_1..l_n, c^o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighState {
    pub u: Vec<f64>,
    pub history: Vec<Vec<f64>>,
    pub c_o: Vec<f64>,
}

impl HighState {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// Keeps the newest `max_len` sessions.
    pub fn truncate_history(&mut self, max_len: usize) {
        if self.history.len() > max_len {
            self.history.drain(..self.history.len() - max_len);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighAction {
    pub l: Vec<f64>,
}

/// `s^l_k = [u, c^o, m_0..m_k, e_1..e_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowState {
    pub u: Vec<f64>,
    pub c_o: Vec<f64>,
    pub device: Vec<DeviceFeatures>,
    pub selected: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowAction {
    pub e_hat: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalSource {
    LoggedSession,
    TargetPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub g: Vec<f64>,
    pub source: GoalSource,
}

/// Candidate items offered for one session with a selection mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    ids: Vec<i64>,
    embeddings: Vec<Vec<f64>>,
    selected: Vec<bool>,
}

impl CandidatePool {
    pub fn new(ids: Vec<i64>, embeddings: Vec<Vec<f64>>) -> Result<Self> {
        check_len(ids.len(), embeddings.len(), "candidate embeddings")?;
        if ids.is_empty() {
            return Err(Error::Empty("candidate pool"));
        }
        let dim = embeddings[0].len();
        for e in &embeddings {
            check_len(dim, e.len(), "candidate embedding")?;
        }
        let n = ids.len();
        Ok(Self {
            ids,
            embeddings,
            selected: vec![false; n],
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[i64] {
        &self.ids
    }

    pub fn embedding(&self, index: usize) -> &[f64] {
        &self.embeddings[index]
    }

    pub fn is_selected(&self, index: usize) -> bool {
        self.selected[index]
    }

    pub fn num_selected(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn remaining(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.ids.len()).filter(|&i| !self.selected[i])
    }

    pub fn mark(&mut self, index: usize) -> Result<i64> {
        if index >= self.ids.len() {
            return Err(Error::InvalidId {
                id: index as i64,
                table: "candidate pool".into(),
            });
        }
        if self.selected[index] {
            return Err(Error::InvalidState(format!(
                "candidate {index} already selected"
            )));
        }
        self.selected[index] = true;
        Ok(self.ids[index])
    }
}

/// `argmax_k e_hat . e_k` over unselected candidates; ties go to the lowest
/// index.
pub fn select_item(a: &LowAction, pool: &CandidatePool) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in pool.remaining() {
        let e = pool.embedding(i);
        check_len(e.len(), a.e_hat.len(), "selection action")?;
        let score = dot(&a.e_hat, e);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::PoolExhausted)
}

/// `r^l = -||g - e_hat||`.
pub fn intrinsic_reward(g: &Goal, a: &LowAction) -> Result<f64> {
    check_len(g.g.len(), a.e_hat.len(), "goal")?;
    let sq: f64 =
        g.g.iter()
            .zip(&a.e_hat)
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
    Ok(-sq.sqrt())
}

/// Session click-through rate.
pub fn high_reward(clicks: &[u8], k: usize) -> Result<f64> {
    check_len(k, clicks.len(), "session clicks")?;
    if k == 0 {
        return Err(Error::Empty("session clicks"));
    }
    if let Some(&c) = clicks.iter().find(|&&c| c > 1) {
        return Err(Error::InvalidState(format!(
            "click label {c} is not binary"
        )));
    }
    Ok(clicks.iter().map(|&c| c as f64).sum::<f64>() / k as f64)
}

pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}
