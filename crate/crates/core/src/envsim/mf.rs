use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::RatingRecord;
use crate::error::{Error, Result};
use crate::numcore::tensor::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    /// Fraction of ratings held out for the reported RMSE.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for MfConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            epochs: 40,
            lr: 0.01,
            l2: 0.05,
            holdout: 0.1,
            seed: 0,
        }
    }
}

/// User and item factors indexed by id; row 0 is unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfModel {
    pub users: Vec<Vec<f64>>,
    pub items: Vec<Vec<f64>>,
}

impl MfModel {
    pub fn dim(&self) -> usize {
        self.items.first().map_or(0, Vec::len)
    }

    pub fn predict(&self, user: i64, item: i64) -> f64 {
        dot(&self.users[user as usize], &self.items[item as usize])
    }

    /// Item rows with the mean over ids `1..` subtracted; row 0 stays zero.
    pub fn centered_items(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let n = self.items.len().saturating_sub(1).max(1) as f64;
        let mut mean = vec![0.0; d];
        for row in self.items.iter().skip(1) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut out = vec![vec![0.0; d]];
        out.extend(
            self.items
                .iter()
                .skip(1)
                .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect()),
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfResult {
    pub model: MfModel,
    pub train_rmse: f64,
    /// `None` when nothing was held out.
    pub holdout_rmse: Option<f64>,
}

pub fn rmse(model: &MfModel, ratings: &[RatingRecord]) -> f64 {
    if ratings.is_empty() {
        return 0.0;
    }
    let se: f64 = ratings
        .iter()
        .map(|r| (r.rating as f64 - model.predict(r.user, r.item)).powi(2))
        .sum();
    (se / ratings.len() as f64).sqrt()
}

/// Plain matrix factorization `r ~ p_u . q_i` by SGD on the squared error
/// with L2 shrinkage, trained on all but a seeded held-out fraction.
pub fn pretrain_mf(ratings: &[RatingRecord], cfg: &MfConfig) -> Result<MfResult> {
    if ratings.is_empty() {
        return Err(Error::Empty("ratings"));
    }
    if cfg.dim == 0 || !(0.0..1.0).contains(&cfg.holdout) {
        return Err(Error::Config(
            "mf needs dim >= 1 and holdout in [0, 1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..ratings.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = ((ratings.len() as f64) * cfg.holdout).floor() as usize;
    let (held, train_idx) = order.split_at(n_hold);
    let train: Vec<RatingRecord> = train_idx.iter().map(|&i| ratings[i]).collect();
    let held: Vec<RatingRecord> = held.iter().map(|&i| ratings[i]).collect();

    let max_user = ratings.iter().map(|r| r.user).max().unwrap_or(0) as usize;
    let max_item = ratings.iter().map(|r| r.item).max().unwrap_or(0) as usize;
    let mean = train.iter().map(|r| r.rating as f64).sum::<f64>() / train.len() as f64;
    let base = (mean / cfg.dim as f64).sqrt();
    let mut init = |n: usize| -> Vec<Vec<f64>> {
        (0..=n)
            .map(|_| {
                (0..cfg.dim)
                    .map(|_| base + rng.random_range(-0.1..0.1))
                    .collect()
            })
            .collect()
    };
    let mut model = MfModel {
        users: init(max_user),
        items: init(max_item),
    };
    let mut sgd_order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        sgd_order.shuffle(&mut rng);
        for &i in &sgd_order {
            let r = train[i];
            let (u, it) = (r.user as usize, r.item as usize);
            let err = r.rating as f64 - dot(&model.users[u], &model.items[it]);
            for d in 0..cfg.dim {
                let pu = model.users[u][d];
                let qi = model.items[it][d];
                model.users[u][d] += cfg.lr * (err * qi - cfg.l2 * pu);
                model.items[it][d] += cfg.lr * (err * pu - cfg.l2 * qi);
            }
        }
    }
    model.users[0].fill(0.0);
    model.items[0].fill(0.0);
    Ok(MfResult {
        train_rmse: rmse(&model, &train),
        holdout_rmse: (!held.is_empty()).then(|| rmse(&model, &held)),
        model,
    })
}
