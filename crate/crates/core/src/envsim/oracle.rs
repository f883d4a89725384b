use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::OnceLock;

use crate::dataio::RatingRecord;
use crate::error::{Error, Result};
use crate::numcore::tensor::dot;

use super::mf::MfModel;

/// Ratings of the data for rated pairs; for any other pair, the rating of
/// the rated pair whose concatenated `[p_u, q_i]` embedding is most
/// cosine-similar. Results are memoized; the oracle is safe to share.
pub struct RatingOracle {
    model: MfModel,
    num_users: usize,
    num_items: usize,
    /// Rated pairs sorted by (item, user).
    pair_user: Vec<u32>,
    pair_item: Vec<u32>,
    pair_rating: Vec<u8>,
    pair_inv_norm: Vec<f64>,
    /// Pairs of item `g` occupy `group_start[g]..group_start[g + 1]`.
    group_start: Vec<usize>,
    /// Extremes of `pair_inv_norm` within each item group.
    group_inv: Vec<(f64, f64)>,
    /// Per-user search bounds, built on first use.
    bounds: Vec<OnceLock<UserBounds>>,
    /// Item Gram matrix `q_i . q_j`, row-major over ids `0..=num_items`.
    gram: Vec<f64>,
    /// 0 = not computed yet, otherwise the rating.
    cache: Vec<AtomicU8>,
}

struct UserBounds {
    /// `p_u . p_v` for every user `v`.
    user_dot: Vec<f64>,
    /// Per item group, the largest `(p_u . p_v) / |y_vj|` over its pairs.
    group_max: Vec<f64>,
}

impl std::fmt::Debug for RatingOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RatingOracle")
            .field("users", &self.num_users)
            .field("items", &self.num_items)
            .field("rated_pairs", &self.pair_rating.len())
            .finish()
    }
}

impl RatingOracle {
    pub fn new(ratings: &[RatingRecord], model: MfModel) -> Result<Self> {
        if ratings.is_empty() {
            return Err(Error::Empty("oracle ratings"));
        }
        let num_users = model.users.len().saturating_sub(1);
        let num_items = model.items.len().saturating_sub(1);
        let mut pairs: Vec<(u32, u32, u8)> = Vec::with_capacity(ratings.len());
        for r in ratings {
            if r.user < 1
                || r.user as usize > num_users
                || r.item < 1
                || r.item as usize > num_items
            {
                return Err(Error::InvalidId {
                    id: if r.user as usize > num_users {
                        r.user
                    } else {
                        r.item
                    },
                    table: "oracle".into(),
                });
            }
            pairs.push((r.item as u32, r.user as u32, r.rating));
        }
        pairs.sort_unstable();
        pairs.dedup_by_key(|p| (p.0, p.1));

        let cache: Vec<AtomicU8> = (0..(num_users + 1) * (num_items + 1))
            .map(|_| AtomicU8::new(0))
            .collect();
        let stride = num_items + 1;
        let mut pair_inv_norm = Vec::with_capacity(pairs.len());
        for &(i, u, rating) in &pairs {
            let p = &model.users[u as usize];
            let q = &model.items[i as usize];
            let n = (dot(p, p) + dot(q, q)).sqrt();
            pair_inv_norm.push(if n > 0.0 { 1.0 / n } else { 0.0 });
            cache[u as usize * stride + i as usize].store(rating, Ordering::Relaxed);
        }
        let mut gram = vec![0.0; stride * stride];
        for a in 0..stride {
            for b in a..stride {
                let v = dot(&model.items[a], &model.items[b]);
                gram[a * stride + b] = v;
                gram[b * stride + a] = v;
            }
        }
        let mut group_start = vec![0; stride + 1];
        for &(i, _, _) in &pairs {
            group_start[i as usize + 1] += 1;
        }
        for g in 0..stride {
            group_start[g + 1] += group_start[g];
        }
        let group_inv = (0..stride)
            .map(|g| {
                pair_inv_norm[group_start[g]..group_start[g + 1]]
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    })
            })
            .collect();
        Ok(Self {
            num_users,
            num_items,
            group_start,
            group_inv,
            bounds: (0..=num_users).map(|_| OnceLock::new()).collect(),
            pair_user: pairs.iter().map(|p| p.1).collect(),
            pair_item: pairs.iter().map(|p| p.0).collect(),
            pair_rating: pairs.iter().map(|p| p.2).collect(),
            pair_inv_norm,
            gram,
            cache,
            model,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn model(&self) -> &MfModel {
        &self.model
    }

    pub fn num_rated(&self) -> usize {
        self.pair_rating.len()
    }

    fn check(&self, user: i64, item: i64) -> Result<(usize, usize)> {
        if user < 1 || user as usize > self.num_users {
            return Err(Error::InvalidId {
                id: user,
                table: "oracle users".into(),
            });
        }
        if item < 1 || item as usize > self.num_items {
            return Err(Error::InvalidId {
                id: item,
                table: "oracle items".into(),
            });
        }
        Ok((user as usize, item as usize))
    }

    /// Whether `(user, item)` is a rated pair of the data.
    pub fn is_rated(&self, user: i64, item: i64) -> Result<bool> {
        let (u, i) = self.check(user, item)?;
        let lo = self.pair_item.partition_point(|&x| (x as usize) < i);
        let hi = self.pair_item.partition_point(|&x| (x as usize) <= i);
        Ok(self.pair_user[lo..hi].binary_search(&(u as u32)).is_ok())
    }

    /// Rating in `1..=5` for any pair of known ids.
    pub fn rating(&self, user: i64, item: i64) -> Result<u8> {
        let (u, i) = self.check(user, item)?;
        let slot = &self.cache[u * (self.num_items + 1) + i];
        let cached = slot.load(Ordering::Relaxed);
        if cached != 0 {
            return Ok(cached);
        }
        let r = self.pair_rating[self.nearest_pair(u, i)];
        slot.store(r, Ordering::Relaxed);
        Ok(r)
    }

    fn user_bounds(&self, u: usize) -> &UserBounds {
        self.bounds[u].get_or_init(|| {
            let p = &self.model.users[u];
            let user_dot: Vec<f64> = self.model.users.iter().map(|v| dot(p, v)).collect();
            let group_max = self
                .group_start
                .windows(2)
                .map(|w| {
                    (w[0]..w[1])
                        .map(|j| user_dot[self.pair_user[j] as usize] * self.pair_inv_norm[j])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            UserBounds {
                user_dot,
                group_max,
            }
        })
    }

    /// Index of the most similar rated pair, lowest index on ties.
    ///
    /// `cos = (p_u.p_v + q_i.q_j) / (|x| |y_vj|)`; `|x|` is common to all
    /// pairs, so the search ranks `(p_u.p_v + q_i.q_j) / |y_vj|`. Item groups
    /// whose upper bound falls below the best score so far are skipped.
    fn nearest_pair(&self, u: usize, i: usize) -> usize {
        let b = self.user_bounds(u);
        let stride = self.num_items + 1;
        let row = &self.gram[i * stride..(i + 1) * stride];
        let bound = |g: usize| {
            let (lo, hi) = self.group_inv[g];
            let c = row[g];
            let v = b.group_max[g] + if c >= 0.0 { c * hi } else { c * lo };
            v + 1e-9 * v.abs().max(1.0)
        };
        let scan = |g: usize, best: &mut (f64, usize)| {
            for j in self.group_start[g]..self.group_start[g + 1] {
                let s = (b.user_dot[self.pair_user[j] as usize] + row[g]) * self.pair_inv_norm[j];
                if s > best.0 || (s == best.0 && j < best.1) {
                    *best = (s, j);
                }
            }
        };
        let groups = || (0..stride).filter(|&g| self.group_start[g] < self.group_start[g + 1]);
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        if let Some(top) = groups().max_by(|&a, &c| bound(a).total_cmp(&bound(c))) {
            scan(top, &mut best);
        }
        for g in groups() {
            if bound(g) >= best.0 {
                scan(g, &mut best);
            }
        }
        best.1
    }

    /// Exhaustive cosine scan over concatenated embeddings, without the cache.
    pub fn brute_force_rating(&self, user: i64, item: i64) -> Result<u8> {
        let (u, i) = self.check(user, item)?;
        if self.is_rated(user, item)? {
            return self.rating(user, item);
        }
        let x: Vec<f64> = self.model.users[u]
            .iter()
            .chain(&self.model.items[i])
            .copied()
            .collect();
        let nx = dot(&x, &x).sqrt();
        let mut best = (f64::NEG_INFINITY, 0u8);
        for j in 0..self.pair_rating.len() {
            let y: Vec<f64> = self.model.users[self.pair_user[j] as usize]
                .iter()
                .chain(&self.model.items[self.pair_item[j] as usize])
                .copied()
                .collect();
            let c = dot(&x, &y) / (nx * dot(&y, &y).sqrt());
            if c > best.0 {
                best = (c, self.pair_rating[j]);
            }
        }
        Ok(best.1)
    }
}
