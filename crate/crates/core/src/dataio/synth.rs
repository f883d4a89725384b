use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::log::SessionLogRecord;
use super::sessionize::link_next;
use crate::agents::ObservedState;
use crate::encoders::{DeviceFeatures, OutraFeatures, Vocab};
use crate::error::{Error, Result};
use crate::numcore::tensor::{dot, sigmoid};

/// Generator settings. Item and user ids start at 1; app ids reuse item ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub sessions: usize,
    pub k: usize,
    pub latent_dim: usize,
    /// Multiplies the whole click logit; 0 gives coin-flip clicks.
    pub signal_strength: f64,
    /// Weight of the user-item affinity inside the logit.
    pub preference_scale: f64,
    /// Weight of the affinity between the previous item and the current one,
    /// active when the previous item was clicked.
    pub device_scale: f64,
    /// Constant logit offset, so that CTR grows with the signal strength.
    pub bias: f64,
    pub locations: usize,
    pub districts: usize,
    pub segments: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 500,
            items: 300,
            sessions: 10_000,
            k: 6,
            latent_dim: 8,
            signal_strength: 1.0,
            preference_scale: 4.0,
            device_scale: 1.0,
            bias: 1.0,
            locations: 8,
            districts: 10,
            segments: 8,
            seed: 0,
        }
    }
}

/// Generated logs plus the ground truth used to draw clicks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthData {
    pub config: SynthConfig,
    pub records: Vec<SessionLogRecord>,
    /// Row `id` holds the vector of user `id`; row 0 is unused.
    pub user_vectors: Vec<Vec<f64>>,
    pub item_vectors: Vec<Vec<f64>>,
    pub district_bias: Vec<f64>,
}

impl SynthData {
    pub fn vocab(&self) -> Vocab {
        let c = &self.config;
        Vocab {
            users: c.users + 1,
            items: c.items + 1,
            hours: 24,
            days: 7,
            locations: c.locations,
            apps: c.items + 1,
            districts: c.districts + 1,
            segments: c.segments + 1,
        }
    }

    /// The click logit used by the generator for `item` shown to `user` with
    /// device record `m`.
    pub fn logit(&self, user: i64, item: i64, m: &DeviceFeatures) -> f64 {
        let c = &self.config;
        let norm = (c.latent_dim as f64).sqrt();
        let pref = dot(
            &self.user_vectors[user as usize],
            &self.item_vectors[item as usize],
        ) / norm;
        let carry = if m.app_id > 0 {
            m.stay_time
                * dot(
                    &self.item_vectors[m.app_id as usize],
                    &self.item_vectors[item as usize],
                )
                / norm
        } else {
            0.0
        };
        let district = self
            .district_bias
            .get(m.district_id as usize)
            .copied()
            .unwrap_or(0.0);
        c.signal_strength * (c.preference_scale * pref + c.device_scale * carry + district + c.bias)
    }
}

/// Draws sessions for random users. Each session shows `k` distinct random
/// items; item `j` is clicked with probability `sigmoid(logit)`, and the
/// device record `m_j` describes the user's previous impression.
pub fn synth_sessions(config: &SynthConfig) -> Result<SynthData> {
    if !(0.0..=1.0).contains(&config.signal_strength) {
        return Err(Error::Config("signal strength must lie in [0, 1]".into()));
    }
    if config.users == 0 || config.k == 0 || config.k > config.items || config.latent_dim == 0 {
        return Err(Error::Config(
            "synthetic data needs users, items >= k and a latent size".into(),
        ));
    }
    if config.locations == 0 || config.districts == 0 || config.segments == 0 {
        return Err(Error::Config(
            "synthetic vocabularies must be non-empty".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let vectors = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        let mut v = vec![vec![0.0; config.latent_dim]];
        v.extend((0..n).map(|_| (0..config.latent_dim).map(|_| normal.sample(rng)).collect()));
        v
    };
    let user_vectors = vectors(config.users, &mut rng);
    let item_vectors = vectors(config.items, &mut rng);
    let mut district_bias = vec![0.0];
    district_bias.extend((0..config.districts).map(|_| 0.5 * normal.sample(&mut rng)));
    let profile: Vec<(i64, i64)> = (0..=config.users)
        .map(|_| {
            (
                rng.random_range(1..=config.districts as i64),
                rng.random_range(1..=config.segments as i64),
            )
        })
        .collect();

    let mut data = SynthData {
        config: config.clone(),
        records: Vec::with_capacity(config.sessions),
        user_vectors,
        item_vectors,
        district_bias,
    };
    let mut history: Vec<Vec<Vec<i64>>> = vec![Vec::new(); config.users + 1];
    let mut last: Vec<(i64, u8)> = vec![(0, 0); config.users + 1];
    let mut owner = Vec::with_capacity(config.sessions);
    for _ in 0..config.sessions {
        let user = rng.random_range(1..=config.users as i64);
        let u = user as usize;
        let outra = OutraFeatures {
            hour: rng.random_range(0..24),
            day: rng.random_range(0..7),
            workday: false,
            location: rng.random_range(0..config.locations as u32),
        };
        let outra = OutraFeatures {
            workday: outra.day < 5,
            ..outra
        };
        let action: Vec<i64> = sample(&mut rng, config.items, config.k)
            .into_iter()
            .map(|i| i as i64 + 1)
            .collect();
        let (district, segment) = profile[u];
        let mut device = Vec::with_capacity(config.k);
        let mut clicks = Vec::with_capacity(config.k);
        for &item in &action {
            let (prev, prev_click) = last[u];
            let m = DeviceFeatures {
                app_id: prev,
                stay_time: prev_click as f64,
                district_id: district,
                segment_id: segment,
            };
            let p = sigmoid(data.logit(user, item, &m));
            let c = u8::from(rng.random::<f64>() < p);
            device.push(m);
            clicks.push(c);
            last[u] = (item, c);
        }
        let reward = clicks.iter().map(|&c| c as f64).sum::<f64>() / config.k as f64;
        data.records.push(SessionLogRecord {
            state: ObservedState {
                user,
                history: history[u].clone(),
                outra,
            },
            action: action.clone(),
            clicks,
            reward,
            device,
            next_state: None,
            next_action: None,
        });
        history[u].push(action);
        owner.push(u);
    }
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); config.users + 1];
    for (i, &u) in owner.iter().enumerate() {
        per_user[u].push(i);
    }
    for idx in per_user {
        let mut chain: Vec<SessionLogRecord> =
            idx.iter().map(|&i| data.records[i].clone()).collect();
        link_next(&mut chain);
        for (i, r) in idx.into_iter().zip(chain) {
            data.records[i] = r;
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(signal: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            users: 50,
            items: 60,
            sessions: 2000,
            signal_strength: signal,
            seed,
            ..SynthConfig::default()
        }
    }

    fn ctr(d: &SynthData) -> f64 {
        let n: usize = d.records.iter().map(|r| r.clicks.len()).sum();
        d.records
            .iter()
            .flat_map(|r| &r.clicks)
            .map(|&c| c as f64)
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn records_are_valid_and_linked() {
        let d = synth_sessions(&small(1.0, 1)).unwrap();
        assert_eq!(d.records.len(), 2000);
        let vocab = d.vocab();
        vocab.validate().unwrap();
        for r in &d.records {
            r.validate(6).unwrap();
            let mut a = r.action.clone();
            a.sort();
            a.dedup();
            assert_eq!(a.len(), 6);
            if let Some(next) = &r.next_state {
                assert_eq!(next.user, r.state.user);
                assert_eq!(next.history.last(), Some(&r.action));
            }
        }
    }

    #[test]
    fn no_signal_gives_coin_flips() {
        let d = synth_sessions(&small(0.0, 2)).unwrap();
        assert!((ctr(&d) - 0.5).abs() < 0.02, "{}", ctr(&d));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = synth_sessions(&small(0.7, 3)).unwrap();
        let b = synth_sessions(&small(0.7, 3)).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn invalid_signal_rejected() {
        assert!(synth_sessions(&small(1.5, 0)).is_err());
        assert!(synth_sessions(&small(-0.1, 0)).is_err());
    }

    #[test]
    fn ctr_grows_with_signal() {
        for seed in 0..5 {
            let c: Vec<f64> = [0.0, 0.5, 1.0]
                .iter()
                .map(|&s| {
                    ctr(&synth_sessions(&SynthConfig {
                        sessions: 5000,
                        ..small(s, seed)
                    })
                    .unwrap())
                })
                .collect();
            assert!(c[0] < c[1] && c[1] < c[2], "seed {seed}: {c:?}");
        }
    }
}
