use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::RatingOracle;
use crate::agents::{ObservedLow, ObservedState};
use crate::dataio::{
    outra_from_timestamp, MovieLens, RatingRecord, EDGE_ONLY_FEATURES, ZIP_REGIONS,
};
use crate::encoders::{DeviceFeatures, OutraFeatures, Vocab};
use crate::error::{Error, Result};
use crate::training::{Environment, SessionOutcome, SessionStart};

/// Names of user features that stay on the device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeFeatureMask(pub BTreeSet<String>);

impl Default for EdgeFeatureMask {
    fn default() -> Self {
        Self(EDGE_ONLY_FEATURES.iter().map(|s| s.to_string()).collect())
    }
}

impl EdgeFeatureMask {
    pub fn none() -> Self {
        Self(BTreeSet::new())
    }

    pub fn contains(&self, feature: &str) -> bool {
        self.0.contains(feature)
    }

    pub fn validate(&self) -> Result<()> {
        match self
            .0
            .iter()
            .find(|f| !EDGE_ONLY_FEATURES.contains(&f.as_str()))
        {
            Some(f) => Err(Error::Config(format!("unknown edge feature `{f}`"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Items by which the cloud view lags the edge view.
    pub delay_d: usize,
    /// Ratings at or above this count as clicks.
    pub click_threshold: u8,
    pub pool_size: usize,
    /// Evaluation rounds.
    pub rounds: usize,
    /// Earliest ratings of each user used as the starting history.
    pub seed_history: usize,
    /// Items per session `K`.
    pub session_len: usize,
    /// Length of the device sequence, including the trailing profile record.
    pub device_len: usize,
    pub mask: EdgeFeatureMask,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            delay_d: 6,
            click_threshold: 4,
            pool_size: 50,
            rounds: 50,
            seed_history: 12,
            session_len: 4,
            device_len: 12,
            mask: EdgeFeatureMask::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.session_len == 0 || self.pool_size < self.session_len {
            return Err(Error::Config(
                "pool must hold at least one session of K >= 1 items".into(),
            ));
        }
        if self.rounds == 0 || self.device_len == 0 {
            return Err(Error::Config(
                "rounds and device length must be positive".into(),
            ));
        }
        if !(1..=5).contains(&self.click_threshold) {
            return Err(Error::Config(
                "click threshold must be a rating in 1..=5".into(),
            ));
        }
        self.mask.validate()
    }
}

/// One exposed item. The edge fields are `None` when hidden from the viewer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub item: i64,
    pub rating: u8,
    pub clicked: bool,
    /// Index of the session the item was exposed in.
    pub session: usize,
    pub timestamp: i64,
    pub occupation: Option<i64>,
    pub zip_code: Option<i64>,
}

impl Interaction {
    pub fn feature_present(&self, feature: &str) -> bool {
        match feature {
            "occupation" => self.occupation.is_some(),
            "zip_code" => self.zip_code.is_some(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub user: i64,
    pub pool: Vec<i64>,
    /// Items exposed in the current session.
    pub exposed: Vec<i64>,
    ratings: Vec<u8>,
    /// Everything the user has been exposed to; append-only.
    pub history: Vec<Interaction>,
    /// Index of the current session.
    pub session: usize,
    pub clock: i64,
    open: bool,
}

impl SimState {
    /// Next selection step within the session.
    pub fn step(&self) -> usize {
        self.exposed.len()
    }

    pub fn is_open(&self) -> bool {
        self.open
    }
}

#[derive(Debug, Clone, Copy)]
struct Profile {
    occupation: i64,
    zip_code: i64,
}

/// Session clock advance per simulated session, in seconds.
const SESSION_GAP: i64 = 3600;

/// MovieLens-backed user simulator. Immutable; per-user state lives in
/// [`SimState`].
#[derive(Debug)]
pub struct Simulator {
    pub config: SimConfig,
    oracle: Arc<RatingOracle>,
    seeded: BTreeMap<i64, Vec<Interaction>>,
    profiles: BTreeMap<i64, Profile>,
    occupations: usize,
}

impl Simulator {
    /// Users with at least `seed_history` ratings take part; their earliest
    /// ratings form the starting history.
    pub fn new(ml: &MovieLens, oracle: Arc<RatingOracle>, config: SimConfig) -> Result<Self> {
        config.validate()?;
        let edge = ml.edge_ids();
        let mut by_user: BTreeMap<i64, Vec<RatingRecord>> = BTreeMap::new();
        for r in &ml.ratings {
            by_user.entry(r.user).or_default().push(*r);
        }
        let k = config.session_len;
        let mut seeded = BTreeMap::new();
        let mut profiles = BTreeMap::new();
        for (user, mut rs) in by_user {
            if rs.len() < config.seed_history || user as usize > oracle.num_users() {
                continue;
            }
            rs.sort_by_key(|r| (r.timestamp, r.item));
            let (zip_code, occupation) = edge.get(&user).copied().unwrap_or((0, 0));
            let history = rs[..config.seed_history]
                .iter()
                .enumerate()
                .map(|(i, r)| Interaction {
                    item: r.item,
                    rating: r.rating,
                    clicked: r.rating >= config.click_threshold,
                    session: i / k,
                    timestamp: r.timestamp,
                    occupation: Some(occupation),
                    zip_code: Some(zip_code),
                })
                .collect();
            seeded.insert(user, history);
            profiles.insert(
                user,
                Profile {
                    occupation,
                    zip_code,
                },
            );
        }
        if seeded.is_empty() {
            return Err(Error::Empty("simulated users"));
        }
        if oracle.num_items() < config.seed_history + config.pool_size {
            return Err(Error::Config(
                "too few items for the history and the candidate pool".into(),
            ));
        }
        Ok(Self {
            config,
            oracle,
            seeded,
            profiles,
            occupations: ml.occupation_ids().len(),
        })
    }

    pub fn oracle(&self) -> &RatingOracle {
        &self.oracle
    }

    pub fn users(&self) -> Vec<i64> {
        self.seeded.keys().copied().collect()
    }

    /// Vocabulary of the observations this simulator emits.
    pub fn vocab(&self) -> Vocab {
        let items = self.oracle.num_items() + 1;
        Vocab {
            users: self.oracle.num_users() + 1,
            items,
            hours: 24,
            days: 7,
            locations: 1,
            apps: items,
            districts: ZIP_REGIONS,
            segments: self.occupations + 1,
        }
    }

    pub fn env_reset(&self, user: i64) -> Result<SimState> {
        let history = self.seeded.get(&user).ok_or_else(|| Error::InvalidId {
            id: user,
            table: "simulated users".into(),
        })?;
        let k = self.config.session_len;
        Ok(SimState {
            user,
            pool: Vec::new(),
            exposed: Vec::new(),
            ratings: Vec::new(),
            history: history.clone(),
            session: history.len().div_ceil(k),
            clock: history.last().map_or(0, |i| i.timestamp) + SESSION_GAP,
            open: false,
        })
    }

    /// Opens a session with `pool_size` items drawn from those the user has
    /// not been exposed to.
    pub fn begin_session(&self, state: &mut SimState, rng: &mut ChaCha8Rng) -> Result<()> {
        if state.open {
            return Err(Error::InvalidState("session already open".into()));
        }
        let seen: HashSet<i64> = state.history.iter().map(|i| i.item).collect();
        let unseen: Vec<i64> = (1..=self.oracle.num_items() as i64)
            .filter(|i| !seen.contains(i))
            .collect();
        if unseen.len() < self.config.pool_size {
            return Err(Error::PoolExhausted);
        }
        state.pool = sample(rng, unseen.len(), self.config.pool_size)
            .into_iter()
            .map(|j| unseen[j])
            .collect();
        state.exposed.clear();
        state.ratings.clear();
        state.open = true;
        Ok(())
    }

    /// Exposes `item`; its oracle rating is recorded.
    pub fn env_step(&self, state: &mut SimState, item: i64) -> Result<u8> {
        if !state.open || state.exposed.len() >= self.config.session_len {
            return Err(Error::InvalidState("step after session end".into()));
        }
        if state.exposed.contains(&item) {
            return Err(Error::InvalidState(format!(
                "item {item} already exposed this session"
            )));
        }
        let rating = self.oracle.rating(state.user, item)?;
        state.exposed.push(item);
        state.ratings.push(rating);
        Ok(rating)
    }

    /// Closes a full session: clicks are ratings at or above the threshold
    /// and `r^h` is the click rate. Returns the clicks, `r^h` and the ratings.
    pub fn env_session_end(&self, state: &mut SimState) -> Result<(Vec<u8>, f64, Vec<u8>)> {
        let k = self.config.session_len;
        if !state.open || state.exposed.len() != k {
            return Err(Error::InvalidState(format!(
                "session end needs {k} exposed items, have {}",
                state.exposed.len()
            )));
        }
        let profile = self.profiles[&state.user];
        let clicks: Vec<u8> = state
            .ratings
            .iter()
            .map(|&r| u8::from(r >= self.config.click_threshold))
            .collect();
        for ((&item, &rating), &c) in state.exposed.iter().zip(&state.ratings).zip(&clicks) {
            state.history.push(Interaction {
                item,
                rating,
                clicked: c == 1,
                session: state.session,
                timestamp: state.clock,
                occupation: Some(profile.occupation),
                zip_code: Some(profile.zip_code),
            });
        }
        let reward = clicks.iter().map(|&c| c as f64).sum::<f64>() / k as f64;
        let ratings = std::mem::take(&mut state.ratings);
        state.open = false;
        state.session += 1;
        state.clock += SESSION_GAP;
        Ok((clicks, reward, ratings))
    }

    pub fn cloud_view(&self, state: &SimState) -> Vec<Interaction> {
        cloud_view(&state.history, self.config.delay_d, &self.config.mask)
    }

    /// Cross-session context at the session clock; location is not simulated.
    pub fn outra(&self, state: &SimState) -> OutraFeatures {
        outra_from_timestamp(state.clock)
    }

    /// The cloud's high-level observation: sessions of clicked items from the
    /// delayed view, empty sessions dropped.
    pub fn observe_high(&self, state: &SimState) -> ObservedState {
        ObservedState {
            user: state.user,
            history: clicked_sessions(&self.cloud_view(state)),
            outra: self.outra(state),
        }
    }

    /// The actor's observation. On the edge it sees the full sequence and the
    /// user profile; with `edge = false` it gets the cloud view and zeroed
    /// profile ids instead.
    pub fn observe_low(&self, state: &SimState, edge: bool) -> ObservedLow {
        let (view, profile) = if edge {
            (edge_view(&state.history), self.profiles[&state.user])
        } else {
            (
                self.cloud_view(state),
                Profile {
                    occupation: 0,
                    zip_code: 0,
                },
            )
        };
        ObservedLow {
            user: state.user,
            outra: self.outra(state),
            device: device_sequence(
                &view,
                self.config.device_len,
                profile.zip_code,
                profile.occupation,
            ),
        }
    }
}

impl Simulator {
    /// Observations and candidates of the open session in `state`.
    pub fn session_start(&self, state: &SimState, view: ActorView) -> SessionStart {
        SessionStart {
            high: self.observe_high(state),
            low: self.observe_low(state, view == ActorView::Edge),
            candidates: state.pool.clone(),
        }
    }
}

/// The full interaction history as seen on the device.
pub fn edge_view(history: &[Interaction]) -> Vec<Interaction> {
    history.to_vec()
}

/// The history without its most recent `d` items, with masked fields removed.
pub fn cloud_view(history: &[Interaction], d: usize, mask: &EdgeFeatureMask) -> Vec<Interaction> {
    let n = history.len().saturating_sub(d);
    history[..n]
        .iter()
        .map(|i| Interaction {
            occupation: if mask.contains("occupation") {
                None
            } else {
                i.occupation
            },
            zip_code: if mask.contains("zip_code") {
                None
            } else {
                i.zip_code
            },
            ..i.clone()
        })
        .collect()
}

/// Item ids of clicked interactions grouped by session, in order.
pub fn clicked_sessions(view: &[Interaction]) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = Vec::new();
    let mut current = None;
    for i in view.iter().filter(|i| i.clicked) {
        if current != Some(i.session) {
            out.push(Vec::new());
            current = Some(i.session);
        }
        out.last_mut().expect("pushed").push(i.item);
    }
    out
}

/// The last `len - 1` clicked items as app records (stay = rating - 3),
/// followed by one profile record carrying the zip region and occupation.
pub fn device_sequence(
    view: &[Interaction],
    len: usize,
    district: i64,
    segment: i64,
) -> Vec<DeviceFeatures> {
    let clicked: Vec<&Interaction> = view.iter().filter(|i| i.clicked).collect();
    let keep = len.saturating_sub(1).min(clicked.len());
    let mut seq: Vec<DeviceFeatures> = clicked[clicked.len() - keep..]
        .iter()
        .map(|i| DeviceFeatures {
            app_id: i.item,
            stay_time: (i.rating as f64 - 3.0).max(0.0),
            district_id: 0,
            segment_id: 0,
        })
        .collect();
    seq.push(DeviceFeatures {
        app_id: 0,
        stay_time: 0.0,
        district_id: district,
        segment_id: segment,
    });
    seq
}

/// Which view the actor is fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActorView {
    #[default]
    Edge,
    /// Cloud-only features: delayed sequence and no profile ids.
    Cloud,
}

/// [`Environment`] adapter over a shared simulator for online training.
#[derive(Debug)]
pub struct SimEnv {
    sim: Arc<Simulator>,
    view: ActorView,
    state: Option<SimState>,
    rng: ChaCha8Rng,
    /// Oracle ratings of every closed session.
    pub ratings: Vec<u8>,
}

impl SimEnv {
    pub fn new(sim: Arc<Simulator>, view: ActorView, seed: u64) -> Self {
        Self {
            sim,
            view,
            state: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ratings: Vec::new(),
        }
    }

    pub fn state(&self) -> Option<&SimState> {
        self.state.as_ref()
    }

    fn state_mut(&mut self) -> Result<&mut SimState> {
        self.state
            .as_mut()
            .ok_or_else(|| Error::InvalidState("no user; call reset first".into()))
    }
}

impl Environment for SimEnv {
    fn users(&self) -> Vec<i64> {
        self.sim.users()
    }

    fn reset(&mut self, user: i64) -> Result<()> {
        self.state = Some(self.sim.env_reset(user)?);
        Ok(())
    }

    fn begin_session(&mut self) -> Result<SessionStart> {
        let sim = Arc::clone(&self.sim);
        let view = self.view;
        let mut state = self
            .state
            .take()
            .ok_or_else(|| Error::InvalidState("no user; call reset first".into()))?;
        let res = sim.begin_session(&mut state, &mut self.rng);
        self.state = Some(state);
        res?;
        Ok(sim.session_start(self.state.as_ref().expect("just set"), view))
    }

    fn step(&mut self, item: i64) -> Result<()> {
        let sim = Arc::clone(&self.sim);
        sim.env_step(self.state_mut()?, item).map(|_| ())
    }

    fn end_session(&mut self) -> Result<SessionOutcome> {
        let sim = Arc::clone(&self.sim);
        let (clicks, reward, ratings) = sim.env_session_end(self.state_mut()?)?;
        self.ratings.extend(ratings);
        Ok(SessionOutcome { clicks, reward })
    }
}
