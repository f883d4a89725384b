use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Ablation, Profile, RunConfig};
use super::eval::{baseline_random, eval_auc, eval_srating, ActorPolicy, CriticPolicy};
use super::report::{median, MetricsReport};
use crate::agents::{AgentParams, Agents};
use crate::dataio::{load_movielens, read_log, synth_sessions, MovieLens, SessionLogRecord};
use crate::encoders::DeviceFeatures;
use crate::envsim::{pretrain_mf, ActorView, MfConfig, RatingOracle, SimConfig, SimEnv, Simulator};
use crate::error::{Error, Result};
use crate::training::{
    supervised_warmup, train_offline, train_online, Selector, TrainSummary, Trainer,
};

/// Data shared by every simulator run of one config: the ratings, the
/// oracle and the agents' frozen item table.
#[derive(Debug)]
pub struct SimWorld {
    pub ml: MovieLens,
    pub oracle: Arc<RatingOracle>,
    pub item_rows: Vec<Vec<f64>>,
    pub oracle_holdout_rmse: Option<f64>,
}

impl SimWorld {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let ml = load_movielens(&cfg.data.movielens)?;
        Self::from_movielens(ml, cfg)
    }

    pub fn from_movielens(ml: MovieLens, cfg: &RunConfig) -> Result<Self> {
        let oracle_fit = pretrain_mf(&ml.ratings, &cfg.oracle_mf)?;
        let item_fit = pretrain_mf(
            &ml.ratings,
            &MfConfig {
                dim: cfg.agent.dim,
                ..cfg.item_mf.clone()
            },
        )?;
        let oracle = Arc::new(RatingOracle::new(&ml.ratings, oracle_fit.model)?);
        Ok(Self {
            ml,
            oracle,
            item_rows: item_fit.model.centered_items(),
            oracle_holdout_rmse: oracle_fit.holdout_rmse,
        })
    }

    pub fn simulator(&self, sim: &SimConfig) -> Result<Arc<Simulator>> {
        Ok(Arc::new(Simulator::new(
            &self.ml,
            Arc::clone(&self.oracle),
            sim.clone(),
        )?))
    }
}

/// Agents trained online in the simulator, with how they select items.
pub struct SimAgent {
    pub agents: Agents,
    pub params: AgentParams,
    pub ablation: Ablation,
    pub summary: TrainSummary,
    pub trainer_metrics: Vec<crate::training::MetricRecord>,
}

impl SimAgent {
    pub fn view(&self) -> ActorView {
        if self.ablation.no_edge {
            ActorView::Cloud
        } else {
            ActorView::Edge
        }
    }

    pub fn evaluate(&self, sim: &Simulator, rounds: usize, seed: u64) -> Result<MetricsReport> {
        if self.ablation.no_actor {
            eval_srating(
                &mut CriticPolicy::new(&self.agents, &self.params),
                sim,
                rounds,
                seed,
            )
        } else {
            let mut p = ActorPolicy {
                agents: &self.agents,
                params: &self.params,
                view: self.view(),
            };
            eval_srating(&mut p, sim, rounds, seed)
        }
    }
}

/// Builds agents over the simulator's vocabulary and trains them online
/// under `ablation`.
pub fn train_sim_agent(
    world: &SimWorld,
    sim: &Arc<Simulator>,
    cfg: &RunConfig,
    ablation: Ablation,
) -> Result<SimAgent> {
    ablation.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows = Some(world.item_rows.as_slice());
    let (agents, params) = Agents::build(&cfg.agent, &sim.vocab(), &mut rng, rows, rows)?;
    let mut train = cfg.train.clone();
    train.seed = cfg.seed;
    train.use_critic = !ablation.no_critic;
    let mut trainer = Trainer::new(agents, params, train)?;
    let view = if ablation.no_edge {
        ActorView::Cloud
    } else {
        ActorView::Edge
    };
    let mut env = SimEnv::new(Arc::clone(sim), view, cfg.seed ^ 0xe4f);
    let selector = if ablation.no_actor {
        Selector::CriticArgmax
    } else {
        Selector::Actor
    };
    let summary = train_online(&mut trainer, &mut env, selector)?;
    Ok(SimAgent {
        agents: trainer.agents,
        params: trainer.params,
        ablation,
        summary,
        trainer_metrics: trainer.metrics,
    })
}

/// Seeds `seed, seed + 1, ...` of a multi-seed comparison.
pub fn seed_list(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.seeds as u64)
        .map(|i| cfg.seed.wrapping_add(i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: String,
    /// Report per training seed, in seed order.
    pub reports: Vec<MetricsReport>,
    pub median: f64,
}

impl VariantResult {
    fn new(variant: &str, reports: Vec<MetricsReport>) -> Self {
        let means: Vec<f64> = reports.iter().map(|r| r.mean).collect();
        Self {
            variant: variant.to_string(),
            median: median(&means).unwrap_or(f64::NAN),
            reports,
        }
    }
}

/// Runs `f` over `items` on at most `MCCHRL_THREADS` workers, keeping order.
pub fn par_map<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<R> + Sync + Send,
) -> Result<Vec<R>> {
    let threads = std::env::var("MCCHRL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// The variants compared by an ablation run: the full model plus every
/// flagged ablation, or all three single ablations when none is flagged.
pub fn ablation_variants(flags: &Ablation) -> Vec<Ablation> {
    let singles = [
        Ablation {
            no_edge: true,
            ..Ablation::default()
        },
        Ablation {
            no_actor: true,
            ..Ablation::default()
        },
        Ablation {
            no_critic: true,
            ..Ablation::default()
        },
    ];
    let mut out = vec![Ablation::default()];
    if flags.is_full() {
        out.extend(singles);
    } else {
        out.push(*flags);
    }
    out
}

/// Trains and scores the full model, the ablations and the random baseline
/// over `cfg.seeds` seeds (simulator: S-rating; dataset: D-AUC).
pub fn run_ablation(cfg: &RunConfig) -> Result<Vec<VariantResult>> {
    cfg.validate()?;
    if cfg.profile == Profile::Simulator {
        return run_sim_ablation(&SimWorld::load(cfg)?, cfg);
    }
    let fp = cfg.fingerprint()?;
    let seeds = seed_list(cfg);
    let mut results = Vec::new();
    for a in ablation_variants(&cfg.ablation) {
        if a.no_actor {
            continue;
        }
        let reports = par_map(&seeds, |&s| {
            let c = cfg.with_seed(s);
            let (train, test) = dataset_split(&c)?;
            let (agents, params, _) = train_dataset_agent(&c, &train, a)?;
            let test = if a.no_edge { strip_device(&test) } else { test };
            eval_auc(&agents, &params, &test).map(|r| with_fp(r, &fp))
        })?;
        results.push(VariantResult::new(&a.name(), reports));
    }
    Ok(results)
}

/// Simulator ablation over an already loaded world.
pub fn run_sim_ablation(world: &SimWorld, cfg: &RunConfig) -> Result<Vec<VariantResult>> {
    cfg.validate()?;
    let fp = cfg.fingerprint()?;
    let variants = ablation_variants(&cfg.ablation);
    let seeds = seed_list(cfg);
    let mut results = Vec::new();
    let sim = world.simulator(&cfg.sim)?;
    let random: Vec<MetricsReport> = seeds
        .iter()
        .map(|&s| baseline_random(&sim, cfg.sim.rounds, s).map(|r| with_fp(r, &fp)))
        .collect::<Result<_>>()?;
    results.push(VariantResult::new("random", random));
    let jobs: Vec<(Ablation, u64)> = variants
        .iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let reports = par_map(&jobs, |&(a, s)| {
        let c = cfg.with_seed(s);
        let agent = train_sim_agent(world, &sim, &c, a)?;
        agent
            .evaluate(&sim, c.sim.rounds, s)
            .map(|r| with_fp(r, &fp))
    })?;
    for (i, a) in variants.iter().enumerate() {
        let chunk = reports[i * seeds.len()..(i + 1) * seeds.len()].to_vec();
        results.push(VariantResult::new(&a.name(), chunk));
    }
    Ok(results)
}

fn with_fp(mut r: MetricsReport, fp: &str) -> MetricsReport {
    r.fingerprint = fp.to_string();
    r
}

/// Train and test logs of the dataset profile: the configured files, or a
/// synthetic log split by position.
pub fn dataset_split(cfg: &RunConfig) -> Result<(Vec<SessionLogRecord>, Vec<SessionLogRecord>)> {
    if let Some(path) = &cfg.data.train_log {
        let train = read_log(path)?.records;
        let test = match &cfg.data.test_log {
            Some(p) => read_log(p)?.records,
            None => return Err(Error::Config("a train log needs a test log".into())),
        };
        return Ok((train, test));
    }
    let data = synth_sessions(&cfg.synth)?;
    let n_test = ((data.records.len() as f64) * cfg.test_fraction).round() as usize;
    let mut train = data.records;
    let test = train.split_off(train.len() - n_test);
    Ok((train, test))
}

/// Device records with every on-device field cleared.
pub fn strip_device(records: &[SessionLogRecord]) -> Vec<SessionLogRecord> {
    let blank = DeviceFeatures {
        app_id: 0,
        stay_time: 0.0,
        district_id: 0,
        segment_id: 0,
    };
    records
        .iter()
        .map(|r| SessionLogRecord {
            device: vec![blank; r.device.len()],
            ..r.clone()
        })
        .collect()
}

/// Vocabulary large enough for every id in `records`.
pub fn log_vocab(records: &[SessionLogRecord], cfg: &RunConfig) -> crate::encoders::Vocab {
    let mut v = crate::encoders::Vocab {
        users: cfg.synth.users + 1,
        items: cfg.synth.items + 1,
        hours: 24,
        days: 7,
        locations: cfg.synth.locations,
        apps: cfg.synth.items + 1,
        districts: cfg.synth.districts + 1,
        segments: cfg.synth.segments + 1,
    };
    for r in records {
        v.users = v.users.max(r.state.user as usize + 1);
        for &i in r.action.iter().chain(r.state.history.iter().flatten()) {
            v.items = v.items.max(i as usize + 1);
        }
        v.locations = v.locations.max(r.state.outra.location as usize + 1);
        for d in &r.device {
            v.apps = v.apps.max(d.app_id as usize + 1);
            v.districts = v.districts.max(d.district_id as usize + 1);
            v.segments = v.segments.max(d.segment_id as usize + 1);
        }
    }
    v
}

/// Supervised warmup then offline training on `train`.
pub fn train_dataset_agent(
    cfg: &RunConfig,
    train: &[SessionLogRecord],
    ablation: Ablation,
) -> Result<(Agents, AgentParams, Vec<f64>)> {
    ablation.validate()?;
    if ablation.no_actor {
        return Err(Error::Config(
            "the dataset profile scores the actor; no_actor does not apply".into(),
        ));
    }
    let records = if ablation.no_edge {
        strip_device(train)
    } else {
        train.to_vec()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (agents, params) =
        Agents::build(&cfg.agent, &log_vocab(&records, cfg), &mut rng, None, None)?;
    let mut tc = cfg.train.clone();
    tc.seed = cfg.seed;
    tc.use_critic = !ablation.no_critic;
    let mut trainer = Trainer::new(agents, params, tc)?;
    let losses = supervised_warmup(&mut trainer, &records, cfg.train.warmup_epochs)?;
    train_offline(&mut trainer, &records)?;
    Ok((trainer.agents, trainer.params, losses))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub latency: usize,
    pub seq_len: usize,
    pub seed: u64,
    pub s_rating: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub fingerprint: String,
    pub points: Vec<SweepPoint>,
    /// `(N^l, parameter count of the agents)`.
    pub params: Vec<(usize, usize)>,
}

impl SweepReport {
    /// Median S-rating per `(latency, seq_len)` over seeds.
    pub fn medians(&self) -> Vec<(usize, usize, f64)> {
        let mut keys: Vec<(usize, usize)> =
            self.points.iter().map(|p| (p.latency, p.seq_len)).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|(d, n)| {
                let v: Vec<f64> = self
                    .points
                    .iter()
                    .filter(|p| p.latency == d && p.seq_len == n)
                    .map(|p| p.s_rating)
                    .collect();
                (d, n, median(&v).unwrap_or(f64::NAN))
            })
            .collect()
    }

    pub fn latency_csv(&self) -> String {
        let mut s = String::from("latency,seq_len,seed,s_rating,stderr\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                p.latency, p.seq_len, p.seed, p.s_rating, p.stderr
            ));
        }
        s
    }

    pub fn params_csv(&self) -> String {
        let mut s = String::from("seq_len,parameters\n");
        for (n, c) in &self.params {
            s.push_str(&format!("{n},{c}\n"));
        }
        s
    }
}

/// Total parameter count of freshly built agents with history length `n_l`.
pub fn parameter_count(
    cfg: &RunConfig,
    vocab: &crate::encoders::Vocab,
    n_l: usize,
) -> Result<usize> {
    let mut agent = cfg.agent.clone();
    agent.history_len = n_l;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, p) = Agents::build(&agent, vocab, &mut rng, None, None)?;
    Ok([&p.shared, &p.critic, &p.actor]
        .iter()
        .map(|s| s.params().map(|q| q.value().values().len()).sum::<usize>())
        .sum())
}

/// One full train and evaluation per `(latency, N^l, seed)`.
pub fn sweep_sensitivity(
    cfg: &RunConfig,
    latencies: &[usize],
    seq_lengths: &[usize],
) -> Result<SweepReport> {
    check_sweep(cfg, latencies, seq_lengths)?;
    sweep_sensitivity_in(&SimWorld::load(cfg)?, cfg, latencies, seq_lengths)
}

fn check_sweep(cfg: &RunConfig, latencies: &[usize], seq_lengths: &[usize]) -> Result<()> {
    cfg.validate()?;
    if latencies.is_empty() || seq_lengths.is_empty() {
        return Err(Error::Config("sweep grids must be non-empty".into()));
    }
    if cfg.profile != Profile::Simulator {
        return Err(Error::Config(
            "the sensitivity sweep runs on the simulator profile".into(),
        ));
    }
    Ok(())
}

/// [`sweep_sensitivity`] over an already loaded world.
pub fn sweep_sensitivity_in(
    world: &SimWorld,
    cfg: &RunConfig,
    latencies: &[usize],
    seq_lengths: &[usize],
) -> Result<SweepReport> {
    check_sweep(cfg, latencies, seq_lengths)?;
    let seeds = seed_list(cfg);
    let mut jobs = Vec::new();
    for &d in latencies {
        for &n in seq_lengths {
            for &s in &seeds {
                jobs.push((d, n, s));
            }
        }
    }
    let vocab = world.simulator(&cfg.sim)?.vocab();
    let points = par_map(&jobs, |&(d, n, s)| {
        let mut c = cfg.with_seed(s);
        c.sim.delay_d = d;
        c.sim.device_len = n;
        c.agent.history_len = n;
        let sim = world.simulator(&c.sim)?;
        let agent = train_sim_agent(&world, &sim, &c, c.ablation)?;
        let r = agent.evaluate(&sim, c.sim.rounds, s)?;
        Ok(SweepPoint {
            latency: d,
            seq_len: n,
            seed: s,
            s_rating: r.mean,
            stderr: r.stderr,
        })
    })?;
    let params = seq_lengths
        .iter()
        .map(|&n| Ok((n, parameter_count(cfg, &vocab, n)?)))
        .collect::<Result<_>>()?;
    Ok(SweepReport {
        fingerprint: cfg.fingerprint()?,
        points,
        params,
    })
}
