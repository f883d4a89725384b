//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. `MCCHRL_CRITERIA=1,2,5` runs a subset.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use mcchrl::agents::{ActorConfig, AgentConfig, Agents, CriticConfig, HighState, ObservedState};
use mcchrl::dataio::SessionLogRecord;
use mcchrl::encoders::{DeviceFeatures, OutraFeatures, SessionEmbedding, Vocab};
use mcchrl::envsim::{cloud_view, ActorView, EdgeFeatureMask};
use mcchrl::harness::{
    auc, baseline_random, dataset_split, eval_auc, median, par_map, seed_list,
    sweep_sensitivity_in, train_dataset_agent, train_sim_agent, Ablation, Profile, RunConfig,
    SimWorld,
};
use mcchrl::numcore::gradcheck::{grad_check, grad_check_store, random_direction};
use mcchrl::numcore::tensor::dot;
use mcchrl::numcore::{Activation, FmLayer, GruCell, Linear, ParamStore, TargetAttention};
use mcchrl::training::{soft_update, train_offline, ReplayBuffer, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn movielens_dir() -> PathBuf {
    repo_root().join("data/ml-100k")
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mcchrl(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mcchrl"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn sim_config() -> RunConfig {
    let mut cfg = RunConfig::for_profile(Profile::Simulator);
    cfg.data.movielens = movielens_dir();
    cfg
}

// ---------------------------------------------------------------------------

fn dataset_fidelity() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = movielens_dir();
    std::fs::write(
        dir.path().join("run.toml"),
        format!(
            "profile = \"simulator\"\n[data]\nmovielens = {:?}\n",
            data.display().to_string()
        ),
    )
    .map_err(|e| e.to_string())?;
    let t = Instant::now();
    mcchrl(
        &["--config", "run.toml", "--out", "out", "stats"],
        dir.path(),
    )?;
    let secs = t.elapsed().as_secs_f64();
    let text =
        std::fs::read_to_string(dir.path().join("out/stats.json")).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let counts: Vec<u64> = v["rating_counts"]
        .as_array()
        .ok_or("no rating counts")?
        .iter()
        .filter_map(|c| c.as_u64())
        .collect();
    let mean = v["mean_rating"].as_f64().ok_or("no mean rating")?;
    let ok = v["impressions"] == 100_000
        && v["users"] == 943
        && counts == [6110, 11370, 27145, 34174, 21201]
        && (mean - 3.53).abs() <= 0.005
        && secs < 10.0;
    ensure(
        ok,
        format!(
            "impressions {} users {} counts {counts:?} mean {mean:.4} in {secs:.2} s",
            v["impressions"], v["users"]
        ),
    )
}

// ---------------------------------------------------------------------------

fn small_agents(seed: u64) -> (Agents, mcchrl::agents::AgentParams) {
    let vocab = Vocab {
        users: 6,
        items: 20,
        hours: 24,
        days: 7,
        locations: 3,
        apps: 20,
        districts: 4,
        segments: 5,
    };
    let cfg = AgentConfig {
        dim: 4,
        session_len: 3,
        history_len: 4,
        critic: CriticConfig {
            hidden: vec![5, 1],
            projection: 4,
            heads: 2,
        },
        actor: ActorConfig {
            hidden: vec![6],
            activation: Activation::Tanh,
            output_activation: Activation::Tanh,
            device_input: 3,
            device_latent: 2,
            zero_output: false,
            aligned_device: false,
        },
        aligned_sre: false,
    };
    Agents::build(
        &cfg,
        &vocab,
        &mut ChaCha8Rng::seed_from_u64(seed),
        None,
        None,
    )
    .unwrap()
}

fn dev(app: i64, stay: f64) -> DeviceFeatures {
    DeviceFeatures {
        app_id: app,
        stay_time: stay,
        district_id: 1,
        segment_id: 2,
    }
}

fn numerical_core() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let probes = 10;
    let mut worst = [0.0f64; 6];

    for _ in 0..probes {
        let mut s = ParamStore::new();
        let l = Linear::new(&mut s, &mut rng, "l", 5, 3).unwrap();
        let x = random_direction(&mut rng, 5);
        let c = random_direction(&mut rng, 3);
        let e = grad_check_store(
            &mut s,
            &x,
            1e-5,
            |s, x| Ok(dot(&l.forward(s, x)?, &c)),
            |s, x| Ok(l.backward(s, x, &c)),
        )
        .unwrap();
        worst[0] = worst[0].max(e);
    }

    for _ in 0..probes {
        let mut s = ParamStore::new();
        let cell = GruCell::new(&mut s, &mut rng, "g", 3, 2).unwrap();
        let hx = random_direction(&mut rng, 5);
        let c = random_direction(&mut rng, 3);
        let e = grad_check_store(
            &mut s,
            &hx,
            1e-6,
            |s, v| Ok(dot(&cell.forward(s, &v[..3], &v[3..])?, &c)),
            |s, v| {
                let (_, cache) = cell.forward_cached(s, &v[..3], &v[3..])?;
                let (dh, dx) = cell.backward(s, &cache, &c);
                Ok(dh.into_iter().chain(dx).collect())
            },
        )
        .unwrap();
        worst[1] = worst[1].max(e);
    }

    for probe in 0..probes {
        let (n, dim, heads) = (1 + probe % 4, 6, 1 + probe % 3);
        let att = TargetAttention::new(dim, heads).unwrap();
        let x = random_direction(&mut rng, (n + 1) * dim);
        let c = random_direction(&mut rng, dim);
        let f = |v: &[f64]| {
            let hist: Vec<&[f64]> = v[dim..].chunks(dim).collect();
            dot(&att.forward(&hist, &v[..dim]).unwrap(), &c)
        };
        let hist: Vec<&[f64]> = x[dim..].chunks(dim).collect();
        let (_, cache) = att.forward_cached(&hist, &x[..dim]).unwrap();
        let (dh, dt) = att.backward(&hist, &x[..dim], &cache, &c);
        let analytic: Vec<f64> = dt.into_iter().chain(dh.concat()).collect();
        worst[2] = worst[2].max(grad_check(f, &x, &analytic, 1e-6));
    }

    for _ in 0..probes {
        let mut s = ParamStore::new();
        let fm = FmLayer::new(&mut s, &mut rng, "fm", 3, 4, 5).unwrap();
        let x = random_direction(&mut rng, 12);
        let c = random_direction(&mut rng, fm.output());
        let e = grad_check_store(
            &mut s,
            &x,
            1e-6,
            |s, v| {
                let f: Vec<&[f64]> = v.chunks(4).collect();
                Ok(dot(&fm.forward(s, &f)?, &c))
            },
            |s, v| {
                let f: Vec<&[f64]> = v.chunks(4).collect();
                Ok(fm.backward(s, &f, &c).concat())
            },
        )
        .unwrap();
        worst[3] = worst[3].max(e);
    }

    let (agents, mut p) = small_agents(3);
    for _ in 0..probes {
        let n = rng.random_range(0..4);
        let history: Vec<Vec<f64>> = (0..n).map(|_| random_direction(&mut rng, 4)).collect();
        let x = random_direction(&mut rng, 12);
        let build = |v: &[f64]| HighState {
            u: v[4..8].to_vec(),
            history: history.clone(),
            c_o: v[8..].to_vec(),
        };
        let e = grad_check_store(
            &mut p.critic,
            &x,
            1e-6,
            |st, v| agents.critic.q(st, &build(v), &v[..4]),
            |st, v| {
                let s = build(v);
                let (_, cache) = agents.critic.forward_cached(st, &s, &v[..4])?;
                let g = agents.critic.backward(st, &s, &cache, 1.0);
                Ok([g.action, g.u, g.c_o].concat())
            },
        )
        .unwrap();
        worst[4] = worst[4].max(e);
    }

    let seq = vec![dev(1, 0.5), dev(7, 0.0), dev(3, 2.0)];
    for _ in 0..probes {
        let x = random_direction(&mut rng, 12);
        let c = random_direction(&mut rng, 4);
        let e = grad_check_store(
            &mut p.actor,
            &x,
            1e-6,
            |st, v| {
                Ok(dot(
                    &agents.actor.forward(st, &v[..4], &v[4..8], &v[8..], &seq)?,
                    &c,
                ))
            },
            |st, v| {
                let (_, cache) =
                    agents
                        .actor
                        .forward_cached(st, &v[..4], &v[4..8], &v[8..], &seq)?;
                Ok(agents.actor.backward(st, &seq, &cache, &c)?.concat())
            },
        )
        .unwrap();
        worst[5] = worst[5].max(e);
    }

    let secs = t.elapsed().as_secs_f64();
    let ok =
        worst[..4].iter().all(|&e| e < 1e-4) && worst[4..].iter().all(|&e| e < 1e-3) && secs < 60.0;
    ensure(
        ok,
        format!(
            "max rel err linear {:.1e} gru {:.1e} attention {:.1e} fm {:.1e} critic {:.1e} actor {:.1e} in {secs:.1} s",
            worst[0], worst[1], worst[2], worst[3], worst[4], worst[5]
        ),
    )
}

// ---------------------------------------------------------------------------

struct SimResults {
    random: Vec<f64>,
    full: Vec<f64>,
    wo_edge: Vec<f64>,
    wo_critic: Vec<f64>,
    full_time: Duration,
}

fn med(v: &[f64]) -> f64 {
    median(v).unwrap_or(f64::NAN)
}

fn run_variant(world: &SimWorld, cfg: &RunConfig, ablation: Ablation) -> Result<Vec<f64>, String> {
    let sim = world.simulator(&cfg.sim).map_err(|e| e.to_string())?;
    par_map(&seed_list(cfg), |&s| {
        let c = cfg.with_seed(s);
        let agent = train_sim_agent(world, &sim, &c, ablation)?;
        Ok(agent.evaluate(&sim, c.sim.rounds, s)?.mean)
    })
    .map_err(|e| e.to_string())
}

fn simulator_runs(world: &SimWorld, cfg: &RunConfig) -> Result<SimResults, String> {
    let sim = world.simulator(&cfg.sim).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let random = seed_list(cfg)
        .iter()
        .map(|&s| baseline_random(&sim, cfg.sim.rounds, s).map(|r| r.mean))
        .collect::<mcchrl::Result<Vec<f64>>>()
        .map_err(|e| e.to_string())?;
    let full = run_variant(world, cfg, Ablation::default())?;
    let full_time = t.elapsed();
    let wo_edge = run_variant(
        world,
        cfg,
        Ablation {
            no_edge: true,
            ..Ablation::default()
        },
    )?;
    let wo_critic = run_variant(
        world,
        cfg,
        Ablation {
            no_critic: true,
            ..Ablation::default()
        },
    )?;
    Ok(SimResults {
        random,
        full,
        wo_edge,
        wo_critic,
        full_time,
    })
}

fn simulator_experiment(r: &SimResults, cfg: &RunConfig, world_time: Duration) -> Check {
    let (full, random) = (med(&r.full), med(&r.random));
    let minutes = (r.full_time + world_time).as_secs_f64() / 60.0;
    let budget =
        cfg.agent.dim == 32 && cfg.train.sessions <= 2000 && cfg.seeds == 5 && cfg.sim.rounds == 50;
    ensure(
        budget && full >= random + 0.10 && minutes <= 30.0,
        format!(
            "median S-rating full {full:.4} vs random {random:.4} (margin {:.4}); per seed {:?}; {minutes:.1} min",
            full - random,
            rounded(&r.full)
        ),
    )
}

fn ablation_ordering(r: &SimResults) -> Check {
    let (full, edge, critic, random) = (
        med(&r.full),
        med(&r.wo_edge),
        med(&r.wo_critic),
        med(&r.random),
    );
    ensure(
        full >= edge && full >= critic && critic <= random + 0.05,
        format!(
            "medians full {full:.4} wo_edge {edge:.4} wo_critic {critic:.4} random {random:.4}; wo_edge {:?} wo_critic {:?}",
            rounded(&r.wo_edge),
            rounded(&r.wo_critic)
        ),
    )
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

fn latency_trend(world: &SimWorld, cfg: &RunConfig) -> Check {
    let report = sweep_sensitivity_in(world, cfg, &[0, 6, 12], &[cfg.sim.device_len])
        .map_err(|e| e.to_string())?;
    let m: Vec<(usize, f64)> = report.medians().iter().map(|&(d, _, v)| (d, v)).collect();
    let ok = m.len() == 3 && m.windows(2).all(|w| w[1].1 <= w[0].1);
    let text: Vec<String> = m.iter().map(|(d, v)| format!("d={d}: {v:.4}")).collect();
    ensure(ok, format!("median S-rating {}", text.join(", ")))
}

// ---------------------------------------------------------------------------

fn conservative_q() -> Check {
    let t = Instant::now();
    let q = |alpha: f64| -> (f64, f64) {
        let vocab = Vocab {
            users: 2,
            items: 11,
            hours: 24,
            days: 7,
            locations: 1,
            apps: 11,
            districts: 1,
            segments: 1,
        };
        let cfg = AgentConfig {
            dim: 4,
            session_len: 5,
            history_len: 2,
            critic: CriticConfig {
                hidden: vec![8, 1],
                projection: 4,
                heads: 1,
            },
            actor: ActorConfig {
                hidden: vec![8],
                activation: Activation::Tanh,
                output_activation: Activation::Tanh,
                device_input: 4,
                device_latent: 4,
                zero_output: false,
                aligned_device: false,
            },
            aligned_sre: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (agents, params) = Agents::build(&cfg, &vocab, &mut rng, None, None).unwrap();
        let tc = TrainConfig {
            alpha,
            batch_size: 16,
            epochs: 3,
            reward_scale: 1.0,
            gamma: 0.9,
            lr_critic: 1e-2,
            lr_actor: 1e-3,
            seed: 1,
            ..TrainConfig::default()
        };
        let state = ObservedState {
            user: 1,
            history: vec![],
            outra: OutraFeatures {
                hour: 1,
                day: 1,
                workday: true,
                location: 0,
            },
        };
        // Only action A = items 1..=5 is logged, with one click in five.
        let logged = SessionLogRecord {
            state: state.clone(),
            action: vec![1, 2, 3, 4, 5],
            clicks: vec![1, 0, 0, 0, 0],
            reward: 0.2,
            device: vec![dev(0, 0.0); 5],
            next_state: None,
            next_action: None,
        };
        let mut trainer = Trainer::new(agents, params, tc).unwrap();
        train_offline(&mut trainer, &vec![logged; 300]).unwrap();
        let (a, p) = (&trainer.agents, &trainer.params);
        let s = a
            .encode_high(&p.shared, &state, &mut mcchrl::agents::SessionCache::new())
            .unwrap();
        let qa = a
            .critic_q(
                p,
                &s,
                &a.encode_action(&p.shared, &[1, 2, 3, 4, 5]).unwrap(),
            )
            .unwrap();
        let qb = a
            .critic_q(
                p,
                &s,
                &a.encode_action(&p.shared, &[6, 7, 8, 9, 10]).unwrap(),
            )
            .unwrap();
        (qa, qb)
    };
    let (qa0, qb0) = q(0.0);
    let (qa1, qb1) = q(0.1);
    let secs = t.elapsed().as_secs_f64();
    ensure(
        qb1 <= qb0 - 0.1 && secs < 60.0,
        format!("Q(s,B) alpha=0.1 {qb1:.4} vs alpha=0 {qb0:.4} (Q(s,A) {qa1:.4} / {qa0:.4}) in {secs:.1} s"),
    )
}

// ---------------------------------------------------------------------------

fn synthetic_auc() -> Check {
    let t = Instant::now();
    let run = |signal: f64| -> Result<f64, String> {
        let mut cfg = RunConfig::for_profile(Profile::Dataset);
        cfg.synth.signal_strength = signal;
        let (train, test) = dataset_split(&cfg).map_err(|e| e.to_string())?;
        let (agents, params, _) =
            train_dataset_agent(&cfg, &train, Ablation::default()).map_err(|e| e.to_string())?;
        Ok(eval_auc(&agents, &params, &test)
            .map_err(|e| e.to_string())?
            .mean)
    };
    let cfg = RunConfig::for_profile(Profile::Dataset);
    let shape = cfg.synth.sessions == 10_000
        && cfg.agent.session_len == 6
        && cfg.agent.history_len == 50
        && cfg.train.warmup_epochs == 3;
    let signal = run(1.0)?;
    let noise = run(0.0)?;
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    ensure(
        shape && signal >= 0.80 && (noise - 0.5).abs() <= 0.03 && minutes <= 20.0,
        format!("D-AUC signal=1 {signal:.4}, signal=0 {noise:.4} in {minutes:.1} min"),
    )
}

// ---------------------------------------------------------------------------

fn structural_invariants(world: &SimWorld, cfg: &RunConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();

    // Soft update: the target-network gap shrinks by exactly (1 - tau) per step.
    let (_, a) = small_agents(1);
    let (_, b) = small_agents(2);
    let (net, mut target) = (a.critic, b.critic);
    let x = net.flatten_trainable();
    let y0 = target.flatten_trainable();
    let tau = 0.05;
    let mut soft_err = 0.0f64;
    for n in 1..=50 {
        soft_update(&net, &mut target, tau).unwrap();
        let y = target.flatten_trainable();
        let shrink = (1.0 - tau).powi(n);
        for i in 0..x.len() {
            let gap0 = y0[i] - x[i];
            soft_err = soft_err.max(((y[i] - x[i]) - shrink * gap0).abs() / gap0.abs().max(1e-12));
        }
    }
    if soft_err > 1e-9 {
        failures.push(format!("soft update relative error {soft_err:.1e}"));
    }

    // Sessions never repeat an item, including with exploration noise.
    let (agents, p) = small_agents(4);
    for _ in 0..200 {
        let obs = mcchrl::agents::ObservedLow {
            user: 1,
            outra: OutraFeatures::default(),
            device: vec![dev(4, 1.0)],
        };
        let mut pool = agents.pool(&p.shared, (1..8).collect()).unwrap();
        let items = agents
            .rollout(&p, &obs, &mut pool, Some((&mut rng, 0.5)))
            .unwrap();
        if items.iter().collect::<BTreeSet<_>>().len() != items.len() {
            failures.push(format!("duplicate items {items:?}"));
            break;
        }
    }

    // Cloud views and cloud-side actor inputs carry no masked edge feature.
    let sim = world.simulator(&cfg.sim).map_err(|e| e.to_string())?;
    let mask = EdgeFeatureMask::default();
    let mut leaks = 0usize;
    for user in sim.users() {
        let mut state = sim.env_reset(user).map_err(|e| e.to_string())?;
        let mut r = ChaCha8Rng::seed_from_u64(user as u64);
        sim.begin_session(&mut state, &mut r)
            .map_err(|e| e.to_string())?;
        for d in [0, 6, 12] {
            leaks += cloud_view(&state.history, d, &mask)
                .iter()
                .filter(|i| mask.0.iter().any(|f| i.feature_present(f)))
                .count();
        }
        let start = sim.session_start(&state, ActorView::Cloud);
        leaks += start
            .low
            .device
            .iter()
            .filter(|m| m.district_id != 0 || m.segment_id != 0)
            .count();
    }
    if leaks > 0 {
        failures.push(format!("{leaks} masked features in cloud-side records"));
    }

    // SRE: folding a prefix and then the suffix equals encoding the whole list.
    let sre = &agents.encoders.sre;
    let mut sre_err = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=sre.max_len());
        let items: Vec<Vec<f64>> = (0..n).map(|_| random_direction(&mut rng, 4)).collect();
        let refs: Vec<&[f64]> = items.iter().map(Vec::as_slice).collect();
        let split = rng.random_range(0..=n);
        let mut l = sre.encode(&p.shared, &refs[..split]).unwrap();
        if split == 0 {
            l = SessionEmbedding::zero(4);
        }
        for e in &refs[split..] {
            l = sre.step(&p.shared, &l, e).unwrap();
        }
        let batch = sre.encode(&p.shared, &refs).unwrap();
        for (a, b) in l.vector.iter().zip(&batch.vector) {
            sre_err = sre_err.max((a - b).abs());
        }
    }
    if sre_err > 1e-12 {
        failures.push(format!("SRE incremental/batch gap {sre_err:.1e}"));
    }

    // AUC equals the pairwise-comparison count.
    for _ in 0..100 {
        let n = rng.random_range(2..=200);
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(0..20) as f64) / 4.0)
            .collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        let got = auc(&scores, &labels).unwrap();
        if (got - wins / pairs).abs() > 1e-12 {
            failures.push(format!("AUC {got} vs pairwise {}", wins / pairs));
            break;
        }
    }

    // Replay sampling is uniform: chi-square below the 99% quantile (9 dof).
    let mut buffer = ReplayBuffer::new(10, 5).unwrap();
    for i in 0..10usize {
        buffer.push(i);
    }
    let mut counts = [0usize; 10];
    let draws = 20_000;
    for _ in 0..draws / 10 {
        for i in buffer.sample_indices(10).unwrap() {
            counts[i] += 1;
        }
    }
    let expected = draws as f64 / 10.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    if chi2 >= 21.666 {
        failures.push(format!("replay chi-square {chi2:.2}"));
    }

    if failures.is_empty() {
        Ok(format!(
            "soft-update err {soft_err:.1e}, SRE gap {sre_err:.1e}, replay chi2 {chi2:.2}, no duplicates, no leaks"
        ))
    } else {
        Err(failures.join("; "))
    }
}

// ---------------------------------------------------------------------------

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let sim = format!(
        "profile = \"simulator\"\nseeds = 2\n[data]\nmovielens = {:?}\n[train]\nsessions = 40\n[sim]\nrounds = 3\n",
        movielens_dir().display().to_string()
    );
    let synth =
        "profile = \"dataset\"\nseeds = 2\n[synth]\nsessions = 300\n[train]\nwarmup_epochs = 1\n";
    std::fs::write(root.join("sim.toml"), sim).map_err(|e| e.to_string())?;
    std::fs::write(root.join("synth.toml"), synth).map_err(|e| e.to_string())?;
    let mut compared = Vec::new();
    for run in ["a", "b"] {
        let out = format!("{run}/sim");
        mcchrl(
            &[
                "--config",
                "sim.toml",
                "--seed",
                "7",
                "--out",
                &out,
                "train-online",
            ],
            root,
        )?;
        mcchrl(
            &[
                "--config", "sim.toml", "--seed", "7", "--out", &out, "evaluate",
            ],
            root,
        )?;
        let out = format!("{run}/synth");
        mcchrl(
            &[
                "--config",
                "synth.toml",
                "--seed",
                "7",
                "--out",
                &out,
                "ablate",
            ],
            root,
        )?;
    }
    for file in [
        "sim/agent.json",
        "sim/report.json",
        "sim/metrics.jsonl",
        "synth/ablation.json",
        "synth/ablation.csv",
    ] {
        let a = std::fs::read(root.join("a").join(file)).map_err(|e| format!("{file}: {e}"))?;
        let b = std::fs::read(root.join("b").join(file)).map_err(|e| format!("{file}: {e}"))?;
        if a != b {
            return Err(format!("{file} differs between identical runs"));
        }
        compared.push(file);
    }
    Ok(format!("byte-identical: {}", compared.join(", ")))
}

// ---------------------------------------------------------------------------

fn main() {
    let selected: Option<BTreeSet<u32>> = std::env::var("MCCHRL_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |n: u32| selected.as_ref().is_none_or(|s| s.contains(&n));
    let mut failed = 0;
    let mut report = |n: u32, name: &str, check: Check, t: Instant| {
        let secs = t.elapsed().as_secs_f64();
        match check {
            Ok(d) => println!("criterion {n} ({name}): PASS {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL {d} [{secs:.1} s]");
            }
        }
    };

    if wanted(1) {
        let t = Instant::now();
        report(1, "dataset fidelity", dataset_fidelity(), t);
    }
    if wanted(2) {
        let t = Instant::now();
        report(2, "numerical core", numerical_core(), t);
    }
    if wanted(5) {
        let t = Instant::now();
        report(5, "conservative offline Q", conservative_q(), t);
    }
    if wanted(9) {
        let t = Instant::now();
        report(9, "determinism", determinism(), t);
    }
    if wanted(6) {
        let t = Instant::now();
        report(6, "synthetic D-AUC", synthetic_auc(), t);
    }
    if [3, 4, 7, 8].iter().any(|&n| wanted(n)) {
        let cfg = sim_config();
        let t = Instant::now();
        match SimWorld::load(&cfg) {
            Err(e) => {
                for (n, name) in [
                    (3, "simulator experiment"),
                    (4, "ablation ordering"),
                    (7, "latency trend"),
                    (8, "structural invariants"),
                ] {
                    if wanted(n) {
                        report(n, name, Err(format!("world: {e}")), t);
                    }
                }
            }
            Ok(world) => {
                let world_time = t.elapsed();
                if wanted(8) {
                    let t = Instant::now();
                    report(
                        8,
                        "structural invariants",
                        structural_invariants(&world, &cfg),
                        t,
                    );
                }
                if wanted(3) || wanted(4) {
                    let t = Instant::now();
                    match simulator_runs(&world, &cfg) {
                        Ok(r) => {
                            if wanted(3) {
                                report(
                                    3,
                                    "simulator experiment",
                                    simulator_experiment(&r, &cfg, world_time),
                                    t,
                                );
                            }
                            if wanted(4) {
                                report(4, "ablation ordering", ablation_ordering(&r), t);
                            }
                        }
                        Err(e) => {
                            report(3, "simulator experiment", Err(e.clone()), t);
                            report(4, "ablation ordering", Err(e), t);
                        }
                    }
                }
                if wanted(7) {
                    let t = Instant::now();
                    report(7, "latency trend", latency_trend(&world, &cfg), t);
                }
            }
        }
    }

    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
