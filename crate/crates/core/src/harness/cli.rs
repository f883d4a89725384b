use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use super::config::{Profile, RunConfig};
use super::eval::{
    baseline_random, eval_auc, score_logged_items, ActorPolicy, CriticPolicy, Policy,
};
use super::experiment::{
    dataset_split, run_ablation, strip_device, sweep_sensitivity, train_dataset_agent,
    train_sim_agent, SimWorld,
};
use super::report::MetricsReport;
use crate::agents::Agents;
use crate::dataio::{dataset_stats, load_movielens, log_stats, sessionize, write_log};
use crate::envsim::{pretrain_mf, ActorView};
use crate::error::{Error, Result};
use crate::training::write_metrics;

#[derive(Debug, Parser)]
#[command(
    name = "mcchrl",
    version,
    about = "Hierarchical actor-critic listwise recommendation"
)]
pub struct Cli {
    /// TOML run config; keys left out take the profile defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config profile.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Converts MovieLens ratings (simulator) or the synthetic generator
    /// (dataset) into session logs.
    Ingest,
    /// Fits the oracle's matrix factorization and reports its RMSE.
    PretrainMf,
    /// Trains in the simulator.
    TrainOnline,
    /// Warmup plus offline training on the dataset log.
    TrainOffline,
    /// Scores the trained agents in the output directory.
    Evaluate,
    /// Full model, ablations and the random baseline over several seeds.
    Ablate,
    /// Latency and history-length sensitivity grid.
    Sweep,
    /// Writes actor scores of the test log items.
    ScoreItems,
    /// Dataset statistics.
    Stats,
}

/// Runs the command line; returns the process exit code (2 for usage
/// errors, 1 for run failures).
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, cli.profile) {
        (Some(path), p) => RunConfig::load(path, p)?,
        (None, Some(p)) => RunConfig::for_profile(p),
        (None, None) => return Err(Error::Config("pass --config <path> or --profile".into())),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let out = cfg.out_dir.clone();
    std::fs::create_dir_all(&out)?;
    let fp = cfg.fingerprint()?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    match cli.command {
        Command::Stats => stats(&cfg, &out),
        Command::Ingest => ingest(&cfg, &out),
        Command::PretrainMf => {
            let ml = load_movielens(&cfg.data.movielens)?;
            let fit = pretrain_mf(&ml.ratings, &cfg.oracle_mf)?;
            println!("train RMSE {:.4}", fit.train_rmse);
            if let Some(h) = fit.holdout_rmse {
                println!("held-out RMSE {h:.4}");
            }
            write_json(&out, "mf.json", &fit)
        }
        Command::TrainOnline => {
            require(&cfg, Profile::Simulator)?;
            let world = SimWorld::load(&cfg)?;
            let sim = world.simulator(&cfg.sim)?;
            let agent = train_sim_agent(&world, &sim, &cfg, cfg.ablation)?;
            agent.agents.save(&agent.params, &out.join("agent.json"))?;
            write_metrics(&out.join("metrics.jsonl"), &agent.trainer_metrics)?;
            let rewards = &agent.summary.rewards;
            let mean = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
            println!(
                "{} sessions, mean r^h {mean:.4}, {} critic / {} actor updates",
                agent.summary.sessions, agent.summary.critic_updates, agent.summary.actor_updates
            );
            write_json(
                &out,
                "train.json",
                &serde_json::json!({
                    "variant": cfg.ablation.name(),
                    "sessions": agent.summary.sessions,
                    "mean_reward": mean,
                    "critic_updates": agent.summary.critic_updates,
                    "actor_updates": agent.summary.actor_updates,
                    "fingerprint": fp,
                }),
            )
        }
        Command::TrainOffline => {
            require(&cfg, Profile::Dataset)?;
            let (train, _) = dataset_split(&cfg)?;
            let (agents, params, losses) = train_dataset_agent(&cfg, &train, cfg.ablation)?;
            agents.save(&params, &out.join("agent.json"))?;
            for (i, l) in losses.iter().enumerate() {
                println!("warmup epoch {} loss {l:.4}", i + 1);
            }
            write_json(
                &out,
                "train.json",
                &serde_json::json!({
                    "variant": cfg.ablation.name(),
                    "sessions": train.len(),
                    "warmup_losses": losses,
                    "fingerprint": fp,
                }),
            )
        }
        Command::Evaluate => {
            let (agents, params) = Agents::load(&out.join("agent.json"))?;
            let reports = match cfg.profile {
                Profile::Simulator => {
                    let world = SimWorld::load(&cfg)?;
                    let sim = world.simulator(&cfg.sim)?;
                    let mut policy: Box<dyn Policy> = if cfg.ablation.no_actor {
                        Box::new(CriticPolicy::new(&agents, &params))
                    } else {
                        Box::new(ActorPolicy {
                            agents: &agents,
                            params: &params,
                            view: if cfg.ablation.no_edge {
                                ActorView::Cloud
                            } else {
                                ActorView::Edge
                            },
                        })
                    };
                    let model =
                        super::eval::eval_srating(policy.as_mut(), &sim, cfg.sim.rounds, cfg.seed)?;
                    let random = baseline_random(&sim, cfg.sim.rounds, cfg.seed)?;
                    vec![("mcchrl", model), ("random", random)]
                }
                Profile::Dataset => {
                    let (_, test) = dataset_split(&cfg)?;
                    let test = if cfg.ablation.no_edge {
                        strip_device(&test)
                    } else {
                        test
                    };
                    vec![("mcchrl", eval_auc(&agents, &params, &test)?)]
                }
            };
            let reports: Vec<(String, MetricsReport)> = reports
                .into_iter()
                .map(|(n, mut r)| {
                    r.fingerprint = fp.clone();
                    println!(
                        "{n:>8} {} {:.4} ± {:.4} ({} rounds)",
                        r.metric, r.mean, r.stderr, r.rounds
                    );
                    (n.to_string(), r)
                })
                .collect();
            write_json(&out, "report.json", &reports)
        }
        Command::Ablate => {
            let results = run_ablation(&cfg)?;
            let mut csv = String::from("variant,seed_index,mean,stderr\n");
            for v in &results {
                println!("{:>10} median {:.4}", v.variant, v.median);
                for (i, r) in v.reports.iter().enumerate() {
                    csv.push_str(&format!("{},{},{},{}\n", v.variant, i, r.mean, r.stderr));
                }
            }
            std::fs::write(out.join("ablation.csv"), csv)?;
            write_json(&out, "ablation.json", &results)
        }
        Command::Sweep => {
            let report = sweep_sensitivity(&cfg, &cfg.sweep.latencies, &cfg.sweep.seq_lengths)?;
            for (d, n, m) in report.medians() {
                println!("d={d:<3} N^l={n:<3} median S-rating {m:.4}");
            }
            std::fs::write(out.join("sweep_latency.csv"), report.latency_csv())?;
            std::fs::write(out.join("sweep_params.csv"), report.params_csv())?;
            write_json(&out, "sweep.json", &report)
        }
        Command::ScoreItems => {
            require(&cfg, Profile::Dataset)?;
            let (agents, params) = Agents::load(&out.join("agent.json"))?;
            let (_, test) = dataset_split(&cfg)?;
            let mut csv = String::from("user,item,score,click\n");
            for (u, i, s, c) in score_logged_items(&agents, &params, &test)? {
                csv.push_str(&format!("{u},{i},{s},{c}\n"));
            }
            std::fs::write(out.join("scores.csv"), csv)?;
            Ok(())
        }
    }
}

fn require(cfg: &RunConfig, profile: Profile) -> Result<()> {
    if cfg.profile == profile {
        Ok(())
    } else {
        Err(Error::Config(
            format!("this command needs the {profile:?} profile").to_lowercase(),
        ))
    }
}

fn stats(cfg: &RunConfig, out: &Path) -> Result<()> {
    let stats = match cfg.profile {
        Profile::Simulator => {
            let ml = load_movielens(&cfg.data.movielens)?;
            dataset_stats(&ml.ratings)
        }
        Profile::Dataset => {
            let (mut train, test) = dataset_split(cfg)?;
            train.extend(test);
            log_stats(&train)
        }
    };
    println!("impressions {}", stats.impressions);
    println!("users       {}", stats.users);
    println!("items       {}", stats.items);
    if let Some(c) = stats.rating_counts {
        for (r, n) in c.iter().enumerate() {
            println!("rating {}    {n}", r + 1);
        }
    }
    if let Some(m) = stats.mean_rating {
        println!("mean rating {m:.4}");
    }
    if let Some(c) = stats.ctr {
        println!("ctr         {c:.4}");
    }
    write_json(out, "stats.json", &stats)
}

fn ingest(cfg: &RunConfig, out: &Path) -> Result<()> {
    match cfg.profile {
        Profile::Simulator => {
            let ml = load_movielens(&cfg.data.movielens)?;
            let s = sessionize(&ml, cfg.agent.session_len, cfg.sim.click_threshold);
            write_log(&out.join("sessions.jsonl"), &s.records)?;
            println!(
                "{} sessions, {} trailing ratings dropped",
                s.records.len(),
                s.dropped
            );
        }
        Profile::Dataset => {
            let (train, test) = dataset_split(cfg)?;
            write_log(&out.join("train.jsonl"), &train)?;
            write_log(&out.join("test.jsonl"), &test)?;
            println!("{} train / {} test sessions", train.len(), test.len());
        }
    }
    Ok(())
}
