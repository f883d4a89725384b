//! Metrics, baselines, ablations, sweeps and the command-line front end.

mod cli;
mod config;
mod eval;
mod experiment;
mod report;

pub use cli::{cli_main, Cli, Command};
pub use config::{Ablation, DataPaths, Profile, RunConfig, SweepGrid};
pub use eval::{
    baseline_random, eval_auc, eval_srating, pool_seed, score_logged_items, ActorPolicy,
    CriticPolicy, Policy, RandomPolicy,
};
pub use experiment::{
    ablation_variants, dataset_split, log_vocab, par_map, parameter_count, run_ablation,
    run_sim_ablation, seed_list, strip_device, sweep_sensitivity, sweep_sensitivity_in,
    train_dataset_agent, train_sim_agent, SimAgent, SimWorld, SweepPoint, SweepReport,
    VariantResult,
};
pub use report::{auc, fingerprint, mean_stderr, median, MetricsReport};
