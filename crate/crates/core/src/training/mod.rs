//! DDPG machinery, replay memory, the online and offline training loops and
//! the supervised warmup.

mod config;
mod loops;
mod metrics;
mod replay;
mod trainer;

pub use config::{EdgeSync, TrainConfig};
pub use loops::{
    supervised_warmup, train_offline, train_online, transition_from_log, Environment, Selector,
    SessionOutcome, SessionStart, TrainSummary,
};
pub use metrics::{write_metrics, MetricRecord};
pub use replay::ReplayBuffer;
pub use trainer::{
    cql_penalty_value, soft_update, soft_weighted_mean, td_target, ActorStep, CriticStats,
    TargetMode, Trainer, Transition,
};
