//! The high-level critic, the low-level actor, item selection, goals and
//! rewards.

mod actor;
mod critic;
mod model;
mod state;

pub use actor::{Actor, ActorCache, ActorConfig};
pub use critic::{Critic, CriticCache, CriticConfig, CriticInputGrads, CRITIC_FIELDS};
pub use model::{AgentConfig, AgentParams, Agents, SessionCache};
pub use state::{
    discounted_return, high_reward, intrinsic_reward, select_item, CandidatePool, Goal, GoalSource,
    HighAction, HighState, LowAction, LowState, ObservedLow, ObservedState,
};
