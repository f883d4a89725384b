//! MovieLens user simulator: rating oracle, edge and cloud views, sessions.

mod mf;
mod oracle;
mod sim;

pub use mf::{pretrain_mf, rmse, MfConfig, MfModel, MfResult};
pub use oracle::RatingOracle;
pub use sim::{
    clicked_sessions, cloud_view, device_sequence, edge_view, ActorView, EdgeFeatureMask,
    Interaction, SimConfig, SimEnv, SimState, Simulator,
};
