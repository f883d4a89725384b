//! MovieLens ingestion, sessionization, the synthetic session generator and
//! the session log format.

mod log;
mod movielens;
mod sessionize;
mod synth;

pub use log::{read_log, write_log, LogRead, SessionLogRecord, LOG_SCHEMA, LOG_VERSION};
pub use movielens::{
    dataset_stats, load_movielens, log_stats, parse_ratings, parse_users, zip_region, DatasetStats,
    MovieLens, RatingRecord, UserRecord, EDGE_ONLY_FEATURES, RATINGS_FILE, USERS_FILE, ZIP_REGIONS,
};
pub use sessionize::{edge_record, outra_from_timestamp, sessionize, Sessionized};
pub use synth::{synth_sessions, SynthConfig, SynthData};
