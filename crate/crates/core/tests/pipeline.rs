use std::path::PathBuf;

use mcchrl::dataio::{
    load_movielens, read_log, sessionize, synth_sessions, write_log, SynthConfig,
};
use mcchrl::harness::{
    auc, baseline_random, train_sim_agent, Ablation, Profile, RunConfig, SimWorld,
};

fn movielens_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k")
}

#[test]
fn movielens_sessions_survive_a_log_round_trip() {
    let ml = load_movielens(&movielens_dir()).unwrap();
    let s = sessionize(&ml, 4, 4);
    assert_eq!(s.records.len() * 4 + s.dropped, 100_000);
    let clicks: usize = s
        .records
        .iter()
        .flat_map(|r| &r.clicks)
        .map(|&c| c as usize)
        .sum();
    let share = clicks as f64 / (s.records.len() * 4) as f64;
    assert!((share - 0.55375).abs() < 0.01, "click share {share}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.jsonl");
    write_log(&path, &s.records).unwrap();
    let back = read_log(&path).unwrap();
    assert_eq!(back.skipped, 0);
    assert_eq!(back.records, s.records);
}

#[test]
fn synthetic_clicks_follow_the_generator_logit() {
    let rank = |signal: f64| {
        let data = synth_sessions(&SynthConfig {
            signal_strength: signal,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for r in &data.records {
            for (k, &item) in r.action.iter().enumerate() {
                scores.push(data.logit(r.state.user, item, &r.device[k]));
                labels.push(r.clicks[k]);
            }
        }
        auc(&scores, &labels).unwrap()
    };
    let informed = rank(1.0);
    assert!(informed >= 0.9, "AUC of the true logit {informed}");
    let blind = rank(0.0);
    assert!((blind - 0.5).abs() < 0.03, "AUC without signal {blind}");
}

#[test]
fn simulator_oracle_training_and_evaluation_run_end_to_end() {
    let mut cfg = RunConfig::for_profile(Profile::Simulator);
    cfg.data.movielens = movielens_dir();
    cfg.train.sessions = 80;
    let world = SimWorld::load(&cfg).unwrap();
    assert!(world.oracle_holdout_rmse.unwrap() < 1.0);

    for r in world.ml.ratings.iter().step_by(97) {
        assert_eq!(world.oracle.rating(r.user, r.item).unwrap(), r.rating);
    }

    let sim = world.simulator(&cfg.sim).unwrap();
    let random = baseline_random(&sim, 2, 0).unwrap();
    assert!(
        (3.3..3.6).contains(&random.mean),
        "random S-rating {}",
        random.mean
    );

    let agent = train_sim_agent(&world, &sim, &cfg, Ablation::default()).unwrap();
    assert_eq!(agent.summary.sessions, 80);
    assert_eq!(agent.summary.rewards.len(), 80);
    assert!(agent.summary.actor_updates > 0 && agent.summary.critic_updates > 0);
    let report = agent.evaluate(&sim, 2, 0).unwrap();
    assert!((1.0..=5.0).contains(&report.mean));
    assert_eq!(report.rounds, 2);
}
