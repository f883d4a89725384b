use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{ActorConfig, AgentConfig, CriticConfig};
use crate::dataio::SynthConfig;
use crate::envsim::{MfConfig, SimConfig};
use crate::error::{Error, Result};
use crate::numcore::Activation;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Online training against the MovieLens simulator, scored by S-rating.
    Simulator,
    /// Offline training on session logs, scored by D-AUC.
    Dataset,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// The actor sees only cloud features.
    pub no_edge: bool,
    /// Items are picked by `arg max Q`; no actor.
    pub no_actor: bool,
    /// The actor learns without the critic.
    pub no_critic: bool,
}

impl Ablation {
    pub fn validate(&self) -> Result<()> {
        if self.no_actor && self.no_critic {
            return Err(Error::Config(
                "no_actor and no_critic cannot be combined".into(),
            ));
        }
        Ok(())
    }

    pub fn is_full(&self) -> bool {
        !(self.no_edge || self.no_actor || self.no_critic)
    }

    /// Short name used in reports, e.g. `full` or `wo_edge+wo_critic`.
    pub fn name(&self) -> String {
        let parts: Vec<&str> = [
            (self.no_edge, "wo_edge"),
            (self.no_actor, "wo_actor"),
            (self.no_critic, "wo_critic"),
        ]
        .iter()
        .filter(|p| p.0)
        .map(|p| p.1)
        .collect();
        if parts.is_empty() {
            "full".to_string()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    /// Directory holding `u.data` and `u.user`.
    pub movielens: PathBuf,
    /// Session logs; when absent the dataset profile generates synthetic ones.
    pub train_log: Option<PathBuf>,
    pub test_log: Option<PathBuf>,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self {
            movielens: PathBuf::from("data/ml-100k"),
            train_log: None,
            test_log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub latencies: Vec<usize>,
    pub seq_lengths: Vec<usize>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            latencies: vec![0, 6, 12],
            seq_lengths: vec![12],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    /// Independent training seeds per comparison; medians are reported.
    pub seeds: usize,
    pub out_dir: PathBuf,
    pub data: DataPaths,
    pub agent: AgentConfig,
    pub train: TrainConfig,
    /// Factorization behind the rating oracle.
    pub oracle_mf: MfConfig,
    /// Factorization whose centered item vectors become the agents' item
    /// table in the simulator profile; its dimension is set to `agent.dim`.
    pub item_mf: MfConfig,
    pub sim: SimConfig,
    pub synth: SynthConfig,
    /// Share of the log held out for evaluation in the dataset profile.
    pub test_fraction: f64,
    pub ablation: Ablation,
    pub sweep: SweepGrid,
}

impl RunConfig {
    /// Defaults of a profile. The simulator profile is the scaled setting
    /// (`L = 32`, 2000 training sessions); the dataset profile uses the
    /// synthetic log.
    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Simulator => {
                let dim = 32;
                let k = 4;
                let history = 12;
                Self {
                    profile,
                    seed: 0,
                    seeds: 5,
                    out_dir: PathBuf::from("out"),
                    data: DataPaths::default(),
                    agent: AgentConfig {
                        dim,
                        session_len: k,
                        history_len: history,
                        critic: CriticConfig {
                            hidden: vec![32, 1],
                            projection: 16,
                            heads: 1,
                        },
                        actor: ActorConfig {
                            hidden: vec![64],
                            activation: Activation::Tanh,
                            output_activation: Activation::Tanh,
                            device_input: dim,
                            device_latent: dim,
                            zero_output: true,
                            aligned_device: true,
                        },
                        aligned_sre: true,
                    },
                    train: TrainConfig {
                        gamma: 0.99,
                        tau: 0.001,
                        lr_critic: 1e-3,
                        lr_actor: 1e-4,
                        batch_size: 64,
                        alpha: 0.0,
                        sessions: 2000,
                        warmup_epochs: 0,
                        ..TrainConfig::default()
                    },
                    oracle_mf: MfConfig::default(),
                    item_mf: MfConfig {
                        dim,
                        ..MfConfig::default()
                    },
                    sim: SimConfig {
                        session_len: k,
                        device_len: history,
                        ..SimConfig::default()
                    },
                    synth: SynthConfig::default(),
                    test_fraction: 0.2,
                    ablation: Ablation::default(),
                    sweep: SweepGrid::default(),
                }
            }
            Profile::Dataset => {
                let dim = 16;
                let k = 6;
                Self {
                    profile,
                    agent: AgentConfig {
                        dim,
                        session_len: k,
                        history_len: 50,
                        critic: CriticConfig {
                            hidden: vec![16, 1],
                            projection: 8,
                            heads: 1,
                        },
                        actor: ActorConfig {
                            hidden: vec![32],
                            activation: Activation::Tanh,
                            output_activation: Activation::Tanh,
                            device_input: dim,
                            device_latent: dim,
                            zero_output: false,
                            aligned_device: false,
                        },
                        aligned_sre: true,
                    },
                    train: TrainConfig {
                        gamma: 0.9,
                        tau: 0.001,
                        lr_critic: 1e-4,
                        lr_actor: 1e-4,
                        batch_size: 512,
                        alpha: 0.1,
                        epochs: 1,
                        warmup_epochs: 3,
                        l1: 1e-4,
                        l2: 1e-5,
                        ..TrainConfig::default()
                    },
                    synth: SynthConfig {
                        k,
                        ..SynthConfig::default()
                    },
                    sim: SimConfig::default(),
                    ..Self::for_profile(Profile::Simulator)
                }
            }
        }
    }

    /// Parses a TOML config. Keys absent from the file keep the defaults of
    /// the file's `profile` (or of `profile_override` when given).
    pub fn from_toml(text: &str, profile_override: Option<Profile>) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let profile = match profile_override {
            Some(p) => p,
            None => match user.get("profile") {
                Some(v) => v
                    .clone()
                    .try_into()
                    .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?,
                None => return Err(Error::Config("config must name a profile".into())),
            },
        };
        let mut base = toml::Table::try_from(Self::for_profile(profile))
            .map_err(|e| Error::Parse(e.to_string()))?;
        merge(&mut base, user);
        base.insert(
            "profile".into(),
            toml::Value::try_from(profile).map_err(|e| Error::Parse(e.to_string()))?,
        );
        let cfg: Self = base
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, profile_override: Option<Profile>) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?, profile_override)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.ablation.validate()?;
        self.train.validate()?;
        self.sim.validate()?;
        if self.seeds == 0 {
            return Err(Error::Config("at least one seed is needed".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test fraction must lie in (0, 1)".into()));
        }
        if self.sweep.latencies.is_empty() || self.sweep.seq_lengths.is_empty() {
            return Err(Error::Config("sweep grids must be non-empty".into()));
        }
        if self.profile == Profile::Simulator && self.sim.session_len != self.agent.session_len {
            return Err(Error::Config(
                "simulator and agent session lengths differ".into(),
            ));
        }
        if self.profile == Profile::Dataset && self.synth.k != self.agent.session_len {
            return Err(Error::Config(
                "synthetic and agent session lengths differ".into(),
            ));
        }
        Ok(())
    }

    /// Fingerprint of everything that can change results; the output
    /// directory is left out.
    pub fn fingerprint(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        super::report::fingerprint(&c)
    }

    /// The config with `seed` propagated to every seeded component.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.train.seed = seed;
        c.sim.seed = seed;
        c.synth.seed = seed;
        c
    }
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_follow_the_parameter_table() {
        let s = RunConfig::for_profile(Profile::Simulator);
        assert_eq!(
            (s.agent.session_len, s.train.gamma, s.train.batch_size),
            (4, 0.99, 64)
        );
        assert_eq!((s.train.tau, s.agent.history_len), (0.001, 12));
        assert_eq!((s.train.lr_critic, s.train.lr_actor), (1e-3, 1e-4));
        let d = RunConfig::for_profile(Profile::Dataset);
        assert_eq!(
            (d.agent.session_len, d.train.gamma, d.agent.dim),
            (6, 0.9, 16)
        );
        assert_eq!(
            (d.train.batch_size, d.agent.history_len, d.train.alpha),
            (512, 50, 0.1)
        );
        assert_eq!((d.train.lr_critic, d.train.lr_actor), (1e-4, 1e-4));
        assert_eq!((d.train.l1, d.train.l2), (1e-4, 1e-5));
        assert_eq!((s.train.l1, s.train.l2), (0.0, 0.0));
        s.validate().unwrap();
        d.validate().unwrap();
    }

    #[test]
    fn partial_toml_overrides_profile_defaults() {
        let cfg = RunConfig::from_toml(
            "profile = \"simulator\"\nseed = 9\n[train]\nsessions = 10\n",
            None,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.sessions, 10);
        assert_eq!(cfg.train.batch_size, 64);
        let cfg = RunConfig::from_toml("profile = \"simulator\"", Some(Profile::Dataset)).unwrap();
        assert_eq!(cfg.profile, Profile::Dataset);
        assert_eq!(cfg.agent.session_len, 6);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(RunConfig::from_toml("seed = 1", None).is_err());
        assert!(RunConfig::from_toml("profile = \"cloud\"", None).is_err());
        assert!(RunConfig::from_toml("profile = \"simulator\"\nbogus = 1", None).is_err());
        let both = "profile = \"simulator\"\n[ablation]\nno_actor = true\nno_critic = true\n";
        assert!(RunConfig::from_toml(both, None).is_err());
        let ok = "profile = \"simulator\"\n[ablation]\nno_edge = true\nno_critic = true\n";
        assert_eq!(
            RunConfig::from_toml(ok, None).unwrap().ablation.name(),
            "wo_edge+wo_critic"
        );
    }

    #[test]
    fn fingerprint_ignores_output_directory() {
        let a = RunConfig::for_profile(Profile::Simulator);
        let mut b = a.clone();
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
        assert_ne!(
            a.fingerprint().unwrap(),
            a.with_seed(1).fingerprint().unwrap()
        );
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::for_profile(Profile::Dataset).with_seed(4);
        let back = RunConfig::from_toml(&c.to_toml().unwrap(), None).unwrap();
        assert_eq!(back, c);
    }
}
