//! Declarative experiment description, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{build_grid_cartesian, sample_random_play, Dataset};
use crate::env::{EnvKind, EnvSpec, Environment, GridLayout};
use crate::error::{Error, Result};
use crate::gradients::GradientMode;
use crate::optimizer::Schedule;
use crate::qnet::{NetShape, QNetwork};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_episode_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<GridLayout>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    Cartesian,
    RandomPlay {
        seed: u64,
        episodes: usize,
    },
    /// A dataset CSV written earlier, e.g. by `gen-data`.
    File {
        path: PathBuf,
    },
    Online {
        buffer_capacity: usize,
        batch_size: usize,
        explore_rate: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub init_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub mode: GradientMode,
    pub steps: usize,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Seed of the initial state of evaluation rollouts.
    #[serde(default)]
    pub eval_seed: u64,
    /// Periodic checkpoint cadence in steps; 0 keeps only the final one.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime_margin: Option<f64>,
}

fn default_log_every() -> usize {
    100
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvConfig,
    pub dataset: DatasetSource,
    pub network: NetworkConfig,
    pub optimizer: Schedule,
    pub training: TrainingConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.env_kind()?;
        self.environment()?;
        self.optimizer.validate()?;
        if self.training.steps == 0 {
            return Err(Error::config("training.steps must be at least 1"));
        }
        if self.training.log_every == 0 {
            return Err(Error::config("training.log_every must be at least 1"));
        }
        if self.network.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        match &self.dataset {
            DatasetSource::Cartesian if self.env_kind()? != EnvKind::GridWorld => {
                Err(Error::config("the cartesian dataset exists only for grid-world"))
            }
            DatasetSource::RandomPlay { episodes: 0, .. } => Err(Error::config("random-play needs episodes >= 1")),
            DatasetSource::Online { buffer_capacity, batch_size, explore_rate, .. } => {
                if *buffer_capacity == 0 || *batch_size == 0 {
                    Err(Error::config("online buffer_capacity and batch_size must be positive"))
                } else if !(0.0..=1.0).contains(explore_rate) {
                    Err(Error::config("explore_rate must lie in [0, 1]"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn env_kind(&self) -> Result<EnvKind> {
        self.env.name.parse()
    }

    pub fn environment(&self) -> Result<Environment> {
        let kind = self.env_kind()?;
        let mut spec = EnvSpec::default_for(kind);
        if let Some(g) = self.env.gamma {
            spec.gamma = g;
        }
        if let Some(cap) = self.env.max_episode_steps {
            spec.max_episode_steps = cap;
        }
        if self.env.layout.is_some() && kind != EnvKind::GridWorld {
            return Err(Error::config("env.layout applies only to grid-world"));
        }
        Environment::from_spec(spec, self.env.layout.clone())
    }

    pub fn net_shape(&self, env: &Environment) -> NetShape {
        NetShape::new(env.state_dim(), &self.network.hidden, env.num_actions())
    }

    pub fn network(&self, env: &Environment) -> Result<QNetwork> {
        QNetwork::new(self.net_shape(env))
    }

    pub fn is_online(&self) -> bool {
        matches!(self.dataset, DatasetSource::Online { .. })
    }

    /// Builds (or loads) the fixed training set. Online configs have none.
    pub fn build_dataset(&self, env: &Environment) -> Result<Dataset> {
        let data = match &self.dataset {
            DatasetSource::Cartesian => build_grid_cartesian(env)?,
            DatasetSource::RandomPlay { seed, episodes } => sample_random_play(env, *seed, *episodes)?,
            DatasetSource::File { path } => Dataset::load_csv(path)?,
            DatasetSource::Online { .. } => {
                return Err(Error::config("online configs do not use a fixed dataset"));
            }
        };
        if data.env != env.kind() {
            return Err(Error::config(format!("dataset is for {}, config is for {}", data.env, env.kind())));
        }
        Ok(data)
    }

    /// Grid World, cartesian dataset, `lr0 = 1e-4` decaying to 85% every
    /// 3000 steps, 30000 steps.
    pub fn grid_world(mode: GradientMode, hidden: &[usize], init_seed: u64) -> Self {
        ExperimentConfig {
            name: format!("grid-world-{mode}-seed{init_seed}"),
            env: EnvConfig { name: EnvKind::GridWorld.name().into(), gamma: None, max_episode_steps: None, layout: None },
            dataset: DatasetSource::Cartesian,
            network: NetworkConfig { hidden: hidden.to_vec(), init_seed },
            optimizer: Schedule { lr0: 1e-4, decay: 0.85, period: 3000 },
            training: TrainingConfig {
                mode,
                steps: 30_000,
                log_every: 100,
                eval_seed: 0,
                checkpoint_every: 0,
                regime_margin: None,
            },
            output: OutputConfig::default(),
        }
    }

    /// Backward-semi dynamics run: `lr0 = 1e-6` decaying to 65% every 3000 steps.
    pub fn grid_world_backward_semi(hidden: &[usize], init_seed: u64) -> Self {
        let mut cfg = Self::grid_world(GradientMode::BackwardSemi, hidden, init_seed);
        cfg.optimizer = Schedule { lr0: 1e-6, decay: 0.65, period: 3000 };
        cfg
    }

    /// Classic-control protocol: random-play dataset, `lr0 = 1e-5` decaying
    /// to 75% every 3000 steps, 50000 steps.
    pub fn classic(kind: EnvKind, mode: GradientMode, hidden: &[usize], init_seed: u64) -> Self {
        let (seed, episodes) = match kind {
            EnvKind::CartPole => (100, 100),
            EnvKind::MountainCar => (550, 3),
            EnvKind::Acrobot => (190, 10),
            EnvKind::GridWorld => return Self::grid_world(mode, hidden, init_seed),
        };
        ExperimentConfig {
            name: format!("{kind}-{mode}-seed{init_seed}"),
            env: EnvConfig { name: kind.name().into(), gamma: None, max_episode_steps: None, layout: None },
            dataset: DatasetSource::RandomPlay { seed, episodes },
            network: NetworkConfig { hidden: hidden.to_vec(), init_seed },
            optimizer: Schedule { lr0: 1e-5, decay: 0.75, period: 3000 },
            training: TrainingConfig {
                mode,
                steps: 50_000,
                log_every: 100,
                eval_seed: 0,
                checkpoint_every: 0,
                regime_margin: None,
            },
            output: OutputConfig::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: &str = r#"
name = "grid-td"

[env]
name = "grid-world"

[dataset]
kind = "cartesian"

[network]
hidden = [64, 64]
init_seed = 3

[optimizer]
lr0 = 1e-4
decay = 0.85
period = 3000

[training]
mode = "semi"
steps = 30000
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str(GRID).unwrap();
        assert_eq!(cfg.training.log_every, 100);
        assert_eq!(cfg.training.mode, GradientMode::Semi);
        let env = cfg.environment().unwrap();
        assert_eq!(cfg.build_dataset(&env).unwrap().len(), 48);
        assert_eq!(cfg.net_shape(&env), NetShape::new(16, &[64, 64], 4));
    }

    #[test]
    fn toml_round_trip_and_digest() {
        let cfg = ExperimentConfig::from_toml_str(GRID).unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        let mut other = cfg.clone();
        other.network.init_seed = 4;
        assert_ne!(other.digest(), cfg.digest());
    }

    #[test]
    fn presets_validate() {
        for mode in GradientMode::ALL {
            ExperimentConfig::grid_world(mode, &[64, 64], 0).validate().unwrap();
            for kind in EnvKind::ALL {
                ExperimentConfig::classic(kind, mode, &[32], 1).validate().unwrap();
            }
        }
        ExperimentConfig::grid_world_backward_semi(&[64, 64], 0).validate().unwrap();
    }

    #[test]
    fn config_errors() {
        let bad_env = GRID.replace("grid-world", "pong");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad_env), Err(Error::Config(_))));
        let zero_steps = GRID.replace("steps = 30000", "steps = 0");
        assert!(ExperimentConfig::from_toml_str(&zero_steps).is_err());
        let unknown = GRID.replace("[training]", "[training]\nfoo = 1");
        assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
        let no_env = GRID.replace("[env]\nname = \"grid-world\"\n", "");
        assert!(ExperimentConfig::from_toml_str(&no_env).is_err());
        let cart = GRID.replace("grid-world", "cart-pole");
        assert!(ExperimentConfig::from_toml_str(&cart).is_err());
    }

    #[test]
    fn online_source_parses() {
        let text = GRID.replace(
            "kind = \"cartesian\"",
            "kind = \"online\"\nbuffer_capacity = 30000\nbatch_size = 16\nexplore_rate = 0.2\nseed = 5",
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert!(cfg.is_online());
        let bad = text.replace("explore_rate = 0.2", "explore_rate = 1.5");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }
}
