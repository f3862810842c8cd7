use std::path::{Path, PathBuf};

use mimic_core::reference::ReferenceMotion;
use mimic_core::sim::Character;
use mimic_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::args::RunArgs;
use crate::error::{CliError, CliResult};

/// Everything a training-based command needs. Written back into the output
/// directory with every default filled in.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub character: Option<String>,
    pub motion: Option<PathBuf>,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Reads the config file, if any, then applies flag overrides. Relative
    /// paths inside a config file resolve against the file's directory.
    pub fn from_args(args: &RunArgs) -> CliResult<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let mut cfg: RunConfig = toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let base = path.parent().unwrap_or(Path::new("."));
                if let Some(m) = &cfg.motion {
                    if m.is_relative() {
                        cfg.motion = Some(base.join(m));
                    }
                }
                cfg
            }
            None => RunConfig::default(),
        };
        let t = &mut cfg.train;
        if let Some(c) = &args.character {
            cfg.character = Some(c.clone());
        }
        if let Some(m) = &args.motion {
            cfg.motion = Some(m.clone());
        }
        if let Some(v) = args.iters {
            t.iterations = v;
        }
        if let Some(v) = args.steps {
            t.episode_steps = v;
        }
        if let Some(v) = args.batch {
            t.batch = v;
        }
        if let Some(v) = args.replay {
            t.replay = v;
        }
        if let Some(v) = args.truncation {
            t.truncation = Some(v);
        }
        if args.rsi {
            t.rsi = true;
        }
        if let Some(v) = args.seed {
            t.seed = v;
        }
        if let Some(v) = args.lr {
            t.learning_rate = v;
        }
        if let Some(v) = &args.hidden {
            t.hidden = v.clone();
        }
        if let Some(v) = args.eval_steps {
            t.eval_steps = Some(v);
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn character(&self) -> CliResult<Character> {
        let name = self
            .character
            .as_deref()
            .ok_or_else(|| CliError::Config("no character given (--character or config)".into()))?;
        Ok(Character::resolve(name)?)
    }

    pub fn motion(&self) -> CliResult<ReferenceMotion> {
        let path = self
            .motion
            .as_deref()
            .ok_or_else(|| CliError::Config("no motion given (--motion or config)".into()))?;
        Ok(ReferenceMotion::load(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
