//! Flat key-value run configuration. INI-style grammar: one `key = value`
//! per line, `#` or `;` starts a comment, blank lines ignored. Unknown keys
//! are rejected and every value is type-checked on load.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::bottleneck::{OpponentKind, EMBED_DIM};
use crate::go::KOMI;
use crate::pipeline::TrainingBudget;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} expects {expected}, got {value:?}")]
    BadValue {
        line: usize,
        key: String,
        expected: &'static str,
        value: String,
    },
    #[error("line {line}: key {key:?} set twice")]
    DuplicateKey { line: usize, key: String },
    #[error("key {key:?}: only {supported} is supported by this build")]
    Unsupported { key: String, supported: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k: usize,
    pub embed_dim: usize,
    pub encoder_epochs: usize,
    pub bottleneck_epochs: usize,
    pub lr: f64,
    pub demo_games: usize,
    pub feature_games: usize,
    pub eval_seeds: usize,
    pub eval_games: usize,
    pub seed: u64,
    pub kmeans_seed: u64,
    pub opponent: OpponentKind,
    pub komi: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let b = TrainingBudget::default();
        RunConfig {
            k: b.k,
            embed_dim: EMBED_DIM,
            encoder_epochs: b.encoder_epochs,
            bottleneck_epochs: b.bottleneck_epochs,
            lr: b.lr,
            demo_games: b.demo_games,
            feature_games: b.feature_games,
            eval_seeds: 5,
            eval_games: 100,
            seed: 0,
            kmeans_seed: b.kmeans_seed,
            opponent: OpponentKind::Heuristic,
            komi: KOMI,
        }
    }
}

impl RunConfig {
    pub fn budget(&self) -> TrainingBudget {
        TrainingBudget {
            demo_games: self.demo_games,
            encoder_epochs: self.encoder_epochs,
            bottleneck_epochs: self.bottleneck_epochs,
            lr: self.lr,
            feature_games: self.feature_games,
            k: self.k,
            kmeans_seed: self.kmeans_seed,
        }
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw
                .split_once(['#', ';'])
                .map(|(before, _)| before)
                .unwrap_or(raw)
                .trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: content.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(key.to_string());
            let bad = |expected: &'static str| ConfigError::BadValue {
                line,
                key: key.to_string(),
                expected,
                value: value.to_string(),
            };
            match key {
                "k" => cfg.k = parse_pos(value).ok_or_else(|| bad("positive integer"))?,
                "embed_dim" => {
                    cfg.embed_dim = parse_pos(value).ok_or_else(|| bad("positive integer"))?
                }
                "encoder_epochs" => {
                    cfg.encoder_epochs = parse_pos(value).ok_or_else(|| bad("positive integer"))?
                }
                "bottleneck_epochs" => {
                    cfg.bottleneck_epochs =
                        parse_pos(value).ok_or_else(|| bad("positive integer"))?
                }
                "lr" => {
                    cfg.lr = value
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite() && *x >= 0.0)
                        .ok_or_else(|| bad("non-negative real"))?
                }
                "demo_games" => {
                    cfg.demo_games = parse_pos(value).ok_or_else(|| bad("positive integer"))?
                }
                "feature_games" => {
                    cfg.feature_games = parse_pos(value).ok_or_else(|| bad("positive integer"))?
                }
                "eval_seeds" => {
                    cfg.eval_seeds = parse_pos(value).ok_or_else(|| bad("positive integer"))?
                }
                "eval_games" => {
                    cfg.eval_games = parse_pos(value).ok_or_else(|| bad("positive integer"))?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("unsigned integer"))?,
                "kmeans_seed" => {
                    cfg.kmeans_seed = value.parse().map_err(|_| bad("unsigned integer"))?
                }
                "opponent" => {
                    cfg.opponent = match value {
                        "heuristic" => OpponentKind::Heuristic,
                        "random" => OpponentKind::Random,
                        _ => return Err(bad("heuristic or random")),
                    }
                }
                "komi" => {
                    cfg.komi = value
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| bad("real"))?
                }
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The engine's komi and the policy's embedding width are compile-time
    /// constants; a config may restate them but not change them.
    fn validate(&self) -> Result<(), ConfigError> {
        if self.komi != KOMI {
            return Err(ConfigError::Unsupported {
                key: "komi".to_string(),
                supported: format!("{KOMI}"),
            });
        }
        if self.embed_dim != EMBED_DIM {
            return Err(ConfigError::Unsupported {
                key: "embed_dim".to_string(),
                supported: format!("{EMBED_DIM}"),
            });
        }
        Ok(())
    }
}

fn parse_pos(value: &str) -> Option<usize> {
    value.parse::<usize>().ok().filter(|&x| x >= 1)
}
