use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::metaloss::{MetaBatchConfig, MetaObjective};
use crate::weighters::{HyperParams, PruneConfig, PruneRule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bdw,
    Dw,
    L2rw,
    Nn,
    None,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Bdw, Method::Dw, Method::L2rw, Method::Nn, Method::None, Method::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bdw => "bdw",
            Method::Dw => "dw",
            Method::L2rw => "l2rw",
            Method::Nn => "nn",
            Method::None => "none",
            Method::Oracle => "oracle",
        }
    }

    /// Methods that evaluate a meta-loss every batch.
    pub fn uses_meta(self) -> bool {
        matches!(self, Method::Bdw | Method::Dw | Method::L2rw)
    }

    pub fn can_prune(self) -> bool {
        matches!(self, Method::Bdw | Method::Dw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Vae,
    Rotation,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Vae => "vae",
            Task::Rotation => "rotation",
        }
    }
}

macro_rules! named_enum {
    ($ty:ty, $what:literal, [$($v:expr),+]) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                let s = s.trim().to_ascii_lowercase();
                [$($v),+]
                    .into_iter()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| Error::config(format!(concat!("unknown ", $what, " '{}'"), s)))
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(Method, "method", [Method::Bdw, Method::Dw, Method::L2rw, Method::Nn, Method::None, Method::Oracle]);
named_enum!(Task, "task", [Task::Vae, Task::Rotation]);

/// Full experiment description. Defaults are the desk-scale mixed-domain
/// VAE run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub task: Task,
    pub hyper: HyperParams,
    pub prune: PruneConfig,
    pub prune_enabled: bool,
    pub meta: MetaBatchConfig,
    /// `None` picks reconstruction for the VAE and NCC for rotation.
    pub meta_objective: Option<MetaObjective>,
    /// Target images per reconstruction meta-batch.
    pub meta_batch: usize,
    pub nn_beta: f64,
    pub seed: u64,
    pub eval_seed: u64,
    /// IDX dataset root; synthetic domains are generated when absent.
    pub data_dir: Option<PathBuf>,
    /// Target domain name; the first domain when absent.
    pub target: Option<String>,
    pub source_cap: usize,
    pub target_train: usize,
    pub target_test: usize,
    pub hidden: usize,
    pub latent: usize,
    pub out: Option<PathBuf>,
    /// Test hook: BDW trains with every weight fixed to 1.
    #[serde(default)]
    pub force_unit_weights: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Bdw,
            task: Task::Vae,
            hyper: HyperParams {
                alpha: 1e-4,
                eta: 10.0,
                batch_size: 64,
                epochs: 20,
            },
            prune: PruneConfig {
                lambda: 0.25,
                rho: 0.5,
                rule: PruneRule::MassBelow,
            },
            prune_enabled: true,
            meta: MetaBatchConfig {
                ways: 10,
                shots: 10,
                queries: 10,
                disjoint_queries: true,
            },
            meta_objective: None,
            meta_batch: 64,
            nn_beta: 1e-5,
            seed: 0,
            eval_seed: 0xe7a1,
            data_dir: None,
            target: None,
            source_cap: 6000,
            target_train: 2000,
            target_test: 2000,
            hidden: 100,
            latent: 1,
            out: None,
            force_unit_weights: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

fn optional(value: &str) -> Option<&str> {
    let v = value.trim();
    (!v.is_empty() && v != "none" && v != "auto").then_some(v)
}

impl ExperimentConfig {
    pub fn meta_objective(&self) -> MetaObjective {
        self.meta_objective.unwrap_or(match self.task {
            Task::Vae => MetaObjective::Reconstruction,
            Task::Rotation => MetaObjective::Ncc,
        })
    }

    /// Sets one key. Keys match the INI file and the long CLI flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "method" => self.method = value.parse()?,
            "task" => self.task = value.parse()?,
            "epochs" => self.hyper.epochs = parse(&key, value)?,
            "alpha" => self.hyper.alpha = parse(&key, value)?,
            "eta" => self.hyper.eta = parse(&key, value)?,
            "batch_size" | "k" => self.hyper.batch_size = parse(&key, value)?,
            "lambda" => self.prune.lambda = parse(&key, value)?,
            "rho" => self.prune.rho = parse(&key, value)?,
            "prune" => self.prune_enabled = parse_bool(&key, value)?,
            "prune_rule" => {
                self.prune.rule = match value.trim() {
                    "mass_below" => PruneRule::MassBelow,
                    "keep_mass_below" => PruneRule::KeepMassBelow,
                    other => return Err(Error::config(format!("unknown prune rule '{other}'"))),
                }
            }
            "ways" => self.meta.ways = parse(&key, value)?,
            "shots" => self.meta.shots = parse(&key, value)?,
            "queries" => self.meta.queries = parse(&key, value)?,
            "disjoint_queries" => self.meta.disjoint_queries = parse_bool(&key, value)?,
            "meta_objective" => {
                self.meta_objective = match optional(value) {
                    None => None,
                    Some("ncc") => Some(MetaObjective::Ncc),
                    Some("reconstruction") => Some(MetaObjective::Reconstruction),
                    Some(other) => return Err(Error::config(format!("unknown meta objective '{other}'"))),
                }
            }
            "meta_batch" => self.meta_batch = parse(&key, value)?,
            "nn_beta" => self.nn_beta = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "eval_seed" => self.eval_seed = parse(&key, value)?,
            "data_dir" => self.data_dir = optional(value).map(PathBuf::from),
            "target" => self.target = optional(value).map(str::to_string),
            "source_cap" => self.source_cap = parse(&key, value)?,
            "target_train" => self.target_train = parse(&key, value)?,
            "target_test" => self.target_test = parse(&key, value)?,
            "hidden" => self.hidden = parse(&key, value)?,
            "latent" => self.latent = parse(&key, value)?,
            "out" => self.out = optional(value).map(PathBuf::from),
            "force_unit_weights" => self.force_unit_weights = parse_bool(&key, value)?,
            _ => return Err(Error::config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines, `#`/`;`
    /// comments and `[section]` headers are ignored.
    pub fn apply_ini(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') || line.starts_with('[') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_ini(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_ini(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_ini_file(path: &Path) -> Result<Self> {
        Self::from_ini(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.prune_enabled && self.method.can_prune() {
            self.prune.validate()?;
        }
        if self.method.uses_meta() {
            match self.meta_objective() {
                MetaObjective::Ncc => self.meta.validate()?,
                MetaObjective::Reconstruction => {
                    if self.task != Task::Vae {
                        return Err(Error::config("the reconstruction meta-loss needs the VAE task"));
                    }
                    if self.meta_batch == 0 {
                        return Err(Error::config("meta_batch must be at least 1"));
                    }
                }
            }
        }
        if self.method == Method::Nn && !(self.nn_beta > 0.0 && self.nn_beta.is_finite()) {
            return Err(Error::config(format!("nn_beta must be positive, got {}", self.nn_beta)));
        }
        if self.hidden == 0 || self.latent == 0 {
            return Err(Error::config("hidden and latent widths must be positive"));
        }
        if self.target_train == 0 || self.target_test == 0 {
            return Err(Error::config("target train and test sets must be non-empty"));
        }
        Ok(())
    }
}
