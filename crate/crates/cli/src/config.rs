use std::path::{Path, PathBuf};

use pclocal::graph::FamilyDescriptor;
use pclocal::group::Word;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every tunable of every subcommand. Unset fields fall back to per-command
/// defaults; fields set in a `--config` file take precedence over flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Graph family: t3, tree:4, z2z3, free:2,3,3, mgp:3.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    /// Quotient index n.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quotient_n: Option<u32>,
    /// Relator as factor:element letters, e.g. 0:1,1:1.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relator: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
    /// Comma-separated increasing list, e.g. 3,4,5.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<u32>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Survival cap M of the exploration process.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    /// Number of exploration runs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    /// Return-probability horizon for the spectral estimate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tmax: Option<usize>,
    /// CSV destination; the manifest goes to `<out>.manifest.json`.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Fields set in `file` replace those in `self`.
    pub fn overridden_by(self, file: ExperimentConfig) -> ExperimentConfig {
        macro_rules! pick {
            ($($f:ident),*) => {
                ExperimentConfig { $($f: file.$f.or(self.$f),)* out: self.out }
            };
        }
        pick!(family, quotient_n, relator, radius, p, eps, eps1, n_list, trials, theta_star, master_seed, threads, cap, runs, tmax)
    }

    pub fn family(&self) -> Result<FamilyDescriptor, CliError> {
        let name = self.family.as_deref().ok_or_else(|| CliError::missing("--family"))?;
        let mut desc = FamilyDescriptor::parse(name)?;
        if let Some(r) = &self.relator {
            desc.relator = Some(Word::parse_letters(r)?);
        }
        Ok(match self.quotient_n {
            Some(n) => desc.with_quotient(n),
            None => desc,
        })
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.master_seed.ok_or_else(|| CliError::missing("--master-seed"))
    }

    pub fn radius(&self) -> Result<usize, CliError> {
        self.radius.ok_or_else(|| CliError::missing("--radius"))
    }

    pub fn probability(name: &str, v: Option<f64>) -> Result<f64, CliError> {
        let v = v.ok_or_else(|| CliError::missing(name))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(CliError::Invalid(format!("{name} = {v} is not in [0, 1]")));
        }
        Ok(v)
    }

    pub fn trials(&self, default: usize) -> Result<usize, CliError> {
        match self.trials.unwrap_or(default) {
            0 => Err(CliError::Invalid("--trials must be >= 1".into())),
            t => Ok(t),
        }
    }

    pub fn theta_star(&self) -> Result<f64, CliError> {
        match self.theta_star.unwrap_or(0.3) {
            t if t > 0.0 && t < 1.0 => Ok(t),
            t => Err(CliError::Invalid(format!("--theta-star = {t} is not in (0, 1)"))),
        }
    }

    pub fn n_list(&self) -> Result<Vec<u32>, CliError> {
        let list = self.n_list.clone().ok_or_else(|| CliError::missing("--n-list"))?;
        if list.is_empty() || list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Invalid("--n-list must be nonempty and increasing".into()));
        }
        Ok(list)
    }
}

/// Reads a TOML config, a JSON config, or the `config` section of a run manifest.
pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let bad = |msg: String| CliError::Invalid(format!("{}: {msg}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if let Some(cfg) = value.get_mut("config") {
            value = cfg.take();
        }
        serde_json::from_value(value).map_err(|e| bad(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| bad(e.to_string()))
    }
}
