use std::fmt::Write;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use prior_distill::harness::{DescentConfig, SynthConfig};
use prior_distill::{BackboneLossConfig, DistillScope, FusionConfig, Strategy};

use crate::error::{CliError, Result};

/// Every accepted key, in the order `show-config` prints them.
pub const KEYS: &[&str] = &[
    "fusion.gamma",
    "fusion.gamma_lof",
    "fusion.tau_lof",
    "fusion.tau",
    "fusion.k_lof",
    "fusion.strategy",
    "backbone.tau_t",
    "backbone.tau_s",
    "backbone.lambda_cosine",
    "backbone.lambda_attn",
    "relational.scope",
    "relational.rho",
    "synth.n_clusters",
    "synth.patches_per_cluster",
    "synth.dim_struct",
    "synth.dim_sem",
    "synth.noise_sigma",
    "synth.outlier_count",
    "synth.outlier_scale",
    "synth.seed",
    "descent.learning_rate",
    "descent.steps",
    "descent.record_every",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub fusion: FusionConfig,
    pub backbone: BackboneLossConfig,
    pub scope: DistillScope,
    pub rho: f64,
    pub synth: SynthConfig,
    pub descent: DescentConfig,
    /// `None` ("auto") picks the tuned step size of each descent problem.
    pub learning_rate: Option<f64>,
}

impl CliConfig {
    pub fn with_synth(synth: SynthConfig) -> Self {
        Self {
            fusion: FusionConfig::default(),
            backbone: BackboneLossConfig::default(),
            scope: DistillScope::default(),
            rho: 0.0,
            synth,
            descent: DescentConfig::default(),
            learning_rate: None,
        }
    }

    /// Defaults, then the file, then flag overrides.
    pub fn resolve(synth: SynthConfig, file: Option<&Path>, flags: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::with_synth(synth);
        if let Some(path) = file {
            for (key, value) in read_config_file(path)? {
                cfg.set(&key, &value)?;
            }
        }
        for (key, value) in flags {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "fusion.gamma" => self.fusion.gamma = parse(key, value)?,
            "fusion.gamma_lof" => self.fusion.gamma_lof = parse(key, value)?,
            "fusion.tau_lof" => self.fusion.tau_lof = parse(key, value)?,
            "fusion.tau" => self.fusion.tau = parse(key, value)?,
            "fusion.k_lof" => self.fusion.k_lof = parse(key, value)?,
            "fusion.strategy" => self.fusion.strategy = parse::<Strategy>(key, value)?,
            "backbone.tau_t" => self.backbone.tau_t = parse(key, value)?,
            "backbone.tau_s" => self.backbone.tau_s = parse(key, value)?,
            "backbone.lambda_cosine" => self.backbone.lambda_cosine = parse(key, value)?,
            "backbone.lambda_attn" => self.backbone.lambda_attn = parse(key, value)?,
            "relational.scope" => self.scope = parse(key, value)?,
            "relational.rho" => self.rho = parse(key, value)?,
            "synth.n_clusters" => self.synth.n_clusters = parse(key, value)?,
            "synth.patches_per_cluster" => self.synth.patches_per_cluster = parse(key, value)?,
            "synth.dim_struct" => self.synth.dim_struct = parse(key, value)?,
            "synth.dim_sem" => self.synth.dim_sem = parse(key, value)?,
            "synth.noise_sigma" => self.synth.noise_sigma = parse(key, value)?,
            "synth.outlier_count" => self.synth.outlier_count = parse(key, value)?,
            "synth.outlier_scale" => self.synth.outlier_scale = parse(key, value)?,
            "synth.seed" => self.synth.seed = parse(key, value)?,
            "descent.learning_rate" => {
                self.learning_rate = if value == "auto" { None } else { Some(parse(key, value)?) }
            }
            "descent.steps" => self.descent.steps = parse(key, value)?,
            "descent.record_every" => self.descent.record_every = parse(key, value)?,
            _ => return Err(CliError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "fusion.gamma" => self.fusion.gamma.to_string(),
            "fusion.gamma_lof" => self.fusion.gamma_lof.to_string(),
            "fusion.tau_lof" => self.fusion.tau_lof.to_string(),
            "fusion.tau" => self.fusion.tau.to_string(),
            "fusion.k_lof" => self.fusion.k_lof.to_string(),
            "fusion.strategy" => self.fusion.strategy.as_str().to_string(),
            "backbone.tau_t" => self.backbone.tau_t.to_string(),
            "backbone.tau_s" => self.backbone.tau_s.to_string(),
            "backbone.lambda_cosine" => self.backbone.lambda_cosine.to_string(),
            "backbone.lambda_attn" => self.backbone.lambda_attn.to_string(),
            "relational.scope" => self.scope.as_str().to_string(),
            "relational.rho" => self.rho.to_string(),
            "synth.n_clusters" => self.synth.n_clusters.to_string(),
            "synth.patches_per_cluster" => self.synth.patches_per_cluster.to_string(),
            "synth.dim_struct" => self.synth.dim_struct.to_string(),
            "synth.dim_sem" => self.synth.dim_sem.to_string(),
            "synth.noise_sigma" => self.synth.noise_sigma.to_string(),
            "synth.outlier_count" => self.synth.outlier_count.to_string(),
            "synth.outlier_scale" => self.synth.outlier_scale.to_string(),
            "synth.seed" => self.synth.seed.to_string(),
            "descent.learning_rate" => self.learning_rate.map_or("auto".to_string(), |lr| lr.to_string()),
            "descent.steps" => self.descent.steps.to_string(),
            "descent.record_every" => self.descent.record_every.to_string(),
            _ => return None,
        })
    }

    /// The effective configuration in the same format the loader reads.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            writeln!(s, "{key} = {}", self.get(key).expect("listed key")).unwrap();
        }
        s
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| CliError::Config(format!("invalid value {value:?} for {key}")))
}

/// Splits `KEY=VALUE` as given to `--set`.
pub fn split_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s.split_once('=').ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got {s:?}")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Reads `key = value` lines; blank lines and `#` comments are skipped.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) =
            split_assignment(line).map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if !KEYS.contains(&k.as_str()) {
            return Err(CliError::Config(format!("{}:{}: unknown config key {k:?}", path.display(), n + 1)));
        }
        out.push((k, v));
    }
    Ok(out)
}
