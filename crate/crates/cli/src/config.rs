//! Run configuration: defaults, an optional TOML file and flag overrides.

use crate::error::CliError;
use scorecast_core::abtest::{BehaviorConfig, CohortSpec};
use scorecast_core::attentive::{EncoderConfig, FinetuneHyper, PretrainHyper};
use scorecast_core::cf::{CfHyper, FoldIn};
use scorecast_core::corpus::SynthConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Quiet,
    Info,
    Debug,
}

/// Artifact directories, relative to `--out-dir` unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { data: "data".into(), models: "models".into(), reports: "reports".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Train, validation and test shares of users.
    pub ratios: [f64; 3],
    /// History length seen by both models.
    pub max_len: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratios: [0.65, 0.12, 0.23], max_len: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    /// Trained models from the models directory.
    Models,
    /// Truth plus Gaussian noise per arm (`oracle_noise`).
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbConfig {
    pub n_users: usize,
    pub ratio_cf: f64,
    pub salt: String,
    pub start_time: i64,
    pub days: u32,
    /// Multiplies every calibrated error sensitivity.
    pub sensitivity: f64,
    /// Explicit sensitivities `[completion, registration, purchase, solved]`;
    /// replaces the calibrated values when set.
    pub beta: Option<[f64; 4]>,
    pub scorer: ScorerKind,
    /// Noise sd of the oracle scorer for the cf and attentive arms.
    pub oracle_noise: [f64; 2],
    /// Give both arms the cf scorer.
    pub aa: bool,
}

impl Default for AbConfig {
    fn default() -> Self {
        let c = CohortSpec::default();
        AbConfig {
            n_users: c.n_users,
            ratio_cf: c.ratio_cf,
            salt: c.salt,
            start_time: c.start_time,
            days: 39,
            sensitivity: 1.0,
            beta: None,
            scorer: ScorerKind::Models,
            oracle_noise: [99.0, 62.0],
            aa: false,
        }
    }
}

impl AbConfig {
    pub fn cohort(&self) -> CohortSpec {
        CohortSpec {
            n_users: self.n_users,
            ratio_cf: self.ratio_cf,
            salt: self.salt.clone(),
            start_time: self.start_time,
        }
    }

    pub fn behavior(&self, seed: u64) -> BehaviorConfig {
        let mut b = BehaviorConfig::paper_calibrated().with_sensitivity(self.sensitivity);
        if let Some([c, r, p, s]) = self.beta {
            b.completion.beta = c;
            b.registration.beta = r;
            b.purchase.beta = p;
            b.solved_penalty = s;
        }
        b.days = self.days;
        b.seed = seed;
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; copied into every stage's seed field.
    pub seed: u64,
    pub log_level: LogLevel,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub cf: CfHyper,
    pub fold_in: FoldIn,
    pub encoder: EncoderConfig,
    pub pretrain: PretrainHyper,
    pub finetune: FinetuneHyper,
    pub abtest: AbConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            log_level: LogLevel::Info,
            paths: Paths::default(),
            synth: SynthConfig {
                n_users: 2_000,
                growth_mean: 1.5,
                growth_sd: 0.5,
                second_label_prob: 0.3,
                ..SynthConfig::default()
            },
            split: SplitConfig::default(),
            cf: CfHyper::default(),
            fold_in: FoldIn::default(),
            encoder: EncoderConfig { d_model: 32, heads: 4, layers: 1, d_ff: 64, max_len: 64 },
            pretrain: PretrainHyper { epochs: 4, ..PretrainHyper::default() },
            finetune: FinetuneHyper { lr: 0.03, epochs: 12, ..FinetuneHyper::default() },
            abtest: AbConfig::default(),
        }
    }
}

/// Parse a `--set` value as a TOML scalar or array, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Apply `key.path=value` to a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set `{assignment}`: expected key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("--set `{assignment}`: empty key segment")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

/// Build the effective config: defaults, then `file`, then `sets`, then `seed`.
pub fn load(file: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut table = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("config file {}: {e}", p.display())))?;
            text.parse::<toml::Table>().map_err(|e| {
                CliError::Config(format!("config file {}: {}", p.display(), one_line(&e.to_string())))
            })?
        }
        None => toml::Table::new(),
    };
    for s in sets {
        apply_override(&mut table, s)?;
    }
    let mut cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(one_line(&e.to_string())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.propagate_seed();
    cfg.validate()?;
    Ok(cfg)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl RunConfig {
    pub fn propagate_seed(&mut self) {
        self.synth.seed = self.seed;
        self.cf.seed = self.seed;
        self.pretrain.seed = self.seed;
        self.finetune.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: &str| Err(CliError::Config(format!("{field}: {msg}")));
        let r = self.split.ratios;
        if r.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split.ratios", "must be non-negative and sum to 1");
        }
        if self.split.max_len == 0 {
            return bad("split.max_len", "must be positive");
        }
        if self.encoder.max_len < self.split.max_len {
            return bad("encoder.max_len", "must be at least split.max_len");
        }
        if let Err(e) = self.synth.validate() {
            return bad("synth", &e.to_string());
        }
        if let Err(e) = self.encoder.validate() {
            return bad("encoder", &e.to_string());
        }
        let a = &self.abtest;
        if !(a.ratio_cf > 0.0 && a.ratio_cf < 1.0) {
            return bad("abtest.ratio_cf", "must lie in (0, 1)");
        }
        if a.n_users == 0 {
            return bad("abtest.n_users", "must be positive");
        }
        if !(a.sensitivity >= 0.0 && a.sensitivity.is_finite()) {
            return bad("abtest.sensitivity", "must be finite and non-negative");
        }
        if a.oracle_noise.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("abtest.oracle_noise", "must be finite and non-negative");
        }
        if let Err(e) = a.behavior(self.seed).validate() {
            return bad("abtest.beta", &e.to_string());
        }
        Ok(())
    }

    pub fn resolve(&self, out_dir: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            out_dir.join(p)
        }
    }
}
