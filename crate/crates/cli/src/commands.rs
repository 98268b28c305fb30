//! Subcommand implementations. Each reads declared inputs, writes declared
//! outputs and records both in the run manifest.

use crate::config::{LogLevel, RunConfig, ScorerKind};
use crate::error::CliError;
use crate::manifest::Artifacts;
use scorecast_core::abtest::{
    compute_metrics, read_journeys, render_text, simulate_cohort, write_gap_csv, write_journeys,
    AttentiveScorer, CfScorer, DiagnosticScorer, EngagementReport, OracleScorer,
};
use scorecast_core::attentive::{
    finetune, pretrain, score_examples, tokenize, write_metrics_log, AttentiveModel, EpochMetrics, Vocab,
};
use scorecast_core::cf::{calibrate_theta_with, train_cf, CfModel, QuadraticFit};
use scorecast_core::corpus::{
    build_sequences, generate_synthetic, parse_interactions, parse_labels, split_dataset, write_interactions,
    write_labels, DatasetSplit, InteractionFormat, PlantedModel, StudentSequence,
};
use scorecast_core::eval::{
    evaluate, write_residuals, AttentivePredictor, CfPredictor, EvalReport, MeanPredictor, ScorePredictor,
};
use scorecast_core::{Interaction, Section};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const PLANTED_FILE: &str = "planted.json";
pub const CF_MODEL_FILE: &str = "cf.sccf";
pub const PRETRAINED_FILE: &str = "attentive-pretrained.scam";
pub const ATTENTIVE_FILE: &str = "attentive.scam";
pub const SCRATCH_FILE: &str = "attentive-scratch.scam";
pub const JOURNEYS_FILE: &str = "journeys.jsonl";

/// Shared state of one invocation.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
    pub force: bool,
    pub art: Artifacts,
}

impl Ctx {
    pub fn new(cfg: RunConfig, out_dir: PathBuf, force: bool) -> Self {
        Ctx { cfg, out_dir, force, art: Artifacts::default() }
    }

    pub fn log(&self, level: LogLevel, msg: impl AsRef<str>) {
        let shown = match self.cfg.log_level {
            LogLevel::Quiet => false,
            LogLevel::Info => level == LogLevel::Info,
            LogLevel::Debug => level != LogLevel::Quiet,
        };
        if shown {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn data(&self, name: &str) -> PathBuf {
        self.cfg.resolve(&self.out_dir, &self.cfg.paths.data).join(name)
    }

    fn models(&self, name: &str) -> PathBuf {
        self.cfg.resolve(&self.out_dir, &self.cfg.paths.models).join(name)
    }

    fn reports(&self, name: &str) -> PathBuf {
        self.cfg.resolve(&self.out_dir, &self.cfg.paths.reports).join(name)
    }

    /// Register an input that must already exist.
    fn need(&mut self, p: PathBuf, hint: &str) -> Result<PathBuf, CliError> {
        if !p.is_file() {
            return Err(CliError::Config(format!("input file {} not found ({hint})", p.display())));
        }
        self.art.input(&p);
        Ok(p)
    }

    /// Register an output; refuses to replace an existing file without `--force`.
    fn out(&mut self, p: PathBuf) -> Result<PathBuf, CliError> {
        if p.exists() && !self.force {
            return Err(CliError::Config(format!(
                "output file {} already exists; pass --force to overwrite",
                p.display()
            )));
        }
        if self.art.inputs.contains(&p) {
            return Err(CliError::Config(format!("{} is both input and output", p.display())));
        }
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        }
        self.art.output(&p);
        Ok(p)
    }
}

fn create(p: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(p).map(BufWriter::new).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn open(p: &Path) -> Result<BufReader<File>, CliError> {
    File::open(p).map(BufReader::new).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn write_json<T: Serialize>(p: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn write_text(p: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

/// JSON and aligned-text versions of one report.
fn emit_report<T: Serialize>(ctx: &mut Ctx, stem: &str, value: &T, text: &str) -> Result<(), CliError> {
    let j = ctx.out(ctx.reports(&format!("{stem}.json")))?;
    let t = ctx.out(ctx.reports(&format!("{stem}.txt")))?;
    write_json(&j, value)?;
    write_text(&t, text)
}

struct Corpus {
    interactions: Vec<Interaction>,
    split: DatasetSplit,
}

fn load_interactions(ctx: &mut Ctx) -> Result<Vec<Interaction>, CliError> {
    let p =
        ctx.need(ctx.data(INTERACTIONS_FILE), "run `scorecast gen-data` or place an interaction log there")?;
    parse_interactions(&p, InteractionFormat::from_path(&p))
        .map_err(|e| CliError::from(e).context(p.display()))
}

fn load_corpus(ctx: &mut Ctx) -> Result<Corpus, CliError> {
    let interactions = load_interactions(ctx)?;
    let p = ctx.need(ctx.data(LABELS_FILE), "run `scorecast gen-data` or place a label file there")?;
    let labels = parse_labels(&p).map_err(|e| CliError::from(e).context(p.display()))?;
    let [a, b, c] = ctx.cfg.split.ratios;
    let split =
        split_dataset(&labels, (a, b, c), ctx.cfg.seed).map_err(|e| CliError::from(e).context("split"))?;
    Ok(Corpus { interactions, split })
}

/// Full per-user histories; each consumer truncates to `max_len` at use.
fn sequences(interactions: &[Interaction]) -> Vec<StudentSequence> {
    build_sequences(interactions, usize::MAX)
}

fn load_cf(ctx: &mut Ctx) -> Result<CfModel, CliError> {
    let p = ctx.need(ctx.models(CF_MODEL_FILE), "run `scorecast train-cf` first")?;
    scorecast_core::cf::read_model(&mut open(&p)?).map_err(|e| CliError::from(e).context(p.display()))
}

fn load_attentive(ctx: &mut Ctx, name: &str, hint: &str) -> Result<AttentiveModel, CliError> {
    let p = ctx.need(ctx.models(name), hint)?;
    AttentiveModel::load(&p).map_err(|e| CliError::from(e).context(p.display()))
}

#[derive(Debug, Serialize)]
struct DataReport {
    n_users: usize,
    n_questions: usize,
    n_interactions: usize,
    n_labels: usize,
    split_users: [usize; 3],
    split_labels: [usize; 3],
    mean_total_score: f64,
}

pub fn gen_data(ctx: &mut Ctx) -> Result<(), CliError> {
    let inter = ctx.out(ctx.data(INTERACTIONS_FILE))?;
    let labels = ctx.out(ctx.data(LABELS_FILE))?;
    let planted = ctx.out(ctx.data(PLANTED_FILE))?;
    ctx.log(LogLevel::Info, format!("generating {} synthetic users", ctx.cfg.synth.n_users));
    let corpus = generate_synthetic(&ctx.cfg.synth)?;
    write_interactions(&inter, InteractionFormat::Csv, &corpus.interactions)?;
    write_labels(&labels, &corpus.labels)?;
    write_json(&planted, &corpus.planted)?;

    let [a, b, c] = ctx.cfg.split.ratios;
    let split = split_dataset(&corpus.labels, (a, b, c), ctx.cfg.seed)?;
    let report = DataReport {
        n_users: corpus.users.len(),
        n_questions: corpus.planted.n_questions(),
        n_interactions: corpus.interactions.len(),
        n_labels: corpus.labels.len(),
        split_users: split.partitions().map(|p| p.users.len()),
        split_labels: split.partitions().map(|p| p.labels.len()),
        mean_total_score: corpus.labels.iter().map(|l| l.score_total as f64).sum::<f64>()
            / corpus.labels.len() as f64,
    };
    let text = format!(
        "{:<16}{:>10}\n{:<16}{:>10}\n{:<16}{:>10}\n{:<16}{:>10}\n{:<16}{:>10.1}\n{:<16}{:>10}\n",
        "users",
        report.n_users,
        "questions",
        report.n_questions,
        "interactions",
        report.n_interactions,
        "labels",
        report.n_labels,
        "mean score",
        report.mean_total_score,
        "split users",
        format!("{}/{}/{}", report.split_users[0], report.split_users[1], report.split_users[2]),
    );
    emit_report(ctx, "data", &report, &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct CfReport {
    n_users: usize,
    n_questions: usize,
    k: usize,
    loss_history: Vec<f64>,
    fit_lc: QuadraticFit,
    fit_rc: QuadraticFit,
    calibration_labels: usize,
    calibration_skipped: usize,
}

pub fn train_cf_cmd(ctx: &mut Ctx) -> Result<(), CliError> {
    let corpus = load_corpus(ctx)?;
    let model_path = ctx.out(ctx.models(CF_MODEL_FILE))?;
    let max_len = ctx.cfg.split.max_len;
    ctx.log(
        LogLevel::Info,
        format!("training latent-factor model on {} interactions", corpus.interactions.len()),
    );
    let out =
        train_cf(&corpus.interactions, &ctx.cfg.cf).map_err(|e| CliError::from(e).context("train-cf"))?;
    let mut model = out.model;
    for (e, l) in out.loss_history.iter().enumerate() {
        ctx.log(LogLevel::Debug, format!("  epoch {e:>3} objective {l:.4}"));
    }
    let lc = model.section_pool(Section::LC);
    let rc = model.section_pool(Section::RC);
    let seqs = sequences(&corpus.interactions);
    let by_user: HashMap<&str, &StudentSequence> = seqs.iter().map(|s| (s.user_id.as_str(), s)).collect();
    let fold = ctx.cfg.fold_in;
    let (theta, [fit_lc, fit_rc], skipped) =
        calibrate_theta_with(&model, &corpus.split.train.labels, &lc, &rc, |l| {
            let h = by_user.get(l.user_id.as_str())?.history_at(l.report_time, max_len);
            Some(fold.user_vector(&model, &h.events).0)
        })
        .map_err(|e| CliError::from(e).context("score calibration"))?;
    model.theta = theta;
    let mut w = create(&model_path)?;
    scorecast_core::cf::write_model(&mut w, &model)?;
    w.flush()?;

    let report = CfReport {
        n_users: model.user_ids.len(),
        n_questions: model.question_ids.len(),
        k: model.factors.k,
        loss_history: out.loss_history,
        fit_lc,
        fit_rc,
        calibration_labels: corpus.split.train.labels.len() - skipped,
        calibration_skipped: skipped,
    };
    let mut text = format!(
        "{:<22}{:>12}\n{:<22}{:>12}\n{:<22}{:>12}\n{:<22}{:>12.5}\n{:<22}{:>12.5}\n",
        "users",
        report.n_users,
        "questions",
        report.n_questions,
        "k",
        report.k,
        "initial objective",
        report.loss_history[0],
        "final objective",
        report.loss_history[report.loss_history.len() - 1],
    );
    for (name, f) in [("LC", &report.fit_lc), ("RC", &report.fit_rc)] {
        text.push_str(&format!(
            "{:<22}{:>12.2}  [{:.2}, {:.2}, {:.2}]\n",
            format!("{name} fit rmse / coeffs"),
            f.rmse,
            f.coeffs[0],
            f.coeffs[1],
            f.coeffs[2]
        ));
    }
    emit_report(ctx, "cf-train", &report, &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainReport {
    stage: &'static str,
    history: Vec<EpochMetrics>,
    best_epoch: Option<usize>,
}

fn history_text(stage: &str, history: &[EpochMetrics], best: Option<usize>) -> String {
    let opt = |v: Option<f64>, prec: usize| v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "-".into());
    let mut s = format!(
        "{stage}\n{:>6}{:>12}{:>12}{:>12}{:>12}\n",
        "epoch", "loss", "masked_acc", "train_mae", "val_mae"
    );
    for h in history {
        s.push_str(&format!(
            "{:>6}{:>12.5}{:>12}{:>12}{:>12}{}\n",
            h.epoch,
            h.loss,
            opt(h.masked_accuracy, 4),
            opt(h.train_mae, 2),
            opt(h.val_mae, 2),
            if Some(h.epoch) == best { "  *" } else { "" }
        ));
    }
    s
}

pub fn pretrain_cmd(ctx: &mut Ctx) -> Result<(), CliError> {
    let interactions = load_interactions(ctx)?;
    let model_path = ctx.out(ctx.models(PRETRAINED_FILE))?;
    let log_path = ctx.out(ctx.reports("pretrain-metrics.jsonl"))?;
    let max_len = ctx.cfg.split.max_len;
    let vocab = Vocab::build(&interactions);
    let toks: Vec<_> = sequences(&interactions).iter().map(|s| tokenize(s, &vocab, max_len).seq).collect();
    ctx.log(LogLevel::Info, format!("pre-training on {} sequences", toks.len()));
    let init = AttentiveModel::new(ctx.cfg.encoder, vocab, ctx.cfg.seed)?;
    let out = pretrain(init, &toks, &ctx.cfg.pretrain).map_err(|e| CliError::from(e).context("pretrain"))?;
    out.model.save(&model_path)?;
    write_metrics_log(create(&log_path)?, &out.history)?;
    let text = history_text("pre-training (mean BCE per masked label)", &out.history, None);
    ctx.log(LogLevel::Debug, &text);
    let report = TrainReport { stage: "pretrain", history: out.history, best_epoch: None };
    emit_report(ctx, "pretrain", &report, &text)?;
    print!("{text}");
    Ok(())
}

pub fn finetune_cmd(ctx: &mut Ctx, from_scratch: bool) -> Result<(), CliError> {
    let corpus = load_corpus(ctx)?;
    let start = if from_scratch {
        let vocab = Vocab::build(&corpus.interactions);
        AttentiveModel::new(ctx.cfg.encoder, vocab, ctx.cfg.seed)?
    } else {
        load_attentive(ctx, PRETRAINED_FILE, "run `scorecast pretrain` first")?
    };
    let (name, stem) =
        if from_scratch { (SCRATCH_FILE, "finetune-scratch") } else { (ATTENTIVE_FILE, "finetune") };
    let model_path = ctx.out(ctx.models(name))?;
    let log_path = ctx.out(ctx.reports(&format!("{stem}-metrics.jsonl")))?;
    let max_len = ctx.cfg.split.max_len;
    let seqs = sequences(&corpus.interactions);
    let train = score_examples(&start.vocab, max_len, &seqs, &corpus.split.train.labels);
    let val = score_examples(&start.vocab, max_len, &seqs, &corpus.split.validation.labels);
    ctx.log(LogLevel::Info, format!("fine-tuning on {} labels ({} validation)", train.len(), val.len()));
    let out = finetune(&start, &train, &val, &ctx.cfg.finetune)
        .map_err(|e| CliError::from(e).context("finetune"))?;
    out.model.save(&model_path)?;
    write_metrics_log(create(&log_path)?, &out.history)?;
    let text =
        history_text("fine-tuning (MSE on score/990; MAE in points)", &out.history, Some(out.best_epoch));
    let report = TrainReport {
        stage: if from_scratch { "finetune-scratch" } else { "finetune" },
        history: out.history,
        best_epoch: Some(out.best_epoch),
    };
    emit_report(ctx, stem, &report, &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cf,
    Attentive,
}

#[derive(Debug, Serialize)]
struct PredictionRecord {
    user_id: String,
    model: ModelKind,
    at: Option<i64>,
    history_len: usize,
    score_lc: Option<u32>,
    score_rc: Option<u32>,
    total: u32,
    unknown_questions: usize,
    no_history: bool,
    warning: Option<String>,
}

pub fn predict_cmd(
    ctx: &mut Ctx,
    model: ModelKind,
    users: &[String],
    at: Option<i64>,
) -> Result<(), CliError> {
    if users.is_empty() {
        return Err(CliError::Config("predict: --user is required".into()));
    }
    let interactions = load_interactions(ctx)?;
    let seqs = sequences(&interactions);
    let by_user: HashMap<&str, &StudentSequence> = seqs.iter().map(|s| (s.user_id.as_str(), s)).collect();
    let max_len = ctx.cfg.split.max_len;
    let history = |u: &str| match by_user.get(u) {
        Some(s) => s.history_at(at.unwrap_or(i64::MAX), max_len),
        None => StudentSequence::new(u, Vec::new()),
    };
    let mut records = Vec::with_capacity(users.len());
    match model {
        ModelKind::Cf => {
            let m = load_cf(ctx)?;
            let (lc, rc) = (m.section_pool(Section::LC), m.section_pool(Section::RC));
            for u in users {
                let h = history(u);
                let (v, used) = ctx.cfg.fold_in.user_vector(&m, &h.events);
                let p = m.predict_score_for(&v, &lc, &rc)?;
                records.push(PredictionRecord {
                    user_id: u.clone(),
                    model,
                    at,
                    history_len: h.len(),
                    score_lc: p.score_lc,
                    score_rc: p.score_rc,
                    total: p.total,
                    unknown_questions: h.len() - used,
                    no_history: h.is_empty(),
                    warning: None,
                });
            }
        }
        ModelKind::Attentive => {
            let m = load_attentive(ctx, ATTENTIVE_FILE, "run `scorecast finetune` first")?;
            for u in users {
                let h = history(u);
                let p = scorecast_core::attentive::predict_score_am(&m, &h)?;
                records.push(PredictionRecord {
                    user_id: u.clone(),
                    model,
                    at,
                    history_len: h.len(),
                    score_lc: p.prediction.score_lc,
                    score_rc: p.prediction.score_rc,
                    total: p.prediction.total,
                    unknown_questions: p.unknown,
                    no_history: p.no_history,
                    warning: None,
                });
            }
        }
    }
    for r in &mut records {
        if r.no_history {
            let w = format!("user `{}` has no history; prediction uses the unknown-user path", r.user_id);
            ctx.log(LogLevel::Info, format!("warning: {w}"));
            r.warning = Some(w);
        }
    }
    let mut text =
        format!("{:<16}{:>8}{:>8}{:>8}{:>10}  {}\n", "user", "LC", "RC", "total", "history", "flags");
    let opt = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
    for r in &records {
        text.push_str(&format!(
            "{:<16}{:>8}{:>8}{:>8}{:>10}  {}\n",
            r.user_id,
            opt(r.score_lc),
            opt(r.score_rc),
            r.total,
            r.history_len,
            if r.no_history { "no_history" } else { "" }
        ));
    }
    let stem = match model {
        ModelKind::Cf => "predict-cf",
        ModelKind::Attentive => "predict-attentive",
    };
    emit_report(ctx, stem, &records, &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvalModel {
    Cf,
    Attentive,
    Scratch,
    Mean,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalSummary {
    pub partition: Partition,
    pub reports: Vec<EvalReport>,
}

pub fn eval_text(s: &EvalSummary) -> String {
    let mut text = format!(
        "{:<12}{:>8}{:>10}{:>10}{:>9}\n",
        format!("{:?}", s.partition).to_lowercase(),
        "labels",
        "MAE",
        "RMSE",
        "skipped"
    );
    for r in &s.reports {
        text.push_str(&format!(
            "{:<12}{:>8}{:>10.2}{:>10.2}{:>9}\n",
            r.model_id, r.n_labels, r.mae, r.rmse, r.skipped
        ));
    }
    text
}

pub fn evaluate_cmd(
    ctx: &mut Ctx,
    partition: Partition,
    models: &[EvalModel],
    allow_skip: bool,
) -> Result<(), CliError> {
    if models.is_empty() {
        return Err(CliError::Config("evaluate: --models must name at least one model".into()));
    }
    let corpus = load_corpus(ctx)?;
    let labels = match partition {
        Partition::Train => &corpus.split.train.labels,
        Partition::Validation => &corpus.split.validation.labels,
        Partition::Test => &corpus.split.test.labels,
    };
    let pname = format!("{partition:?}").to_lowercase();
    let seqs = sequences(&corpus.interactions);
    let max_len = ctx.cfg.split.max_len;
    let mut reports = Vec::new();
    for &m in models {
        let residual_path =
            ctx.out(ctx.reports(&format!("residuals-{}-{pname}.csv", format!("{m:?}").to_lowercase())))?;
        let evaluation = match m {
            EvalModel::Cf => {
                let model = load_cf(ctx)?;
                let mut p = CfPredictor::new(
                    &model,
                    model.section_pool(Section::LC),
                    model.section_pool(Section::RC),
                );
                p.fold_in = ctx.cfg.fold_in;
                p.fold_in_always = true;
                evaluate(&p, &seqs, labels, max_len, allow_skip)?
            }
            EvalModel::Attentive | EvalModel::Scratch => {
                let (file, hint) = if m == EvalModel::Attentive {
                    (ATTENTIVE_FILE, "run `scorecast finetune` first")
                } else {
                    (SCRATCH_FILE, "run `scorecast finetune --from-scratch` first")
                };
                let model = load_attentive(ctx, file, hint)?;
                let p: &dyn ScorePredictor = &AttentivePredictor(&model);
                let mut e = evaluate(p, &seqs, labels, max_len, allow_skip)?;
                if m == EvalModel::Scratch {
                    e.report.model_id = "scratch".into();
                }
                e
            }
            EvalModel::Mean => {
                let p = MeanPredictor::fit(&corpus.split.train.labels)?;
                evaluate(&p, &seqs, labels, max_len, allow_skip)?
            }
        };
        write_residuals(create(&residual_path)?, &evaluation.residuals)?;
        ctx.log(
            LogLevel::Info,
            format!(
                "{}: MAE {:.2} over {} labels",
                evaluation.report.model_id, evaluation.report.mae, evaluation.report.n_labels
            ),
        );
        reports.push(evaluation.report);
    }
    let summary = EvalSummary { partition, reports };
    let text = eval_text(&summary);
    emit_report(ctx, &format!("eval-{pname}"), &summary, &text)?;
    print!("{text}");
    Ok(())
}

/// Flag overrides for the abtest block.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct AbFlags {
    /// Number of simulated users.
    #[arg(long)]
    pub n_users: Option<usize>,
    /// Share of users assigned to the latent-factor arm.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Hash salt for arm assignment.
    #[arg(long)]
    pub salt: Option<String>,
    /// Experiment length in days.
    #[arg(long)]
    pub days: Option<u32>,
    /// Error sensitivities `completion,registration,purchase,solved`.
    #[arg(long, value_delimiter = ',', value_name = "C,R,P,S")]
    pub beta: Option<Vec<f64>>,
    /// Multiplier on the calibrated sensitivities.
    #[arg(long)]
    pub sensitivity: Option<f64>,
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerKind>,
    /// A/A run: both arms use the latent-factor scorer.
    #[arg(long)]
    pub aa: bool,
}

impl AbFlags {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        let a = &mut cfg.abtest;
        if let Some(v) = self.n_users {
            a.n_users = v;
        }
        if let Some(v) = self.ratio {
            a.ratio_cf = v;
        }
        if let Some(v) = &self.salt {
            a.salt = v.clone();
        }
        if let Some(v) = self.days {
            a.days = v;
        }
        if let Some(v) = &self.beta {
            let b: [f64; 4] = v
                .as_slice()
                .try_into()
                .map_err(|_| CliError::Config(format!("--beta: expected 4 values, got {}", v.len())))?;
            a.beta = Some(b);
        }
        if let Some(v) = self.sensitivity {
            a.sensitivity = v;
        }
        if let Some(v) = self.scorer {
            a.scorer = v;
        }
        if self.aa {
            a.aa = true;
        }
        cfg.validate()
    }
}

pub fn abtest_cmd(ctx: &mut Ctx) -> Result<(), CliError> {
    let planted_path = ctx.need(ctx.data(PLANTED_FILE), "run `scorecast gen-data` first")?;
    let planted: PlantedModel = serde_json::from_reader(open(&planted_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", planted_path.display())))?;
    let ab = ctx.cfg.abtest.clone();
    let (cf_model, am_model) = match ab.scorer {
        ScorerKind::Models => (
            Some(load_cf(ctx)?),
            if ab.aa {
                None
            } else {
                Some(load_attentive(ctx, ATTENTIVE_FILE, "run `scorecast finetune` first")?)
            },
        ),
        ScorerKind::Oracle => (None, None),
    };
    let journeys_path = ctx.out(ctx.reports(JOURNEYS_FILE))?;
    let gap_path = ctx.out(ctx.reports("abtest-gap.csv"))?;

    let oracle =
        [OracleScorer { noise_sd: ab.oracle_noise[0] }, OracleScorer { noise_sd: ab.oracle_noise[1] }];
    let cf_scorer = cf_model.as_ref().map(|m| CfScorer {
        model: m,
        lc_pool: m.section_pool(Section::LC),
        rc_pool: m.section_pool(Section::RC),
        fold_in: ctx.cfg.fold_in,
    });
    let am_scorer = am_model.as_ref().map(AttentiveScorer::new).transpose()?;
    let first: &dyn DiagnosticScorer = match &cf_scorer {
        Some(s) => s,
        None => &oracle[0],
    };
    let second: &dyn DiagnosticScorer = if ab.aa {
        first
    } else {
        match &am_scorer {
            Some(s) => s,
            None => &oracle[1],
        }
    };
    let behavior = ab.behavior(ctx.cfg.seed);
    ctx.log(LogLevel::Info, format!("simulating {} users over {} days", ab.n_users, ab.days));
    let journeys = simulate_cohort(first, second, &planted, &ab.cohort(), &behavior)?;
    let report = compute_metrics(&journeys, ab.days)?;
    write_journeys(create(&journeys_path)?, &journeys)?;
    write_gap_csv(create(&gap_path)?, &report)?;
    let mae = |arm| {
        let v: Vec<f64> = journeys.iter().filter(|j| j.arm == arm).map(|j| j.abs_error).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mut text = format!(
        "{:<24}{:>16.2}{:>16.2}\n\n",
        "Diagnostic MAE",
        mae(scorecast_core::abtest::Arm::Cf),
        mae(scorecast_core::abtest::Arm::Attentive)
    );
    text.push_str(&render_text(&report));
    emit_report(ctx, "abtest", &report, &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct Summary {
    engagement: EngagementReport,
    evaluation: Option<EvalSummary>,
}

pub fn report_cmd(ctx: &mut Ctx, journeys: Option<PathBuf>) -> Result<(), CliError> {
    let jp = journeys.unwrap_or_else(|| ctx.reports(JOURNEYS_FILE));
    let jp = ctx.need(jp, "run `scorecast abtest` first or pass --journeys")?;
    let js = read_journeys(open(&jp)?).map_err(|e| CliError::from(e).context(jp.display()))?;
    let days = js.first().map(|j| j.solved_per_day.len() as u32).unwrap_or(0);
    if let Some(j) = js.iter().find(|j| j.solved_per_day.len() as u32 != days) {
        return Err(CliError::Data(format!(
            "{}: journey {} covers {} days, expected {days}",
            jp.display(),
            j.user_id,
            j.solved_per_day.len()
        )));
    }
    let engagement = compute_metrics(&js, days)?;
    let ep = ctx.reports("eval-test.json");
    let evaluation = if ep.is_file() {
        ctx.art.input(&ep);
        Some(
            serde_json::from_reader(open(&ep)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", ep.display())))?,
        )
    } else {
        None
    };
    let gap = ctx.out(ctx.reports("summary-gap.csv"))?;
    write_gap_csv(create(&gap)?, &engagement)?;
    let mut text = String::new();
    if let Some(e) = &evaluation {
        text.push_str("Score prediction\n");
        text.push_str(&eval_text(e));
        text.push('\n');
    }
    text.push_str(&render_text(&engagement));
    let summary = Summary { engagement, evaluation };
    emit_report(ctx, "summary", &summary, &text)?;
    print!("{text}");
    Ok(())
}
