//! Label-level error metrics and the evaluation protocol shared by both
//! backends. Every label is scored against the model's view of the user's
//! history at the label's report time.

use crate::attentive::{predict_score_am, AttentiveError, AttentiveModel};
use crate::cf::{CfError, CfModel, FoldIn};
use crate::corpus::{ScoreLabel, StudentSequence};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("no values to evaluate")]
    EmptyInput,
    #[error("{} label(s) have no history: {}", .0.len(), .0.join(","))]
    MissingHistory(Vec<String>),
    #[error("no prediction available for user `{0}`")]
    NoPrediction(String),
    #[error(transparent)]
    Cf(#[from] CfError),
    #[error(transparent)]
    Attentive(#[from] AttentiveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check(pred: &[f64], labels: &[f64]) -> Result<(), EvalError> {
    if pred.len() != labels.len() {
        return Err(EvalError::LengthMismatch { predictions: pred.len(), labels: labels.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

/// Mean absolute error, summed in input order.
pub fn mae(predictions: &[f64], labels: &[f64]) -> Result<f64, EvalError> {
    check(predictions, labels)?;
    let s: f64 = predictions.iter().zip(labels).map(|(p, l)| (p - l).abs()).sum();
    Ok(s / predictions.len() as f64)
}

/// Root mean squared error.
pub fn rmse(predictions: &[f64], labels: &[f64]) -> Result<f64, EvalError> {
    check(predictions, labels)?;
    let s: f64 = predictions.iter().zip(labels).map(|(p, l)| (p - l) * (p - l)).sum();
    Ok((s / predictions.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub n_labels: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Labels left out because the user had no history.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub user_id: String,
    pub report_time: i64,
    pub label: u32,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    /// One entry per evaluated label, in label order.
    pub residuals: Vec<Residual>,
}

/// Anything that maps a history and a label's context to a total score.
pub trait ScorePredictor: Sync {
    fn model_id(&self) -> String;

    /// `history` holds the user's interactions up to `label.report_time`.
    fn predict(&self, history: &StudentSequence, label: &ScoreLabel) -> Result<f64, EvalError>;
}

/// Latent-factor backend. Known users use their trained vector unless
/// `fold_in_always` is set; unknown users are folded in from their history.
pub struct CfPredictor<'a> {
    pub model: &'a CfModel,
    pub lc_pool: Vec<String>,
    pub rc_pool: Vec<String>,
    pub fold_in: FoldIn,
    pub fold_in_always: bool,
}

impl<'a> CfPredictor<'a> {
    pub fn new(model: &'a CfModel, lc_pool: Vec<String>, rc_pool: Vec<String>) -> Self {
        CfPredictor { model, lc_pool, rc_pool, fold_in: FoldIn::default(), fold_in_always: false }
    }
}

impl ScorePredictor for CfPredictor<'_> {
    fn model_id(&self) -> String {
        "cf".into()
    }

    fn predict(&self, history: &StudentSequence, label: &ScoreLabel) -> Result<f64, EvalError> {
        let m = self.model;
        let p = if m.has_user(&label.user_id) && !self.fold_in_always {
            m.predict_score(&label.user_id, &self.lc_pool, &self.rc_pool)?
        } else {
            let (v, _) = self.fold_in.user_vector(m, &history.events);
            m.predict_score_for(&v, &self.lc_pool, &self.rc_pool)?
        };
        Ok(p.total as f64)
    }
}

pub struct AttentivePredictor<'a>(pub &'a AttentiveModel);

impl ScorePredictor for AttentivePredictor<'_> {
    fn model_id(&self) -> String {
        "attentive".into()
    }

    fn predict(&self, history: &StudentSequence, _: &ScoreLabel) -> Result<f64, EvalError> {
        Ok(predict_score_am(self.0, history)?.prediction.total as f64)
    }
}

/// Constant prediction, normally the training-label mean.
pub struct MeanPredictor(pub f64);

impl MeanPredictor {
    pub fn fit(labels: &[ScoreLabel]) -> Result<Self, EvalError> {
        if labels.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        let s: f64 = labels.iter().map(|l| l.score_total as f64).sum();
        Ok(MeanPredictor(s / labels.len() as f64))
    }
}

impl ScorePredictor for MeanPredictor {
    fn model_id(&self) -> String {
        "mean".into()
    }

    fn predict(&self, _: &StudentSequence, _: &ScoreLabel) -> Result<f64, EvalError> {
        Ok(self.0)
    }
}

/// Precomputed predictions keyed by `(user_id, report_time)`.
pub struct TablePredictor {
    pub id: String,
    pub table: HashMap<(String, i64), f64>,
}

impl ScorePredictor for TablePredictor {
    fn model_id(&self) -> String {
        self.id.clone()
    }

    fn predict(&self, _: &StudentSequence, label: &ScoreLabel) -> Result<f64, EvalError> {
        self.table
            .get(&(label.user_id.clone(), label.report_time))
            .copied()
            .ok_or_else(|| EvalError::NoPrediction(label.user_id.clone()))
    }
}

/// Score every label. Labels whose user has no interaction at or before the
/// report time are errors unless `allow_skip`, in which case they are left
/// out and counted. `max_len` bounds the history handed to the predictor.
pub fn evaluate(
    predictor: &dyn ScorePredictor,
    sequences: &[StudentSequence],
    labels: &[ScoreLabel],
    max_len: usize,
    allow_skip: bool,
) -> Result<Evaluation, EvalError> {
    let by_user: HashMap<&str, &StudentSequence> =
        sequences.iter().map(|s| (s.user_id.as_str(), s)).collect();
    let mut usable = Vec::with_capacity(labels.len());
    let mut missing = Vec::new();
    for l in labels {
        let hist = by_user
            .get(l.user_id.as_str())
            .map(|s| s.history_at(l.report_time, max_len))
            .filter(|h| !h.is_empty());
        match hist {
            Some(h) => usable.push((l, h)),
            None => missing.push(l.user_id.clone()),
        }
    }
    if !missing.is_empty() && !allow_skip {
        return Err(EvalError::MissingHistory(missing));
    }
    let preds = usable.par_iter().map(|(l, h)| predictor.predict(h, l)).collect::<Result<Vec<f64>, _>>()?;
    let truth: Vec<f64> = usable.iter().map(|(l, _)| l.score_total as f64).collect();
    let report = EvalReport {
        model_id: predictor.model_id(),
        n_labels: usable.len(),
        mae: mae(&preds, &truth)?,
        rmse: rmse(&preds, &truth)?,
        skipped: missing.len(),
    };
    assert!(report.mae <= report.rmse * (1.0 + 1e-12) + 1e-12);
    let residuals = usable
        .iter()
        .zip(&preds)
        .map(|((l, _), p)| Residual {
            user_id: l.user_id.clone(),
            report_time: l.report_time,
            label: l.score_total,
            prediction: *p,
        })
        .collect();
    Ok(Evaluation { report, residuals })
}

/// CSV with header `user_id,report_time,label,prediction,residual`.
pub fn write_residuals<W: Write>(w: W, residuals: &[Residual]) -> Result<(), EvalError> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["user_id", "report_time", "label", "prediction", "residual"]).map_err(csv_err)?;
    for r in residuals {
        out.write_record([
            r.user_id.clone(),
            r.report_time.to_string(),
            r.label.to_string(),
            r.prediction.to_string(),
            (r.prediction - r.label as f64).to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> EvalError {
    EvalError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Interaction, Section};

    fn label(u: &str, score: u32, t: i64) -> ScoreLabel {
        ScoreLabel { user_id: u.into(), score_total: score, score_lc: None, score_rc: None, report_time: t }
    }

    fn seq(u: &str, times: &[i64]) -> StudentSequence {
        StudentSequence::new(
            u,
            times
                .iter()
                .map(|&t| Interaction {
                    user_id: u.into(),
                    question_id: "q".into(),
                    section: Section::LC,
                    correct: true,
                    elapsed_ms: 1,
                    time_limit_ms: 2,
                    timestamp: t,
                })
                .collect(),
        )
    }

    #[test]
    fn metric_basics() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[10.0, -10.0], &[0.0, 0.0]).unwrap(), 10.0);
        assert_eq!(rmse(&[3.0, -4.0], &[0.0, 0.0]).unwrap(), 12.5f64.sqrt());
        assert!(matches!(mae(&[], &[]), Err(EvalError::EmptyInput)));
        assert!(matches!(mae(&[1.0], &[]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn single_label_report() {
        let e =
            evaluate(&MeanPredictor(500.0), &[seq("a", &[1])], &[label("a", 620, 5)], 512, false).unwrap();
        assert_eq!(e.report.mae, 120.0);
        assert_eq!(e.report.n_labels, 1);
        assert_eq!(e.residuals[0].prediction, 500.0);
    }

    #[test]
    fn missing_history_is_reported_or_skipped() {
        let seqs = [seq("a", &[1]), seq("b", &[10])];
        let labels = [label("a", 600, 5), label("b", 700, 5), label("c", 100, 5)];
        match evaluate(&MeanPredictor(0.0), &seqs, &labels, 512, false) {
            Err(EvalError::MissingHistory(u)) => assert_eq!(u, vec!["b".to_string(), "c".to_string()]),
            other => panic!("{other:?}"),
        }
        let e = evaluate(&MeanPredictor(0.0), &seqs, &labels, 512, true).unwrap();
        assert_eq!((e.report.n_labels, e.report.skipped), (1, 2));
    }

    #[test]
    fn permutation_invariance() {
        let seqs: Vec<_> = (0..50).map(|i| seq(&format!("u{i}"), &[1])).collect();
        let mut labels: Vec<_> = (0..50).map(|i| label(&format!("u{i}"), (i * 17 % 99) * 10, 3)).collect();
        let a = evaluate(&MeanPredictor(333.3), &seqs, &labels, 512, false).unwrap().report;
        labels.reverse();
        labels.swap(3, 40);
        let b = evaluate(&MeanPredictor(333.3), &seqs, &labels, 512, false).unwrap().report;
        assert!((a.mae - b.mae).abs() < 1e-12);
    }

    #[test]
    fn residual_csv() {
        let mut out = Vec::new();
        let r = [Residual { user_id: "a".into(), report_time: 5, label: 600, prediction: 610.0 }];
        write_residuals(&mut out, &r).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "user_id,report_time,label,prediction,residual\na,5,600,610,10\n"
        );
    }
}
