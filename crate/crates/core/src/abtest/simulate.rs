use super::{assign_arm, AbError, Arm, BehaviorConfig};
use crate::attentive::{predict_score_am, AttentiveModel, HeadKind};
use crate::cf::{CfModel, FoldIn};
use crate::corpus::{Interaction, PlantedModel, StudentSequence};
use crate::rng::{self, Rng};
use crate::score::{clamp_round, MAX_TOTAL_SCORE};
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const DAY_MS: i64 = 86_400_000;

/// Produces the score shown after a diagnostic.
pub trait DiagnosticScorer: Sync {
    /// `true_score` and `rng` are only for synthetic scorers; model-backed
    /// scorers must ignore them.
    fn predict(&self, responses: &[Interaction], true_score: f64, rng: &mut Rng) -> Result<f64, AbError>;
}

/// Latent-factor scorer: folds the responses into a user vector.
pub struct CfScorer<'a> {
    pub model: &'a CfModel,
    pub lc_pool: Vec<String>,
    pub rc_pool: Vec<String>,
    pub fold_in: FoldIn,
}

impl DiagnosticScorer for CfScorer<'_> {
    fn predict(&self, responses: &[Interaction], _: f64, _: &mut Rng) -> Result<f64, AbError> {
        let (v, _) = self.fold_in.user_vector(self.model, responses);
        let p = self
            .model
            .predict_score_for(&v, &self.lc_pool, &self.rc_pool)
            .map_err(|e| AbError::Scorer(e.to_string()))?;
        Ok(p.total as f64)
    }
}

pub struct AttentiveScorer<'a>(&'a AttentiveModel);

impl<'a> AttentiveScorer<'a> {
    /// Fails unless the model carries a fine-tuned score head.
    pub fn new(model: &'a AttentiveModel) -> Result<Self, AbError> {
        if model.head.kind != HeadKind::Score {
            return Err(AbError::UntrainedModel("attentive model has no score head".into()));
        }
        Ok(AttentiveScorer(model))
    }
}

impl DiagnosticScorer for AttentiveScorer<'_> {
    fn predict(&self, responses: &[Interaction], _: f64, _: &mut Rng) -> Result<f64, AbError> {
        let user = responses.first().map(|r| r.user_id.clone()).unwrap_or_default();
        let seq = StudentSequence::new(user, responses.to_vec());
        let p = predict_score_am(self.0, &seq).map_err(|e| AbError::Scorer(e.to_string()))?;
        Ok(p.prediction.total as f64)
    }
}

/// Truth plus Gaussian noise, clamped and rounded like a real prediction.
/// Mean absolute error is about `0.8 * noise_sd` away from the clamp bounds.
pub struct OracleScorer {
    pub noise_sd: f64,
}

impl DiagnosticScorer for OracleScorer {
    fn predict(&self, _: &[Interaction], true_score: f64, rng: &mut Rng) -> Result<f64, AbError> {
        let noise = if self.noise_sd > 0.0 {
            Normal::new(0.0, self.noise_sd).map_err(|e| AbError::InvalidConfig(e.to_string()))?.sample(rng)
        } else {
            0.0
        };
        Ok(clamp_round(true_score + noise, MAX_TOTAL_SCORE) as f64)
    }
}

/// Who enters the experiment and how they are split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub n_users: usize,
    pub ratio_cf: f64,
    pub salt: String,
    /// Epoch milliseconds of day 0.
    pub start_time: i64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_users: 10_000,
            ratio_cf: 0.7478,
            salt: "score-ab".into(),
            start_time: 1_582_502_400_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserJourney {
    pub user_id: String,
    pub arm: Arm,
    /// Day index (from 0) on which the user arrived.
    pub join_day: u32,
    pub diagnostic_len: u32,
    pub true_score: u32,
    pub predicted_score: u32,
    pub abs_error: f64,
    pub diagnostic_started: bool,
    pub diagnostic_completed: bool,
    pub registered: bool,
    /// Questions answered after the diagnostic, per experiment day.
    pub solved_per_day: Vec<u32>,
    pub questions_solved: u64,
    pub purchased: bool,
    pub revenue_cents: i64,
}

impl UserJourney {
    /// Funnel ordering and revenue consistency.
    pub fn is_consistent(&self) -> bool {
        (!self.registered || self.diagnostic_completed)
            && (!self.diagnostic_completed || self.diagnostic_started)
            && (!self.purchased || self.registered)
            && ((self.revenue_cents > 0) == self.purchased)
            && self.questions_solved == self.solved_per_day.iter().map(|&c| c as u64).sum::<u64>()
            && (self.diagnostic_completed || self.questions_solved == 0)
    }
}

fn user_id(i: usize) -> String {
    format!("s{i:07}")
}

/// Simulate one user; all randomness comes from `(cfg.seed, user_id)`.
fn simulate_user(
    i: usize,
    scorers: [&dyn DiagnosticScorer; 2],
    planted: &PlantedModel,
    spec: &CohortSpec,
    cfg: &BehaviorConfig,
) -> Result<UserJourney, AbError> {
    let id = user_id(i);
    let arm = assign_arm(&id, &spec.salt, spec.ratio_cf).arm;
    let mut r = rng::rng(rng::derive_str(cfg.seed, &id));
    let user = planted.sample_user(id.clone(), &mut r);
    let (lc, rc) = planted.true_scores(&user, 0.0);
    let true_score = lc + rc;

    let join_day = r.random_range(0..cfg.days);
    let len = r.random_range(7..=11usize).min(planted.n_questions());
    let mut ts = spec.start_time + join_day as i64 * DAY_MS + r.random_range(0..DAY_MS / 2);
    let mut responses = Vec::with_capacity(len);
    for q in sample(&mut r, planted.n_questions(), len).into_iter() {
        responses.push(planted.respond(&user, q, 0.0, ts, &mut r).0);
        ts += r.random_range(5_000..60_000);
    }
    let scorer = scorers[match arm {
        Arm::Cf => 0,
        Arm::Attentive => 1,
    }];
    let predicted = clamp_round(scorer.predict(&responses, true_score as f64, &mut r)?, MAX_TOTAL_SCORE);
    let err = (predicted as f64 - true_score as f64).abs();

    let completed = r.random::<f64>() < cfg.completion.prob(err);
    let registered = completed && r.random::<f64>() < cfg.registration.prob(err);
    let purchased = registered && r.random::<f64>() < cfg.purchase.prob(err);

    let mut solved_per_day = vec![0u32; cfg.days as usize];
    if completed {
        let mean = cfg.solved_mean * (-cfg.solved_penalty * err).exp();
        if mean > 0.0 {
            let shape = cfg.solved_shape;
            let level = Gamma::new(shape, mean / shape)
                .map_err(|e| AbError::InvalidConfig(e.to_string()))?
                .sample(&mut r);
            let active = (cfg.days - join_day) as f64;
            let per_day = level / active;
            if per_day > 0.0 {
                let pois = Poisson::new(per_day).map_err(|e| AbError::InvalidConfig(e.to_string()))?;
                for c in &mut solved_per_day[join_day as usize..] {
                    *c = pois.sample(&mut r) as u32;
                }
            }
        }
    }
    Ok(UserJourney {
        user_id: id,
        arm,
        join_day,
        diagnostic_len: len as u32,
        true_score,
        predicted_score: predicted,
        abs_error: err,
        diagnostic_started: true,
        diagnostic_completed: completed,
        registered,
        questions_solved: solved_per_day.iter().map(|&c| c as u64).sum(),
        solved_per_day,
        purchased,
        revenue_cents: if purchased { cfg.price_cents } else { 0 },
    })
}

/// Run the experiment on `spec.n_users` users drawn from `planted`. Each user
/// takes a 7-11 question diagnostic, sees the prediction of their arm's scorer
/// and moves through the funnel with probabilities that depend on the
/// absolute error of that prediction. Output is in user order and does not
/// depend on thread scheduling.
pub fn simulate_cohort(
    cf: &dyn DiagnosticScorer,
    attentive: &dyn DiagnosticScorer,
    planted: &PlantedModel,
    spec: &CohortSpec,
    cfg: &BehaviorConfig,
) -> Result<Vec<UserJourney>, AbError> {
    cfg.validate()?;
    if spec.n_users == 0 {
        return Err(AbError::EmptyInput);
    }
    if !(spec.ratio_cf > 0.0 && spec.ratio_cf < 1.0) {
        return Err(AbError::InvalidConfig("ratio_cf must lie in (0, 1)".into()));
    }
    (0..spec.n_users).into_par_iter().map(|i| simulate_user(i, [cf, attentive], planted, spec, cfg)).collect()
}
