//! Planted-model synthetic data.
//!
//! A [`PlantedModel`] holds a question bank with latent vectors and a shared
//! logistic link. Each simulated user has a latent vector whose first
//! coordinate (general ability) may drift linearly over the user's history.
//! Responses are Bernoulli draws from the link, response times shrink with
//! `L_i · R_j`, and a user's true section score is an affine function of the
//! mean correctness probability over that section's bank at report time.

use super::{CorpusError, Interaction, ScoreLabel, Section};
use crate::cf::PhiParams;
use crate::rng::{self, Rng};
use crate::score::{clamp_round, MAX_SECTION_SCORE};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

const DAY_MS: i64 = 86_400_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_questions: usize,
    pub latent_dim: usize,
    /// Probability that a drawn response is flipped.
    pub noise: f64,
    pub seed: u64,
    pub min_events: usize,
    pub max_events: usize,
    pub lc_fraction: f64,
    pub ability_sd: f64,
    pub difficulty_sd: f64,
    /// Spread of the latent coordinates beyond ability and difficulty.
    pub factor_sd: f64,
    /// Mean ability gained between a user's first and last interaction.
    pub growth_mean: f64,
    pub growth_sd: f64,
    pub phi: PhiParams,
    pub time_limit_ms: u64,
    /// Chance that a user also reports a score midway through their history.
    pub second_label_prob: f64,
    /// Mean section probability mapped to a section score of 0 / 495.
    pub score_prob_floor: f64,
    pub score_prob_ceiling: f64,
    pub start_time: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 2_000,
            n_questions: 200,
            latent_dim: 3,
            noise: 0.0,
            seed: 0,
            min_events: 20,
            max_events: 60,
            lc_fraction: 0.5,
            ability_sd: 1.0,
            difficulty_sd: 1.0,
            factor_sd: 0.5,
            growth_mean: 0.0,
            growth_sd: 0.0,
            phi: PhiParams::default(),
            time_limit_ms: 45_000,
            second_label_prob: 0.0,
            score_prob_floor: 0.3,
            score_prob_ceiling: 0.95,
            start_time: 1_582_502_400_000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidConfig(m));
        if self.n_users == 0 || self.n_questions == 0 || self.latent_dim == 0 {
            return bad("n_users, n_questions and latent_dim must be positive".into());
        }
        if !(0.0..0.5).contains(&self.noise) {
            return bad(format!("noise = {} must lie in [0, 0.5)", self.noise));
        }
        if self.min_events == 0 || self.min_events > self.max_events {
            return bad("need 0 < min_events <= max_events".into());
        }
        if !(0.0..=1.0).contains(&self.lc_fraction) || !(0.0..=1.0).contains(&self.second_label_prob) {
            return bad("lc_fraction and second_label_prob must lie in [0, 1]".into());
        }
        if self.ability_sd < 0.0 || self.difficulty_sd < 0.0 || self.factor_sd < 0.0 || self.growth_sd < 0.0 {
            return bad("standard deviations must be non-negative".into());
        }
        if self.score_prob_floor >= self.score_prob_ceiling {
            return bad("score_prob_floor must be below score_prob_ceiling".into());
        }
        if self.time_limit_ms == 0 {
            return bad("time_limit_ms must be positive".into());
        }
        self.phi.validate().map_err(CorpusError::InvalidConfig)
    }
}

/// A simulated student: latent vector at the start of their history plus the
/// ability gained by its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedUser {
    pub user_id: String,
    pub vector: Vec<f64>,
    pub growth: f64,
}

impl PlantedUser {
    /// Latent vector after a fraction `progress` of the user's history.
    pub fn vector_at(&self, progress: f64) -> Vec<f64> {
        let mut v = self.vector.clone();
        v[0] += self.growth * progress;
        v
    }
}

/// The generating model behind a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    pub question_ids: Vec<String>,
    pub sections: Vec<Section>,
    pub question_vectors: Vec<Vec<f64>>,
    pub phi: PhiParams,
    pub noise: f64,
    pub time_limit_ms: u64,
    pub score_prob_floor: f64,
    pub score_prob_ceiling: f64,
    ability_sd: f64,
    factor_sd: f64,
    growth_mean: f64,
    growth_sd: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl PlantedModel {
    pub fn new(cfg: &SynthConfig) -> Result<Self, CorpusError> {
        cfg.validate()?;
        let mut rng = rng::rng_for(cfg.seed, u64::MAX);
        let k = cfg.latent_dim;
        let n_lc = (cfg.n_questions as f64 * cfg.lc_fraction).round() as usize;
        let mut question_ids = Vec::with_capacity(cfg.n_questions);
        let mut sections = Vec::with_capacity(cfg.n_questions);
        let mut question_vectors = Vec::with_capacity(cfg.n_questions);
        for j in 0..cfg.n_questions {
            question_ids.push(format!("q{j:05}"));
            sections.push(if j < n_lc { Section::LC } else { Section::RC });
            let mut r = vec![0.0; k];
            let g: f64 = rng.sample(StandardNormal);
            r[0] = (1.0 + 0.15 * g).max(0.3);
            if k >= 2 {
                let d: f64 = rng.sample(StandardNormal);
                r[1] = -cfg.difficulty_sd * d;
            }
            for x in r.iter_mut().skip(2) {
                let g: f64 = rng.sample(StandardNormal);
                *x = cfg.factor_sd * g;
            }
            question_vectors.push(r);
        }
        Ok(PlantedModel {
            question_ids,
            sections,
            question_vectors,
            phi: cfg.phi,
            noise: cfg.noise,
            time_limit_ms: cfg.time_limit_ms,
            score_prob_floor: cfg.score_prob_floor,
            score_prob_ceiling: cfg.score_prob_ceiling,
            ability_sd: cfg.ability_sd,
            factor_sd: cfg.factor_sd,
            growth_mean: cfg.growth_mean,
            growth_sd: cfg.growth_sd,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.question_vectors.first().map_or(0, Vec::len)
    }

    pub fn n_questions(&self) -> usize {
        self.question_ids.len()
    }

    /// Draw a user. The second coordinate, when present, is a constant 1 so
    /// that the question's second coordinate acts as an additive difficulty.
    pub fn sample_user(&self, user_id: impl Into<String>, rng: &mut Rng) -> PlantedUser {
        let k = self.latent_dim();
        let mut v = vec![0.0; k];
        let g: f64 = rng.sample(StandardNormal);
        v[0] = self.ability_sd * g;
        if k >= 2 {
            v[1] = 1.0;
        }
        for x in v.iter_mut().skip(2) {
            let g: f64 = rng.sample(StandardNormal);
            *x = self.factor_sd * g;
        }
        let growth = if self.growth_sd > 0.0 {
            Normal::new(self.growth_mean, self.growth_sd).expect("valid growth distribution").sample(rng)
        } else {
            self.growth_mean
        };
        PlantedUser { user_id: user_id.into(), vector: v, growth }
    }

    pub fn knowledge(&self, user_vector: &[f64], question: usize) -> f64 {
        dot(user_vector, &self.question_vectors[question])
    }

    /// Planted correctness probability (before response noise).
    pub fn prob(&self, user_vector: &[f64], question: usize) -> f64 {
        self.phi.prob(self.knowledge(user_vector, question))
    }

    /// Simulate one response. Returns the interaction and its planted probability.
    pub fn respond(
        &self,
        user: &PlantedUser,
        question: usize,
        progress: f64,
        timestamp: i64,
        rng: &mut Rng,
    ) -> (Interaction, f64) {
        let v = user.vector_at(progress);
        let x = self.knowledge(&v, question);
        let p = self.phi.prob(x);
        let mut correct = rng.random::<f64>() < p;
        if self.noise > 0.0 && rng.random::<f64>() < self.noise {
            correct = !correct;
        }
        // Stronger users answer faster; the median sits at 70% of the limit
        // for an average user-question pair.
        let z: f64 = rng.sample(StandardNormal);
        let factor = 0.7 * (-0.35 * x.clamp(-6.0, 6.0) + 0.35 * z).exp();
        let elapsed_ms = (self.time_limit_ms as f64 * factor).round().max(0.0) as u64;
        (
            Interaction {
                user_id: user.user_id.clone(),
                question_id: self.question_ids[question].clone(),
                section: self.sections[question],
                correct,
                elapsed_ms,
                time_limit_ms: self.time_limit_ms,
                timestamp,
            },
            p,
        )
    }

    /// Mean planted probability over a section's bank.
    pub fn section_mean_prob(&self, user_vector: &[f64], section: Section) -> f64 {
        let (sum, n) = (0..self.n_questions())
            .filter(|&j| self.sections[j] == section)
            .fold((0.0, 0usize), |(s, n), j| (s + self.prob(user_vector, j), n + 1));
        if n == 0 {
            self.score_prob_floor
        } else {
            sum / n as f64
        }
    }

    /// Affine map from mean section probability to a raw section score.
    pub fn section_score_raw(&self, mean_prob: f64) -> f64 {
        MAX_SECTION_SCORE * (mean_prob - self.score_prob_floor)
            / (self.score_prob_ceiling - self.score_prob_floor)
    }

    /// True (LC, RC) section scores after a fraction `progress` of history.
    pub fn true_scores(&self, user: &PlantedUser, progress: f64) -> (u32, u32) {
        let v = user.vector_at(progress);
        let lc = self.section_score_raw(self.section_mean_prob(&v, Section::LC));
        let rc = self.section_score_raw(self.section_mean_prob(&v, Section::RC));
        (clamp_round(lc, MAX_SECTION_SCORE), clamp_round(rc, MAX_SECTION_SCORE))
    }

    pub fn label(&self, user: &PlantedUser, progress: f64, report_time: i64) -> ScoreLabel {
        let (lc, rc) = self.true_scores(user, progress);
        ScoreLabel {
            user_id: user.user_id.clone(),
            score_total: lc + rc,
            score_lc: Some(lc),
            score_rc: Some(rc),
            report_time,
        }
    }
}

/// Generated interactions and labels along with the model that produced them.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub interactions: Vec<Interaction>,
    pub labels: Vec<ScoreLabel>,
    /// Planted probability of each interaction, parallel to `interactions`.
    pub event_probs: Vec<f64>,
    pub users: Vec<PlantedUser>,
    pub planted: PlantedModel,
}

fn user_id(i: usize) -> String {
    format!("u{i:06}")
}

/// Generate a planted corpus. Users are drawn independently from per-user
/// seeds, so output is a pure function of the config.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticCorpus, CorpusError> {
    let planted = PlantedModel::new(cfg)?;
    let mut interactions = Vec::new();
    let mut event_probs = Vec::new();
    let mut labels = Vec::new();
    let mut users = Vec::with_capacity(cfg.n_users);
    for i in 0..cfg.n_users {
        let mut rng = rng::rng_for(cfg.seed, i as u64);
        let user = planted.sample_user(user_id(i), &mut rng);
        let n = rng.random_range(cfg.min_events..=cfg.max_events);
        let mut ts = cfg.start_time + rng.random_range(0..30 * DAY_MS);
        let mut times = Vec::with_capacity(n);
        for e in 0..n {
            let progress = if n > 1 { e as f64 / (n - 1) as f64 } else { 1.0 };
            let q = rng.random_range(0..planted.n_questions());
            let (it, p) = planted.respond(&user, q, progress, ts, &mut rng);
            interactions.push(it);
            event_probs.push(p);
            times.push(ts);
            ts += rng.random_range(10_000..3_600_000);
        }
        if rng.random::<f64>() < cfg.second_label_prob && n >= 3 {
            let m = rng.random_range(n / 3..=(2 * n) / 3);
            let progress = if n > 1 { m as f64 / (n - 1) as f64 } else { 1.0 };
            labels.push(planted.label(&user, progress, times[m]));
        }
        labels.push(planted.label(&user, 1.0, times[n - 1] + DAY_MS));
        users.push(user);
    }
    Ok(SyntheticCorpus { interactions, labels, event_probs, users, planted })
}
