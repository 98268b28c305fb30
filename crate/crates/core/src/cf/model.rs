use super::{CfError, PhiParams};
use crate::corpus::Section;
use crate::score::{clamp_round, ScorePrediction, MAX_SECTION_SCORE};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// User and question factor matrices, row-major, `k` columns each.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFactors {
    pub k: usize,
    pub user_vectors: Vec<f64>,
    pub question_vectors: Vec<f64>,
}

impl LatentFactors {
    pub fn zeros(n_users: usize, n_questions: usize, k: usize) -> Self {
        LatentFactors {
            k,
            user_vectors: vec![0.0; n_users * k],
            question_vectors: vec![0.0; n_questions * k],
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_vectors.len() / self.k
    }

    pub fn n_questions(&self) -> usize {
        self.question_vectors.len() / self.k
    }

    pub fn user(&self, i: usize) -> &[f64] {
        &self.user_vectors[i * self.k..(i + 1) * self.k]
    }

    pub fn question(&self, j: usize) -> &[f64] {
        &self.question_vectors[j * self.k..(j + 1) * self.k]
    }

    /// Knowledge level `X_ij`.
    pub fn knowledge(&self, i: usize, j: usize) -> f64 {
        dot(self.user(i), self.question(j))
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.user_vectors.iter().chain(&self.question_vectors).map(|v| v * v).sum()
    }

    /// Largest row norm over both matrices.
    pub fn max_row_norm(&self) -> f64 {
        self.user_vectors
            .chunks(self.k)
            .chain(self.question_vectors.chunks(self.k))
            .map(norm)
            .fold(0.0, f64::max)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// One observed response by row indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub user: usize,
    pub question: usize,
    pub correct: bool,
}

fn check_obs(f: &LatentFactors, obs: &[Observation]) -> Result<(), CfError> {
    let (n, m) = (f.n_users(), f.n_questions());
    match obs.iter().find(|o| o.user >= n || o.question >= m) {
        Some(o) => Err(CfError::IndexOutOfRange { user: o.user, question: o.question }),
        None => Ok(()),
    }
}

/// Summed negative log-likelihood of `obs` plus `lambda (||L||_F^2 + ||R||_F^2)`.
pub fn nll_loss(
    factors: &LatentFactors,
    phi: &PhiParams,
    obs: &[Observation],
    lambda: f64,
) -> Result<f64, CfError> {
    check_obs(factors, obs)?;
    let data: f64 = obs.iter().map(|o| phi.nll(factors.knowledge(o.user, o.question), o.correct)).sum();
    Ok(data + lambda * factors.frobenius_sq())
}

/// Gradient of [`nll_loss`] with respect to the user and question matrices.
pub fn nll_gradient(
    factors: &LatentFactors,
    phi: &PhiParams,
    obs: &[Observation],
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), CfError> {
    check_obs(factors, obs)?;
    let k = factors.k;
    let mut gl: Vec<f64> = factors.user_vectors.iter().map(|v| 2.0 * lambda * v).collect();
    let mut gr: Vec<f64> = factors.question_vectors.iter().map(|v| 2.0 * lambda * v).collect();
    for o in obs {
        let g = phi.dnll_dx(factors.knowledge(o.user, o.question), o.correct);
        let (l, r) = (factors.user(o.user), factors.question(o.question));
        for d in 0..k {
            gl[o.user * k + d] += g * r[d];
            gr[o.question * k + d] += g * l[d];
        }
    }
    Ok((gl, gr))
}

/// Euclidean projection onto the ball of radius `radius`.
///
/// Rows already within a relative `1e-12` of the boundary are left alone, which
/// keeps the map idempotent under floating-point rescaling.
pub fn project_row(v: &mut [f64], radius: f64) {
    let n = norm(v);
    if n > radius * (1.0 + 1e-12) {
        let s = radius / n;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Quadratic score coefficients: `[θ0, θ1, θ2]` for LC then `[θ3, θ4, θ5]` for RC,
/// with `score = θ2 x² + θ1 x + θ0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub theta: [f64; 6],
}

impl Default for ThetaParams {
    /// Linear map from the guessing floor (0.25) to certainty onto `[0, 495]`.
    fn default() -> Self {
        ThetaParams { theta: [-165.0, 660.0, 0.0, -165.0, 660.0, 0.0] }
    }
}

impl ThetaParams {
    pub fn section(&self, section: Section) -> [f64; 3] {
        let o = 3 * section.index();
        [self.theta[o], self.theta[o + 1], self.theta[o + 2]]
    }

    pub fn set_section(&mut self, section: Section, coeffs: [f64; 3]) {
        let o = 3 * section.index();
        self.theta[o..o + 3].copy_from_slice(&coeffs);
    }

    /// Unclamped section score at average probability `x`.
    pub fn raw_score(&self, section: Section, x: f64) -> f64 {
        let [t0, t1, t2] = self.section(section);
        t2 * x * x + t1 * x + t0
    }
}

/// A fitted latent-factor model with its id maps.
#[derive(Debug, Clone, PartialEq)]
pub struct CfModel {
    pub factors: LatentFactors,
    pub phi: PhiParams,
    pub theta: ThetaParams,
    /// Projection radius used in training; also bounds folded-in users.
    pub radius: f64,
    /// Regularization weight used in training.
    pub lambda: f64,
    pub user_ids: Vec<String>,
    pub question_ids: Vec<String>,
    pub question_sections: Vec<Section>,
    user_index: HashMap<String, usize>,
    question_index: HashMap<String, usize>,
}

impl CfModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        factors: LatentFactors,
        phi: PhiParams,
        theta: ThetaParams,
        radius: f64,
        lambda: f64,
        user_ids: Vec<String>,
        question_ids: Vec<String>,
        question_sections: Vec<Section>,
    ) -> Result<Self, CfError> {
        if user_ids.len() != factors.n_users()
            || question_ids.len() != factors.n_questions()
            || question_sections.len() != question_ids.len()
        {
            return Err(CfError::Format("id tables do not match factor shapes".into()));
        }
        let user_index: HashMap<_, _> = user_ids.iter().cloned().zip(0..).collect();
        let question_index: HashMap<_, _> = question_ids.iter().cloned().zip(0..).collect();
        if user_index.len() != user_ids.len() || question_index.len() != question_ids.len() {
            return Err(CfError::Format("duplicate ids".into()));
        }
        Ok(CfModel {
            factors,
            phi,
            theta,
            radius,
            lambda,
            user_ids,
            question_ids,
            question_sections,
            user_index,
            question_index,
        })
    }

    pub fn user_row(&self, user: &str) -> Result<usize, CfError> {
        self.user_index.get(user).copied().ok_or_else(|| CfError::UnknownId(user.to_string()))
    }

    pub fn question_row(&self, question: &str) -> Result<usize, CfError> {
        self.question_index.get(question).copied().ok_or_else(|| CfError::UnknownId(question.to_string()))
    }

    pub fn has_user(&self, user: &str) -> bool {
        self.user_index.contains_key(user)
    }

    /// All known questions of a section, in row order.
    pub fn section_pool(&self, section: Section) -> Vec<String> {
        self.question_ids
            .iter()
            .zip(&self.question_sections)
            .filter(|(_, s)| **s == section)
            .map(|(q, _)| q.clone())
            .collect()
    }

    pub fn prob(&self, user: &str, question: &str) -> Result<f64, CfError> {
        let (i, j) = (self.user_row(user)?, self.question_row(question)?);
        Ok(self.phi.prob(self.factors.knowledge(i, j)))
    }

    /// Mean predicted correctness over `pool` for a known user.
    pub fn section_average(&self, user: &str, pool: &[String], section: Section) -> Result<f64, CfError> {
        let i = self.user_row(user)?;
        self.section_average_for(self.factors.user(i), pool, section)
    }

    /// Mean predicted correctness over `pool` for an explicit user vector.
    pub fn section_average_for(
        &self,
        user_vector: &[f64],
        pool: &[String],
        section: Section,
    ) -> Result<f64, CfError> {
        if pool.is_empty() {
            return Err(CfError::EmptyPool);
        }
        let mut sum = 0.0;
        for q in pool {
            let j = self.question_row(q)?;
            let actual = self.question_sections[j];
            if actual != section {
                return Err(CfError::SectionMismatch { question: q.clone(), expected: section, actual });
            }
            sum += self.phi.prob(dot(user_vector, self.factors.question(j)));
        }
        Ok(sum / pool.len() as f64)
    }

    pub fn predict_score(
        &self,
        user: &str,
        lc_pool: &[String],
        rc_pool: &[String],
    ) -> Result<ScorePrediction, CfError> {
        let i = self.user_row(user)?;
        self.predict_score_for(self.factors.user(i), lc_pool, rc_pool)
    }

    pub fn predict_score_for(
        &self,
        user_vector: &[f64],
        lc_pool: &[String],
        rc_pool: &[String],
    ) -> Result<ScorePrediction, CfError> {
        let x_lc = self.section_average_for(user_vector, lc_pool, Section::LC)?;
        let x_rc = self.section_average_for(user_vector, rc_pool, Section::RC)?;
        Ok(self.score_from_averages(x_lc, x_rc))
    }

    /// Evaluate both quadratics, clamp each section to `[0, 495]` and round to 5.
    pub fn score_from_averages(&self, x_lc: f64, x_rc: f64) -> ScorePrediction {
        let lc = clamp_round(self.theta.raw_score(Section::LC, x_lc), MAX_SECTION_SCORE);
        let rc = clamp_round(self.theta.raw_score(Section::RC, x_rc), MAX_SECTION_SCORE);
        ScorePrediction { score_lc: Some(lc), score_rc: Some(rc), total: lc + rc }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn toy_model(theta: [f64; 6]) -> CfModel {
        let factors = LatentFactors {
            k: 2,
            user_vectors: vec![0.0, 0.0, 1.0, 0.5],
            question_vectors: vec![1.0, 0.0, 0.0, 1.0, 2.0, -1.0, 0.3, 0.3],
        };
        CfModel::new(
            factors,
            PhiParams::default(),
            ThetaParams { theta },
            5.0,
            0.0,
            vec!["a".into(), "b".into()],
            vec!["l1".into(), "l2".into(), "r1".into(), "r2".into()],
            vec![Section::LC, Section::LC, Section::RC, Section::RC],
        )
        .unwrap()
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn nll_fixtures() {
        let f = LatentFactors::zeros(2, 2, 3);
        let phi = PhiParams::default();
        assert_eq!(nll_loss(&f, &phi, &[], 0.0).unwrap(), 0.0);
        assert_eq!(nll_loss(&f, &phi, &[], 1.0).unwrap(), 0.0);
        let one = [Observation { user: 0, question: 1, correct: true }];
        assert!((nll_loss(&f, &phi, &one, 0.0).unwrap() - 0.4700).abs() < 1e-4);
        let bad = [Observation { user: 2, question: 0, correct: true }];
        assert!(matches!(nll_loss(&f, &phi, &bad, 0.0), Err(CfError::IndexOutOfRange { .. })));
    }

    #[test]
    fn projection_cases() {
        let mut v = vec![0.3, 0.4];
        project_row(&mut v, 1.0);
        assert_eq!(v, vec![0.3, 0.4]);
        let mut v = vec![6.0, 8.0];
        project_row(&mut v, 5.0);
        assert!((norm(&v) - 5.0).abs() < 1e-12);
        assert!((v[0] / v[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn projection_idempotent_sweep() {
        let mut rng = rng::rng(1);
        for _ in 0..1000 {
            let mut v: Vec<f64> = (0..4).map(|_| rng.random_range(-10.0..10.0)).collect();
            let before = norm(&v);
            project_row(&mut v, 3.0);
            let once = v.clone();
            project_row(&mut v, 3.0);
            assert_eq!(v, once);
            assert!(norm(&once) <= before + 1e-12);
            assert!(norm(&once) <= 3.0 + 1e-12);
        }
    }

    #[test]
    fn section_average_cases() {
        let m = toy_model(ThetaParams::default().theta);
        let p = m.prob("b", "l1").unwrap();
        assert_eq!(m.section_average("b", &ids(&["l1"]), Section::LC).unwrap(), p);
        // user "a" is the zero vector: every probability equals phi(0).
        let avg = m.section_average("a", &ids(&["r1", "r2"]), Section::RC).unwrap();
        assert!((avg - 0.625).abs() < 1e-15);
        assert!(matches!(m.section_average("a", &[], Section::LC), Err(CfError::EmptyPool)));
        assert!(matches!(m.section_average("zz", &ids(&["l1"]), Section::LC), Err(CfError::UnknownId(_))));
        assert!(matches!(m.section_average("a", &ids(&["qq"]), Section::LC), Err(CfError::UnknownId(_))));
        assert!(matches!(
            m.section_average("a", &ids(&["r1"]), Section::LC),
            Err(CfError::SectionMismatch { .. })
        ));
    }

    #[test]
    fn score_mapping_fixtures() {
        let m = toy_model([37.0, 10.0, 10.0, 0.0, 0.0, 0.0]);
        let s = m.score_from_averages(0.0, 0.0);
        assert_eq!(m.theta.raw_score(Section::LC, 0.0), 37.0);
        assert_eq!(s.score_lc, Some(35));

        let m = toy_model([0.0, 0.0, 600.0, 0.0, 0.0, 600.0]);
        let s = m.score_from_averages(1.0, 1.0);
        assert_eq!((s.score_lc, s.score_rc, s.total), (Some(495), Some(495), 990));

        let m = toy_model([100.0, 200.0, 100.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.theta.raw_score(Section::LC, 0.5), 225.0);
        assert_eq!(m.score_from_averages(0.5, 0.0).score_lc, Some(225));
    }

    proptest! {
        #[test]
        fn predicted_total_in_range(theta in prop::array::uniform6(-2000.0f64..2000.0), x_lc in 0.0f64..1.0, x_rc in 0.0f64..1.0) {
            let m = toy_model(theta);
            let s = m.score_from_averages(x_lc, x_rc);
            prop_assert!(s.total <= 990 && s.total % 5 == 0);
            prop_assert_eq!(s.total, s.score_lc.unwrap() + s.score_rc.unwrap());
        }
    }
}
