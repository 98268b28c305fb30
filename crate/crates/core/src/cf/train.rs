use super::model::dot;
use super::{nll_loss, project_row, CfError, CfModel, LatentFactors, Observation, PhiParams, ThetaParams};
use crate::corpus::{Interaction, Section};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfHyper {
    pub k: usize,
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Scale the step size by `1/sqrt(epoch)` (epochs counted from 1).
    pub lr_decay: bool,
    /// Row-norm bound for the projection step.
    pub radius: f64,
    pub seed: u64,
    pub phi: PhiParams,
}

impl Default for CfHyper {
    fn default() -> Self {
        CfHyper {
            k: 16,
            lambda: 1e-4,
            lr: 0.05,
            epochs: 30,
            lr_decay: true,
            radius: 5.0,
            seed: 0,
            phi: PhiParams::default(),
        }
    }
}

impl CfHyper {
    fn validate(&self) -> Result<(), CfError> {
        let bad = |m: &str| Err(CfError::InvalidHyper(m.to_string()));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad("radius must be positive");
        }
        self.phi.validate().map_err(CfError::InvalidHyper)
    }
}

#[derive(Debug, Clone)]
pub struct CfTrainOutput {
    pub model: CfModel,
    /// Full objective before training, then after each epoch.
    pub loss_history: Vec<f64>,
}

/// Index interactions: users and questions get rows in sorted-id order.
fn index_dataset(
    dataset: &[Interaction],
) -> Result<(Vec<String>, Vec<String>, Vec<Section>, Vec<Observation>), CfError> {
    let mut users: BTreeMap<&str, usize> = BTreeMap::new();
    let mut questions: BTreeMap<&str, (usize, Section)> = BTreeMap::new();
    for it in dataset {
        users.insert(&it.user_id, 0);
        match questions.get(it.question_id.as_str()) {
            Some((_, s)) if *s != it.section => {
                return Err(CfError::InconsistentSection(it.question_id.clone()))
            }
            Some(_) => {}
            None => {
                questions.insert(&it.question_id, (0, it.section));
            }
        }
    }
    for (row, v) in users.values_mut().enumerate() {
        *v = row;
    }
    for (row, v) in questions.values_mut().enumerate() {
        v.0 = row;
    }
    let obs = dataset
        .iter()
        .map(|it| Observation {
            user: users[it.user_id.as_str()],
            question: questions[it.question_id.as_str()].0,
            correct: it.correct,
        })
        .collect();
    let user_ids = users.keys().map(|s| s.to_string()).collect();
    let question_ids = questions.keys().map(|s| s.to_string()).collect();
    let sections = questions.values().map(|(_, s)| *s).collect();
    Ok((user_ids, question_ids, sections, obs))
}

fn init_factors(n: usize, m: usize, hyper: &CfHyper) -> LatentFactors {
    let mut rng = rng::rng_for(hyper.seed, 0);
    let bound = 0.01 / (hyper.k as f64).sqrt();
    let mut f = LatentFactors::zeros(n, m, hyper.k);
    for v in f.user_vectors.iter_mut().chain(f.question_vectors.iter_mut()) {
        *v = rng.random_range(-bound..=bound);
    }
    f
}

/// Fit user and question factors by projected SGD.
///
/// The objective `sum_o nll_o + lambda (||L||^2 + ||R||^2)` is split exactly
/// across observations: user `i` with `n_i` observations contributes
/// `lambda ||L_i||^2 / n_i` to each of them (likewise for questions). Every
/// epoch visits all observations in a seed-shuffled order; each step updates
/// `L_i` and `R_j` from their pre-step values and projects both rows onto the
/// radius ball.
pub fn train_cf(dataset: &[Interaction], hyper: &CfHyper) -> Result<CfTrainOutput, CfError> {
    hyper.validate()?;
    if dataset.is_empty() {
        return Err(CfError::EmptyDataset);
    }
    let (user_ids, question_ids, sections, obs) = index_dataset(dataset)?;
    let (n, m, k) = (user_ids.len(), question_ids.len(), hyper.k);
    let mut f = init_factors(n, m, hyper);

    let mut user_count = vec![0usize; n];
    let mut question_count = vec![0usize; m];
    for o in &obs {
        user_count[o.user] += 1;
        question_count[o.question] += 1;
    }

    let phi = hyper.phi;
    let lambda = hyper.lambda;
    let mut history = vec![nll_loss(&f, &phi, &obs, lambda)?];
    let mut order: Vec<usize> = (0..obs.len()).collect();
    let mut gl = vec![0.0; k];
    let mut gr = vec![0.0; k];
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng::rng_for(hyper.seed, epoch as u64 + 1));
        let lr = if hyper.lr_decay { hyper.lr / ((epoch + 1) as f64).sqrt() } else { hyper.lr };
        for &idx in &order {
            let o = obs[idx];
            let (li, rj) = (o.user * k, o.question * k);
            let l = &f.user_vectors[li..li + k];
            let r = &f.question_vectors[rj..rj + k];
            let g = phi.dnll_dx(dot(l, r), o.correct);
            let reg_l = 2.0 * lambda / user_count[o.user] as f64;
            let reg_r = 2.0 * lambda / question_count[o.question] as f64;
            for d in 0..k {
                gl[d] = g * r[d] + reg_l * l[d];
                gr[d] = g * l[d] + reg_r * r[d];
            }
            let l = &mut f.user_vectors[li..li + k];
            l.iter_mut().zip(&gl).for_each(|(v, g)| *v -= lr * g);
            project_row(l, hyper.radius);
            let r = &mut f.question_vectors[rj..rj + k];
            r.iter_mut().zip(&gr).for_each(|(v, g)| *v -= lr * g);
            project_row(r, hyper.radius);
        }
        debug_assert!(f.max_row_norm() <= hyper.radius * (1.0 + 1e-12));
        let loss = nll_loss(&f, &phi, &obs, lambda)?;
        if !loss.is_finite() {
            return Err(CfError::NonFiniteLoss { epoch });
        }
        history.push(loss);
    }

    let model =
        CfModel::new(f, phi, ThetaParams::default(), hyper.radius, lambda, user_ids, question_ids, sections)?;
    Ok(CfTrainOutput { model, loss_history: history })
}

/// Estimate a user vector for someone outside the training set, holding
/// question factors fixed: projected full-batch gradient descent on the
/// user's NLL plus `lambda ||L||^2`, starting from the origin. The step is
/// `lr` over a curvature bound, `c^2/4 * sum ||R_j||^2 + 2 lambda`, so it does
/// not depend on the scale of the question factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoldIn {
    pub lr: f64,
    pub steps: usize,
}

impl Default for FoldIn {
    fn default() -> Self {
        FoldIn { lr: 1.0, steps: 100 }
    }
}

impl FoldIn {
    /// Unknown questions in `responses` are ignored; returns the vector and
    /// the number of responses actually used.
    pub fn user_vector(&self, model: &CfModel, responses: &[Interaction]) -> (Vec<f64>, usize) {
        let k = model.factors.k;
        let rows: Vec<(usize, bool)> = responses
            .iter()
            .filter_map(|r| model.question_row(&r.question_id).ok().map(|j| (j, r.correct)))
            .collect();
        let mut v = vec![0.0; k];
        if rows.is_empty() {
            return (v, 0);
        }
        let c = model.phi.phi_c;
        let curvature: f64 = rows
            .iter()
            .map(|&(j, _)| {
                let q = model.factors.question(j);
                dot(q, q)
            })
            .sum::<f64>()
            * c
            * c
            / 4.0
            + 2.0 * model.lambda;
        if curvature <= 0.0 {
            return (v, rows.len());
        }
        let step = self.lr / curvature;
        let mut g = vec![0.0; k];
        for _ in 0..self.steps {
            g.iter_mut().zip(&v).for_each(|(g, v)| *g = 2.0 * model.lambda * v);
            for &(j, y) in &rows {
                let q = model.factors.question(j);
                let d = model.phi.dnll_dx(dot(&v, q), y);
                g.iter_mut().zip(q).for_each(|(g, q)| *g += d * q);
            }
            v.iter_mut().zip(&g).for_each(|(v, g)| *v -= step * g);
            project_row(&mut v, model.radius);
        }
        (v, rows.len())
    }
}
