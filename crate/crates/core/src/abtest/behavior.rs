use super::AbError;
use serde::{Deserialize, Serialize};

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// One funnel stage: success probability `sigmoid(base - beta * err)` where
/// `err` is the absolute score error the user saw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub base: f64,
    pub beta: f64,
}

impl Stage {
    pub fn prob(&self, err: f64) -> f64 {
        sigmoid(self.base - self.beta * err).clamp(1e-12, 1.0 - 1e-12)
    }

    /// The stage passing through `(err_a, p_a)` and `(err_b, p_b)`.
    pub fn through(err_a: f64, p_a: f64, err_b: f64, p_b: f64) -> Stage {
        let beta = (logit(p_b) - logit(p_a)) / (err_a - err_b);
        Stage { base: logit(p_a) + beta * err_a, beta }
    }
}

/// Simulated user behavior. Registration is conditional on completing the
/// diagnostic and purchase on registering. Users who complete the diagnostic
/// solve a Gamma-Poisson number of further questions whose mean is
/// `solved_mean * exp(-solved_penalty * err)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorConfig {
    pub completion: Stage,
    pub registration: Stage,
    pub purchase: Stage,
    pub solved_mean: f64,
    pub solved_penalty: f64,
    /// Gamma shape of the per-user activity level; smaller is more dispersed.
    pub solved_shape: f64,
    pub price_cents: i64,
    pub days: u32,
    pub seed: u64,
}

/// Per-arm engagement levels and the score error that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaperTargets {
    pub mae: [f64; 2],
    pub completion: [f64; 2],
    pub registration: [f64; 2],
    pub conversion: [f64; 2],
    pub solved: [f64; 2],
    pub arpu_cents: [f64; 2],
}

impl PaperTargets {
    /// The two arms of the published experiment: latent-factor first,
    /// attentive second. Rates are fractions of all arm users.
    pub fn published() -> Self {
        PaperTargets {
            mae: [78.91, 49.84],
            completion: [0.6493, 0.6590],
            registration: [0.4313, 0.4455],
            conversion: [0.0237, 0.0273],
            solved: [20.03, 22.73],
            arpu_cents: [283.0, 323.0],
        }
    }
}

impl BehaviorConfig {
    /// Fit every stage so that a user seeing error `mae[a]` behaves at arm
    /// `a`'s rates: conditional rates are ratios of successive funnel rates,
    /// the solved-count mean is per completing user, and the price is the
    /// mean of `arpu / conversion` over both arms (rounded to a cent).
    pub fn calibrated(t: &PaperTargets, days: u32, seed: u64) -> Self {
        let [ea, eb] = t.mae;
        let cond = |num: [f64; 2], den: [f64; 2]| [num[0] / den[0], num[1] / den[1]];
        let reg = cond(t.registration, t.completion);
        let buy = cond(t.conversion, t.registration);
        let per_completer = cond(t.solved, t.completion);
        let solved_penalty = (per_completer[1] / per_completer[0]).ln() / (ea - eb);
        let price = (t.arpu_cents[0] / t.conversion[0] + t.arpu_cents[1] / t.conversion[1]) / 2.0;
        BehaviorConfig {
            completion: Stage::through(ea, t.completion[0], eb, t.completion[1]),
            registration: Stage::through(ea, reg[0], eb, reg[1]),
            purchase: Stage::through(ea, buy[0], eb, buy[1]),
            solved_mean: per_completer[0] * (solved_penalty * ea).exp(),
            solved_penalty,
            solved_shape: 1.0,
            price_cents: price.round() as i64,
            days,
            seed,
        }
    }

    /// [`BehaviorConfig::calibrated`] on the published arms over a 39-day window.
    pub fn paper_calibrated() -> Self {
        Self::calibrated(&PaperTargets::published(), 39, 0)
    }

    /// Multiply every error sensitivity by `factor`, keeping each stage's
    /// probability at zero error unchanged.
    pub fn with_sensitivity(mut self, factor: f64) -> Self {
        for s in [&mut self.completion, &mut self.registration, &mut self.purchase] {
            s.beta *= factor;
        }
        self.solved_penalty *= factor;
        self
    }

    pub fn validate(&self) -> Result<(), AbError> {
        let bad = |m: &str| Err(AbError::InvalidConfig(m.to_string()));
        for s in [&self.completion, &self.registration, &self.purchase] {
            if !(s.beta >= 0.0 && s.base.is_finite() && s.beta.is_finite()) {
                return bad("stage sensitivities must be finite and non-negative");
            }
        }
        if !(self.solved_mean >= 0.0 && self.solved_penalty >= 0.0 && self.solved_shape > 0.0) {
            return bad("solved_mean and solved_penalty must be >= 0, solved_shape > 0");
        }
        if self.price_cents <= 0 {
            return bad("price_cents must be positive");
        }
        if self.days == 0 {
            return bad("days must be positive");
        }
        Ok(())
    }
}
