use serde::{Deserialize, Serialize};

/// Parameters of the shared logistic link
/// `p(x) = a + (1 - a) / (1 + exp(-c (x - b)))`, where `a` is the guessing floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhiParams {
    pub phi_a: f64,
    pub phi_b: f64,
    pub phi_c: f64,
}

impl Default for PhiParams {
    /// Four answer choices give a 0.25 guessing floor.
    fn default() -> Self {
        PhiParams { phi_a: 0.25, phi_b: 0.0, phi_c: 1.0 }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl PhiParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.phi_a) {
            return Err(format!("phi_a = {} must lie in [0, 1)", self.phi_a));
        }
        if !(self.phi_c > 0.0 && self.phi_c.is_finite()) {
            return Err(format!("phi_c = {} must be positive", self.phi_c));
        }
        if !self.phi_b.is_finite() {
            return Err("phi_b must be finite".into());
        }
        Ok(())
    }

    fn z(&self, x: f64) -> f64 {
        self.phi_c * (x - self.phi_b)
    }

    /// Probability of a correct response at knowledge level `x`.
    pub fn prob(&self, x: f64) -> f64 {
        self.phi_a + (1.0 - self.phi_a) * sigmoid(self.z(x))
    }

    /// Negative log-likelihood of outcome `correct` at knowledge level `x`.
    pub fn nll(&self, x: f64, correct: bool) -> f64 {
        let z = self.z(x);
        if correct {
            if self.phi_a == 0.0 {
                softplus(-z)
            } else {
                -(self.phi_a + (1.0 - self.phi_a) * sigmoid(z)).ln()
            }
        } else {
            softplus(z) - (1.0 - self.phi_a).ln()
        }
    }

    /// Derivative of [`PhiParams::nll`] with respect to `x`.
    pub fn dnll_dx(&self, x: f64, correct: bool) -> f64 {
        let s = sigmoid(self.z(x));
        if correct {
            // share of p contributed by the logistic part; exactly 1 without a floor
            let r = if self.phi_a == 0.0 {
                1.0
            } else {
                (1.0 - self.phi_a) * s / (self.phi_a + (1.0 - self.phi_a) * s)
            };
            -self.phi_c * (1.0 - s) * r
        } else {
            self.phi_c * s
        }
    }
}

/// Correctness probability for a knowledge level `x = L_i · R_j`.
pub fn correctness_prob(x: f64, phi: &PhiParams) -> f64 {
    phi.prob(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midpoint_is_exact() {
        let phi = PhiParams::default();
        assert_eq!(correctness_prob(phi.phi_b, &phi), (1.0 + phi.phi_a) / 2.0);
        assert_eq!(correctness_prob(0.0, &phi), 0.625);
        let shifted = PhiParams { phi_a: 0.1, phi_b: 2.5, phi_c: 3.0 };
        assert_eq!(correctness_prob(2.5, &shifted), 0.55);
    }

    #[test]
    fn asymptotes() {
        let phi = PhiParams::default();
        assert!((correctness_prob(-50.0, &phi) - 0.25).abs() < 1e-9);
        assert!((correctness_prob(50.0, &phi) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn closed_form_at_one() {
        // 0.25 + 0.75 / (1 + e^-1)
        let expected = 0.25 + 0.75 / (1.0 + (-1.0f64).exp());
        assert!((correctness_prob(1.0, &PhiParams::default()) - expected).abs() < 1e-15);
        assert!((expected - 0.798294).abs() < 1e-6);
    }

    #[test]
    fn nll_matches_direct_log() {
        let phi = PhiParams::default();
        for &x in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
            let p = phi.prob(x);
            assert!((phi.nll(x, true) + p.ln()).abs() < 1e-12);
            assert!((phi.nll(x, false) + (1.0 - p).ln()).abs() < 1e-12);
        }
        assert!((phi.nll(0.0, true) - 0.470_003_629_245_735_5).abs() < 1e-12);
    }

    #[test]
    fn nll_is_finite_far_out() {
        for a in [0.0, 0.25] {
            let phi = PhiParams { phi_a: a, ..PhiParams::default() };
            for x in [-800.0, 800.0] {
                assert!(phi.nll(x, true).is_finite());
                assert!(phi.nll(x, false).is_finite());
                assert!(phi.dnll_dx(x, true).is_finite());
            }
        }
    }

    #[test]
    fn validation() {
        assert!(PhiParams { phi_a: 1.0, ..Default::default() }.validate().is_err());
        assert!(PhiParams { phi_c: 0.0, ..Default::default() }.validate().is_err());
        assert!(PhiParams::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn strictly_increasing(x in -5.0f64..5.0, dx in 1e-3f64..2.0, a in 0.0f64..0.9, c in 0.1f64..3.0) {
            let phi = PhiParams { phi_a: a, phi_b: 0.3, phi_c: c };
            let (p1, p2) = (phi.prob(x), phi.prob(x + dx));
            prop_assert!(p1 < p2);
            prop_assert!(p1 > a && p2 < 1.0);
        }

        #[test]
        fn derivative_matches_central_difference(x in -6.0f64..6.0, a in 0.0f64..0.6, y: bool) {
            let phi = PhiParams { phi_a: a, phi_b: -0.2, phi_c: 1.7 };
            let h = 1e-6;
            let fd = (phi.nll(x + h, y) - phi.nll(x - h, y)) / (2.0 * h);
            prop_assert!((fd - phi.dnll_dx(x, y)).abs() < 1e-6);
        }
    }
}
