//! Score post-processing shared by both backends.

use serde::{Deserialize, Serialize};

pub const MAX_SECTION_SCORE: f64 = 495.0;
pub const MAX_TOTAL_SCORE: f64 = 990.0;

/// A reported score prediction. Section scores are only produced by the
/// latent-factor backend; the attentive backend regresses the total directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePrediction {
    pub score_lc: Option<u32>,
    pub score_rc: Option<u32>,
    pub total: u32,
}

/// Round to the nearest multiple of 5, ties going up.
pub fn round_to_five(v: f64) -> f64 {
    5.0 * (v / 5.0 + 0.5).floor()
}

/// Clamp to `[0, max]` then round to a multiple of 5. Non-finite input maps to 0.
pub fn clamp_round(v: f64, max: f64) -> u32 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, max) };
    round_to_five(v) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_ties_go_up() {
        assert_eq!(round_to_five(222.5), 225.0);
        assert_eq!(round_to_five(222.4), 220.0);
        assert_eq!(round_to_five(498.66), 500.0);
        assert_eq!(round_to_five(0.0), 0.0);
    }

    #[test]
    fn clamp_then_round() {
        assert_eq!(clamp_round(600.0, MAX_SECTION_SCORE), 495);
        assert_eq!(clamp_round(-3.0, MAX_SECTION_SCORE), 0);
        assert_eq!(clamp_round(f64::NAN, MAX_TOTAL_SCORE), 0);
        assert_eq!(clamp_round(f64::INFINITY, MAX_TOTAL_SCORE), 990);
    }
}
