use super::{CfError, CfModel, ThetaParams};
use crate::corpus::{ScoreLabel, Section};
use serde::{Deserialize, Serialize};

/// Least-squares quadratic `y = c2 x^2 + c1 x + c0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    /// `[c0, c1, c2]`.
    pub coeffs: [f64; 3],
    pub rmse: f64,
    pub n: usize,
}

impl QuadraticFit {
    pub fn eval(&self, x: f64) -> f64 {
        let [c0, c1, c2] = self.coeffs;
        c2 * x * x + c1 * x + c0
    }
}

/// Solve a 3x3 system by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Fit one section's quadratic score map to `(average probability, section score)` pairs.
///
/// The normal equations are formed in a centered, scaled variable
/// `t = (x - mean) / spread` and the coefficients mapped back to `x`.
/// The fitted map must be nondecreasing on `[0, 1]` (checked on a 101-point grid).
pub fn calibrate_theta(pairs: &[(f64, f64)]) -> Result<QuadraticFit, CfError> {
    let mut xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(CfError::DegenerateDesign { distinct: xs.len() });
    }
    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let spread = pairs.iter().map(|p| (p.0 - mean).abs()).fold(0.0, f64::max);

    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for &(x, y) in pairs {
        let t = (x - mean) / spread;
        let row = [1.0, t, t * t];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            aty[i] += row[i] * y;
        }
    }
    let [d0, d1, d2] = solve3(ata, aty).ok_or(CfError::DegenerateDesign { distinct: xs.len() })?;
    let (m, s) = (mean, spread);
    let coeffs = [d0 - d1 * m / s + d2 * m * m / (s * s), d1 / s - 2.0 * d2 * m / (s * s), d2 / (s * s)];
    let mut fit = QuadraticFit { coeffs, rmse: 0.0, n: pairs.len() };
    fit.rmse = (pairs.iter().map(|&(x, y)| (fit.eval(x) - y).powi(2)).sum::<f64>() / n).sqrt();

    let scale = 1.0 + coeffs[1].abs() + coeffs[2].abs();
    for i in 0..=100 {
        let x = i as f64 / 100.0;
        let slope = 2.0 * coeffs[2] * x + coeffs[1];
        if slope < -1e-9 * scale {
            return Err(CfError::NonMonotoneFit { x, slope });
        }
    }
    Ok(fit)
}

/// Refit both section quadratics from labelled users in `model`.
///
/// Labels without both section scores or whose user is unknown are skipped;
/// the third value of the result counts them.
pub fn calibrate_theta_from_labels(
    model: &CfModel,
    labels: &[ScoreLabel],
    lc_pool: &[String],
    rc_pool: &[String],
) -> Result<(ThetaParams, [QuadraticFit; 2], usize), CfError> {
    calibrate_theta_with(model, labels, lc_pool, rc_pool, |l| {
        model.user_row(&l.user_id).ok().map(|i| model.factors.user(i).to_vec())
    })
}

/// Like [`calibrate_theta_from_labels`] with user vectors supplied per label
/// (for example folded in from the history before the report time). Labels
/// for which `vector_of` returns `None` are skipped.
pub fn calibrate_theta_with<F>(
    model: &CfModel,
    labels: &[ScoreLabel],
    lc_pool: &[String],
    rc_pool: &[String],
    vector_of: F,
) -> Result<(ThetaParams, [QuadraticFit; 2], usize), CfError>
where
    F: Fn(&ScoreLabel) -> Option<Vec<f64>>,
{
    let mut pairs: [Vec<(f64, f64)>; 2] = Default::default();
    let mut skipped = 0;
    for l in labels {
        let (Some(lc), Some(rc)) = (l.score_lc, l.score_rc) else {
            skipped += 1;
            continue;
        };
        let Some(v) = vector_of(l) else {
            skipped += 1;
            continue;
        };
        pairs[0].push((model.section_average_for(&v, lc_pool, Section::LC)?, lc as f64));
        pairs[1].push((model.section_average_for(&v, rc_pool, Section::RC)?, rc as f64));
    }
    let lc_fit = calibrate_theta(&pairs[0])?;
    let rc_fit = calibrate_theta(&pairs[1])?;
    let mut theta = ThetaParams::default();
    theta.set_section(Section::LC, lc_fit.coeffs);
    theta.set_section(Section::RC, rc_fit.coeffs);
    Ok((theta, [lc_fit, rc_fit], skipped))
}
