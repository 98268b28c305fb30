use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Denominator floor of the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
}

/// Compare `analytic` with central differences of `loss` around `params`.
///
/// Relative error per coordinate is `|a - n| / max(|a| + |n|, 1e-6)`. At most
/// `max_coords` coordinates are checked; when there are more parameters a
/// seeded random subset is used.
///
/// # Panics
/// If `eps` is outside `[1e-7, 1e-3]` or the slices differ in length.
pub fn grad_check<F: FnMut(&[f64]) -> f64>(
    params: &[f64],
    analytic: &[f64],
    mut loss: F,
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> GradCheckReport {
    assert!((1e-7..=1e-3).contains(&eps), "eps must lie in [1e-7, 1e-3]");
    assert_eq!(params.len(), analytic.len());
    let mut coords: Vec<usize> = (0..params.len()).collect();
    if coords.len() > max_coords {
        coords.shuffle(&mut rng::rng(seed));
        coords.truncate(max_coords);
        coords.sort_unstable();
    }
    let mut x = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: coords.len(),
    };
    for i in coords {
        let orig = x[i];
        x[i] = orig + eps;
        let up = loss(&x);
        x[i] = orig - eps;
        let down = loss(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(REL_ERROR_FLOOR);
        if err > report.max_rel_error || !err.is_finite() {
            report = GradCheckReport {
                max_rel_error: err,
                worst_index: i,
                worst_analytic: a,
                worst_numeric: numeric,
                ..report
            };
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let p = vec![0.3, -1.2, 2.0, 0.7];
        let loss = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum();
        let g: Vec<f64> = p.iter().enumerate().map(|(i, v)| 2.0 * (i + 1) as f64 * v).collect();
        let r = grad_check(&p, &g, loss, 1e-5, usize::MAX, 0);
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert_eq!(r.checked, 4);
    }

    #[test]
    fn corrupted_gradient_is_reported() {
        let p = vec![0.3, -1.2, 2.0];
        let loss = |x: &[f64]| x.iter().map(|v| v * v).sum();
        let mut g: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        g[1] *= 2.0;
        let r = grad_check(&p, &g, loss, 1e-5, usize::MAX, 0);
        assert!(r.max_rel_error > 0.3);
        assert_eq!(r.worst_index, 1);
    }

    #[test]
    fn sampling_limits_coordinates() {
        let p = vec![1.0; 50];
        let g = vec![2.0; 50];
        let r = grad_check(&p, &g, |x| x.iter().map(|v| v * v).sum(), 1e-4, 10, 3);
        assert_eq!(r.checked, 10);
    }
}
