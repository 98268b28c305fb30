use super::{AbError, Arm, UserJourney};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;
use std::io::{BufRead, Write};

/// Engagement metrics of one arm. Counts and money are exact integers;
/// rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub arm: Arm,
    pub n_users: u64,
    pub completed: u64,
    pub registered: u64,
    pub purchased: u64,
    pub solved_total: u64,
    pub solved_sq_total: u128,
    pub revenue_cents: i64,
    pub revenue_sq_total: i128,
    pub completion_rate: f64,
    pub registration_rate: f64,
    pub avg_questions_solved: f64,
    pub conversion_rate: f64,
    /// `revenue_cents / n_users`, unrounded.
    pub arpu_cents: f64,
    /// Questions solved on each day, summed over the arm.
    pub solved_per_day: Vec<u64>,
}

impl ArmMetrics {
    fn new(arm: Arm, days: usize) -> Self {
        ArmMetrics {
            arm,
            n_users: 0,
            completed: 0,
            registered: 0,
            purchased: 0,
            solved_total: 0,
            solved_sq_total: 0,
            revenue_cents: 0,
            revenue_sq_total: 0,
            completion_rate: 0.0,
            registration_rate: 0.0,
            avg_questions_solved: 0.0,
            conversion_rate: 0.0,
            arpu_cents: 0.0,
            solved_per_day: vec![0; days],
        }
    }

    fn add(&mut self, j: &UserJourney) {
        self.n_users += 1;
        self.completed += j.diagnostic_completed as u64;
        self.registered += j.registered as u64;
        self.purchased += j.purchased as u64;
        self.solved_total += j.questions_solved;
        self.solved_sq_total += (j.questions_solved as u128) * (j.questions_solved as u128);
        self.revenue_cents += j.revenue_cents;
        self.revenue_sq_total += (j.revenue_cents as i128) * (j.revenue_cents as i128);
        for (d, c) in self.solved_per_day.iter_mut().zip(&j.solved_per_day) {
            *d += *c as u64;
        }
    }

    fn finish(&mut self) {
        let n = self.n_users as f64;
        let pct = |c: u64| 100.0 * c as f64 / n;
        self.completion_rate = pct(self.completed);
        self.registration_rate = pct(self.registered);
        self.conversion_rate = pct(self.purchased);
        self.avg_questions_solved = self.solved_total as f64 / n;
        self.arpu_cents = self.revenue_cents as f64 / n;
    }

    pub fn arpu_dollars(&self) -> f64 {
        self.arpu_cents / 100.0
    }

    /// Mean questions solved per arm user on each day.
    pub fn solved_per_day_mean(&self) -> Vec<f64> {
        self.solved_per_day.iter().map(|&c| c as f64 / self.n_users as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// z for proportions, t for means.
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided tests of attentive versus latent-factor arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub completion: TestResult,
    pub registration: TestResult,
    pub conversion: TestResult,
    pub questions_solved: TestResult,
    pub arpu: TestResult,
}

impl Significance {
    pub fn p_values(&self) -> [f64; 5] {
        [
            self.completion.p_value,
            self.registration.p_value,
            self.conversion.p_value,
            self.questions_solved.p_value,
            self.arpu.p_value,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementReport {
    pub days: u32,
    pub cf: ArmMetrics,
    pub attentive: ArmMetrics,
    /// Attentive minus latent-factor mean questions solved, per day.
    pub solved_gap_per_day: Vec<f64>,
    /// Absent when an arm has fewer than 30 users.
    pub significance: Option<Significance>,
}

/// Aggregate journeys per arm. Money is summed in integer cents; the result
/// does not depend on journey order.
pub fn compute_metrics(journeys: &[UserJourney], days: u32) -> Result<EngagementReport, AbError> {
    if journeys.is_empty() {
        return Err(AbError::EmptyInput);
    }
    let mut cf = ArmMetrics::new(Arm::Cf, days as usize);
    let mut am = ArmMetrics::new(Arm::Attentive, days as usize);
    for j in journeys {
        match j.arm {
            Arm::Cf => cf.add(j),
            Arm::Attentive => am.add(j),
        }
    }
    if cf.n_users == 0 {
        return Err(AbError::SingleArm(Arm::Attentive));
    }
    if am.n_users == 0 {
        return Err(AbError::SingleArm(Arm::Cf));
    }
    cf.finish();
    am.finish();
    let solved_gap_per_day =
        am.solved_per_day_mean().iter().zip(cf.solved_per_day_mean()).map(|(a, c)| a - c).collect();
    let mut report = EngagementReport { days, cf, attentive: am, solved_gap_per_day, significance: None };
    report.significance = significance_test(&report).ok();
    Ok(report)
}

/// Pooled two-proportion z-test, `p = erfc(|z| / sqrt 2)`. Returns `z = 0,
/// p = 1` when the pooled proportion is 0 or 1.
pub fn two_proportion_z(x1: u64, n1: u64, x2: u64, n2: u64) -> TestResult {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (x1 + x2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    if se == 0.0 {
        return TestResult { statistic: 0.0, p_value: 1.0 };
    }
    let z = (x2 as f64 / n2f - x1 as f64 / n1f) / se;
    TestResult { statistic: z, p_value: erfc(z.abs() / std::f64::consts::SQRT_2) }
}

/// Welch's unequal-variance t-test from sample sizes, sums and sums of
/// squares; Welch-Satterthwaite degrees of freedom.
pub fn welch_t(n1: f64, s1: f64, ss1: f64, n2: f64, s2: f64, ss2: f64) -> TestResult {
    let (m1, m2) = (s1 / n1, s2 / n2);
    let v1 = ((ss1 - s1 * m1) / (n1 - 1.0)).max(0.0);
    let v2 = ((ss2 - s2 * m2) / (n2 - 1.0)).max(0.0);
    let (a, b) = (v1 / n1, v2 / n2);
    if a + b == 0.0 {
        let p = if m1 == m2 { 1.0 } else { 0.0 };
        let t = if m1 == m2 { 0.0 } else { (m2 - m1).signum() * f64::INFINITY };
        return TestResult { statistic: t, p_value: p };
    }
    let t = (m2 - m1) / (a + b).sqrt();
    let df = (a + b).powi(2) / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    TestResult { statistic: t, p_value: (2.0 * dist.sf(t.abs())).min(1.0) }
}

/// z-tests for the three funnel rates, Welch's t for questions solved and
/// revenue per user. Positive statistics favor the attentive arm.
pub fn significance_test(r: &EngagementReport) -> Result<Significance, AbError> {
    for a in [&r.cf, &r.attentive] {
        if a.n_users < 30 {
            return Err(AbError::InsufficientN { arm: a.arm, n: a.n_users as usize });
        }
    }
    let (c, a) = (&r.cf, &r.attentive);
    let (nc, na) = (c.n_users as f64, a.n_users as f64);
    Ok(Significance {
        completion: two_proportion_z(c.completed, c.n_users, a.completed, a.n_users),
        registration: two_proportion_z(c.registered, c.n_users, a.registered, a.n_users),
        conversion: two_proportion_z(c.purchased, c.n_users, a.purchased, a.n_users),
        questions_solved: welch_t(
            nc,
            c.solved_total as f64,
            c.solved_sq_total as f64,
            na,
            a.solved_total as f64,
            a.solved_sq_total as f64,
        ),
        arpu: welch_t(
            nc,
            c.revenue_cents as f64,
            c.revenue_sq_total as f64,
            na,
            a.revenue_cents as f64,
            a.revenue_sq_total as f64,
        ),
    })
}

fn money(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let c = cents.unsigned_abs();
    let dollars = (c / 100).to_string();
    let mut grouped = String::new();
    for (i, ch) in dollars.chars().enumerate() {
        if i > 0 && (dollars.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    format!("{sign}${grouped}.{:02}", c % 100)
}

/// Aligned text tables: learning metrics, then business metrics.
pub fn render_text(r: &EngagementReport) -> String {
    let p = |f: fn(&Significance) -> TestResult| {
        r.significance.map(|s| format!("{:.4}", f(&s).p_value)).unwrap_or_else(|| "-".into())
    };
    let rows_a = [
        ("Users", r.cf.n_users.to_string(), r.attentive.n_users.to_string(), "-".to_string()),
        (
            "Completion rate (%)",
            format!("{:.2}", r.cf.completion_rate),
            format!("{:.2}", r.attentive.completion_rate),
            p(|s| s.completion),
        ),
        (
            "Registration rate (%)",
            format!("{:.2}", r.cf.registration_rate),
            format!("{:.2}", r.attentive.registration_rate),
            p(|s| s.registration),
        ),
        (
            "Avg questions solved",
            format!("{:.2}", r.cf.avg_questions_solved),
            format!("{:.2}", r.attentive.avg_questions_solved),
            p(|s| s.questions_solved),
        ),
    ];
    let rows_b = [
        (
            "Conversion rate (%)",
            format!("{:.2}", r.cf.conversion_rate),
            format!("{:.2}", r.attentive.conversion_rate),
            p(|s| s.conversion),
        ),
        (
            "ARPU ($)",
            format!("{:.2}", r.cf.arpu_dollars()),
            format!("{:.2}", r.attentive.arpu_dollars()),
            p(|s| s.arpu),
        ),
        ("Total profit", money(r.cf.revenue_cents), money(r.attentive.revenue_cents), "-".into()),
    ];
    let mut out = String::new();
    for (title, rows) in [("Learning engagement", &rows_a[..]), ("Business impact", &rows_b[..])] {
        out.push_str(&format!("{title}\n"));
        out.push_str(&format!("{:<24}{:>16}{:>16}{:>10}\n", "Metric", "CF", "Attentive", "p"));
        for (name, a, b, pv) in rows {
            out.push_str(&format!("{name:<24}{a:>16}{b:>16}{pv:>10}\n"));
        }
        out.push('\n');
    }
    out
}

/// CSV `day,cf_mean,attentive_mean,gap` with one row per experiment day.
pub fn write_gap_csv<W: Write>(mut w: W, r: &EngagementReport) -> std::io::Result<()> {
    writeln!(w, "day,cf_mean,attentive_mean,gap")?;
    let (c, a) = (r.cf.solved_per_day_mean(), r.attentive.solved_per_day_mean());
    for d in 0..r.days as usize {
        writeln!(w, "{d},{},{},{}", c[d], a[d], r.solved_gap_per_day[d])?;
    }
    w.flush()
}

/// One JSON object per line.
pub fn write_journeys<W: Write>(mut w: W, journeys: &[UserJourney]) -> std::io::Result<()> {
    for j in journeys {
        serde_json::to_writer(&mut w, j)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_journeys<R: BufRead>(r: R) -> Result<Vec<UserJourney>, AbError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let j: UserJourney = serde_json::from_str(&line)
            .map_err(|e| AbError::MalformedJourney { line: i + 1, reason: e.to_string() })?;
        if !j.is_consistent() {
            return Err(AbError::MalformedJourney {
                line: i + 1,
                reason: "funnel or revenue fields are inconsistent".into(),
            });
        }
        out.push(j);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn journey(arm: Arm, completed: bool, solved: &[u32], revenue: i64) -> UserJourney {
        UserJourney {
            user_id: "u".into(),
            arm,
            join_day: 0,
            diagnostic_len: 9,
            true_score: 500,
            predicted_score: 500,
            abs_error: 0.0,
            diagnostic_started: true,
            diagnostic_completed: completed,
            registered: revenue > 0,
            solved_per_day: solved.to_vec(),
            questions_solved: solved.iter().map(|&c| c as u64).sum(),
            purchased: revenue > 0,
            revenue_cents: revenue,
        }
    }

    #[test]
    fn two_proportion_reference() {
        let r = two_proportion_z(550, 1000, 650, 1000);
        assert!((r.statistic - 4.5644).abs() < 1e-3, "{r:?}");
        assert!(r.p_value < 1e-4);
        let same = two_proportion_z(40, 100, 40, 100);
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn welch_reference() {
        // samples {1,2,3,4} and {2,4,6,8}: |t| = sqrt 3, df = 4.4118, p = 0.151581
        let r = welch_t(4.0, 10.0, 30.0, 4.0, 20.0, 120.0);
        assert!((r.statistic - 3f64.sqrt()).abs() < 1e-12);
        assert!((r.p_value - 0.151_580_5).abs() < 1e-6, "{r:?}");
        let same = welch_t(5.0, 10.0, 20.0, 5.0, 10.0, 20.0);
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn all_purchase_at_one_price() {
        let mut js = vec![journey(Arm::Cf, true, &[1, 0], 1999); 40];
        js.extend(vec![journey(Arm::Attentive, true, &[1, 0], 1999); 35]);
        let r = compute_metrics(&js, 2).unwrap();
        assert_eq!(r.cf.conversion_rate, 100.0);
        assert_eq!(r.cf.arpu_cents, 1999.0);
        assert_eq!(r.cf.revenue_cents, 40 * 1999);
        assert_eq!(r.solved_gap_per_day, vec![0.0, 0.0]);
        let s = r.significance.unwrap();
        assert!(s.p_values().iter().all(|p| *p == 1.0));
    }

    #[test]
    fn single_arm_and_small_n() {
        let js = vec![journey(Arm::Cf, true, &[0], 0); 3];
        assert!(matches!(compute_metrics(&js, 1), Err(AbError::SingleArm(Arm::Cf))));
        let mut js = js;
        js.push(journey(Arm::Attentive, false, &[0], 0));
        let r = compute_metrics(&js, 1).unwrap();
        assert!(r.significance.is_none());
        assert!(matches!(significance_test(&r), Err(AbError::InsufficientN { .. })));
    }

    #[test]
    fn order_does_not_matter() {
        let mut js: Vec<_> = (0..60)
            .map(|i| {
                journey(
                    if i % 3 == 0 { Arm::Cf } else { Arm::Attentive },
                    i % 2 == 0,
                    &[i % 5, 1],
                    (i % 7 == 0) as i64 * 1234,
                )
            })
            .map(|mut j| {
                if !j.diagnostic_completed {
                    j.solved_per_day = vec![0, 0];
                    j.questions_solved = 0;
                }
                j
            })
            .collect();
        let a = compute_metrics(&js, 2).unwrap();
        js.reverse();
        assert_eq!(compute_metrics(&js, 2).unwrap(), a);
    }

    #[test]
    fn text_and_csv_outputs() {
        let mut js = vec![journey(Arm::Cf, true, &[2, 1], 14_294_955); 1];
        js.push(journey(Arm::Attentive, true, &[1, 1], 0));
        let r = compute_metrics(&js, 2).unwrap();
        let t = render_text(&r);
        assert!(t.contains("$142,949.55"));
        assert!(t.contains("Completion rate (%)"));
        let mut csv = Vec::new();
        write_gap_csv(&mut csv, &r).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "day,cf_mean,attentive_mean,gap\n0,2,1,-1\n1,1,1,0\n");
        let mut log = Vec::new();
        write_journeys(&mut log, &js).unwrap();
        assert_eq!(read_journeys(&log[..]).unwrap(), js);
        assert!(read_journeys(&b"{\"bad\":1}\n"[..]).is_err());
    }
}
