use super::{CorpusError, ScoreLabel};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub users: Vec<String>,
    pub labels: Vec<ScoreLabel>,
}

/// Users are never shared between partitions; a user brings all of their labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Partition,
    pub validation: Partition,
    pub test: Partition,
}

impl DatasetSplit {
    pub fn partitions(&self) -> [&Partition; 3] {
        [&self.train, &self.validation, &self.test]
    }
}

/// Apportion `n` items by `ratios` with the largest-remainder rule, so each
/// count is within one of its exact share.
fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact = ratios.map(|r| r * n as f64);
    let mut counts = exact.map(|e| e.floor() as usize);
    let mut remaining = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if ratios[i] > 0.0 {
            counts[i] += 1;
            remaining -= 1;
        }
    }
    counts
}

/// Split labels into user-disjoint train/validation/test partitions.
///
/// Distinct users are sorted, shuffled with `seed`, and cut into contiguous
/// blocks sized by `ratios`. Label order inside each partition follows input order.
pub fn split_dataset(
    labels: &[ScoreLabel],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if labels.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|x| !x.is_finite() || *x < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidConfig(format!(
            "split ratios {r:?} must be non-negative and sum to 1"
        )));
    }
    let users: BTreeSet<&str> = labels.iter().map(|l| l.user_id.as_str()).collect();
    let mut users: Vec<&str> = users.into_iter().collect();
    users.shuffle(&mut crate::rng::rng(seed));
    let [n_train, n_val, _] = apportion(users.len(), r);

    let mut slot: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, u) in users.iter().enumerate() {
        let p = if i < n_train {
            0
        } else if i < n_train + n_val {
            1
        } else {
            2
        };
        slot.insert(u, p);
    }
    let mut parts: [Partition; 3] = Default::default();
    for u in &users {
        parts[slot[u]].users.push(u.to_string());
    }
    for l in labels {
        parts[slot[l.user_id.as_str()]].labels.push(l.clone());
    }
    let [train, validation, test] = parts;
    Ok(DatasetSplit { train, validation, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn label(user: usize, t: i64) -> ScoreLabel {
        ScoreLabel {
            user_id: format!("u{user:05}"),
            score_total: 500,
            score_lc: None,
            score_rc: None,
            report_time: t,
        }
    }

    #[test]
    fn paper_sized_split() {
        // 2,012 users carrying 2,594 labels.
        let mut labels: Vec<_> = (0..2012).map(|u| label(u, 0)).collect();
        labels.extend((0..582).map(|u| label(u * 3, 1)));
        assert_eq!(labels.len(), 2594);
        let n = 2012.0;
        let s = split_dataset(&labels, (1302.0 / n, 244.0 / n, 466.0 / n), 5).unwrap();
        assert_eq!([s.train.users.len(), s.validation.users.len(), s.test.users.len()], [1302, 244, 466]);
        let total: usize = s.partitions().iter().map(|p| p.labels.len()).sum();
        assert_eq!(total, 2594);
    }

    #[test]
    fn degenerate_ratio_puts_everything_in_train() {
        let labels = vec![label(0, 0), label(0, 1)];
        let s = split_dataset(&labels, (1.0, 0.0, 0.0), 1).unwrap();
        assert_eq!(s.train.labels.len(), 2);
        assert!(s.validation.users.is_empty() && s.test.users.is_empty());
    }

    #[test]
    fn errors() {
        assert!(matches!(split_dataset(&[], (0.8, 0.1, 0.1), 0), Err(CorpusError::EmptyInput)));
        assert!(matches!(
            split_dataset(&[label(0, 0)], (0.8, 0.1, 0.2), 0),
            Err(CorpusError::InvalidConfig(_))
        ));
    }

    #[test]
    fn ten_thousand_users_disjoint_and_complete() {
        let labels: Vec<_> = (0..10_000).flat_map(|u| [label(u, 0), label(u, 1)]).collect();
        let s = split_dataset(&labels, (0.7, 0.1, 0.2), 42).unwrap();
        let sets: Vec<HashSet<&str>> =
            s.partitions().iter().map(|p| p.users.iter().map(String::as_str).collect()).collect();
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(sets[i].is_disjoint(&sets[j]));
            }
        }
        assert_eq!(sets.iter().map(HashSet::len).sum::<usize>(), 10_000);
        for p in s.partitions() {
            let users: HashSet<&str> = p.users.iter().map(String::as_str).collect();
            assert!(p.labels.iter().all(|l| users.contains(l.user_id.as_str())));
        }
        assert_eq!(s.train.users.len(), 7000);
        assert_eq!(split_dataset(&labels, (0.7, 0.1, 0.2), 42).unwrap(), s);
    }

    #[test]
    fn apportion_is_within_one() {
        for n in 0..200 {
            let r = [0.333, 0.333, 0.334];
            let c = apportion(n, r);
            assert_eq!(c.iter().sum::<usize>(), n);
            for i in 0..3 {
                assert!((c[i] as f64 - r[i] * n as f64).abs() <= 1.0);
            }
        }
    }
}
