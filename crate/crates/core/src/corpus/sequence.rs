use super::Interaction;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;

pub const DEFAULT_MAX_LEN: usize = 512;

/// One student's interactions in time order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentSequence {
    pub user_id: String,
    pub events: Vec<Interaction>,
}

/// Timestamp, then question id; remaining fields only make the order total
/// so that any permutation of the input sorts identically.
fn event_order(a: &Interaction, b: &Interaction) -> Ordering {
    a.timestamp
        .cmp(&b.timestamp)
        .then_with(|| a.question_id.cmp(&b.question_id))
        .then_with(|| a.section.cmp(&b.section))
        .then_with(|| a.correct.cmp(&b.correct))
        .then_with(|| a.elapsed_ms.cmp(&b.elapsed_ms))
        .then_with(|| a.time_limit_ms.cmp(&b.time_limit_ms))
}

impl StudentSequence {
    pub fn new(user_id: impl Into<String>, mut events: Vec<Interaction>) -> Self {
        events.sort_by(event_order);
        StudentSequence { user_id: user_id.into(), events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events observed at or before `time`, keeping at most the `max_len` most recent.
    pub fn history_at(&self, time: i64, max_len: usize) -> StudentSequence {
        let end = self.events.partition_point(|e| e.timestamp <= time);
        let start = end.saturating_sub(max_len);
        StudentSequence { user_id: self.user_id.clone(), events: self.events[start..end].to_vec() }
    }

    /// Keep the `max_len` most recent events.
    pub fn truncate_recent(&mut self, max_len: usize) {
        if self.events.len() > max_len {
            self.events.drain(..self.events.len() - max_len);
        }
    }
}

/// Group interactions by user (users in id order), sort each user's events and
/// keep the most recent `max_len`.
pub fn build_sequences(interactions: &[Interaction], max_len: usize) -> Vec<StudentSequence> {
    assert!(max_len > 0, "max_len must be positive");
    let mut by_user: BTreeMap<&str, Vec<Interaction>> = BTreeMap::new();
    for it in interactions {
        by_user.entry(it.user_id.as_str()).or_default().push(it.clone());
    }
    by_user
        .into_iter()
        .map(|(user, events)| {
            let mut seq = StudentSequence::new(user, events);
            seq.truncate_recent(max_len);
            seq
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Section;
    use rand::seq::SliceRandom;

    fn ev(user: &str, q: &str, ts: i64) -> Interaction {
        Interaction {
            user_id: user.into(),
            question_id: q.into(),
            section: Section::RC,
            correct: ts % 2 == 0,
            elapsed_ms: 10,
            time_limit_ms: 100,
            timestamp: ts,
        }
    }

    #[test]
    fn empty_in_empty_out() {
        assert!(build_sequences(&[], 512).is_empty());
    }

    #[test]
    fn truncation_keeps_most_recent() {
        let events: Vec<_> = (0..600).rev().map(|t| ev("u", &format!("q{t}"), t)).collect();
        let seqs = build_sequences(&events, 512);
        assert_eq!(seqs.len(), 1);
        let s = &seqs[0];
        assert_eq!(s.len(), 512);
        assert_eq!(s.events.first().unwrap().timestamp, 88);
        assert_eq!(s.events.last().unwrap().timestamp, 599);
    }

    #[test]
    fn ties_broken_by_question_id() {
        let seqs = build_sequences(&[ev("u", "b", 5), ev("u", "a", 5), ev("u", "c", 1)], 10);
        let qs: Vec<_> = seqs[0].events.iter().map(|e| e.question_id.as_str()).collect();
        assert_eq!(qs, ["c", "a", "b"]);
    }

    #[test]
    fn shuffled_input_gives_identical_output() {
        let mut rng = crate::rng::rng(11);
        let mut events = Vec::new();
        for u in 0..20 {
            for t in 0..30 {
                events.push(ev(&format!("u{u}"), &format!("q{}", (t * 7) % 5), t / 3));
            }
        }
        let reference = build_sequences(&events, 16);
        for _ in 0..10 {
            events.shuffle(&mut rng);
            assert_eq!(build_sequences(&events, 16), reference);
        }
    }

    #[test]
    fn history_cut_is_inclusive() {
        let s = StudentSequence::new("u", (0..10).map(|t| ev("u", "q", t * 10)).collect());
        assert_eq!(s.history_at(30, 100).len(), 4);
        assert_eq!(s.history_at(30, 2).events[0].timestamp, 20);
        assert!(s.history_at(-1, 100).is_empty());
    }
}
