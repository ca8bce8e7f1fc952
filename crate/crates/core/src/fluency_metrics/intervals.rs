//! Interval arithmetic on half-open millisecond spans `[start, end)`.

use serde::{Deserialize, Serialize};

use crate::ids::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Action,
    PuzzleMove,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityInterval {
    pub agent: AgentId,
    pub start_ms: u64,
    pub end_ms: u64,
    pub kind: IntervalKind,
}

impl ActivityInterval {
    pub fn span(&self) -> (u64, u64) {
        (self.start_ms, self.end_ms)
    }
}

/// Sorted, disjoint, non-empty spans covering the same time as `spans`
/// clipped to `[lo, hi)`.
pub fn merge(spans: impl IntoIterator<Item = (u64, u64)>, lo: u64, hi: u64) -> Vec<(u64, u64)> {
    let mut v: Vec<(u64, u64)> = spans
        .into_iter()
        .map(|(s, e)| (s.max(lo), e.min(hi)))
        .filter(|(s, e)| s < e)
        .collect();
    v.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(v.len());
    for (s, e) in v {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

pub fn measure(merged: &[(u64, u64)]) -> u64 {
    merged.iter().map(|(s, e)| e - s).sum()
}

/// Intersection of two merged span lists.
pub fn intersect(a: &[(u64, u64)], b: &[(u64, u64)]) -> Vec<(u64, u64)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let s = a[i].0.max(b[j].0);
        let e = a[i].1.min(b[j].1);
        if s < e {
            out.push((s, e));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Time during which every list has an active span.
pub fn all_overlap(per_agent: &[Vec<(u64, u64)>]) -> Vec<(u64, u64)> {
    let mut iter = per_agent.iter();
    let Some(first) = iter.next() else {
        return Vec::new();
    };
    iter.fold(first.clone(), |acc, next| intersect(&acc, next))
}

/// For each interval, the gap until the earliest interval of a different agent
/// that starts after it started; overlaps count as zero delay. Intervals with
/// no such successor contribute nothing.
pub fn handoff_delays(intervals: &[ActivityInterval]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by_key(|&i| (intervals[i].start_ms, i));
    let mut delays = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        let cur = &intervals[i];
        let next = order[pos + 1..]
            .iter()
            .map(|&j| &intervals[j])
            .find(|o| o.agent != cur.agent && o.start_ms > cur.start_ms);
        if let Some(n) = next {
            delays.push(n.start_ms.saturating_sub(cur.end_ms));
        }
    }
    delays
}

/// Starts at which the acting agent changes, including the very first start.
pub fn cross_agent_starts(starts: &[(u64, AgentId)]) -> Vec<u64> {
    let mut out = Vec::new();
    let mut last: Option<&AgentId> = None;
    for (t, a) in starts {
        if last != Some(a) {
            out.push(*t);
            last = Some(a);
        }
    }
    out
}

pub fn mean(xs: &[u64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().map(|&x| x as f64).sum::<f64>() / xs.len() as f64)
    }
}

pub fn median(xs: &[u64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
    })
}

/// Population coefficient of variation.
pub fn coefficient_of_variation(xs: &[u64]) -> Option<f64> {
    let m = mean(xs)?;
    if m == 0.0 {
        return None;
    }
    let var = xs.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / xs.len() as f64;
    Some(var.sqrt() / m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_joins_overlapping_and_touching() {
        assert_eq!(
            merge([(5, 15), (0, 10), (15, 20), (30, 40)], 0, 35),
            vec![(0, 20), (30, 35)]
        );
    }

    #[test]
    fn union_of_overlapping_self_intervals() {
        let m = merge([(0, 10_000), (5_000, 15_000)], 0, 20_000);
        assert_eq!(20_000 - measure(&m), 5_000);
    }

    #[test]
    fn three_way_overlap() {
        let lists = vec![vec![(0, 10_000)], vec![(5_000, 20_000)], vec![(8_000, 12_000)]];
        assert_eq!(measure(&all_overlap(&lists)), 2_000);
    }

    #[test]
    fn cv_of_two_intervals() {
        let cv = coefficient_of_variation(&[5_000, 10_000]).unwrap();
        assert!((cv - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(coefficient_of_variation(&[5_000, 5_000, 5_000]), Some(0.0));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3, 1, 2]), Some(2.0));
        assert_eq!(median(&[4, 1, 2, 3]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
