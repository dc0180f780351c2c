//! Exact-ratio arithmetic and the dataset statistics reporter.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::api::SourceClass;
use super::records::{ChangeKind, ChangeRecord, TaskSpec};
use super::ModelError;

/// `num / den` kept as integers so reported percentages round exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub const fn new(num: u64, den: u64) -> Self {
        Self { num, den }
    }

    /// The fraction, or 0.0 when the denominator is zero.
    pub fn value(self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            self.num as f64 / self.den as f64
        }
    }

    /// Percentage rounded half-up to one decimal place.
    pub fn percent_1dp(self) -> f64 {
        round_half_up(self.num * 100, self.den, 1)
    }
}

/// `num / den` rounded half-up to `decimals` places, computed in integers.
/// Returns 0.0 for a zero denominator.
pub fn round_half_up(num: u64, den: u64, decimals: u32) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let scale = 10u128.pow(decimals);
    let (num, den) = (num as u128, den as u128);
    let scaled = (2 * num * scale + den) / (2 * den);
    scaled as f64 / scale as f64
}

/// Rounds an arbitrary fraction half-up; used only where no exact ratio exists.
pub fn round_f64_half_up(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    // nudge by a few ulps so values like 0.8355 (stored as 0.83549999..) round up
    ((x * scale) + 0.5 + 1e-9).floor() / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub count: u64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: u64,
    pub by_kind: BTreeMap<ChangeKind, Share>,
    pub by_source: BTreeMap<SourceClass, Share>,
}

fn shares<K: Ord + Copy>(keys: &[K], counts: &BTreeMap<K, u64>, total: u64) -> BTreeMap<K, Share> {
    keys.iter()
        .map(|k| {
            let count = counts.get(k).copied().unwrap_or(0);
            (*k, Share { count, percent: Ratio::new(count, total).percent_1dp() })
        })
        .collect()
}

/// Counts and percentages of records by change kind and by source class.
pub fn dataset_stats(records: &[ChangeRecord]) -> DatasetStats {
    let mut kinds = BTreeMap::new();
    let mut sources = BTreeMap::new();
    for r in records {
        *kinds.entry(r.kind).or_insert(0u64) += 1;
        *sources.entry(r.source_class).or_insert(0u64) += 1;
    }
    stats_from_counts(&kinds, &sources)
}

pub fn stats_from_counts(kinds: &BTreeMap<ChangeKind, u64>, sources: &BTreeMap<SourceClass, u64>) -> DatasetStats {
    let total: u64 = kinds.values().sum();
    DatasetStats {
        total,
        by_kind: shares(&ChangeKind::ALL, kinds, total),
        by_source: shares(&[SourceClass::Official, SourceClass::ThirdParty], sources, total),
    }
}

/// Mean number of test cases per task, rounded half-up to two decimals.
pub fn avg_cases_per_task(tasks: &[TaskSpec]) -> Result<f64, ModelError> {
    if tasks.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let cases: u64 = tasks.iter().map(|t| t.test_cases.len() as u64).sum();
    Ok(round_half_up(cases, tasks.len() as u64, 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VersionId;

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(1, 8, 2), 0.13); // 0.125
        assert_eq!(round_half_up(1, 3, 2), 0.33);
        assert_eq!(round_half_up(2, 3, 2), 0.67);
        assert_eq!(round_half_up(5, 1000, 2), 0.01);
        assert_eq!(round_half_up(0, 7, 1), 0.0);
        assert_eq!(round_half_up(7, 0, 1), 0.0);
        assert_eq!(Ratio::new(1, 8).percent_1dp(), 12.5);
        assert_eq!(Ratio::new(1, 16).percent_1dp(), 6.3); // 6.25
        assert_eq!(round_f64_half_up(0.8355, 3), 0.836);
    }

    #[test]
    fn empty_input_reports_zeros() {
        let stats = dataset_stats(&[]);
        assert_eq!(stats.total, 0);
        assert_eq!(stats.by_kind.len(), 4);
        assert!(stats.by_kind.values().all(|s| s.count == 0 && s.percent == 0.0));
        assert!(stats.by_source.values().all(|s| s.count == 0 && s.percent == 0.0));
    }

    fn task(cases: usize) -> TaskSpec {
        TaskSpec {
            task_id: "t".into(),
            change_id: "c".into(),
            query: "q".into(),
            function_signature: "fn solve()".into(),
            reference_solution: "fn solve() {}".into(),
            test_program: String::new(),
            test_cases: (0..cases).map(|i| format!("assert!({i} >= 0);")).collect(),
            target_version: VersionId::new(1, 77, 0),
        }
    }

    #[test]
    fn average_cases() {
        assert!(matches!(avg_cases_per_task(&[]), Err(ModelError::EmptyDataset)));
        assert_eq!(avg_cases_per_task(&[task(1)]).unwrap(), 1.00);
        assert_eq!(avg_cases_per_task(&[task(2), task(3), task(4)]).unwrap(), 3.00);
    }

    #[test]
    fn percentages_recompute_from_counts() {
        for (counts, total) in [([1u64, 1, 1, 0], 3u64), ([5, 0, 2, 9], 16), ([184, 185, 195, 24], 588)] {
            let kinds: BTreeMap<_, _> = ChangeKind::ALL.iter().copied().zip(counts).collect();
            let stats = stats_from_counts(&kinds, &BTreeMap::new());
            assert_eq!(stats.total, total);
            let sum: f64 = stats.by_kind.values().map(|s| s.percent).sum();
            assert!((sum - 100.0).abs() <= 0.2 + 1e-9, "sum {sum}");
            for (k, share) in &stats.by_kind {
                let c = kinds[k];
                let exact = (c as f64) * 100.0 / total as f64;
                assert!((share.percent - exact).abs() <= 0.05 + 1e-9);
            }
        }
    }
}
