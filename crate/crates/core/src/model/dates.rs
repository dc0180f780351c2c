use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::version::VersionId;
use super::ModelError;

const SHIPPED_TABLE: &str = include_str!("../../data/version_dates.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VersionDate {
    pub version: VersionId,
    pub released_on: NaiveDate,
}

/// Release dates for one channel, keyed by version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionDateTable {
    dates: BTreeMap<VersionId, NaiveDate>,
}

impl VersionDateTable {
    /// Builds a table; dates must strictly increase with version order.
    pub fn new(entries: impl IntoIterator<Item = VersionDate>) -> Result<Self, ModelError> {
        let mut dates = BTreeMap::new();
        for e in entries {
            if dates.insert(e.version, e.released_on).is_some() {
                return Err(ModelError::InvalidRecord(format!("duplicate date entry for {}", e.version)));
            }
        }
        for (a, b) in dates.iter().zip(dates.iter().skip(1)) {
            if a.1 >= b.1 {
                return Err(ModelError::InvalidRecord(format!(
                    "release dates not increasing: {} ({}) vs {} ({})",
                    a.0, a.1, b.0, b.1
                )));
            }
        }
        Ok(Self { dates })
    }

    /// The table shipped with the crate (subject releases 1.70.0 to 1.84.1).
    pub fn shipped() -> Self {
        let entries: Vec<VersionDate> = serde_json::from_str(SHIPPED_TABLE).expect("shipped version table parses");
        Self::new(entries).expect("shipped version table is ordered")
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::io(path, e))?;
        let entries: Vec<VersionDate> =
            serde_json::from_str(&text).map_err(|e| ModelError::Json { line: 0, source: e })?;
        Self::new(entries)
    }

    pub fn date_of(&self, version: VersionId) -> Result<NaiveDate, ModelError> {
        self.dates.get(&version).copied().ok_or(ModelError::UnknownVersionDate(version))
    }

    pub fn get(&self, version: VersionId) -> Option<NaiveDate> {
        self.dates.get(&version).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = VersionDate> + '_ {
        self.dates.iter().map(|(v, d)| VersionDate { version: *v, released_on: *d })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_table_covers_subject_range() {
        let t = VersionDateTable::shipped();
        for minor in 71..=84 {
            assert!(t.get(VersionId::new(1, minor, 0)).is_some(), "1.{minor}.0 missing");
        }
        assert_eq!(t.date_of(VersionId::new(1, 77, 0)).unwrap(), NaiveDate::from_ymd_opt(2024, 3, 21).unwrap());
        assert!(matches!(t.date_of(VersionId::new(1, 60, 0)), Err(ModelError::UnknownVersionDate(_))));
    }

    #[test]
    fn rejects_non_increasing_dates() {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        let entries = [
            VersionDate { version: VersionId::new(1, 1, 0), released_on: d("2024-02-01") },
            VersionDate { version: VersionId::new(1, 2, 0), released_on: d("2024-01-01") },
        ];
        assert!(VersionDateTable::new(entries).is_err());
    }
}
