use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

/// A `major.minor.patch` release identifier of the subject ecosystem.
///
/// Ordering is lexicographic on the three components. The text form is
/// strict: exactly three dot-separated decimal components, nothing else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VersionId {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
}

impl VersionId {
    pub const fn new(major: u64, minor: u64, patch: u64) -> Self {
        Self { major, minor, patch }
    }

    pub fn to_semver(self) -> semver::Version {
        semver::Version::new(self.major, self.minor, self.patch)
    }
}

/// Parses `text` as `digits.digits.digits`.
pub fn parse_version(text: &str) -> Result<VersionId, ModelError> {
    let malformed = || ModelError::MalformedVersion(text.to_string());
    let mut parts = text.split('.');
    let mut next = || -> Result<u64, ModelError> {
        let part = parts.next().ok_or_else(malformed)?;
        if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        // Leading zeros would break the format/parse round-trip.
        if part.len() > 1 && part.starts_with('0') {
            return Err(malformed());
        }
        part.parse().map_err(|_| malformed())
    };
    let version = VersionId::new(next()?, next()?, next()?);
    if parts.next().is_some() {
        return Err(malformed());
    }
    Ok(version)
}

impl FromStr for VersionId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_version(s)
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

impl Serialize for VersionId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VersionId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_version(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_release_version() {
        assert_eq!(parse_version("1.77.0").unwrap(), VersionId::new(1, 77, 0));
        assert_eq!(parse_version("0.0.0").unwrap(), VersionId::new(0, 0, 0));
    }

    #[test]
    fn rejects_other_shapes() {
        for bad in ["1.84", "1.84.0.1", "", "v1.2.3", "1..3", "1.2.x", "1.02.3", " 1.2.3", "1.2.3-beta"] {
            assert!(matches!(parse_version(bad), Err(ModelError::MalformedVersion(_))), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn ordering_is_lexicographic() {
        let a = parse_version("1.9.9").unwrap();
        let b = parse_version("1.10.0").unwrap();
        assert!(a < b);
        assert!(parse_version("1.77.1").unwrap() > parse_version("1.77.0").unwrap());
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(major in 0u64..10_000, minor in 0u64..10_000, patch in 0u64..10_000) {
            let v = VersionId::new(major, minor, patch);
            let text = v.to_string();
            prop_assert_eq!(parse_version(&text).unwrap(), v);
            prop_assert_eq!(parse_version(&text).unwrap().to_string(), text);
        }
    }
}
