use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::sample::Sample;

/// Dataset-specific merge/drop rules for the aspect-count breakdown.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BucketProfile {
    /// One bucket per observed count.
    #[default]
    Raw,
    /// Counts above five merge into a single `>5` bucket.
    AtsaRestaurant,
    /// Counts of six or more are dropped.
    AtsaLaptop,
    /// Counts of four or more are dropped.
    AcsaRestaurant,
}

impl BucketProfile {
    pub fn key(self, count: usize) -> Option<BucketKey> {
        match self {
            BucketProfile::Raw => Some(BucketKey::Count(count)),
            BucketProfile::AtsaRestaurant if count > 5 => Some(BucketKey::Over5),
            BucketProfile::AtsaLaptop if count >= 6 => None,
            BucketProfile::AcsaRestaurant if count >= 4 => None,
            _ => Some(BucketKey::Count(count)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BucketKey {
    Count(usize),
    Over5,
}

impl fmt::Display for BucketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BucketKey::Count(n) => write!(f, "{n}"),
            BucketKey::Over5 => f.write_str(">5"),
        }
    }
}

/// Groups sample indices by `aspects_in_review` under `profile`.
pub fn bucket_by_aspect_count(samples: &[Sample], profile: BucketProfile) -> BTreeMap<BucketKey, Vec<usize>> {
    let mut out: BTreeMap<BucketKey, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        if let Some(k) = profile.key(s.aspects_in_review) {
            out.entry(k).or_default().push(i);
        }
    }
    out
}
