use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::rng::SeedRng;

pub const SUBJECT_IDS: u32 = 10;
pub const VIEW_IDS: u32 = 5;
pub const TRAIN_SUBJECTS: usize = 6;
pub const TRAIN_VIEWS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitAxis {
    Subject,
    View,
}

impl SplitAxis {
    pub fn universe(self) -> u32 {
        match self {
            SplitAxis::Subject => SUBJECT_IDS,
            SplitAxis::View => VIEW_IDS,
        }
    }

    pub fn train_count(self) -> usize {
        match self {
            SplitAxis::Subject => TRAIN_SUBJECTS,
            SplitAxis::View => TRAIN_VIEWS,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SplitAxis::Subject => "subject",
            SplitAxis::View => "view",
        }
    }
}

impl fmt::Display for SplitAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subject" => Ok(SplitAxis::Subject),
            "view" => Ok(SplitAxis::View),
            other => invalid(format!("unknown split axis {other:?} (expected subject or view)")),
        }
    }
}

/// Held-out groups for cross-subject or cross-view evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub axis: SplitAxis,
    pub seed: u64,
    pub train_ids: Vec<u32>,
    pub test_ids: Vec<u32>,
}

impl SplitPlan {
    pub fn is_train(&self, id: u32) -> bool {
        self.train_ids.contains(&id)
    }
}

/// Shuffles `ids` with the seed and takes the protocol's prefix for training.
/// `ids` must be exactly `1..=N` for the axis (in any order).
pub fn make_split_of(axis: SplitAxis, ids: &[u32], seed: u64) -> Result<SplitPlan> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let expected: Vec<u32> = (1..=axis.universe()).collect();
    if sorted != expected {
        return invalid(format!("{axis} ids must be 1..={}, got {ids:?}", axis.universe()));
    }
    let mut rng = SeedRng::new(seed).fork(axis.universe() as u64);
    rng.shuffle(&mut sorted);
    let (train, test) = sorted.split_at(axis.train_count());
    let (mut train_ids, mut test_ids) = (train.to_vec(), test.to_vec());
    train_ids.sort_unstable();
    test_ids.sort_unstable();
    Ok(SplitPlan { axis, seed, train_ids, test_ids })
}

pub fn make_split(axis: SplitAxis, seed: u64) -> SplitPlan {
    let ids: Vec<u32> = (1..=axis.universe()).collect();
    make_split_of(axis, &ids, seed).expect("canonical id universe")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_sizes() {
        let s = make_split(SplitAxis::Subject, 7);
        assert_eq!((s.train_ids.len(), s.test_ids.len()), (6, 4));
        assert!(s.train_ids.iter().all(|i| !s.test_ids.contains(i)));
        let v = make_split(SplitAxis::View, 7);
        assert_eq!((v.train_ids.len(), v.test_ids.len()), (3, 2));
        assert_eq!(make_split(SplitAxis::View, 7), v);
    }

    #[test]
    fn bad_universe() {
        assert!(make_split_of(SplitAxis::View, &[1, 2, 3, 4], 0).is_err());
        assert!(make_split_of(SplitAxis::View, &[0, 1, 2, 3, 4], 0).is_err());
        assert!("diagonal".parse::<SplitAxis>().is_err());
    }
}
