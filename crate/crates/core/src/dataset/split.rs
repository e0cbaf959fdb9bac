//! Evaluation split plans: per-user random k-fold and temporal cutoff.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::RatingsDataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitKind {
    RandomKFold { k: u32, seed: u64 },
    Temporal { cutoff: i64 },
}

/// Where one record lands in a split plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldAssignment {
    /// K-fold: the record's fold id.
    Fold(u32),
    /// K-fold: the record belongs to a user with fewer than k records and is
    /// never held out.
    TrainOnly,
    /// Temporal: timestamp before the cutoff.
    Train,
    /// Temporal: timestamp at or after the cutoff.
    Test,
}

/// A per-record partition of a dataset into train/test roles.
#[derive(Debug, Clone)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub assignments: Vec<FoldAssignment>,
    /// Users whose profiles were too small to partition (k-fold only).
    pub train_only_users: Vec<u32>,
}

impl SplitPlan {
    pub fn n_folds(&self) -> u32 {
        match self.kind {
            SplitKind::RandomKFold { k, .. } => k,
            SplitKind::Temporal { .. } => 1,
        }
    }

    /// Record indices for (train, test) with `fold` held out. For temporal
    /// plans the fold argument is ignored.
    pub fn train_test(&self, fold: u32) -> (Vec<u32>, Vec<u32>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (idx, a) in self.assignments.iter().enumerate() {
            let idx = idx as u32;
            match *a {
                FoldAssignment::Fold(f) if f == fold => test.push(idx),
                FoldAssignment::Fold(_) | FoldAssignment::TrainOnly | FoldAssignment::Train => {
                    train.push(idx)
                }
                FoldAssignment::Test => test.push(idx),
            }
        }
        (train, test)
    }
}

/// Partitions each user's records into k near-equal folds (sizes differ by
/// at most one). Users with fewer than k records are assigned train-only and
/// reported in the plan.
pub fn split_random_kfold(ds: &RatingsDataset, k: u32, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold requires k >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![FoldAssignment::TrainOnly; ds.n_records()];
    let mut train_only_users = Vec::new();
    for user in 0..ds.n_users() as u32 {
        let mut records = ds.user_records(user).to_vec();
        if (records.len() as u32) < k {
            train_only_users.push(user);
            continue;
        }
        records.shuffle(&mut rng);
        for (j, rec) in records.into_iter().enumerate() {
            assignments[rec as usize] = FoldAssignment::Fold(j as u32 % k);
        }
    }
    Ok(SplitPlan {
        kind: SplitKind::RandomKFold { k, seed },
        assignments,
        train_only_users,
    })
}

/// Train = records with timestamp < cutoff, test = timestamp >= cutoff.
pub fn split_temporal(ds: &RatingsDataset, cutoff: i64) -> Result<SplitPlan> {
    if !ds.has_timestamps() {
        return Err(Error::UnsupportedSplit(
            "temporal split requires timestamps on every record".to_string(),
        ));
    }
    let assignments = ds
        .interactions()
        .iter()
        .map(|r| {
            if r.timestamp.unwrap() < cutoff {
                FoldAssignment::Train
            } else {
                FoldAssignment::Test
            }
        })
        .collect();
    Ok(SplitPlan {
        kind: SplitKind::Temporal { cutoff },
        assignments,
        train_only_users: Vec::new(),
    })
}
