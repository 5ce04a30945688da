//! Train/test splits: per split, a seeded uniform shuffle takes the first
//! `train_count` ids for training and the rest for testing.

use std::fs;
use std::path::Path;

use gestnet_core::fnv1a64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub fn make_splits(
    ids: &[String],
    n_splits: usize,
    train_count: usize,
    seed: u64,
) -> Result<Vec<Split>> {
    if train_count >= ids.len() {
        return Err(DataError::InvalidArgument {
            op: "make_splits",
            msg: format!(
                "train_count {train_count} must be below the id count {}",
                ids.len()
            ),
        });
    }
    if n_splits == 0 {
        return Err(DataError::InvalidArgument {
            op: "make_splits",
            msg: "need at least one split".into(),
        });
    }
    let mut splits = Vec::with_capacity(n_splits);
    for k in 0..n_splits {
        let mut key = Vec::with_capacity(16);
        key.extend_from_slice(&seed.to_le_bytes());
        key.extend_from_slice(&(k as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(&key));
        let mut shuffled = ids.to_vec();
        shuffled.shuffle(&mut rng);
        let test = shuffled.split_off(train_count);
        splits.push(Split {
            train: shuffled,
            test,
        });
    }
    Ok(splits)
}

pub fn save_splits(path: &Path, splits: &[Split]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_vec_pretty(splits)?)?;
    Ok(())
}

pub fn load_splits(path: &Path) -> Result<Vec<Split>> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Order-independent digest of a split's id lists; both arms of a
/// comparison must see the same value.
pub fn split_digest(split: &Split) -> u64 {
    let mut all: Vec<&String> = split.train.iter().collect();
    all.sort();
    let mut bytes = Vec::new();
    for id in &all {
        bytes.extend_from_slice(id.as_bytes());
        bytes.push(0);
    }
    bytes.push(1);
    let mut test: Vec<&String> = split.test.iter().collect();
    test.sort();
    for id in test {
        bytes.extend_from_slice(id.as_bytes());
        bytes.push(0);
    }
    fnv1a64(&bytes)
}
