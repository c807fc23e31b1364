use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatagenError, DatasetRecord, GroupKey};

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub dev: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

impl Split {
    pub fn dev_groups(&self) -> BTreeSet<GroupKey> {
        self.dev.iter().map(DatasetRecord::group_key).collect()
    }

    pub fn test_groups(&self) -> BTreeSet<GroupKey> {
        self.test.iter().map(DatasetRecord::group_key).collect()
    }
}

/// Splits by `(p_h, T_c, T_h, T_ell, tau, p_c)` so that no combination
/// appears on both sides.
///
/// Groups are shuffled with a seeded stream and the shortest prefix whose
/// record share is closest to `dev_fraction` goes to DEV. Both sides always
/// receive at least one group. Records keep their input order.
pub fn group_split(records: &[DatasetRecord], dev_fraction: f64, seed: u64) -> Result<Split, DatagenError> {
    if records.is_empty() {
        return Err(DatagenError::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&dev_fraction) {
        return Err(DatagenError::Config(format!(
            "dev fraction must lie in [0, 1], got {dev_fraction}"
        )));
    }
    let mut sizes: BTreeMap<GroupKey, usize> = BTreeMap::new();
    for r in records {
        *sizes.entry(r.group_key()).or_insert(0) += 1;
    }
    if sizes.len() < 2 {
        return Err(DatagenError::SingleGroup);
    }
    let mut keys: Vec<GroupKey> = sizes.keys().copied().collect();
    keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let total = records.len() as f64;
    let mut best = (1, f64::INFINITY);
    let mut taken = 0usize;
    for (k, key) in keys.iter().enumerate().take(keys.len() - 1) {
        taken += sizes[key];
        let miss = (taken as f64 / total - dev_fraction).abs();
        if miss < best.1 {
            best = (k + 1, miss);
        }
    }
    let dev_keys: BTreeSet<GroupKey> = keys[..best.0].iter().copied().collect();
    let (dev, test) = records.iter().partition(|r| dev_keys.contains(&r.group_key()));
    Ok(Split { dev, test })
}
