use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    pub seed: u64,
}

/// Seeded uniform shuffle followed by a prefix split. The train set holds
/// `round_half_up(train_fraction * n)` ids.
pub fn split_videos<S: AsRef<str>>(
    video_ids: &[S],
    train_fraction: f64,
    seed: u64,
) -> Result<SplitResult> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::validation(
            "invalid_fraction",
            format!("train fraction must lie strictly between 0 and 1, got {train_fraction}"),
        ));
    }
    if video_ids.is_empty() {
        return Err(Error::validation("empty_input", "no video ids to split"));
    }
    let mut seen = BTreeSet::new();
    for id in video_ids {
        if !seen.insert(id.as_ref()) {
            return Err(Error::validation(
                "duplicate_video_id",
                format!("video id {:?} appears more than once", id.as_ref()),
            ));
        }
    }

    let n = video_ids.len();
    let n_train = ((train_fraction * n as f64) + 0.5).floor() as usize;
    let mut order: Vec<&str> = video_ids.iter().map(|s| s.as_ref()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let (train, test) = order.split_at(n_train.min(n));
    Ok(SplitResult {
        train_ids: train.iter().map(|s| s.to_string()).collect(),
        test_ids: test.iter().map(|s| s.to_string()).collect(),
        seed,
    })
}
