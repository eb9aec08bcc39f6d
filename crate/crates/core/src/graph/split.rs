use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::rng;

/// K-shot training nodes plus an even validation/test split of the rest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    /// `shot_indices[c]` holds the K training nodes of class `c`.
    pub shot_indices: Vec<Vec<usize>>,
    pub val_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn shots(&self) -> Vec<usize> {
        self.shot_indices.iter().flatten().copied().collect()
    }

    pub fn k(&self) -> usize {
        self.shot_indices.first().map_or(0, Vec::len)
    }
}

/// Draws K labeled nodes per class, then halves the remaining labeled nodes
/// into validation and test sets (test gets the extra node when odd).
pub fn kshot_split(g: &Graph, k: usize, seed: u64) -> Result<DatasetSplit> {
    let labels = g.labels().ok_or(Error::LabelsAbsent)?;
    let by_class = labels.by_class();
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < k + 2 {
            return Err(Error::InsufficientClass {
                class,
                available: members.len(),
                required: k + 2,
            });
        }
    }

    let mut rng = rng::seeded(seed);
    let mut shot_indices = Vec::with_capacity(by_class.len());
    let mut rest = Vec::new();
    for members in &by_class {
        let mut m = members.clone();
        m.shuffle(&mut rng);
        let mut shots = m[..k].to_vec();
        shots.sort_unstable();
        shot_indices.push(shots);
        rest.extend_from_slice(&m[k..]);
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    let half = rest.len() / 2;
    let mut val_indices = rest[..half].to_vec();
    let mut test_indices = rest[half..].to_vec();
    val_indices.sort_unstable();
    test_indices.sort_unstable();

    Ok(DatasetSplit {
        shot_indices,
        val_indices,
        test_indices,
        seed,
    })
}
