use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training subset of one fold: every normal image plus one contiguous slice
/// of the opacity images.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    /// 1-based fold number.
    pub index: usize,
    pub normal: Range<usize>,
    pub opacity: Range<usize>,
}

impl FoldSpec {
    pub fn len(&self) -> usize {
        self.normal.len() + self.opacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Split `n_opacity` into `k` slices of `⌊n_opacity / k⌋`, the final slice
/// taking the remainder. Each fold also gets all `n_normal` normals.
pub fn make_folds(n_normal: usize, n_opacity: usize, k: usize) -> Result<Vec<FoldSpec>> {
    if n_normal == 0 || n_opacity == 0 || k == 0 {
        return Err(Error::InvalidFolds(format!(
            "counts must be positive (normal={n_normal}, opacity={n_opacity}, folds={k})"
        )));
    }
    if k > n_opacity {
        return Err(Error::InvalidFolds(format!("{k} folds exceed {n_opacity} opacity images")));
    }
    let step = n_opacity / k;
    Ok((1..=k)
        .map(|i| FoldSpec {
            index: i,
            normal: 0..n_normal,
            opacity: step * (i - 1)..if i == k { n_opacity } else { step * i },
        })
        .collect())
}
