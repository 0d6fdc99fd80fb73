//! Image datasets: directory-backed X-ray splits and a synthetic generator.

pub mod images;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::Tensor;

pub use images::{load_dataset, load_dataset_sized, resize_normalize, Dataset, DatasetStats, DirSplit, RawImage};
pub use synth::{synth_generate, synth_generate_with, SynthParams, SyntheticSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Opacity,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Normal, Label::Opacity];

    /// 1 for opacity (the positive class), 0 for normal.
    pub fn target(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Opacity => 1,
        }
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            Label::Normal => "NORMAL",
            Label::Opacity => "OPACITY",
        }
    }
}

/// Indexed access to labelled images, each returned as a `(1, s, s, 3)`
/// tensor with values in `[0, 1]`.
pub trait ImageSource {
    fn image_size(&self) -> usize;
    fn count(&self, label: Label) -> usize;
    fn load(&self, label: Label, index: usize) -> Result<Tensor<f32>>;
}
