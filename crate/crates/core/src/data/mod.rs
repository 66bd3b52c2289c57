//! Dataset ingestion, per-image standardization, the ten-variant
//! augmentation and k-fold splits.

mod augment;
mod csv_io;
mod kfold;
mod labels;
mod normalize;
mod synthetic;

pub use augment::{augment_one, augment_ten, flip_horizontal, rotate, shear, zoom_corner, AugmentSet, Corner, AUGMENT_COUNT};
pub use csv_io::{load_csv, load_fer_csv, write_csv, CSV_HEADER};
pub use kfold::kfold_indices;
pub use labels::{Expression, LabelSet};
pub use normalize::normalize_image;
pub use synthetic::{synthetic_image, synthetic_samples};

use crate::tensor::Tensor;

/// Side length of every image.
pub const IMAGE_SIZE: usize = 48;
pub const PIXELS: usize = IMAGE_SIZE * IMAGE_SIZE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    PublicTest,
    PrivateTest,
}

impl Split {
    /// The `Usage` column value.
    pub fn usage_tag(self) -> &'static str {
        match self {
            Split::Train => "Training",
            Split::PublicTest => "PublicTest",
            Split::PrivateTest => "PrivateTest",
        }
    }

    pub fn from_usage_tag(tag: &str) -> Option<Self> {
        match tag {
            "Training" => Some(Split::Train),
            "PublicTest" => Some(Split::PublicTest),
            "PrivateTest" => Some(Split::PrivateTest),
            _ => None,
        }
    }
}

/// One 48x48 grayscale image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub image: Tensor<f32>,
    pub label: usize,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplits {
    pub train: Vec<LabeledSample>,
    pub public_test: Vec<LabeledSample>,
    pub private_test: Vec<LabeledSample>,
}

impl DatasetSplits {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.public_test.len(), self.private_test.len())
    }

    pub fn split(&self, which: Split) -> &[LabeledSample] {
        match which {
            Split::Train => &self.train,
            Split::PublicTest => &self.public_test,
            Split::PrivateTest => &self.private_test,
        }
    }

    /// All samples in file order of their splits (train, public, private).
    pub fn all(&self) -> impl Iterator<Item = &LabeledSample> {
        self.train.iter().chain(&self.public_test).chain(&self.private_test)
    }
}
