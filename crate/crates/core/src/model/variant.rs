use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    CnnOnly,
    /// Bag-of-keypoints histogram over a K-means codebook.
    CnnSift,
    /// 2048-d Dense SIFT vector.
    CnnDsift,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [ModelVariant::CnnOnly, ModelVariant::CnnSift, ModelVariant::CnnDsift];

    /// Byte stored in checkpoints.
    pub fn id(self) -> u8 {
        match self {
            ModelVariant::CnnOnly => 0,
            ModelVariant::CnnSift => 1,
            ModelVariant::CnnDsift => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::CnnOnly => "cnn_only",
            ModelVariant::CnnSift => "cnn_sift",
            ModelVariant::CnnDsift => "cnn_dsift",
        }
    }

    pub fn is_hybrid(self) -> bool {
        self != ModelVariant::CnnOnly
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Layer sizes. [`Arch::standard`] is the full network; [`Arch::shrunken`]
/// keeps the topology at toy size for finite-difference checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arch {
    /// Side of the square input image; must be divisible by 8.
    pub input_size: usize,
    /// Filters of the three conv pairs.
    pub filters: [usize; 3],
    /// Width of the trunk's dense layer.
    pub hidden: usize,
    /// Length of the side feature (K for bag-of-keypoints).
    pub side_in: usize,
    pub side_hidden: usize,
    pub conv_dropout: f64,
    pub dense_dropout: f64,
}

impl Default for Arch {
    fn default() -> Self {
        Arch::standard(2048)
    }
}

impl Arch {
    pub fn standard(side_in: usize) -> Self {
        Arch {
            input_size: 48,
            filters: [64, 128, 256],
            hidden: 2048,
            side_in,
            side_hidden: 4096,
            conv_dropout: 0.25,
            dense_dropout: 0.5,
        }
    }

    pub fn shrunken() -> Self {
        Arch {
            input_size: 8,
            filters: [2, 2, 2],
            hidden: 16,
            side_in: 8,
            side_hidden: 32,
            ..Arch::standard(8)
        }
    }

    /// Length of the flattened trunk after three pools.
    pub fn flat_len(&self) -> usize {
        let s = self.input_size / 8;
        s * s * self.filters[2]
    }

    /// Input width of the classification layer for `variant`.
    pub fn head_in(&self, variant: ModelVariant) -> usize {
        if variant.is_hybrid() {
            self.hidden + self.side_hidden
        } else {
            self.hidden
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || !self.input_size.is_multiple_of(8) {
            return Err(Error::invalid(format!(
                "input size {} must be a positive multiple of 8",
                self.input_size
            )));
        }
        if self.filters.contains(&0) || self.hidden == 0 || self.side_in == 0 || self.side_hidden == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        for r in [self.conv_dropout, self.dense_dropout] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::invalid(format!("dropout rate {r} must be in [0, 1)")));
            }
        }
        Ok(())
    }
}
