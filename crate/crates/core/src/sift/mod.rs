//! SIFT machinery: gradients, difference-of-Gaussians keypoints, dominant
//! orientation, the 4x4x8 descriptor, Dense SIFT over a fixed 4x4 grid of
//! 12x12 regions, K-means codebooks and bag-of-keypoints histograms.
//!
//! Images are `H x W` tensors. Internally everything is computed in `f64`.

mod codebook;
mod descriptor;
mod gradient;
mod kmeans;
mod orientation;
mod scale_space;

pub use codebook::{bag_of_keypoints, load_codebook, save_codebook, Codebook, CODEBOOK_MAGIC};
pub use descriptor::{dense_sift, sift_descriptor, DENSE_GRID, DENSE_LEN, REGION_SIZE};
pub use gradient::image_gradients;
pub use kmeans::{kmeans_fit, kmeans_fit_rows, KMeansFit};
pub use orientation::dominant_orientation;
pub use scale_space::{detect_keypoints, DogParams};

use crate::error::Result;
use crate::tensor::{Real, Tensor};

pub const DESCRIPTOR_LEN: usize = 128;

/// Scale-space keypoint in original image coordinates (pixel centres at
/// integer positions).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Gaussian sigma in pixels.
    pub scale: f64,
    /// Radians in `[0, 2*pi)`.
    pub orientation: f64,
}

/// 4x4 spatial cells x 8 orientation bins, L2-normalized (or all zero).
#[derive(Clone, Debug, PartialEq)]
pub struct SiftDescriptor(pub [f64; DESCRIPTOR_LEN]);

impl SiftDescriptor {
    pub fn zeros() -> Self {
        SiftDescriptor([0.0; DESCRIPTOR_LEN])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Single-channel image in `f64`, row-major.
#[derive(Clone, Debug)]
pub(crate) struct Gray {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

impl Gray {
    pub fn from_tensor<T: Real>(image: &Tensor<T>) -> Result<Self> {
        let (h, w) = match *image.shape() {
            [h, w] | [h, w, 1] => (h, w),
            ref s => {
                return Err(crate::Error::shape(format!(
                    "expected a single-channel H x W image, got {s:?}"
                )))
            }
        };
        Ok(Gray {
            w,
            h,
            data: image.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    /// Pixel lookup with coordinates clamped to the border.
    #[inline]
    pub fn clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.get(x, y)
    }
}

/// Keypoint path end to end: detect, assign the dominant orientation, and
/// describe each keypoint with a window of `12 * scale / 1.6` pixels
/// (clamped to the image size).
pub fn keypoint_descriptors<T: Real>(image: &Tensor<T>) -> Result<Vec<SiftDescriptor>> {
    let gray = Gray::from_tensor(image)?;
    let field = gradient::GradientField::compute(&gray)?;
    let params = DogParams::default();
    let max_window = gray.w.min(gray.h) as f64;
    let keypoints = scale_space::detect(&gray, &params);
    Ok(keypoints
        .iter()
        .map(|kp| {
            let theta = orientation::dominant(&field, kp);
            let window = (REGION_SIZE as f64 * kp.scale / params.base_sigma).min(max_window);
            descriptor::describe(&field, kp.x, kp.y, window, theta)
        })
        .collect())
}
