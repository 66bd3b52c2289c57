//! The ten augmentation variants: one horizontal flip, four random
//! rotations in (-30, 30) degrees, one centre shear and four corner zooms.
//! All resampling is bilinear with zero fill outside the source image.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

pub const AUGMENT_COUNT: usize = 10;
pub const MAX_ROTATION_DEGREES: f64 = 30.0;
pub const SHEAR_FACTOR: f64 = 0.2;
pub const ZOOM_CROP: usize = 38;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

#[derive(Clone, Debug)]
pub struct AugmentSet<T> {
    /// `[flip, rot x4, shear, zoom TL, TR, BL, BR]`.
    pub images: Vec<Tensor<T>>,
    pub rotation_degrees: [f64; 4],
}

fn dims<T: Real>(image: &Tensor<T>) -> Result<(usize, usize)> {
    match *image.shape() {
        [h, w] if h > 0 && w > 0 => Ok((h, w)),
        ref s => Err(Error::shape(format!("expected an H x W image, got {s:?}"))),
    }
}

/// Bilinear lookup where pixels outside the image count as 0.
fn sample<T: Real>(image: &Tensor<T>, h: usize, w: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let px = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            0.0
        } else {
            image.data()[yi as usize * w + xi as usize].to_f64().unwrap_or(0.0)
        }
    };
    let mut acc = 0.0;
    for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
        for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            let wgt = wy * wx;
            if wgt != 0.0 {
                acc += wgt * px(x0 + dx, y0 + dy);
            }
        }
    }
    acc
}

/// Inverse warp: each output pixel `(x, y)` reads the source at `map(x, y)`.
fn warp<T: Real>(image: &Tensor<T>, map: impl Fn(f64, f64) -> (f64, f64)) -> Result<Tensor<T>> {
    let (h, w) = dims(image)?;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map(x as f64, y as f64);
            out.push(T::from_f64_lossy(sample(image, h, w, sx, sy)));
        }
    }
    Tensor::new(&[h, w], out)
}

pub fn flip_horizontal<T: Real>(image: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = dims(image)?;
    let d = image.data();
    Tensor::new(&[h, w], (0..h * w).map(|i| d[(i / w) * w + (w - 1 - i % w)]).collect())
}

/// Rotation about the image centre by `degrees` (counter-clockwise on screen).
pub fn rotate<T: Real>(image: &Tensor<T>, degrees: f64) -> Result<Tensor<T>> {
    let (h, w) = dims(image)?;
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    warp(image, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        // inverse rotation; y grows downwards
        (cx + c * dx - s * dy, cy + s * dx + c * dy)
    })
}

/// Horizontal shear about the image centre: `x_src = x + factor * (y - cy)`.
pub fn shear<T: Real>(image: &Tensor<T>, factor: f64) -> Result<Tensor<T>> {
    let (h, _) = dims(image)?;
    let cy = (h as f64 - 1.0) / 2.0;
    warp(image, |x, y| (x + factor * (y - cy), y))
}

/// Crops a `crop x crop` window anchored at `corner` and rescales it to the
/// full image size.
pub fn zoom_corner<T: Real>(image: &Tensor<T>, corner: Corner, crop: usize) -> Result<Tensor<T>> {
    let (h, w) = dims(image)?;
    if crop == 0 || crop > h || crop > w {
        return Err(Error::invalid(format!("crop {crop} does not fit a {h}x{w} image")));
    }
    let (ox, oy) = match corner {
        Corner::TopLeft => (0, 0),
        Corner::TopRight => (w - crop, 0),
        Corner::BottomLeft => (0, h - crop),
        Corner::BottomRight => (w - crop, h - crop),
    };
    let (ox, oy) = (ox as f64, oy as f64);
    let sx = crop as f64 / w as f64;
    let sy = crop as f64 / h as f64;
    let hi = crop as f64 - 1.0;
    warp(image, |x, y| {
        let u = ((x + 0.5) * sx - 0.5).clamp(0.0, hi);
        let v = ((y + 0.5) * sy - 0.5).clamp(0.0, hi);
        (ox + u, oy + v)
    })
}

/// Draws an angle uniformly from the open interval (-30, 30) degrees.
fn rotation_angle(rng: &mut Rng) -> f64 {
    loop {
        let a = rng.uniform_range(-MAX_ROTATION_DEGREES, MAX_ROTATION_DEGREES);
        if a > -MAX_ROTATION_DEGREES && a < MAX_ROTATION_DEGREES {
            return a;
        }
    }
}

fn draw_angles(rng: &mut Rng) -> [f64; 4] {
    let mut angles = [0.0; 4];
    for a in angles.iter_mut() {
        *a = rotation_angle(rng);
    }
    angles
}

fn variant<T: Real>(image: &Tensor<T>, angles: &[f64; 4], index: usize) -> Result<Tensor<T>> {
    const CORNERS: [Corner; 4] = [Corner::TopLeft, Corner::TopRight, Corner::BottomLeft, Corner::BottomRight];
    match index {
        0 => flip_horizontal(image),
        1..=4 => rotate(image, angles[index - 1]),
        5 => shear(image, SHEAR_FACTOR),
        6..=9 => zoom_corner(image, CORNERS[index - 6], ZOOM_CROP),
        _ => Err(Error::invalid(format!("augmentation index {index} out of range 0..10"))),
    }
}

/// The ten variants of one image, deterministic under `rng`.
pub fn augment_ten<T: Real>(image: &Tensor<T>, rng: &mut Rng) -> Result<AugmentSet<T>> {
    let rotation_degrees = draw_angles(rng);
    let images = (0..AUGMENT_COUNT)
        .map(|i| variant(image, &rotation_degrees, i))
        .collect::<Result<_>>()?;
    Ok(AugmentSet {
        images,
        rotation_degrees,
    })
}

/// Just `augment_ten(image, rng).images[index]`, without computing the
/// other nine. Consumes `rng` identically.
pub fn augment_one<T: Real>(image: &Tensor<T>, rng: &mut Rng, index: usize) -> Result<Tensor<T>> {
    let angles = draw_angles(rng);
    variant(image, &angles, index)
}
