use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::Gray;

/// Per-pixel derivatives: central differences inside, one-sided at borders.
#[derive(Clone, Debug)]
pub(crate) struct GradientField {
    pub w: usize,
    pub h: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl GradientField {
    pub fn compute(img: &Gray) -> Result<Self> {
        let (w, h) = (img.w, img.h);
        if w < 3 || h < 3 {
            return Err(Error::invalid(format!("image {h}x{w} is smaller than 3x3")));
        }
        let mut dx = vec![0.0; w * h];
        let mut dy = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                dx[y * w + x] = match x {
                    0 => img.get(1, y) - img.get(0, y),
                    _ if x == w - 1 => img.get(x, y) - img.get(x - 1, y),
                    _ => 0.5 * (img.get(x + 1, y) - img.get(x - 1, y)),
                };
                dy[y * w + x] = match y {
                    0 => img.get(x, 1) - img.get(x, 0),
                    _ if y == h - 1 => img.get(x, y) - img.get(x, y - 1),
                    _ => 0.5 * (img.get(x, y + 1) - img.get(x, y - 1)),
                };
            }
        }
        Ok(GradientField { w, h, dx, dy })
    }

    /// Bilinearly interpolated `(dx, dy)` with coordinates clamped to the image.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x0 = (x.floor() as usize).min(self.w - 1);
        let y0 = (y.floor() as usize).min(self.h - 1);
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let lerp = |f: &[f64]| {
            let top = f[y0 * self.w + x0] * (1.0 - fx) + f[y0 * self.w + x1] * fx;
            let bottom = f[y1 * self.w + x0] * (1.0 - fx) + f[y1 * self.w + x1] * fx;
            top * (1.0 - fy) + bottom * fy
        };
        if fx == 0.0 && fy == 0.0 {
            let i = y0 * self.w + x0;
            return (self.dx[i], self.dy[i]);
        }
        (lerp(&self.dx), lerp(&self.dy))
    }
}

/// Angle of `(dx, dy)` in `[0, 2*pi)`.
#[inline]
pub(crate) fn angle(dx: f64, dy: f64) -> f64 {
    let a = dy.atan2(dx);
    let a = if a < 0.0 { a + TAU } else { a };
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Gradient magnitude and orientation (radians in `[0, 2*pi)`) of an
/// `H x W` image, with `y` pointing down the rows.
pub fn image_gradients<T: Real>(image: &Tensor<T>) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let gray = Gray::from_tensor(image)?;
    let f = GradientField::compute(&gray)?;
    let mag = f.dx.iter().zip(&f.dy).map(|(a, b)| a.hypot(*b)).collect();
    let ori = f.dx.iter().zip(&f.dy).map(|(a, b)| angle(*a, *b)).collect();
    Ok((Tensor::new(&[f.h, f.w], mag)?, Tensor::new(&[f.h, f.w], ori)?))
}
