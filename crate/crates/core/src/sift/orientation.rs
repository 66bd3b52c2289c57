use std::f64::consts::TAU;

use crate::error::Result;
use crate::tensor::{Real, Tensor};

use super::gradient::{angle, GradientField};
use super::{Gray, Keypoint};

const BINS: usize = 36;

pub(crate) fn dominant(field: &GradientField, kp: &Keypoint) -> f64 {
    let sigma = 1.5 * kp.scale;
    let radius = (3.0 * sigma).round().max(1.0) as isize;
    let cx = kp.x.round() as isize;
    let cy = kp.y.round() as isize;
    let bin_width = TAU / BINS as f64;
    let mut hist = [0.0f64; BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (x, y) = (cx + dx, cy + dy);
            if x < 0 || y < 0 || x >= field.w as isize || y >= field.h as isize {
                continue;
            }
            let i = y as usize * field.w + x as usize;
            let (gx, gy) = (field.dx[i], field.dy[i]);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let ox = x as f64 - kp.x;
            let oy = y as f64 - kp.y;
            let weight = (-(ox * ox + oy * oy) / (2.0 * sigma * sigma)).exp();
            // bins are centred on multiples of 10 degrees
            let bin = (angle(gx, gy) / bin_width).round() as usize % BINS;
            hist[bin] += weight * mag;
        }
    }
    let (peak, &peak_val) = hist
        .iter()
        .enumerate()
        .fold((0, &0.0), |best, (i, v)| if *v > *best.1 { (i, v) } else { best });
    if peak_val <= 0.0 {
        return 0.0;
    }
    let left = hist[(peak + BINS - 1) % BINS];
    let right = hist[(peak + 1) % BINS];
    let denom = left - 2.0 * peak_val + right;
    let offset = if denom.abs() > 0.0 { 0.5 * (left - right) / denom } else { 0.0 };
    (peak as f64 + offset).rem_euclid(BINS as f64) * bin_width % TAU
}

/// Peak of the 36-bin, magnitude- and Gaussian-weighted (sigma = 1.5 x
/// scale) orientation histogram around the keypoint, refined by a parabola
/// through the peak and its neighbours. Flat neighbourhoods give 0.
pub fn dominant_orientation<T: Real>(image: &Tensor<T>, keypoint: &Keypoint) -> Result<f64> {
    let gray = Gray::from_tensor(image)?;
    let field = GradientField::compute(&gray)?;
    Ok(dominant(&field, keypoint))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn kp() -> Keypoint {
        Keypoint {
            x: 16.0,
            y: 16.0,
            scale: 2.0,
            orientation: 0.0,
        }
    }

    fn circ_dist(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(TAU);
        d.min(TAU - d)
    }

    #[test]
    fn gradients_along_x() {
        let img = Tensor::<f64>::from_fn(&[32, 32], |i| (i % 32) as f64 * 0.01);
        let theta = dominant_orientation(&img, &kp()).unwrap();
        assert!(circ_dist(theta, 0.0) <= TAU / 36.0);
    }

    #[test]
    fn rotated_patch() {
        // The x-ramp rotated by 90 degrees is a y-ramp.
        let img = Tensor::<f64>::from_fn(&[32, 32], |i| (i / 32) as f64 * 0.01);
        let theta = dominant_orientation(&img, &kp()).unwrap();
        assert!(circ_dist(theta, FRAC_PI_2) <= TAU / 36.0);
    }

    #[test]
    fn flat_patch_is_zero() {
        let img = Tensor::<f64>::full(&[32, 32], 0.3);
        assert_eq!(dominant_orientation(&img, &kp()).unwrap(), 0.0);
    }

    #[test]
    fn result_in_range() {
        let img = Tensor::<f64>::from_fn(&[32, 32], |i| ((i * 37) % 11) as f64);
        let theta = dominant_orientation(&img, &kp()).unwrap();
        assert!((0.0..TAU).contains(&theta));
    }
}
