//! Difference-of-Gaussians scale space and extremum detection.

use crate::tensor::{Real, Tensor};

use super::{Gray, Keypoint};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DogParams {
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub base_sigma: f64,
    /// Blur already present in the input image.
    pub assumed_blur: f64,
    /// Minimum `|D|` at the refined extremum, on `[0, 1]` intensities.
    pub contrast_threshold: f64,
    /// Principal-curvature ratio limit.
    pub edge_ratio: f64,
}

impl Default for DogParams {
    fn default() -> Self {
        DogParams {
            octaves: 3,
            scales_per_octave: 3,
            base_sigma: 1.6,
            assumed_blur: 0.5,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
        }
    }
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with replicated borders.
pub(crate) fn gaussian_blur(img: &Gray, sigma: f64) -> Gray {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (img.w, img.h);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * img.clamped(x as isize + i as isize - r, y as isize))
                .sum();
        }
    }
    let tmp = Gray { w, h, data: tmp };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp.clamped(x as isize, y as isize + i as isize - r))
                .sum();
        }
    }
    Gray { w, h, data: out }
}

fn downsample(img: &Gray) -> Gray {
    let (w, h) = (img.w / 2, img.h / 2);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(img.get(2 * x, 2 * y));
        }
    }
    Gray { w, h, data }
}

pub(crate) struct Octave {
    pub index: usize,
    /// `scales + 2` difference images, each `gauss[i + 1] - gauss[i]`.
    pub dog: Vec<Gray>,
}

/// Gaussian and DoG stacks: `scales + 3` blurred images per octave, the
/// next octave starting from the image at twice the base sigma.
pub(crate) fn build_pyramid(img: &Gray, p: &DogParams) -> Vec<Octave> {
    let s = p.scales_per_octave;
    let k = 2f64.powf(1.0 / s as f64);
    let initial = (p.base_sigma.powi(2) - p.assumed_blur.powi(2)).max(0.0).sqrt();
    let mut base = gaussian_blur(img, initial);
    let mut octaves = Vec::with_capacity(p.octaves);
    for o in 0..p.octaves {
        if base.w < 3 || base.h < 3 {
            break;
        }
        let mut gauss = vec![base.clone()];
        for i in 1..s + 3 {
            let prev = p.base_sigma * k.powi(i as i32 - 1);
            let total = prev * k;
            let inc = (total * total - prev * prev).sqrt();
            let next = gaussian_blur(&gauss[i - 1], inc);
            gauss.push(next);
        }
        let dog = gauss
            .windows(2)
            .map(|pair| Gray {
                w: pair[0].w,
                h: pair[0].h,
                data: pair[1].data.iter().zip(&pair[0].data).map(|(a, b)| a - b).collect(),
            })
            .collect();
        let next_base = downsample(&gauss[s]);
        octaves.push(Octave { index: o, dog });
        base = next_base;
    }
    octaves
}

fn is_extremum(dog: &[Gray], s: usize, x: usize, y: usize) -> bool {
    let v = dog[s].get(x, y);
    let mut is_max = true;
    let mut is_min = true;
    for layer in &dog[s - 1..=s + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if std::ptr::eq(layer, &dog[s]) && xx == x && yy == y {
                    continue;
                }
                let u = layer.get(xx, yy);
                is_max &= v > u;
                is_min &= v < u;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

struct Refined {
    x: f64,
    y: f64,
    s: f64,
    value: f64,
    xi: usize,
    yi: usize,
    si: usize,
}

/// Quadratic (Newton) refinement of a discrete extremum in `(x, y, s)`.
fn refine(dog: &[Gray], mut s: usize, mut x: usize, mut y: usize, scales: usize) -> Option<Refined> {
    let (w, h) = (dog[0].w, dog[0].h);
    for _ in 0..5 {
        let d = |ds: isize, dx: isize, dy: isize| {
            dog[(s as isize + ds) as usize].get((x as isize + dx) as usize, (y as isize + dy) as usize)
        };
        let v = d(0, 0, 0);
        let g = [
            0.5 * (d(0, 1, 0) - d(0, -1, 0)),
            0.5 * (d(0, 0, 1) - d(0, 0, -1)),
            0.5 * (d(1, 0, 0) - d(-1, 0, 0)),
        ];
        let dxx = d(0, 1, 0) + d(0, -1, 0) - 2.0 * v;
        let dyy = d(0, 0, 1) + d(0, 0, -1) - 2.0 * v;
        let dss = d(1, 0, 0) + d(-1, 0, 0) - 2.0 * v;
        let dxy = 0.25 * (d(0, 1, 1) - d(0, -1, 1) - d(0, 1, -1) + d(0, -1, -1));
        let dxs = 0.25 * (d(1, 1, 0) - d(1, -1, 0) - d(-1, 1, 0) + d(-1, -1, 0));
        let dys = 0.25 * (d(1, 0, 1) - d(1, 0, -1) - d(-1, 0, 1) + d(-1, 0, -1));
        let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let offset = solve3(&hess, &g).map(|o| [-o[0], -o[1], -o[2]])?;
        if offset.iter().all(|o| o.abs() < 0.5) {
            let value = v + 0.5 * (g[0] * offset[0] + g[1] * offset[1] + g[2] * offset[2]);
            return Some(Refined {
                x: x as f64 + offset[0],
                y: y as f64 + offset[1],
                s: s as f64 + offset[2],
                value,
                xi: x,
                yi: y,
                si: s,
            });
        }
        let nx = x as isize + offset[0].round() as isize;
        let ny = y as isize + offset[1].round() as isize;
        let ns = s as isize + offset[2].round() as isize;
        if nx < 1 || ny < 1 || nx >= w as isize - 1 || ny >= h as isize - 1 || ns < 1 || ns > scales as isize {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        s = ns as usize;
    }
    None
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut m = *a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        let d = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        *o = d / det;
    }
    Some(out)
}

fn passes_edge_test(dog: &Gray, x: usize, y: usize, ratio: f64) -> bool {
    let v = dog.get(x, y);
    let dxx = dog.get(x + 1, y) + dog.get(x - 1, y) - 2.0 * v;
    let dyy = dog.get(x, y + 1) + dog.get(x, y - 1) - 2.0 * v;
    let dxy = 0.25 * (dog.get(x + 1, y + 1) - dog.get(x - 1, y + 1) - dog.get(x + 1, y - 1) + dog.get(x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det > 0.0 && tr * tr * ratio < (ratio + 1.0).powi(2) * det
}

pub(crate) fn detect(img: &Gray, p: &DogParams) -> Vec<Keypoint> {
    let s = p.scales_per_octave;
    let prefilter = 0.5 * p.contrast_threshold;
    let mut keypoints = Vec::new();
    for octave in build_pyramid(img, p) {
        let dog = &octave.dog;
        let (w, h) = (dog[0].w, dog[0].h);
        let step = (1usize << octave.index) as f64;
        for layer in 1..=s {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    if dog[layer].get(x, y).abs() < prefilter || !is_extremum(dog, layer, x, y) {
                        continue;
                    }
                    let Some(r) = refine(dog, layer, x, y, s) else {
                        continue;
                    };
                    if r.value.abs() < p.contrast_threshold {
                        continue;
                    }
                    if !passes_edge_test(&dog[r.si], r.xi, r.yi, p.edge_ratio) {
                        continue;
                    }
                    let kx = r.x * step;
                    let ky = r.y * step;
                    if !(0.0..img.w as f64).contains(&kx) || !(0.0..img.h as f64).contains(&ky) {
                        continue;
                    }
                    keypoints.push(Keypoint {
                        x: kx,
                        y: ky,
                        scale: p.base_sigma * 2f64.powf(octave.index as f64 + r.s / s as f64),
                        orientation: 0.0,
                    });
                }
            }
        }
    }
    keypoints
}

/// Scale-space extrema of a DoG pyramid, filtered by contrast and edge
/// response. Orientations are left at 0; see
/// [`dominant_orientation`](super::dominant_orientation).
pub fn detect_keypoints<T: Real>(image: &Tensor<T>) -> crate::Result<Vec<Keypoint>> {
    let gray = Gray::from_tensor(image)?;
    Ok(detect(&gray, &DogParams::default()))
}
