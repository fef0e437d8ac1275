//! Separable cubic convolution resampling (Catmull-Rom, `a = -0.5`).
//!
//! Upsampling interpolates with the plain four-tap kernel. Downsampling
//! stretches the kernel by the factor so it also acts as the anti-aliasing
//! filter; taps are renormalized so every output sees weights summing to 1.
//! Samples outside the image are reflected.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops::reflect_index;
use crate::tensor::Tensor;

pub const CUBIC_A: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Down,
    Up,
}

/// Cubic convolution kernel.
pub fn cubic_kernel(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Taps for one output position: source indices and normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Taps {
    pub index: Vec<usize>,
    pub weight: Vec<f64>,
}

/// Tap table mapping `n_in` samples to `n_out`.
pub fn taps(n_in: usize, n_out: usize) -> Vec<Taps> {
    let ratio = n_in as f64 / n_out as f64;
    // Kernel stretch: 1 when enlarging, the reduction ratio when shrinking.
    let stretch = ratio.max(1.0);
    let support = 2.0 * stretch;
    (0..n_out)
        .map(|o| {
            let center = (o as f64 + 0.5) * ratio - 0.5;
            let lo = libm::ceil(center - support) as isize;
            let hi = libm::floor(center + support) as isize;
            let mut index = Vec::new();
            let mut weight = Vec::new();
            for j in lo..=hi {
                let wgt = cubic_kernel((center - j as f64) / stretch);
                if wgt != 0.0 {
                    index.push(reflect_index(j, n_in));
                    weight.push(wgt);
                }
            }
            let total: f64 = weight.iter().sum();
            for v in &mut weight {
                *v /= total;
            }
            Taps { index, weight }
        })
        .collect()
}

/// Resample every plane by `factor` (2 or 4).
pub fn bicubic_resample(image: &Tensor, factor: usize, direction: Direction) -> Result<Tensor> {
    if factor != 2 && factor != 4 {
        return Err(Error::invalid("bicubic factor must be 2 or 4"));
    }
    let [n, c, h, w] = image.shape();
    let (oh, ow) = match direction {
        Direction::Up => (h * factor, w * factor),
        Direction::Down => {
            if h % factor != 0 || w % factor != 0 {
                return Err(Error::invalid(alloc::format!(
                    "bicubic downsample: {h}x{w} not divisible by {factor}"
                )));
            }
            (h / factor, w / factor)
        }
    };
    let tx = taps(w, ow);
    let ty = taps(h, oh);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut rows = alloc::vec![0f64; h * ow];
    for b in 0..n {
        for ch in 0..c {
            let src = image.plane(b, ch);
            for y in 0..h {
                let line = &src[y * w..(y + 1) * w];
                for (x, t) in tx.iter().enumerate() {
                    rows[y * ow + x] = t
                        .index
                        .iter()
                        .zip(&t.weight)
                        .map(|(&i, &k)| line[i] as f64 * k)
                        .sum();
                }
            }
            let dst = out.plane_mut(b, ch);
            for (y, t) in ty.iter().enumerate() {
                for x in 0..ow {
                    let v: f64 = t
                        .index
                        .iter()
                        .zip(&t.weight)
                        .map(|(&i, &k)| rows[i * ow + x] * k)
                        .sum();
                    dst[y * ow + x] = v as f32;
                }
            }
        }
    }
    Ok(out)
}
