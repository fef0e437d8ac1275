//! A camera-like degradation that differs from bicubic on purpose: Gaussian
//! optics, box-integrating pixels, additive read noise and 8-bit storage.

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use super::quantize;
use crate::error::{Error, Result};
use crate::ops::{avg_down, reflect_index};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoReal {
    pub blur_sigma: f64,
    pub factor: usize,
    pub noise_sigma: f64,
    pub quantize: bool,
}

impl Default for PseudoReal {
    fn default() -> Self {
        PseudoReal {
            blur_sigma: 1.2,
            factor: 4,
            noise_sigma: 0.01,
            quantize: true,
        }
    }
}

/// Normalized Gaussian taps truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = libm::ceil(3.0 * sigma) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Separable Gaussian blur with reflected borders.
pub fn gaussian_blur(image: &Tensor, sigma: f64) -> Tensor {
    let k = gaussian_kernel(sigma);
    if k.len() == 1 {
        return image.clone();
    }
    let r = (k.len() / 2) as isize;
    let [n, c, h, w] = image.shape();
    let mut out = Tensor::zeros([n, c, h, w]);
    let mut tmp = vec![0f64; h * w];
    for b in 0..n {
        for ch in 0..c {
            let src = image.plane(b, ch);
            for y in 0..h {
                for x in 0..w {
                    tmp[y * w + x] = k
                        .iter()
                        .enumerate()
                        .map(|(i, &kv)| {
                            let xx = reflect_index(x as isize + i as isize - r, w);
                            kv * src[y * w + xx] as f64
                        })
                        .sum();
                }
            }
            let dst = out.plane_mut(b, ch);
            for y in 0..h {
                for x in 0..w {
                    let v: f64 = k
                        .iter()
                        .enumerate()
                        .map(|(i, &kv)| {
                            let yy = reflect_index(y as isize + i as isize - r, h);
                            kv * tmp[yy * w + x]
                        })
                        .sum();
                    dst[y * w + x] = v as f32;
                }
            }
        }
    }
    out
}

/// Blur, box-downsample, add seeded Gaussian noise, clamp to `[0, 1]` and
/// optionally quantize to 8 bits.
pub fn pseudo_real_degrade(image: &Tensor, p: &PseudoReal, seed: u64) -> Result<Tensor> {
    if !(p.blur_sigma >= 0.0 && p.noise_sigma >= 0.0) {
        return Err(Error::invalid("pseudo_real sigmas must be >= 0"));
    }
    if p.factor != 2 && p.factor != 4 {
        return Err(Error::invalid("pseudo_real factor must be 2 or 4"));
    }
    let mut out = avg_down(&gaussian_blur(image, p.blur_sigma), p.factor)?;
    if p.noise_sigma > 0.0 {
        let mut r = rng::rng(seed);
        for v in out.data_mut() {
            let z: f64 = StandardNormal.sample(&mut r);
            *v = (*v as f64 + p.noise_sigma * z) as f32;
        }
    }
    out.clamp01();
    if p.quantize {
        out = quantize(&out);
    }
    Ok(out)
}
