//! Procedural ground-truth scenes: a smooth color gradient, a few
//! anti-aliased ellipses and rectangles, and a band-limited texture layer.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Subsamples per axis used for shape coverage.
const AA: usize = 4;

struct Shape {
    ellipse: bool,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos: f64,
    sin: f64,
    color: [f64; 3],
    alpha: f64,
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (dx * self.cos + dy * self.sin) / self.rx;
        let v = (-dx * self.sin + dy * self.cos) / self.ry;
        if self.ellipse {
            u * u + v * v <= 1.0
        } else {
            u.abs() <= 1.0 && v.abs() <= 1.0
        }
    }
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

fn color(r: &mut rng::Rng) -> [f64; 3] {
    [r.random_range(0.05..0.95), r.random_range(0.05..0.95), r.random_range(0.05..0.95)]
}

/// Scene `index` of the set generated from `seed`, as a `1 x 3 x size x size` tensor.
pub fn gen_scene(seed: u64, index: u64, size: usize) -> Result<Tensor> {
    if size == 0 || size % 4 != 0 {
        return Err(Error::invalid("scene size must be a positive multiple of 4"));
    }
    let mut r = rng::rng(rng::derive(rng::derive_str(seed, "scene"), index));
    let s = size as f64;

    let (c0, c1) = (color(&mut r), color(&mut r));
    let angle = r.random_range(0.0..2.0 * PI);
    let (gx, gy) = (libm::cos(angle) / s, libm::sin(angle) / s);

    let shapes: Vec<Shape> = (0..r.random_range(1..=3))
        .map(|_| {
            let a = r.random_range(0.0..PI);
            Shape {
                ellipse: r.random_bool(0.5),
                cx: r.random_range(0.0..s),
                cy: r.random_range(0.0..s),
                rx: r.random_range(0.08..0.35) * s,
                ry: r.random_range(0.08..0.35) * s,
                cos: libm::cos(a),
                sin: libm::sin(a),
                color: color(&mut r),
                alpha: r.random_range(0.6..1.0),
            }
        })
        .collect();

    // Frequencies stay below the Nyquist limit of a x4 reduced grid
    // (0.125 cycles per pixel), so the texture is recoverable after it.
    let waves: Vec<Wave> = (0..r.random_range(1..=3))
        .map(|_| {
            let f = r.random_range(0.03..0.08);
            let a = r.random_range(0.0..2.0 * PI);
            let amp = r.random_range(0.03..0.12);
            let tint = color(&mut r);
            Wave {
                fx: f * libm::cos(a),
                fy: f * libm::sin(a),
                phase: r.random_range(0.0..2.0 * PI),
                amp: [amp * tint[0] * 2.0, amp * tint[1] * 2.0, amp * tint[2] * 2.0],
            }
        })
        .collect();

    let mut img = Tensor::zeros([1, 3, size, size]);
    let mut px = [0.0f64; 3];
    for y in 0..size {
        for x in 0..size {
            let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = ((xf - s / 2.0) * gx + (yf - s / 2.0) * gy + 0.5).clamp(0.0, 1.0);
            for c in 0..3 {
                px[c] = c0[c] * (1.0 - t) + c1[c] * t;
            }
            for sh in &shapes {
                let mut hits = 0;
                for sy in 0..AA {
                    for sx in 0..AA {
                        let ox = x as f64 + (sx as f64 + 0.5) / AA as f64;
                        let oy = y as f64 + (sy as f64 + 0.5) / AA as f64;
                        hits += sh.contains(ox, oy) as usize;
                    }
                }
                let cover = sh.alpha * hits as f64 / (AA * AA) as f64;
                for c in 0..3 {
                    px[c] = px[c] * (1.0 - cover) + sh.color[c] * cover;
                }
            }
            for w in &waves {
                let v = libm::sin(2.0 * PI * (w.fx * xf + w.fy * yf) + w.phase);
                for c in 0..3 {
                    px[c] += w.amp[c] * v;
                }
            }
            for (c, &v) in px.iter().enumerate() {
                img.set([0, c, y, x], v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(img)
}

/// Scenes `0..count` of the set generated from `seed`.
pub fn gen_scenes(count: usize, size: usize, seed: u64) -> Result<Vec<Tensor>> {
    (0..count as u64).map(|i| gen_scene(seed, i, size)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = gen_scene(3, 5, 16).unwrap();
        let b = gen_scene(3, 5, 16).unwrap();
        assert!(a.bit_eq(&b));
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(gen_scene(3, 5, 18).is_err());
    }

    #[test]
    fn distinct_indices_differ() {
        let set = gen_scenes(101, 16, 9).unwrap();
        for pair in set.windows(2) {
            assert!(pair[0].mean_abs_diff(&pair[1]).unwrap() > 0.01);
        }
    }
}
