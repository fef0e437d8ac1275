//! Scalar reference implementations shared by the oracle and acceptance tests.

use surrogate_core::ops::Padding;
use surrogate_core::Tensor;

/// Mirror without repeating the edge sample, by walking back and forth.
pub fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

pub fn conv_reference(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, padding: Padding) -> Tensor {
    let [n, c_in, h, wd] = x.shape();
    let [c_out, _, k, _] = w.shape();
    let pad = (k - 1) / 2;
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    Tensor::from_fn([n, c_out, oh, ow], |[bi, co, oy, ox]| {
        let mut acc = b.at([co, 0, 0, 0]) as f64;
        for ci in 0..c_in {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    let v = match padding {
                        Padding::Zero => {
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                0.0
                            } else {
                                x.at([bi, ci, iy as usize, ix as usize])
                            }
                        }
                        Padding::Reflect => x.at([bi, ci, mirror(iy, h), mirror(ix, wd)]),
                    };
                    acc += w.at([co, ci, ky, kx]) as f64 * v as f64;
                }
            }
        }
        acc as f32
    })
}

/// Keys cubic with a = -0.5, written out piecewise.
pub fn keys(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        1.5 * x * x * x - 2.5 * x * x + 1.0
    } else if x < 2.0 {
        -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0
    } else {
        0.0
    }
}

/// Normalized 1-D weights for output sample `o` when resampling `n_in` to `n_out`.
pub fn weights(o: usize, n_in: usize, n_out: usize) -> Vec<(usize, f64)> {
    let ratio = n_in as f64 / n_out as f64;
    let stretch = if ratio > 1.0 { ratio } else { 1.0 };
    let center = (o as f64 + 0.5) * ratio - 0.5;
    let lo = (center - 2.0 * stretch).floor() as isize;
    let hi = (center + 2.0 * stretch).ceil() as isize;
    let raw: Vec<(usize, f64)> = (lo..=hi)
        .map(|j| (mirror(j, n_in), keys((j as f64 - center) / stretch)))
        .collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    raw.into_iter().map(|(i, w)| (i, w / total)).collect()
}

pub fn bicubic_reference(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    let [n, c, h, w] = x.shape();
    Tensor::from_fn([n, c, oh, ow], |[b, ch, oy, ox]| {
        let mut acc = 0.0f64;
        for (iy, wy) in weights(oy, h, oh) {
            for (ix, wx) in weights(ox, w, ow) {
                acc += wy * wx * x.at([b, ch, iy, ix]) as f64;
            }
        }
        acc as f32
    })
}
