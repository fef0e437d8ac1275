//! Bayer color filter sampling and bilinear demosaicking.

use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Channel layout of the top-left 2x2 block, read row by row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BayerPhase {
    Rggb,
    Grbg,
    Gbrg,
    Bggr,
}

impl BayerPhase {
    pub const ALL: [BayerPhase; 4] = [
        BayerPhase::Rggb,
        BayerPhase::Grbg,
        BayerPhase::Gbrg,
        BayerPhase::Bggr,
    ];

    /// Channel (0 R, 1 G, 2 B) sampled at `(y, x)`.
    #[inline]
    pub fn channel_at(self, y: usize, x: usize) -> usize {
        let pattern = match self {
            BayerPhase::Rggb => [0, 1, 1, 2],
            BayerPhase::Grbg => [1, 0, 2, 1],
            BayerPhase::Gbrg => [1, 2, 0, 1],
            BayerPhase::Bggr => [2, 1, 1, 0],
        };
        pattern[(y % 2) * 2 + x % 2]
    }
}

impl fmt::Display for BayerPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BayerPhase::Rggb => "rggb",
            BayerPhase::Grbg => "grbg",
            BayerPhase::Gbrg => "gbrg",
            BayerPhase::Bggr => "bggr",
        })
    }
}

impl FromStr for BayerPhase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BayerPhase::ALL
            .into_iter()
            .find(|p| alloc::format!("{p}").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(alloc::format!("unknown Bayer phase `{s}`")))
    }
}

/// Keep one channel per pixel following `phase`; output has one channel.
pub fn bayer_mosaic(image: &Tensor, phase: BayerPhase) -> Result<Tensor> {
    let [n, c, h, w] = image.shape();
    if c != 3 {
        return Err(Error::shape("bayer_mosaic channels", 3, c));
    }
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(alloc::format!(
            "bayer_mosaic needs even dims, got {h}x{w}"
        )));
    }
    Ok(Tensor::from_fn([n, 1, h, w], |[b, _, y, x]| {
        image.at([b, phase.channel_at(y, x), y, x])
    }))
}

const KERNEL_G: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 0.0]];
const KERNEL_RB: [[f64; 3]; 3] = [[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]];

/// Bilinear demosaicking as normalized convolution: each missing sample is
/// the kernel-weighted mean of the neighbors that carry its channel. Borders
/// replicate the edge pixel.
pub fn demosaic_bilinear(mosaic: &Tensor, phase: BayerPhase) -> Result<Tensor> {
    let [n, c, h, w] = mosaic.shape();
    if c != 1 {
        return Err(Error::shape("demosaic channels", 1, c));
    }
    let mut out = Tensor::zeros([n, 3, h, w]);
    for b in 0..n {
        let src = mosaic.plane(b, 0);
        for ch in 0..3 {
            let kernel = if ch == 1 { &KERNEL_G } else { &KERNEL_RB };
            let dst = out.plane_mut(b, ch);
            for y in 0..h {
                for x in 0..w {
                    if phase.channel_at(y, x) == ch {
                        dst[y * w + x] = src[y * w + x];
                        continue;
                    }
                    let (mut num, mut den) = (0.0f64, 0.0f64);
                    for (ky, row) in kernel.iter().enumerate() {
                        let yy = (y as isize + ky as isize - 1).clamp(0, h as isize - 1) as usize;
                        for (kx, &k) in row.iter().enumerate() {
                            let xx =
                                (x as isize + kx as isize - 1).clamp(0, w as isize - 1) as usize;
                            if k != 0.0 && phase.channel_at(yy, xx) == ch {
                                num += k * src[yy * w + xx] as f64;
                                den += k;
                            }
                        }
                    }
                    dst[y * w + x] = (num / den) as f32;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn pure_red_rggb() {
        let img = Tensor::from_fn([1, 3, 4, 4], |[_, c, _, _]| if c == 0 { 0.7 } else { 0.0 });
        let m = bayer_mosaic(&img, BayerPhase::Rggb).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expect = if y % 2 == 0 && x % 2 == 0 { 0.7 } else { 0.0 };
                assert_eq!(m.at([0, 0, y, x]), expect);
            }
        }
    }

    #[test]
    fn gray_mosaic_is_the_gray_plane() {
        let img = Tensor::from_fn([1, 3, 4, 6], |[_, _, y, x]| (y * 6 + x) as f32 / 30.0);
        for p in BayerPhase::ALL {
            let m = bayer_mosaic(&img, p).unwrap();
            assert_eq!(m.data(), img.plane(0, 0));
        }
    }

    #[test]
    fn odd_dims_rejected() {
        assert!(bayer_mosaic(&Tensor::zeros([1, 3, 3, 4]), BayerPhase::Rggb).is_err());
    }

    #[test]
    fn constant_color_recovered() {
        let img = Tensor::from_fn([1, 3, 6, 8], |[_, c, _, _]| [0.2, 0.5, 0.9][c]);
        for p in BayerPhase::ALL {
            let back = demosaic_bilinear(&bayer_mosaic(&img, p).unwrap(), p).unwrap();
            for (a, b) in back.data().iter().zip(img.data()) {
                assert!((a - b).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn gray_ramp_exact_in_interior() {
        let img = Tensor::from_fn([1, 3, 8, 8], |[_, _, y, x]| (2 * x + 3 * y) as f32 / 64.0);
        for p in BayerPhase::ALL {
            let back = demosaic_bilinear(&bayer_mosaic(&img, p).unwrap(), p).unwrap();
            for c in 0..3 {
                for y in 1..7 {
                    for x in 1..7 {
                        assert!((back.at([0, c, y, x]) - img.at([0, c, y, x])).abs() < 1e-6);
                    }
                }
            }
        }
    }

    /// Per-pixel reference: average of same-color neighbors by position class.
    fn scalar_demosaic(m: &Tensor, p: BayerPhase, ch: usize, y: usize, x: usize) -> f32 {
        let (h, w) = (m.h() as isize, m.w() as isize);
        let get = |dy: isize, dx: isize| {
            let yy = (y as isize + dy).clamp(0, h - 1) as usize;
            let xx = (x as isize + dx).clamp(0, w - 1) as usize;
            (p.channel_at(yy, xx), m.at([0, 0, yy, xx]) as f64)
        };
        if p.channel_at(y, x) == ch {
            return m.at([0, 0, y, x]);
        }
        let cross = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        let diag = [(-1, -1), (-1, 1), (1, -1), (1, 1)];
        let pick = |offs: &[(isize, isize)], wt: f64| {
            offs.iter()
                .map(|&(dy, dx)| get(dy, dx))
                .filter(|&(c, _)| c == ch)
                .fold((0.0, 0.0), |(s, n), (_, v)| (s + wt * v, n + wt))
        };
        let (s1, n1) = pick(&cross, if ch == 1 { 1.0 } else { 2.0 });
        let (s2, n2) = if ch == 1 { (0.0, 0.0) } else { pick(&diag, 1.0) };
        ((s1 + s2) / (n1 + n2)) as f32
    }

    #[test]
    fn random_mosaic_matches_scalar_reference() {
        let mut r = crate::rng::rng(4);
        for p in BayerPhase::ALL {
            let m = Tensor::from_fn([1, 1, 6, 10], |_| r.random_range(0.0..1.0));
            let out = demosaic_bilinear(&m, p).unwrap();
            for c in 0..3 {
                for y in 0..6 {
                    for x in 0..10 {
                        let e = scalar_demosaic(&m, p, c, y, x);
                        assert!((out.at([0, c, y, x]) - e).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn phase_names_round_trip() {
        for p in BayerPhase::ALL {
            assert_eq!(alloc::format!("{p}").parse::<BayerPhase>().unwrap(), p);
        }
    }
}
