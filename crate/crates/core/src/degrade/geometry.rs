//! Projective warps and radial lens distortion by inverse mapping.
//!
//! Pixel `(x, y)` has its center at integer coordinates. Every output pixel
//! is mapped back into the source and sampled bilinearly; taps that fall
//! outside the source contribute black.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A 3x3 projective transform acting on column vectors `(x, y, 1)`,
/// normalized so that `m[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        let s = m[2][2];
        if s == 0.0 || !m.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::invalid("homography must be finite with m[2][2] != 0"));
        }
        let mut n = m;
        for v in n.iter_mut().flatten() {
            *v /= s;
        }
        Ok(Homography { m: n })
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        (
            (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
            (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
        )
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let det = self.determinant();
        let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        if det.abs() <= 1e-12 * scale * scale * scale || m[2][2] == 0.0 {
            return Err(Error::Singular);
        }
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        if adj[2][2] == 0.0 {
            // Finite but cannot be normalized; treat like a degenerate map.
            return Err(Error::Singular);
        }
        let mut inv = adj;
        for v in inv.iter_mut().flatten() {
            *v /= det;
        }
        Homography::new(inv)
    }

    /// `self` followed by `other`.
    pub fn then(&self, other: &Homography) -> Result<Self> {
        let (a, b) = (&other.m, &self.m);
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Homography::new(r)
    }

    /// The same map expressed on a grid `ss` times finer, where coarse pixel
    /// `x` covers fine pixels `x*ss .. x*ss + ss`.
    pub fn supersampled(&self, ss: usize) -> Result<Self> {
        let c = (ss as f64 - 1.0) / 2.0;
        self.supersampled_from(ss, (c, c))
    }

    /// Like [`Homography::supersampled`], but a source pixel is anchored at
    /// fine offset `(ox, oy)` inside its cell instead of the cell center.
    pub fn supersampled_from(&self, ss: usize, (ox, oy): (f64, f64)) -> Result<Self> {
        let s = ss as f64;
        let c = (s - 1.0) / 2.0;
        let src = Homography::new([[s, 0.0, ox], [0.0, s, oy], [0.0, 0.0, 1.0]])?;
        let dst = Homography::new([[s, 0.0, c], [0.0, s, c], [0.0, 0.0, 1.0]])?;
        src.inverse()?.then(self)?.then(&dst)
    }

    /// Map taking the four `src` points onto the four `dst` points.
    pub fn from_correspondences(src: [(f64, f64); 4], dst: [(f64, f64); 4]) -> Result<Self> {
        // Unknowns h0..h7 with h8 = 1.
        let mut a = [[0.0f64; 9]; 8];
        for (k, (&(x, y), &(u, v))) in src.iter().zip(&dst).enumerate() {
            a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        let h = solve8(a)?;
        Homography::new([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])
    }
}

/// Gaussian elimination with partial pivoting on an augmented 8x9 system.
fn solve8(mut a: [[f64; 9]; 8]) -> Result<[f64; 8]> {
    for col in 0..8 {
        let piv = (col..8)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        if a[piv][col].abs() < 1e-12 {
            return Err(Error::Singular);
        }
        a.swap(col, piv);
        for row in 0..8 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..9 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = [0.0; 8];
    for (i, v) in x.iter_mut().enumerate() {
        *v = a[i][8] / a[i][i];
    }
    Ok(x)
}

/// Bilinear sample of a plane at real coordinates; out-of-range taps are 0.
#[inline]
pub fn sample_bilinear(plane: &[f32], h: usize, w: usize, x: f64, y: f64) -> f32 {
    let x0 = libm::floor(x);
    let y0 = libm::floor(y);
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let at = |yy: isize, xx: isize| -> f64 {
        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
            0.0
        } else {
            plane[yy as usize * w + xx as usize] as f64
        }
    };
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
    let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
    (top * (1.0 - fy) + bottom * fy) as f32
}

fn remap(image: &Tensor, map: impl Fn(f64, f64) -> (f64, f64)) -> Tensor {
    let [n, c, h, w] = image.shape();
    let mut coords = alloc::vec::Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            coords.push(map(x as f64, y as f64));
        }
    }
    let mut out = Tensor::zeros([n, c, h, w]);
    for b in 0..n {
        for ch in 0..c {
            let src = image.plane(b, ch).to_vec();
            for (d, &(sx, sy)) in out.plane_mut(b, ch).iter_mut().zip(&coords) {
                *d = sample_bilinear(&src, h, w, sx, sy);
            }
        }
    }
    out
}

/// Warp by `h` (source to destination) using inverse mapping.
pub fn projective_warp(image: &Tensor, h: &Homography) -> Result<Tensor> {
    let inv = h.inverse()?;
    Ok(remap(image, |x, y| inv.apply(x, y)))
}

/// Source radius sampled by an output pixel at normalized radius `r`.
#[inline]
pub fn lens_source_radius(r: f64, k1: f64, k2: f64) -> f64 {
    let r2 = r * r;
    r * (1.0 + k1 * r2 + k2 * r2 * r2)
}

/// Radial distortion about the image center. Radii are normalized so the
/// half-diagonal of the image is 1.
pub fn lens_distort(image: &Tensor, k1: f64, k2: f64) -> Tensor {
    let [_, _, h, w] = image.shape();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let norm = 0.5 * libm::sqrt((w * w + h * h) as f64);
    remap(image, |x, y| {
        let dx = (x - cx) / norm;
        let dy = (y - cy) / norm;
        let r = libm::sqrt(dx * dx + dy * dy);
        let k = if r == 0.0 {
            1.0
        } else {
            lens_source_radius(r, k1, k2) / r
        };
        (cx + (x - cx) * k, cy + (y - cy) * k)
    })
}
