//! Patch extraction on a stride grid with an optional seeded cap.

use alloc::vec::Vec;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub size: usize,
    pub stride: usize,
    /// Maximum patches kept per image; `None` keeps the full grid.
    pub cap: Option<usize>,
}

impl PatchSpec {
    pub fn new(size: usize, stride: usize, cap: Option<usize>) -> Result<Self> {
        if size < 8 || stride < 1 {
            return Err(Error::invalid("patch size must be >= 8 and stride >= 1"));
        }
        Ok(PatchSpec { size, stride, cap })
    }
}

/// Top-left corners `(y, x)` of the grid, row-major.
pub fn grid_positions(h: usize, w: usize, spec: &PatchSpec) -> Result<Vec<(usize, usize)>> {
    if spec.size > h || spec.size > w {
        return Err(Error::invalid(alloc::format!(
            "patch {} larger than image {h}x{w}",
            spec.size
        )));
    }
    let ys = (0..=(h - spec.size)).step_by(spec.stride);
    Ok(ys
        .flat_map(|y| (0..=(w - spec.size)).step_by(spec.stride).map(move |x| (y, x)))
        .collect())
}

/// Grid positions of one image, subsampled to the cap with a seeded draw
/// (order preserved).
fn chosen(h: usize, w: usize, spec: &PatchSpec, seed: u64) -> Result<Vec<(usize, usize)>> {
    let all = grid_positions(h, w, spec)?;
    match spec.cap {
        Some(cap) if cap < all.len() => {
            let mut keep = index::sample(&mut rng::rng(seed), all.len(), cap).into_vec();
            keep.sort_unstable();
            Ok(keep.into_iter().map(|i| all[i]).collect())
        }
        _ => Ok(all),
    }
}

/// The `size x size` window with top-left corner `(y, x)`.
pub fn crop(image: &Tensor, y: usize, x: usize, size: usize) -> Tensor {
    let [n, c, _, _] = image.shape();
    Tensor::from_fn([n, c, size, size], |[b, ch, dy, dx]| image.at([b, ch, y + dy, x + dx]))
}

/// Patches of every image; image `i` draws its cap subset from `derive(seed, i)`.
pub fn extract_patches(images: &[Tensor], spec: &PatchSpec, seed: u64) -> Result<Vec<Tensor>> {
    let mut out = Vec::new();
    for (i, img) in images.iter().enumerate() {
        for (y, x) in chosen(img.h(), img.w(), spec, rng::derive(seed, i as u64))? {
            out.push(crop(img, y, x, spec.size));
        }
    }
    Ok(out)
}

/// Aligned patch pairs. `spec` applies to the first image of each pair; the
/// second must be exactly `scale` times larger and is cropped at the scaled
/// position and size.
pub fn extract_patch_pairs(
    pairs: &[(Tensor, Tensor)],
    spec: &PatchSpec,
    scale: usize,
    seed: u64,
) -> Result<Vec<(Tensor, Tensor)>> {
    let mut out = Vec::new();
    for (i, (a, b)) in pairs.iter().enumerate() {
        if b.h() != a.h() * scale || b.w() != a.w() * scale {
            return Err(Error::shape(
                "patch pair dims",
                [a.h() * scale, a.w() * scale],
                [b.h(), b.w()],
            ));
        }
        for (y, x) in chosen(a.h(), a.w(), spec, rng::derive(seed, i as u64))? {
            out.push((
                crop(a, y, x, spec.size),
                crop(b, y * scale, x * scale, spec.size * scale),
            ));
        }
    }
    Ok(out)
}
