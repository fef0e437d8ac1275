//! LCD subpixel rendering.
//!
//! Each screen pixel becomes an `ss x ss` cell split into three vertical
//! stripes carrying R, G and B. The bottom row of every cell is black
//! matrix, and so is the last column of every stripe once stripes are at
//! least two subpixels wide. All three channels therefore light the same
//! area, given by [`fill_factor`].

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check(ss: usize) -> Result<()> {
    if ss < 3 || ss % 3 != 0 {
        return Err(Error::invalid("LCD supersample must be a positive multiple of 3"));
    }
    Ok(())
}

/// Whether subpixel `(dy, dx)` of a cell emits, and for which channel.
#[inline]
pub fn subpixel_channel(ss: usize, dy: usize, dx: usize) -> Option<usize> {
    let stripe = ss / 3;
    if dy == ss - 1 || (stripe >= 2 && dx % stripe == stripe - 1) {
        None
    } else {
        Some(dx / stripe)
    }
}

/// Lit fraction of a cell per channel.
pub fn fill_factor(ss: usize) -> f64 {
    let stripe = ss / 3;
    let lit_cols = if stripe >= 2 { stripe - 1 } else { stripe };
    ((ss - 1) * lit_cols) as f64 / (ss * ss) as f64
}

/// Centroid `(x, y)` of the emitting area of a cell, averaged over the three
/// channels, in subpixels from the cell's top-left subpixel.
pub fn emission_center(ss: usize) -> (f64, f64) {
    let stripe = ss / 3;
    let lit_cols = if stripe >= 2 { stripe - 1 } else { stripe };
    (
        stripe as f64 + (lit_cols as f64 - 1.0) / 2.0,
        (ss as f64 - 2.0) / 2.0,
    )
}

/// Render an RGB screenshot at `ss` subpixels per screen pixel.
pub fn lcd_render(screenshot: &Tensor, ss: usize) -> Result<Tensor> {
    check(ss)?;
    let [n, c, h, w] = screenshot.shape();
    if c != 3 {
        return Err(Error::shape("lcd_render channels", 3, c));
    }
    Ok(Tensor::from_fn([n, 3, h * ss, w * ss], |[b, ch, y, x]| {
        match subpixel_channel(ss, y % ss, x % ss) {
            Some(k) if k == ch => screenshot.at([b, ch, y / ss, x / ss]),
            _ => 0.0,
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn red_lights_left_third_only() {
        let mut px = Tensor::zeros([1, 3, 1, 1]);
        px.set([0, 0, 0, 0], 1.0);
        let out = lcd_render(&px, 3).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                let lit = x == 0 && y < 2;
                assert_eq!(out.at([0, 0, y, x]), if lit { 1.0 } else { 0.0 });
                assert_eq!(out.at([0, 1, y, x]), 0.0);
                assert_eq!(out.at([0, 2, y, x]), 0.0);
            }
        }
    }

    #[test]
    fn white_cell_mean_is_fill_factor() {
        for ss in [3, 6, 9, 12] {
            let out = lcd_render(&Tensor::full([1, 3, 1, 1], 1.0), ss).unwrap();
            for c in 0..3 {
                let m: f32 = out.plane(0, c).iter().sum::<f32>() / (ss * ss) as f32;
                assert!((m as f64 - fill_factor(ss)).abs() < 1e-6, "ss {ss}");
            }
        }
    }

    #[test]
    fn checkerboard_at_six_matches_hand_mask() {
        // White at (0,0) and (1,1), black elsewhere. Per cell: R G B stripes of
        // two columns, each followed by a black column; last row black.
        let board = Tensor::from_fn([1, 3, 2, 2], |[_, _, y, x]| ((x + y + 1) % 2) as f32);
        let out = lcd_render(&board, 6).unwrap();
        let cell = ["R.G.B.", "R.G.B.", "R.G.B.", "R.G.B.", "R.G.B.", "......"];
        let blank = "......";
        let rows: Vec<alloc::string::String> = (0..12)
            .map(|y| {
                let (a, b) = if y < 6 { (cell[y], blank) } else { (blank, cell[y - 6]) };
                alloc::format!("{a}{b}")
            })
            .collect();
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                for (c, name) in ['R', 'G', 'B'].iter().enumerate() {
                    let expect = if ch == *name { 1.0 } else { 0.0 };
                    assert_eq!(out.at([0, c, y, x]), expect, "({y},{x}) channel {name}");
                }
            }
        }
    }

    #[test]
    fn emission_center_is_lit_centroid() {
        for ss in [3, 6, 9] {
            let out = lcd_render(&Tensor::full([1, 3, 1, 1], 1.0), ss).unwrap();
            let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
            for c in 0..3 {
                for (i, &v) in out.plane(0, c).iter().enumerate() {
                    sx += v as f64 * (i % ss) as f64;
                    sy += v as f64 * (i / ss) as f64;
                    s += v as f64;
                }
            }
            assert_eq!((sx / s, sy / s), emission_center(ss), "ss {ss}");
        }
    }

    #[test]
    fn rejects_bad_supersample() {
        let img = Tensor::zeros([1, 3, 2, 2]);
        assert!(lcd_render(&img, 4).is_err());
        assert!(lcd_render(&img, 0).is_err());
    }
}
