//! 2-D convolution via im2col + SGEMM.

use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, reflect_index, Padding};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gradients of a convolution with respect to its three operands.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    padding: Padding,
}

impl Geometry {
    fn new(input: &Tensor, weights: &Tensor, stride: usize, padding: Padding) -> Result<Self> {
        let [c_out, c_in, kh, kw] = weights.shape();
        if kh != kw || kh % 2 == 0 {
            return Err(Error::invalid(alloc::format!(
                "conv2d kernel must be square and odd, got {kh}x{kw}"
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be >= 1"));
        }
        if input.c() != c_in {
            return Err(Error::shape(
                "conv2d input channels vs weight f_in",
                c_in,
                input.c(),
            ));
        }
        let k = kh;
        let pad = (k - 1) / 2;
        let (h, w) = (input.h(), input.w());
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::shape("conv2d spatial dims", [k, k], [h, w]));
        }
        Ok(Geometry {
            c_in,
            c_out,
            k,
            stride,
            pad,
            h,
            w,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (w + 2 * pad - k) / stride + 1,
            padding,
        })
    }

    #[inline]
    fn rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    #[inline]
    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Source coordinate for padded coordinate `p` along an axis of length `n`,
    /// or `None` when it falls in the zero padding.
    #[inline]
    fn source(&self, p: isize, n: usize) -> Option<usize> {
        if p >= 0 && (p as usize) < n {
            return Some(p as usize);
        }
        match self.padding {
            Padding::Zero => None,
            Padding::Reflect => Some(reflect_index(p, n)),
        }
    }

    /// Output columns `lo..hi` whose tap `kx` lands inside `0..w`.
    #[inline]
    fn interior(&self, kx: usize) -> (usize, usize) {
        let off = kx as isize - self.pad as isize;
        let s = self.stride as isize;
        let lo = if off >= 0 { 0 } else { ((-off + s - 1) / s) as usize };
        let last = self.w as isize - 1 - off;
        let hi = if last < 0 { 0 } else { ((last / s) as usize + 1).min(self.ow) };
        (lo.min(hi), hi)
    }

    fn im2col(&self, item: &[f32], cols: &mut [f32]) {
        let hw = self.h * self.w;
        let ncols = self.cols();
        let mut row = 0;
        for ci in 0..self.c_in {
            let plane = &item[ci * hw..(ci + 1) * hw];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let (lo, hi) = self.interior(kx);
                    let off = kx as isize - self.pad as isize;
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.oh {
                        let py = (oy * self.stride + ky) as isize - self.pad as isize;
                        let drow = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        let Some(sy) = self.source(py, self.h) else {
                            drow.fill(0.0);
                            continue;
                        };
                        let src = &plane[sy * self.w..(sy + 1) * self.w];
                        if self.stride == 1 {
                            let a = (lo as isize + off) as usize;
                            drow[lo..hi].copy_from_slice(&src[a..a + (hi - lo)]);
                        } else {
                            for ox in lo..hi {
                                drow[ox] = src[(ox as isize * self.stride as isize + off) as usize];
                            }
                        }
                        for ox in (0..lo).chain(hi..self.ow) {
                            let px = ox as isize * self.stride as isize + off;
                            drow[ox] = self.source(px, self.w).map_or(0.0, |sx| src[sx]);
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn col2im(&self, cols: &[f32], item: &mut [f32]) {
        let hw = self.h * self.w;
        let ncols = self.cols();
        let mut row = 0;
        for ci in 0..self.c_in {
            let plane = &mut item[ci * hw..(ci + 1) * hw];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let (lo, hi) = self.interior(kx);
                    let off = kx as isize - self.pad as isize;
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.oh {
                        let py = (oy * self.stride + ky) as isize - self.pad as isize;
                        let Some(sy) = self.source(py, self.h) else {
                            continue;
                        };
                        let srow = &src[oy * self.ow..(oy + 1) * self.ow];
                        let prow = &mut plane[sy * self.w..(sy + 1) * self.w];
                        for ox in (0..lo).chain(hi..self.ow) {
                            let px = ox as isize * self.stride as isize + off;
                            if let Some(sx) = self.source(px, self.w) {
                                prow[sx] += srow[ox];
                            }
                        }
                        if self.stride == 1 {
                            let a = (lo as isize + off) as usize;
                            for (d, &v) in prow[a..a + (hi - lo)].iter_mut().zip(&srow[lo..hi]) {
                                *d += v;
                            }
                        } else {
                            for ox in lo..hi {
                                prow[(ox as isize * self.stride as isize + off) as usize] += srow[ox];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn check_bias(bias: &Tensor, c_out: usize) -> Result<()> {
    if bias.shape() != [c_out, 1, 1, 1] {
        return Err(Error::shape("conv2d bias", [c_out, 1, 1, 1], bias.shape()));
    }
    Ok(())
}

/// Same-size-padded convolution: `pad = (k - 1) / 2`, output dims
/// `floor((h + 2 pad - k) / stride) + 1`.
pub fn conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let g = Geometry::new(input, weights, stride, padding)?;
    check_bias(bias, g.c_out)?;
    let n = input.n();
    let (rows, ncols) = (g.rows(), g.cols());
    let mut out = Tensor::zeros([n, g.c_out, g.oh, g.ow]);
    let mut cols = vec![0.0f32; rows * ncols];
    for b in 0..n {
        g.im2col(input.item(b), &mut cols);
        let dst = out.item_mut(b);
        for (co, chunk) in dst.chunks_mut(ncols).enumerate() {
            chunk.fill(bias.data()[co]);
        }
        // out[c_out x ncols] += W[c_out x rows] * cols[rows x ncols]
        gemm(
            g.c_out,
            rows,
            ncols,
            weights.data(),
            (rows as isize, 1),
            &cols,
            (ncols as isize, 1),
            dst,
            1.0,
        );
    }
    Ok(out)
}

pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    upstream: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<ConvGrads> {
    let g = Geometry::new(input, weights, stride, padding)?;
    let n = input.n();
    let expected = [n, g.c_out, g.oh, g.ow];
    if upstream.shape() != expected {
        return Err(Error::shape("conv2d upstream gradient", expected, upstream.shape()));
    }
    let (rows, ncols) = (g.rows(), g.cols());
    let mut d_input = Tensor::zeros(input.shape());
    let mut d_weights = Tensor::zeros(weights.shape());
    let mut d_bias = Tensor::zeros([g.c_out, 1, 1, 1]);
    let mut cols = vec![0.0f32; rows * ncols];
    let mut d_cols: Vec<f32> = vec![0.0f32; rows * ncols];
    for b in 0..n {
        let dy = upstream.item(b);
        g.im2col(input.item(b), &mut cols);
        // dW[c_out x rows] += dY[c_out x ncols] * cols^T[ncols x rows]
        gemm(
            g.c_out,
            ncols,
            rows,
            dy,
            (ncols as isize, 1),
            &cols,
            (1, ncols as isize),
            d_weights.data_mut(),
            1.0,
        );
        for (co, chunk) in dy.chunks(ncols).enumerate() {
            d_bias.data_mut()[co] += chunk.iter().sum::<f32>();
        }
        // dcols[rows x ncols] = W^T[rows x c_out] * dY[c_out x ncols]
        gemm(
            rows,
            g.c_out,
            ncols,
            weights.data(),
            (1, rows as isize),
            dy,
            (ncols as isize, 1),
            &mut d_cols,
            0.0,
        );
        g.col2im(&d_cols, d_input.item_mut(b));
    }
    Ok(ConvGrads {
        input: d_input,
        weights: d_weights,
        bias: d_bias,
    })
}
