use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn nearest_up(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::invalid("upsample factor must be >= 1"));
    }
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for oy in 0..oh {
                let srow = &src[(oy / factor) * w..(oy / factor + 1) * w];
                let drow = &mut dst[oy * ow..(oy + 1) * ow];
                for (ox, d) in drow.iter_mut().enumerate() {
                    *d = srow[ox / factor];
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`nearest_up`]: sums each `factor x factor` block.
pub fn nearest_up_backward(upstream: &Tensor, factor: usize) -> Result<Tensor> {
    block_reduce(upstream, factor, 1.0, "nearest_up backward")
}

/// Mean over each `factor x factor` block.
pub fn avg_down(x: &Tensor, factor: usize) -> Result<Tensor> {
    let k = 1.0 / (factor * factor) as f32;
    block_reduce(x, factor, k, "avg_down")
}

pub fn avg_down_backward(upstream: &Tensor, factor: usize) -> Result<Tensor> {
    let mut g = nearest_up(upstream, factor)?;
    g.scale(1.0 / (factor * factor) as f32);
    Ok(g)
}

fn block_reduce(x: &Tensor, factor: usize, scale: f32, op: &'static str) -> Result<Tensor> {
    let [n, c, h, w] = x.shape();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::shape(op, alloc::format!("dims divisible by {factor}"), [h, w]));
    }
    let (oh, ow) = (h / factor, w / factor);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = 0.0f32;
                    for dy in 0..factor {
                        let row = &src[(oy * factor + dy) * w + ox * factor..][..factor];
                        s += row.iter().sum::<f32>();
                    }
                    dst[oy * ow + ox] = s * scale;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_down_hand_blocks() {
        let x = Tensor::from_vec([1, 1, 4, 4], (1..=16).map(|v| v as f32).collect()).unwrap();
        let y = avg_down(&x, 2).unwrap();
        assert_eq!(y.data(), &[3.5, 5.5, 11.5, 13.5]);
    }

    #[test]
    fn constant_preserved() {
        let x = Tensor::full([1, 3, 8, 8], 0.5);
        assert_eq!(avg_down(&x, 4).unwrap(), Tensor::full([1, 3, 2, 2], 0.5));
    }

    #[test]
    fn non_divisible_rejected() {
        assert!(avg_down(&Tensor::zeros([1, 1, 6, 8]), 4).is_err());
    }

    #[test]
    fn down_inverts_up() {
        for factor in [2, 4] {
            let x = Tensor::from_fn([2, 3, 3, 5], |[b, c, y, x]| {
                ((b * 7 + c * 5 + y * 3 + x) % 11) as f32 / 11.0
            });
            let back = avg_down(&nearest_up(&x, factor).unwrap(), factor).unwrap();
            assert_eq!(back, x);
        }
    }
}
