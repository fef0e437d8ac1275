use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::gemm;

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn check(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>) -> Result<(usize, usize)> {
    let [out_f, in_f, kh, kw] = weights.shape();
    if kh != 1 || kw != 1 {
        return Err(Error::shape("dense weights", [out_f, in_f, 1, 1], weights.shape()));
    }
    let flat = input.c() * input.h() * input.w();
    if flat != in_f {
        return Err(Error::shape("dense input features", in_f, flat));
    }
    if let Some(bias) = bias {
        if bias.shape() != [out_f, 1, 1, 1] {
            return Err(Error::shape("dense bias", [out_f, 1, 1, 1], bias.shape()));
        }
    }
    Ok((in_f, out_f))
}

/// Fully connected layer over the flattened `(c, h, w)` features; output `(n, out, 1, 1)`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (in_f, out_f) = check(input, weights, Some(bias))?;
    let n = input.n();
    let mut out = Tensor::zeros([n, out_f, 1, 1]);
    for b in 0..n {
        out.item_mut(b).copy_from_slice(bias.data());
    }
    // out[n x out] += x[n x in] * W^T[in x out]
    gemm(
        n,
        in_f,
        out_f,
        input.data(),
        (in_f as isize, 1),
        weights.data(),
        (1, in_f as isize),
        out.data_mut(),
        1.0,
    );
    Ok(out)
}

pub fn dense_backward(input: &Tensor, weights: &Tensor, upstream: &Tensor) -> Result<DenseGrads> {
    let (in_f, out_f) = check(input, weights, None)?;
    let n = input.n();
    if upstream.shape() != [n, out_f, 1, 1] {
        return Err(Error::shape("dense upstream gradient", [n, out_f, 1, 1], upstream.shape()));
    }
    let mut d_input = Tensor::zeros(input.shape());
    let mut d_weights = Tensor::zeros(weights.shape());
    let mut d_bias = Tensor::zeros([out_f, 1, 1, 1]);
    // dX[n x in] = dY[n x out] * W[out x in]
    gemm(
        n,
        out_f,
        in_f,
        upstream.data(),
        (out_f as isize, 1),
        weights.data(),
        (in_f as isize, 1),
        d_input.data_mut(),
        0.0,
    );
    // dW[out x in] = dY^T[out x n] * X[n x in]
    gemm(
        out_f,
        n,
        in_f,
        upstream.data(),
        (1, out_f as isize),
        input.data(),
        (in_f as isize, 1),
        d_weights.data_mut(),
        0.0,
    );
    for b in 0..n {
        for (acc, g) in d_bias.data_mut().iter_mut().zip(upstream.item(b)) {
            *acc += g;
        }
    }
    Ok(DenseGrads {
        input: d_input,
        weights: d_weights,
        bias: d_bias,
    })
}

pub fn global_avg_pool(input: &Tensor) -> Tensor {
    let [n, c, h, w] = input.shape();
    let k = 1.0 / (h * w) as f32;
    Tensor::from_fn([n, c, 1, 1], |[b, ch, _, _]| input.plane(b, ch).iter().sum::<f32>() * k)
}

pub fn global_avg_pool_backward(input_shape: [usize; 4], upstream: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input_shape;
    if upstream.shape() != [n, c, 1, 1] {
        return Err(Error::shape("global_avg_pool upstream", [n, c, 1, 1], upstream.shape()));
    }
    let k = 1.0 / (h * w) as f32;
    Ok(Tensor::from_fn(input_shape, |[b, ch, _, _]| {
        upstream.at([b, ch, 0, 0]) * k
    }))
}
