use crate::error::Result;
use crate::tensor::Tensor;

/// Sigmoid outputs are clamped to `[EPS_D, 1 - EPS_D]` so log-losses stay finite.
pub const EPS_D: f32 = 1e-7;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    input.zip_map(upstream, |x, g| if x > 0.0 { g } else { 0.0 })
}

pub fn leaky_relu(x: &Tensor, slope: f32) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

pub fn leaky_relu_backward(input: &Tensor, upstream: &Tensor, slope: f32) -> Result<Tensor> {
    input.zip_map(upstream, |x, g| if x > 0.0 { g } else { slope * g })
}

#[inline]
fn sigmoid_scalar(v: f32) -> f32 {
    let s = if v >= 0.0 {
        1.0 / (1.0 + libm::expf(-v))
    } else {
        let e = libm::expf(v);
        e / (1.0 + e)
    };
    s.clamp(EPS_D, 1.0 - EPS_D)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Backward from the cached (clamped) output: `dx = g * s * (1 - s)`.
pub fn sigmoid_backward(output: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    output.zip_map(upstream, |s, g| g * s * (1.0 - s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f32) -> Tensor {
        Tensor::full([1, 1, 1, 1], v)
    }

    #[test]
    fn scalar_values() {
        assert_eq!(relu(&scalar(-3.0)).data()[0], 0.0);
        assert_eq!(relu(&scalar(3.0)).data()[0], 3.0);
        assert!((leaky_relu(&scalar(-2.0), 0.2).data()[0] + 0.4).abs() < 1e-7);
        assert_eq!(sigmoid(&scalar(0.0)).data()[0], 0.5);
    }

    #[test]
    fn dead_relu_and_sigmoid_slope() {
        let g = relu_backward(&scalar(-1.0), &scalar(1.0)).unwrap();
        assert_eq!(g.data()[0], 0.0);
        let s = sigmoid(&scalar(0.0));
        let g = sigmoid_backward(&s, &scalar(1.0)).unwrap();
        assert_eq!(g.data()[0], 0.25);
    }

    #[test]
    fn sigmoid_saturates_inside_clamp() {
        for v in [-1e4f32, -100.0, 100.0, 1e4] {
            let s = sigmoid(&scalar(v)).data()[0];
            assert!((EPS_D..=1.0 - EPS_D).contains(&s));
        }
    }
}
