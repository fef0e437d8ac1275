//! Layer kernels: forward and analytic backward for each primitive.

mod activation;
mod conv;
mod dense;
mod resample;

pub use activation::{
    leaky_relu, leaky_relu_backward, relu, relu_backward, sigmoid, sigmoid_backward, EPS_D,
};
pub use conv::{conv2d, conv2d_backward, ConvGrads};
pub use dense::{dense, dense_backward, global_avg_pool, global_avg_pool_backward, DenseGrads};
pub use resample::{avg_down, avg_down_backward, nearest_up, nearest_up_backward};

/// Border handling for convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    Zero,
    /// Mirror about the edge sample, without repeating it (`-1 -> 1`).
    Reflect,
}

/// Fold an arbitrary integer coordinate into `0..n` by mirror reflection
/// about the first and last samples.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// `c = a * b + beta * c` for row/column-strided operands.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (isize, isize),
    b: &[f32],
    (rsb, csb): (isize, isize),
    c: &mut [f32],
    beta: f32,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the asserts above bound every index the strides can reach,
    // since each operand is a dense m*k / k*n / m*n block in either layout.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_folds() {
        let got: alloc::vec::Vec<usize> = (-4..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, [2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect_index(-3, 1), 0);
    }
}
