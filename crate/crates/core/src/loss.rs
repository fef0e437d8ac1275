//! Fidelity and adversarial losses.
//!
//! The squared error is summed over channels and averaged over batch items
//! and pixels, so a loss value means "per-pixel squared error" regardless of
//! batch size. Probability arguments are expected inside the discriminator
//! clamp `[EPS_D, 1 - EPS_D]`; log terms are evaluated in `f64`.

use crate::error::Result;
use crate::tensor::Tensor;

/// [`crate::ops::EPS_D`] as an exact `f64`, for clamping probabilities in log terms.
pub const EPS_D_F64: f64 = 1e-7;

/// `sum ||a - b||^2 / (n h w)` with its gradient with respect to `a`.
pub fn mse_loss(a: &Tensor, b: &Tensor) -> Result<(f64, Tensor)> {
    a.ensure_same_shape(b, "mse_loss")?;
    let [n, _, h, w] = a.shape();
    let denom = (n * h * w) as f64;
    let mut sum = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = (x - y) as f64;
        sum += d * d;
    }
    let k = (2.0 / denom) as f32;
    let grad = a.zip_map(b, |x, y| k * (x - y))?;
    Ok((sum / denom, grad))
}

/// Generator penalty `-ln d` for a single discriminator probability.
pub fn adversarial_loss(d_out: f64) -> f64 {
    -libm::log(clamp_prob(d_out))
}

/// Binary cross entropy `-[ln d_real + ln(1 - d_fake)]`.
pub fn discriminator_loss(d_real: f64, d_fake: f64) -> f64 {
    -(libm::log(clamp_prob(d_real)) + libm::log(1.0 - clamp_prob(d_fake)))
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(EPS_D_F64, 1.0 - EPS_D_F64)
}

/// Batch mean of [`adversarial_loss`] over `(n, 1, 1, 1)` discriminator outputs,
/// with its gradient.
pub fn adversarial_loss_batch(d_out: &Tensor) -> (f64, Tensor) {
    let n = d_out.len().max(1) as f64;
    let loss = d_out.data().iter().map(|&d| adversarial_loss(d as f64)).sum::<f64>() / n;
    let grad = d_out.map(|d| (-1.0 / (clamp_prob(d as f64) * n)) as f32);
    (loss, grad)
}

/// Batch mean of [`discriminator_loss`]; gradients with respect to the real
/// and fake probabilities.
pub fn discriminator_loss_batch(d_real: &Tensor, d_fake: &Tensor) -> Result<(f64, Tensor, Tensor)> {
    d_real.ensure_same_shape(d_fake, "discriminator_loss")?;
    let n = d_real.len().max(1) as f64;
    let loss = d_real
        .data()
        .iter()
        .zip(d_fake.data())
        .map(|(&r, &f)| discriminator_loss(r as f64, f as f64))
        .sum::<f64>()
        / n;
    let g_real = d_real.map(|d| (-1.0 / (clamp_prob(d as f64) * n)) as f32);
    let g_fake = d_fake.map(|d| (1.0 / ((1.0 - clamp_prob(d as f64)) * n)) as f32);
    Ok((loss, g_real, g_fake))
}
