//! Screen-photograph simulation: an RGB screenshot is shown on a striped
//! LCD, photographed through a tilted lens onto a Bayer sensor, demosaicked
//! and stored. The matching target applies the same geometry to the
//! screenshot itself, so both images share one pixel grid.

use rand::Rng as _;

use super::bayer::{bayer_mosaic, demosaic_bilinear, BayerPhase};
use super::geometry::{lens_distort, projective_warp, Homography};
use super::lcd::{emission_center, fill_factor, lcd_render};
use super::{gamma_decode, gamma_encode, quantize};
use crate::error::{Error, Result};
use crate::ops::{avg_down, nearest_up};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoireParams {
    /// LCD subpixels per screen pixel along each axis; a multiple of 3.
    pub supersample: usize,
    /// Screen-pixel coordinates, screen to sensor.
    pub homography: Homography,
    pub radial_k1: f64,
    pub radial_k2: f64,
    pub bayer_phase: BayerPhase,
    pub exposure_gain: f64,
    /// Sensor pixels per screen pixel along each axis.
    pub output_scale: f64,
}

impl Default for MoireParams {
    fn default() -> Self {
        MoireParams {
            supersample: 6,
            homography: Homography::IDENTITY,
            radial_k1: 0.0,
            radial_k2: 0.0,
            bayer_phase: BayerPhase::Rggb,
            exposure_gain: 1.0,
            output_scale: 1.0,
        }
    }
}

/// Relative corner jitter of the sampled homography, as a fraction of width.
pub const CORNER_JITTER: f64 = 0.03;
pub const K1_RANGE: f64 = 0.05;
pub const GAIN_RANGE: (f64, f64) = (0.9, 1.1);

impl MoireParams {
    /// Random capture geometry for a `w x h` screenshot: corners moved
    /// independently within `CORNER_JITTER * w`, `k1` uniform in
    /// `±K1_RANGE`, `k2 = 0`, gain uniform in `GAIN_RANGE`, random phase.
    pub fn sample(seed: u64, w: usize, h: usize, supersample: usize, output_scale: f64) -> Result<Self> {
        let mut r = rng::rng(seed);
        let j = CORNER_JITTER * w as f64;
        let (xw, yh) = ((w - 1) as f64, (h - 1) as f64);
        let src = [(0.0, 0.0), (xw, 0.0), (xw, yh), (0.0, yh)];
        let mut dst = src;
        for p in &mut dst {
            p.0 += r.random_range(-j..=j);
            p.1 += r.random_range(-j..=j);
        }
        Ok(MoireParams {
            supersample,
            homography: Homography::from_correspondences(src, dst)?,
            radial_k1: r.random_range(-K1_RANGE..=K1_RANGE),
            radial_k2: 0.0,
            bayer_phase: BayerPhase::ALL[r.random_range(0..4)],
            exposure_gain: r.random_range(GAIN_RANGE.0..=GAIN_RANGE.1),
            output_scale,
        })
    }

    pub(crate) fn validate_public(&self) -> Result<()> {
        self.validate().map(|_| ())
    }

    fn validate(&self) -> Result<usize> {
        let ss = self.supersample;
        if ss < 3 || ss % 3 != 0 {
            return Err(Error::invalid("moire supersample must be a positive multiple of 3"));
        }
        let m = self.homography.matrix();
        if m[2][2] != 1.0 {
            return Err(Error::invalid("moire homography must have m[2][2] == 1"));
        }
        let ratio = ss as f64 / self.output_scale;
        let down = libm::round(ratio);
        if !(self.output_scale > 0.0) || down < 1.0 || (ratio - down).abs() > 1e-9 {
            return Err(Error::invalid(
                "supersample / output_scale must be a positive integer",
            ));
        }
        if !(self.exposure_gain >= 0.0) {
            return Err(Error::invalid("exposure gain must be >= 0"));
        }
        Ok(down as usize)
    }
}

/// Warp, distort and area-average a supersampled optical image to the sensor
/// grid. `anchor` is the fine-grid position of a screen pixel within its cell.
fn optics(fine: &Tensor, p: &MoireParams, down: usize, anchor: (f64, f64)) -> Result<Tensor> {
    let h = p.homography.supersampled_from(p.supersample, anchor)?;
    let warped = projective_warp(fine, &h)?;
    let distorted = lens_distort(&warped, p.radial_k1, p.radial_k2);
    avg_down(&distorted, down)
}

/// Returns `(degraded, ground_truth)`, both on the sensor grid.
pub fn synth_moire(screenshot: &Tensor, p: &MoireParams) -> Result<(Tensor, Tensor)> {
    let down = p.validate()?;
    if screenshot.c() != 3 {
        return Err(Error::shape("synth_moire channels", 3, screenshot.c()));
    }
    let ss = p.supersample;

    let light = lcd_render(&gamma_decode(screenshot), ss)?;
    // A panel pixel sits where its light comes from, so the pair stays aligned
    // despite the black matrix.
    let mut sensor = optics(&light, p, down, emission_center(ss))?;
    let k = (p.exposure_gain / fill_factor(ss)) as f32;
    for v in sensor.data_mut() {
        *v = (*v * k).clamp(0.0, 1.0);
    }
    let mosaic = bayer_mosaic(&sensor, p.bayer_phase)?;
    let rgb = demosaic_bilinear(&mosaic, p.bayer_phase)?;
    let degraded = quantize(&gamma_encode(&rgb));

    let center = (ss as f64 - 1.0) / 2.0;
    let mut truth = optics(&nearest_up(screenshot, ss)?, p, down, (center, center))?;
    truth.clamp01();
    Ok((degraded, truth))
}

/// Green-channel response `plain - with_dot` of a dark dot, in linear light
/// when both inputs are.
pub fn dot_response(plain: &Tensor, with_dot: &Tensor) -> alloc::vec::Vec<f64> {
    plain
        .plane(0, 1)
        .iter()
        .zip(with_dot.plane(0, 1))
        .map(|(&a, &b)| (a - b) as f64)
        .collect()
}

/// Weighted centroid `(x, y)` of a row-major plane of width `w`.
pub fn centroid(plane: &[f64], w: usize) -> (f64, f64) {
    let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
    for (i, &v) in plane.iter().enumerate() {
        sx += v * (i % w) as f64;
        sy += v * (i / w) as f64;
        s += v;
    }
    (sx / s, sy / s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_energy_is_preserved() {
        let img = Tensor::full([1, 3, 12, 12], 0.6);
        let p = MoireParams {
            supersample: 3,
            ..MoireParams::default()
        };
        let (deg, gt) = synth_moire(&img, &p).unwrap();
        let rel = (deg.mean() - gt.mean()).abs() / gt.mean();
        assert!(rel < 0.02, "{rel}");
    }

    #[test]
    fn dot_centroids_align() {
        // The sensor must resolve the dot: at 3 sensor pixels per screen
        // pixel the green sites sample every column of the dot.
        let plain = Tensor::full([1, 3, 16, 16], 0.5);
        let mut dot = plain.clone();
        for c in 0..3 {
            dot.set([0, c, 7, 9], 0.0);
        }
        for seed in 0..6 {
            let p = MoireParams::sample(seed, 16, 16, 6, 3.0).unwrap();
            let (d0, g0) = synth_moire(&plain, &p).unwrap();
            let (d1, g1) = synth_moire(&dot, &p).unwrap();
            let a = centroid(&dot_response(&gamma_decode(&d0), &gamma_decode(&d1)), 48);
            let b = centroid(&dot_response(&g0, &g1), 48);
            let d = libm::hypot(a.0 - b.0, a.1 - b.1);
            assert!(d < 0.5, "seed {seed}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn bad_parameters_rejected() {
        let img = Tensor::full([1, 3, 4, 4], 0.5);
        for p in [
            MoireParams { supersample: 4, ..MoireParams::default() },
            MoireParams { output_scale: 4.0, ..MoireParams::default() },
        ] {
            assert!(synth_moire(&img, &p).is_err());
        }
    }
}
