//! Degradation operators: bicubic resampling, a pseudo-real capture model
//! and a screen-photograph (moiré) simulator, plus the textual spec that
//! selects one of them.
//!
//! Spec strings:
//!
//! ```text
//! bicubic4 | bicubic2
//! pseudo_real[:blur=S,factor=F,noise=S,quantize=0|1]
//! moire[:ss=N,scale=R]
//! ```
//!
//! Omitted keys take the defaults of [`PseudoReal`] and [`MoireParams`].

mod bayer;
mod bicubic;
mod geometry;
mod lcd;
mod moire;
mod pseudo;

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

pub use bayer::{bayer_mosaic, demosaic_bilinear, BayerPhase};
pub use bicubic::{bicubic_resample, cubic_kernel, taps, Direction, Taps, CUBIC_A};
pub use geometry::{lens_distort, lens_source_radius, projective_warp, sample_bilinear, Homography};
pub use lcd::{emission_center, fill_factor, lcd_render, subpixel_channel};
pub use moire::{centroid, dot_response, synth_moire, MoireParams, CORNER_JITTER, GAIN_RANGE, K1_RANGE};
pub use pseudo::{gaussian_blur, gaussian_kernel, pseudo_real_degrade, PseudoReal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const GAMMA: f32 = 2.2;

/// Display-encoded values to linear light.
pub fn gamma_decode(x: &Tensor) -> Tensor {
    x.map(|v| libm::powf(v.clamp(0.0, 1.0), GAMMA))
}

/// Linear light to display encoding.
pub fn gamma_encode(x: &Tensor) -> Tensor {
    x.map(|v| libm::powf(v.clamp(0.0, 1.0), 1.0 / GAMMA))
}

/// One value to the nearest of 256 levels (ties away from zero).
#[inline]
pub fn quantize_value(v: f32) -> u8 {
    libm::roundf(v.clamp(0.0, 1.0) * 255.0) as u8
}

/// Clamp to `[0, 1]` and snap to 8-bit levels.
pub fn quantize(x: &Tensor) -> Tensor {
    x.map(|v| quantize_value(v) as f32 / 255.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegradationKind {
    BicubicDown { factor: usize },
    PseudoReal(PseudoReal),
    /// Capture geometry is drawn per image from the spec seed.
    Moire { supersample: usize, output_scale: f64 },
}

impl DegradationKind {
    /// Ratio of clean to degraded side length.
    pub fn factor(&self) -> f64 {
        match self {
            DegradationKind::BicubicDown { factor } => *factor as f64,
            DegradationKind::PseudoReal(p) => p.factor as f64,
            DegradationKind::Moire { output_scale, .. } => 1.0 / output_scale,
        }
    }
}

impl fmt::Display for DegradationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DegradationKind::BicubicDown { factor } => write!(f, "bicubic{factor}"),
            DegradationKind::PseudoReal(p) => write!(
                f,
                "pseudo_real:blur={},factor={},noise={},quantize={}",
                p.blur_sigma, p.factor, p.noise_sigma, p.quantize as u8
            ),
            DegradationKind::Moire {
                supersample,
                output_scale,
            } => write!(f, "moire:ss={supersample},scale={output_scale}"),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("degradation key `{key}`: bad value `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        _ => Err(Error::invalid(format!("degradation key `{key}`: bad value `{v}`"))),
    }
}

impl FromStr for DegradationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, args) = match s.split_once(':') {
            Some((h, a)) => (h, a),
            None => (s, ""),
        };
        let pairs = args.split(',').filter(|a| !a.is_empty()).map(|a| {
            a.split_once('=')
                .ok_or_else(|| Error::invalid(format!("degradation argument `{a}` needs key=value")))
        });
        let unknown = |k: &str| Err(Error::invalid(format!("unknown degradation key `{k}` for `{head}`")));
        let kind = match head {
            "bicubic2" | "bicubic4" if args.is_empty() => DegradationKind::BicubicDown {
                factor: if head == "bicubic2" { 2 } else { 4 },
            },
            "pseudo_real" => {
                let mut p = PseudoReal::default();
                for kv in pairs {
                    let (k, v) = kv?;
                    match k {
                        "blur" => p.blur_sigma = parse_num(k, v)?,
                        "factor" => p.factor = parse_num(k, v)?,
                        "noise" => p.noise_sigma = parse_num(k, v)?,
                        "quantize" => p.quantize = parse_bool(k, v)?,
                        _ => return unknown(k),
                    }
                }
                if !(p.blur_sigma >= 0.0 && p.noise_sigma >= 0.0) || !matches!(p.factor, 2 | 4) {
                    return Err(Error::invalid("pseudo_real needs sigmas >= 0 and factor 2 or 4"));
                }
                DegradationKind::PseudoReal(p)
            }
            "moire" => {
                let d = MoireParams::default();
                let (mut ss, mut scale) = (d.supersample, d.output_scale);
                for kv in pairs {
                    let (k, v) = kv?;
                    match k {
                        "ss" => ss = parse_num(k, v)?,
                        "scale" => scale = parse_num(k, v)?,
                        _ => return unknown(k),
                    }
                }
                let probe = MoireParams {
                    supersample: ss,
                    output_scale: scale,
                    ..d
                };
                probe.validate_public()?;
                DegradationKind::Moire {
                    supersample: ss,
                    output_scale: scale,
                }
            }
            _ => return Err(Error::invalid(format!("unknown degradation `{s}`"))),
        };
        Ok(kind)
    }
}

/// A degradation operator together with the seed of its random parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn new(kind: DegradationKind, seed: u64) -> Self {
        DegradationSpec { kind, seed }
    }

    /// Degrade `clean`. Returns `(degraded, target)` where `target` is the
    /// clean image aligned with the degraded one: `clean` itself except for
    /// the moiré simulator, whose target carries the capture geometry.
    pub fn apply(&self, clean: &Tensor) -> Result<(Tensor, Tensor)> {
        match self.kind {
            DegradationKind::BicubicDown { factor } => Ok((
                bicubic_resample(clean, factor, Direction::Down)?,
                clean.clone(),
            )),
            DegradationKind::PseudoReal(p) => {
                Ok((pseudo_real_degrade(clean, &p, self.seed)?, clean.clone()))
            }
            DegradationKind::Moire {
                supersample,
                output_scale,
            } => {
                let p = MoireParams::sample(self.seed, clean.w(), clean.h(), supersample, output_scale)?;
                synth_moire(clean, &p)
            }
        }
    }
}

impl fmt::Display for DegradationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (seed {})", self.kind, self.seed)
    }
}

/// Canonical spec string for `kind`.
pub fn describe(kind: &DegradationKind) -> String {
    format!("{kind}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_ties_away_from_zero() {
        // 0.5 / 255 sits exactly between levels 0 and 1.
        assert_eq!(quantize_value(0.5 / 255.0), 1);
        assert_eq!(quantize_value(1.49 / 255.0), 1);
        assert_eq!(quantize_value(-0.2), 0);
        assert_eq!(quantize_value(1.7), 255);
        let t = Tensor::from_vec([1, 1, 1, 3], alloc::vec![0.0, 128.0 / 255.0, 1.0]).unwrap();
        assert!(quantize(&t).bit_eq(&t));
    }

    #[test]
    fn gamma_round_trip() {
        let t = Tensor::from_fn([1, 1, 1, 11], |[_, _, _, x]| x as f32 / 10.0);
        let back = gamma_encode(&gamma_decode(&t));
        for (a, b) in back.data().iter().zip(t.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in [
            "bicubic4",
            "bicubic2",
            "pseudo_real:blur=1.2,factor=4,noise=0.01,quantize=1",
            "pseudo_real:blur=0,factor=2,noise=0,quantize=0",
            "moire:ss=6,scale=1",
            "moire:ss=9,scale=1.5",
        ] {
            let k: DegradationKind = s.parse().unwrap();
            assert_eq!(describe(&k), s);
        }
        let d: DegradationKind = "pseudo_real".parse().unwrap();
        assert_eq!(d, DegradationKind::PseudoReal(PseudoReal::default()));
        for bad in ["bicubic3", "pseudo_real:blur=-1", "pseudo_real:foo=1", "moire:ss=4", "", "bicubic4:x=1"] {
            assert!(bad.parse::<DegradationKind>().is_err(), "{bad}");
        }
    }

    #[test]
    fn pseudo_real_differs_from_bicubic_on_a_ramp() {
        let ramp = Tensor::from_fn([1, 3, 16, 16], |[_, c, y, x]| ((x + 2 * y + c) as f32 / 50.0).min(1.0));
        let real = DegradationSpec::new("pseudo_real".parse().unwrap(), 42).apply(&ramp).unwrap().0;
        let syn = DegradationSpec::new("bicubic4".parse().unwrap(), 42).apply(&ramp).unwrap().0;
        assert!(real.mean_abs_diff(&syn).unwrap() > 0.0);
    }
}
