//! Image files.
//!
//! 8-bit images use binary portable pixmaps: P6 for RGB, P5 for grayscale,
//! maxval 255. Reading maps byte `v` to `v / 255`; writing quantizes with
//! round-half-away-from-zero after clamping to `[0, 1]`, so
//! `read(write(x)) == quantize(x)`.
//!
//! Unquantized images (surrogate targets) use portable float maps: `PF`
//! (RGB) or `Pf` (gray), 32-bit floats, little-endian when the scale line is
//! negative, rows stored bottom to top.

use std::fs;
use std::path::Path;

use surrogate_core::degrade::quantize_value;
use surrogate_core::Tensor;

use crate::error::{Error, ImageError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Gray8,
    Rgb8,
    GrayF32,
    RgbF32,
}

impl Kind {
    fn channels(self) -> usize {
        match self {
            Kind::Gray8 | Kind::GrayF32 => 1,
            Kind::Rgb8 | Kind::RgbF32 => 3,
        }
    }
}

struct Header {
    kind: Kind,
    width: usize,
    height: usize,
    /// Maxval for pixmaps, scale for float maps.
    last: String,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> std::result::Result<Header, ImageError> {
    let magic = bytes.get(..2).ok_or_else(|| ImageError::MalformedHeader("file too short".into()))?;
    let kind = match magic {
        b"P5" => Kind::Gray8,
        b"P6" => Kind::Rgb8,
        b"Pf" => Kind::GrayF32,
        b"PF" => Kind::RgbF32,
        other => return Err(ImageError::BadMagic(String::from_utf8_lossy(other).into_owned())),
    };
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        match bytes.get(pos) {
            None => return Err(ImageError::MalformedHeader("header ends early".into())),
            Some(b'#') => {
                while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                    pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(_) => {
                let start = pos;
                while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
                    pos += 1;
                }
                fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
            }
        }
    }
    // Exactly one whitespace byte separates the header from the data.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::MalformedHeader("missing separator before data".into())),
    }
    let dim = |s: &str, what: &str| -> std::result::Result<usize, ImageError> {
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(ImageError::MalformedHeader(format!("bad {what} `{s}`"))),
        }
    };
    let width = dim(&fields[0], "width")?;
    let height = dim(&fields[1], "height")?;
    Ok(Header {
        kind,
        width,
        height,
        last: fields.pop().expect("three fields"),
        data_start: pos,
    })
}

fn payload(bytes: &[u8], start: usize, expected: usize) -> std::result::Result<&[u8], ImageError> {
    let data = &bytes[start..];
    if data.len() < expected {
        return Err(ImageError::Truncated {
            expected,
            found: data.len(),
        });
    }
    if data.len() > expected {
        return Err(ImageError::TrailingBytes(data.len() - expected));
    }
    Ok(data)
}

/// Decode a P5/P6/Pf/PF file into a `(1, c, h, w)` tensor.
pub fn decode(bytes: &[u8]) -> std::result::Result<Tensor, ImageError> {
    let h = parse_header(bytes)?;
    let c = h.kind.channels();
    let (width, height) = (h.width, h.height);
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| ImageError::MalformedHeader("image dimensions overflow".into()))?;
    let mut t = Tensor::zeros([1, c, height, width]);
    match h.kind {
        Kind::Gray8 | Kind::Rgb8 => {
            let maxval: u32 = h
                .last
                .parse()
                .map_err(|_| ImageError::MalformedHeader(format!("bad maxval `{}`", h.last)))?;
            if maxval != 255 {
                return Err(ImageError::UnsupportedMaxval(maxval));
            }
            let data = payload(bytes, h.data_start, count)?;
            for (i, &v) in data.iter().enumerate() {
                let (p, ch) = (i / c, i % c);
                t.set([0, ch, p / width, p % width], v as f32 / 255.0);
            }
        }
        Kind::GrayF32 | Kind::RgbF32 => {
            let scale: f32 = h
                .last
                .parse()
                .map_err(|_| ImageError::MalformedHeader(format!("bad scale `{}`", h.last)))?;
            if scale == 0.0 || !scale.is_finite() {
                return Err(ImageError::MalformedHeader(format!("bad scale `{}`", h.last)));
            }
            let data = payload(bytes, h.data_start, count * 4)?;
            for (i, b) in data.chunks_exact(4).enumerate() {
                let b: [u8; 4] = b.try_into().expect("4 bytes");
                let v = if scale < 0.0 {
                    f32::from_le_bytes(b)
                } else {
                    f32::from_be_bytes(b)
                };
                let (p, ch) = (i / c, i % c);
                let (row, x) = (p / width, p % width);
                t.set([0, ch, height - 1 - row, x], v);
            }
        }
    }
    Ok(t)
}

fn check_image(image: &Tensor) -> std::result::Result<[usize; 3], ImageError> {
    match image.shape() {
        [1, c @ (1 | 3), h, w] if h > 0 && w > 0 => Ok([c, h, w]),
        other => Err(ImageError::Shape(other)),
    }
}

/// Encode as P6 (3 channels) or P5 (1 channel), quantizing to 8 bits.
pub fn encode_pixmap(image: &Tensor) -> std::result::Result<Vec<u8>, ImageError> {
    let [c, h, w] = check_image(image)?;
    let magic = if c == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.reserve(c * h * w);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push(quantize_value(image.at([0, ch, y, x])));
            }
        }
    }
    Ok(out)
}

/// Encode as a little-endian float map, bit-exact.
pub fn encode_floatmap(image: &Tensor) -> std::result::Result<Vec<u8>, ImageError> {
    let [c, h, w] = check_image(image)?;
    let magic = if c == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * c * h * w);
    for y in (0..h).rev() {
        for x in 0..w {
            for ch in 0..c {
                out.extend_from_slice(&image.at([0, ch, y, x]).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn read_image(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

/// Write as a float map when the extension is `.pfm`, else as a pixmap.
pub fn write_image(image: &Tensor, path: &Path) -> Result<()> {
    let encoded = if is_floatmap(path) {
        encode_floatmap(image)
    } else {
        encode_pixmap(image)
    };
    let bytes = encoded.map_err(|source| Error::Image {
        path: path.into(),
        source,
    })?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn is_floatmap(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
}

/// Whether `path` has an image extension this module reads.
pub fn is_image_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| {
        ["ppm", "pgm", "pnm", "pfm"]
            .iter()
            .any(|x| e.eq_ignore_ascii_case(x))
    })
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image_path(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_known_bytes() {
        let mut f = b"P6\n2 1\n255\n".to_vec();
        f.extend_from_slice(&[0, 128, 255, 255, 0, 128]);
        let t = decode(&f).unwrap();
        assert_eq!(t.shape(), [1, 3, 1, 2]);
        assert_eq!(t.at([0, 0, 0, 0]), 0.0);
        assert_eq!(t.at([0, 1, 0, 0]), 128.0 / 255.0);
        assert_eq!(t.at([0, 2, 0, 0]), 1.0);
        assert_eq!(t.at([0, 0, 0, 1]), 1.0);
    }

    #[test]
    fn gray_and_comments() {
        let mut f = b"P5 # gray\n2 2 # size\n255\n".to_vec();
        f.extend_from_slice(&[0, 128, 255, 1]);
        let t = decode(&f).unwrap();
        assert_eq!(t.shape(), [1, 1, 2, 2]);
        assert_eq!(t.at([0, 0, 1, 0]), 1.0);
        assert_eq!(encode_pixmap(&t).unwrap()[..2], *b"P5");
    }

    #[test]
    fn rejects_malformed_files() {
        assert_eq!(decode(b"P3\n1 1\n255\n0 0 0").unwrap_err(), ImageError::BadMagic("P3".into()));
        assert_eq!(decode(b"P6\n1 1\n65535\n\0\0\0").unwrap_err(), ImageError::UnsupportedMaxval(65535));
        assert_eq!(
            decode(b"P6\n2 1\n255\n\0\0\0").unwrap_err(),
            ImageError::Truncated { expected: 6, found: 3 }
        );
        assert!(matches!(decode(b"P6\n2\n"), Err(ImageError::MalformedHeader(_))));
        assert!(matches!(decode(b"P6\n0 1\n255\n"), Err(ImageError::MalformedHeader(_))));
        assert_eq!(decode(b"P5\n1 1\n255\n\0\0").unwrap_err(), ImageError::TrailingBytes(1));
    }

    #[test]
    fn quantized_round_trip_is_byte_identical() {
        let t = Tensor::from_fn([1, 3, 5, 7], |[_, c, y, x]| ((c * 37 + y * 11 + x * 5) % 256) as f32 / 255.0);
        let bytes = encode_pixmap(&t).unwrap();
        let back = decode(&bytes).unwrap();
        assert!(back.bit_eq(&t));
        assert_eq!(encode_pixmap(&back).unwrap(), bytes);
    }

    #[test]
    fn floatmap_is_bit_exact_and_bottom_up() {
        let t = Tensor::from_fn([1, 3, 2, 3], |[_, c, y, x]| -0.3 + (c + 10 * y + 100 * x) as f32 * 0.0173);
        let bytes = encode_floatmap(&t).unwrap();
        assert!(decode(&bytes).unwrap().bit_eq(&t));
        let start = b"PF\n3 2\n-1.0\n".len();
        let first = f32::from_le_bytes(bytes[start..start + 4].try_into().unwrap());
        assert_eq!(first, t.at([0, 0, 1, 0]));
    }

    #[test]
    fn big_endian_floatmap() {
        let mut f = b"Pf\n1 1\n1.0\n".to_vec();
        f.extend_from_slice(&0.25f32.to_be_bytes());
        assert_eq!(decode(&f).unwrap().at([0, 0, 0, 0]), 0.25);
    }

    #[test]
    fn rejects_batches() {
        assert_eq!(
            encode_pixmap(&Tensor::zeros([2, 3, 1, 1])).unwrap_err(),
            ImageError::Shape([2, 3, 1, 1])
        );
    }
}
