//! Mask ingestion (8-bit PGM / PNG) and the SFLD float raster format.
//!
//! SFLD layout, little-endian: `b"SFLD"`, `u32` width, `u32` height,
//! `f32` sigma, then `width * height` `f32` values in row-major order.

use super::{FieldError, PixelFrame, ScalarField, SegmentMask};
use std::io::Write;
use std::path::Path;

const SFLD_MAGIC: &[u8; 4] = b"SFLD";

/// Loads a grayscale mask; nonzero pixels belong to the segment.
///
/// PGM headers may carry `# segment <id>` and `# origin_mm <x> <y>` comments.
/// Otherwise the id is the file stem and the origin is `(0, 0)`.
pub fn load_mask(path: impl AsRef<Path>, scale_mm_per_px: f64) -> Result<SegmentMask, FieldError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FieldError::Unreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "segment".into());
    read_mask_bytes(&bytes, &stem, scale_mm_per_px).map_err(|e| match e {
        FieldError::BadRaster(reason) => FieldError::Unreadable {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

pub fn read_mask_bytes(
    bytes: &[u8],
    default_id: &str,
    scale_mm_per_px: f64,
) -> Result<SegmentMask, FieldError> {
    if !(scale_mm_per_px > 0.0) {
        return Err(FieldError::InvalidScale(scale_mm_per_px));
    }
    if bytes.starts_with(b"P5") {
        let pgm = parse_pgm(bytes)?;
        let frame = PixelFrame {
            origin_mm: pgm.origin_mm.unwrap_or([0.0, 0.0]),
            scale_mm_per_px,
        };
        let id = pgm.segment.unwrap_or_else(|| default_id.to_string());
        let data = pgm.pixels.iter().map(|&v| v != 0).collect();
        SegmentMask::new(id, pgm.width, pgm.height, data, frame)
    } else if bytes.starts_with(b"P6") || bytes.starts_with(b"P3") {
        Err(FieldError::NotGrayscale("color PPM".into()))
    } else if bytes.starts_with(b"\x89PNG") {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| FieldError::BadRaster(e.to_string()))?;
        let gray = match img {
            image::DynamicImage::ImageLuma8(g) => g,
            other => return Err(FieldError::NotGrayscale(format!("{:?}", other.color()))),
        };
        let (w, h) = gray.dimensions();
        let data = gray.as_raw().iter().map(|&v| v != 0).collect();
        SegmentMask::new(
            default_id,
            w as usize,
            h as usize,
            data,
            PixelFrame {
                origin_mm: [0.0, 0.0],
                scale_mm_per_px,
            },
        )
    } else {
        Err(FieldError::BadRaster("unrecognized raster signature".into()))
    }
}

struct Pgm {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    segment: Option<String>,
    origin_mm: Option<[f64; 2]>,
}

fn parse_pgm(bytes: &[u8]) -> Result<Pgm, FieldError> {
    let bad = |m: &str| FieldError::BadRaster(m.to_string());
    let mut pos = 2;
    let mut tokens = Vec::with_capacity(3);
    let mut segment = None;
    let mut origin_mm = None;
    while tokens.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(bad("truncated PGM header"));
        }
        if bytes[pos] == b'#' {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(bytes.len(), |p| pos + p);
            let line = String::from_utf8_lossy(&bytes[pos + 1..end]);
            let mut words = line.split_whitespace();
            match words.next() {
                Some("segment") => segment = words.next().map(str::to_string),
                Some("origin_mm") => {
                    let v: Vec<f64> = words.filter_map(|w| w.parse().ok()).collect();
                    if v.len() == 2 {
                        origin_mm = Some([v[0], v[1]]);
                    }
                }
                _ => {}
            }
            pos = end;
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?;
        tokens.push(tok.parse::<usize>().map_err(|_| bad("bad header number"))?);
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    let (width, height, maxval) = (tokens[0], tokens[1], tokens[2]);
    if maxval == 0 || maxval > 255 {
        return Err(FieldError::NotGrayscale(format!(
            "PGM maxval {maxval} is not 8-bit"
        )));
    }
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(bad("truncated PGM raster"));
    }
    Ok(Pgm {
        width,
        height,
        pixels: bytes[pos..pos + n].to_vec(),
        segment,
        origin_mm,
    })
}

/// Writes a binary PGM with segment and origin comments.
pub fn write_pgm(mask: &SegmentMask, path: impl AsRef<Path>) -> Result<(), FieldError> {
    let mut out = Vec::with_capacity(mask.width() * mask.height() + 64);
    write!(
        out,
        "P5\n# segment {}\n# origin_mm {} {}\n{} {}\n255\n",
        mask.id,
        mask.frame.origin_mm[0],
        mask.frame.origin_mm[1],
        mask.width(),
        mask.height()
    )?;
    out.extend(mask.data().iter().map(|&v| if v { 255u8 } else { 0 }));
    std::fs::write(path, out)?;
    Ok(())
}

/// Decoded SFLD raster.
#[derive(Debug, Clone, PartialEq)]
pub struct SfldRaster {
    pub width: usize,
    pub height: usize,
    pub sigma: f32,
    pub values: Vec<f32>,
}

impl From<&ScalarField> for SfldRaster {
    fn from(field: &ScalarField) -> Self {
        SfldRaster {
            width: field.width(),
            height: field.height(),
            sigma: field.sigma as f32,
            values: field.values().iter().map(|&v| v as f32).collect(),
        }
    }
}

pub fn write_sfld(raster: &SfldRaster, path: impl AsRef<Path>) -> Result<(), FieldError> {
    let mut out = Vec::with_capacity(16 + 4 * raster.values.len());
    out.extend_from_slice(SFLD_MAGIC);
    out.extend_from_slice(&(raster.width as u32).to_le_bytes());
    out.extend_from_slice(&(raster.height as u32).to_le_bytes());
    out.extend_from_slice(&raster.sigma.to_le_bytes());
    for v in &raster.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_sfld(bytes: &[u8]) -> Result<SfldRaster, FieldError> {
    if bytes.len() < 16 || &bytes[..4] != SFLD_MAGIC {
        return Err(FieldError::BadRaster("missing SFLD header".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let width = u32_at(4) as usize;
    let height = u32_at(8) as usize;
    let sigma = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let n = width * height;
    if bytes.len() != 16 + 4 * n {
        return Err(FieldError::BadRaster(format!(
            "expected {} value bytes, found {}",
            4 * n,
            bytes.len() - 16
        )));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(SfldRaster {
        width,
        height,
        sigma,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
        let mut v = format!("P5\n# produced by hand\n{width} {height}\n255\n").into_bytes();
        v.extend_from_slice(pixels);
        v
    }

    #[test]
    fn center_pixel_pgm_has_one_set_pixel() {
        let mut px = vec![0u8; 25];
        px[12] = 255;
        let mask = read_mask_bytes(&pgm(5, 5, &px), "m", 0.1).unwrap();
        assert_eq!(mask.count(), 1);
        assert!(mask.get(2, 2));
        assert_eq!(mask.id, "m");
    }

    #[test]
    fn all_zero_pgm_is_empty() {
        let err = read_mask_bytes(&pgm(4, 4, &[0; 16]), "m", 1.0).unwrap_err();
        assert_eq!(err.to_string(), "empty mask");
    }

    #[test]
    fn header_comments_set_id_and_origin() {
        let mut v = b"P5\n# segment film07\n# origin_mm 12.5 -3\n2 1\n255\n".to_vec();
        v.extend_from_slice(&[0, 9]);
        let mask = read_mask_bytes(&v, "ignored", 0.25).unwrap();
        assert_eq!(mask.id, "film07");
        assert_eq!(mask.frame.origin_mm, [12.5, -3.0]);
        assert_eq!(mask.frame.scale_mm_per_px, 0.25);
    }

    #[test]
    fn color_inputs_are_rejected() {
        assert!(matches!(
            read_mask_bytes(b"P6\n1 1\n255\n\0\0\0", "m", 1.0),
            Err(FieldError::NotGrayscale(_))
        ));
        let rgb = image::RgbImage::from_pixel(2, 2, image::Rgb([255, 0, 0]));
        let mut png = Vec::new();
        rgb.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .unwrap();
        assert!(matches!(
            read_mask_bytes(&png, "m", 1.0),
            Err(FieldError::NotGrayscale(_))
        ));
    }

    #[test]
    fn grayscale_png_loads() {
        let mut g = image::GrayImage::new(3, 2);
        g.put_pixel(1, 1, image::Luma([200]));
        let mut png = Vec::new();
        g.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .unwrap();
        let mask = read_mask_bytes(&png, "p", 1.0).unwrap();
        assert_eq!((mask.width(), mask.height(), mask.count()), (3, 2, 1));
        assert!(mask.get(1, 1));
    }

    #[test]
    fn sixteen_bit_pgm_is_not_accepted() {
        let v = b"P5\n1 1\n65535\n\0\0".to_vec();
        assert!(matches!(
            read_mask_bytes(&v, "m", 1.0),
            Err(FieldError::NotGrayscale(_))
        ));
    }

    #[test]
    fn unreadable_path_names_the_file() {
        let err = load_mask("/nonexistent/mask.pgm", 1.0).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/mask.pgm"));
    }

    #[test]
    fn sfld_header_is_sixteen_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.sfld");
        let r = SfldRaster {
            width: 3,
            height: 2,
            sigma: 3.0,
            values: vec![0.0, 0.5, 1.0, 0.25, f32::NAN, 0.75],
        };
        write_sfld(&r, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(&bytes[..4], b"SFLD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(f32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3.0);
        let back = read_sfld(&bytes).unwrap();
        assert_eq!(back.values[1], 0.5);
        assert!(back.values[4].is_nan());
    }
}
