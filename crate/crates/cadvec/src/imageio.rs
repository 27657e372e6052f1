//! Reading and writing the raster formats the tools accept: PGM (both the
//! ASCII `P2` and binary `P5` flavors) and 8-bit grayscale PNG.

use std::fs;
use std::io;
use std::path::Path;

use crate::raster::GrayRaster;

#[derive(Debug, thiserror::Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not a PGM file (magic {0:?})")]
    BadMagic(String),
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("PGM maxval {0} out of range (1..=255 supported)")]
    BadMaxval(u32),
    #[error("PGM sample value {value} exceeds maxval {maxval}")]
    SampleOutOfRange { value: u32, maxval: u32 },
    #[error("truncated PGM data: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("png decode failed: {0}")]
    Png(String),
    #[error("png must be 8-bit grayscale, got {0}")]
    PngColorType(String),
    #[error("unsupported image extension {0:?} (use .pgm or .png)")]
    UnknownExtension(String),
    #[error("image dimensions {width}x{height} are empty")]
    EmptyImage { width: u32, height: u32 },
}

/// Pulls whitespace-separated header tokens, skipping `#` comments that run
/// to end of line. Returns the token and the offset just past it.
fn next_token(bytes: &[u8], mut pos: usize) -> Result<(String, usize), ImageIoError> {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        break;
    }
    let start = pos;
    while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
        pos += 1;
    }
    if start == pos {
        return Err(ImageIoError::BadHeader("unexpected end of header".into()));
    }
    let tok = std::str::from_utf8(&bytes[start..pos])
        .map_err(|_| ImageIoError::BadHeader("non-ASCII header token".into()))?
        .to_string();
    Ok((tok, pos))
}

fn parse_header_number(tok: &str) -> Result<u32, ImageIoError> {
    tok.parse::<u32>()
        .map_err(|_| ImageIoError::BadHeader(format!("expected number, got {tok:?}")))
}

/// Decodes a PGM image from memory. Handles `P2` (ASCII) and `P5` (binary)
/// with maxval up to 255; sample values are kept exactly as stored.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayRaster, ImageIoError> {
    let (magic, pos) = next_token(bytes, 0)?;
    if magic != "P2" && magic != "P5" {
        return Err(ImageIoError::BadMagic(magic));
    }
    let (w_tok, pos) = next_token(bytes, pos)?;
    let (h_tok, pos) = next_token(bytes, pos)?;
    let (max_tok, pos) = next_token(bytes, pos)?;
    let width = parse_header_number(&w_tok)?;
    let height = parse_header_number(&h_tok)?;
    let maxval = parse_header_number(&max_tok)?;
    if width == 0 || height == 0 {
        return Err(ImageIoError::EmptyImage { width, height });
    }
    if maxval == 0 || maxval > 255 {
        return Err(ImageIoError::BadMaxval(maxval));
    }
    let expected = width as usize * height as usize;
    let mut samples = Vec::with_capacity(expected);

    if magic == "P5" {
        // Exactly one whitespace byte separates the header from raster data.
        let data_start = pos + 1;
        if data_start > bytes.len() {
            return Err(ImageIoError::Truncated { expected, found: 0 });
        }
        let data = &bytes[data_start..];
        if data.len() < expected {
            return Err(ImageIoError::Truncated {
                expected,
                found: data.len(),
            });
        }
        for &b in &data[..expected] {
            if b as u32 > maxval {
                return Err(ImageIoError::SampleOutOfRange {
                    value: b as u32,
                    maxval,
                });
            }
            samples.push(b);
        }
    } else {
        let mut cursor = pos;
        for _ in 0..expected {
            let (tok, next) = next_token(bytes, cursor).map_err(|_| ImageIoError::Truncated {
                expected,
                found: samples.len(),
            })?;
            cursor = next;
            let v = parse_header_number(&tok)?;
            if v > maxval {
                return Err(ImageIoError::SampleOutOfRange { value: v, maxval });
            }
            samples.push(v as u8);
        }
    }
    Ok(GrayRaster::from_samples(width, height, samples))
}

/// Encodes a raster as binary `P5` PGM with maxval 255.
pub fn write_pgm_binary(img: &GrayRaster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.samples());
    out
}

/// Encodes a raster as ASCII `P2` PGM, one image row per line.
pub fn write_pgm_ascii(img: &GrayRaster) -> Vec<u8> {
    let mut out = format!("P2\n{} {}\n255\n", img.width(), img.height());
    for row in 0..img.height() {
        let mut line = String::new();
        for col in 0..img.width() {
            if col > 0 {
                line.push(' ');
            }
            line.push_str(&img.get(row, col).to_string());
        }
        out.push_str(&line);
        out.push('\n');
    }
    out.into_bytes()
}

/// Decodes an 8-bit grayscale PNG from memory. Any other color type or bit
/// depth is rejected rather than silently converted.
pub fn read_png(bytes: &[u8]) -> Result<GrayRaster, ImageIoError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ImageIoError::Png(e.to_string()))?;
    match img {
        image::DynamicImage::ImageLuma8(gray) => {
            let (width, height) = (gray.width(), gray.height());
            if width == 0 || height == 0 {
                return Err(ImageIoError::EmptyImage { width, height });
            }
            Ok(GrayRaster::from_samples(width, height, gray.into_raw()))
        }
        other => Err(ImageIoError::PngColorType(format!("{:?}", other.color()))),
    }
}

/// Encodes a raster as an 8-bit grayscale PNG.
pub fn write_png(img: &GrayRaster) -> Result<Vec<u8>, ImageIoError> {
    let buf = image::GrayImage::from_raw(img.width(), img.height(), img.samples().to_vec())
        .expect("raster dimensions match sample count");
    let mut out = Vec::new();
    image::DynamicImage::ImageLuma8(buf)
        .write_to(&mut io::Cursor::new(&mut out), image::ImageFormat::Png)
        .map_err(|e| ImageIoError::Png(e.to_string()))?;
    Ok(out)
}

/// Loads a grayscale image, dispatching on the file extension (`.pgm` or
/// `.png`, case-insensitive).
pub fn load_gray(path: &Path) -> Result<GrayRaster, ImageIoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = fs::read(path).map_err(|source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match ext.as_str() {
        "pgm" => read_pgm(&bytes),
        "png" => read_png(&bytes),
        other => Err(ImageIoError::UnknownExtension(other.to_string())),
    }
}

/// Saves a grayscale image, dispatching on the file extension. PGM output
/// uses the binary `P5` flavor.
pub fn save_gray(path: &Path, img: &GrayRaster) -> Result<(), ImageIoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "pgm" => write_pgm_binary(img),
        "png" => write_png(img)?,
        other => return Err(ImageIoError::UnknownExtension(other.to_string())),
    };
    fs::write(path, bytes).map_err(|source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    })
}
