//! Image files: binary PGM (`P5`, maxval 255) and 8-bit PNG.
//!
//! Intensities are mapped `v / 255` on load and `round(v · 255)` on save.
//! Color PNGs are reduced to luma with Rec.601 weights.

use std::io::Cursor;
use std::path::Path;

use super::{CorpusError, Image};
use crate::fsutil::write_atomic;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Image container chosen from a file extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("pgm") => Ok(ImageFormat::Pgm),
            Some("png") => Ok(ImageFormat::Png),
            _ => Err(CorpusError::UnsupportedFormat(format!(
                "{}: expected a .pgm or .png extension",
                path.display()
            ))),
        }
    }
}

pub fn load_image(path: &Path) -> Result<Image, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes)
}

/// Decodes PGM or PNG bytes, sniffing the container from its signature.
pub fn decode_image(bytes: &[u8]) -> Result<Image, CorpusError> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P") && bytes.len() >= 2 && bytes[1].is_ascii_digit() {
        Err(CorpusError::UnsupportedFormat(format!(
            "netpbm variant P{} (only binary P5 is supported)",
            bytes[1] as char
        )))
    } else {
        Err(CorpusError::UnsupportedFormat("not a PGM (P5) or PNG file".into()))
    }
}

pub fn save_image(img: &Image, path: &Path) -> Result<(), CorpusError> {
    let bytes = encode_image(img, ImageFormat::from_path(path)?)?;
    write_atomic(path, &bytes).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn encode_image(img: &Image, format: ImageFormat) -> Result<Vec<u8>, CorpusError> {
    match format {
        ImageFormat::Pgm => Ok(encode_pgm(img)),
        ImageFormat::Png => encode_png(img),
    }
}

/// `round(v · 255)` clamped to the byte range.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn to_bytes(img: &Image) -> Vec<u8> {
    img.pixels().iter().map(|&v| quantize(v)).collect()
}

fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Image, CorpusError> {
    Image::new(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    /// Parses the next decimal field, returning it with its byte offset.
    fn number(&mut self, what: &str) -> Result<(usize, usize), CorpusError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(CorpusError::Header {
                offset: start,
                message: format!("expected {what}"),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map(|v| (v, start))
            .map_err(|_| CorpusError::Header {
                offset: start,
                message: format!("{what} does not fit in an integer"),
            })
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<Image, CorpusError> {
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let (width, _) = cur.number("width")?;
    let (height, _) = cur.number("height")?;
    let (maxval, maxval_offset) = cur.number("maxval")?;
    if maxval != 255 {
        return Err(CorpusError::Header {
            offset: maxval_offset,
            message: format!("maxval {maxval} is not supported (only 255)"),
        });
    }
    if width == 0 || height == 0 {
        return Err(CorpusError::Header {
            offset: 2,
            message: format!("zero dimension {width}x{height}"),
        });
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(CorpusError::Header {
                offset: cur.pos,
                message: "expected whitespace after maxval".into(),
            })
        }
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| CorpusError::Header {
            offset: 2,
            message: "image dimensions overflow".into(),
        })?;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(CorpusError::Truncated {
            offset: bytes.len(),
            expected,
            actual: payload.len(),
        });
    }
    from_bytes(width, height, &payload[..expected])
}

fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(to_bytes(img));
    out
}

fn luma601(r: u8, g: u8, b: u8) -> f64 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
}

fn decode_png(bytes: &[u8]) -> Result<Image, CorpusError> {
    let png_err = |e: png::DecodingError| CorpusError::Png(e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| CorpusError::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(CorpusError::UnsupportedFormat(format!(
            "PNG bit depth {:?} (only 8-bit is supported)",
            info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(CorpusError::UnsupportedFormat("unexpanded palette PNG".into()))
        }
    };
    let mut pixels = Vec::with_capacity(width * height);
    for row in buf.chunks(info.line_size).take(height) {
        for px in row[..width * channels].chunks(channels) {
            let v = match channels {
                1 | 2 => px[0] as f64 / 255.0,
                _ => luma601(px[0], px[1], px[2]).clamp(0.0, 1.0),
            };
            pixels.push(v);
        }
    }
    Image::new(width, height, pixels)
}

fn encode_png(img: &Image) -> Result<Vec<u8>, CorpusError> {
    let png_err = |e: png::EncodingError| CorpusError::Png(e.to_string());
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(png_err)?;
        writer.write_image_data(&to_bytes(img)).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(out)
}
