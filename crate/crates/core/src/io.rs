//! 8-bit gray-scale image files: PGM (ASCII `P2` and binary `P5`) and PNG.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{clamp_unit, Image};

/// Refuse headers claiming more pixels than this.
const MAX_PIXELS: u64 = 1 << 30;

/// On-disk encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    PgmAscii,
    PgmBinary,
    Png,
}

impl ImageFormat {
    /// `.png` selects PNG, `.pgm`/`.pnm` select binary PGM.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("png") => Ok(ImageFormat::Png),
            Some("pgm") | Some("pnm") => Ok(ImageFormat::PgmBinary),
            other => Err(Error::UnsupportedFormat(format!(
                "cannot infer format from extension {other:?} of {}",
                path.display()
            ))),
        }
    }
}

/// Quantize a normalized intensity to 8 bits: `round(v * 255)` clipped.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (clamp_unit(v) * 255.0).round() as u8
}

/// Load a PGM (`P2`/`P5`) or 8-bit gray PNG, sniffing the magic bytes.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| e.context(format!("loading {}", path.display())))
}

/// Decode an in-memory PGM or PNG file.
pub fn decode(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else {
        Err(Error::UnsupportedFormat(
            "expected PGM (P2/P5) or PNG signature".into(),
        ))
    }
}

/// Save with the format implied by the path's extension.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    save_image_as(img, path, ImageFormat::from_path(path)?)
}

pub fn save_image_as(img: &Image, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(img, format)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn encode(img: &Image, format: ImageFormat) -> Result<Vec<u8>> {
    let pixels: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let (w, h) = img.dims();
    match format {
        ImageFormat::PgmBinary => {
            let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(&pixels);
            Ok(out)
        }
        ImageFormat::PgmAscii => {
            let mut out = format!("P2\n{w} {h}\n255\n");
            for row in pixels.chunks(w) {
                let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            Ok(out.into_bytes())
        }
        ImageFormat::Png => {
            let mut out = Vec::new();
            {
                let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
                enc.set_color(png::ColorType::Grayscale);
                enc.set_depth(png::BitDepth::Eight);
                let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
                writer
                    .write_image_data(&pixels)
                    .map_err(|e| Error::Png(e.to_string()))?;
                writer.finish().map_err(|e| Error::Png(e.to_string()))?;
            }
            Ok(out)
        }
    }
}

fn checked_dims(width: u64, height: u64) -> Result<(usize, usize)> {
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    match width.checked_mul(height) {
        Some(n) if n <= MAX_PIXELS => Ok((width as usize, height as usize)),
        _ => Err(Error::DimensionOverflow { width, height }),
    }
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let info = reader.info();
    let (w, h) = checked_dims(info.width as u64, info.height as u64)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedBitDepth(format!(
            "png bit depth {:?}, expected 8",
            info.bit_depth
        )));
    }
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::UnsupportedFormat(format!(
            "png color type {:?}, expected grayscale",
            info.color_type
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::DimensionOverflow {
            width: w as u64,
            height: h as u64,
        })?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Png(e.to_string()))?;
    let stride = frame.line_size;
    let mut data = Vec::with_capacity(w * h);
    for row in buf.chunks(stride).take(h) {
        data.extend(row[..w].iter().map(|&b| b as f64 / 255.0));
    }
    Image::from_vec(w, h, data)
}

/// Whitespace/comment-aware tokenizer for the PNM header.
struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self, what: &str) -> Result<u64> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("{what} out of range")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let binary = bytes[1] == b'5';
    let mut hdr = HeaderReader { bytes, pos: 2 };
    let width = hdr.next_uint("width")?;
    let height = hdr.next_uint("height")?;
    let maxval = hdr.next_uint("maxval")?;
    let (w, h) = checked_dims(width, height)?;
    if maxval == 0 {
        return Err(Error::MalformedHeader("maxval must be positive".into()));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedBitDepth(format!(
            "pgm maxval {maxval}, only 8-bit supported"
        )));
    }
    let scale = maxval as f64;
    let n = w * h;
    let data = if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        match bytes.get(hdr.pos) {
            Some(b) if b.is_ascii_whitespace() => {}
            _ => return Err(Error::MalformedHeader("missing raster separator".into())),
        }
        let raster = &bytes[hdr.pos + 1..];
        if raster.len() < n {
            return Err(Error::MalformedHeader(format!(
                "raster truncated: {} of {n} bytes",
                raster.len()
            )));
        }
        raster[..n].iter().map(|&b| b as f64 / scale).collect()
    } else {
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let v = hdr.next_uint("pixel value")?;
            if v > maxval {
                return Err(Error::MalformedHeader(format!(
                    "pixel value {v} exceeds maxval {maxval}"
                )));
            }
            data.push(v as f64 / scale);
        }
        data
    };
    Image::from_vec(w, h, data)
}
