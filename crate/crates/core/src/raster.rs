//! Multi-channel rasters with a validity mask, plus the FMAP and PNG codecs.
//!
//! FMAP layout (all integers and floats little-endian):
//!
//! ```text
//! "FMAP" | width: u32 | height: u32 | channels: u32 | width*height*channels f32 (row-major,
//! channel-interleaved) | validity bitmask, ceil(width*height/8) bytes, pixel i at bit (i % 8)
//! of byte (i / 8)
//! ```

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

const FMAP_MAGIC: &[u8; 4] = b"FMAP";

/// H×W×C raster of reals with a per-pixel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
    mask: Vec<bool>,
}

impl<T: Real> Raster<T> {
    /// Builds a raster, checking lengths and finiteness at valid pixels.
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<T>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Validation("raster needs at least one channel".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::Validation(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if mask.len() != width * height {
            return Err(Error::Validation(format!(
                "mask length {} != {}x{}",
                mask.len(),
                width,
                height
            )));
        }
        let r = Raster {
            width,
            height,
            channels,
            data,
            mask,
        };
        if let Some(i) = r.first_non_finite() {
            return Err(Error::NonFinite(i));
        }
        Ok(r)
    }

    /// Fully valid raster filled with `value`.
    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
            mask: vec![true; width * height],
        }
    }

    /// Fully valid raster with values from `f(x, y, c)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Raster {
            width,
            height,
            channels,
            data,
            mask: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Raw mutable access; callers must keep values finite at valid pixels.
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn mask_mut(&mut self) -> &mut [bool] {
        &mut self.mask
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        let ch = self.channels;
        self.data[(y * self.width + x) * ch + c] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [T] {
        let ch = self.channels;
        let i = (y * self.width + x) * ch;
        &mut self.data[i..i + ch]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Index (into `data`) of the first non-finite value at a valid pixel.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data
            .chunks(self.channels)
            .zip(&self.mask)
            .enumerate()
            .find_map(|(p, (px, &valid))| {
                if !valid {
                    return None;
                }
                px.iter()
                    .position(|v| !v.is_finite())
                    .map(|c| p * self.channels + c)
            })
    }

    pub fn cast<U: Real>(&self) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self
                .data
                .iter()
                .map(|&v| U::lit(v.to_f64_lossy()))
                .collect(),
            mask: self.mask.clone(),
        }
    }

    /// Single-channel luminance (Rec. 601 weights for three channels; other
    /// channel counts are averaged).
    pub fn luminance(&self) -> Raster<T> {
        if self.channels == 1 {
            return self.clone();
        }
        let weights: Vec<T> = if self.channels == 3 {
            vec![T::lit(0.299), T::lit(0.587), T::lit(0.114)]
        } else {
            vec![T::one() / T::count(self.channels); self.channels]
        };
        let data = self
            .data
            .chunks(self.channels)
            .map(|px| px.iter().zip(&weights).map(|(&v, &w)| v * w).sum())
            .collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
            mask: self.mask.clone(),
        }
    }

    /// Returns the map with every value transformed by `f`.
    pub fn map(&self, f: impl Fn(T) -> T) -> Raster<T> {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
            mask: self.mask.clone(),
        }
    }

    /// (min, max) over valid pixels, or `None` when nothing is valid.
    pub fn valid_range(&self) -> Option<(T, T)> {
        let mut out: Option<(T, T)> = None;
        for (px, &m) in self.data.chunks(self.channels).zip(&self.mask) {
            if !m {
                continue;
            }
            for &v in px {
                out = Some(match out {
                    None => (v, v),
                    Some((lo, hi)) => (lo.min(v), hi.max(v)),
                });
            }
        }
        out
    }

    /// Extracts one channel as a single-channel raster.
    pub fn channel(&self, c: usize) -> Raster<T> {
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().skip(c).step_by(self.channels).copied().collect(),
            mask: self.mask.clone(),
        }
    }
}

/// Serializes a raster into FMAP bytes. Values are narrowed to `f32`.
pub fn encode_fmap<T: Real>(map: &Raster<T>) -> Result<Vec<u8>> {
    if let Some(i) = map.first_non_finite() {
        return Err(Error::NonFinite(i));
    }
    let n_px = map.width * map.height;
    let mut out = Vec::with_capacity(16 + map.data.len() * 4 + n_px.div_ceil(8));
    out.extend_from_slice(FMAP_MAGIC);
    for dim in [map.width, map.height, map.channels] {
        let d = u32::try_from(dim)
            .map_err(|_| Error::Validation(format!("dimension {dim} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in &map.data {
        out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
    }
    let mut bits = vec![0u8; n_px.div_ceil(8)];
    for (i, &m) in map.mask.iter().enumerate() {
        if m {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&bits);
    Ok(out)
}

/// Parses FMAP bytes.
pub fn decode_fmap<T: Real>(bytes: &[u8]) -> Result<Raster<T>> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: 16,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != FMAP_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < 16 {
        return Err(Error::Truncated {
            expected: 16,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (width, height, channels) = (word(4), word(8), word(12));
    let n_px = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse("fmap header", "dimensions overflow"))?;
    let n_val = n_px
        .checked_mul(channels)
        .ok_or_else(|| Error::parse("fmap header", "dimensions overflow"))?;
    let expected = 16 + n_val * 4 + n_px.div_ceil(8);
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::parse(
            "fmap payload",
            format!("{} trailing bytes", bytes.len() - expected),
        ));
    }
    let data = bytes[16..16 + n_val * 4]
        .chunks_exact(4)
        .map(|b| T::widen_f32(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    let bits = &bytes[16 + n_val * 4..];
    let mask = (0..n_px).map(|i| bits[i / 8] & (1 << (i % 8)) != 0).collect();
    Raster::new(width, height, channels, data, mask)
}

pub fn write_fmap<T: Real>(map: &Raster<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_fmap(map)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_fmap<T: Real>(path: impl AsRef<Path>) -> Result<Raster<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fmap(&bytes)
}

/// 8-bit PNG payload: dimensions, channel count (1, 2, 3 or 4) and samples.
pub(crate) struct Png8 {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub samples: Vec<u8>,
}

pub(crate) fn read_png8(path: &Path) -> Result<Png8> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {:?}-bit PNG, only 8-bit is supported",
            path.display(),
            info.bit_depth as u8
        )));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: indexed PNG",
                path.display()
            )))
        }
    };
    let (width, height) = (info.width as usize, info.height as usize);
    let mut samples = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader
        .next_frame(&mut samples)
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    samples.truncate(frame.buffer_size());
    Ok(Png8 {
        width,
        height,
        channels,
        samples,
    })
}

pub(crate) fn write_png8(path: &Path, png8: &Png8) -> Result<()> {
    let color = match png8.channels {
        1 => png::ColorType::Grayscale,
        2 => png::ColorType::GrayscaleAlpha,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        c => return Err(Error::UnsupportedFormat(format!("{c}-channel PNG"))),
    };
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        png8.width as u32,
        png8.height as u32,
    );
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let encode_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::Decode(other.to_string()),
    };
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(&png8.samples).map_err(encode_err)?;
    writer.finish().map_err(encode_err)?;
    Ok(())
}

/// Decodes an 8-bit grayscale or RGB PNG into `[0, 1]` floats with a full mask.
pub fn load_image(path: impl AsRef<Path>) -> Result<Raster<f32>> {
    let path = path.as_ref();
    let png8 = read_png8(path)?;
    if png8.channels != 1 && png8.channels != 3 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {}-channel PNG, expected grayscale or RGB",
            path.display(),
            png8.channels
        )));
    }
    let data = png8.samples.iter().map(|&b| b as f32 / 255.0).collect();
    Raster::new(
        png8.width,
        png8.height,
        png8.channels,
        data,
        vec![true; png8.width * png8.height],
    )
}

/// Quantizes `[0, 1]` values to 8 bits (clamped, rounded) and writes a PNG.
/// Invalid pixels are written as 0.
pub fn save_image<T: Real>(map: &Raster<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if map.channels != 1 && map.channels != 3 {
        return Err(Error::UnsupportedFormat(format!(
            "cannot save {}-channel raster as PNG",
            map.channels
        )));
    }
    let samples = map
        .data
        .chunks(map.channels)
        .zip(&map.mask)
        .flat_map(|(px, &m)| {
            px.iter().map(move |&v| {
                if m {
                    quantize_u8(v.to_f64_lossy())
                } else {
                    0
                }
            })
        })
        .collect();
    write_png8(
        path,
        &Png8 {
            width: map.width,
            height: map.height,
            channels: map.channels,
            samples,
        },
    )
}

/// `round(clamp(v, 0, 1) * 255)`.
pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
