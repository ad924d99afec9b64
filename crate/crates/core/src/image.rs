//! Pixel rasters and their file formats.
//!
//! Intensities are stored as `u8` in `[0, 255]` everywhere in the crate
//! ([`INTENSITY_REPR`] is written into every serialized header that carries
//! pixel-derived values). Rows are contiguous, channels interleaved.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Repo-wide pixel representation flag.
pub const INTENSITY_REPR: &str = "u8-0-255";

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("invalid image shape {height}x{width}x{channels} for {len} samples")]
    InvalidShape {
        height: usize,
        width: usize,
        channels: usize,
        len: usize,
    },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),
    #[error("image i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

/// An `H x W x C` raster with `C` in `{1, 3}`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageGrid")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::UnsupportedChannels(channels));
        }
        if height == 0 || width == 0 || data.len() != height * width * channels {
            return Err(ImageError::InvalidShape {
                height,
                width,
                channels,
                len: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Constant-valued image.
    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds a single-channel image from `f(row, col)`.
    pub fn from_fn_gray(height: usize, width: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, 1, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.data[self.index(row, col, channel)]
    }

    /// Per-pixel channel mean as `f64`, row-major, length `H * W`.
    pub fn luminance(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.iter().map(|&v| f64::from(v)).collect();
        }
        self.data
            .chunks_exact(self.channels)
            .map(|px| px.iter().map(|&v| f64::from(v)).sum::<f64>() / self.channels as f64)
            .collect()
    }

    /// Copies the `rows x cols` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, rows: usize, cols: usize) -> Result<Self, ImageError> {
        if top + rows > self.height || left + cols > self.width {
            return Err(ImageError::InvalidShape {
                height: rows,
                width: cols,
                channels: self.channels,
                len: 0,
            });
        }
        let row_len = cols * self.channels;
        let mut data = Vec::with_capacity(rows * row_len);
        for r in top..top + rows {
            let start = self.index(r, left, 0);
            data.extend_from_slice(&self.data[start..start + row_len]);
        }
        Self::new(rows, cols, self.channels, data)
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        match self.channels {
            1 => DynamicImage::ImageLuma8(
                GrayImage::from_raw(w, h, self.data.clone()).expect("shape checked at construction"),
            ),
            _ => DynamicImage::ImageRgb8(
                RgbImage::from_raw(w, h, self.data.clone()).expect("shape checked at construction"),
            ),
        }
    }

    /// Converts a decoded image; anything that is not 8-bit gray becomes RGB8.
    pub fn from_dynamic(img: DynamicImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            DynamicImage::ImageLuma8(g) => Self::new(h, w, 1, g.into_raw()),
            other => Self::new(h, w, 3, other.to_rgb8().into_raw()),
        }
        .expect("decoder output has a consistent shape")
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        Ok(Self::from_dynamic(image::load_from_memory(bytes)?))
    }

    /// Reads PNG, binary PPM (P6) or PGM (P5), chosen by content.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes)
    }

    /// Writes by extension: `.png`, `.ppm`/`.pgm`/`.pnm` (binary netpbm).
    /// Gray images written as `.ppm` are still stored as P5.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        let format = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("ppm" | "pgm" | "pnm") => ImageFormat::Pnm,
            _ => ImageFormat::Png,
        };
        let bytes = self.encode(format)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn encode(&self, format: ImageFormat) -> Result<Vec<u8>, ImageError> {
        let mut out = std::io::Cursor::new(Vec::new());
        if format == ImageFormat::Pnm {
            use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
            let subtype = match self.channels {
                1 => PnmSubtype::Graymap(SampleEncoding::Binary),
                _ => PnmSubtype::Pixmap(SampleEncoding::Binary),
            };
            self.to_dynamic().write_with_encoder(PnmEncoder::new(&mut out).with_subtype(subtype))?;
        } else {
            self.to_dynamic().write_to(&mut out, format)?;
        }
        Ok(out.into_inner())
    }

    pub fn to_png(&self) -> Result<Vec<u8>, ImageError> {
        self.encode(ImageFormat::Png)
    }
}
