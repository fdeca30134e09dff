//! Frame buffers, luma conversion and the JPEG transport codec.

mod ppm;

pub use ppm::{
    frame_filename, read_index, read_ppm, read_sequence, sequence_paths, write_index, write_ppm,
    write_sequence, IndexEntry, INDEX_FILE,
};

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::{ExtendedColorType, ImageFormat};

use crate::error::ImagingError;

/// Smallest width/height accepted for frames entering the streaming pipeline.
pub const MIN_STREAM_DIM: usize = 16;

pub const DEFAULT_QUALITY: u8 = 80;

/// An interleaved 8-bit RGB frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub timestamp_ms: u64,
    pub seq: u64,
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        timestamp_ms: u64,
        seq: u64,
    ) -> Result<Self, ImagingError> {
        if pixels.len() != width * height * 3 {
            return Err(ImagingError::InvalidFrame(format!(
                "expected {} bytes for {}x{} RGB, got {}",
                width * height * 3,
                width,
                height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp_ms,
            seq,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self {
            width,
            height,
            pixels,
            timestamp_ms: 0,
            seq: 0,
        }
    }

    /// Gray frame replicated into all three channels.
    pub fn from_gray(gray: &GrayFrame) -> Self {
        let pixels = gray.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            width: gray.width,
            height: gray.height,
            pixels,
            timestamp_ms: 0,
            seq: 0,
        }
    }

    pub fn with_meta(mut self, timestamp_ms: u64, seq: u64) -> Self {
        self.timestamp_ms = timestamp_ms;
        self.seq = seq;
        self
    }

    /// Checks the size floor required by the streaming pipeline.
    pub fn validate_stream(&self) -> Result<(), ImagingError> {
        if self.width < MIN_STREAM_DIM || self.height < MIN_STREAM_DIM {
            return Err(ImagingError::InvalidFrame(format!(
                "{}x{} is below the {}px minimum",
                self.width, self.height, MIN_STREAM_DIM
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Single-channel 8-bit luma image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if pixels.len() != width * height {
            return Err(ImagingError::InvalidFrame(format!(
                "expected {} bytes for {}x{} gray, got {}",
                width * height,
                width,
                height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }
}

/// BT.601 luma with round-half-up, done in integer arithmetic so the
/// rounding is exact.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((weighted + 500) / 1000).min(255) as u8
}

pub fn to_grayscale(frame: &Frame) -> GrayFrame {
    let pixels = frame
        .pixels
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]))
        .collect();
    GrayFrame {
        width: frame.width,
        height: frame.height,
        pixels,
    }
}

/// Baseline JPEG encode at `quality` (clamped to 1..=100).
pub fn encode_frame(frame: &Frame, quality: u8) -> Result<Vec<u8>, ImagingError> {
    if frame.width == 0 || frame.height == 0 {
        return Err(ImagingError::EncodeFailure(format!(
            "cannot encode a {}x{} frame",
            frame.width, frame.height
        )));
    }
    if frame.pixels.len() != frame.width * frame.height * 3 {
        return Err(ImagingError::EncodeFailure("pixel buffer size mismatch".into()));
    }
    let width = u32::try_from(frame.width)
        .map_err(|_| ImagingError::EncodeFailure("width too large".into()))?;
    let height = u32::try_from(frame.height)
        .map_err(|_| ImagingError::EncodeFailure("height too large".into()))?;
    let mut out = Vec::new();
    JpegEncoder::new_with_quality(&mut out, quality.clamp(1, 100))
        .encode(&frame.pixels, width, height, ExtendedColorType::Rgb8)
        .map_err(|e| ImagingError::EncodeFailure(e.to_string()))?;
    Ok(out)
}

/// Decodes JPEG bytes. Timestamp and seq come from the caller's metadata.
pub fn decode_frame(bytes: &[u8], timestamp_ms: u64, seq: u64) -> Result<Frame, ImagingError> {
    if bytes.is_empty() {
        return Err(ImagingError::DecodeFailure("empty input".into()));
    }
    if !bytes.starts_with(&[0xFF, 0xD8]) {
        return Err(ImagingError::DecodeFailure("missing SOI marker".into()));
    }
    // some decoders pad truncated scans silently; require the EOI marker
    if !bytes.windows(2).any(|w| w == [0xFF, 0xD9]) {
        return Err(ImagingError::DecodeFailure("truncated stream (no EOI)".into()));
    }
    let img = image::load(Cursor::new(bytes), ImageFormat::Jpeg)
        .map_err(|e| ImagingError::DecodeFailure(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Frame::new(w as usize, h as usize, rgb.into_raw(), timestamp_ms, seq)
        .map_err(|e| ImagingError::DecodeFailure(e.to_string()))
}

pub const YELLOW: [u8; 3] = [255, 220, 0];
pub const RED: [u8; 3] = [230, 20, 20];

/// Draws the closed outline of `corners` with `thickness`-pixel dots;
/// parts outside the frame are skipped.
pub fn draw_polygon(frame: &mut Frame, corners: &[(f64, f64)], color: [u8; 3], thickness: usize) {
    let half = thickness.saturating_sub(1) as i64 / 2;
    let n = corners.len();
    for i in 0..n {
        let (x0, y0) = corners[i];
        let (x1, y1) = corners[(i + 1) % n];
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let cx = (x0 + (x1 - x0) * t).round() as i64;
            let cy = (y0 + (y1 - y0) * t).round() as i64;
            for y in cy - half..=cy - half + thickness.max(1) as i64 - 1 {
                for x in cx - half..=cx - half + thickness.max(1) as i64 - 1 {
                    if x >= 0 && y >= 0 && (x as usize) < frame.width && (y as usize) < frame.height {
                        let i = (y as usize * frame.width + x as usize) * 3;
                        frame.pixels[i..i + 3].copy_from_slice(&color);
                    }
                }
            }
        }
    }
}
