//! Binary PPM frames and numbered sequence directories with an index file.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::ImageFormat;

use super::Frame;
use crate::error::ImagingError;

pub const INDEX_FILE: &str = "index.txt";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub filename: String,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ImagingError {
    ImagingError::Io(format!("{}: {e}", path.display()))
}

pub fn write_ppm(path: &Path, frame: &Frame) -> Result<(), ImagingError> {
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    write!(file, "P6\n{} {}\n255\n", frame.width, frame.height).map_err(|e| io_err(path, e))?;
    file.write_all(&frame.pixels).map_err(|e| io_err(path, e))
}

/// Reads a binary PPM. Timestamp and seq are zero; sequences carry them in
/// the index.
pub fn read_ppm(path: &Path) -> Result<Frame, ImagingError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)
        .map_err(|e| ImagingError::DecodeFailure(format!("{}: {e}", path.display())))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Frame::new(w as usize, h as usize, rgb.into_raw(), 0, 0)
}

pub fn frame_filename(seq: u64) -> String {
    format!("frame_{seq:06}.ppm")
}

/// Writes each frame as a zero-padded PPM plus `index.txt`.
pub fn write_sequence<'a>(
    dir: &Path,
    frames: impl IntoIterator<Item = &'a Frame>,
) -> Result<Vec<IndexEntry>, ImagingError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut entries = Vec::new();
    for frame in frames {
        let filename = frame_filename(frame.seq);
        write_ppm(&dir.join(&filename), frame)?;
        entries.push(IndexEntry {
            seq: frame.seq,
            timestamp_ms: frame.timestamp_ms,
            filename,
        });
    }
    write_index(&dir.join(INDEX_FILE), &entries)?;
    Ok(entries)
}

pub fn write_index(path: &Path, entries: &[IndexEntry]) -> Result<(), ImagingError> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&format!("{} {} {}\n", e.seq, e.timestamp_ms, e.filename));
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_index(dir: &Path) -> Result<Vec<IndexEntry>, ImagingError> {
    let path = dir.join(INDEX_FILE);
    let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
    let mut entries = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(&path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let bad = || io_err(&path, format!("line {}: expected `seq timestamp_ms filename`", lineno + 1));
        let seq = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let timestamp_ms = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let filename = parts.next().ok_or_else(bad)?.to_string();
        entries.push(IndexEntry {
            seq,
            timestamp_ms,
            filename,
        });
    }
    Ok(entries)
}

/// Lists the sequence in a directory without loading pixels.
pub fn sequence_paths(dir: &Path) -> Result<Vec<(IndexEntry, PathBuf)>, ImagingError> {
    Ok(read_index(dir)?
        .into_iter()
        .map(|e| {
            let p = dir.join(&e.filename);
            (e, p)
        })
        .collect())
}

/// Loads every frame listed in the directory's index, in index order.
pub fn read_sequence(dir: &Path) -> Result<Vec<Frame>, ImagingError> {
    sequence_paths(dir)?
        .into_iter()
        .map(|(e, p)| read_ppm(&p).map(|f| f.with_meta(e.timestamp_ms, e.seq)))
        .collect()
}
