//! ROI sources: screen detection, light tags, a bright-blob stand-in for
//! face detection, and manual pass-through.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::edges::{canny, top_of_population, EdgeParams};
use crate::error::{DetectError, GeometryError};
use crate::geometry::{Point, Quad};
use crate::imaging::GrayFrame;
use crate::lines::{build_quad, hough_dominant_oriented, partition_halves, HoughParams, Orientation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Manual,
    Screen,
    #[serde(rename = "lighttag")]
    LightTag,
    Face,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Manual => "manual",
            DetectorKind::Screen => "screen",
            DetectorKind::LightTag => "lighttag",
            DetectorKind::Face => "face",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "manual" => Ok(DetectorKind::Manual),
            "screen" => Ok(DetectorKind::Screen),
            "lighttag" => Ok(DetectorKind::LightTag),
            // `stub` is the CLI name for the face stand-in
            "face" | "stub" => Ok(DetectorKind::Face),
            other => Err(format!("unknown detector kind `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiCandidate {
    pub quad: Quad,
    pub source: DetectorKind,
    #[serde(rename = "seq")]
    pub frame_seq: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LightTagParams {
    pub brightness_threshold: u8,
    pub min_blob_area: usize,
    pub max_blob_area: usize,
}

impl Default for LightTagParams {
    fn default() -> Self {
        Self {
            brightness_threshold: 240,
            min_blob_area: 4,
            max_blob_area: 400,
        }
    }
}

impl LightTagParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.brightness_threshold == 0 {
            return Err("brightness_threshold must be positive".into());
        }
        if self.min_blob_area == 0 || self.min_blob_area > self.max_blob_area {
            return Err("need 0 < min_blob_area <= max_blob_area".into());
        }
        Ok(())
    }
}

/// Anything that turns a gray frame into an ROI candidate.
pub trait Detector: Send + Sync {
    fn kind(&self) -> DetectorKind;
    fn detect(&self, gray: &GrayFrame) -> Result<Quad, DetectError>;

    fn candidate(&self, gray: &GrayFrame, frame_seq: u64) -> Result<RoiCandidate, DetectError> {
        Ok(RoiCandidate {
            quad: self.detect(gray)?,
            source: self.kind(),
            frame_seq,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct ScreenDetector {
    pub edges: EdgeParams,
    pub hough: HoughParams,
}

impl Detector for ScreenDetector {
    fn kind(&self) -> DetectorKind {
        DetectorKind::Screen
    }

    fn detect(&self, gray: &GrayFrame) -> Result<Quad, DetectError> {
        detect_screen_quad(gray, &self.edges, &self.hough)
    }
}

#[derive(Clone, Debug, Default)]
pub struct LightTagDetector {
    pub params: LightTagParams,
}

impl Detector for LightTagDetector {
    fn kind(&self) -> DetectorKind {
        DetectorKind::LightTag
    }

    fn detect(&self, gray: &GrayFrame) -> Result<Quad, DetectError> {
        detect_light_tag_quad(gray, &self.params)
    }
}

/// Deterministic stand-in registered under [`DetectorKind::Face`]: the
/// bounding box of the largest bright blob.
#[derive(Clone, Debug, Default)]
pub struct StubBlobDetector;

impl Detector for StubBlobDetector {
    fn kind(&self) -> DetectorKind {
        DetectorKind::Face
    }

    fn detect(&self, gray: &GrayFrame) -> Result<Quad, DetectError> {
        detect_stub_blob_quad(gray)
    }
}

/// Detector for a session mode; `Manual` has none.
pub fn detector_for(
    kind: DetectorKind,
    edges: EdgeParams,
    hough: HoughParams,
    tags: LightTagParams,
) -> Option<Box<dyn Detector>> {
    match kind {
        DetectorKind::Manual => None,
        DetectorKind::Screen => Some(Box::new(ScreenDetector { edges, hough })),
        DetectorKind::LightTag => Some(Box::new(LightTagDetector { params: tags })),
        DetectorKind::Face => Some(Box::new(StubBlobDetector)),
    }
}

fn detect_screen_quad(
    gray: &GrayFrame,
    edge_params: &EdgeParams,
    hough_params: &HoughParams,
) -> Result<Quad, DetectError> {
    let edges = canny(gray, edge_params);
    if edges.is_empty() {
        return Err(DetectError::NoEdges);
    }
    // The fraction is taken over the whole magnitude image, not just the
    // surviving edge pixels.
    let strongest = top_of_population(&edges, edge_params.keep_fraction, gray.width * gray.height);
    let halves = partition_halves(&strongest, gray.width, gray.height);
    let fit = |pts: &[_], orientation, side: &'static str| {
        hough_dominant_oriented(pts, hough_params, orientation)
            .map_err(|_| DetectError::NoDominantLine(side))
    };
    let top = fit(&halves.top, Orientation::NearHorizontal, "top")?;
    let bottom = fit(&halves.bottom, Orientation::NearHorizontal, "bottom")?;
    let left = fit(&halves.left, Orientation::NearVertical, "left")?;
    let right = fit(&halves.right, Orientation::NearVertical, "right")?;
    Ok(build_quad(&top, &bottom, &left, &right, gray.width, gray.height)?)
}

/// Canny, keep the strongest `keep_fraction` of the frame's pixels, fit one Hough line per frame half and
/// intersect them.
pub fn detect_screen(
    gray: &GrayFrame,
    edge_params: &EdgeParams,
    hough_params: &HoughParams,
    frame_seq: u64,
) -> Result<RoiCandidate, DetectError> {
    ScreenDetector {
        edges: *edge_params,
        hough: *hough_params,
    }
    .candidate(gray, frame_seq)
}

/// Summary of one 4-connected component.
#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub area: usize,
    pub peak: u8,
    pub centroid: Point,
    /// Inclusive pixel bounds.
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
    /// Raster index of the first pixel reached in scan order.
    pub first_index: usize,
}

/// 4-connected components of pixels with luma `>= threshold`, in raster
/// order of their first pixel.
pub fn label_blobs(gray: &GrayFrame, threshold: u8) -> Vec<Blob> {
    let (w, h) = (gray.width, gray.height);
    let mut seen = vec![false; w * h];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || gray.pixels[start] < threshold {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut blob = Blob {
            area: 0,
            peak: 0,
            centroid: Point::new(0.0, 0.0),
            min_x: usize::MAX,
            min_y: usize::MAX,
            max_x: 0,
            max_y: 0,
            first_index: start,
        };
        let (mut sx, mut sy) = (0u64, 0u64);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            blob.area += 1;
            blob.peak = blob.peak.max(gray.pixels[i]);
            sx += x as u64;
            sy += y as u64;
            blob.min_x = blob.min_x.min(x);
            blob.min_y = blob.min_y.min(y);
            blob.max_x = blob.max_x.max(x);
            blob.max_y = blob.max_y.max(y);
            let mut visit = |j: usize| {
                if !seen[j] && gray.pixels[j] >= threshold {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        blob.centroid = Point::new(sx as f64 / blob.area as f64, sy as f64 / blob.area as f64);
        blobs.push(blob);
    }
    blobs
}

/// Orders four points clockwise (y down) about their mean, starting from the
/// point with the smallest `(y, x)`.
pub fn order_corners(points: [Point; 4]) -> [Point; 4] {
    let cx = points.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mut sorted = points;
    sorted.sort_by(|a, b| {
        (a.y - cy)
            .atan2(a.x - cx)
            .total_cmp(&(b.y - cy).atan2(b.x - cx))
    });
    let start = (0..4)
        .min_by(|&i, &j| {
            sorted[i]
                .y
                .total_cmp(&sorted[j].y)
                .then(sorted[i].x.total_cmp(&sorted[j].x))
        })
        .unwrap_or(0);
    sorted.rotate_left(start);
    sorted
}

/// The four qualifying blobs with the highest peak luma (ties: larger area,
/// then centroid raster order).
pub fn select_tags(blobs: &[Blob], params: &LightTagParams) -> Vec<Blob> {
    let mut qualifying: Vec<Blob> = blobs
        .iter()
        .filter(|b| (params.min_blob_area..=params.max_blob_area).contains(&b.area))
        .cloned()
        .collect();
    qualifying.sort_by(|a, b| {
        b.peak
            .cmp(&a.peak)
            .then(b.area.cmp(&a.area))
            .then(a.centroid.y.total_cmp(&b.centroid.y))
            .then(a.centroid.x.total_cmp(&b.centroid.x))
    });
    qualifying.truncate(4);
    qualifying
}

fn detect_light_tag_quad(gray: &GrayFrame, params: &LightTagParams) -> Result<Quad, DetectError> {
    let blobs = label_blobs(gray, params.brightness_threshold);
    let tags = select_tags(&blobs, params);
    if tags.len() < 4 {
        return Err(DetectError::TagCountMismatch(tags.len()));
    }
    let corners = order_corners([
        tags[0].centroid,
        tags[1].centroid,
        tags[2].centroid,
        tags[3].centroid,
    ]);
    Ok(Quad::new(corners)?)
}

/// Threshold, label, pick four tags and order their centroids into a quad.
pub fn detect_light_tags(
    gray: &GrayFrame,
    params: &LightTagParams,
    frame_seq: u64,
) -> Result<RoiCandidate, DetectError> {
    LightTagDetector { params: *params }.candidate(gray, frame_seq)
}

pub const STUB_BLOB_THRESHOLD: u8 = 200;

fn detect_stub_blob_quad(gray: &GrayFrame) -> Result<Quad, DetectError> {
    let blobs = label_blobs(gray, STUB_BLOB_THRESHOLD);
    // max_by_key keeps the last maximum; reverse so the first in raster order wins ties
    let largest = blobs
        .iter()
        .rev()
        .max_by_key(|b| b.area)
        .ok_or(DetectError::NoBlob)?;
    // Half-open pixel extent so an axis-aligned crop reproduces the blob box.
    Quad::rect(
        largest.min_x as f64,
        largest.min_y as f64,
        (largest.max_x + 1) as f64,
        (largest.max_y + 1) as f64,
    )
    .map_err(|e: GeometryError| e.into())
}

/// Bounding box of the largest blob at luma >= 200, as an axis-aligned quad.
pub fn detect_stub_blob(gray: &GrayFrame, frame_seq: u64) -> Result<RoiCandidate, DetectError> {
    StubBlobDetector.candidate(gray, frame_seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paint(g: &mut GrayFrame, x0: usize, y0: usize, w: usize, h: usize, v: u8) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                g.set(x, y, v);
            }
        }
    }

    fn tag_scene(centers: &[(usize, usize, u8)]) -> GrayFrame {
        let mut g = GrayFrame::filled(640, 480, 50);
        for &(x, y, v) in centers {
            paint(&mut g, x - 1, y - 1, 3, 3, v);
        }
        g
    }

    #[test]
    fn constant_image_has_no_edges() {
        let g = GrayFrame::filled(640, 480, 90);
        assert_eq!(
            detect_screen(&g, &EdgeParams::default(), &HoughParams::default(), 0),
            Err(DetectError::NoEdges)
        );
    }

    #[test]
    fn centered_rectangle_found() {
        let mut g = GrayFrame::filled(640, 480, 30);
        paint(&mut g, 120, 90, 400, 300, 220);
        let cand = detect_screen(&g, &EdgeParams::default(), &HoughParams::default(), 4).unwrap();
        assert_eq!(cand.source, DetectorKind::Screen);
        assert_eq!(cand.frame_seq, 4);
        let truth = Quad::rect(120.0, 90.0, 520.0, 390.0).unwrap();
        for (c, t) in cand.quad.corners().iter().zip(truth.corners()) {
            assert!(c.dist(*t) <= 3.0, "{c:?} vs {t:?}");
        }
    }

    #[test]
    fn four_tags_in_order() {
        let g = tag_scene(&[(510, 400, 255), (50, 50, 255), (60, 390, 255), (500, 60, 255)]);
        let cand = detect_light_tags(&g, &LightTagParams::default(), 1).unwrap();
        let want = [(50.0, 50.0), (500.0, 60.0), (510.0, 400.0), (60.0, 390.0)];
        for (c, w) in cand.quad.corners().iter().zip(want) {
            assert_eq!((c.x, c.y), w);
        }
    }

    #[test]
    fn three_tags_is_mismatch() {
        let g = tag_scene(&[(50, 50, 255), (500, 60, 255), (510, 400, 255)]);
        assert_eq!(
            detect_light_tags(&g, &LightTagParams::default(), 0),
            Err(DetectError::TagCountMismatch(3))
        );
    }

    #[test]
    fn brightest_four_chosen() {
        let g = tag_scene(&[
            (50, 50, 255),
            (500, 60, 255),
            (300, 240, 245),
            (510, 400, 255),
            (60, 390, 255),
        ]);
        let cand = detect_light_tags(&g, &LightTagParams::default(), 0).unwrap();
        assert!(cand.quad.corners().iter().all(|c| c.x != 300.0));
    }

    #[test]
    fn oversized_blobs_ignored() {
        let mut g = tag_scene(&[(50, 50, 255), (500, 60, 255), (510, 400, 255), (60, 390, 255)]);
        paint(&mut g, 200, 200, 30, 30, 255);
        assert!(detect_light_tags(&g, &LightTagParams::default(), 0).is_ok());
    }

    #[test]
    fn stub_blob_cases() {
        assert_eq!(detect_stub_blob(&GrayFrame::filled(64, 64, 20), 0), Err(DetectError::NoBlob));
        let mut g = GrayFrame::filled(100, 100, 20);
        paint(&mut g, 10, 20, 20, 30, 230);
        let q = detect_stub_blob(&g, 0).unwrap().quad;
        assert_eq!(q, Quad::rect(10.0, 20.0, 30.0, 50.0).unwrap());
        paint(&mut g, 60, 60, 5, 10, 250);
        assert_eq!(detect_stub_blob(&g, 0).unwrap().quad, q);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [
            DetectorKind::Manual,
            DetectorKind::Screen,
            DetectorKind::LightTag,
            DetectorKind::Face,
        ] {
            assert_eq!(k.name().parse::<DetectorKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert_eq!("stub".parse::<DetectorKind>().unwrap(), DetectorKind::Face);
    }
}
