//! Quadrilaterals, four-point homographies and perspective warping.
//!
//! Coordinates are real-valued pixels with pixel `(i, j)` sampled at exactly
//! `(i, j)`. A quad covering the whole `W x H` frame is therefore
//! `(0,0) (W,0) (W,H) (0,H)`, and warping with it onto a `W x H` raster is the
//! identity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::imaging::Frame;

pub const MIN_QUAD_AREA: f64 = 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(self, other: Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }

    pub fn dist(self, other: Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Point::new(p[0], p[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Index of a corner within a [`Quad`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corner {
    TopLeft = 0,
    TopRight = 1,
    BottomRight = 2,
    BottomLeft = 3,
}

/// Four corners in TL, TR, BR, BL order. Construction through [`Quad::new`]
/// enforces convexity, clockwise order (y down) and a minimum area.
///
/// Serializes as `[[x,y],[x,y],[x,y],[x,y]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(into = "[[f64; 2]; 4]")]
pub struct Quad {
    corners: [Point; 4],
}

impl From<Quad> for [[f64; 2]; 4] {
    fn from(q: Quad) -> Self {
        q.corners.map(Into::into)
    }
}

impl<'de> Deserialize<'de> for Quad {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = <[[f64; 2]; 4]>::deserialize(d)?;
        Quad::new(raw.map(Point::from)).map_err(serde::de::Error::custom)
    }
}

/// z-component of `(b - a) x (c - b)`.
fn turn(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x)
}

/// Shoelace area, positive for clockwise order in image coordinates.
pub fn signed_area(pts: &[Point; 4]) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let (p, q) = (pts[i], pts[(i + 1) % 4]);
        acc += p.x * q.y - q.x * p.y;
    }
    acc / 2.0
}

impl Quad {
    pub fn new(corners: [Point; 4]) -> Result<Self, GeometryError> {
        if corners.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::DegenerateQuad("non-finite corner".into()));
        }
        for i in 0..4 {
            let t = turn(corners[i], corners[(i + 1) % 4], corners[(i + 2) % 4]);
            if t <= 0.0 {
                return Err(GeometryError::DegenerateQuad(format!(
                    "not convex and clockwise at corner {}",
                    (i + 1) % 4
                )));
            }
        }
        let area = signed_area(&corners);
        if area < MIN_QUAD_AREA {
            return Err(GeometryError::DegenerateQuad(format!(
                "area {area:.2} below {MIN_QUAD_AREA}"
            )));
        }
        Ok(Self { corners })
    }

    pub fn from_xy(pts: [(f64, f64); 4]) -> Result<Self, GeometryError> {
        Self::new(pts.map(|(x, y)| Point::new(x, y)))
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::from_xy([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    }

    /// The quad covering a whole `width x height` frame.
    pub fn full_frame(width: usize, height: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        // Only sub-8x8 frames fail the area floor; keep them representable.
        Self::rect(0.0, 0.0, w, h).unwrap_or(Self {
            corners: [
                Point::new(0.0, 0.0),
                Point::new(w, 0.0),
                Point::new(w, h),
                Point::new(0.0, h),
            ],
        })
    }

    pub fn corners(&self) -> &[Point; 4] {
        &self.corners
    }

    pub fn corner(&self, c: Corner) -> Point {
        self.corners[c as usize]
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.corners)
    }

    pub fn centroid(&self) -> Point {
        let sx: f64 = self.corners.iter().map(|p| p.x).sum();
        let sy: f64 = self.corners.iter().map(|p| p.y).sum();
        Point::new(sx / 4.0, sy / 4.0)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            corners: self.corners.map(|p| Point::new(p.x + dx, p.y + dy)),
        }
    }

    /// Copy of the quad with one corner replaced, validated.
    pub fn with_corner(&self, index: usize, p: Point) -> Result<Self, GeometryError> {
        let mut c = self.corners;
        c[index] = p;
        Self::new(c)
    }

    /// Index of the corner closest to `p`; ties go to the lower index.
    pub fn nearest_corner(&self, p: Point) -> usize {
        let mut best = 0;
        for i in 1..4 {
            if self.corners[i].dist2(p) < self.corners[best].dist2(p) {
                best = i;
            }
        }
        best
    }

    /// Point-in-polygon for the closed quad (boundary counts as inside).
    pub fn contains(&self, p: Point) -> bool {
        (0..4).all(|i| turn(self.corners[i], self.corners[(i + 1) % 4], p) >= 0.0)
    }

    /// The quad shrunk about its centroid by `factor`.
    pub fn scaled_about_centroid(&self, factor: f64) -> Self {
        let c = self.centroid();
        Self {
            corners: self
                .corners
                .map(|p| Point::new(c.x + (p.x - c.x) * factor, c.y + (p.y - c.y) * factor)),
        }
    }

    /// Integer bounding box `(x0, y0, x1, y1)`, outward-rounded, half-open.
    pub fn bounding_box(&self) -> CropRect {
        let min_x = self.corners.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let min_y = self.corners.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_x = self.corners.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let max_y = self.corners.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let x = min_x.floor() as i64;
        let y = min_y.floor() as i64;
        CropRect {
            x,
            y,
            width: (max_x.ceil() as i64 - x).max(0) as u64,
            height: (max_y.ceil() as i64 - y).max(0) as u64,
        }
    }
}

/// Fixed output raster for warped ROIs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub out_width: usize,
    pub out_height: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            out_width: 640,
            out_height: 480,
        }
    }
}

impl OutputSpec {
    pub fn new(out_width: usize, out_height: usize) -> Result<Self, GeometryError> {
        if out_width < 16 || out_height < 16 {
            return Err(GeometryError::InvalidOutput(format!(
                "{out_width}x{out_height} is below 16x16"
            )));
        }
        Ok(Self {
            out_width,
            out_height,
        })
    }

    /// Quarter-scale thumbnail raster.
    pub fn thumbnail(&self) -> Self {
        Self {
            out_width: (self.out_width / 4).max(1),
            out_height: (self.out_height / 4).max(1),
        }
    }
}

/// 3x3 projective map, row-major, normalized so `m[2][2] == 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        if m[2][2].abs() < 1e-15 {
            return Err(GeometryError::SingularSystem);
        }
        let s = m[2][2];
        let h = Self {
            m: m.map(|row| row.map(|v| v / s)),
        };
        if h.det().abs() <= 1e-12 {
            return Err(GeometryError::SingularSystem);
        }
        Ok(h)
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn apply(&self, p: Point) -> Point {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        Point::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        )
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let d = self.det();
        if d.abs() <= 1e-12 {
            return Err(GeometryError::SingularSystem);
        }
        let m = &self.m;
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        Self::from_matrix(adj.map(|row| row.map(|v| v / d)))
    }

    /// Homography taking `src[i]` to `dst[i]` for the four pairs.
    pub fn from_correspondences(src: &[Point; 4], dst: &[Point; 4]) -> Result<Self, GeometryError> {
        // Unknowns h0..h7 with h8 = 1:
        //   u = (h0 x + h1 y + h2) / (h6 x + h7 y + 1)
        //   v = (h3 x + h4 y + h5) / (h6 x + h7 y + 1)
        let mut a = [[0.0f64; 9]; 8];
        for i in 0..4 {
            let (x, y) = (src[i].x, src[i].y);
            let (u, v) = (dst[i].x, dst[i].y);
            a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        let h = solve_8x8(a)?;
        Self::from_matrix([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])
    }
}

/// Gaussian elimination with partial pivoting on an augmented 8x9 system.
fn solve_8x8(mut a: [[f64; 9]; 8]) -> Result<[f64; 8], GeometryError> {
    let scale = a
        .iter()
        .flat_map(|r| r[..8].iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[pivot][col].abs() <= 1e-12 * scale {
            return Err(GeometryError::SingularSystem);
        }
        a.swap(col, pivot);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..9 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = [0.0; 8];
    for row in (0..8).rev() {
        let mut acc = a[row][8];
        for k in row + 1..8 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Solves the map from `src` corners onto `(0,0) (W,0) (W,H) (0,H)`.
pub fn solve_homography(src: &Quad, dst: &OutputSpec) -> Result<Homography, GeometryError> {
    let (w, h) = (dst.out_width as f64, dst.out_height as f64);
    let target = [
        Point::new(0.0, 0.0),
        Point::new(w, 0.0),
        Point::new(w, h),
        Point::new(0.0, h),
    ];
    Homography::from_correspondences(src.corners(), &target)
}

/// Bilinear sample at a real position; `None` outside the frame.
///
/// The frame covers `[-0.5, W - 0.5) x [-0.5, H - 0.5)`; positions in the
/// half-pixel apron replicate the edge.
#[inline]
fn sample_bilinear(frame: &Frame, x: f64, y: f64) -> Option<[u8; 3]> {
    let (w, h) = (frame.width as f64, frame.height as f64);
    if !(x >= -0.5 && x < w - 0.5 && y >= -0.5 && y < h - 0.5) {
        return None;
    }
    let x = x.clamp(0.0, w - 1.0);
    let y = y.clamp(0.0, h - 1.0);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(frame.width - 1);
    let y1 = (y0 + 1).min(frame.height - 1);
    let stride = frame.width * 3;
    let px = &frame.pixels;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let p00 = px[y0 * stride + x0 * 3 + c] as f64;
        let p10 = px[y0 * stride + x1 * 3 + c] as f64;
        let p01 = px[y1 * stride + x0 * 3 + c] as f64;
        let p11 = px[y1 * stride + x1 * 3 + c] as f64;
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        *o = (top + (bottom - top) * fy).round().clamp(0.0, 255.0) as u8;
    }
    Some(out)
}

/// Resamples `quad` from `frame` onto the `out` raster by inverse mapping.
pub fn warp_crop(frame: &Frame, quad: &Quad, out: &OutputSpec) -> Result<Frame, GeometryError> {
    let inv = solve_homography(quad, out)?.inverse()?;
    let (ow, oh) = (out.out_width, out.out_height);
    let mut pixels = vec![0u8; ow * oh * 3];
    pixels
        .par_chunks_mut(ow * 3)
        .enumerate()
        .for_each(|(j, row)| {
            for i in 0..ow {
                let src = inv.apply(Point::new(i as f64, j as f64));
                if let Some(rgb) = sample_bilinear(frame, src.x, src.y) {
                    row[i * 3..i * 3 + 3].copy_from_slice(&rgb);
                }
            }
        });
    Ok(Frame {
        width: ow,
        height: oh,
        pixels,
        timestamp_ms: frame.timestamp_ms,
        seq: frame.seq,
    })
}

/// Integer crop rectangle; `x`/`y` may be negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: i64,
    pub y: i64,
    pub width: u64,
    pub height: u64,
}

/// Plain copy of `bbox` clipped to the frame.
pub fn crop_axis_aligned(frame: &Frame, bbox: &CropRect) -> Result<Frame, GeometryError> {
    let x0 = bbox.x.max(0);
    let y0 = bbox.y.max(0);
    let x1 = (bbox.x + bbox.width as i64).min(frame.width as i64);
    let y1 = (bbox.y + bbox.height as i64).min(frame.height as i64);
    if x1 <= x0 || y1 <= y0 {
        return Err(GeometryError::EmptyRegion);
    }
    let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, x1 as usize, y1 as usize);
    let w = x1 - x0;
    let mut pixels = Vec::with_capacity(w * (y1 - y0) * 3);
    for y in y0..y1 {
        let start = (y * frame.width + x0) * 3;
        pixels.extend_from_slice(&frame.pixels[start..start + w * 3]);
    }
    Ok(Frame {
        width: w,
        height: y1 - y0,
        pixels,
        timestamp_ms: frame.timestamp_ms,
        seq: frame.seq,
    })
}
