//! Half-frame partitioning, Hough dominant lines and quad construction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::edges::EdgePoint;
use crate::error::{DetectError, GeometryError};
use crate::geometry::{Point, Quad};

/// A line in normal form: `x cos(theta) + y sin(theta) = rho`, with theta in
/// `[0, pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub rho: f64,
    pub theta: f64,
}

impl Line {
    pub fn new(rho: f64, theta: f64) -> Self {
        Self { rho, theta }
    }

    /// Signed distance of `p` from the line.
    pub fn residual(&self, p: Point) -> f64 {
        p.x * self.theta.cos() + p.y * self.theta.sin() - self.rho
    }

    /// The horizontal line `y = c`.
    pub fn horizontal(c: f64) -> Self {
        Self::new(c, PI / 2.0)
    }

    /// The vertical line `x = c`.
    pub fn vertical(c: f64) -> Self {
        Self::new(c, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughParams {
    pub rho_resolution: f64,
    pub theta_resolution: f64,
    pub min_votes: u32,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            rho_resolution: 1.0,
            theta_resolution: PI / 180.0,
            min_votes: 8,
        }
    }
}

impl HoughParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rho_resolution > 0.0 && self.theta_resolution > 0.0) {
            return Err("Hough resolutions must be positive".into());
        }
        if self.min_votes < 2 {
            return Err("min_votes must be at least 2".into());
        }
        Ok(())
    }

    /// Theta bin centers `i * theta_resolution` covering `[0, pi)`.
    pub fn theta_bins(&self) -> Vec<f64> {
        let n = (PI / self.theta_resolution).round().max(1.0) as usize;
        (0..n)
            .map(|i| i as f64 * self.theta_resolution)
            .filter(|&t| t < PI)
            .collect()
    }
}

/// Points split by frame half; each point lands in one of top/bottom and
/// one of left/right.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Halves {
    pub top: Vec<EdgePoint>,
    pub bottom: Vec<EdgePoint>,
    pub left: Vec<EdgePoint>,
    pub right: Vec<EdgePoint>,
}

/// Midlines belong to the bottom and right halves.
pub fn partition_halves(points: &[EdgePoint], width: usize, height: usize) -> Halves {
    let mut halves = Halves::default();
    // y < h/2  <=>  2y < h, which avoids fractional midlines for odd sizes.
    for &p in points {
        if (2 * p.y as u64) < height as u64 {
            halves.top.push(p);
        } else {
            halves.bottom.push(p);
        }
        if (2 * p.x as u64) < width as u64 {
            halves.left.push(p);
        } else {
            halves.right.push(p);
        }
    }
    halves
}

/// Residual resolution used to rank tied accumulator bins: millionths of a
/// rho bin, summed as integers so the ranking does not depend on point
/// order.
const RESIDUAL_QUANTUM: f64 = 1e6;

/// Highest-voted `(theta, rho)` bin over `points`.
///
/// Each point votes once per theta bin, in the rho bin nearest to
/// `x cos(theta) + y sin(theta)`. Bins with equal votes are ranked by the
/// summed distance of their voters from the bin center (smaller wins), then
/// by smaller theta, then smaller rho.
pub fn hough_dominant(points: &[EdgePoint], params: &HoughParams) -> Result<Line, DetectError> {
    hough_dominant_oriented(points, params, Orientation::Any)
}

/// Which theta bins take part in a Hough search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Any,
    /// Normal within 45 degrees of vertical: `theta` in `[pi/4, 3pi/4]`.
    NearHorizontal,
    /// The remaining bins.
    NearVertical,
}

impl Orientation {
    pub fn admits(self, theta: f64) -> bool {
        use std::f64::consts::FRAC_PI_4;
        let horizontal = (FRAC_PI_4 - 1e-12..=3.0 * FRAC_PI_4 + 1e-12).contains(&theta);
        match self {
            Orientation::Any => true,
            Orientation::NearHorizontal => horizontal,
            Orientation::NearVertical => !horizontal,
        }
    }
}

/// [`hough_dominant`] restricted to the theta bins admitted by `orientation`.
pub fn hough_dominant_oriented(
    points: &[EdgePoint],
    params: &HoughParams,
    orientation: Orientation,
) -> Result<Line, DetectError> {
    if points.is_empty() {
        return Err(DetectError::NoDominantLine("empty"));
    }
    let thetas: Vec<f64> = params
        .theta_bins()
        .into_iter()
        .filter(|&t| orientation.admits(t))
        .collect();
    let res = params.rho_resolution;
    let max_r = points
        .iter()
        .map(|p| ((p.x as f64).powi(2) + (p.y as f64).powi(2)).sqrt())
        .fold(0.0, f64::max);
    let offset = (max_r / res).ceil() as i64 + 1;
    let n_rho = (2 * offset + 1) as usize;

    let mut votes = vec![0u32; thetas.len() * n_rho];
    let mut residuals = vec![0u64; thetas.len() * n_rho];
    for (t, &theta) in thetas.iter().enumerate() {
        let (sin, cos) = theta.sin_cos();
        let row = t * n_rho;
        for p in points {
            let scaled = (p.x as f64 * cos + p.y as f64 * sin) / res;
            let idx = scaled.round();
            let slot = row + (idx as i64 + offset) as usize;
            votes[slot] += 1;
            residuals[slot] += ((scaled - idx).abs() * RESIDUAL_QUANTUM).round() as u64;
        }
    }

    // Row-major scan visits (theta, rho) ascending, so strict improvement
    // keeps the earliest bin among exact ties.
    let mut best: Option<(usize, u32, u64)> = None;
    for (slot, (&v, &r)) in votes.iter().zip(&residuals).enumerate() {
        if v == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, bv, br)) => v > bv || (v == bv && r < br),
        };
        if better {
            best = Some((slot, v, r));
        }
    }
    let (slot, v, _) = best.ok_or(DetectError::NoDominantLine("empty"))?;
    if v < params.min_votes {
        return Err(DetectError::NoDominantLine("weak"));
    }
    let t = slot / n_rho;
    let rho_idx = (slot % n_rho) as i64 - offset;
    Ok(Line::new(rho_idx as f64 * res, thetas[t]))
}

/// Intersection of two lines in normal form.
pub fn intersect(l1: &Line, l2: &Line) -> Result<Point, GeometryError> {
    let (s1, c1) = l1.theta.sin_cos();
    let (s2, c2) = l2.theta.sin_cos();
    let det = c1 * s2 - s1 * c2;
    if det.abs() < 1e-6 {
        return Err(GeometryError::ParallelLines);
    }
    let x = (l1.rho * s2 - l2.rho * s1) / det;
    let y = (c1 * l2.rho - c2 * l1.rho) / det;
    Ok(Point::new(x, y))
}

/// Fraction of the frame size a corner may sit outside the frame.
pub const CORNER_SLACK: f64 = 0.10;

/// Quad from the four side lines: TL = top x left, TR = top x right,
/// BR = bottom x right, BL = bottom x left.
pub fn build_quad(
    top: &Line,
    bottom: &Line,
    left: &Line,
    right: &Line,
    width: usize,
    height: usize,
) -> Result<Quad, GeometryError> {
    let corners = [
        intersect(top, left)?,
        intersect(top, right)?,
        intersect(bottom, right)?,
        intersect(bottom, left)?,
    ];
    let (w, h) = (width as f64, height as f64);
    let (sx, sy) = (CORNER_SLACK * w, CORNER_SLACK * h);
    for c in &corners {
        if c.x < -sx || c.x > w + sx || c.y < -sy || c.y > h + sy {
            return Err(GeometryError::DegenerateQuad(format!(
                "corner ({:.1}, {:.1}) too far outside the {}x{} frame",
                c.x, c.y, width, height
            )));
        }
    }
    Quad::new(corners)
}
