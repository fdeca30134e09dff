//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roicast::edges::EdgePoint;
use roicast::geometry::{Point, Quad};
use roicast::imaging::{Frame, GrayFrame};
use roicast::lines::{HoughParams, Line};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pt(x: u32, y: u32, magnitude: f64) -> EdgePoint {
    EdgePoint { x, y, magnitude }
}

/// Exhaustive accumulator kept in a map, scanned by an explicit sort.
/// Ranking: votes desc, summed residual (millionths of a bin) asc, theta
/// index asc, rho index asc.
pub fn naive_hough(points: &[EdgePoint], params: &HoughParams) -> Option<(Line, u32)> {
    let n_theta = (std::f64::consts::PI / params.theta_resolution).round() as usize;
    let mut acc: BTreeMap<(usize, i64), (u32, u64)> = BTreeMap::new();
    for i in 0..n_theta {
        let theta = i as f64 * params.theta_resolution;
        if theta >= std::f64::consts::PI {
            continue;
        }
        for p in points {
            let r = (p.x as f64 * theta.cos() + p.y as f64 * theta.sin()) / params.rho_resolution;
            let k = r.round();
            let cell = acc.entry((i, k as i64)).or_insert((0, 0));
            cell.0 += 1;
            cell.1 += ((r - k).abs() * 1e6).round() as u64;
        }
    }
    let mut cells: Vec<_> = acc.into_iter().collect();
    cells.sort_by(|a, b| {
        b.1 .0
            .cmp(&a.1 .0)
            .then(a.1 .1.cmp(&b.1 .1))
            .then(a.0 .0.cmp(&b.0 .0))
            .then(a.0 .1.cmp(&b.0 .1))
    });
    let ((i, k), (votes, _)) = *cells.first()?;
    Some((
        Line::new(k as f64 * params.rho_resolution, i as f64 * params.theta_resolution),
        votes,
    ))
}

/// 30 points near a random line through the frame plus 20 uniform points.
pub fn line_plus_noise(seed: u64) -> Vec<EdgePoint> {
    let mut r = rng(seed);
    let (w, h) = (200.0, 150.0);
    let theta: f64 = r.gen_range(0.0..std::f64::consts::PI);
    let (cx, cy) = (r.gen_range(40.0..160.0), r.gen_range(30.0..120.0));
    let (dx, dy) = (-theta.sin(), theta.cos());
    let mut pts = Vec::new();
    while pts.len() < 30 {
        let t: f64 = r.gen_range(-70.0..70.0);
        let (x, y) = ((cx + t * dx).round(), (cy + t * dy).round());
        if x >= 0.0 && y >= 0.0 && x < w && y < h {
            pts.push(pt(x as u32, y as u32, r.gen_range(1.0..100.0)));
        }
    }
    for _ in 0..20 {
        pts.push(pt(r.gen_range(0..200), r.gen_range(0..150), r.gen_range(1.0..100.0)));
    }
    pts
}

/// Sobel by the textbook double sum over a 3x3 window.
pub fn naive_sobel(smoothed: &[f64], w: usize, h: usize, x: usize, y: usize) -> (f64, f64) {
    const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    const KY: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    assert!(x > 0 && y > 0 && x + 1 < w && y + 1 < h);
    let (mut gx, mut gy) = (0.0, 0.0);
    for (j, (rx, ry)) in KX.iter().zip(KY.iter()).enumerate() {
        for i in 0..3 {
            let v = smoothed[(y + j - 1) * w + (x + i - 1)];
            gx += rx[i] * v;
            gy += ry[i] * v;
        }
    }
    (gx, gy)
}

/// Brute-force nearest corner: first index with the minimum distance.
pub fn nearest_corner_oracle(q: &Quad, p: Point) -> usize {
    let d: Vec<f64> = q.corners().iter().map(|c| ((c.x - p.x).powi(2) + (c.y - p.y).powi(2)).sqrt()).collect();
    let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    d.iter().position(|&v| v == min).unwrap()
}

/// Shoelace area computed from scratch.
pub fn shoelace(q: &Quad) -> f64 {
    let c = q.corners();
    let mut s = 0.0;
    for i in 0..4 {
        let j = (i + 1) % 4;
        s += c[i].x * c[j].y - c[j].x * c[i].y;
    }
    s.abs() / 2.0
}

/// Random convex quad: four points at increasing angles around a centre.
pub fn random_convex_quad<R: Rng>(r: &mut R, w: f64, h: f64) -> Quad {
    loop {
        let (cx, cy) = (r.gen_range(0.3 * w..0.7 * w), r.gen_range(0.3 * h..0.7 * h));
        let base: f64 = r.gen_range(0.0..std::f64::consts::FRAC_PI_2);
        let pts: Vec<Point> = (0..4)
            .map(|k| {
                // y-down clockwise = increasing angle
                let a = base + k as f64 * std::f64::consts::FRAC_PI_2 + r.gen_range(-0.5..0.5);
                let rad = r.gen_range(0.2..0.45) * w.min(h);
                Point::new(cx + rad * a.cos(), cy + rad * a.sin())
            })
            .collect();
        // rotate so that TL-ish (smallest x + y) comes first
        let start = (0..4)
            .min_by(|&i, &j| (pts[i].x + pts[i].y).total_cmp(&(pts[j].x + pts[j].y)))
            .unwrap();
        let c = [0, 1, 2, 3].map(|k| pts[(start + k) % 4]);
        if let Ok(q) = Quad::new(c) {
            return q;
        }
    }
}

/// Random-byte frame.
pub fn noise_frame(seed: u64, w: usize, h: usize) -> Frame {
    let mut r = rng(seed);
    let pixels = (0..w * h * 3).map(|_| r.gen()).collect();
    Frame::new(w, h, pixels, 0, 1).unwrap()
}

/// Smooth non-repeating texture for registration tests.
pub fn textured_gray(seed: u64, w: usize, h: usize) -> GrayFrame {
    let mut r = rng(seed);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..40)
        .map(|_| {
            (
                r.gen_range(0.0..w as f64),
                r.gen_range(0.0..h as f64),
                r.gen_range(3.0..12.0),
                r.gen_range(-90.0..90.0),
            )
        })
        .collect();
    let mut g = GrayFrame::filled(w, h, 0);
    for y in 0..h {
        for x in 0..w {
            let mut v = 120.0;
            for &(bx, by, s, a) in &blobs {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                v += a * (-d2 / (2.0 * s * s)).exp();
            }
            v += r.gen_range(-6.0..6.0);
            g.set(x, y, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    g
}

/// `g` moved by `(dx, dy)`; uncovered pixels take the same texture seed
/// rendered larger, so no flat border appears.
pub fn shifted_view(seed: u64, w: usize, h: usize, dx: i32, dy: i32, pad: usize) -> (GrayFrame, GrayFrame) {
    let big = textured_gray(seed, w + 2 * pad, h + 2 * pad);
    let crop = |ox: i64, oy: i64| {
        let mut out = GrayFrame::filled(w, h, 0);
        for y in 0..h {
            for x in 0..w {
                out.set(x, y, big.get((x as i64 + ox) as usize, (y as i64 + oy) as usize));
            }
        }
        out
    };
    let p = pad as i64;
    // current(x) = reference(x - d)
    (crop(p, p), crop(p - dx as i64, p - dy as i64))
}
