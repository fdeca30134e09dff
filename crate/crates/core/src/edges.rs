//! Canny edge detection and magnitude-ranked pruning.

use serde::{Deserialize, Serialize};

use crate::imaging::GrayFrame;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgePoint {
    pub x: u32,
    pub y: u32,
    pub magnitude: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeParams {
    pub gaussian_sigma: f64,
    /// Hysteresis thresholds as fractions of the largest gradient magnitude.
    pub low_ratio: f64,
    pub high_ratio: f64,
    /// Fraction of the strongest edge pixels kept by [`top_fraction`].
    pub keep_fraction: f64,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            gaussian_sigma: 1.4,
            low_ratio: 0.1,
            high_ratio: 0.3,
            keep_fraction: 0.05,
        }
    }
}

impl EdgeParams {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gaussian_sigma > 0.0) {
            return Err("gaussian_sigma must be positive".into());
        }
        if !(0.0 < self.low_ratio && self.low_ratio < self.high_ratio && self.high_ratio <= 1.0) {
            return Err("need 0 < low_ratio < high_ratio <= 1".into());
        }
        if !(0.0 < self.keep_fraction && self.keep_fraction <= 1.0) {
            return Err("keep_fraction must be in (0, 1]".into());
        }
        Ok(())
    }

    /// Smoothing kernel radius, `ceil(3 sigma)`.
    pub fn kernel_radius(&self) -> usize {
        (3.0 * self.gaussian_sigma).ceil().max(1.0) as usize
    }
}

/// Normalized 1-D Gaussian taps of length `2r + 1`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_smooth(gray: &GrayFrame, sigma: f64) -> Vec<f64> {
    let (w, h) = (gray.width, gray.height);
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let k = gaussian_kernel(sigma, radius);
    let r = radius as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &gray.pixels[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                acc += kv * row[clamp(x as isize + t as isize - r, w)] as f64;
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                acc += kv * tmp[clamp(y as isize + t as isize - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Sobel gradients of a smoothed image. Only defined (non-zero) away from
/// the outermost pixel ring.
pub struct Gradients {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
}

pub fn sobel(smoothed: &[f64], width: usize, height: usize) -> Gradients {
    let n = width * height;
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut magnitude = vec![0.0; n];
    if width >= 3 && height >= 3 {
        for y in 1..height - 1 {
            let up = (y - 1) * width;
            let mid = y * width;
            let down = (y + 1) * width;
            for x in 1..width - 1 {
                let a = smoothed[up + x - 1];
                let b = smoothed[up + x];
                let c = smoothed[up + x + 1];
                let d = smoothed[mid + x - 1];
                let f = smoothed[mid + x + 1];
                let g = smoothed[down + x - 1];
                let hh = smoothed[down + x];
                let i = smoothed[down + x + 1];
                let sx = (c + 2.0 * f + i) - (a + 2.0 * d + g);
                let sy = (g + 2.0 * hh + i) - (a + 2.0 * b + c);
                gx[mid + x] = sx;
                gy[mid + x] = sy;
                magnitude[mid + x] = (sx * sx + sy * sy).sqrt();
            }
        }
    }
    Gradients {
        width,
        height,
        gx,
        gy,
        magnitude,
    }
}

/// Neighbour offsets across the gradient, quantized to 0/45/90/135 degrees.
fn across_gradient(gx: f64, gy: f64) -> (isize, isize) {
    // tan(22.5 deg)
    const T: f64 = 0.414_213_562_373_095_1;
    let (ax, ay) = (gx.abs(), gy.abs());
    if ay <= T * ax {
        (1, 0)
    } else if ax <= T * ay {
        (0, 1)
    } else if (gx > 0.0) == (gy > 0.0) {
        (1, 1)
    } else {
        (1, -1)
    }
}

/// Gaussian smoothing, Sobel, four-direction non-maximum suppression and
/// hysteresis. Pixels within `kernel_radius + 1` of the border are never
/// reported.
pub fn canny(gray: &GrayFrame, params: &EdgeParams) -> Vec<EdgePoint> {
    let (w, h) = (gray.width, gray.height);
    let margin = params.kernel_radius() + 1;
    if w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }
    let smoothed = gaussian_smooth(gray, params.gaussian_sigma);
    let grad = sobel(&smoothed, w, h);

    let mut max_mag = 0.0f64;
    for y in margin..h - margin {
        for x in margin..w - margin {
            max_mag = max_mag.max(grad.magnitude[y * w + x]);
        }
    }
    // Flat images: treat tiny float residue as zero gradient.
    if max_mag <= 1e-9 {
        return Vec::new();
    }
    let low = params.low_ratio * max_mag;
    let high = params.high_ratio * max_mag;

    // 0 = suppressed, 1 = weak, 2 = strong
    let mut class = vec![0u8; w * h];
    let mut stack = Vec::new();
    for y in margin..h - margin {
        for x in margin..w - margin {
            let i = y * w + x;
            let m = grad.magnitude[i];
            if m < low || m <= 0.0 {
                continue;
            }
            let (dx, dy) = across_gradient(grad.gx[i], grad.gy[i]);
            let fwd = ((y as isize + dy) as usize) * w + (x as isize + dx) as usize;
            let back = ((y as isize - dy) as usize) * w + (x as isize - dx) as usize;
            // Ties: keep the pixel against its backward neighbour only, so a
            // plateau yields a single-pixel ridge.
            if m > grad.magnitude[back] && m >= grad.magnitude[fwd] {
                if m >= high {
                    class[i] = 2;
                    stack.push(i);
                } else {
                    class[i] = 1;
                }
            }
        }
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let j = ((y + dy) as usize) * w + (x + dx) as usize;
                if class[j] == 1 {
                    class[j] = 2;
                    stack.push(j);
                }
            }
        }
    }

    let mut out = Vec::new();
    for y in margin..h - margin {
        for x in margin..w - margin {
            let i = y * w + x;
            if class[i] == 2 {
                out.push(EdgePoint {
                    x: x as u32,
                    y: y as u32,
                    magnitude: grad.magnitude[i],
                });
            }
        }
    }
    out
}

/// Number of points kept from `n` at `keep_fraction`.
pub fn keep_count(n: usize, keep_fraction: f64) -> usize {
    // Guard against products like 0.05 * 100 landing a hair above 5.
    (((keep_fraction * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// The `ceil(keep_fraction * n)` strongest points; equal magnitudes are
/// ordered by `(y, x)`.
pub fn top_fraction(edges: &[EdgePoint], keep_fraction: f64) -> Vec<EdgePoint> {
    top_of_population(edges, keep_fraction, edges.len())
}

/// Strongest points when the fraction is taken over a larger population,
/// e.g. every pixel of the magnitude image, of which `edges` are the
/// non-zero entries. At most `edges.len()` points are returned.
pub fn top_of_population(edges: &[EdgePoint], keep_fraction: f64, population: usize) -> Vec<EdgePoint> {
    let k = keep_count(population.max(edges.len()), keep_fraction).min(edges.len());
    let mut sorted = edges.to_vec();
    let cmp = |a: &EdgePoint, b: &EdgePoint| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    };
    if k < sorted.len() && k > 0 {
        sorted.select_nth_unstable_by(k - 1, cmp);
    }
    sorted.truncate(k);
    sorted.sort_by(cmp);
    sorted
}

/// `x y magnitude` per line.
pub fn format_edge_dump(edges: &[EdgePoint]) -> String {
    edges
        .iter()
        .map(|e| format!("{} {} {}\n", e.x, e.y, e.magnitude))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_image() -> GrayFrame {
        let mut g = GrayFrame::filled(64, 64, 0);
        for y in 0..64 {
            for x in 32..64 {
                g.set(x, y, 255);
            }
        }
        g
    }

    #[test]
    fn uniform_image_has_no_edges() {
        assert!(canny(&GrayFrame::filled(64, 64, 128), &EdgeParams::default()).is_empty());
    }

    #[test]
    fn vertical_step_gives_vertical_band() {
        let edges = canny(&step_image(), &EdgeParams::default());
        assert!(!edges.is_empty());
        assert!(edges.iter().all(|e| (31..=32).contains(&e.x)), "{edges:?}");
        // one column wide after suppression
        let xs: std::collections::BTreeSet<u32> = edges.iter().map(|e| e.x).collect();
        assert_eq!(xs.len(), 1);
        let margin = EdgeParams::default().kernel_radius() as u32 + 1;
        assert_eq!(edges.len() as u32, 64 - 2 * margin);
    }

    #[test]
    fn edges_respect_border_margin() {
        let mut g = GrayFrame::filled(40, 40, 0);
        for y in 0..40 {
            g.set(0, y, 255);
            g.set(39, y, 255);
        }
        for x in 0..40 {
            g.set(x, 0, 255);
        }
        let edges = canny(&g, &EdgeParams::default());
        let m = EdgeParams::default().kernel_radius() as u32 + 1;
        assert!(edges.iter().all(|e| e.x >= m && e.y >= m && e.x < 40 - m && e.y < 40 - m));
    }

    #[test]
    fn top_fraction_takes_tail() {
        let pts: Vec<EdgePoint> = (1..=100)
            .map(|i| EdgePoint {
                x: i,
                y: 0,
                magnitude: i as f64,
            })
            .collect();
        let kept = top_fraction(&pts, 0.05);
        let mags: Vec<f64> = kept.iter().map(|e| e.magnitude).collect();
        assert_eq!(mags, vec![100.0, 99.0, 98.0, 97.0, 96.0]);
        assert!(top_fraction(&[], 0.05).is_empty());
        assert_eq!(top_fraction(&pts, 1.0).len(), 100);
        assert_eq!(top_fraction(&pts[..3], 0.05).len(), 1);
        // 5% of 10_000 pixels is more than the 100 edges available
        assert_eq!(top_of_population(&pts, 0.05, 10_000).len(), 100);
        assert_eq!(top_of_population(&pts, 0.05, 200).len(), 10);
    }

    #[test]
    fn kernel_is_normalized() {
        let k = gaussian_kernel(1.4, 5);
        assert_eq!(k.len(), 11);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((k[0] - k[10]).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(EdgeParams::default().validate().is_ok());
        let bad = EdgeParams {
            low_ratio: 0.5,
            high_ratio: 0.3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
