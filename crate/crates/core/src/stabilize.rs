//! Integer translation registration against a reference frame.

use serde::{Deserialize, Serialize};

use crate::error::StabilizeError;
use crate::geometry::Quad;
use crate::imaging::GrayFrame;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub dx: i32,
    pub dy: i32,
    /// Zero-mean normalized cross-correlation, in [-1, 1].
    pub score: f64,
}

/// ZNCC of `reference(x, y)` against `current(x + dx, y + dy)` over the
/// pixels where both are defined. `None` when either side is flat there.
pub fn zncc_at(reference: &GrayFrame, current: &GrayFrame, dx: i32, dy: i32) -> Option<f64> {
    let (w, h) = (reference.width as i64, reference.height as i64);
    let (dx, dy) = (dx as i64, dy as i64);
    let x0 = 0.max(-dx);
    let x1 = w.min(w - dx);
    let y0 = 0.max(-dy);
    let y1 = h.min(h - dy);
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for y in y0..y1 {
        let ra = &reference.pixels[(y * w) as usize..((y + 1) * w) as usize];
        let rb = &current.pixels[((y + dy) * w) as usize..((y + dy + 1) * w) as usize];
        for x in x0..x1 {
            let a = ra[x as usize] as u64;
            let b = rb[(x + dx) as usize] as u64;
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
    }
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    // Integer sums keep the variance test exact.
    let n_u = ((x1 - x0) * (y1 - y0)) as u128;
    let var_a = n_u * saa as u128 - (sa as u128) * (sa as u128);
    let var_b = n_u * sbb as u128 - (sb as u128) * (sb as u128);
    if var_a == 0 || var_b == 0 {
        return None;
    }
    let cov = n * sab as f64 - sa as f64 * sb as f64;
    let score = cov / ((var_a as f64).sqrt() * (var_b as f64).sqrt());
    Some(score.clamp(-1.0, 1.0))
}

/// Exhaustive search over `[-r, r]^2`. If `current` is `reference` moved by
/// `d`, the result is `d`.
pub fn register_translation(
    reference: &GrayFrame,
    current: &GrayFrame,
    search_radius: u32,
) -> Result<Registration, StabilizeError> {
    if reference.width != current.width || reference.height != current.height {
        return Err(StabilizeError::DimensionMismatch(
            reference.width,
            reference.height,
            current.width,
            current.height,
        ));
    }
    let r = search_radius as i32;
    if r < 1 || r as usize >= reference.width || r as usize >= reference.height {
        return Err(StabilizeError::BadRadius);
    }
    let mut best: Option<Registration> = None;
    for dy in -r..=r {
        for dx in -r..=r {
            let score = zncc_at(reference, current, dx, dy).ok_or(StabilizeError::FlatImage)?;
            let better = match best {
                None => true,
                Some(b) => {
                    score > b.score
                        || (score == b.score && dx.abs() + dy.abs() < b.dx.abs() + b.dy.abs())
                }
            };
            if better {
                best = Some(Registration { dx, dy, score });
            }
        }
    }
    Ok(best.expect("radius >= 1 gives at least one offset"))
}

pub fn apply_offset(quad: &Quad, reg: &Registration) -> Quad {
    quad.translated(reg.dx as f64, reg.dy as f64)
}
