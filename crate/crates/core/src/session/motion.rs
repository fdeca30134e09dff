//! Accelerometer/compass motion detection.

use serde::{Deserialize, Serialize};

/// One accelerometer + compass reading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    /// m/s^2
    pub accel: [f64; 3],
    /// degrees, [0, 360)
    pub heading: f64,
    pub timestamp_ms: u64,
}

impl SensorSample {
    pub fn is_finite(&self) -> bool {
        self.accel.iter().all(|v| v.is_finite()) && self.heading.is_finite()
    }
}

/// Smoothing factor of the gravity/heading baselines.
pub const BASELINE_ALPHA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionThresholds {
    pub accel: f64,
    pub heading_deg: f64,
    pub window_ms: u64,
}

/// Absolute angular difference on the circle, in `[0, 180]`.
pub fn heading_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// EMA baselines plus the time of the last reading that crossed a
/// threshold. Motion holds while that crossing lies within the window.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MotionTracker {
    baseline: Option<[f64; 3]>,
    /// Unit vector of the smoothed heading.
    heading_ref: Option<[f64; 2]>,
    last_ts: Option<u64>,
    last_exceed_ms: Option<u64>,
    moving: bool,
}

impl MotionTracker {
    pub fn is_moving(&self) -> bool {
        self.moving
    }

    pub fn baseline(&self) -> Option<[f64; 3]> {
        self.baseline
    }

    /// Feeds one sample; returns `None` if it was dropped (out of order or
    /// non-finite), else the motion flag after the sample.
    pub fn update(&mut self, s: &SensorSample, th: &MotionThresholds) -> Option<bool> {
        if !s.is_finite() || self.last_ts.is_some_and(|t| s.timestamp_ms < t) {
            return None;
        }
        self.last_ts = Some(s.timestamp_ms);
        let rad = s.heading.to_radians();
        let unit = [rad.cos(), rad.sin()];
        match (self.baseline, self.heading_ref) {
            (Some(base), Some(href)) => {
                let dev = ((s.accel[0] - base[0]).powi(2)
                    + (s.accel[1] - base[1]).powi(2)
                    + (s.accel[2] - base[2]).powi(2))
                .sqrt();
                let ref_deg = href[1].atan2(href[0]).to_degrees();
                let hdev = heading_difference(s.heading, ref_deg);
                if dev > th.accel || hdev > th.heading_deg {
                    self.last_exceed_ms = Some(s.timestamp_ms);
                }
                let mut next = base;
                for (n, a) in next.iter_mut().zip(s.accel) {
                    *n += BASELINE_ALPHA * (a - *n);
                }
                self.baseline = Some(next);
                let hx = href[0] + BASELINE_ALPHA * (unit[0] - href[0]);
                let hy = href[1] + BASELINE_ALPHA * (unit[1] - href[1]);
                let norm = (hx * hx + hy * hy).sqrt();
                if norm > 1e-12 {
                    self.heading_ref = Some([hx / norm, hy / norm]);
                }
            }
            _ => {
                self.baseline = Some(s.accel);
                self.heading_ref = Some(unit);
            }
        }
        self.moving = self
            .last_exceed_ms
            .is_some_and(|e| s.timestamp_ms - e <= th.window_ms);
        Some(self.moving)
    }
}
