//! The interactive ROI state machine.
//!
//! [`SessionState`] is owned by one logical thread. Frames, taps, sensor
//! readings, control messages, detector results and worker idle reports are
//! applied one at a time; the state answers with [`Effect`]s for the record,
//! stream and detect workers. A busy worker is simply skipped, so it always
//! receives the newest frame once it reports idle again.

mod motion;
pub mod pipeline;
mod script;

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use motion::{heading_difference, MotionThresholds, MotionTracker, SensorSample, BASELINE_ALPHA};
pub use script::{format_script, parse_script, ControlEvent, ScriptError, ScriptLine};

use crate::detectors::{DetectorKind, RoiCandidate};
use crate::error::SessionError;
use crate::geometry::{Point, Quad};
use crate::imaging::Frame;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub candidate_period_ms: u64,
    pub double_tap_window_ms: u64,
    /// Maximum distance between the two taps of a double-tap.
    pub double_tap_radius_px: f64,
    pub rect_shortcut_window_ms: u64,
    /// m/s^2 deviation from the gravity baseline.
    pub motion_accel_threshold: f64,
    pub motion_heading_threshold: f64,
    pub motion_window_ms: u64,
    /// A tap inside the inner half of the candidate locks it.
    pub center_tap_lock: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            candidate_period_ms: 2000,
            double_tap_window_ms: 300,
            double_tap_radius_px: 20.0,
            rect_shortcut_window_ms: 1000,
            motion_accel_threshold: 1.5,
            motion_heading_threshold: 10.0,
            motion_window_ms: 500,
            center_tap_lock: false,
        }
    }
}

impl SessionConfig {
    pub fn motion_thresholds(&self) -> MotionThresholds {
        MotionThresholds {
            accel: self.motion_accel_threshold,
            heading_deg: self.motion_heading_threshold,
            window_ms: self.motion_window_ms,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = self.candidate_period_ms > 0
            && self.double_tap_window_ms > 0
            && self.double_tap_radius_px > 0.0
            && self.rect_shortcut_window_ms > 0
            && self.motion_accel_threshold > 0.0
            && self.motion_heading_threshold > 0.0
            && self.motion_window_ms > 0;
        if ok {
            Ok(())
        } else {
            Err("session periods and thresholds must be positive".into())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Consumer {
    Stream,
    Detect,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub point: Point,
    pub time_ms: u64,
}

/// What the stream worker sends: the full frame plus the ROI in force.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamJob {
    pub frame: Arc<Frame>,
    pub quad: Option<Quad>,
    pub mode: DetectorKind,
    pub locked: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Effect {
    Record(Arc<Frame>),
    Stream(StreamJob),
    Detect(Arc<Frame>),
    /// Show the warped thumbnail of a freshly locked ROI.
    Thumbnail(Quad),
}

const TAP_HISTORY: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct SessionState {
    config: SessionConfig,
    mode: DetectorKind,
    candidate: Option<RoiCandidate>,
    previous_candidate: Option<RoiCandidate>,
    locked: Option<Quad>,
    detecting: bool,
    recording: bool,
    streaming: bool,
    last_candidate_time_ms: Option<u64>,
    tap_history: VecDeque<Tap>,
    motion: MotionTracker,
    frame_size: (usize, usize),
    last_seq: Option<u64>,
    last_frame_time_ms: Option<u64>,
    stream_idle: bool,
    detect_idle: bool,
}

impl SessionState {
    /// Fresh session over a `width x height` preview. Detection starts
    /// enabled for every mode except `Manual`.
    pub fn new(config: SessionConfig, mode: DetectorKind, width: usize, height: usize) -> Self {
        Self {
            config,
            mode,
            candidate: None,
            previous_candidate: None,
            locked: None,
            detecting: mode != DetectorKind::Manual,
            recording: false,
            streaming: false,
            last_candidate_time_ms: None,
            tap_history: VecDeque::new(),
            motion: MotionTracker::default(),
            frame_size: (width, height),
            last_seq: None,
            last_frame_time_ms: None,
            stream_idle: true,
            detect_idle: true,
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }
    pub fn mode(&self) -> DetectorKind {
        self.mode
    }
    pub fn candidate(&self) -> Option<&RoiCandidate> {
        self.candidate.as_ref()
    }
    pub fn previous_candidate(&self) -> Option<&RoiCandidate> {
        self.previous_candidate.as_ref()
    }
    pub fn locked(&self) -> Option<&Quad> {
        self.locked.as_ref()
    }
    pub fn is_detecting(&self) -> bool {
        self.detecting
    }
    pub fn is_recording(&self) -> bool {
        self.recording
    }
    pub fn is_streaming(&self) -> bool {
        self.streaming
    }
    pub fn is_moving(&self) -> bool {
        self.motion.is_moving()
    }
    pub fn tap_history(&self) -> impl Iterator<Item = &Tap> {
        self.tap_history.iter()
    }
    pub fn frame_size(&self) -> (usize, usize) {
        self.frame_size
    }
    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }
    pub fn last_candidate_time_ms(&self) -> Option<u64> {
        self.last_candidate_time_ms
    }
    pub fn is_idle(&self, consumer: Consumer) -> bool {
        match consumer {
            Consumer::Stream => self.stream_idle,
            Consumer::Detect => self.detect_idle,
        }
    }

    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn set_streaming(&mut self, on: bool) {
        self.streaming = on;
    }

    /// A worker finished its job and can take the next frame.
    pub fn consumer_idle(&mut self, consumer: Consumer) {
        match consumer {
            Consumer::Stream => self.stream_idle = true,
            Consumer::Detect => self.detect_idle = true,
        }
    }

    pub fn full_frame(&self) -> Quad {
        Quad::full_frame(self.frame_size.0, self.frame_size.1)
    }

    /// Locked ROI, else the candidate, else the whole frame.
    pub fn active_quad(&self) -> Quad {
        self.explicit_quad().unwrap_or_else(|| self.full_frame())
    }

    fn explicit_quad(&self) -> Option<Quad> {
        self.locked.or(self.candidate.map(|c| c.quad))
    }

    fn detect_due(&self, now_ms: u64) -> bool {
        if !self.detecting || !self.detect_idle || self.mode == DetectorKind::Manual {
            return false;
        }
        // face mode follows the subject on every frame
        if self.mode == DetectorKind::Face {
            return true;
        }
        match (self.candidate, self.last_candidate_time_ms) {
            (Some(_), Some(t)) => now_ms.saturating_sub(t) >= self.config.candidate_period_ms,
            _ => true,
        }
    }

    /// Accepts a new preview frame and decides which workers get it.
    pub fn on_frame(&mut self, frame: Arc<Frame>, now_ms: u64) -> Result<Vec<Effect>, SessionError> {
        if let Some(last) = self.last_seq {
            if frame.seq <= last {
                return Err(SessionError::StaleFrame {
                    seq: frame.seq,
                    last,
                });
            }
        }
        self.last_seq = Some(frame.seq);
        self.last_frame_time_ms = Some(now_ms);
        self.frame_size = (frame.width, frame.height);

        let mut effects = Vec::new();
        if self.recording {
            effects.push(Effect::Record(frame.clone()));
        }
        if self.streaming && self.stream_idle {
            self.stream_idle = false;
            effects.push(Effect::Stream(StreamJob {
                frame: frame.clone(),
                quad: self.explicit_quad(),
                mode: self.mode,
                locked: self.locked.is_some(),
            }));
        }
        if self.detect_due(now_ms) {
            self.detect_idle = false;
            effects.push(Effect::Detect(frame));
        }
        Ok(effects)
    }

    /// Replaces the candidate; any locked ROI is kept.
    pub fn on_candidate(&mut self, cand: RoiCandidate) -> Result<(), SessionError> {
        if self.mode == DetectorKind::Manual || cand.source != self.mode {
            return Err(SessionError::ModeMismatch {
                mode: self.mode.to_string(),
                got: cand.source.to_string(),
            });
        }
        self.previous_candidate = self.candidate.replace(cand);
        self.last_candidate_time_ms = self.last_frame_time_ms.or(Some(0));
        Ok(())
    }

    /// Commits the candidate as the ROI and pauses detection until motion.
    pub fn lock(&mut self) -> Result<Effect, SessionError> {
        let cand = self.candidate.ok_or(SessionError::NoCandidate)?;
        Ok(self.lock_quad(cand.quad))
    }

    fn lock_quad(&mut self, quad: Quad) -> Effect {
        self.locked = Some(quad);
        self.detecting = false;
        Effect::Thumbnail(quad)
    }

    /// Locks the candidate shown before the current one.
    pub fn relock_previous(&mut self) -> Result<Effect, SessionError> {
        let prev = self.previous_candidate.ok_or(SessionError::NoCandidate)?;
        Ok(self.lock_quad(prev.quad))
    }

    pub fn unlock(&mut self) {
        self.locked = None;
        self.detecting = self.mode != DetectorKind::Manual;
    }

    /// Switching modes drops the candidates but keeps the lock.
    pub fn set_mode(&mut self, kind: DetectorKind) {
        self.mode = kind;
        self.candidate = None;
        self.previous_candidate = None;
        self.last_candidate_time_ms = None;
        self.detecting = kind != DetectorKind::Manual;
    }

    /// Touch input: double-tap, the upper-left/lower-right rectangle
    /// shortcut, center-tap lock (if enabled), else move the nearest corner.
    pub fn on_tap(&mut self, point: Point, now_ms: u64) -> Result<Vec<Effect>, SessionError> {
        let (w, h) = (self.frame_size.0 as f64, self.frame_size.1 as f64);
        if !(point.x >= 0.0 && point.x <= w && point.y >= 0.0 && point.y <= h) {
            return Err(SessionError::TapOutOfBounds {
                x: point.x,
                y: point.y,
            });
        }
        let prev = self.tap_history.back().copied();
        if prev.is_some_and(|p| now_ms <= p.time_ms) {
            return Err(SessionError::OutOfOrder { t_ms: now_ms });
        }

        if let Some(p) = prev {
            let dt = now_ms - p.time_ms;
            if dt <= self.config.double_tap_window_ms
                && p.point.dist(point) <= self.config.double_tap_radius_px
            {
                let effect = self.lock_quad(self.full_frame());
                self.tap_history.clear();
                return Ok(vec![effect]);
            }
            let upper_left = p.point.x < w / 2.0 && p.point.y < h / 2.0;
            let lower_right = point.x >= w / 2.0 && point.y >= h / 2.0;
            if dt <= self.config.rect_shortcut_window_ms && upper_left && lower_right {
                let rect = Quad::rect(p.point.x, p.point.y, point.x, point.y)
                    .map_err(|e| SessionError::InvalidQuadEdit(e.to_string()))?;
                let effect = self.lock_quad(rect);
                self.tap_history.clear();
                return Ok(vec![effect]);
            }
        }

        if self.config.center_tap_lock {
            if let Some(c) = self.candidate {
                if c.quad.scaled_about_centroid(0.5).contains(point) {
                    let effect = self.lock_quad(c.quad);
                    self.push_tap(point, now_ms);
                    return Ok(vec![effect]);
                }
            }
        }

        let working = self.active_quad();
        let idx = working.nearest_corner(point);
        let edited = working
            .with_corner(idx, point)
            .map_err(|e| SessionError::InvalidQuadEdit(e.to_string()))?;
        self.locked = Some(edited);
        self.detecting = false;
        self.push_tap(point, now_ms);
        Ok(Vec::new())
    }

    fn push_tap(&mut self, point: Point, time_ms: u64) {
        self.tap_history.push_back(Tap { point, time_ms });
        while self.tap_history.len() > TAP_HISTORY {
            self.tap_history.pop_front();
        }
    }

    /// Updates motion tracking; motion while locked resumes detection.
    /// Returns whether the device is considered moving.
    pub fn on_sensor(&mut self, sample: &SensorSample) -> bool {
        let th = self.config.motion_thresholds();
        if let Some(true) = self.motion.update(sample, &th) {
            if self.locked.is_some() && self.mode != DetectorKind::Manual {
                self.detecting = true;
            }
        }
        self.motion.is_moving()
    }

    /// Applies a scripted/control event at `now_ms`.
    pub fn apply_control(&mut self, event: &ControlEvent, now_ms: u64) -> Result<Vec<Effect>, SessionError> {
        match *event {
            ControlEvent::Tap { x, y } => self.on_tap(Point::new(x, y), now_ms),
            ControlEvent::Lock => self.lock().map(|e| vec![e]),
            ControlEvent::Unlock => {
                self.unlock();
                Ok(Vec::new())
            }
            ControlEvent::RelockPrevious => self.relock_previous().map(|e| vec![e]),
            ControlEvent::Mode { kind } => {
                self.set_mode(kind);
                Ok(Vec::new())
            }
            ControlEvent::Sensor { accel, heading } => {
                self.on_sensor(&SensorSample {
                    accel,
                    heading,
                    timestamp_ms: now_ms,
                });
                Ok(Vec::new())
            }
            ControlEvent::Record { on } => {
                self.recording = on;
                Ok(Vec::new())
            }
            ControlEvent::StreamFlag { on } => {
                self.streaming = on;
                Ok(Vec::new())
            }
        }
    }
}
