//! Drivers that feed a [`SessionState`] and run its effects.
//!
//! [`SyncDriver`] executes every effect inline, so each worker is idle again
//! before the next frame; timing comes entirely from frame timestamps and the
//! event script. [`LivePipeline`] runs the record, stream and detect workers
//! on their own threads with a single owner thread applying inbox events.

use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crossbeam_channel::{unbounded, Receiver, Sender};
use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{Consumer, ControlEvent, Effect, ScriptLine, SessionState, StreamJob};
use crate::detectors::{detector_for, Detector, DetectorKind, LightTagParams, RoiCandidate};
use crate::edges::EdgeParams;
use crate::error::{DetectError, SessionError};
use crate::geometry::Quad;
use crate::imaging::{to_grayscale, Frame};
use crate::lines::HoughParams;

pub type SinkResult = Result<(), Box<dyn std::error::Error + Send + Sync>>;

/// Detector parameters for every automatic mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSet {
    pub edges: EdgeParams,
    pub hough: HoughParams,
    pub tags: LightTagParams,
}

impl DetectorSet {
    pub fn for_mode(&self, kind: DetectorKind) -> Option<Box<dyn Detector>> {
        detector_for(kind, self.edges, self.hough, self.tags)
    }

    pub fn run(&self, kind: DetectorKind, frame: &Frame) -> Option<Result<RoiCandidate, DetectError>> {
        let det = self.for_mode(kind)?;
        Some(det.candidate(&to_grayscale(frame), frame.seq))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Worker {
    Record,
    Stream,
    Detect,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LogEntry {
    Dispatch { worker: Worker, seq: u64 },
    Candidate(RoiCandidate),
    DetectFailed { seq: u64, error: DetectError },
    Rejected { t_ms: u64, error: SessionError },
    Thumbnail(Quad),
    SinkFailed { worker: Worker, seq: u64, message: String },
}

impl LogEntry {
    pub fn dispatched_to(&self, w: Worker) -> Option<u64> {
        match *self {
            LogEntry::Dispatch { worker, seq } if worker == w => Some(seq),
            _ => None,
        }
    }
}

/// Receives the record/stream/thumbnail effects of a [`SyncDriver`].
pub trait EffectSink {
    fn record(&mut self, _frame: &Frame) -> SinkResult {
        Ok(())
    }
    fn stream(&mut self, _job: &StreamJob) -> SinkResult {
        Ok(())
    }
    fn thumbnail(&mut self, _quad: &Quad) {}
}

/// Sink that drops everything.
#[derive(Debug, Default)]
pub struct NullSink;

impl EffectSink for NullSink {}

/// Sink that keeps every stream job.
#[derive(Debug, Default)]
pub struct CollectSink {
    pub recorded: Vec<u64>,
    pub streamed: Vec<StreamJob>,
}

impl EffectSink for CollectSink {
    fn record(&mut self, frame: &Frame) -> SinkResult {
        self.recorded.push(frame.seq);
        Ok(())
    }
    fn stream(&mut self, job: &StreamJob) -> SinkResult {
        self.streamed.push(job.clone());
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{worker:?} worker failed on frame {seq}: {message}")]
pub struct SinkFailure {
    pub worker: Worker,
    pub seq: u64,
    pub message: String,
}

/// Single-threaded, wall-clock-free driver.
pub struct SyncDriver<S> {
    state: SessionState,
    detectors: DetectorSet,
    sink: S,
    log: Vec<LogEntry>,
}

impl<S: EffectSink> SyncDriver<S> {
    pub fn new(state: SessionState, detectors: DetectorSet, sink: S) -> Self {
        Self {
            state,
            detectors,
            sink,
            log: Vec::new(),
        }
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn into_parts(self) -> (SessionState, S, Vec<LogEntry>) {
        (self.state, self.sink, self.log)
    }

    /// Applies a control event; rejected events are logged, not fatal.
    pub fn apply_event(&mut self, event: &ControlEvent, t_ms: u64) {
        match self.state.apply_control(event, t_ms) {
            Ok(effects) => {
                for e in effects {
                    if let Effect::Thumbnail(q) = e {
                        self.sink.thumbnail(&q);
                        self.log.push(LogEntry::Thumbnail(q));
                    }
                }
            }
            Err(error) => {
                debug!("event at {t_ms} ms rejected: {error}");
                self.log.push(LogEntry::Rejected { t_ms, error });
            }
        }
    }

    /// Feeds one frame at its own timestamp and runs the resulting effects.
    pub fn push_frame(&mut self, frame: Arc<Frame>) -> Result<(), SinkFailure> {
        let now = frame.timestamp_ms;
        let effects = match self.state.on_frame(frame, now) {
            Ok(e) => e,
            Err(error) => {
                self.log.push(LogEntry::Rejected { t_ms: now, error });
                return Ok(());
            }
        };
        for effect in effects {
            match effect {
                Effect::Record(f) => {
                    self.log.push(LogEntry::Dispatch {
                        worker: Worker::Record,
                        seq: f.seq,
                    });
                    self.sink.record(&f).map_err(|e| SinkFailure {
                        worker: Worker::Record,
                        seq: f.seq,
                        message: e.to_string(),
                    })?;
                }
                Effect::Stream(job) => {
                    let seq = job.frame.seq;
                    self.log.push(LogEntry::Dispatch {
                        worker: Worker::Stream,
                        seq,
                    });
                    let r = self.sink.stream(&job);
                    self.state.consumer_idle(Consumer::Stream);
                    r.map_err(|e| SinkFailure {
                        worker: Worker::Stream,
                        seq,
                        message: e.to_string(),
                    })?;
                }
                Effect::Detect(f) => {
                    self.log.push(LogEntry::Dispatch {
                        worker: Worker::Detect,
                        seq: f.seq,
                    });
                    if let Some(result) = self.detectors.run(self.state.mode(), &f) {
                        self.apply_detection(f.seq, result);
                    }
                    self.state.consumer_idle(Consumer::Detect);
                }
                Effect::Thumbnail(q) => {
                    self.sink.thumbnail(&q);
                    self.log.push(LogEntry::Thumbnail(q));
                }
            }
        }
        Ok(())
    }

    fn apply_detection(&mut self, seq: u64, result: Result<RoiCandidate, DetectError>) {
        match result {
            Ok(cand) => match self.state.on_candidate(cand) {
                Ok(()) => self.log.push(LogEntry::Candidate(cand)),
                Err(error) => self.log.push(LogEntry::Rejected {
                    t_ms: self.state.last_candidate_time_ms().unwrap_or(0),
                    error,
                }),
            },
            Err(error) => self.log.push(LogEntry::DetectFailed { seq, error }),
        }
    }

    /// Interleaves frames with script lines: every line with
    /// `t_ms <= frame.timestamp_ms` is applied before that frame; the rest
    /// after the last frame.
    pub fn run<I>(&mut self, frames: I, script: &[ScriptLine]) -> Result<(), SinkFailure>
    where
        I: IntoIterator<Item = Arc<Frame>>,
    {
        let mut next = 0;
        for frame in frames {
            while next < script.len() && script[next].t_ms <= frame.timestamp_ms {
                self.apply_event(&script[next].event, script[next].t_ms);
                next += 1;
            }
            self.push_frame(frame)?;
        }
        for line in &script[next..] {
            self.apply_event(&line.event, line.t_ms);
        }
        Ok(())
    }
}

/// Replays frames and script through a fresh [`SyncDriver`] with no sink.
pub fn replay(
    state: SessionState,
    detectors: DetectorSet,
    frames: &[Arc<Frame>],
    script: &[ScriptLine],
) -> (SessionState, Vec<LogEntry>) {
    let mut driver = SyncDriver::new(state, detectors, NullSink);
    // NullSink never fails
    let _ = driver.run(frames.iter().cloned(), script);
    let (state, _, log) = driver.into_parts();
    (state, log)
}

enum Inbox {
    Frame(Arc<Frame>, u64),
    Control(ControlEvent, u64),
    Detected(u64, Result<RoiCandidate, DetectError>),
    Idle(Consumer),
    Failed(Worker, u64, String),
    Shutdown,
}

type WorkerQueues = (Sender<Arc<Frame>>, Sender<StreamJob>, Sender<(DetectorKind, Arc<Frame>)>);

pub type RecordFn = Box<dyn FnMut(&Frame) -> SinkResult + Send>;
pub type StreamFn = Box<dyn FnMut(&StreamJob) -> SinkResult + Send>;

/// Threaded pipeline: one owner thread plus record, stream and detect
/// workers. Busy workers are skipped (latest wins).
pub struct LivePipeline {
    inbox: Sender<Inbox>,
    owner: Option<JoinHandle<(SessionState, Vec<LogEntry>)>>,
}

impl LivePipeline {
    pub fn spawn(state: SessionState, detectors: DetectorSet, record: RecordFn, stream: StreamFn) -> Self {
        let (inbox_tx, inbox_rx) = unbounded::<Inbox>();
        let owner = {
            let inbox_tx = inbox_tx.clone();
            thread::Builder::new()
                .name("roi-owner".into())
                .spawn(move || owner_loop(state, detectors, inbox_tx, inbox_rx, record, stream))
                .expect("spawn owner thread")
        };
        Self {
            inbox: inbox_tx,
            owner: Some(owner),
        }
    }

    /// Hands a frame to the owner; `now_ms` drives session timing.
    pub fn push_frame(&self, frame: Arc<Frame>, now_ms: u64) {
        let _ = self.inbox.send(Inbox::Frame(frame, now_ms));
    }

    pub fn push_event(&self, event: ControlEvent, now_ms: u64) {
        let _ = self.inbox.send(Inbox::Control(event, now_ms));
    }

    /// Stops intake, waits for in-flight work, and returns the final state
    /// and log.
    pub fn finish(mut self) -> (SessionState, Vec<LogEntry>) {
        let _ = self.inbox.send(Inbox::Shutdown);
        self.owner
            .take()
            .expect("owner joined once")
            .join()
            .expect("owner thread panicked")
    }
}

fn owner_loop(
    mut state: SessionState,
    detectors: DetectorSet,
    inbox_tx: Sender<Inbox>,
    inbox_rx: Receiver<Inbox>,
    mut record: RecordFn,
    mut stream: StreamFn,
) -> (SessionState, Vec<LogEntry>) {
    let (rec_tx, rec_rx) = unbounded::<Arc<Frame>>();
    let (str_tx, str_rx) = unbounded::<StreamJob>();
    let (det_tx, det_rx) = unbounded::<(DetectorKind, Arc<Frame>)>();

    let mut workers = Vec::new();
    {
        let tx = inbox_tx.clone();
        workers.push(thread::spawn(move || {
            for f in rec_rx {
                if let Err(e) = record(&f) {
                    let _ = tx.send(Inbox::Failed(Worker::Record, f.seq, e.to_string()));
                }
            }
        }));
    }
    {
        let tx = inbox_tx.clone();
        workers.push(thread::spawn(move || {
            for job in str_rx {
                if let Err(e) = stream(&job) {
                    let _ = tx.send(Inbox::Failed(Worker::Stream, job.frame.seq, e.to_string()));
                }
                let _ = tx.send(Inbox::Idle(Consumer::Stream));
            }
        }));
    }
    {
        let tx = inbox_tx.clone();
        workers.push(thread::spawn(move || {
            for (kind, f) in det_rx {
                if let Some(result) = detectors.run(kind, &f) {
                    let _ = tx.send(Inbox::Detected(f.seq, result));
                }
                let _ = tx.send(Inbox::Idle(Consumer::Detect));
            }
        }));
    }
    drop(inbox_tx);

    let mut log = Vec::new();
    let mut senders = Some((rec_tx, str_tx, det_tx));
    let apply = |msg: Inbox, state: &mut SessionState, log: &mut Vec<LogEntry>, senders: &Option<WorkerQueues>| {
        match msg {
            Inbox::Frame(frame, now) => {
                let Some((rec, strm, det)) = senders else { return };
                match state.on_frame(frame, now) {
                    Ok(effects) => {
                        for e in effects {
                            match e {
                                Effect::Record(f) => {
                                    log.push(LogEntry::Dispatch { worker: Worker::Record, seq: f.seq });
                                    let _ = rec.send(f);
                                }
                                Effect::Stream(job) => {
                                    log.push(LogEntry::Dispatch { worker: Worker::Stream, seq: job.frame.seq });
                                    let _ = strm.send(job);
                                }
                                Effect::Detect(f) => {
                                    log.push(LogEntry::Dispatch { worker: Worker::Detect, seq: f.seq });
                                    let _ = det.send((state.mode(), f));
                                }
                                Effect::Thumbnail(q) => log.push(LogEntry::Thumbnail(q)),
                            }
                        }
                    }
                    Err(error) => log.push(LogEntry::Rejected { t_ms: now, error }),
                }
            }
            Inbox::Control(ev, now) => match state.apply_control(&ev, now) {
                Ok(effects) => {
                    for e in effects {
                        if let Effect::Thumbnail(q) = e {
                            log.push(LogEntry::Thumbnail(q));
                        }
                    }
                }
                Err(error) => log.push(LogEntry::Rejected { t_ms: now, error }),
            },
            Inbox::Detected(seq, result) => match result {
                Ok(cand) => match state.on_candidate(cand) {
                    Ok(()) => log.push(LogEntry::Candidate(cand)),
                    Err(error) => log.push(LogEntry::Rejected { t_ms: 0, error }),
                },
                Err(error) => log.push(LogEntry::DetectFailed { seq, error }),
            },
            Inbox::Idle(c) => state.consumer_idle(c),
            Inbox::Failed(worker, seq, message) => {
                warn!("{worker:?} worker failed on frame {seq}: {message}");
                log.push(LogEntry::SinkFailed { worker, seq, message });
            }
            Inbox::Shutdown => {}
        }
    };

    while let Ok(msg) = inbox_rx.recv() {
        if matches!(msg, Inbox::Shutdown) {
            break;
        }
        apply(msg, &mut state, &mut log, &senders);
    }
    // Close the worker queues, let in-flight jobs finish, then drain their
    // reports. Frames arriving now are ignored.
    senders = None;
    for w in workers {
        let _ = w.join();
    }
    while let Ok(msg) = inbox_rx.try_recv() {
        apply(msg, &mut state, &mut log, &senders);
    }
    (state, log)
}
