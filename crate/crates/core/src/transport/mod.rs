//! Frame packets, the multipart wire form, and the in-process ingest hub
//! that the HTTP server wraps.

pub mod client;
pub mod server;

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detectors::{DetectorKind, RoiCandidate};
use crate::error::TransportError;
use crate::geometry::{crop_axis_aligned, warp_crop, OutputSpec, Quad};
use crate::imaging::{decode_frame, encode_frame, Frame, DEFAULT_QUALITY};
use crate::session::{ControlEvent, SessionConfig, SessionState};

pub const MAX_SESSION_ID_LEN: usize = 64;

/// 1-64 characters from `[A-Za-z0-9_-]`.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= MAX_SESSION_ID_LEN
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// The JSON `meta` part of an ingest request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketMeta {
    pub session_id: String,
    pub seq: u64,
    pub timestamp_ms: u64,
    #[serde(default)]
    pub quad: Option<Quad>,
    pub mode: DetectorKind,
    /// Whether `quad` is the client's locked ROI rather than a candidate.
    #[serde(default)]
    pub locked: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FramePacket {
    pub meta: PacketMeta,
    /// JPEG bytes of the full frame.
    pub image: Bytes,
}

impl FramePacket {
    /// Encodes `frame` at `quality`; seq and timestamp come from the frame.
    pub fn from_frame(
        session_id: &str,
        frame: &Frame,
        quad: Option<Quad>,
        mode: DetectorKind,
        locked: bool,
        quality: u8,
    ) -> Result<Self, TransportError> {
        let image = encode_frame(frame, quality).map_err(|e| TransportError::MalformedPacket(e.to_string()))?;
        Ok(Self {
            meta: PacketMeta {
                session_id: session_id.to_string(),
                seq: frame.seq,
                timestamp_ms: frame.timestamp_ms,
                quad,
                mode,
                locked,
            },
            image: Bytes::from(image),
        })
    }
}

/// Returns `(content_type, body)`.
pub fn encode_multipart(packet: &FramePacket) -> (String, Vec<u8>) {
    // Derived from the payload, so it cannot occur inside it in practice.
    let digest = Sha256::digest(&packet.image);
    let boundary = format!("roicast-{}", hex::encode(&digest[..12]));
    let meta = serde_json::to_string(&packet.meta).expect("packet meta serializes");
    let mut body = Vec::with_capacity(packet.image.len() + meta.len() + 256);
    body.extend_from_slice(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"meta\"\r\n\
             Content-Type: application/json\r\n\r\n{meta}\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"frame\"; filename=\"frame.jpg\"\r\n\
             Content-Type: image/jpeg\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(&packet.image);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

fn malformed(msg: impl std::fmt::Display) -> TransportError {
    TransportError::MalformedPacket(msg.to_string())
}

/// Parses a multipart ingest body. The quad, if any, is validated by
/// deserialization; the image bytes are not decoded here.
pub fn parse_multipart(content_type: &str, body: Bytes) -> Result<FramePacket, TransportError> {
    let boundary = multer::parse_boundary(content_type).map_err(malformed)?;
    let stream = futures::stream::once(async move { Ok::<Bytes, std::io::Error>(body) });
    let mut multipart = multer::Multipart::new(stream, boundary);
    futures::executor::block_on(async move {
        let (mut meta, mut image) = (None, None);
        while let Some(field) = multipart.next_field().await.map_err(malformed)? {
            match field.name() {
                Some("meta") => {
                    let text = field.text().await.map_err(malformed)?;
                    let parsed: PacketMeta = serde_json::from_str(&text).map_err(malformed)?;
                    meta = Some(parsed);
                }
                Some("frame") => image = Some(field.bytes().await.map_err(malformed)?),
                _ => {}
            }
        }
        let meta: PacketMeta = meta.ok_or_else(|| malformed("missing `meta` part"))?;
        let image = image.ok_or_else(|| malformed("missing `frame` part"))?;
        if !valid_session_id(&meta.session_id) {
            return Err(malformed(format!("bad session id `{}`", meta.session_id)));
        }
        Ok(FramePacket { meta, image })
    })
}

/// A control request body: a bare event, or an event with its own time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlMessage {
    Timed { t_ms: u64, event: ControlEvent },
    Event(ControlEvent),
}

impl ControlMessage {
    pub fn parse(body: &[u8]) -> Result<Self, TransportError> {
        serde_json::from_slice(body).map_err(malformed)
    }

    pub fn event(&self) -> &ControlEvent {
        match self {
            ControlMessage::Timed { event, .. } | ControlMessage::Event(event) => event,
        }
    }
}

/// The latest warped output of one session.
#[derive(Clone, Debug)]
pub struct PublishedView {
    pub session_id: String,
    pub seq: u64,
    pub timestamp_ms: u64,
    pub quad: Quad,
    pub mode: DetectorKind,
    pub locked: bool,
    pub frame_width: usize,
    pub frame_height: usize,
    pub out_width: usize,
    pub out_height: usize,
    /// JPEG of the warped ROI.
    pub jpeg: Bytes,
    /// The ingested full-frame JPEG, as received.
    pub preview: Bytes,
    /// SHA-256 of the warped RGB pixels before encoding.
    pub pixels_sha256: String,
    pub published_at: Instant,
}

impl PublishedView {
    pub fn staleness_ms(&self) -> u64 {
        self.published_at.elapsed().as_millis() as u64
    }

    pub fn meta(&self) -> ViewMeta {
        ViewMeta {
            session_id: self.session_id.clone(),
            seq: self.seq,
            quad: self.quad,
            mode: self.mode,
            timestamp_ms: self.timestamp_ms,
            locked: self.locked,
            frame_width: self.frame_width,
            frame_height: self.frame_height,
            out_width: self.out_width,
            out_height: self.out_height,
            staleness_ms: self.staleness_ms(),
            pixels_sha256: self.pixels_sha256.clone(),
        }
    }
}

/// JSON body of `GET /view/{id}/meta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMeta {
    pub session_id: String,
    pub seq: u64,
    pub quad: Quad,
    pub mode: DetectorKind,
    pub timestamp_ms: u64,
    pub locked: bool,
    pub frame_width: usize,
    pub frame_height: usize,
    pub out_width: usize,
    pub out_height: usize,
    pub staleness_ms: u64,
    pub pixels_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub last_seq: Option<u64>,
    pub accepted: u64,
    pub rejected: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// What the server publishes for a frame: the warped ROI, or the clipped
/// bounding box in face mode.
pub fn render_roi(frame: &Frame, quad: &Quad, mode: DetectorKind, out: &OutputSpec) -> Result<Frame, TransportError> {
    let result = match mode {
        DetectorKind::Face => crop_axis_aligned(frame, &quad.bounding_box()),
        _ => warp_crop(frame, quad, out),
    };
    result.map_err(malformed)
}

/// Called with every published view and its pre-encode pixels.
pub type Observer = Arc<dyn Fn(&PublishedView, &Frame) + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HubConfig {
    pub quality: u8,
    pub output: OutputSpec,
    pub session: SessionConfig,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self {
            quality: DEFAULT_QUALITY,
            output: OutputSpec::default(),
            session: SessionConfig::default(),
        }
    }
}

struct PendingControl {
    event: ControlEvent,
    t_ms: Option<u64>,
    arrived: Instant,
}

#[derive(Default)]
struct SessionCore {
    last_seq: Option<u64>,
    /// Remote-control state; its lock overrides the client's quad.
    state: Option<SessionState>,
    /// Timestamp of the newest accepted packet and when it arrived.
    clock: Option<(u64, Instant)>,
    last_control_ms: u64,
}

struct SessionSlot {
    core: Mutex<SessionCore>,
    inbox: Mutex<VecDeque<PendingControl>>,
    view: RwLock<Option<Arc<PublishedView>>>,
    accepted: AtomicU64,
    rejected: AtomicU64,
}

impl SessionSlot {
    fn new() -> Self {
        Self {
            core: Mutex::new(SessionCore::default()),
            inbox: Mutex::new(VecDeque::new()),
            view: RwLock::new(None),
            accepted: AtomicU64::new(0),
            rejected: AtomicU64::new(0),
        }
    }
}

/// Per-session ingest, warp and publish. Each session is updated under its
/// own mutex; views are swapped whole, so readers never see a partial one.
pub struct Hub {
    config: HubConfig,
    sessions: RwLock<BTreeMap<String, Arc<SessionSlot>>>,
    observer: Option<Observer>,
}

impl Hub {
    pub fn new(config: HubConfig) -> Self {
        Self {
            config,
            sessions: RwLock::new(BTreeMap::new()),
            observer: None,
        }
    }

    pub fn with_observer(mut self, observer: Observer) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn config(&self) -> &HubConfig {
        &self.config
    }

    fn slot(&self, id: &str) -> Option<Arc<SessionSlot>> {
        self.sessions.read().expect("sessions lock").get(id).cloned()
    }

    fn slot_or_create(&self, id: &str) -> Arc<SessionSlot> {
        if let Some(s) = self.slot(id) {
            return s;
        }
        let mut map = self.sessions.write().expect("sessions lock");
        map.entry(id.to_string())
            .or_insert_with(|| Arc::new(SessionSlot::new()))
            .clone()
    }

    /// Accepts the packet if its seq is newer than the session's last one,
    /// then decodes, warps and publishes it. Creates the session on first
    /// use. Returns the published view.
    pub fn ingest(&self, packet: FramePacket) -> Result<Arc<PublishedView>, TransportError> {
        let id = packet.meta.session_id.clone();
        if !valid_session_id(&id) {
            return Err(malformed(format!("bad session id `{id}`")));
        }
        let slot = self.slot_or_create(&id);
        let result = self.ingest_locked(&slot, packet);
        let counter = if result.is_ok() { &slot.accepted } else { &slot.rejected };
        counter.fetch_add(1, Ordering::Relaxed);
        match &result {
            Ok(v) => log::debug!("{id}: accepted seq {}", v.seq),
            Err(e) => log::debug!("{id}: rejected: {e}"),
        }
        result
    }

    fn ingest_locked(&self, slot: &SessionSlot, packet: FramePacket) -> Result<Arc<PublishedView>, TransportError> {
        let mut core = slot.core.lock().expect("session lock");
        let meta = &packet.meta;
        if let Some(last) = core.last_seq {
            if meta.seq <= last {
                return Err(TransportError::StaleSeq { seq: meta.seq, last });
            }
        }
        let frame = decode_frame(&packet.image, meta.timestamp_ms, meta.seq).map_err(malformed)?;
        let now = Instant::now();

        let session_cfg = self.config.session;
        let state = core
            .state
            .get_or_insert_with(|| SessionState::new(session_cfg, meta.mode, frame.width, frame.height));
        if state.mode() != meta.mode {
            state.set_mode(meta.mode);
        }
        // Controls queued since the last packet refer to what was showing
        // then, so they go before this packet's candidate.
        self.drain_controls(slot, &mut core);
        let state = core.state.as_mut().expect("created above");
        if let (Some(q), true) = (meta.quad, meta.mode != DetectorKind::Manual) {
            if state.candidate().map(|c| c.quad) != Some(q) {
                // Mode was synced above, so this cannot mismatch.
                let _ = state.on_candidate(RoiCandidate {
                    quad: q,
                    source: meta.mode,
                    frame_seq: meta.seq,
                });
            }
        }
        core.clock = Some((meta.timestamp_ms, now));
        core.last_seq = Some(meta.seq);

        let state = core.state.as_ref().expect("created above");
        let (quad, locked) = match (state.locked(), meta.quad) {
            (Some(q), _) => (*q, true),
            (None, Some(q)) => (q, meta.locked),
            (None, None) => (Quad::full_frame(frame.width, frame.height), false),
        };
        let warped = render_roi(&frame, &quad, meta.mode, &self.config.output)?;
        let jpeg = encode_frame(&warped, self.config.quality).map_err(malformed)?;
        let view = Arc::new(PublishedView {
            session_id: meta.session_id.clone(),
            seq: meta.seq,
            timestamp_ms: meta.timestamp_ms,
            quad,
            mode: meta.mode,
            locked,
            frame_width: frame.width,
            frame_height: frame.height,
            out_width: warped.width,
            out_height: warped.height,
            jpeg: Bytes::from(jpeg),
            preview: packet.image.clone(),
            pixels_sha256: sha256_hex(&warped.pixels),
            published_at: now,
        });
        *slot.view.write().expect("view lock") = Some(view.clone());
        if let Some(obs) = &self.observer {
            obs(&view, &warped);
        }
        Ok(view)
    }

    /// Applies queued control events in arrival order. Events without an
    /// explicit time are stamped on the client's frame clock: the newest
    /// packet timestamp plus the time elapsed since it arrived.
    fn drain_controls(&self, slot: &SessionSlot, core: &mut SessionCore) {
        let pending: Vec<PendingControl> = slot.inbox.lock().expect("inbox lock").drain(..).collect();
        for p in pending {
            let t = p.t_ms.unwrap_or_else(|| match core.clock {
                Some((ts, at)) => ts + p.arrived.saturating_duration_since(at).as_millis() as u64,
                None => 0,
            });
            let t = t.max(core.last_control_ms);
            core.last_control_ms = t;
            if let Some(state) = core.state.as_mut() {
                if let Err(e) = state.apply_control(&p.event, t) {
                    log::info!("control {:?} rejected: {e}", p.event);
                }
            }
        }
    }

    /// Queues a control event; it takes effect at the session's next ingest.
    pub fn control(&self, session_id: &str, msg: ControlMessage) -> Result<(), TransportError> {
        let slot = self
            .slot(session_id)
            .ok_or_else(|| TransportError::UnknownSession(session_id.to_string()))?;
        let t_ms = match &msg {
            ControlMessage::Timed { t_ms, .. } => Some(*t_ms),
            ControlMessage::Event(_) => None,
        };
        slot.inbox.lock().expect("inbox lock").push_back(PendingControl {
            event: msg.event().clone(),
            t_ms,
            arrived: Instant::now(),
        });
        Ok(())
    }

    pub fn get_latest(&self, session_id: &str) -> Result<Arc<PublishedView>, TransportError> {
        let slot = self
            .slot(session_id)
            .ok_or_else(|| TransportError::UnknownSession(session_id.to_string()))?;
        let view = slot.view.read().expect("view lock").clone();
        view.ok_or_else(|| TransportError::UnknownSession(session_id.to_string()))
    }

    /// The server-side lock, if a control event set one.
    pub fn remote_lock(&self, session_id: &str) -> Option<Quad> {
        let slot = self.slot(session_id)?;
        let core = slot.core.lock().expect("session lock");
        core.state.as_ref().and_then(|s| s.locked().copied())
    }

    pub fn sessions(&self) -> Vec<SessionSummary> {
        let map = self.sessions.read().expect("sessions lock");
        map.iter()
            .map(|(id, slot)| SessionSummary {
                session_id: id.clone(),
                last_seq: slot.view.read().expect("view lock").as_ref().map(|v| v.seq),
                accepted: slot.accepted.load(Ordering::Relaxed),
                rejected: slot.rejected.load(Ordering::Relaxed),
            })
            .collect()
    }
}
