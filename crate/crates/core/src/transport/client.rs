//! Blocking HTTP client for the transport endpoints.

use std::time::Duration;

use bytes::Bytes;
use reqwest::blocking::{Client as Http, Response};
use reqwest::StatusCode;

use super::{encode_multipart, ControlMessage, FramePacket, SessionSummary, ViewMeta};
use crate::error::TransportError;

pub struct Client {
    base: String,
    http: Http,
}

/// Body and headers of a `latest.jpg` / `preview.jpg` response.
#[derive(Clone, Debug)]
pub struct ImageReply {
    pub seq: u64,
    pub staleness_ms: u64,
    pub jpeg: Bytes,
}

fn conn(e: reqwest::Error) -> TransportError {
    TransportError::Connection(e.to_string())
}

fn check(resp: Response) -> Result<Response, TransportError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let body = resp.text().unwrap_or_default();
    let parsed: serde_json::Value = serde_json::from_str(&body).unwrap_or_default();
    Err(match status {
        StatusCode::CONFLICT => TransportError::StaleSeq {
            seq: parsed["seq"].as_u64().unwrap_or(0),
            last: parsed["last"].as_u64().unwrap_or(0),
        },
        StatusCode::BAD_REQUEST => {
            TransportError::MalformedPacket(parsed["message"].as_str().unwrap_or(&body).to_string())
        }
        StatusCode::NOT_FOUND => {
            TransportError::UnknownSession(parsed["session_id"].as_str().unwrap_or_default().to_string())
        }
        _ => TransportError::Server {
            status: status.as_u16(),
            body,
        },
    })
}

fn header_u64(resp: &Response, name: &str) -> u64 {
    resp.headers()
        .get(name)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

impl Client {
    /// `base` like `http://127.0.0.1:8080`.
    pub fn new(base: &str) -> Result<Self, TransportError> {
        let http = Http::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(conn)?;
        Ok(Self {
            base: base.trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub fn ingest(&self, packet: &FramePacket) -> Result<(), TransportError> {
        let (content_type, body) = encode_multipart(packet);
        let resp = self
            .http
            .post(format!("{}/ingest/{}", self.base, packet.meta.session_id))
            .header(reqwest::header::CONTENT_TYPE, content_type)
            .body(body)
            .send()
            .map_err(conn)?;
        check(resp).map(|_| ())
    }

    pub fn control(&self, session_id: &str, msg: &ControlMessage) -> Result<(), TransportError> {
        let resp = self
            .http
            .post(format!("{}/control/{session_id}", self.base))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(serde_json::to_vec(msg).expect("control messages serialize"))
            .send()
            .map_err(conn)?;
        check(resp).map(|_| ())
    }

    pub fn meta(&self, session_id: &str) -> Result<ViewMeta, TransportError> {
        let resp = self
            .http
            .get(format!("{}/view/{session_id}/meta", self.base))
            .send()
            .map_err(conn)?;
        check(resp)?
            .json()
            .map_err(|e| TransportError::MalformedPacket(e.to_string()))
    }

    fn image(&self, url: String) -> Result<ImageReply, TransportError> {
        let resp = check(self.http.get(url).send().map_err(conn)?)?;
        let seq = header_u64(&resp, "x-seq");
        let staleness_ms = header_u64(&resp, "x-staleness-ms");
        let jpeg = resp.bytes().map_err(conn)?;
        Ok(ImageReply {
            seq,
            staleness_ms,
            jpeg,
        })
    }

    pub fn latest(&self, session_id: &str) -> Result<ImageReply, TransportError> {
        self.image(format!("{}/view/{session_id}/latest.jpg", self.base))
    }

    pub fn preview(&self, session_id: &str) -> Result<ImageReply, TransportError> {
        self.image(format!("{}/view/{session_id}/preview.jpg", self.base))
    }

    pub fn sessions(&self) -> Result<Vec<SessionSummary>, TransportError> {
        let resp = self
            .http
            .get(format!("{}/sessions", self.base))
            .send()
            .map_err(conn)?;
        check(resp)?
            .json()
            .map_err(|e| TransportError::MalformedPacket(e.to_string()))
    }
}
