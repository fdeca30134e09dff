//! Event-script records shared by replay files and the control endpoint.

use serde::{Deserialize, Serialize};

use crate::detectors::DetectorKind;

/// One user/device event, tagged by `type`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlEvent {
    Tap { x: f64, y: f64 },
    Lock,
    Unlock,
    RelockPrevious,
    Mode { kind: DetectorKind },
    Sensor { accel: [f64; 3], heading: f64 },
    Record { on: bool },
    #[serde(rename = "streamflag")]
    StreamFlag { on: bool },
}

/// `{"t_ms": .., "event": {..}}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptLine {
    pub t_ms: u64,
    pub event: ControlEvent,
}

#[derive(Debug, thiserror::Error)]
#[error("script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

/// Parses JSON lines; blank lines are skipped. Lines are stably sorted by
/// `t_ms`.
pub fn parse_script(text: &str) -> Result<Vec<ScriptLine>, ScriptError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: ScriptLine = serde_json::from_str(line).map_err(|e| ScriptError {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(parsed);
    }
    out.sort_by_key(|l| l.t_ms);
    Ok(out)
}

pub fn format_script(lines: &[ScriptLine]) -> String {
    lines
        .iter()
        .map(|l| serde_json::to_string(l).expect("script lines always serialize") + "\n")
        .collect()
}
