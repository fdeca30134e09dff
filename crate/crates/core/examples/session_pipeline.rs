//! Replays a synthetic clip through the session state machine with a
//! scripted lock, printing the dispatch log.

use std::sync::Arc;

use roicast::cli::format_log_entry;
use roicast::detectors::DetectorKind;
use roicast::session::pipeline::{replay, DetectorSet};
use roicast::session::{parse_script, SessionConfig, SessionState};
use roicast::synth::{render_scene, screen_scene_spec};

fn main() {
    let mut spec = screen_scene_spec(5);
    spec.drift = [0.0, 0.0];
    let frames: Vec<_> = render_scene(&spec, 30).unwrap().frames.into_iter().map(Arc::new).collect();
    let script = parse_script(
        r#"{"t_ms": 900, "event": {"type": "lock"}}
{"t_ms": 1500, "event": {"type": "sensor", "accel": [0, 0, 9.81], "heading": 0}}
{"t_ms": 1600, "event": {"type": "sensor", "accel": [0, 0, 9.81], "heading": 40}}"#,
    )
    .unwrap();

    let mut state = SessionState::new(SessionConfig::default(), DetectorKind::Screen, spec.width, spec.height);
    state.set_streaming(true);
    let (state, log) = replay(state, DetectorSet::default(), &frames, &script);
    for entry in &log {
        println!("{}", format_log_entry(entry));
    }
    println!("locked: {}", state.locked().is_some());
    println!("detecting again after motion: {}", state.is_detecting());
}
