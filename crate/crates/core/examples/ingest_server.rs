//! Starts the ingest server in-process, posts a few frames and reads the
//! view back the way a viewer would.
//!
//! Pass `--hold` to keep serving on the printed address until Ctrl-C.

use std::net::SocketAddr;
use std::sync::Arc;

use roicast::detectors::DetectorKind;
use roicast::geometry::Quad;
use roicast::session::ControlEvent;
use roicast::synth::{render_scene, screen_scene_spec};
use roicast::transport::client::Client;
use roicast::transport::server::ServerHandle;
use roicast::transport::{ControlMessage, FramePacket, Hub, HubConfig};

fn main() {
    let hub = Arc::new(Hub::new(HubConfig::default()));
    let server = ServerHandle::spawn(SocketAddr::from(([127, 0, 0, 1], 0)), hub, None).unwrap();
    let client = Client::new(&server.base_url()).unwrap();
    println!("serving on {}", server.base_url());

    let spec = screen_scene_spec(12);
    let scene = render_scene(&spec, 5).unwrap();
    let guess = Quad::rect(150.0, 100.0, 500.0, 380.0).unwrap();
    for (i, frame) in scene.frames.iter().enumerate() {
        if i == 2 {
            client.control("demo", &ControlMessage::Event(ControlEvent::Lock)).unwrap();
        }
        let quad = if i == 0 { None } else { Some(scene.truth[i].quad) };
        let packet = FramePacket::from_frame("demo", frame, quad, DetectorKind::Screen, false, 85).unwrap();
        client.ingest(&packet).unwrap();
        let meta = client.meta("demo").unwrap();
        println!("seq {} locked={} quad={}", meta.seq, meta.locked, serde_json::to_string(&meta.quad).unwrap());
    }
    let stale = FramePacket::from_frame("demo", &scene.frames[1], Some(guess), DetectorKind::Screen, false, 85).unwrap();
    println!("re-sending seq 2: {}", client.ingest(&stale).unwrap_err());
    let latest = client.latest("demo").unwrap();
    println!("latest.jpg: {} bytes, seq {}", latest.jpeg.len(), latest.seq);

    if std::env::args().any(|a| a == "--hold") {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async { tokio::signal::ctrl_c().await.ok() });
    }
    server.shutdown().unwrap();
}
