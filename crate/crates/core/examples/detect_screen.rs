//! Renders a perspective screen scene, detects it and prints the corner error.
//!
//! cargo run --release --example detect_screen -- 7

use std::time::Instant;

use roicast::cli::corner_rms;
use roicast::detectors::detect_screen;
use roicast::edges::EdgeParams;
use roicast::imaging::{draw_polygon, to_grayscale, write_ppm, YELLOW};
use roicast::lines::HoughParams;
use roicast::synth::{render_scene, screen_scene_spec};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let spec = screen_scene_spec(seed);
    let scene = render_scene(&spec, 1).expect("valid scene");
    let gray = to_grayscale(&scene.frames[0]);

    let start = Instant::now();
    let result = detect_screen(&gray, &EdgeParams::default(), &HoughParams::default(), 1);
    let took = start.elapsed();
    let truth = scene.truth[0].quad;
    println!("truth    {}", serde_json::to_string(&truth).unwrap());
    match result {
        Ok(c) => {
            println!("detected {}", serde_json::to_string(&c.quad).unwrap());
            println!("corner rms {:.2} px in {took:.1?}", corner_rms(&c.quad, &truth));
            let mut overlay = scene.frames[0].clone();
            draw_polygon(&mut overlay, &c.quad.corners().map(|p| (p.x, p.y)), YELLOW, 2);
            let path = std::env::temp_dir().join(format!("detect_screen_{seed}.ppm"));
            write_ppm(&path, &overlay).unwrap();
            println!("overlay written to {}", path.display());
        }
        Err(e) => println!("no screen found: {e}"),
    }
}
