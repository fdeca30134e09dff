//! Writes a drifting synthetic sequence with ground truth, the same layout
//! `roicast synth` produces.

use roicast::geometry::Quad;
use roicast::imaging::write_sequence;
use roicast::synth::{format_truth, render_scene, SceneSpec, Texture};

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("roicast_scene"));
    let spec = SceneSpec {
        interior: Texture::Uniform,
        background: Texture::Stripes,
        noise_sigma: 2.0,
        drift: [0.5, 0.25],
        seed: 9,
        frames: 12,
        ..SceneSpec::new(
            640,
            480,
            Quad::from_xy([(150.0, 110.0), (470.0, 95.0), (500.0, 360.0), (130.0, 340.0)]).unwrap(),
        )
    };
    let scene = render_scene(&spec, spec.frames).unwrap();
    write_sequence(&out, &scene.frames).unwrap();
    std::fs::write(out.join("truth.jsonl"), format_truth(&scene.truth)).unwrap();
    std::fs::write(out.join("spec.json"), serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    println!("{} frames in {}", scene.frames.len(), out.display());
}
