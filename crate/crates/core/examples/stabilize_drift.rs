//! Tracks a drifting scene against its first frame and moves the ROI with it.

use roicast::imaging::to_grayscale;
use roicast::stabilize::{apply_offset, register_translation};
use roicast::synth::{render_scene, SceneSpec, Texture};
use roicast::geometry::Quad;

fn main() {
    let spec = SceneSpec {
        interior: Texture::Stripes,
        background: Texture::Checker,
        noise_sigma: 1.5,
        drift: [0.8, -0.6],
        ..SceneSpec::new(320, 240, Quad::rect(80.0, 70.0, 240.0, 180.0).unwrap())
    };
    let scene = render_scene(&spec, 8).unwrap();
    let reference = to_grayscale(&scene.frames[0]);
    let roi = scene.truth[0].quad;
    for (frame, truth) in scene.frames.iter().zip(&scene.truth) {
        let reg = register_translation(&reference, &to_grayscale(frame), 6).unwrap();
        let moved = apply_offset(&roi, &reg);
        let err = moved.corners()[0].dist(truth.quad.corners()[0]);
        println!(
            "seq {:2}  offset ({:2}, {:2})  score {:.3}  corner error {err:.2} px",
            frame.seq, reg.dx, reg.dy, reg.score
        );
    }
}
