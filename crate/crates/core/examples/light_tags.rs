//! Four bright tags mark a region; three are not enough.

use roicast::detectors::{detect_light_tags, LightTagParams};
use roicast::imaging::to_grayscale;
use roicast::synth::{random_tag_positions, render_light_tag_scene};
use rand::SeedableRng;

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let tags = random_tag_positions(&mut rng, 640, 480);
    let params = LightTagParams::default();

    let (frame, truth) = render_light_tag_scene(640, 480, &tags, 4.0, 3).unwrap();
    let found = detect_light_tags(&to_grayscale(&frame), &params, 1).unwrap();
    for (got, want) in found.quad.corners().iter().zip(truth.quad.unwrap().corners()) {
        println!("({:7.2}, {:7.2})  truth ({:5.0}, {:5.0})", got.x, got.y, want.x, want.y);
    }

    let (frame, _) = render_light_tag_scene(640, 480, &tags[..3], 4.0, 3).unwrap();
    match detect_light_tags(&to_grayscale(&frame), &params, 2) {
        Ok(c) => println!("unexpected quad {:?}", c.quad),
        Err(e) => println!("three tags: {e}"),
    }
}
