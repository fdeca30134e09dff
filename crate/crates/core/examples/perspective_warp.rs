//! Warps a tilted quad to a fixed raster and checks the corner mapping.

use roicast::geometry::{crop_axis_aligned, solve_homography, warp_crop, OutputSpec, Quad};
use roicast::synth::{render_scene, SceneSpec, Texture};

fn main() {
    let quad = Quad::from_xy([(120.0, 70.0), (500.0, 95.0), (530.0, 400.0), (90.0, 380.0)]).unwrap();
    let spec = SceneSpec {
        interior: Texture::Stripes,
        background: Texture::Checker,
        ..SceneSpec::new(640, 480, quad)
    };
    let frame = &render_scene(&spec, 1).unwrap().frames[0];
    let out = OutputSpec::new(400, 300).unwrap();

    let h = solve_homography(&quad, &out).unwrap();
    for c in quad.corners() {
        let p = h.apply(*c);
        println!("({:6.1}, {:6.1}) -> ({:8.3}, {:8.3})", c.x, c.y, p.x, p.y);
    }
    let warped = warp_crop(frame, &quad, &out).unwrap();
    let boxed = crop_axis_aligned(frame, &quad.bounding_box()).unwrap();
    println!("warp {}x{}, bounding-box crop {}x{}", warped.width, warped.height, boxed.width, boxed.height);

    let dir = std::env::temp_dir();
    roicast::imaging::write_ppm(&dir.join("warp_in.ppm"), frame).unwrap();
    roicast::imaging::write_ppm(&dir.join("warp_out.ppm"), &warped).unwrap();
    println!("wrote {}/warp_in.ppm and warp_out.ppm", dir.display());
}
