//! Touch editing of the ROI: corner drags, double-tap, rectangle shortcut.

use roicast::detectors::DetectorKind;
use roicast::geometry::Point;
use roicast::session::{SessionConfig, SessionState};

fn show(label: &str, s: &SessionState) {
    println!("{label:<28} {}", serde_json::to_string(&s.active_quad()).unwrap());
}

fn main() {
    let mut s = SessionState::new(SessionConfig::default(), DetectorKind::Manual, 640, 480);
    show("start", &s);

    // each tap moves the nearest corner
    for (i, (x, y)) in [(60.0, 40.0), (590.0, 55.0), (610.0, 450.0), (30.0, 430.0)].into_iter().enumerate() {
        s.on_tap(Point::new(x, y), 2000 * (i as u64 + 1)).unwrap();
    }
    show("after four corner taps", &s);

    // upper-left then lower-right within a second
    s.on_tap(Point::new(100.0, 90.0), 20_000).unwrap();
    s.on_tap(Point::new(420.0, 330.0), 20_600).unwrap();
    show("rectangle shortcut", &s);

    s.on_tap(Point::new(320.0, 240.0), 30_000).ok();
    s.on_tap(Point::new(324.0, 238.0), 30_150).unwrap();
    show("double-tap", &s);

    match s.on_tap(Point::new(700.0, 10.0), 40_000) {
        Ok(_) => println!("tap outside accepted?"),
        Err(e) => println!("{:<28} {e}", "tap outside the frame"),
    }
}
