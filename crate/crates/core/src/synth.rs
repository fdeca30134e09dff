//! Seeded synthetic scenes with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::order_corners;
use crate::error::SynthError;
use crate::geometry::{Point, Quad};
use crate::imaging::Frame;

/// Corners must stay this far inside the frame.
pub const SCENE_MARGIN: f64 = 5.0;
const SUPERSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Texture {
    Uniform,
    Checker,
    /// Rows of short dashes, roughly like lines of text.
    Stripes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub true_quad: Quad,
    #[serde(default = "uniform")]
    pub interior: Texture,
    #[serde(default = "uniform")]
    pub background: Texture,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Whole-scene motion in pixels per frame.
    #[serde(default)]
    pub drift: [f64; 2],
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_interval")]
    pub frame_interval_ms: u64,
    /// Frame count used by the CLI.
    #[serde(default = "default_frames")]
    pub frames: usize,
}

fn uniform() -> Texture {
    Texture::Uniform
}
fn default_interval() -> u64 {
    100
}
fn default_frames() -> usize {
    10
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, true_quad: Quad) -> Self {
        Self {
            width,
            height,
            true_quad,
            interior: Texture::Uniform,
            background: Texture::Uniform,
            noise_sigma: 0.0,
            drift: [0.0, 0.0],
            seed: 0,
            frame_interval_ms: default_interval(),
            frames: default_frames(),
        }
    }

    /// Ground-truth quad of frame `k`.
    pub fn quad_at(&self, k: usize) -> Quad {
        self.true_quad
            .translated(self.drift[0] * k as f64, self.drift[1] * k as f64)
    }

    pub fn validate(&self, n_frames: usize) -> Result<(), SynthError> {
        if self.width < 2 * SCENE_MARGIN as usize + 1 || self.height < 2 * SCENE_MARGIN as usize + 1 {
            return Err(SynthError::SpecOutOfBounds(format!(
                "frame {}x{} too small",
                self.width, self.height
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SynthError::SpecOutOfBounds("noise_sigma must be >= 0".into()));
        }
        if !self.drift.iter().all(|d| d.is_finite()) {
            return Err(SynthError::SpecOutOfBounds("drift must be finite".into()));
        }
        let max_x = self.width as f64 - 1.0 - SCENE_MARGIN;
        let max_y = self.height as f64 - 1.0 - SCENE_MARGIN;
        // Drift is linear, so checking the first and last frames covers all.
        for k in [0, n_frames.saturating_sub(1)] {
            for p in self.quad_at(k).corners() {
                if p.x < SCENE_MARGIN || p.y < SCENE_MARGIN || p.x > max_x || p.y > max_y {
                    return Err(SynthError::SpecOutOfBounds(format!(
                        "frame {k}: corner ({:.1}, {:.1}) within {SCENE_MARGIN} px of the border",
                        p.x, p.y
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub seq: u64,
    pub quad: Quad,
}

#[derive(Clone, Debug)]
pub struct RenderedScene {
    pub frames: Vec<Frame>,
    pub truth: Vec<TruthRecord>,
}

/// One line of text-like dashes.
#[derive(Clone, Debug)]
struct TextRow {
    /// Sorted, non-overlapping `[start, end)` runs.
    runs: Vec<(f64, f64)>,
}

/// Texture values as a function of scene coordinates.
struct Painter {
    interior: Texture,
    background: Texture,
    rows_in: Vec<TextRow>,
    rows_bg: Vec<TextRow>,
}

const LINE_PITCH: f64 = 14.0;
const TEXT_HEIGHT: f64 = 6.0;
// Scene coordinates below this are part of the texture layout; the layout
// is generated wide enough to cover any drift within the frame.
const LAYOUT_PAD: f64 = 256.0;

impl Painter {
    fn new(spec: &SceneSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7E57_7E57_7E57_7E57);
        let rows_in = text_rows(&mut rng, spec.width, spec.height);
        let rows_bg = text_rows(&mut rng, spec.width, spec.height);
        Self {
            interior: spec.interior,
            background: spec.background,
            rows_in,
            rows_bg,
        }
    }

    fn interior(&self, u: f64, v: f64) -> f64 {
        match self.interior {
            Texture::Uniform => 225.0,
            Texture::Checker => {
                if checker(u, v, 16.0) {
                    240.0
                } else {
                    212.0
                }
            }
            Texture::Stripes => {
                if in_text(&self.rows_in, u, v) {
                    165.0
                } else {
                    238.0
                }
            }
        }
    }

    fn background(&self, u: f64, v: f64) -> f64 {
        match self.background {
            Texture::Uniform => 40.0,
            Texture::Checker => {
                if checker(u, v, 20.0) {
                    62.0
                } else {
                    30.0
                }
            }
            Texture::Stripes => {
                if in_text(&self.rows_bg, u, v) {
                    62.0
                } else {
                    36.0
                }
            }
        }
    }
}

fn checker(u: f64, v: f64, cell: f64) -> bool {
    ((u / cell).floor() as i64 + (v / cell).floor() as i64).rem_euclid(2) == 0
}

fn text_rows(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Vec<TextRow> {
    let span_x = width as f64 + 2.0 * LAYOUT_PAD;
    let n_rows = ((height as f64 + 2.0 * LAYOUT_PAD) / LINE_PITCH).ceil() as usize;
    (0..n_rows)
        .map(|_| {
            let mut runs = Vec::new();
            let mut x = rng.gen_range(0.0..20.0);
            // Ragged right margin, as in real text.
            let end = span_x - rng.gen_range(0.0..span_x * 0.3);
            while x < end {
                let len = rng.gen_range(6.0..36.0);
                runs.push((x, (x + len).min(end)));
                x += len + rng.gen_range(4.0..9.0);
            }
            TextRow { runs }
        })
        .collect()
}

fn in_text(rows: &[TextRow], u: f64, v: f64) -> bool {
    let (u, v) = (u + LAYOUT_PAD, v + LAYOUT_PAD);
    if u < 0.0 || v < 0.0 {
        return false;
    }
    let row = (v / LINE_PITCH) as usize;
    if v - row as f64 * LINE_PITCH >= TEXT_HEIGHT {
        return false;
    }
    let Some(r) = rows.get(row) else { return false };
    let i = r.runs.partition_point(|&(s, _)| s <= u);
    i > 0 && u < r.runs[i - 1].1
}

/// Fraction of pixel `(x, y)` (the unit square centred there) inside `q`.
fn coverage(q: &Quad, x: usize, y: usize) -> f64 {
    let (cx, cy) = (x as f64, y as f64);
    let c = q.corners();
    // Signed distance of the pixel centre to each edge, positive inside.
    let mut min_d = f64::INFINITY;
    for i in 0..4 {
        let (a, b) = (c[i], c[(i + 1) % 4]);
        let (ex, ey) = (b.x - a.x, b.y - a.y);
        let len = (ex * ex + ey * ey).sqrt();
        let d = (ex * (cy - a.y) - ey * (cx - a.x)) / len;
        min_d = min_d.min(d);
    }
    if min_d >= 0.75 {
        return 1.0;
    }
    if min_d <= -0.75 {
        return 0.0;
    }
    let mut hits = 0;
    for sy in 0..SUPERSAMPLE {
        for sx in 0..SUPERSAMPLE {
            let p = Point::new(
                cx - 0.5 + (sx as f64 + 0.5) / SUPERSAMPLE as f64,
                cy - 0.5 + (sy as f64 + 0.5) / SUPERSAMPLE as f64,
            );
            if q.contains(p) {
                hits += 1;
            }
        }
    }
    hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
}

fn render_frame(spec: &SceneSpec, painter: &Painter, k: usize) -> Frame {
    let (w, h) = (spec.width, spec.height);
    let quad = spec.quad_at(k);
    let (ox, oy) = (spec.drift[0] * k as f64, spec.drift[1] * k as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    let normal = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma checked"));
    let mut pixels = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            // Texture lives in scene coordinates and moves with the drift.
            let (u, v) = (x as f64 - ox, y as f64 - oy);
            let cov = coverage(&quad, x, y);
            let mut val = if cov >= 1.0 {
                painter.interior(u, v)
            } else if cov <= 0.0 {
                painter.background(u, v)
            } else {
                cov * painter.interior(u, v) + (1.0 - cov) * painter.background(u, v)
            };
            if let Some(n) = &normal {
                val += n.sample(&mut rng);
            }
            let g = val.round().clamp(0.0, 255.0) as u8;
            pixels.extend_from_slice(&[g, g, g]);
        }
    }
    let ts = k as u64 * spec.frame_interval_ms;
    Frame::new(w, h, pixels, ts, k as u64 + 1).expect("buffer sized to dims")
}

/// Renders `n_frames` frames with seqs `1..=n_frames`. Deterministic in
/// the scene spec, including the seed.
pub fn render_scene(spec: &SceneSpec, n_frames: usize) -> Result<RenderedScene, SynthError> {
    spec.validate(n_frames)?;
    let painter = Painter::new(spec);
    let frames: Vec<Frame> = (0..n_frames)
        .into_par_iter()
        .map(|k| render_frame(spec, &painter, k))
        .collect();
    let truth = (0..n_frames)
        .map(|k| TruthRecord {
            seq: k as u64 + 1,
            quad: spec.quad_at(k),
        })
        .collect();
    Ok(RenderedScene { frames, truth })
}

pub fn format_truth(truth: &[TruthRecord]) -> String {
    truth
        .iter()
        .map(|t| serde_json::to_string(t).expect("truth serializes") + "\n")
        .collect()
}

pub fn parse_truth(text: &str) -> Result<Vec<TruthRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Random screen-like quad: a centred rectangle of 45-70% of the frame
/// with each corner pushed by up to `perspective` of the size.
pub fn random_screen_quad<R: Rng>(rng: &mut R, width: usize, height: usize, perspective: f64) -> Quad {
    let (w, h) = (width as f64, height as f64);
    loop {
        let qw = w * rng.gen_range(0.45..0.70);
        let qh = h * rng.gen_range(0.45..0.70);
        let cx = w / 2.0 + rng.gen_range(-0.06..0.06) * w;
        let cy = h / 2.0 + rng.gen_range(-0.06..0.06) * h;
        let base = [
            (cx - qw / 2.0, cy - qh / 2.0),
            (cx + qw / 2.0, cy - qh / 2.0),
            (cx + qw / 2.0, cy + qh / 2.0),
            (cx - qw / 2.0, cy + qh / 2.0),
        ];
        let pts = base.map(|(x, y)| {
            Point::new(
                x + rng.gen_range(-perspective..=perspective) * qw,
                y + rng.gen_range(-perspective..=perspective) * qh,
            )
        });
        let inside = pts.iter().all(|p| {
            p.x >= SCENE_MARGIN
                && p.y >= SCENE_MARGIN
                && p.x <= w - 1.0 - SCENE_MARGIN
                && p.y <= h - 1.0 - SCENE_MARGIN
        });
        if let (true, Ok(q)) = (inside, Quad::new(pts)) {
            return q;
        }
    }
}

/// The acceptance-style screen scene: perspective quad, text-like
/// background, noise sigma 2.
pub fn screen_scene_spec(seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quad = random_screen_quad(&mut rng, 640, 480, 0.08);
    SceneSpec {
        interior: Texture::Uniform,
        background: Texture::Stripes,
        noise_sigma: 2.0,
        seed,
        frames: 1,
        ..SceneSpec::new(640, 480, quad)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LightTagTruth {
    pub centroids: Vec<Point>,
    /// Tag quad in detector corner order; `None` unless exactly four
    /// separate tags form a valid quad.
    pub quad: Option<Quad>,
    /// False when tags touch or overlap and would merge into one blob.
    pub valid: bool,
}

pub const TAG_BACKGROUND: u8 = 30;

/// Dark frame with a saturated 3x3 blob centred on each rounded position.
pub fn render_light_tag_scene(
    width: usize,
    height: usize,
    positions: &[Point],
    noise_sigma: f64,
    seed: u64,
) -> Result<(Frame, LightTagTruth), SynthError> {
    let centres: Vec<(i64, i64)> = positions
        .iter()
        .map(|p| (p.x.round() as i64, p.y.round() as i64))
        .collect();
    for (p, &(x, y)) in positions.iter().zip(&centres) {
        if !(p.x.is_finite() && p.y.is_finite())
            || x < 1
            || y < 1
            || x > width as i64 - 2
            || y > height as i64 - 2
        {
            return Err(SynthError::SpecOutOfBounds(format!(
                "tag at ({:.1}, {:.1}) does not fit in {width}x{height}",
                p.x, p.y
            )));
        }
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(SynthError::SpecOutOfBounds("noise_sigma must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).expect("sigma checked"));
    let mut gray = vec![TAG_BACKGROUND; width * height];
    if let Some(n) = &normal {
        for g in gray.iter_mut() {
            // Keep background noise well below any tag threshold.
            *g = (TAG_BACKGROUND as f64 + n.sample(&mut rng)).round().clamp(0.0, 120.0) as u8;
        }
    }
    for &(cx, cy) in &centres {
        for y in cy - 1..=cy + 1 {
            for x in cx - 1..=cx + 1 {
                gray[y as usize * width + x as usize] = 255;
            }
        }
    }
    // Two 3x3 squares merge under 4-connectivity when they overlap or share
    // an edge.
    let mut valid = true;
    for i in 0..centres.len() {
        for j in i + 1..centres.len() {
            let dx = (centres[i].0 - centres[j].0).abs();
            let dy = (centres[i].1 - centres[j].1).abs();
            if (dx <= 3 && dy <= 2) || (dx <= 2 && dy <= 3) {
                valid = false;
            }
        }
    }
    let centroids: Vec<Point> = centres
        .iter()
        .map(|&(x, y)| Point::new(x as f64, y as f64))
        .collect();
    let quad = if valid && centroids.len() == 4 {
        Quad::new(order_corners([centroids[0], centroids[1], centroids[2], centroids[3]])).ok()
    } else {
        None
    };
    let pixels = gray.iter().flat_map(|&g| [g, g, g]).collect();
    let frame = Frame::new(width, height, pixels, 0, 1).expect("buffer sized to dims");
    Ok((
        frame,
        LightTagTruth {
            centroids,
            quad,
            valid,
        },
    ))
}

/// Four tag positions near the corners of a random perspective quad.
pub fn random_tag_positions<R: Rng>(rng: &mut R, width: usize, height: usize) -> [Point; 4] {
    let q = random_screen_quad(rng, width, height, 0.08);
    q.corners().map(|p| Point::new(p.x.round(), p.y.round()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::to_grayscale;

    fn spec() -> SceneSpec {
        SceneSpec::new(160, 120, Quad::rect(40.0, 30.0, 120.0, 90.0).unwrap())
    }

    #[test]
    fn static_clean_scene_repeats() {
        let s = render_scene(&spec(), 3).unwrap();
        assert_eq!(s.frames[0].pixels, s.frames[2].pixels);
        assert_eq!(s.frames[2].seq, 3);
        assert_eq!(s.frames[2].timestamp_ms, 200);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut sp = spec();
        sp.noise_sigma = 4.0;
        sp.background = Texture::Stripes;
        sp.interior = Texture::Checker;
        sp.seed = 77;
        let a = render_scene(&sp, 4).unwrap();
        let b = render_scene(&sp, 4).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.pixels, fb.pixels);
        }
        sp.seed = 78;
        let c = render_scene(&sp, 1).unwrap();
        assert_ne!(a.frames[0].pixels, c.frames[0].pixels);
    }

    #[test]
    fn drift_moves_truth() {
        let mut sp = spec();
        sp.drift = [1.0, 0.0];
        let s = render_scene(&sp, 10).unwrap();
        assert_eq!(s.truth[9].quad, sp.true_quad.translated(9.0, 0.0));
        sp.drift = [10.0, 0.0];
        assert!(matches!(render_scene(&sp, 10), Err(SynthError::SpecOutOfBounds(_))));
    }

    #[test]
    fn brightness_levels() {
        for tex in [Texture::Uniform, Texture::Checker, Texture::Stripes] {
            let mut sp = spec();
            sp.interior = tex;
            sp.background = tex;
            let g = to_grayscale(&render_scene(&sp, 1).unwrap().frames[0]);
            let q = sp.true_quad;
            let (mut si, mut ni, mut sb, mut nb) = (0.0, 0.0, 0.0, 0.0);
            for y in 0..g.height {
                for x in 0..g.width {
                    let c = coverage(&q, x, y);
                    if c >= 1.0 {
                        si += g.get(x, y) as f64;
                        ni += 1.0;
                    } else if c <= 0.0 {
                        sb += g.get(x, y) as f64;
                        nb += 1.0;
                    }
                }
            }
            assert!(si / ni >= 200.0, "{tex:?} interior {}", si / ni);
            assert!(sb / nb <= 80.0, "{tex:?} background {}", sb / nb);
        }
    }

    #[test]
    fn half_covered_edge_pixel() {
        let q = Quad::rect(10.5, 10.5, 40.5, 40.5).unwrap();
        assert_eq!(coverage(&q, 20, 20), 1.0);
        assert_eq!(coverage(&q, 5, 20), 0.0);
        assert!((coverage(&q, 10, 20) - 0.0).abs() < 1e-12);
        assert!((coverage(&q, 11, 20) - 1.0).abs() < 1e-12);
        let q = Quad::rect(10.0, 10.0, 40.0, 40.0).unwrap();
        assert!((coverage(&q, 10, 20) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn truth_lines_round_trip() {
        let s = render_scene(&spec(), 2).unwrap();
        let text = format_truth(&s.truth);
        assert_eq!(parse_truth(&text).unwrap(), s.truth);
        assert!(text.starts_with("{\"seq\":1,\"quad\":[[40.0,30.0]"));
    }

    #[test]
    fn tag_scene_flags_merges() {
        let pts = [
            Point::new(20.0, 20.0),
            Point::new(100.0, 22.0),
            Point::new(98.0, 90.0),
            Point::new(25.0, 85.0),
        ];
        let (f, t) = render_light_tag_scene(128, 112, &pts, 0.0, 1).unwrap();
        assert!(t.valid);
        assert!(t.quad.is_some());
        assert_eq!(f.rgb(20, 20), [255, 255, 255]);
        assert_eq!(f.rgb(22, 20), [TAG_BACKGROUND; 3]);

        let merged = [pts[0], Point::new(23.0, 20.0), pts[2], pts[3]];
        let (_, t) = render_light_tag_scene(128, 112, &merged, 0.0, 1).unwrap();
        assert!(!t.valid);
        assert!(t.quad.is_none());

        let (f, t) = render_light_tag_scene(64, 64, &[], 2.0, 5).unwrap();
        assert!(f.pixels.iter().all(|&p| p < 240));
        assert!(t.quad.is_none());

        assert!(render_light_tag_scene(64, 64, &[Point::new(0.0, 5.0)], 0.0, 1).is_err());
    }
}
