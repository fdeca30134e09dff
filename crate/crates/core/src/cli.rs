//! The `roicast` command line: `synth`, `detect`, `warp`, `stabilize`,
//! `stream` and `serve`.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or input error, 3 protocol
//! or connection error.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::detectors::DetectorKind;
use crate::edges::{canny, format_edge_dump};
use crate::geometry::{crop_axis_aligned, warp_crop, OutputSpec, Quad};
use crate::imaging::{
    draw_polygon, frame_filename, read_ppm, read_sequence, to_grayscale, write_index, write_ppm, write_sequence,
    Frame, IndexEntry, DEFAULT_QUALITY, INDEX_FILE, RED, YELLOW,
};
use crate::session::pipeline::{DetectorSet, EffectSink, LogEntry, SinkResult, SyncDriver};
use crate::session::{parse_script, SessionConfig, SessionState, StreamJob};
use crate::stabilize::register_translation;
use crate::synth::{format_truth, parse_truth, render_scene, SceneSpec};
use crate::transport::client::Client;
use crate::transport::server::serve;
use crate::transport::{FramePacket, Hub, HubConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_PROTOCOL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "roicast", version, about = "Quadrilateral ROI detection, warping and streaming")]
pub struct Cli {
    /// JSON file with detector, session and output settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JPEG quality, 1-100.
    #[arg(long, global = true, env = "ROICAST_QUALITY")]
    pub quality: Option<u8>,
    #[arg(long = "out-w", global = true)]
    pub out_w: Option<usize>,
    #[arg(long = "out-h", global = true)]
    pub out_h: Option<usize>,
    /// Hough rho bin width in pixels.
    #[arg(long = "hough-rho", global = true)]
    pub hough_rho: Option<f64>,
    /// Hough theta bin width in degrees.
    #[arg(long = "hough-theta", global = true)]
    pub hough_theta: Option<f64>,
    #[arg(long = "min-votes", global = true)]
    pub min_votes: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene to a PPM sequence with ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scene's frame count.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Run a detector over a PPM frame or sequence directory.
    Detect {
        #[arg(long)]
        input: PathBuf,
        /// screen, lighttag or stub.
        #[arg(long, default_value = "screen")]
        mode: DetectorKind,
        /// Candidate JSON lines; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Writes one overlay PPM per frame, candidate in yellow.
        #[arg(long)]
        overlay_dir: Option<PathBuf>,
        /// A locked quad (JSON) drawn in red on the overlays.
        #[arg(long)]
        locked: Option<String>,
        /// Directory for per-frame `x y magnitude` edge dumps.
        #[arg(long)]
        dump_edges: Option<PathBuf>,
        /// `truth.jsonl` to compare candidates against.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Where the truth report goes; stderr if absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Perspective-correct frames to the output size.
    Warp {
        #[arg(long)]
        input: PathBuf,
        /// One quad (JSON) for every frame.
        #[arg(long, conflicts_with = "quads")]
        quad: Option<String>,
        /// `{seq, quad}` JSON lines, e.g. from `detect`.
        #[arg(long)]
        quads: Option<PathBuf>,
        /// Output `.ppm` for a single frame, else a directory.
        #[arg(long)]
        out: PathBuf,
        /// Axis-aligned bounding-box crop instead of a warp.
        #[arg(long)]
        crop: bool,
    },
    /// Register each frame against the first and print the offsets.
    Stabilize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        radius: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a sequence through a session and post it to a server.
    Stream {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        server: String,
        #[arg(long, default_value = "default")]
        session: String,
        /// Event script (JSON lines `{t_ms, event}`).
        #[arg(long)]
        script: Option<PathBuf>,
        /// Frames per second cap; 0 sends as fast as possible. Without it
        /// frames go out at their recorded timestamps.
        #[arg(long)]
        max_rate: Option<f64>,
        #[arg(long)]
        record_dir: Option<PathBuf>,
        #[arg(long, default_value = "screen")]
        mode: DetectorKind,
    },
    /// Run the ingest/view server until interrupted.
    Serve {
        #[arg(long, env = "ROICAST_BIND", default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, env = "ROICAST_PORT", default_value_t = 8080)]
        port: u16,
        /// Static files served under `/ui/`.
        #[arg(long, env = "ROICAST_UI_DIR")]
        ui_dir: Option<PathBuf>,
    },
}

/// Contents of `--config`. Every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    pub detectors: DetectorSet,
    pub session: SessionConfig,
    pub quality: Option<u8>,
    pub out_w: Option<usize>,
    pub out_h: Option<usize>,
    pub seed: Option<u64>,
}

/// Settings after merging the config file and flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub detectors: DetectorSet,
    pub session: SessionConfig,
    pub quality: u8,
    pub output: OutputSpec,
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Protocol(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Protocol(_) => EXIT_PROTOCOL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Protocol(m) => m,
        }
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl Cli {
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| io(format!("{}: {e}", p.display())))?;
                serde_json::from_str::<ConfigFile>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
            }
            None => ConfigFile::default(),
        };
        let mut detectors = file.detectors;
        if let Some(r) = self.hough_rho {
            detectors.hough.rho_resolution = r;
        }
        if let Some(t) = self.hough_theta {
            detectors.hough.theta_resolution = t.to_radians();
        }
        if let Some(v) = self.min_votes {
            detectors.hough.min_votes = v;
        }
        detectors.edges.validate().map_err(usage)?;
        detectors.hough.validate().map_err(usage)?;
        detectors.tags.validate().map_err(usage)?;
        file.session.validate().map_err(usage)?;
        let quality = self.quality.or(file.quality).unwrap_or(DEFAULT_QUALITY);
        if !(1..=100).contains(&quality) {
            return Err(usage("quality must be in 1..=100"));
        }
        let defaults = OutputSpec::default();
        let output = OutputSpec::new(
            self.out_w.or(file.out_w).unwrap_or(defaults.out_width),
            self.out_h.or(file.out_h).unwrap_or(defaults.out_height),
        )
        .map_err(usage)?;
        Ok(RunConfig {
            detectors,
            session: file.session,
            quality,
            output,
            seed: self.seed.or(file.seed),
        })
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match run(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = cli.run_config()?;
    match &cli.command {
        Command::Synth { spec, out: dir, frames } => cmd_synth(&cfg, spec, dir, *frames, out),
        Command::Detect {
            input,
            mode,
            out: dest,
            overlay_dir,
            locked,
            dump_edges,
            truth,
            report,
        } => cmd_detect(
            &cfg,
            &DetectArgs {
                input,
                mode: *mode,
                out: dest.as_deref(),
                overlay_dir: overlay_dir.as_deref(),
                locked: locked.as_deref(),
                dump_edges: dump_edges.as_deref(),
                truth: truth.as_deref(),
                report: report.as_deref(),
            },
            out,
            err,
        ),
        Command::Warp {
            input,
            quad,
            quads,
            out: dest,
            crop,
        } => cmd_warp(&cfg, input, quad.as_deref(), quads.as_deref(), dest, *crop),
        Command::Stabilize { input, radius, out: dest } => cmd_stabilize(input, *radius, dest.as_deref(), out),
        Command::Stream {
            input,
            server,
            session,
            script,
            max_rate,
            record_dir,
            mode,
        } => cmd_stream(
            &cfg,
            &StreamArgs {
                input,
                server,
                session,
                script: script.as_deref(),
                max_rate: *max_rate,
                record_dir: record_dir.as_deref(),
                mode: *mode,
            },
            out,
        ),
        Command::Serve { bind, port, ui_dir } => cmd_serve(&cfg, bind, *port, ui_dir.clone(), err),
    }
}

/// A single `.ppm` (seq 1, time 0) or a sequence directory.
pub fn load_frames(path: &Path) -> Result<Vec<Frame>, CliError> {
    let frames = if path.is_dir() {
        if !path.join(INDEX_FILE).exists() {
            return Err(io(format!("{}: no {INDEX_FILE}", path.display())));
        }
        read_sequence(path).map_err(io)?
    } else {
        vec![read_ppm(path).map_err(io)?.with_meta(0, 1)]
    };
    if frames.is_empty() {
        return Err(io(format!("{}: no frames", path.display())));
    }
    Ok(frames)
}

fn open_output(path: Option<&Path>) -> Result<Option<fs::File>, CliError> {
    path.map(|p| fs::File::create(p).map_err(|e| io(format!("{}: {e}", p.display()))))
        .transpose()
}

fn emit(file: &mut Option<fs::File>, fallback: &mut dyn Write, line: &str) -> Result<(), CliError> {
    match file {
        Some(f) => writeln!(f, "{line}"),
        None => writeln!(fallback, "{line}"),
    }
    .map_err(io)
}

fn parse_quad(text: &str) -> Result<Quad, CliError> {
    serde_json::from_str(text).map_err(|e| usage(format!("bad quad `{text}`: {e}")))
}

pub fn cmd_synth(
    cfg: &RunConfig,
    spec_path: &Path,
    dir: &Path,
    frames: Option<usize>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let text = fs::read_to_string(spec_path).map_err(|e| io(format!("{}: {e}", spec_path.display())))?;
    let mut spec: SceneSpec =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", spec_path.display())))?;
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    let n = frames.unwrap_or(spec.frames);
    let scene = render_scene(&spec, n).map_err(usage)?;
    write_sequence(dir, &scene.frames).map_err(io)?;
    fs::write(dir.join("truth.jsonl"), format_truth(&scene.truth)).map_err(io)?;
    writeln!(out, "wrote {} frames to {}", n, dir.display()).map_err(io)
}

#[derive(Serialize)]
struct CandidateLine {
    seq: u64,
    source: DetectorKind,
    quad: Quad,
}

pub struct DetectArgs<'a> {
    pub input: &'a Path,
    pub mode: DetectorKind,
    pub out: Option<&'a Path>,
    pub overlay_dir: Option<&'a Path>,
    pub locked: Option<&'a str>,
    pub dump_edges: Option<&'a Path>,
    pub truth: Option<&'a Path>,
    pub report: Option<&'a Path>,
}

/// Root-mean-square distance between corresponding corners.
pub fn corner_rms(a: &Quad, b: &Quad) -> f64 {
    let sum: f64 = a
        .corners()
        .iter()
        .zip(b.corners())
        .map(|(p, q)| p.dist2(*q))
        .sum();
    (sum / 4.0).sqrt()
}

pub fn cmd_detect(cfg: &RunConfig, args: &DetectArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if args.mode == DetectorKind::Manual {
        return Err(usage("manual mode has no detector"));
    }
    let locked = args.locked.map(parse_quad).transpose()?;
    let truth: HashMap<u64, Quad> = match args.truth {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io(format!("{}: {e}", p.display())))?;
            parse_truth(&text)
                .map_err(|e| io(format!("{}: {e}", p.display())))?
                .into_iter()
                .map(|t| (t.seq, t.quad))
                .collect()
        }
        None => HashMap::new(),
    };
    let frames = load_frames(args.input)?;
    for dir in [args.overlay_dir, args.dump_edges].into_iter().flatten() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let detector = cfg.detectors.for_mode(args.mode).expect("non-manual mode");
    let mut dest = open_output(args.out)?;
    let mut report = open_output(args.report)?;
    let mut errors = Vec::new();
    let mut detected = 0;
    for frame in &frames {
        let gray = to_grayscale(frame);
        if let Some(dir) = args.dump_edges {
            let edges = canny(&gray, &cfg.detectors.edges);
            fs::write(dir.join(format!("edges_{:06}.txt", frame.seq)), format_edge_dump(&edges)).map_err(io)?;
        }
        let cand = detector.candidate(&gray, frame.seq);
        match &cand {
            Ok(c) => {
                detected += 1;
                let line = CandidateLine {
                    seq: c.frame_seq,
                    source: c.source,
                    quad: c.quad,
                };
                emit(&mut dest, out, &serde_json::to_string(&line).expect("serializes"))?;
            }
            Err(e) => {
                let _ = writeln!(err, "seq {}: no candidate: {e}", frame.seq);
            }
        }
        if let Some(t) = truth.get(&frame.seq) {
            let rms = cand.as_ref().ok().map(|c| corner_rms(&c.quad, t));
            if let Some(r) = rms {
                errors.push(r);
            }
            let line = serde_json::json!({"seq": frame.seq, "rms": rms});
            emit(&mut report, err, &line.to_string())?;
        }
        if let Some(dir) = args.overlay_dir {
            let mut img = frame.clone();
            if let Ok(c) = &cand {
                draw_polygon(&mut img, &c.quad.corners().map(|p| (p.x, p.y)), YELLOW, 2);
            }
            if let Some(q) = &locked {
                draw_polygon(&mut img, &q.corners().map(|p| (p.x, p.y)), RED, 2);
            }
            write_ppm(&dir.join(format!("overlay_{:06}.ppm", frame.seq)), &img).map_err(io)?;
        }
    }
    if !truth.is_empty() {
        let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
        let max = errors.iter().cloned().fold(0.0, f64::max);
        let summary = format!(
            "truth: {}/{} frames detected, mean corner rms {mean:.3} px, max {max:.3} px",
            errors.len(),
            frames.len()
        );
        emit(&mut report, err, &summary)?;
    }
    let _ = writeln!(err, "{detected}/{} frames produced a candidate", frames.len());
    Ok(())
}

pub fn cmd_warp(
    cfg: &RunConfig,
    input: &Path,
    quad: Option<&str>,
    quads: Option<&Path>,
    dest: &Path,
    crop: bool,
) -> Result<(), CliError> {
    let single = quad.map(parse_quad).transpose()?;
    let per_seq: HashMap<u64, Quad> = match quads {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io(format!("{}: {e}", p.display())))?;
            parse_truth(&text)
                .map_err(|e| usage(format!("{}: {e}", p.display())))?
                .into_iter()
                .map(|t| (t.seq, t.quad))
                .collect()
        }
        None => HashMap::new(),
    };
    if single.is_none() && per_seq.is_empty() {
        return Err(usage("warp needs --quad or --quads"));
    }
    let frames = load_frames(input)?;
    let mut results = Vec::new();
    for frame in &frames {
        let Some(q) = single.or_else(|| per_seq.get(&frame.seq).copied()) else {
            continue;
        };
        let warped = if crop {
            crop_axis_aligned(frame, &q.bounding_box())
        } else {
            warp_crop(frame, &q, &cfg.output)
        }
        .map_err(|e| io(format!("seq {}: {e}", frame.seq)))?;
        results.push(warped.with_meta(frame.timestamp_ms, frame.seq));
    }
    let to_file = !input.is_dir() && dest.extension().is_some_and(|e| e == "ppm");
    if to_file {
        if let Some(f) = results.first() {
            write_ppm(dest, f).map_err(io)?;
        }
    } else {
        write_sequence(dest, &results).map_err(io)?;
    }
    Ok(())
}

pub fn cmd_stabilize(input: &Path, radius: u32, dest: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let frames = load_frames(input)?;
    let reference = to_grayscale(&frames[0]);
    let mut file = open_output(dest)?;
    for frame in &frames {
        let reg = register_translation(&reference, &to_grayscale(frame), radius)
            .map_err(|e| io(format!("seq {}: {e}", frame.seq)))?;
        let line = serde_json::json!({"seq": frame.seq, "dx": reg.dx, "dy": reg.dy, "score": reg.score});
        emit(&mut file, out, &line.to_string())?;
    }
    Ok(())
}

pub struct StreamArgs<'a> {
    pub input: &'a Path,
    pub server: &'a str,
    pub session: &'a str,
    pub script: Option<&'a Path>,
    pub max_rate: Option<f64>,
    pub record_dir: Option<&'a Path>,
    pub mode: DetectorKind,
}

/// Posts stream jobs and writes recorded frames.
struct NetSink {
    client: Client,
    session: String,
    quality: u8,
    record_dir: Option<PathBuf>,
    recorded: Vec<IndexEntry>,
}

impl EffectSink for NetSink {
    fn record(&mut self, frame: &Frame) -> SinkResult {
        if let Some(dir) = &self.record_dir {
            let filename = frame_filename(frame.seq);
            write_ppm(&dir.join(&filename), frame)?;
            self.recorded.push(IndexEntry {
                seq: frame.seq,
                timestamp_ms: frame.timestamp_ms,
                filename,
            });
        }
        Ok(())
    }

    fn stream(&mut self, job: &StreamJob) -> SinkResult {
        let packet = FramePacket::from_frame(&self.session, &job.frame, job.quad, job.mode, job.locked, self.quality)?;
        self.client.ingest(&packet)?;
        Ok(())
    }
}

pub fn format_log_entry(entry: &LogEntry) -> String {
    match entry {
        LogEntry::Dispatch { worker, seq } => format!("dispatch {worker:?} seq={seq}").to_lowercase(),
        LogEntry::Candidate(c) => format!(
            "candidate seq={} source={} quad={}",
            c.frame_seq,
            c.source,
            serde_json::to_string(&c.quad).expect("serializes")
        ),
        LogEntry::DetectFailed { seq, error } => format!("detect-failed seq={seq} {error}"),
        LogEntry::Rejected { t_ms, error } => format!("rejected t={t_ms} {error}"),
        LogEntry::Thumbnail(q) => format!("thumbnail quad={}", serde_json::to_string(q).expect("serializes")),
        LogEntry::SinkFailed { worker, seq, message } => format!("sink-failed {worker:?} seq={seq} {message}"),
    }
}

pub fn cmd_stream(cfg: &RunConfig, args: &StreamArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let frames = load_frames(args.input)?;
    let script = match args.script {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io(format!("{}: {e}", p.display())))?;
            parse_script(&text).map_err(usage)?
        }
        None => Vec::new(),
    };
    if let Some(r) = args.max_rate {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(usage("--max-rate must be a non-negative number"));
        }
    }
    if let Some(dir) = args.record_dir {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let client = Client::new(args.server).map_err(|e| CliError::Protocol(e.to_string()))?;
    let (w, h) = (frames[0].width, frames[0].height);
    let mut state = SessionState::new(cfg.session, args.mode, w, h);
    state.set_streaming(true);
    state.set_recording(args.record_dir.is_some());
    let sink = NetSink {
        client,
        session: args.session.to_string(),
        quality: cfg.quality,
        record_dir: args.record_dir.map(Path::to_path_buf),
        recorded: Vec::new(),
    };
    let mut driver = SyncDriver::new(state, cfg.detectors, sink);

    let start = Instant::now();
    let t0 = frames[0].timestamp_ms;
    let min_gap = args
        .max_rate
        .filter(|&r| r > 0.0)
        .map(|r| Duration::from_secs_f64(1.0 / r));
    let mut last_send: Option<Instant> = None;
    let mut next_line = 0;
    let mut printed = 0;
    for frame in frames {
        while next_line < script.len() && script[next_line].t_ms <= frame.timestamp_ms {
            driver.apply_event(&script[next_line].event, script[next_line].t_ms);
            next_line += 1;
        }
        match (args.max_rate, min_gap) {
            (None, _) => {
                let due = start + Duration::from_millis(frame.timestamp_ms.saturating_sub(t0));
                std::thread::sleep(due.saturating_duration_since(Instant::now()));
            }
            (Some(_), Some(gap)) => {
                if let Some(prev) = last_send {
                    std::thread::sleep((prev + gap).saturating_duration_since(Instant::now()));
                }
            }
            _ => {}
        }
        last_send = Some(Instant::now());
        let result = driver.push_frame(Arc::new(frame));
        for entry in &driver.log()[printed..] {
            writeln!(out, "{}", format_log_entry(entry)).map_err(io)?;
        }
        printed = driver.log().len();
        if let Err(f) = result {
            return Err(CliError::Protocol(format!("frame seq {}: {}", f.seq, f.message)));
        }
    }
    for line in &script[next_line..] {
        driver.apply_event(&line.event, line.t_ms);
    }
    for entry in &driver.log()[printed..] {
        writeln!(out, "{}", format_log_entry(entry)).map_err(io)?;
    }
    let (_, sink, _) = driver.into_parts();
    if let Some(dir) = args.record_dir {
        write_index(&dir.join(INDEX_FILE), &sink.recorded).map_err(io)?;
    }
    Ok(())
}

pub fn cmd_serve(
    cfg: &RunConfig,
    bind: &str,
    port: u16,
    ui_dir: Option<PathBuf>,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let addr: SocketAddr = format!("{bind}:{port}")
        .parse()
        .map_err(|e| usage(format!("bad bind address `{bind}:{port}`: {e}")))?;
    let hub = Arc::new(Hub::new(HubConfig {
        quality: cfg.quality,
        output: cfg.output,
        session: cfg.session,
    }));
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io)?;
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind(addr))
        .map_err(|e| io(format!("bind {addr}: {e}")))?;
    let local = listener.local_addr().map_err(io)?;
    let _ = writeln!(err, "serving on http://{local}");
    log::info!("serving on http://{local}");
    runtime
        .block_on(serve(listener, hub.clone(), ui_dir, async {
            let _ = tokio::signal::ctrl_c().await;
        }))
        .map_err(io)?;
    for s in hub.sessions() {
        let _ = writeln!(
            err,
            "session {}: accepted {}, rejected {}, last seq {:?}",
            s.session_id, s.accepted, s.rejected, s.last_seq
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_from(std::iter::once("roicast").chain(args.iter().copied()), &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&[]).0, EXIT_USAGE);
        assert_eq!(run_args(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["detect", "--input", "x", "--mode", "bogus"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
        assert_eq!(
            run_args(&["--quality", "0", "stabilize", "--input", "x"]).0,
            EXIT_USAGE
        );
    }

    #[test]
    fn missing_input_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let (code, _, err) = run_args(&["detect", "--input", dir.path().to_str().unwrap()]);
        assert_eq!(code, EXIT_IO, "{err}");
        assert_eq!(run_args(&["stabilize", "--input", "/nonexistent/frame.ppm"]).0, EXIT_IO);
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"quality": 50, "out_w": 320, "detectors": {"hough": {"min_votes": 12}}}"#).unwrap();
        let cli = Cli::try_parse_from([
            "roicast",
            "--config",
            path.to_str().unwrap(),
            "--out-h",
            "200",
            "--hough-theta",
            "2",
            "stabilize",
            "--input",
            "x",
        ])
        .unwrap();
        let cfg = cli.run_config().unwrap();
        assert_eq!(cfg.quality, 50);
        assert_eq!((cfg.output.out_width, cfg.output.out_height), (320, 200));
        assert_eq!(cfg.detectors.hough.min_votes, 12);
        assert!((cfg.detectors.hough.theta_resolution - 2f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn corner_rms_of_shift() {
        let a = Quad::rect(0.0, 0.0, 10.0, 10.0).unwrap();
        assert!((corner_rms(&a, &a.translated(3.0, 4.0)) - 5.0).abs() < 1e-12);
    }
}
