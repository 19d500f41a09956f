//! `rfnode`: generate, train, serve, render, evaluate and benchmark.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for runtime failures.

pub mod config;
pub mod engine;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rfnode_core::{Aabb, PinholeCamera, Pose};
use rfnode_eval::{
    evaluate, full_to_tenth_ratio, load_checkpoint, load_eval_data, render_sweep, sha256_hex, sweep_csv, EvalReport,
    Method, Model, Target,
};
use rfnode_ingest::session::{encode_depth, encode_rgb, Session, DEFAULT_DEPTH_SCALE};
use rfnode_ingest::{replay_admit, KeyframeBuffer, ReplayScript};
use rfnode_service::{serve_loop, spawn_listeners, Backend, ListenConfig};
use rfnode_synth::{benchmark_holdout, benchmark_script, benchmark_spec, generate_session, session_checksum, GenerateSpec};

pub use config::Config;
use engine::{ReplayFeed, ServeEngine};

fn after_help() -> String {
    format!("Configuration defaults (rfnode.toml):\n\n{}", Config::default().to_toml())
}

#[derive(Debug, Parser)]
#[command(name = "rfnode", version, about = "Online radiance-field reconstruction and render server")]
#[command(after_long_help = after_help())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML configuration file; see `rfnode --help` for every key and default.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set voxel.cells=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        Config::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic session log. Without --scene, writes the benchmark
    /// scene together with its script.txt and holdout.txt.
    Gen {
        #[arg(long, value_name = "SPEC.json")]
        scene: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train one method offline from a session log and write its checkpoint.
    Train {
        #[arg(long, value_name = "DIR")]
        session: PathBuf,
        /// `cam_id,seq` lines to admit; all frames when absent.
        #[arg(long, value_name = "FILE")]
        script: Option<PathBuf>,
        #[arg(long, default_value = "splat")]
        method: Method,
        /// Optimizer steps; defaults to eval.iterations. Ignored for mesh.
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run ingest, training and the render service until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7450")]
        listen: SocketAddr,
        #[arg(long, default_value = "splat")]
        backend: Backend,
        /// Feed a session log instead of waiting for sensor pushes.
        #[arg(long, value_name = "DIR")]
        replay: Option<PathBuf>,
        /// Admit exactly these `cam_id,seq` pairs from the replay.
        #[arg(long, value_name = "FILE", requires = "replay")]
        script: Option<PathBuf>,
        /// Replay playback rate relative to recorded timestamps; 0 feeds every frame at once.
        #[arg(long, default_value_t = 1.0, value_parser = parse_speed)]
        speed: f64,
        /// Serve the console and its WebSocket endpoint on this port (same host as --listen).
        #[arg(long)]
        console_port: Option<u16>,
        /// Console static asset directory.
        #[arg(long, value_name = "DIR", requires = "console_port")]
        console_dir: Option<PathBuf>,
        /// Where the final checkpoint is written on shutdown.
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Shut down after this many training steps (or once a replay is fully consumed).
        #[arg(long)]
        max_steps: Option<u64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render a checkpoint offline.
    Render {
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
        /// World-from-camera pose "qw,qx,qy,qz,tx,ty,tz".
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        pose: Pose,
        /// Intrinsics "fx,fy,cx,cy,w,h".
        #[arg(long, value_parser = parse_camera)]
        cam: PinholeCamera,
        /// World-space box "x0,y0,z0,x1,y1,z1".
        #[arg(long, value_parser = parse_crop, allow_hyphen_values = true)]
        crop: Option<Aabb>,
        #[arg(long, value_name = "PNG")]
        out: PathBuf,
        /// 16-bit depth PNG in millimeters.
        #[arg(long, value_name = "PNG")]
        depth_out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train and score methods on holdout views; writes CSV plus a JSON mirror.
    Eval {
        #[arg(long, value_name = "DIR")]
        session: PathBuf,
        #[arg(long, value_name = "FILE")]
        script: PathBuf,
        #[arg(long, value_name = "FILE")]
        holdout: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "voxel,splat,mesh")]
        methods: Vec<Method>,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
        /// Also write each final checkpoint here.
        #[arg(long, value_name = "DIR")]
        ckpt_dir: Option<PathBuf>,
        /// Overrides eval.iterations.
        #[arg(long)]
        iterations: Option<u64>,
        /// Time-to-quality target; defaults to the mesh baseline's PSNR.
        #[arg(long)]
        target_psnr: Option<f64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Time renders across resolution fractions.
    Bench {
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,0.75,1.0")]
        sweep: Vec<f64>,
        /// Intrinsics "fx,fy,cx,cy,w,h"; defaults to the benchmark camera.
        #[arg(long, value_parser = parse_camera)]
        cam: Option<PinholeCamera>,
        /// Defaults to the first benchmark holdout view.
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        pose: Option<Pose>,
        /// Timed renders per fraction; defaults to eval.sweep_reps.
        #[arg(long)]
        reps: Option<usize>,
        /// CSV path; stdout when absent.
        #[arg(long, value_name = "CSV")]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn parse_floats<const N: usize>(s: &str, what: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated {what}, got {}", parts.len()));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse::<f64>().map_err(|_| format!("{p:?} is not a number"))?;
        if !o.is_finite() {
            return Err(format!("{p:?} is not finite"));
        }
    }
    Ok(out)
}

pub fn parse_pose(s: &str) -> Result<Pose, String> {
    let v: [f64; 7] = parse_floats(s, "values (qw,qx,qy,qz,tx,ty,tz)")?;
    Pose::from_array(v).map_err(|e| e.to_string())
}

pub fn parse_camera(s: &str) -> Result<PinholeCamera, String> {
    let v: [f64; 6] = parse_floats(s, "values (fx,fy,cx,cy,w,h)")?;
    let dim = |x: f64| -> Result<u32, String> {
        if x.fract() == 0.0 && x >= 1.0 && x <= u16::MAX as f64 {
            Ok(x as u32)
        } else {
            Err(format!("image size {x} must be a positive integer"))
        }
    };
    PinholeCamera::new(v[0], v[1], v[2], v[3], dim(v[4])?, dim(v[5])?).map_err(|e| e.to_string())
}

pub fn parse_crop(s: &str) -> Result<Aabb, String> {
    let v: [f64; 6] = parse_floats(s, "values (x0,y0,z0,x1,y1,z1)")?;
    Aabb::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]).map_err(|e| e.to_string())
}

fn parse_speed(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("{s:?} is not a non-negative number")),
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn read_script(path: &Path) -> Result<ReplayScript> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse().with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen { scene, out } => cmd_gen(scene.as_deref(), &out),
        Command::Train { session, script, method, iterations, out, config } => {
            cmd_train(&session, script.as_deref(), method, iterations, &out, &config.load()?)
        }
        Command::Serve {
            listen,
            backend,
            replay,
            script,
            speed,
            console_port,
            console_dir,
            checkpoint,
            max_steps,
            config,
        } => {
            let opts = ServeOptions {
                listen,
                backend,
                replay,
                script,
                speed,
                console: console_port.map(|p| SocketAddr::new(listen.ip(), p)),
                console_dir,
                checkpoint,
                max_steps,
            };
            cmd_serve(&opts, &config.load()?)
        }
        Command::Render { ckpt, pose, cam, crop, out, depth_out, config } => {
            cmd_render(&ckpt, &pose, &cam, crop.as_ref(), &out, depth_out.as_deref(), &config.load()?)
        }
        Command::Eval { session, script, holdout, methods, out, ckpt_dir, iterations, target_psnr, config } => {
            let cfg = config.load()?;
            cmd_eval(&session, &script, &holdout, &methods, &out, ckpt_dir.as_deref(), iterations, target_psnr, &cfg)
        }
        Command::Bench { ckpt, sweep, cam, pose, reps, out, config } => {
            cmd_bench(&ckpt, &sweep, cam, pose, reps, out.as_deref(), &config.load()?)
        }
    }
}

fn cmd_gen(scene: Option<&Path>, out: &Path) -> Result<()> {
    let spec = match scene {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            GenerateSpec::parse(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => benchmark_spec(),
    };
    let manifest = generate_session(&spec, out).context("generating session")?;
    if scene.is_none() {
        write_file(&out.join("script.txt"), benchmark_script().to_string().as_bytes())?;
        write_file(&out.join("holdout.txt"), benchmark_holdout().to_string().as_bytes())?;
    }
    let checksum = session_checksum(out)?;
    println!("wrote {} frames to {}", manifest.frames.len(), out.display());
    println!("checksum {checksum}");
    Ok(())
}

fn load_buffer(session_dir: &Path, script: Option<&Path>, capacity: usize) -> Result<KeyframeBuffer> {
    let session = Session::open(session_dir).with_context(|| format!("opening session {}", session_dir.display()))?;
    let script = match script {
        Some(p) => read_script(p)?,
        None => ReplayScript::new(session.manifest().frames.iter().map(|f| (f.cam.clone(), f.seq)))?,
    };
    let mut registry = session.manifest().registry()?;
    let mut buffer = KeyframeBuffer::new(capacity, &registry)?;
    for frame in session.frames() {
        replay_admit(&mut buffer, &mut registry, &frame?, &script)?;
    }
    if buffer.is_empty() {
        bail!("no frames of {} match the script", session_dir.display());
    }
    Ok(buffer)
}

fn cmd_train(
    session: &Path,
    script: Option<&Path>,
    method: Method,
    iterations: Option<u64>,
    out: &Path,
    cfg: &Config,
) -> Result<()> {
    let mut buffer = load_buffer(session, script, cfg.ingest.buffer_capacity)?;
    let mut model = Model::new(method, &buffer, &cfg.model_config())?;
    let iterations = iterations.unwrap_or(cfg.eval.iterations);
    let mut last = None;
    while method == Method::Mesh || model.steps() < iterations {
        match model.step(&mut buffer)? {
            Some(s) => last = Some(s),
            None => break,
        }
    }
    let bytes = model.checkpoint();
    write_file(out, &bytes)?;
    match last {
        Some(s) if method.is_radiance_field() => println!("{method}: {} steps, final photometric loss {:.6}", model.steps(), s.photometric_loss),
        _ => println!("{method}: {} steps", model.steps()),
    }
    println!("sha256 {}", sha256_hex(&bytes));
    Ok(())
}

pub struct ServeOptions {
    pub listen: SocketAddr,
    pub backend: Backend,
    pub replay: Option<PathBuf>,
    pub script: Option<PathBuf>,
    pub speed: f64,
    pub console: Option<SocketAddr>,
    pub console_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub max_steps: Option<u64>,
}

fn cmd_serve(opts: &ServeOptions, cfg: &Config) -> Result<()> {
    let shutdown = Arc::new(AtomicBool::new(false));
    {
        let flag = shutdown.clone();
        if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)) {
            log::debug!("signal handler not installed: {e}");
        }
    }
    let mut engine = ServeEngine::new(
        opts.backend,
        cfg.model_config(),
        cfg.filter_policy(),
        cfg.ingest.buffer_capacity,
        shutdown.clone(),
    )
    .with_max_steps(opts.max_steps);
    if let Some(dir) = &opts.replay {
        let session = Session::open(dir).with_context(|| format!("opening session {}", dir.display()))?;
        let script = opts.script.as_deref().map(read_script).transpose()?;
        engine = engine.with_replay(ReplayFeed::new(session, script, opts.speed)).map_err(|e| anyhow!(e))?;
    }
    let service = cfg.service_config();
    let (tx, rx) = mpsc::channel();
    let listeners = spawn_listeners(
        &ListenConfig {
            listen: opts.listen,
            console: opts.console,
            console_dir: opts.console_dir.clone(),
            queue_pixel_cap: service.queue_pixel_cap,
            max_payload: service.max_payload,
        },
        tx,
    )
    .with_context(|| format!("binding {}", opts.listen))?;
    {
        let mut out = std::io::stdout().lock();
        writeln!(out, "listening {} backend {}", listeners.stream_addr, opts.backend.name())?;
        if let Some(c) = listeners.console_addr {
            writeln!(out, "console http://{}", display_host(c))?;
        }
        out.flush()?;
    }
    let stats = serve_loop(&mut engine, &rx, service, &shutdown);
    listeners.stop();
    println!(
        "stopped after {} steps with {} keyframes, {} stages sent",
        stats.train_steps, stats.keyframes, stats.stages_sent
    );
    match engine.checkpoint() {
        Some(bytes) => {
            if let Some(path) = &opts.checkpoint {
                write_file(path, &bytes)?;
            }
            println!("checkpoint sha256 {}", sha256_hex(&bytes));
        }
        None => println!("no checkpoint: training never started"),
    }
    Ok(())
}

fn display_host(addr: SocketAddr) -> String {
    match addr.ip() {
        IpAddr::V4(ip) if ip.is_unspecified() => format!("127.0.0.1:{}", addr.port()),
        IpAddr::V6(ip) if ip.is_unspecified() => format!("[::1]:{}", addr.port()),
        _ => addr.to_string(),
    }
}

fn cmd_render(
    ckpt: &Path,
    pose: &Pose,
    cam: &PinholeCamera,
    crop: Option<&Aabb>,
    out: &Path,
    depth_out: Option<&Path>,
    cfg: &Config,
) -> Result<()> {
    let bytes = fs::read(ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
    let (method, renderer) = load_checkpoint(&bytes, &cfg.model_config())?;
    let product = renderer.render(cam, pose, crop)?;
    write_file(out, &encode_rgb(&product.rgb)?)?;
    if let Some(d) = depth_out {
        write_file(d, &encode_depth(&product.depth, DEFAULT_DEPTH_SCALE)?)?;
    }
    println!("{method}: {}x{} in {:.3} ms", cam.width(), cam.height(), product.render_time * 1e3);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    session: &Path,
    script: &Path,
    holdout: &Path,
    methods: &[Method],
    out: &Path,
    ckpt_dir: Option<&Path>,
    iterations: Option<u64>,
    target_psnr: Option<f64>,
    cfg: &Config,
) -> Result<()> {
    if methods.is_empty() {
        bail!("no methods selected");
    }
    let data = load_eval_data(session, &read_script(script)?, &read_script(holdout)?, cfg.ingest.buffer_capacity)?;
    let mut eval = cfg.eval_config();
    if let Some(n) = iterations {
        eval.iterations = n;
    }
    if let Some(t) = target_psnr {
        eval.target = Target::Psnr(t);
    }
    let results = evaluate(methods, &data, &eval, target_psnr.is_none())?;
    let report = EvalReport { rows: results.iter().map(|r| r.report_row(&data.dataset)).collect() };
    write_file(out, report.to_csv().as_bytes())?;
    write_file(&out.with_extension("json"), report.to_json().as_bytes())?;
    for r in &results {
        let tts = r.time_to_quality.map_or("-".to_string(), |t| format!("{:.2}s@{}", t.seconds, t.iteration));
        let ratio = full_to_tenth_ratio(&r.sweep).map_or("-".to_string(), |x| format!("{x:.2}"));
        println!(
            "{:<6} psnr {:>7.3} dB  ssim {:.4}  iter {:>8.2} ms  tts {tts}  render 1.0/0.1 {ratio}",
            r.method.name(),
            r.psnr,
            r.ssim,
            r.iter_ms()
        );
        if let Some(dir) = ckpt_dir {
            let ext = if r.method == Method::Mesh { "ply" } else { "ckpt" };
            write_file(&dir.join(format!("{}.{ext}", r.method.name())), &r.checkpoint)?;
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_bench(
    ckpt: &Path,
    sweep: &[f64],
    cam: Option<PinholeCamera>,
    pose: Option<Pose>,
    reps: Option<usize>,
    out: Option<&Path>,
    cfg: &Config,
) -> Result<()> {
    let bytes = fs::read(ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
    let (_, renderer) = load_checkpoint(&bytes, &cfg.model_config())?;
    let spec = benchmark_spec();
    let cam = match cam {
        Some(c) => c,
        None => spec.pinhole()?,
    };
    let pose = match pose {
        Some(p) => p,
        None => spec.trajectory.poses()?[rfnode_synth::BENCHMARK_HOLDOUT[0] as usize],
    };
    let rows = render_sweep(renderer.as_ref(), &cam, &pose, sweep, reps.unwrap_or(cfg.eval.sweep_reps))?;
    let csv = sweep_csv(&rows);
    match out {
        Some(p) => write_file(p, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}
