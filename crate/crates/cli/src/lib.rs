//! Command-line front end: `render` one image, or `bench` the sub-domain
//! scheduler over a grid of worker and sub-domain counts.

pub mod image;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use spectralium::colorimetry::{spectrum_to_xyz, ObserverCmf};
use spectralium::ddm::{run_ddm, DdmConfig, ScheduleMetrics, WorkerMetrics};
use spectralium::render::{render_image, PreparedScene, RenderSettings, DEFAULT_MAX_DEPTH};
use spectralium::scene::{parse_scene, Scene, SceneError};
use spectralium::spectral::Spectrum;

use crate::image::{to_rgb8, write_image, ImageFormat};

/// Overrides `--workers` when set.
pub const THREADS_ENV: &str = "SPECTRALIUM_THREADS";

pub const CSV_HEADER: &str = "subdomains,workers,rep,wall_seconds,busy,idle,load,migrations";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("render failed: {0}")]
    Render(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Render(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spectralium", version, about = "Spectral photon-mapping renderer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene to a PNG or PPM image.
    Render(RenderArgs),
    /// Time renders over worker and sub-domain counts.
    Bench(BenchArgs),
}

/// Flags shared by both commands.
#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 1)]
    pub spp: u32,
    #[arg(long, default_value_t = 10_000)]
    pub photons: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    pub max_depth: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub max_resident: usize,
    #[arg(long, default_value_t = 0)]
    pub load_cost_ms: u64,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: SceneArgs,
    #[arg(long, default_value_t = 1)]
    pub subdomains: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value = "render.png")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: SceneArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub workers_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub subdomains_list: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Write rows here instead of standard output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Validated render request.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub scene_path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub samples_per_pixel: u32,
    pub n_photons: usize,
    pub max_depth: u32,
    pub seed: u64,
    pub n_subdomains: usize,
    pub n_workers: usize,
    pub max_resident: usize,
    pub load_cost_ms: u64,
    pub output_path: PathBuf,
}

impl RenderConfig {
    /// `threads_env` is the value of [`THREADS_ENV`], if set.
    pub fn from_args(args: &RenderArgs, threads_env: Option<&str>) -> Result<Self, CliError> {
        let n_workers = match threads_env {
            Some(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Parse(format!("{THREADS_ENV}='{v}' is not a worker count")))?,
            None => args.workers,
        };
        let c = &args.common;
        let cfg = RenderConfig {
            scene_path: c.scene.clone(),
            width: c.width,
            height: c.height,
            samples_per_pixel: c.spp,
            n_photons: c.photons,
            max_depth: c.max_depth,
            seed: c.seed,
            n_subdomains: args.subdomains,
            n_workers,
            max_resident: c.max_resident,
            load_cost_ms: c.load_cost_ms,
            output_path: args.out.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        validate_common(self.width, self.height, self.samples_per_pixel, self.max_resident)?;
        check_count("--workers", self.n_workers)?;
        check_subdomains(self.n_subdomains)?;
        self.format()?;
        Ok(())
    }

    pub fn format(&self) -> Result<ImageFormat, CliError> {
        ImageFormat::from_path(&self.output_path).ok_or_else(|| {
            CliError::Parse(format!("cannot infer image format of {} (use .png or .ppm)", self.output_path.display()))
        })
    }

    pub fn settings(&self) -> RenderSettings {
        RenderSettings {
            width: self.width,
            height: self.height,
            samples_per_pixel: self.samples_per_pixel,
            n_photons: self.n_photons,
            max_depth: self.max_depth,
            seed: self.seed,
            ..RenderSettings::default()
        }
    }

    pub fn ddm_config(&self) -> DdmConfig {
        let mut cfg = DdmConfig::new(self.n_subdomains, self.n_workers, self.max_resident);
        cfg.load_cost_ms = self.load_cost_ms;
        cfg
    }
}

fn check_count(flag: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        return Err(CliError::Parse(format!("{flag} must be at least 1")));
    }
    Ok(())
}

fn check_subdomains(n: usize) -> Result<(), CliError> {
    if !n.is_power_of_two() {
        return Err(CliError::Parse(format!("sub-domain count {n} is not a power of two")));
    }
    Ok(())
}

fn validate_common(width: usize, height: usize, spp: u32, max_resident: usize) -> Result<(), CliError> {
    check_count("--width", width)?;
    check_count("--height", height)?;
    check_count("--spp", spp as usize)?;
    check_count("--max-resident", max_resident)
}

/// Luminance of a white diffuser facing every sun at once, `Y(sum L_s) / pi`;
/// maps to display white.
pub fn white_luminance(scene: &Scene) -> f64 {
    let mut sum = Spectrum::zero(scene.grid);
    for l in &scene.lights {
        sum.add_assign(&l.emission);
    }
    let cmf = ObserverCmf::cie1931(&scene.grid);
    let y = spectrum_to_xyz(&sum, &cmf).map_or(0.0, |xyz| xyz.y) / std::f64::consts::PI;
    if y > 0.0 {
        y
    } else {
        1.0
    }
}

pub fn load_scene(path: &std::path::Path) -> Result<PreparedScene, CliError> {
    let scene = parse_scene(path).map_err(|e| match e {
        SceneError::Io { .. } => CliError::Parse(e.to_string()),
        _ => CliError::Parse(format!("{}: {e}", path.display())),
    })?;
    Ok(PreparedScene::new(scene))
}

/// One render, through the sub-domain scheduler unless a single worker
/// renders a single domain.
pub fn render_once(
    scene: &PreparedScene,
    settings: &RenderSettings,
    ddm: &DdmConfig,
    force_ddm: bool,
) -> Result<(spectralium::render::ImageAccumulator, ScheduleMetrics), CliError> {
    if !force_ddm && ddm.n_subdomains == 1 && ddm.n_workers == 1 {
        let start = Instant::now();
        let acc = render_image(scene, settings).map_err(|e| CliError::Render(e.to_string()))?;
        let wall = start.elapsed();
        let metrics = ScheduleMetrics {
            wall_time: wall,
            workers: vec![WorkerMetrics { busy: wall, idle: Duration::ZERO, load: Duration::ZERO }],
            migrations: 0,
            max_resident_observed: 1,
            load_events: Vec::new(),
            enqueued: 0,
            retired: 0,
        };
        return Ok((acc, metrics));
    }
    run_ddm(scene.scene(), settings, ddm).map_err(|e| CliError::Render(e.to_string()))
}

pub fn metrics_summary(m: &ScheduleMetrics) -> String {
    format!(
        "wall {:.3} s | workers {} | busy {:.3} s | idle {:.3} s | load {:.3} s | loads {} | migrations {} | max resident {} | rays {} in / {} out",
        m.wall_time.as_secs_f64(),
        m.workers.len(),
        m.total_busy().as_secs_f64(),
        m.total_idle().as_secs_f64(),
        m.total_load().as_secs_f64(),
        m.total_loads(),
        m.migrations,
        m.max_resident_observed,
        m.enqueued,
        m.retired,
    )
}

/// Renders and writes the image; returns the metrics summary line.
pub fn cmd_render(cfg: &RenderConfig) -> Result<String, CliError> {
    let format = cfg.format()?;
    let scene = load_scene(&cfg.scene_path)?;
    let (acc, metrics) = render_once(&scene, &cfg.settings(), &cfg.ddm_config(), false)?;
    let rgb = to_rgb8(&acc.xyz_buffer(), white_luminance(scene.scene()));
    write_image(&cfg.output_path, format, cfg.width, cfg.height, &rgb)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", cfg.output_path.display())))?;
    Ok(metrics_summary(&metrics))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub subdomains: usize,
    pub workers: usize,
    pub rep: usize,
    pub wall_seconds: f64,
    pub busy: f64,
    pub idle: f64,
    pub load: f64,
    pub migrations: u64,
}

impl BenchRow {
    /// Floats use the shortest round-tripping form so the file parses back
    /// to the same values.
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:?},{:?},{:?},{:?},{}",
            self.subdomains, self.workers, self.rep, self.wall_seconds, self.busy, self.idle, self.load, self.migrations
        )
    }

    pub fn from_csv(line: &str) -> Result<Self, CliError> {
        let bad = || CliError::Parse(format!("malformed bench row '{line}'"));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 8 {
            return Err(bad());
        }
        let u = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let r = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(BenchRow {
            subdomains: u(f[0])?,
            workers: u(f[1])?,
            rep: u(f[2])?,
            wall_seconds: r(f[3])?,
            busy: r(f[4])?,
            idle: r(f[5])?,
            load: r(f[6])?,
            migrations: f[7].parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub scene_path: PathBuf,
    pub settings: RenderSettings,
    pub workers_list: Vec<usize>,
    pub subdomains_list: Vec<usize>,
    pub reps: usize,
    pub max_resident: usize,
    pub load_cost_ms: u64,
}

impl BenchConfig {
    pub fn from_args(args: &BenchArgs) -> Result<Self, CliError> {
        let c = &args.common;
        validate_common(c.width, c.height, c.spp, c.max_resident)?;
        check_count("--reps", args.reps)?;
        if args.workers_list.is_empty() || args.subdomains_list.is_empty() {
            return Err(CliError::Parse("worker and sub-domain lists must not be empty".into()));
        }
        for w in &args.workers_list {
            check_count("--workers-list entry", *w)?;
        }
        for s in &args.subdomains_list {
            check_subdomains(*s)?;
        }
        Ok(BenchConfig {
            scene_path: c.scene.clone(),
            settings: RenderSettings {
                width: c.width,
                height: c.height,
                samples_per_pixel: c.spp,
                n_photons: c.photons,
                max_depth: c.max_depth,
                seed: c.seed,
                ..RenderSettings::default()
            },
            workers_list: args.workers_list.clone(),
            subdomains_list: args.subdomains_list.clone(),
            reps: args.reps,
            max_resident: c.max_resident,
            load_cost_ms: c.load_cost_ms,
        })
    }
}

/// Median wall time per cell; rows follow the sub-domain list, columns the
/// worker list.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub subdomains: Vec<usize>,
    pub workers: Vec<usize>,
    pub medians: Vec<Vec<f64>>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl BenchReport {
    pub fn from_rows(rows: Vec<BenchRow>, subdomains: &[usize], workers: &[usize]) -> Self {
        let medians = subdomains
            .iter()
            .map(|s| {
                workers
                    .iter()
                    .map(|w| {
                        let mut v: Vec<f64> = rows
                            .iter()
                            .filter(|r| r.subdomains == *s && r.workers == *w)
                            .map(|r| r.wall_seconds)
                            .collect();
                        if v.is_empty() {
                            f64::NAN
                        } else {
                            median(&mut v)
                        }
                    })
                    .collect()
            })
            .collect();
        BenchReport { rows, subdomains: subdomains.to_vec(), workers: workers.to_vec(), medians }
    }

    pub fn csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Vec<BenchRow>, CliError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(CSV_HEADER) {
            return Err(CliError::Parse("bench CSV lacks its header".into()));
        }
        lines.map(BenchRow::from_csv).collect()
    }

    /// Median wall seconds laid out as rows of sub-domain counts against
    /// columns of worker counts.
    pub fn matrix(&self) -> String {
        let label = |s: usize| if s == 1 { "1 domain".to_string() } else { format!("{s} sub-domains") };
        let mut out = format!("{:<16}", "median wall (s)");
        for w in &self.workers {
            let _ = write!(out, "{:>14}", format!("{w} {}", if *w == 1 { "thread" } else { "threads" }));
        }
        out.push('\n');
        for (s, row) in self.subdomains.iter().zip(&self.medians) {
            let _ = write!(out, "{:<16}", label(*s));
            for m in row {
                let _ = write!(out, "{:>14}", format_seconds(*m));
            }
            out.push('\n');
        }
        out
    }
}

pub fn format_seconds(s: f64) -> String {
    format!("{s:.4}")
}

/// Every (sub-domains, workers) cell `reps` times, always through the
/// scheduler so that load costs are charged alike in every cell.
pub fn cmd_bench(cfg: &BenchConfig, mut progress: impl FnMut(&BenchRow)) -> Result<BenchReport, CliError> {
    let scene = load_scene(&cfg.scene_path)?;
    let mut rows = Vec::new();
    for &s in &cfg.subdomains_list {
        for &w in &cfg.workers_list {
            for rep in 0..cfg.reps {
                let mut ddm = DdmConfig::new(s, w, cfg.max_resident);
                ddm.load_cost_ms = cfg.load_cost_ms;
                let (_, m) = render_once(&scene, &cfg.settings, &ddm, true)?;
                let row = BenchRow {
                    subdomains: s,
                    workers: w,
                    rep,
                    wall_seconds: m.wall_time.as_secs_f64(),
                    busy: m.total_busy().as_secs_f64(),
                    idle: m.total_idle().as_secs_f64(),
                    load: m.total_load().as_secs_f64(),
                    migrations: m.migrations,
                };
                progress(&row);
                rows.push(row);
            }
        }
    }
    Ok(BenchReport::from_rows(rows, &cfg.subdomains_list, &cfg.workers_list))
}

/// Full program: parses `args` (program name first), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Render(a) => {
            let env = std::env::var(THREADS_ENV).ok();
            RenderConfig::from_args(a, env.as_deref()).and_then(|cfg| {
                let summary = cmd_render(&cfg)?;
                let _ = writeln!(out, "wrote {}", cfg.output_path.display());
                let _ = writeln!(out, "{summary}");
                Ok(())
            })
        }
        Command::Bench(a) => BenchConfig::from_args(a).and_then(|cfg| {
            let report = cmd_bench(&cfg, |r| {
                let _ = writeln!(
                    err,
                    "sub-domains {} workers {} rep {}: {:.3} s",
                    r.subdomains, r.workers, r.rep, r.wall_seconds
                );
            })?;
            match &a.csv {
                Some(path) => std::fs::write(path, report.csv())
                    .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?,
                None => {
                    let _ = write!(out, "{}", report.csv());
                }
            }
            let _ = write!(out, "{}", report.matrix());
            Ok(())
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
