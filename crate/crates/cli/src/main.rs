#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use cgmpm::estimation::{self, EstimationError, Problem, TrainConfig};
use cgmpm::mpm::{init_state, Boundary, GridCondition, GridSpec, SimError, Simulator, StepParams, Trajectory};
use cgmpm::render::{self, RenderError, ViewAxis};
use cgmpm::scene::{self, SceneConfig, SceneError};
use cgmpm::{constitutive, Vec3};

/// Material point simulation with learnable constitutive models.
///
/// Scene files are TOML (see the `scenes/` directory). Command-line flags
/// override the matching scene fields, which override built-in defaults.
///
/// Exit codes: 0 success, 2 invalid input (validation, parse or shape
/// errors), 3 numerical instability, 4 I/O failure.
#[derive(Debug, Parser)]
#[command(name = "cgmpm", version)]
struct Cli {
    /// Worker threads for particle loops; 1 gives bitwise-reproducible runs.
    #[arg(long, global = true, env = "CGMPM_THREADS", default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scene and write the sampled Gaussian frames.
    Simulate {
        scene: PathBuf,
        /// Frame file to write.
        #[arg(short, long)]
        out: PathBuf,
        /// Total steps; defaults to frames * sample_every.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        sample_every: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        grid_resolution: Option<usize>,
        /// Also write the run summary to this file.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Fit per-neighbourhood materials to a reference frame file.
    Estimate {
        scene: PathBuf,
        reference: PathBuf,
        /// Material assignment file (TOML) to write.
        #[arg(short, long)]
        out: PathBuf,
        /// Loss log (CSV); defaults to the output path with a `.loss.csv` suffix.
        #[arg(long)]
        loss_log: Option<PathBuf>,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long)]
        frames_per_stage: Option<usize>,
        #[arg(long)]
        internal: Option<usize>,
        #[arg(long)]
        outer: Option<usize>,
        /// Steps between reference frames.
        #[arg(long)]
        sample_every: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        neighborhood_size: Option<usize>,
        #[arg(long)]
        prior_margin_steps: Option<f64>,
    },
    /// Splat every frame of a frame file into a grayscale PGM preview.
    Render {
        frames: PathBuf,
        out_dir: PathBuf,
        /// Viewing axis: x, y or z.
        #[arg(long, default_value = "y")]
        axis: ViewAxis,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        /// Lower corner of the viewed window.
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 0.0])]
        origin: Vec<f64>,
        /// Edge length of the viewed window.
        #[arg(long, default_value_t = 1.0)]
        size: f64,
    },
    /// Forward-only timing of a jelly block of the given size.
    Bench { particles: usize, steps: usize },
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Unstable(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Unstable(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Unstable(m) => write!(f, "simulation failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Validation { .. } => CliError::Invalid(format!("ValidationError: {e}")),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::UnstableStep { .. } | SimError::Material { .. } => CliError::Unstable(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<EstimationError> for CliError {
    fn from(e: EstimationError) -> Self {
        match e {
            EstimationError::Simulation { ref source, .. } => match CliError::from(source.clone()) {
                CliError::Unstable(_) => CliError::Unstable(e.to_string()),
                _ => CliError::Invalid(e.to_string()),
            },
            EstimationError::Io(_) => CliError::Io(e.to_string()),
            EstimationError::ShapeMismatch(_) => CliError::Invalid(format!("ShapeMismatch: {e}")),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<SceneConfig, CliError> {
    if !path.is_file() {
        return Err(CliError::Io(format!("{}: no such file", path.display())));
    }
    Ok(scene::load_scene(path)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = if cli.threads == 0 {
        Err(CliError::Invalid("--threads must be at least 1".into()))
    } else {
        match cli.command {
            Command::Simulate {
                scene,
                out,
                steps,
                frames,
                sample_every,
                dt,
                seed,
                grid_resolution,
                summary,
            } => (|| {
                let mut cfg = load(&scene)?;
                let sim = &mut cfg.simulation;
                sim.frames = frames.unwrap_or(sim.frames);
                sim.sample_every = sample_every.unwrap_or(sim.sample_every);
                sim.dt = dt.unwrap_or(sim.dt);
                sim.seed = seed.unwrap_or(sim.seed);
                sim.steps = steps.or(sim.steps);
                cfg.domain.grid_resolution = grid_resolution.unwrap_or(cfg.domain.grid_resolution);
                cfg.validate()?;
                simulate(&cfg, &out, summary.as_deref(), cli.threads)
            })(),
            Command::Estimate {
                scene,
                reference,
                out,
                loss_log,
                stages,
                frames_per_stage,
                internal,
                outer,
                sample_every,
                learning_rate,
                temperature,
                neighborhood_size,
                prior_margin_steps,
            } => (|| {
                let mut cfg = load(&scene)?;
                let e = &mut cfg.estimation;
                e.stages = stages.unwrap_or(e.stages);
                e.frames_per_stage = frames_per_stage.unwrap_or(e.frames_per_stage);
                e.internal = internal.unwrap_or(e.internal);
                e.outer = outer.unwrap_or(e.outer);
                e.learning_rate = learning_rate.unwrap_or(e.learning_rate);
                e.temperature = temperature.unwrap_or(e.temperature);
                e.neighborhood_size = neighborhood_size.unwrap_or(e.neighborhood_size);
                e.prior_margin_steps = prior_margin_steps.unwrap_or(e.prior_margin_steps);
                cfg.simulation.sample_every = sample_every.unwrap_or(cfg.simulation.sample_every);
                cfg.validate()?;
                let loss_log = loss_log.unwrap_or_else(|| {
                    let mut name = out.clone().into_os_string();
                    name.push(".loss.csv");
                    PathBuf::from(name)
                });
                estimate(&cfg, &reference, &out, &loss_log, cli.threads)
            })(),
            Command::Render {
                frames,
                out_dir,
                axis,
                resolution,
                origin,
                size,
            } => render_previews(
                &frames,
                &out_dir,
                axis,
                resolution,
                Vec3::new(origin[0], origin[1], origin[2]),
                size,
            ),
            Command::Bench { particles, steps } => bench(particles, steps, cli.threads),
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn simulate(cfg: &SceneConfig, out: &Path, summary: Option<&Path>, threads: usize) -> Result<(), CliError> {
    let built = cfg.build()?;
    let n_steps = cfg.simulation.n_steps();
    let t0 = Instant::now();
    let traj = built
        .simulator()?
        .with_threads(threads)?
        .run(built.state.clone(), n_steps, cfg.simulation.sample_every)?;
    let wall = t0.elapsed().as_secs_f64();
    let frames = render::frames_from_trajectory(&traj, &built.kernels)?;
    let file = std::fs::File::create(out).map_err(io_err(out))?;
    render::write_frames(&frames, std::io::BufWriter::new(file))?;
    let text = format!(
        "steps = {n_steps}\nframes = {}\nparticles = {}\nthreads = {threads}\nwall_seconds = {wall:.3}\npeak_rss_mb = {}\noutput = {:?}\n",
        frames.len(),
        built.state.len(),
        peak_rss_mb().map_or("unknown".into(), |m| format!("{m:.1}")),
        out.display().to_string(),
    );
    print!("{text}");
    if let Some(path) = summary {
        std::fs::write(path, &text).map_err(io_err(path))?;
    }
    Ok(())
}

fn estimate(cfg: &SceneConfig, reference: &Path, out: &Path, loss_log: &Path, threads: usize) -> Result<(), CliError> {
    if !reference.is_file() {
        return Err(CliError::Io(format!("{}: no such file", reference.display())));
    }
    let frames = render::load_frames(reference)?;
    let built = cfg.build()?;
    let est = &cfg.estimation;
    let m = cfg.simulation.sample_every;
    let reference = Trajectory::from_positions(m, frames.into_iter().map(|f| f.centers).collect());
    if reference.particle_count() != built.state.len() {
        return Err(EstimationError::ShapeMismatch(format!(
            "reference frames have {} kernels but the scene has {} particles",
            reference.particle_count(),
            built.state.len()
        ))
        .into());
    }
    let train_cfg = TrainConfig {
        stages: est.stages,
        frames_per_stage: est.frames_per_stage,
        internal: est.internal,
        outer: est.outer,
        sample_every: m,
        learning_rate: est.learning_rate,
        temperature: est.temperature,
    };
    train_cfg.validate(reference.len())?;
    let problem = Problem::new(&built, m, est.neighborhood_size)?.with_threads(threads)?;
    println!(
        "{} particles in {} neighbourhoods; {} logged iterations",
        built.state.len(),
        problem.partition.len(),
        est.outer * est.stages * est.internal
    );
    let init = problem.initial_logits(est.prior_margin_steps * est.learning_rate);
    let t0 = Instant::now();
    let report = estimation::train(&problem, &reference, init, &train_cfg, |r, _| {
        if r.internal + 1 == est.internal {
            println!("outer {} stage {} loss {:.6e}", r.outer, r.stage, r.loss);
        }
    })?;
    estimation::write_assignment(out, &report.logits, &problem.partition)?;
    estimation::write_loss_log(loss_log, &report.log)?;
    println!("initial_loss = {:.6e}", report.initial_loss);
    println!("final_loss = {:.6e}", report.final_loss);
    println!("wall_seconds = {:.3}", t0.elapsed().as_secs_f64());
    Ok(())
}

fn render_previews(frames: &Path, out_dir: &Path, axis: ViewAxis, resolution: usize, lo: Vec3, size: f64) -> Result<(), CliError> {
    if resolution == 0 || !(size > 0.0) {
        return Err(CliError::Invalid("resolution and window size must be positive".into()));
    }
    if !frames.is_file() {
        return Err(CliError::Io(format!("{}: no such file", frames.display())));
    }
    let records = render::load_frames(frames)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    for (k, frame) in records.iter().enumerate() {
        let img = render::splat_preview(frame, None, axis, resolution, lo, size);
        img.write_pgm(&out_dir.join(format!("frame_{k:04}.pgm")))?;
    }
    println!("wrote {} images to {}", records.len(), out_dir.display());
    Ok(())
}

/// Peak resident set size from `/proc/self/status`, where available.
fn peak_rss_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

fn bench(particles: usize, steps: usize, threads: usize) -> Result<(), CliError> {
    if particles == 0 || steps == 0 {
        return Err(CliError::Invalid("particle and step counts must be positive".into()));
    }
    // unit box, 25³ grid, dt 3e-4, eight particles per cell
    let grid = GridSpec::unit(25);
    let spacing = 0.5 * grid.dx;
    let side = (particles as f64).cbrt().ceil() as usize;
    if side as f64 * spacing > grid.size() - 2.0 * (cgmpm::mpm::BOUNDARY_MARGIN_CELLS + 1.0) * grid.dx {
        return Err(CliError::Invalid(format!(
            "{particles} particles do not fit in the benchmark domain"
        )));
    }
    let corner = Vec3::new(0.5, 0.5, 0.5) - Vec3::repeat(0.5 * side as f64 * spacing);
    let positions: Vec<Vec3> = (0..particles)
        .map(|p| {
            let (i, j, k) = (p % side, (p / side) % side, p / (side * side));
            corner + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * spacing
        })
        .collect();
    let volume = spacing.powi(3);
    let state = init_state(&positions, &vec![1000.0 * volume; particles], &vec![volume; particles], &grid)?;
    let params = constitutive::PhysicalParams::new(2e5, 0.3).map_err(|e| CliError::Invalid(e.to_string()))?;
    let material = constitutive::BlendedMaterial::from_spec(&constitutive::MaterialSpec::new(
        constitutive::ElasticModelId::FixedCorotated,
        constitutive::PlasticModelId::Identity,
        params,
    ));
    let boundary = Boundary {
        grid: vec![
            GridCondition::GroundPlaneSlip {
                point: [0.0, 0.0, 0.1],
                normal: [0.0, 0.0, 1.0],
            },
            GridCondition::DomainWalls { thickness: 3 },
        ],
        particle: vec![],
    };
    let mut sim = Simulator::new(grid, StepParams::default(), boundary, vec![material], vec![0; particles])?.with_threads(threads)?;
    let mut state = state;
    let t0 = Instant::now();
    for step in 0..steps {
        sim.step(&mut state, step)?;
    }
    let wall = t0.elapsed().as_secs_f64();
    let rss = peak_rss_mb();
    println!("particles: {particles}");
    println!("steps: {steps}");
    println!("threads: {threads}");
    println!("wall time: {wall:.3} s ({:.3} ms/step)", 1e3 * wall / steps as f64);
    println!("peak resident memory: {}", rss.map_or("unknown".into(), |m| format!("{m:.1} MB")));
    println!(
        "BENCH particles={particles} steps={steps} threads={threads} wall_s={wall:.4} peak_rss_mb={}",
        rss.map_or("nan".into(), |m| format!("{m:.1}"))
    );
    Ok(())
}
