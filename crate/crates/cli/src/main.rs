//! `brainfem` command-line driver.
//!
//! Exit codes: 0 success, 1 usage, 2 missing input, 3 validation failure, 4 solver failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use brainfem::coupler::{run, Mode, SimState, Simulation};
use brainfem::meshio::{
    diff_snapshots, read_axonal_field, read_mesh, read_snapshot, synthetic, AxonalField, LabeledMesh, TissueClass,
};
use brainfem::params::{load_config, parse_config, Config};
use brainfem::Error;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "brainfem",
    version,
    about = "Coupled protein spreading and atrophy on labeled tetrahedral meshes"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check inputs and print mesh statistics and the resolved configuration.
    Validate(Inputs),
    /// Run a simulation.
    Run(RunArgs),
    /// Compare two snapshot files field by field.
    SnapshotDiff(DiffArgs),
    /// Write the synthetic twelve-region toy brain (mesh, axonal field, default config).
    ToyBrain(ToyArgs),
}

#[derive(Args, Clone)]
struct Inputs {
    /// Configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Axonal direction file (`x y z ax ay az` per line).
    #[arg(long)]
    axonal: Option<PathBuf>,
    #[arg(long, default_value = "ad", value_parser = parse_mode)]
    mode: Mode,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// End time in years.
    #[arg(long)]
    years: Option<f64>,
    /// Time step in years.
    #[arg(long)]
    dt: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Snapshot cadence in years (0 disables).
    #[arg(long)]
    snapshot_every: Option<f64>,
    /// Continue from a snapshot written by an earlier run on the same mesh.
    #[arg(long)]
    restart: Option<PathBuf>,
    /// Repeat the run recorded in a run.json file.
    #[arg(long, conflicts_with_all = ["config", "mesh", "axonal", "years", "dt", "snapshot_every", "restart"])]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct DiffArgs {
    a: PathBuf,
    b: PathBuf,
    /// Relative tolerance per value.
    #[arg(long, default_value_t = 1e-9)]
    rtol: f64,
    /// Absolute tolerance per value.
    #[arg(long, default_value_t = 1e-12)]
    atol: f64,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
    /// Subdivisions per 4 mm voxel and axis.
    #[arg(long, default_value_t = 1)]
    refine: usize,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Io { .. } => 2,
        Error::Parse { .. } | Error::Validation { .. } | Error::Config(_) | Error::OutOfRange { .. } => 3,
        Error::Kinematics(_) | Error::Inversion { .. } | Error::Solver(_) | Error::Step { .. } => 4,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(exit_code(&e), e.to_string())
    }
}

/// Everything needed to reproduce a run.
#[derive(Serialize, Deserialize)]
struct RunRecord {
    brainfem_version: String,
    mode: Mode,
    mesh: PathBuf,
    axonal: Option<PathBuf>,
    restart: Option<PathBuf>,
    out: PathBuf,
    threads: usize,
    /// Resolved configuration in config-file syntax.
    config: String,
    wall_time_s: f64,
    steps: usize,
    final_time: f64,
    snapshots: Vec<PathBuf>,
    error: Option<String>,
}

struct Loaded {
    config: Config,
    mesh: LabeledMesh,
    axonal: Option<AxonalField>,
}

fn load(inputs: &Inputs, config: Option<Config>) -> Result<Loaded, Failure> {
    let config = match (config, &inputs.config) {
        (Some(c), _) => c,
        (None, Some(path)) => {
            require(path, "config file")?;
            load_config(path)?
        }
        (None, None) => Config::default(),
    };
    config.validate()?;
    let mesh_path = inputs
        .mesh
        .as_ref()
        .ok_or_else(|| Failure::new(2, "mesh file required (--mesh)"))?;
    require(mesh_path, "mesh file")?;
    let mesh = read_mesh(mesh_path)?;
    let regions = config.region_set();
    mesh.check_regions(&regions)?;
    let has_white = mesh
        .region_labels()
        .iter()
        .any(|&l| regions.by_label(l).is_some_and(|r| r.tissue == TissueClass::White));
    let axonal = match &inputs.axonal {
        Some(path) => {
            require(path, "axonal field")?;
            Some(read_axonal_field(path, &mesh, &regions, config.solver.axonal_radius)?)
        }
        None if inputs.mode == Mode::Ad && has_white => {
            return Err(Failure::new(
                2,
                "axonal field required: mode `ad` on a mesh with white matter needs --axonal",
            ))
        }
        None => None,
    };
    Ok(Loaded { config, mesh, axonal })
}

fn require(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::new(2, format!("{what} not found: {}", path.display())))
    }
}

fn validate(inputs: &Inputs) -> Result<(), Failure> {
    let loaded = load(inputs, None)?;
    let mesh = &loaded.mesh;
    let regions = loaded.config.region_set();
    println!("nodes: {}", mesh.node_count());
    println!("elements: {}", mesh.element_count());
    println!("boundary faces: {}", mesh.boundary_faces().len());
    let mut volumes = vec![0.0; regions.len()];
    let mut counts = vec![0usize; regions.len()];
    for (e, &l) in mesh.region_labels().iter().enumerate() {
        let i = regions.index_of_label(l).expect("checked on load");
        volumes[i] += mesh.element_volume(e);
        counts[i] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    println!("regions: {present}");
    for (i, r) in regions.iter().enumerate() {
        if counts[i] > 0 {
            println!(
                "  {:>3} {:<20} {:<6} elements {:>8} volume {:.6e} mm^3",
                r.label,
                r.name,
                r.tissue.to_string(),
                counts[i],
                volumes[i]
            );
        }
    }
    match &loaded.axonal {
        Some(field) => {
            println!(
                "axonal coverage of white nodes: {:.4}",
                field.white_coverage(mesh, &regions)
            );
            if field.skipped_zero() > 0 {
                println!("axonal entries skipped (zero vector): {}", field.skipped_zero());
            }
        }
        None => println!("axonal field: none"),
    }
    // Builds per-element fibres and seeds; surfaces mode-dependent errors.
    Simulation::new(mesh, &loaded.config, inputs.mode, loaded.axonal.as_ref())?;
    println!("mode: {}", inputs.mode);
    println!("# resolved configuration");
    print!("{}", loaded.config.to_toml());
    Ok(())
}

fn run_command(args: RunArgs) -> Result<(), Failure> {
    let (inputs, config, out, restart, threads) = match &args.replay {
        Some(path) => {
            require(path, "run record")?;
            let text =
                std::fs::read_to_string(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))?;
            let record: RunRecord = serde_json::from_str(&text)
                .map_err(|e| Failure::new(3, format!("{}: invalid run record: {e}", path.display())))?;
            let config = parse_config(&record.config, &path.display().to_string())?;
            let inputs = Inputs {
                config: None,
                mesh: Some(record.mesh),
                axonal: record.axonal,
                mode: record.mode,
            };
            let threads = args.threads.or(Some(record.threads));
            (
                inputs,
                Some(config),
                args.out.unwrap_or(record.out),
                record.restart,
                threads,
            )
        }
        None => {
            let out = args.out.clone().ok_or_else(|| Failure::new(1, "--out is required"))?;
            (args.inputs.clone(), None, out, args.restart.clone(), args.threads)
        }
    };

    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(1, format!("cannot configure {n} threads: {e}")))?;
    }

    let mut loaded = load(&inputs, config)?;
    if args.replay.is_none() {
        let s = &mut loaded.config.solver;
        if let Some(y) = args.years {
            s.years = y;
        }
        if let Some(dt) = args.dt {
            s.dt = dt;
        }
        if let Some(every) = args.snapshot_every {
            s.snapshot_every = every;
        }
        loaded.config.validate()?;
    }
    let config = &loaded.config;
    let mesh = &loaded.mesh;
    let mode = inputs.mode;

    let started = Instant::now();
    let mut sim = match &restart {
        Some(path) => {
            require(path, "restart snapshot")?;
            let state = SimState::from_snapshot(&read_snapshot(path)?, mesh)?;
            Simulation::restart(mesh, config, mode, loaded.axonal.as_ref(), state)?
        }
        None => Simulation::new(mesh, config, mode, loaded.axonal.as_ref())?,
    };
    let outcome = run(&mut sim, config.solver.years, Some(&out))?;
    let wall = started.elapsed().as_secs_f64();

    let record = RunRecord {
        brainfem_version: brainfem::VERSION.to_string(),
        mode,
        mesh: absolute(inputs.mesh.as_deref().expect("checked on load")),
        axonal: inputs.axonal.as_deref().map(absolute),
        restart: restart.as_deref().map(absolute),
        out: absolute(&out),
        threads: rayon::current_num_threads(),
        config: config.to_toml(),
        wall_time_s: wall,
        steps: outcome.steps,
        final_time: sim.state().time,
        snapshots: outcome.snapshots.clone(),
        error: outcome.error.as_ref().map(|e| e.to_string()),
    };
    let json_path = out.join("run.json");
    let json = serde_json::to_string_pretty(&record).expect("run record serializes");
    std::fs::write(&json_path, json).map_err(|e| Failure::new(2, format!("{}: {e}", json_path.display())))?;

    println!(
        "{} steps to t = {:.2} yr in {wall:.1} s; {} snapshots; output in {}",
        outcome.steps,
        sim.state().time,
        outcome.snapshots.len(),
        out.display()
    );
    match outcome.error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn snapshot_diff(args: &DiffArgs) -> Result<(), Failure> {
    require(&args.a, "snapshot")?;
    require(&args.b, "snapshot")?;
    let a = read_snapshot(&args.a)?;
    let b = read_snapshot(&args.b)?;
    let diffs = diff_snapshots(&a, &b)?;
    println!("time: {} vs {}", a.time, b.time);
    println!("{:<16} {:>12} {:>12} {:>12}", "field", "max_abs", "max_rel", "rms");
    let mut failed = Vec::new();
    for d in &diffs {
        let ok = d.max_abs <= args.atol || d.max_rel <= args.rtol;
        println!(
            "{:<16} {:>12.4e} {:>12.4e} {:>12.4e}{}",
            d.name,
            d.max_abs,
            d.max_rel,
            d.rms,
            if ok { "" } else { "  exceeds tolerance" }
        );
        if !ok {
            failed.push(d.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(
            3,
            format!("fields differ beyond tolerance: {}", failed.join(", ")),
        ))
    }
}

fn toy_brain(args: &ToyArgs) -> Result<(), Failure> {
    let (mesh, entries) = synthetic::toy_brain(args.refine)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Failure::new(2, format!("{}: {e}", args.out.display())))?;
    let write = |name: &str, text: String| {
        let path = args.out.join(name);
        std::fs::write(&path, text).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))
    };
    write("toy_brain.mesh", mesh.to_mesh_string())?;
    write("toy_brain_axonal.txt", entries.to_text())?;
    write("config.toml", Config::default().to_toml())?;
    println!(
        "toy brain: {} nodes, {} elements in {}",
        mesh.node_count(),
        mesh.element_count(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let result = match cli.command {
        Command::Validate(inputs) => validate(&inputs),
        Command::Run(args) => run_command(args),
        Command::SnapshotDiff(args) => snapshot_diff(&args),
        Command::ToyBrain(args) => toy_brain(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
