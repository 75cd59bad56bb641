use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ldla::dla::{sha256_hex, Checkpoint};
use ldla::harness::{analyze, load_trajectories, sweep, EnsembleSpec, Manifest, ARTIFACT_VERSION};
use ldla::rng::rng_from_seed;
use ldla::validate::validation_suite;
use ldla::z3::{estimate_capacity, run_z3_dla, EscapeReport, Z3Config, Z3Sampler};
use ldla::{DlaRun, GluingDistribution, LawSpec, LdlaError, NuSampler, RunConfig, SamplerKind};

#[derive(Parser)]
#[command(name = "ldla", version, about = "Long-range one-dimensional DLA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a single aggregate and write its trajectory.
    Run(RunArgs),
    /// Run an ensemble and write trajectories, reports and a manifest.
    Sweep(SweepArgs),
    /// Compare the primary stack against the independent oracles.
    Validate(ValidateArgs),
    /// Recompute reports from a directory of stored trajectories.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<u64>,
    /// exact or direct.
    #[arg(long)]
    sampler: Option<SamplerKind>,
    /// Step law: power:<alpha>, z2, lazy:<holding> (run also accepts z3).
    #[arg(long)]
    law: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint file, rewritten every `--checkpoint-every` particles.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, requires = "checkpoint")]
    checkpoint_every: Option<u64>,
    /// Continue from the checkpoint file instead of starting afresh.
    #[arg(long, requires = "checkpoint")]
    resume: bool,
    /// Also dump the gluing measure of the final aggregate.
    #[arg(long)]
    dump_gluing: bool,
    /// Tail mass left uncertified in the gluing dump.
    #[arg(long, default_value_t = ldla::gluing::VALIDATION_EPS_TAIL)]
    gluing_eps: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    runs: Option<u64>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Smaller boxes and replica counts.
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Bundle directory holding trajectory CSVs (and a manifest).
    #[arg(long)]
    out: PathBuf,
    /// Ensemble specification; defaults to the one in the bundle manifest.
    #[arg(long)]
    config: Option<PathBuf>,
}

type CliResult<T> = Result<T, LdlaError>;

fn parse_law(text: &str) -> CliResult<LawSpec> {
    let (name, arg) = text.split_once(':').unwrap_or((text, ""));
    let number = |default: f64| -> CliResult<f64> {
        if arg.is_empty() {
            Ok(default)
        } else {
            arg.parse().map_err(|e| LdlaError::Config(format!("law parameter {arg:?}: {e}")))
        }
    };
    match name {
        "power" => Ok(LawSpec::power_law(number(f64::NAN)?, ldla::law::DEFAULT_HOLDING)),
        "z2" => Ok(LawSpec::z2_restricted()),
        "lazy" => Ok(LawSpec::lazy(number(0.5)?)),
        _ => Err(LdlaError::Config(format!("unknown law {text:?}"))),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn run_config(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::from_json(&fs::read_to_string(path)?)?,
        None => RunConfig::new(LawSpec::power_law(1.5, ldla::law::DEFAULT_HOLDING), SamplerKind::Exact, 1000, 0),
    };
    if let Some(law) = &c.law {
        cfg.law = parse_law(law)?;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(n) = c.particles {
        cfg.n_particles = n;
    }
    if let Some(s) = c.sampler {
        cfg.sampler = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_z3(args: &RunArgs) -> CliResult<()> {
    let c = &args.common;
    let mut cfg = match &c.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => Z3Config::new(100, 0),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(n) = c.particles {
        cfg.n_particles = n;
    }
    if let Some(s) = c.sampler {
        cfg.sampler = match s {
            SamplerKind::Exact => Z3Sampler::Reversed,
            SamplerKind::Direct => Z3Sampler::Direct,
        };
    }
    fs::create_dir_all(&c.out)?;
    let start = Instant::now();
    let traj = run_z3_dla(&cfg)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    fs::write(c.out.join("trajectory_z3.csv"), &csv)?;
    write_json(&c.out.join("trajectory_z3.json"), &traj)?;
    let n = traj.records.len().min(64);
    let set = traj.aggregate_at(n);
    let capacity = estimate_capacity(
        &ldla::z3::InducedWalk::new(),
        &set,
        1000,
        64 * set.len().max(1) as u64,
        &mut rng_from_seed(cfg.seed ^ 0x5eed),
    )?;
    write_json(&c.out.join("escape_capacity.json"), &EscapeReport::new(&set, capacity))?;
    println!(
        "z3 run: {} particles, ln D = {:.3}{} in {:.1} s",
        traj.records.len(),
        traj.log_diameters().last().copied().unwrap_or(0.0),
        traj.stop_reason.as_deref().map(|r| format!(" (stopped: {r})")).unwrap_or_default(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn run(args: &RunArgs) -> CliResult<()> {
    if args.common.law.as_deref() == Some("z3") {
        return run_z3(args);
    }
    let mut cfg = run_config(&args.common)?;
    if let Some(every) = args.checkpoint_every {
        cfg.checkpoint_every = every;
    } else if args.checkpoint.is_some() && cfg.checkpoint_every == 0 {
        cfg.checkpoint_every = 100;
    }
    let out = &args.common.out;
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let mut dla = match (&args.checkpoint, args.resume) {
        (Some(path), true) => DlaRun::resume(cfg.clone(), &Checkpoint::load(path)?)?,
        _ => DlaRun::new(cfg.clone())?,
    };
    dla.run(args.checkpoint.as_deref())?;
    let mut csv = Vec::new();
    dla.trajectory().write_csv(&mut csv)?;
    fs::write(out.join("trajectory.csv"), &csv)?;
    let mut digests = std::collections::BTreeMap::new();
    digests.insert("trajectory.csv".to_string(), sha256_hex(&csv));
    if let Some(kernel) = dla.kernel() {
        let mut buf = Vec::new();
        kernel.write_csv(&mut buf, 64)?;
        fs::write(out.join("kernel.csv"), &buf)?;
        digests.insert("kernel.csv".to_string(), sha256_hex(&buf));
        if args.dump_gluing {
            let law = dla.law().clone();
            let nu = NuSampler::new(&law, kernel.clone())?;
            let system = dla.hitting_system().expect("exact runs keep a hitting system");
            let g = GluingDistribution::build(system, &nu, &law, args.gluing_eps)?;
            write_json(&out.join("gluing.json"), &g.dump())?;
        }
    }
    let spec = EnsembleSpec::new(cfg.clone(), 1, cfg.seed);
    let manifest = Manifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        config: spec,
        seeds: vec![cfg.seed],
        digests,
        wallclock: start.elapsed().as_secs_f64(),
        partial: false,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    let last = dla.trajectory().records.last();
    println!(
        "{} run: {} particles, D = {}, {:.1} s",
        cfg.law.label(),
        dla.n(),
        last.map_or(0, |r| r.d_n),
        manifest.wallclock
    );
    Ok(())
}

fn sweep_cmd(args: &SweepArgs) -> CliResult<()> {
    let c = &args.common;
    let mut spec = match &c.config {
        Some(path) => EnsembleSpec::from_json(&fs::read_to_string(path)?)?,
        None => EnsembleSpec::new(run_config(c)?, 4, 0),
    };
    if let Some(law) = &c.law {
        spec.base.law = parse_law(law)?;
    }
    if let Some(seed) = c.seed {
        spec.master_seed = seed;
    }
    if let Some(n) = c.particles {
        spec.base.n_particles = n;
    }
    if let Some(s) = c.sampler {
        spec.base.sampler = s;
    }
    if let Some(w) = args.workers {
        spec.workers = w;
    }
    if let Some(r) = args.runs {
        spec.run_count = r;
    }
    spec.out_dir = Some(c.out.clone());
    let bundle = sweep(&spec)?;
    let failed = bundle.outcomes.iter().filter(|o| o.error.is_some()).count();
    println!(
        "sweep: {} runs, {failed} failed{}, median beta {}, {:.1} s",
        bundle.outcomes.len(),
        if bundle.partial() { " (partial bundle)" } else { "" },
        bundle.exponent.as_ref().map_or("n/a".into(), |e| format!("{:.3}", e.beta_hat)),
        bundle.manifest.wallclock
    );
    Ok(())
}

fn validate(args: &ValidateArgs) -> CliResult<bool> {
    fs::create_dir_all(&args.out)?;
    let report = validation_suite(args.quick, args.seed)?;
    for c in &report.checks {
        println!(
            "{} {} value {:.6e} reference {:.6e} tolerance {:.3e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.reference,
            c.tolerance
        );
    }
    report.write_json(fs::File::create(args.out.join("validation.json"))?)?;
    Ok(report.all_pass())
}

fn report(args: &ReportArgs) -> CliResult<()> {
    let spec = match &args.config {
        Some(path) => EnsembleSpec::from_json(&fs::read_to_string(path)?)?,
        None => {
            let manifest: Manifest =
                serde_json::from_str(&fs::read_to_string(args.out.join("manifest.json"))?)?;
            manifest.config
        }
    };
    let trajs = load_trajectories(&args.out)?;
    let analysis = analyze(&trajs, &spec);
    write_json(&args.out.join("report.json"), &analysis)?;
    println!(
        "report: {} trajectories, median beta {}, {} errors",
        trajs.len(),
        analysis.exponent.as_ref().map_or("n/a".into(), |e| format!("{:.3}", e.beta_hat)),
        analysis.errors.len()
    );
    for e in &analysis.errors {
        println!("  {e}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Sweep(a) => sweep_cmd(a).map(|_| true),
        Command::Validate(a) => validate(a),
        Command::Report(a) => report(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
