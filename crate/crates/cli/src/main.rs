//! `abc-orbits`: runs one experiment and writes CSV/JSON/SVG outputs plus a
//! manifest into the output directory.

mod commands;
mod config;
mod error;
mod figure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::Value;

use crate::commands::*;
use crate::config::{load_config, resolve_threads, Resolver, THREADS_ENV};
use crate::error::CliError;
use crate::output::{config_slug, Outputs, RunInfo};

#[derive(Debug, Parser)]
#[command(name = "abc-orbits", version, about = "Ballistic orbits of the near-integrable ABC flow")]
struct Cli {
    /// key = value file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: ABC_ORBITS_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file slug (default: hash of the resolved config).
    #[arg(long, global = true)]
    slug: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one orbit and write t,x,y,z.
    #[command(allow_negative_numbers = true)]
    Integrate(IntegrateArgs),
    /// Solve for the spiral orbit around the cell centre.
    #[command(allow_negative_numbers = true)]
    SpiralSolve(SpiralArgs),
    /// Shoot for a periodic edge orbit.
    #[command(allow_negative_numbers = true)]
    EdgeShoot(EdgeArgs),
    /// First-order boundary-layer estimate of the critical height.
    #[command(allow_negative_numbers = true)]
    PerturbEstimate(PerturbArgs),
    /// Mask of points that never leave a cell.
    #[command(allow_negative_numbers = true)]
    KamScan(KamArgs),
    /// Fractions of ballistic orbits over rectangles of initial data.
    #[command(allow_negative_numbers = true)]
    FractionSweep(FractionArgs),
    /// Section x = 0 mod 2pi near an edge orbit.
    #[command(allow_negative_numbers = true)]
    Poincare(PoincareArgs),
    /// Best average advance along a direction.
    #[command(allow_negative_numbers = true)]
    SpeedEstimate(SpeedArgs),
    /// Render an SVG from a CSV written by another subcommand.
    #[command(allow_negative_numbers = true)]
    Figure(FigureArgs),
}

enum Job {
    Integrate(Integrate),
    Spiral(Spiral),
    Edge(Edge),
    Perturb(Perturb),
    Kam(Kam),
    Fraction(Fraction),
    Poincare(Poincare),
    Speed(Speed),
    Figure(Figure),
}

impl Job {
    fn run(&self, out: &mut Outputs) -> Result<Value, CliError> {
        match self {
            Job::Integrate(j) => j.run(out),
            Job::Spiral(j) => j.run(out),
            Job::Edge(j) => j.run(out),
            Job::Perturb(j) => j.run(out),
            Job::Kam(j) => j.run(out),
            Job::Fraction(j) => j.run(out),
            Job::Poincare(j) => j.run(out),
            Job::Speed(j) => j.run(out),
            Job::Figure(j) => j.run(out),
        }
    }
}

fn resolve(command: Command, r: &mut Resolver) -> Result<(&'static str, Job), CliError> {
    Ok(match command {
        Command::Integrate(a) => ("integrate", Job::Integrate(a.resolve(r)?)),
        Command::SpiralSolve(a) => ("spiral-solve", Job::Spiral(a.resolve(r)?)),
        Command::EdgeShoot(a) => ("edge-shoot", Job::Edge(a.resolve(r)?)),
        Command::PerturbEstimate(a) => ("perturb-estimate", Job::Perturb(a.resolve(r)?)),
        Command::KamScan(a) => ("kam-scan", Job::Kam(a.resolve(r)?)),
        Command::FractionSweep(a) => ("fraction-sweep", Job::Fraction(a.resolve(r)?)),
        Command::Poincare(a) => ("poincare", Job::Poincare(a.resolve(r)?)),
        Command::SpeedEstimate(a) => ("speed-estimate", Job::Speed(a.resolve(r)?)),
        Command::Figure(a) => ("figure", Job::Figure(a.resolve(r)?)),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let mut r = Resolver::new(load_config(cli.config.as_deref())?);
    let out_dir: String = r
        .unrecorded("out", cli.out.map(|p| p.to_string_lossy().into_owned()))?
        .unwrap_or_else(|| ".".into());
    let file_threads = r.unrecorded::<usize>("threads", None)?;
    let threads = resolve_threads(cli.threads, std::env::var(THREADS_ENV).ok().as_deref(), file_threads)?;
    let slug: Option<String> = r.unrecorded("slug", cli.slug)?;
    let (name, job) = resolve(cli.command, &mut r)?;
    let config = r.finish()?;
    let slug = match slug {
        Some(s) if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') => s,
        Some(s) => return Err(CliError::Usage(format!("slug {s:?} must be alphanumeric, '-' or '_'"))),
        None => config_slug(name, &config),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} workers: {e}")))?;

    let mut out = Outputs::new(std::path::Path::new(&out_dir), name, &slug)?;
    let summary = job.run(&mut out)?;
    let manifest = out.finish(RunInfo {
        command: name.to_string(),
        config,
        wall_time: started.elapsed().as_secs_f64(),
        threads,
        summary: summary.clone(),
    })?;
    println!("{}", serde_json::to_string(&summary).expect("serializable"));
    eprintln!("wrote {}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("abc-orbits: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
