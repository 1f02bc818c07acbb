//! `swave` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use swave::arfi::{repeat_measurements, repeat_seeds};
use swave::inversion::CurlMode;
use swave::io::ArtifactWriter;
use swave::pipeline::{
    acquisition_time_report, arfi_rows, arfi_scene, render_time_report, replicate_table, run_stages,
    DisplacementSource, RunConfig, RunReport, StopAfter, REFERENCE_MODULI,
};
use swave::sequence::{
    plan_sequence, render_timeline, spectral_separability, validate_synchronization, SequenceParams,
};
use swave::{Error, Execution};

#[derive(Parser)]
#[command(name = "swave", version, about = "Synchronized multi-frequency shear-wave elastography")]
struct Cli {
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the phantom and excitation; write the modulus volume.
    Simulate(RunArgs),
    /// Plan the sequence and acquire the sweep.
    Acquire(RunArgs),
    /// Estimate displacement (tracked or oracle).
    Track(RunArgs),
    /// Run the full pipeline through elasticity statistics.
    Invert(RunArgs),
    /// Radiation-force baseline on the configured phantom.
    Arfi(ArfiArgs),
    /// Plan and check a sequence for a set of excitation frequencies.
    Sequence(SequenceArgs),
    /// Acquisition-time comparison against the original swept 3D method.
    Report(ReportArgs),
    /// Four reference phantoms under all three curl modes.
    ReplicateTable(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long)]
    seed: Option<u64>,
    /// Displacement source: oracle or tracked.
    #[arg(long, value_parser = parse_source)]
    source: Option<DisplacementSource>,
    /// Curl mode: none, curl2d or curl3d.
    #[arg(long, value_parser = parse_curl)]
    curl: Option<CurlMode>,
}

#[derive(Args)]
struct ArfiArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 8)]
    repeats: usize,
    /// Per-trace peak SNR [dB]; noiseless when omitted.
    #[arg(long)]
    snr_db: Option<f64>,
}

#[derive(Args)]
struct SequenceArgs {
    /// Excitation frequencies [Hz].
    #[arg(required = true, num_args = 1..)]
    frequencies: Vec<f64>,
    #[arg(long, default_value_t = 3000.0)]
    frame_rate: f64,
    /// Minimum imaging window per plane [s]; the slot is rounded up to a multiple of T0.
    #[arg(long, default_value_t = 0.120)]
    min_imaging: f64,
    #[arg(long, default_value_t = 10)]
    planes: usize,
    /// Allowed relative deviation of located spectral peaks.
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value_t = 8)]
    arfi_repeats: usize,
    /// Also write the table as CSV under this directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn parse_source(s: &str) -> Result<DisplacementSource, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_curl(s: &str) -> Result<CurlMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.output {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.source {
            cfg.acquisition.source = s;
        }
        if let Some(c) = self.curl {
            cfg.inversion.curl = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_report(report: &RunReport, dir: &Path) {
    println!("run `{}` completed {:?} ({})", report.name, report.completed, report.source.name());
    for t in &report.timings {
        println!("  {:<14} {:>8.2} s", t.stage, t.seconds);
    }
    if !report.rows.is_empty() {
        println!("{:<12} {:<8} {:<10} {:>10} {:>10} {:>8}", "phantom", "mode", "f_set", "mean [Pa]", "std [Pa]", "voxels");
        for r in &report.rows {
            println!(
                "{:<12} {:<8} {:<10} {:>10.1} {:>10.1} {:>8}",
                r.phantom_id, r.mode, r.f_set, r.mean_pa, r.std_pa, r.n_voxels
            );
        }
    }
    println!("{} artifacts under {}", report.artifacts.len(), dir.display());
}

fn staged(args: &RunArgs, exec: Execution, stop: StopAfter) -> anyhow::Result<()> {
    let cfg = args.config()?;
    let report = run_stages(&cfg, exec, stop)?;
    print_report(&report, &cfg.output_dir);
    Ok(())
}

fn arfi(args: &ArfiArgs, exec: Execution) -> anyhow::Result<()> {
    let cfg = args.run.config()?;
    let mut scene = arfi_scene(&cfg)?;
    scene.snr_db = args.snr_db;
    let report = repeat_measurements(&scene, &repeat_seeds(cfg.seed, args.repeats), exec)?;
    let mut w = ArtifactWriter::new(&cfg.output_dir)?;
    w.write_csv("arfi.csv", &arfi_rows(&report, scene.material.rho))?;
    w.write_json("arfi_report.json", &report)?;
    w.finish()?;
    println!(
        "ARFI x{}: E = {:.1} +/- {:.1} Pa, acquisition {:.2} s",
        report.repeats.len(),
        report.mean,
        report.std,
        report.total_time
    );
    for p in report.repeats.first().map(|r| r.phase_velocities.as_slice()).unwrap_or(&[]) {
        match (p.speed, p.flag) {
            (Some(c), _) => println!("  {:>6.1} Hz  c = {c:.3} m/s", p.frequency),
            (None, flag) => println!("  {:>6.1} Hz  no estimate ({flag:?})", p.frequency),
        }
    }
    Ok(())
}

fn sequence(args: &SequenceArgs) -> anyhow::Result<()> {
    let params = SequenceParams {
        frequencies: args.frequencies.clone(),
        frame_rate: args.frame_rate,
        n_planes: args.planes,
        min_imaging: args.min_imaging,
        ..SequenceParams::deep()
    };
    let plan = plan_sequence(&params)?;
    println!(
        "T0 = {:.4} s, imaging {:.4} s, per plane {:.4} s, {} frames/plane, {} frames, total {:.3} s",
        plan.fundamental_period,
        plan.imaging_duration,
        plan.per_plane_period,
        plan.frames_per_plane,
        plan.total_frames,
        plan.total_time
    );
    print!("{}", render_timeline(&plan));
    let sync = validate_synchronization(&plan);
    for c in &sync.checks {
        println!("  [{}] {} (residual {:.2e})", if c.passed { "ok" } else { "FAIL" }, c.name, c.residual);
    }
    let sep = spectral_separability(&plan, args.tolerance);
    for t in &sep.tones {
        match t.located {
            Some(f) => println!("  tone {:>7.2} Hz located at {f:.2} Hz ({:+.2}%)", t.frequency, 100.0 * t.deviation),
            None => println!("  tone {:>7.2} Hz not located", t.frequency),
        }
    }
    if !sync.passed {
        bail!("synchronization check failed");
    }
    if !sep.passed {
        bail!("spectral separability failed: {}", sep.diagnostic.clone().unwrap_or_default());
    }
    Ok(())
}

fn report(args: &ReportArgs) -> anyhow::Result<()> {
    let deep = plan_sequence(&SequenceParams::deep())?;
    let shallow = plan_sequence(&SequenceParams::shallow())?;
    let rows = acquisition_time_report(&deep, &shallow, args.arfi_repeats);
    print!("{}", render_time_report(&rows));
    if let Some(dir) = &args.output {
        let mut w = ArtifactWriter::new(dir)?;
        w.write_csv("acquisition_time.csv", &rows)?;
        w.finish()?;
    }
    Ok(())
}

fn replicate(args: &RunArgs, exec: Execution) -> anyhow::Result<()> {
    let cfg = args.config()?;
    let rows = replicate_table(&cfg, &REFERENCE_MODULI, exec)?;
    let mut w = ArtifactWriter::new(&cfg.output_dir)?;
    w.write_csv("replicate_table.csv", &rows)?;
    w.finish()?;
    for r in &rows {
        println!("{:<10} {:<7} {:>9.1} +/- {:>7.1} Pa", r.phantom_id, r.mode, r.mean_pa, r.std_pa);
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match &cli.command {
        Command::Simulate(a) => staged(a, exec, StopAfter::Simulate),
        Command::Acquire(a) => staged(a, exec, StopAfter::Acquire),
        Command::Track(a) => staged(a, exec, StopAfter::Track),
        Command::Invert(a) => staged(a, exec, StopAfter::Invert),
        Command::Arfi(a) => arfi(a, exec),
        Command::Sequence(a) => sequence(a).context("sequence planning failed"),
        Command::Report(a) => report(a),
        Command::ReplicateTable(a) => replicate(a, exec),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(Error::Stage { stage, written, .. }) = e.downcast_ref::<Error>() {
                eprintln!("failed stage: {stage}");
                for p in written {
                    eprintln!("  already written: {}", p.display());
                }
            }
            ExitCode::FAILURE
        }
    }
}
