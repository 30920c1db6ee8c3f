use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use mosaic_core::bridge::write_pose_dump;
use mosaic_core::engine::{export_snapshot, load_scene, save_scene, Mode, Phase2Config, Phase2Result, Phase2Run};
use mosaic_core::fixtures::{generate_fixture, FixtureOptions};
use mosaic_core::geometry::Scene;
use mosaic_core::guidance::GuidanceSpec;

#[derive(Parser)]
#[command(name = "mosaic", version, about = "Resolve overlapping rigid polygons with a guided membrane")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scene and write its artifacts.
    Run(RunArgs),
    /// Run every scene in a directory under all three modes.
    Bench(BenchArgs),
    /// Write seeded overlapping fixture scenes.
    Fixtures(FixtureArgs),
}

#[derive(Args, Clone)]
struct EngineArgs {
    #[arg(long, default_value = "semantic")]
    mode: Mode,
    /// `const-dir:θ,c`, `silhouette:<image>` or `file:<dump>`.
    #[arg(long, default_value = "const-dir:0,1")]
    guidance: GuidanceSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.5)]
    tau_stop: f64,
    #[arg(long, default_value_t = 128)]
    grid: usize,
}

impl EngineArgs {
    fn config(&self, mode: Mode) -> Phase2Config {
        Phase2Config {
            mode,
            guidance_spec: Some(self.guidance.clone()),
            seed: self.seed,
            max_iterations: self.max_iters,
            tau_stop: self.tau_stop,
            grid_resolution: self.grid,
            ..Phase2Config::default()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
    /// Fill the wall-time column of the metrics CSV.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    suite: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 12)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Stretch the layout: `factor,angle`.
    #[arg(long, value_parser = parse_pair)]
    elongate: Option<(f64, f64)>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `factor,angle`")?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Bench(args) => bench(args),
        Command::Fixtures(args) => fixtures(args),
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let scene = load_scene(&args.scene).with_context(|| format!("loading {}", args.scene.display()))?;
    let mut config = args.engine.config(args.engine.mode);
    config.record_timing = args.timing;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let started = Instant::now();
    let result = Phase2Run::new(scene, config, None)?.run(&mut |view| {
        log::info!(
            "iter {} overlap {:.3}% area {:.1}",
            view.iteration,
            view.metrics.overlap_pct,
            view.metrics.area_u
        );
    })?;
    let seconds = started.elapsed().as_secs_f64();

    write_artifacts(&args.out, &result, &args.engine, seconds)?;
    println!(
        "{}: {} after {} iterations, overlap {:.3}% -> {:.3}%",
        args.scene.display(),
        if result.success { "feasible" } else { "iteration cap" },
        result.iterations,
        result.metrics.initial_overlap_pct,
        result.metrics.final_overlap()
    );
    Ok(if result.success { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn write_artifacts(out: &Path, result: &Phase2Result, engine: &EngineArgs, seconds: f64) -> Result<()> {
    result.metrics.write_csv(&out.join("metrics.csv"))?;
    export_snapshot(&result.scene, result.membrane.as_ref(), &out.join("final.svg"))?;
    write_pose_dump(&out.join("poses.txt"), &result.scene)?;
    save_scene(&out.join("scene.json"), &result.scene)?;
    let summary = json!({
        "mode": engine.mode.to_string(),
        "guidance": engine.guidance.to_string(),
        "seed": engine.seed,
        "success": result.success,
        "iterations": result.iterations,
        "initial_overlap_pct": result.metrics.initial_overlap_pct,
        "final_overlap_pct": result.metrics.final_overlap(),
        "seconds": seconds,
    });
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

struct BenchRow {
    scene: String,
    mode: Mode,
    iterations: usize,
    initial: f64,
    last: f64,
    success: bool,
    seconds: f64,
}

fn bench(args: BenchArgs) -> Result<ExitCode> {
    let mut scenes: Vec<PathBuf> = fs::read_dir(&args.suite)
        .with_context(|| format!("reading {}", args.suite.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "svg")))
        .collect();
    scenes.sort();
    if scenes.is_empty() {
        bail!("no .json or .svg scenes in {}", args.suite.display());
    }
    let loaded: Vec<(String, Scene)> = scenes
        .iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            load_scene(p).with_context(|| format!("loading {}", p.display())).map(|s| (name, s))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, Mode)> = (0..loaded.len())
        .flat_map(|k| [Mode::Semantic, Mode::Isotropic, Mode::MtvOnly].map(|m| (k, m)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
    let rows: Vec<BenchRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, mode)| {
                let (name, scene) = &loaded[k];
                let started = Instant::now();
                let result = Phase2Run::new(scene.clone(), args.engine.config(mode), None)?.run(&mut |_| {})?;
                Ok(BenchRow {
                    scene: name.clone(),
                    mode,
                    iterations: result.iterations,
                    initial: result.metrics.initial_overlap_pct,
                    last: result.metrics.final_overlap(),
                    success: result.success,
                    seconds: started.elapsed().as_secs_f64(),
                })
            })
            .collect::<Result<_>>()
    })?;

    println!(
        "{:<24} {:<10} {:>6} {:>10} {:>10} {:>8} {:>8}",
        "scene", "mode", "iters", "start %", "final %", "feasible", "sec"
    );
    for r in &rows {
        println!(
            "{:<24} {:<10} {:>6} {:>10.3} {:>10.3} {:>8} {:>8.2}",
            r.scene, r.mode, r.iterations, r.initial, r.last, r.success, r.seconds
        );
    }
    println!();
    println!("{:<10} {:>14} {:>12} {:>10}", "mode", "final % mean", "final % sd", "feasible");
    for mode in [Mode::Semantic, Mode::Isotropic, Mode::MtvOnly] {
        let finals: Vec<f64> = rows.iter().filter(|r| r.mode == mode).map(|r| r.last).collect();
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let sd = (finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let ok = rows.iter().filter(|r| r.mode == mode && r.success).count();
        println!("{:<10} {:>14.3} {:>12.3} {:>7}/{}", mode, mean, sd, ok, finals.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn fixtures(args: FixtureArgs) -> Result<ExitCode> {
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let options = FixtureOptions {
        elongation: args.elongate,
        ..FixtureOptions::default()
    };
    for seed in args.first_seed..args.first_seed + args.count {
        let file = generate_fixture(seed, &options)?;
        let path = args.out.join(format!("fixture-{seed:03}.json"));
        fs::write(&path, serde_json::to_string_pretty(&file)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
