use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use contactmap::field::synth::ArrayLayout;
use contactmap::gcode::inspect_program;
use contactmap::optimizer::PoseSet;
use contactmap::pipeline::{self, Plan, PipelineConfig, PoseStage, RunOptions};
use contactmap::route::synth::{clustered_graph, ClusterLayout};
use contactmap::route::{benchmark, GaConfig, Planner, PlannerConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Plan probe contacts on segmented films and emit a machine program.
#[derive(Debug, Parser)]
#[command(name = "contactmap", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Pipeline config (TOML).
    #[arg(long, global = true, default_value = "contactmap.toml")]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write every accepted optimizer step to trace.jsonl.
    #[arg(long, global = true)]
    trace: bool,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the config and list every problem found.
    Validate,
    /// Place poses on every mask (poses.csv, poses.json).
    Poses,
    /// Order the contacts of a pose file into a tour (tour.csv, plan.json).
    Plan {
        /// Pose file from `poses`; recomputed from the masks when absent.
        #[arg(long)]
        poses: Option<PathBuf>,
        /// Overrides planner.algorithm.
        #[arg(long)]
        planner: Option<Planner>,
    },
    /// Emit program.gcode for a stored plan and check it.
    Gcode {
        /// Plan file from `plan`; defaults to <out>/plan.json.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Fit IV sweeps and build maps (measurements.csv, summary.csv, maps/).
    Analyze {
        /// Pose file from `poses`; defaults to <out>/poses.json.
        #[arg(long)]
        poses: Option<PathBuf>,
        /// Campaign directory; overrides measurement.iv_dir.
        #[arg(long)]
        iv: Option<PathBuf>,
    },
    /// Compare planners on synthetic clustered graphs (bench.csv, bench_summary.csv).
    Bench {
        #[arg(long, default_value_t = 115)]
        graphs: usize,
        /// Comma-separated planner names.
        #[arg(long, value_delimiter = ',', default_value = "greedy_dijkstra,noisy_dijkstra,christofides")]
        planners: Vec<Planner>,
        #[arg(long, default_value_t = 1000)]
        generations: usize,
        #[arg(long, default_value_t = 0.02)]
        alpha: f64,
    },
    /// Run every stage.
    Run,
    /// Write a synthetic film array and a config for it.
    Synth {
        /// Target directory.
        dir: PathBuf,
        /// Simulate IV sweeps during `run`.
        #[arg(long)]
        measurements: bool,
    },
}

fn load(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = pipeline::load_config(&g.config)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn checked(g: &Global) -> Result<PipelineConfig> {
    let cfg = load(g)?;
    let d = cfg.diagnostics();
    if !d.is_empty() {
        for x in &d {
            eprintln!("{}: {x}", g.config.display());
        }
        bail!("{} problem(s) in {}", d.len(), g.config.display());
    }
    Ok(cfg)
}

fn read_poses(path: &Path) -> Result<Vec<PoseSet>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn compute_poses(cfg: &PipelineConfig) -> Result<PoseStage> {
    let masks = pipeline::load_masks(cfg)?;
    let fields = pipeline::build_fields(cfg, &masks)?;
    Ok(pipeline::place_poses(cfg, &fields)?)
}

fn report(written: &[PathBuf]) {
    for p in written {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let mut written = Vec::new();
    match cli.command {
        Command::Validate => {
            let d = pipeline::validate_config(&g.config);
            for x in &d {
                println!("{x}");
            }
            if !d.is_empty() {
                bail!("{} problem(s)", d.len());
            }
            println!("ok");
        }
        Command::Poses => {
            let cfg = checked(g)?;
            let calib = pipeline::load_calibration(&cfg)?;
            let stage = compute_poses(&cfg)?;
            pipeline::write_poses(&cfg.out_dir, &stage, &calib, g.trace, &mut written)?;
            let valid = stage.sets.iter().filter(|s| s.valid).count();
            println!("{valid}/{} pose sets valid", stage.sets.len());
            report(&written);
        }
        Command::Plan { poses, planner } => {
            let mut cfg = checked(g)?;
            if let Some(p) = planner {
                cfg.planner.algorithm = p;
            }
            let calib = pipeline::load_calibration(&cfg)?;
            let sets = match poses {
                Some(p) => read_poses(&p)?,
                None => compute_poses(&cfg)?.sets,
            };
            let plan = pipeline::plan_route(&cfg, &calib, &sets)?;
            pipeline::write_plan(&cfg.out_dir, &plan, &mut written)?;
            println!(
                "{}: {} contacts, {:.3} mm",
                plan.tour.algorithm,
                plan.tour.order.len() - 1,
                plan.tour.length_mm
            );
            report(&written);
        }
        Command::Gcode { plan } => {
            let cfg = load(g)?;
            let path = plan.unwrap_or_else(|| cfg.out_dir.join("plan.json"));
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let plan = Plan::from_json(&text)?;
            let prog = pipeline::program(&cfg, &plan)?;
            let check = inspect_program(&prog, &cfg.probe, cfg.gcode.rotary_axis)?;
            if !check.is_safe() {
                bail!("program moves laterally at depth on lines {:?}", check.violations);
            }
            pipeline::write_program(&cfg.out_dir, &prog, &mut written)?;
            println!(
                "{} contact cycles, contact travel {:.6} mm (tour {:.6} mm)",
                check.contact_cycles, check.travel_mm, plan.tour.length_mm
            );
            report(&written);
        }
        Command::Analyze { poses, iv } => {
            let mut cfg = load(g)?;
            if let Some(dir) = iv {
                cfg.measurement.iv_dir = Some(dir);
                cfg.measurement.synthetic = false;
            }
            let d = cfg.diagnostics();
            if !d.is_empty() {
                for x in &d {
                    eprintln!("{x}");
                }
                bail!("{} problem(s) in {}", d.len(), g.config.display());
            }
            let masks = pipeline::load_masks(&cfg)?;
            let fields = pipeline::build_fields(&cfg, &masks)?;
            let path = poses.unwrap_or_else(|| cfg.out_dir.join("poses.json"));
            let sets = read_poses(&path)?;
            let Some(a) = pipeline::analyze(&cfg, &masks, &fields, &sets)? else {
                bail!("no campaign: set measurement.iv_dir, measurement.synthetic or --iv");
            };
            pipeline::write_analysis(&cfg.out_dir, &a, &mut written)?;
            println!("{} measurements over {} groups", a.records.len(), a.summary.len());
            report(&written);
        }
        Command::Bench {
            graphs,
            planners,
            generations,
            alpha,
        } => {
            let seed = g.seed.unwrap_or(0);
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let layout = ClusterLayout::default();
            let set: Vec<_> = (0..graphs as u64)
                .map(|i| clustered_graph(&layout, seed.wrapping_add(i)))
                .collect();
            let pc = PlannerConfig {
                alpha,
                generations,
                seed,
            };
            let ga = GaConfig {
                seed,
                ..GaConfig::default()
            };
            let table = benchmark(&set, &planners, &pc, &ga)?;
            std::fs::create_dir_all(&out)?;
            let rows = out.join("bench.csv");
            let summary = out.join("bench_summary.csv");
            table.write_csv(std::fs::File::create(&rows)?)?;
            table.write_summary_csv(std::fs::File::create(&summary)?)?;
            println!("algorithm          median_mm   variance_mm2   mean_ms");
            for s in table.summaries() {
                println!(
                    "{:<16} {:>11.3} {:>14.3} {:>9.2}",
                    s.algorithm.as_str(),
                    s.median_mm,
                    s.variance_mm2,
                    s.mean_wall_ms
                );
            }
            report(&[rows, summary]);
        }
        Command::Run => {
            let cfg = load(g)?;
            let s = pipeline::run_pipeline(&cfg, RunOptions { trace: g.trace })?;
            println!(
                "{} segments, {} valid sets, {} contacts, {} tour {:.3} mm, {} measurements",
                s.segments, s.valid_sets, s.contacts, s.planner, s.tour_length_mm, s.measurements
            );
            if !s.failed_segments.is_empty() {
                println!("failed segments: {}", s.failed_segments.join(", "));
            }
            for a in &s.artifacts {
                println!("wrote {}", cfg.out_dir.join(a).display());
            }
        }
        Command::Synth { dir, measurements } => {
            let seed = g.seed.unwrap_or(0);
            let path = pipeline::write_synthetic_project(&dir, &ArrayLayout::default(), seed, measurements)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
