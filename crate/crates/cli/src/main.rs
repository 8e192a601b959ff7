//! `stepstone`: run walking scenarios, map and plan in isolation, benchmark
//! the footstep planner and export plot data.
//!
//! Exit codes: 0 on success, 1 when a run falls or a plan fails, 2 on usage,
//! parse or configuration errors.

mod export;
mod output;
mod overrides;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use stepstone::geometry::Side;
use stepstone::planner::{self, Budget, Footstep, PlanRequest, PlanResponse, PlannerConfig, StepRecord};
use stepstone::sim::{self, perceive, write_telemetry, Scenario, World};
use stepstone::terrain::SteppableGrid;

use output::{out_dir, write_atomic, write_json};
use overrides::Override;

/// Gate for the bench p95, in seconds.
const BENCH_GATE: f64 = 0.010;

#[derive(Debug, Parser)]
#[command(
    name = "stepstone",
    version,
    about = "Perception-driven stepping-stone walking pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario; writes <name>.report.json and <name>.telemetry.csv.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Perceive a scenario's terrain from one anchor and write the grid.
    Map {
        scenario: PathBuf,
        /// Sensor anchor `x,y`; defaults to the midpoint of the start feet.
        #[arg(long, value_parser = parse_xy)]
        at: Option<[f64; 2]>,
        /// Frame number (selects the noise and RANSAC streams).
        #[arg(long, default_value_t = 0)]
        frame: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        common: Common,
    },
    /// Plan footsteps for a plan request `{grid | grid_path, q_init, config}`.
    Plan {
        request: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        common: Common,
    },
    /// Time repeated plan calls.
    Bench {
        /// `default` (1 x 2 m stepping stones at 1 cm), `empty`, or a grid JSON file.
        #[arg(long, default_value = "default")]
        grid: String,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        /// Use a fixed iteration budget per call instead of the time budget.
        #[arg(long)]
        budget_iterations: Option<usize>,
        /// Root foot `side,x,y[,yaw]`.
        #[arg(long, value_parser = parse_foot)]
        from: Option<Footstep>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = BenchFormat::Text)]
        format: BenchFormat,
    },
    /// Project a run output onto plot-ready CSV columns.
    Export {
        /// Telemetry CSV (zmp, swing) or run report / plan JSON (footsteps).
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: export::Kind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Override a config value, e.g. `--set planner.max_steps=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<Override>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $STEPSTONE_OUT_DIR, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchFormat {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, common } => cmd_run(&scenario, common),
        Command::Map {
            scenario,
            at,
            frame,
            format,
            common,
        } => cmd_map(&scenario, at, frame, format, common),
        Command::Plan {
            request,
            format,
            common,
        } => cmd_plan(&request, format, common),
        Command::Bench {
            grid,
            iterations,
            budget_iterations,
            from,
            seed,
            format,
        } => cmd_bench(&grid, iterations, budget_iterations, from, seed, format),
        Command::Export { input, kind, out } => cmd_export(&input, kind, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn parse_xy(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    match v[..] {
        [x, y] => Ok([x, y]),
        _ => Err(format!("expected x,y, got `{s}`")),
    }
}

fn parse_foot(s: &str) -> Result<Footstep, String> {
    let mut parts = s.split(',').map(str::trim);
    let side = match parts.next() {
        Some("left" | "l") => Side::Left,
        Some("right" | "r") => Side::Right,
        other => return Err(format!("expected side left|right, got {other:?}")),
    };
    let v: Vec<f64> = parts
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    match v[..] {
        [x, y] => Ok(Footstep::new(side, x, y, 0.0, 0.0)),
        [x, y, yaw] => Ok(Footstep::new(side, x, y, 0.0, yaw)),
        _ => Err(format!("expected side,x,y[,yaw], got `{s}`")),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: malformed JSON", path.display()))
}

/// Scenario file with overrides and seed applied, validated by the schema.
fn load_scenario(path: &Path, common: &Common) -> Result<Scenario> {
    let mut doc = read_json(path)?;
    overrides::apply(&mut doc, &common.overrides)?;
    if let Some(seed) = common.seed {
        doc["seed"] = seed.into();
    }
    let sc = Scenario::from_json(&doc.to_string()).with_context(|| format!("{}", path.display()))?;
    sc.validate().with_context(|| format!("{}", path.display()))?;
    Ok(sc)
}

fn cmd_run(path: &Path, common: Common) -> Result<ExitCode> {
    let sc = load_scenario(path, &common)?;
    let dir = out_dir(common.out);
    let t0 = Instant::now();
    let out = sim::run(&sc)?;

    let telemetry_name = format!("{}.telemetry.csv", sc.name);
    let mut csv = Vec::new();
    write_telemetry(&out.telemetry, &mut csv)?;
    write_atomic(&dir.join(&telemetry_name), &csv)?;
    let mut report = out.report;
    report.telemetry = Some(telemetry_name);
    let report_path = dir.join(format!("{}.report.json", sc.name));
    write_json(&report_path, &report)?;

    let r = &report;
    let summary = format!(
        "{} seed {}: {:.2} m in {:.2} s sim ({:.2} m/s), {} touchdowns, {} replans, {:.1} s wall",
        sc.name,
        sc.seed,
        r.distance,
        r.sim_time,
        r.mean_speed,
        r.touchdowns.len(),
        r.replan_events.iter().filter(|e| e.accepted).count(),
        t0.elapsed().as_secs_f64()
    );
    println!("report: {}", report_path.display());
    if r.success {
        println!("SUCCESS {summary}");
        Ok(ExitCode::SUCCESS)
    } else {
        let reason = r.failure_reason.map_or("unknown".to_string(), |f| f.to_string());
        println!("FAILURE {reason}: {summary}");
        if let Some(d) = &r.failure_detail {
            eprintln!("{reason}: {d}");
        }
        Ok(ExitCode::from(1))
    }
}

fn cmd_map(path: &Path, at: Option<[f64; 2]>, frame: u64, format: Format, common: Common) -> Result<ExitCode> {
    let sc = load_scenario(path, &common)?;
    let anchor = at.unwrap_or([
        0.5 * (sc.start.left[0] + sc.start.right[0]),
        0.5 * (sc.start.left[1] + sc.start.right[1]),
    ]);
    let world = World::new(sc.terrain.clone());
    let t0 = Instant::now();
    let grid = perceive(&world, &sc, anchor, frame)?;
    let elapsed = t0.elapsed();

    let dir = out_dir(common.out);
    let file = match format {
        Format::Json => {
            let p = dir.join(format!("{}.grid.json", sc.name));
            write_json(&p, &grid)?;
            p
        }
        Format::Csv => {
            let p = dir.join(format!("{}.grid.csv", sc.name));
            write_atomic(&p, &grid_csv(&grid)?)?;
            p
        }
    };
    println!(
        "{} x {} cells at {} m, {} steppable in {} segments ({:.1} ms): {}",
        grid.nx(),
        grid.ny(),
        grid.resolution(),
        grid.steppable_count(),
        grid.segments().len(),
        elapsed.as_secs_f64() * 1e3,
        file.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn grid_csv(grid: &SteppableGrid) -> Result<Vec<u8>> {
    output::csv_bytes(&["ix", "iy", "x", "y", "steppable", "height", "plane_id"], |w| {
        for iy in 0..grid.ny() {
            for ix in 0..grid.nx() {
                let c = grid.get(ix, iy);
                let [x, y] = grid.cell_center(ix, iy);
                let plane = c.plane_id.map_or(String::new(), |p| p.to_string());
                let height = if c.steppable {
                    format!("{}", c.height)
                } else {
                    String::new()
                };
                w.serialize((ix, iy, x, y, c.steppable, height, plane))?;
            }
        }
        Ok(())
    })
}

fn cmd_plan(path: &Path, format: Format, common: Common) -> Result<ExitCode> {
    let mut doc = read_json(path)?;
    let mut ovs = common.overrides.clone();
    if let Some(seed) = common.seed {
        ovs.push(Override {
            path: vec!["config".into(), "seed".into()],
            value: seed.into(),
        });
    }
    overrides::apply(&mut doc, &ovs)?;
    let req: PlanRequest = serde_path_to_error::deserialize(doc)
        .map_err(|e| anyhow::anyhow!("{}: at {}: {}", path.display(), e.path(), e.inner()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let grid = req.load_grid(base).map_err(anyhow::Error::msg)?;
    req.config.validate()?;

    let stem = path
        .file_stem()
        .map_or("plan".into(), |s| s.to_string_lossy().into_owned());
    let dir = out_dir(common.out);
    let outcome = match planner::plan(&grid, &req.q_init, &req.config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("plan failed: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    let resp = PlanResponse::from(&outcome);
    let file = match format {
        Format::Json => {
            let p = dir.join(format!("{stem}.plan.json"));
            write_json(&p, &resp)?;
            p
        }
        Format::Csv => {
            let p = dir.join(format!("{stem}.footsteps.csv"));
            write_atomic(&p, &steps_csv(&resp.steps)?)?;
            p
        }
    };
    println!(
        "{} steps, score {:.4}, {} iterations in {:.2} ms: {}",
        resp.length,
        resp.score,
        resp.iterations,
        resp.elapsed_us as f64 / 1e3,
        file.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn steps_csv(steps: &[StepRecord]) -> Result<Vec<u8>> {
    output::csv_bytes(&export::FOOTSTEP_COLUMNS, |w| {
        for (i, s) in steps.iter().enumerate() {
            w.serialize((i, s.side, s.x, s.y, s.z, s.yaw))?;
        }
        Ok(())
    })
}

fn bench_grid(spec: &str) -> Result<SteppableGrid> {
    Ok(match spec {
        "default" => planner::stepping_stone_grid(),
        "empty" => SteppableGrid::new(0.01, [-0.1, -0.5], 200, 100),
        file => {
            let text = std::fs::read_to_string(file).with_context(|| format!("reading {file}"))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de)
                .map_err(|e| anyhow::anyhow!("{file}: at {}: {}", e.path(), e.inner()))?
        }
    })
}

#[derive(serde::Serialize)]
struct BenchReport {
    grid: String,
    nx: usize,
    ny: usize,
    resolution: f64,
    budget: Budget,
    stats: planner::BenchStats,
    gate_s: f64,
    pass: bool,
    /// Only checked with an iteration budget.
    deterministic: Option<bool>,
}

fn cmd_bench(
    spec: &str,
    iterations: usize,
    budget_iterations: Option<usize>,
    from: Option<Footstep>,
    seed: u64,
    format: BenchFormat,
) -> Result<ExitCode> {
    if iterations < 100 {
        bail!("--iterations must be at least 100, got {iterations}");
    }
    let grid = bench_grid(spec)?;
    let q = from.unwrap_or(Footstep::new(Side::Left, 0.1, 0.13, 0.0, 0.0));
    let mut cfg = PlannerConfig {
        seed,
        ..PlannerConfig::default()
    };
    if let Some(n) = budget_iterations {
        cfg.budget = Budget::Iterations(n);
    }
    cfg.validate()?;

    let stats = planner::bench(&grid, &q, &cfg, iterations);
    let deterministic = budget_iterations.map(|_| {
        let first = planner::plan(&grid, &q, &cfg).map(|o| o.path);
        (0..2).all(|_| planner::plan(&grid, &q, &cfg).map(|o| o.path) == first)
    });
    let report = BenchReport {
        grid: spec.to_string(),
        nx: grid.nx(),
        ny: grid.ny(),
        resolution: grid.resolution(),
        budget: cfg.budget,
        stats,
        gate_s: BENCH_GATE,
        pass: stats.p95 <= BENCH_GATE,
        deterministic,
    };
    match format {
        BenchFormat::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        BenchFormat::Text => {
            let ms = |s: f64| s * 1e3;
            let budget = match report.budget {
                Budget::Time(s) => format!("{} ms per call", s * 1e3),
                Budget::Iterations(n) => format!("{n} iterations per call"),
            };
            println!(
                "grid {}: {} x {} cells at {} m, {} calls, budget {budget}",
                spec, report.nx, report.ny, report.resolution, stats.calls
            );
            println!(
                "p50 {:.3} ms  p95 {:.3} ms  max {:.3} ms  mean {:.3} ms  ({:.0} validity tests/call)",
                ms(stats.p50),
                ms(stats.p95),
                ms(stats.max),
                ms(stats.mean),
                stats.validity_tests
            );
            println!(
                "budget {:.0} ms: {} (p95 {:.3} ms)",
                ms(BENCH_GATE),
                if report.pass { "PASS" } else { "FAIL" },
                ms(stats.p95)
            );
            if let Some(d) = deterministic {
                println!(
                    "determinism: {}",
                    if d {
                        "identical plans across 3 repeats"
                    } else {
                        "MISMATCH"
                    }
                );
            }
        }
    }
    // timing is reported, not enforced; a nondeterministic plan is a defect
    Ok(if deterministic == Some(false) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_export(input: &Path, kind: export::Kind, out: Option<PathBuf>) -> Result<ExitCode> {
    let bytes = export::export(input, kind)?;
    let stem = input
        .file_stem()
        .map_or("export".into(), |s| s.to_string_lossy().into_owned());
    let stem = stem
        .trim_end_matches(".telemetry")
        .trim_end_matches(".report")
        .trim_end_matches(".plan");
    let path = out_dir(out).join(format!("{stem}.{}.csv", kind.name()));
    write_atomic(&path, &bytes)?;
    println!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}
