//! `flexagg`: generate scenarios, aggregate fleet flexibility, dispatch and
//! verify. Exit codes: 0 success, 1 usage or other error, 2 infeasibility.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flexagg::aggregation::{aggregate, disaggregate, sample_directions};
use flexagg::container::{read_flexibility, write_flexibility};
use flexagg::dispatch::{peak_shave_centralized, peak_shave_vertex, uncontrolled_baseline};
use flexagg::oracle::{approximation_quality, minkowski_contains};
use flexagg::report::{run_pipeline, write_reports, PipelineConfig};
use flexagg::scenario::{generate_scenario, ScenarioSpec};
use flexagg::storage::{build_polytope, check_feasible};
use flexagg::{Scenario, VertexFlexibility};

#[derive(Parser)]
#[command(
    name = "flexagg",
    version,
    about = "Vertex-based aggregation of storage fleet flexibility"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Seed for scenario generation, direction sampling and quality metrics.
    #[arg(long, default_value_t = 1, global = true)]
    seed: u64,
    #[arg(long, default_value = ".", global = true)]
    out_dir: PathBuf,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario JSON; when absent a scenario is generated from the flags below.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 67)]
    households: usize,
    #[arg(long, default_value_t = 0.3)]
    ev_share: f64,
    #[arg(long, default_value_t = 24)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
}

#[derive(Args, Clone)]
struct DirectionArgs {
    /// Number of sign-vector directions; defaults to d^2.
    #[arg(long)]
    g: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Vertex,
    Central,
    Uncontrolled,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario and write scenario.json.
    Generate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Compute summed extreme actions and write flex.bin with its sidecar.
    Aggregate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        dirs: DirectionArgs,
    },
    /// Peak-shaving dispatch with one method; writes dispatch_<method>.json.
    Dispatch {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        dirs: DirectionArgs,
        #[arg(long, value_enum)]
        method: Method,
        /// Reuse a flexibility container instead of aggregating again.
        #[arg(long)]
        flex: Option<PathBuf>,
    },
    /// Split aggregate weights into per-device profiles; writes profiles.json.
    Disaggregate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        flex: PathBuf,
        /// JSON array of weights, or a dispatch result holding a `weights` field.
        #[arg(long)]
        weights: PathBuf,
    },
    /// Check extreme actions, sums and containment; writes verify.json.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        dirs: DirectionArgs,
        /// Columns checked for Minkowski-sum membership by LP.
        #[arg(long, default_value_t = 4)]
        containment: usize,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Full pipeline: CSV time series, JSON summary, timings and SVG chart.
    Report {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        dirs: DirectionArgs,
        /// Random directions for the quality metrics (0 disables them).
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
}

fn load_scenario(args: &ScenarioArgs, seed: u64) -> anyhow::Result<Scenario> {
    match &args.scenario {
        Some(p) => Scenario::load(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let spec = ScenarioSpec::new(args.households, args.ev_share, args.d, args.dt, seed);
            Ok(generate_scenario(&spec)?)
        }
    }
}

fn directions_count(dirs: &DirectionArgs, d: usize) -> usize {
    dirs.g.unwrap_or(d * d)
}

fn build_flex(sc: &Scenario, dirs: &DirectionArgs, seed: u64) -> anyhow::Result<VertexFlexibility> {
    let set = sample_directions(sc.d, directions_count(dirs, sc.d), seed)?;
    Ok(aggregate(&sc.devices()?, &set)?)
}

fn write_json<S: serde::Serialize>(dir: &Path, name: &str, value: &S) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(p)
}

fn read_weights(path: &Path) -> anyhow::Result<Vec<f64>> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let arr = match &v {
        serde_json::Value::Array(_) => &v,
        serde_json::Value::Object(o) => o.get("weights").context("no `weights` field")?,
        _ => bail!("weights file must hold an array or an object with `weights`"),
    };
    Ok(serde_json::from_value(arr.clone())?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { common, scenario } => {
            let sc = load_scenario(&scenario, common.seed)?;
            std::fs::create_dir_all(&common.out_dir)?;
            let p = common.out_dir.join("scenario.json");
            std::fs::write(&p, sc.to_json()? + "\n")?;
            println!(
                "wrote {} ({} devices, d = {})",
                p.display(),
                sc.num_devices(),
                sc.d
            );
        }
        Command::Aggregate {
            common,
            scenario,
            dirs,
        } => {
            let sc = load_scenario(&scenario, common.seed)?;
            let flex = build_flex(&sc, &dirs, common.seed)?;
            std::fs::create_dir_all(&common.out_dir)?;
            let p = common.out_dir.join("flex.bin");
            write_flexibility(&flex, &p)?;
            println!("wrote {} ({} columns)", p.display(), flex.num_vertices());
        }
        Command::Dispatch {
            common,
            scenario,
            dirs,
            method,
            flex,
        } => {
            let sc = load_scenario(&scenario, common.seed)?;
            let (result, name) = match method {
                Method::Vertex => {
                    let flex = match flex {
                        Some(p) => read_flexibility(&p)?,
                        None => build_flex(&sc, &dirs, common.seed)?,
                    };
                    (peak_shave_vertex(&sc, &flex)?, "vertex")
                }
                Method::Central => (peak_shave_centralized(&sc)?, "central"),
                Method::Uncontrolled => (uncontrolled_baseline(&sc)?, "uncontrolled"),
            };
            let p = write_json(&common.out_dir, &format!("dispatch_{name}.json"), &result)?;
            println!(
                "{name} peak {:.3} kW, wrote {}",
                result.peak_kw,
                p.display()
            );
        }
        Command::Disaggregate {
            common,
            flex,
            weights,
        } => {
            let flex: VertexFlexibility = read_flexibility(&flex)?;
            let w = read_weights(&weights)?;
            let parts = disaggregate(&flex, &w)?;
            let p = write_json(&common.out_dir, "profiles.json", &parts)?;
            println!("wrote {} ({} devices)", p.display(), parts.len());
        }
        Command::Verify {
            common,
            scenario,
            dirs,
            containment,
            samples,
        } => {
            let sc = load_scenario(&scenario, common.seed)?;
            let devices = sc.devices()?;
            let flex = build_flex(&sc, &dirs, common.seed)?;
            let per = flex
                .per_device
                .as_ref()
                .expect("aggregate keeps device columns");
            let mut infeasible_columns = 0usize;
            for (dev, m) in devices.iter().zip(per) {
                let tol = build_polytope(dev).default_tolerance();
                for col in m.columns() {
                    if !check_feasible(dev, &col.to_vec(), tol)?.feasible {
                        infeasible_columns += 1;
                    }
                }
            }
            let checked = containment.min(flex.num_vertices());
            let contained = (0..checked)
                .filter(|&j| minkowski_contains(&devices, &flex.v_agg.column(j).to_vec(), 1e-7))
                .count();
            let quality = if samples > 0 && !devices.is_empty() {
                Some(approximation_quality(
                    &devices,
                    &flex,
                    samples,
                    common.seed,
                )?)
            } else {
                None
            };
            let ok = infeasible_columns == 0 && contained == checked;
            let report = serde_json::json!({
                "format_version": flexagg::FORMAT_VERSION,
                "columns": flex.num_vertices(),
                "devices": devices.len(),
                "infeasible_extreme_actions": infeasible_columns,
                "containment_checked": checked,
                "containment_passed": contained,
                "quality": quality,
                "passed": ok,
            });
            let p = write_json(&common.out_dir, "verify.json", &report)?;
            println!(
                "verification {}, wrote {}",
                if ok { "passed" } else { "FAILED" },
                p.display()
            );
            if !ok {
                bail!("verification failed");
            }
        }
        Command::Report {
            common,
            scenario,
            dirs,
            samples,
        } => {
            let sc = load_scenario(&scenario, common.seed)?;
            let mut cfg = PipelineConfig::quadratic(sc.d, common.seed);
            cfg.g = directions_count(&dirs, sc.d);
            cfg.quality_samples = samples;
            let out = run_pipeline(&sc, &cfg)?;
            for p in write_reports(&out, &sc, &common.out_dir)? {
                println!("wrote {}", p.display());
            }
            let s = &out.summary;
            println!(
                "peak kW: uncontrolled {:.2}, vertex {:.2}, centralized {:.2}",
                s.peak_uncontrolled, s.peak_vertex, s.peak_centralized
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = e.chain().any(|c| {
                c.downcast_ref::<flexagg::Error>()
                    .is_some_and(flexagg::Error::is_infeasibility)
            });
            ExitCode::from(if infeasible { 2 } else { 1 })
        }
    }
}
