use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use irs_planner::ckm::{build_ckm, read_ckm, save_ckm, EndpointId, PathKind};
use irs_planner::demo::{self, DESK_REQUIREMENTS};
use irs_planner::metrics::{Case, CostWeights};
use irs_planner::planner::{run_pipeline, sweep, Algorithm, Report, RequirementsDb, RunConfig, SweepAxis};
use irs_planner::rounding::DEFAULT_NGR;
use irs_planner::scene::load_scenario;

/// Worker count for sweeps; all cores when unset.
const WORKERS_ENV: &str = "IRS_PLANNER_WORKERS";

const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(name = "irs-planner", version, about = "Plan reflective-surface deployments for indoor sensing and communication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one deployment and write plan, coverage and report files.
    Plan {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for plan.json, coverage.csv, sca_trace.csv and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluate the empty deployment at full power instead of optimizing.
        #[arg(long)]
        empty: bool,
    },
    /// Re-run the planner over ascending values of one requirement or weight.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated ascending values (dB, dBm or linear weight).
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        /// CSV output file; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build or inspect channel knowledge maps.
    Ckm {
        #[command(subcommand)]
        command: CkmCommand,
    },
    /// Write a built-in scenario as JSON.
    Scenario {
        #[arg(value_enum)]
        profile: Profile,
        /// Seed for the jittered desk profile.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CkmCommand {
    /// Trace every required pair of a scenario and save the map.
    Build {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a summary of a saved map, or the paths of one pair.
    Inspect {
        file: PathBuf,
        /// Two endpoints such as `bs site2` or `site0 sp4`.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        pair: Option<Vec<String>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    Paper,
    SeededDesk,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Sca,
    Cbd,
    Rrb,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Gc,
    Ps,
    W2,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value = "sca")]
    algo: AlgoArg,
    #[arg(long, value_enum, default_value = "1")]
    case: CaseArg,
    /// Illumination threshold P_s in dBm.
    #[arg(long, default_value_t = DESK_REQUIREMENTS.ps_dbm, allow_negative_numbers = true)]
    ps_dbm: f64,
    /// SNR threshold Γ_c in dB.
    #[arg(long, default_value_t = DESK_REQUIREMENTS.gc_db, allow_negative_numbers = true)]
    gc_db: f64,
    /// Noise power σ² in dBm.
    #[arg(long, default_value_t = DESK_REQUIREMENTS.sigma2_dbm, allow_negative_numbers = true)]
    sigma2_dbm: f64,
    /// Transmit power budget P̄0 in dBm.
    #[arg(long, default_value_t = DESK_REQUIREMENTS.p0_max_dbm, allow_negative_numbers = true)]
    p0_max_dbm: f64,
    /// Cost per deployed surface.
    #[arg(long, default_value_t = 1.0)]
    w1: f64,
    /// Cost per watt of transmit power.
    #[arg(long, default_value_t = 1.0)]
    w2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian randomization draws.
    #[arg(long, default_value_t = DEFAULT_NGR)]
    n_gr: usize,
    /// Independent phase draws for rrb.
    #[arg(long, default_value_t = 1)]
    rrb_draws: usize,
    /// Directory caching channel maps by scene hash.
    #[arg(long)]
    ckm_cache: Option<PathBuf>,
    /// Keep the scenario's element count even when the relaxation exceeds the solver size limit.
    #[arg(long)]
    no_auto_scale: bool,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let algorithm = match self.algo {
            AlgoArg::Sca => Algorithm::Sca,
            AlgoArg::Cbd => Algorithm::Cbd,
            AlgoArg::Rrb => Algorithm::Rrb,
        };
        let case = match self.case {
            CaseArg::One => Case::I,
            CaseArg::Two => Case::II,
        };
        let req = RequirementsDb {
            ps_dbm: self.ps_dbm,
            gc_db: self.gc_db,
            sigma2_dbm: self.sigma2_dbm,
            p0_max_dbm: self.p0_max_dbm,
        };
        let weights = CostWeights { w1: self.w1, w2: self.w2 };
        let mut cfg = RunConfig::new(&self.scenario, algorithm, case, req, weights, self.seed)?;
        cfg.n_gr = self.n_gr;
        cfg.rrb_draws = self.rrb_draws;
        cfg.ckm_cache = self.ckm_cache.clone();
        cfg.auto_scale = !self.no_auto_scale;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn workers() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("{WORKERS_ENV}={v} is not a count"))?;
            Ok((n > 0).then_some(n))
        }
        Err(_) => Ok(None),
    }
}

fn print_report(report: &Report) {
    let s = &report.summary;
    println!("algorithm {} case {:?} seed {}", s.algorithm, s.case, s.seed);
    println!("scene {} ({} sites, {} elements each, {} SPs, {} CPs)", &s.scene_hash[..16], s.sites, s.elements_per_site, s.sensing_points, s.comm_points);
    if let Some(m) = s.scaled_from_elements {
        println!("elements per site reduced from {m} to {} to fit the relaxation size limit", s.elements_per_site);
    }
    if let (Some(plan), Some(cost)) = (&report.plan, &report.cost) {
        let sites: Vec<String> =
            plan.beta.iter().enumerate().filter(|(_, b)| **b).map(|(k, _)| k.to_string()).collect();
        println!("deployed sites [{}]", sites.join(", "));
        println!("P0 {:.3} dBm, cost {:.6} (deployment {:.3} + power {:.6})", cost.p0_dbm, cost.total, cost.deployment_term, cost.power_term);
        let met = report.coverage.iter().filter(|r| r.met).count();
        println!("coverage {met}/{} points meet their threshold", report.coverage.len());
    }
    if let Some(stop) = &report.sca_stop {
        println!("sca {} iterations, stopped: {stop}", report.trace.len().saturating_sub(1));
    }
    match &report.infeasibility {
        None => println!("feasible"),
        Some(inf) => {
            println!("infeasible at {}: {}", inf.stage, inf.reason);
            for v in &inf.violations {
                println!("  {v}");
            }
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Plan { run, out, empty } => {
            let mut cfg = run.config()?;
            cfg.out_dir = out;
            cfg.force_empty = empty;
            let report = run_pipeline(&cfg)?;
            print_report(&report);
            if let Some(dir) = &cfg.out_dir {
                println!("wrote {}", dir.display());
            }
            Ok(if report.feasible { ExitCode::SUCCESS } else { ExitCode::from(EXIT_INFEASIBLE) })
        }
        Command::Sweep { run, axis, values, out } => {
            let cfg = run.config()?;
            let axis = match axis {
                AxisArg::Gc => SweepAxis::Gc,
                AxisArg::Ps => SweepAxis::Ps,
                AxisArg::W2 => SweepAxis::W2,
            };
            let result = sweep(&cfg, axis, &values, workers()?)?;
            write_or_print(out.as_deref(), &result.to_csv()?)?;
            let any = result.rows.iter().any(|r| r.feasible);
            Ok(if any { ExitCode::SUCCESS } else { ExitCode::from(EXIT_INFEASIBLE) })
        }
        Command::Ckm { command: CkmCommand::Build { scenario, out } } => {
            let text = fs::read_to_string(&scenario).with_context(|| format!("reading {}", scenario.display()))?;
            let (scene, points) = load_scenario(&text)?;
            let ckm = build_ckm(&scene, &points)?;
            save_ckm(&ckm, &out)?;
            println!("{} pairs, {} path records -> {}", ckm.pair_count(), ckm.record_count(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Ckm { command: CkmCommand::Inspect { file, pair } } => {
            let ckm = read_ckm(&file)?;
            match pair {
                Some(ids) => {
                    let a: EndpointId = ids[0].parse().map_err(anyhow::Error::msg)?;
                    let b: EndpointId = ids[1].parse().map_err(anyhow::Error::msg)?;
                    let paths = ckm.paths(a, b)?;
                    println!("{a} -> {b}: {} paths", paths.len());
                    for p in paths {
                        let kind = match p.kind {
                            PathKind::LoS => "los",
                            PathKind::Reflected => "reflected",
                        };
                        println!(
                            "  {kind:9} length {:.4} m, gain {:.2} dB, phase {:+.4} rad",
                            p.length,
                            20.0 * p.gain.norm().log10(),
                            p.gain.arg()
                        );
                    }
                }
                None => {
                    let count = |f: fn(&EndpointId) -> bool| ckm.endpoints().filter(|(id, _)| f(id)).count();
                    let los = ckm.pairs().flat_map(|(_, r)| r).filter(|r| r.kind == PathKind::LoS).count();
                    println!("frequency {:.4} GHz", ckm.frequency_hz / 1e9);
                    println!("scene hash {}", hex::encode(ckm.scene_hash));
                    println!(
                        "endpoints: {} sites, {} SPs, {} CPs",
                        count(|e| matches!(e, EndpointId::Site(_))),
                        count(|e| matches!(e, EndpointId::Sp(_))),
                        count(|e| matches!(e, EndpointId::Cp(_)))
                    );
                    println!("{} pairs, {} records ({los} line of sight)", ckm.pair_count(), ckm.record_count());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenario { profile, seed, out } => {
            let scene = match profile {
                Profile::Desk => demo::desk_scene(),
                Profile::Paper => demo::paper_scene(),
                Profile::SeededDesk => demo::seeded_desk_scene(seed),
            };
            let mut text = serde_json::to_string_pretty(&scene)?;
            text.push('\n');
            write_or_print(out.as_deref(), &text)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
