//! End-to-end planning runs, coverage tables, requirement sweeps and report
//! files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{assemble_channel_set, ChannelError, ChannelSet, Target};
use crate::ckm::{build_ckm, load_ckm, save_ckm, scene_hash, Ckm, CkmError};
use crate::heuristics::{cbd_plan, rrb_plan, HeuristicError, RrbOptions};
use crate::metrics::{
    check_plan, coverage, linear_to_db, required_power, system_cost, watts_to_dbm,
    Case, CostWeights, DeploymentPlan, MetricsError, Phases, Requirements,
};
use crate::rounding::{greedy_round, RoundingError, RoundingOptions, BUDGET_MARGIN, DEFAULT_NGR};
use crate::sca::{solve_relaxed, RelaxedSolution, ScaError, ScaOptions, TraceEntry};
use crate::scene::{load_scenario, PointSet, Scene, SceneError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sca,
    Cbd,
    Rrb,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Sca => "sca",
            Algorithm::Cbd => "cbd",
            Algorithm::Rrb => "rrb",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sca" => Ok(Algorithm::Sca),
            "cbd" => Ok(Algorithm::Cbd),
            "rrb" => Ok(Algorithm::Rrb),
            _ => Err(format!("unknown algorithm `{s}` (expected sca, cbd or rrb)")),
        }
    }
}

/// Requirements as entered, in dBm and dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequirementsDb {
    pub ps_dbm: f64,
    pub gc_db: f64,
    pub sigma2_dbm: f64,
    pub p0_max_dbm: f64,
}

impl RequirementsDb {
    pub fn to_linear(&self) -> Result<Requirements, MetricsError> {
        Requirements::from_db(self.ps_dbm, self.gc_db, self.sigma2_dbm, self.p0_max_dbm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub algorithm: Algorithm,
    pub case: Case,
    pub requirements_db: RequirementsDb,
    /// Linear values, converted once from `requirements_db`.
    pub requirements: Requirements,
    pub weights: CostWeights,
    pub seed: u64,
    pub n_gr: usize,
    /// Independent phase draws for RRB.
    pub rrb_draws: usize,
    pub out_dir: Option<PathBuf>,
    /// Directory holding cached channel maps, keyed by scene hash.
    pub ckm_cache: Option<PathBuf>,
    /// Shrink M when the relaxation would exceed the SDP size guard.
    pub auto_scale: bool,
    /// Skip optimization and evaluate the empty deployment at full power.
    pub force_empty: bool,
}

impl RunConfig {
    pub fn new(
        scenario: impl Into<PathBuf>,
        algorithm: Algorithm,
        case: Case,
        requirements_db: RequirementsDb,
        weights: CostWeights,
        seed: u64,
    ) -> Result<Self, PipelineError> {
        let requirements = requirements_db.to_linear().map_err(|e| PipelineError::Config(e.to_string()))?;
        let cfg = Self {
            scenario: scenario.into(),
            algorithm,
            case,
            requirements_db,
            requirements,
            weights,
            seed,
            n_gr: DEFAULT_NGR,
            rrb_draws: 1,
            out_dir: None,
            ckm_cache: None,
            auto_scale: true,
            force_empty: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.algorithm == Algorithm::Rrb && self.case == Case::II {
            return bad("rrb uses a single reflection pattern and supports case 1 only".into());
        }
        if !(self.weights.w1.is_finite() && self.weights.w1 >= 0.0) {
            return bad(format!("w1 must be non-negative, got {}", self.weights.w1));
        }
        if !(self.weights.w2.is_finite() && self.weights.w2 >= 0.0) {
            return bad(format!("w2 must be non-negative, got {}", self.weights.w2));
        }
        if self.n_gr == 0 {
            return bad("N_GR must be at least 1".into());
        }
        Ok(())
    }

    /// Same run with the requirements replaced.
    pub fn with_requirements(&self, db: RequirementsDb) -> Result<Self, PipelineError> {
        let requirements = db.to_linear().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Self { requirements_db: db, requirements, ..self.clone() })
    }

    fn rounding(&self) -> RoundingOptions {
        RoundingOptions { seed: self.seed, n_gr: self.n_gr, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Scenario,
    Ckm,
    Channels,
    Optimize,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Scenario => "scenario",
            Stage::Ckm => "ckm",
            Stage::Channels => "channels",
            Stage::Optimize => "optimize",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("[config] {0}")]
    Config(String),
    #[error("[scenario] {0}")]
    Scenario(#[from] SceneError),
    #[error("[scenario] cannot read {path}")]
    ReadScenario { path: PathBuf, source: std::io::Error },
    #[error("[ckm] {0}")]
    Ckm(#[from] CkmError),
    #[error("[channels] {0}")]
    Channels(#[from] ChannelError),
    #[error("[optimize] {0}")]
    Optimize(String),
    #[error("[report] {0}")]
    Report(String),
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Config(_) => Stage::Config,
            PipelineError::Scenario(_) | PipelineError::ReadScenario { .. } => Stage::Scenario,
            PipelineError::Ckm(_) => Stage::Ckm,
            PipelineError::Channels(_) => Stage::Channels,
            PipelineError::Optimize(_) => Stage::Optimize,
            PipelineError::Report(_) => Stage::Report,
        }
    }
}

/// Why no feasible plan was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Infeasibility {
    pub stage: Stage,
    pub reason: String,
    /// Violations found by the metrics re-check, when a plan exists.
    pub violations: Vec<String>,
}

/// Outcome of an algorithm: a plan or a reasoned infeasibility. Anything else
/// is an error.
enum AlgoOutcome {
    Plan(DeploymentPlan, Option<RelaxedSolution>),
    Infeasible(String),
}

fn optimize(channels: &ChannelSet, cfg: &RunConfig) -> Result<AlgoOutcome, PipelineError> {
    let req = &cfg.requirements;
    let w = &cfg.weights;
    let fail = |e: String| PipelineError::Optimize(format!("{}: {e}", cfg.algorithm));
    let rounding_outcome = |r: Result<DeploymentPlan, RoundingError>, relaxed| match r {
        Ok(p) => Ok(AlgoOutcome::Plan(p, relaxed)),
        Err(e @ (RoundingError::Unreachable(_) | RoundingError::NoFeasibleCandidate)) => {
            Ok(AlgoOutcome::Infeasible(e.to_string()))
        }
        Err(e) => Err(fail(e.to_string())),
    };
    match cfg.algorithm {
        Algorithm::Sca => {
            let opts = ScaOptions { rounding: cfg.rounding(), ..Default::default() };
            match solve_relaxed(channels, req, w, cfg.case, &opts) {
                Ok(relaxed) => {
                    let plan = greedy_round(&relaxed.beta, channels, req, w, cfg.case, &opts.rounding);
                    rounding_outcome(plan, Some(relaxed))
                }
                Err(e @ ScaError::InfeasibleAtFullDeployment(_)) => Ok(AlgoOutcome::Infeasible(e.to_string())),
                Err(ScaError::Rounding(e @ (RoundingError::Unreachable(_) | RoundingError::NoFeasibleCandidate))) => {
                    Ok(AlgoOutcome::Infeasible(e.to_string()))
                }
                Err(e) => Err(fail(e.to_string())),
            }
        }
        Algorithm::Cbd => match cbd_plan(channels, req, w, cfg.case, &cfg.rounding()) {
            Ok(p) => Ok(AlgoOutcome::Plan(p, None)),
            Err(e @ (HeuristicError::NoCoverage | HeuristicError::Infeasible)) => {
                Ok(AlgoOutcome::Infeasible(e.to_string()))
            }
            Err(HeuristicError::Rounding(e)) => rounding_outcome(Err(e), None),
            Err(e) => Err(fail(e.to_string())),
        },
        Algorithm::Rrb => {
            let opts = RrbOptions { seed: cfg.seed, draws: cfg.rrb_draws };
            match rrb_plan(channels, req, w, &opts) {
                Ok(p) => Ok(AlgoOutcome::Plan(p, None)),
                Err(e @ (HeuristicError::NoCoverage | HeuristicError::Infeasible)) => {
                    Ok(AlgoOutcome::Infeasible(e.to_string()))
                }
                Err(e) => Err(fail(e.to_string())),
            }
        }
    }
}

/// The empty deployment at full budget.
pub fn empty_plan(channels: &ChannelSet, req: &Requirements, weights: &CostWeights, case: Case) -> DeploymentPlan {
    let km = channels.num_sites() * channels.elements();
    let ones = crate::channel::CVector::from_element(km, num_complex::Complex64::new(1.0, 0.0));
    let phases = match case {
        Case::I => Phases::Shared(ones),
        Case::II => {
            Phases::PerPoint { sensing: vec![ones.clone(); channels.num_sp()], comm: vec![ones; channels.num_cp()] }
        }
    };
    let beta = vec![false; channels.num_sites()];
    let cost = system_cost(&beta, req.p0_max, weights);
    DeploymentPlan { beta, phases, p0: req.p0_max, cost, case }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointKind {
    #[serde(rename = "SP")]
    Sensing,
    #[serde(rename = "CP")]
    Communication,
}

/// One coverage row. Sensing rows carry illumination in dBm, communication
/// rows SNR in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub point: String,
    pub kind: PointKind,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub metric_db: f64,
    pub threshold_db: f64,
    /// Metric in linear units (W or ratio).
    pub metric: f64,
    pub met: bool,
}

/// Per-point coverage of `plan`, recomputed from the channels.
pub fn coverage_map(
    plan: &DeploymentPlan,
    channels: &ChannelSet,
    req: &Requirements,
    points: &PointSet,
) -> Vec<CoverageRow> {
    let cov = coverage(plan, channels, req);
    let mut rows = Vec::with_capacity(cov.illumination.len() + cov.snr.len());
    for (p, rho) in cov.illumination.iter().enumerate() {
        let pos = points.sensing[p];
        rows.push(CoverageRow {
            point: Target::Sp(p).to_string(),
            kind: PointKind::Sensing,
            x: pos.x,
            y: pos.y,
            z: pos.z,
            metric_db: watts_to_dbm(*rho),
            threshold_db: watts_to_dbm(req.p_s),
            metric: *rho,
            met: *rho >= req.p_s * (1.0 - 1e-6),
        });
    }
    for (q, g) in cov.snr.iter().enumerate() {
        let pos = points.comm[q];
        rows.push(CoverageRow {
            point: Target::Cp(q).to_string(),
            kind: PointKind::Communication,
            x: pos.x,
            y: pos.y,
            z: pos.z,
            metric_db: linear_to_db(*g),
            threshold_db: linear_to_db(req.gamma_c),
            metric: *g,
            met: *g >= req.gamma_c * (1.0 - 1e-6),
        });
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub irs_count: usize,
    pub deployment_term: f64,
    pub p0_w: f64,
    pub p0_dbm: f64,
    pub power_term: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn of(plan: &DeploymentPlan, weights: &CostWeights) -> Self {
        let n = plan.deployed();
        Self {
            irs_count: n,
            deployment_term: weights.w1 * n as f64,
            p0_w: plan.p0,
            p0_dbm: watts_to_dbm(plan.p0),
            power_term: weights.w2 * plan.p0,
            total: system_cost(&plan.beta, plan.p0, weights),
        }
    }
}

/// Serializable plan: phases are stored as angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub case: Case,
    pub beta: Vec<bool>,
    pub deployed_sites: Vec<usize>,
    pub elements_per_site: usize,
    pub p0_w: f64,
    pub p0_dbm: f64,
    pub cost: f64,
    pub phases: PhaseFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseFile {
    Shared(Vec<f64>),
    PerPoint { sensing: Vec<Vec<f64>>, comm: Vec<Vec<f64>> },
}

impl PlanFile {
    pub fn from_plan(plan: &DeploymentPlan, elements_per_site: usize) -> Self {
        let angles = |v: &crate::channel::CVector| v.iter().map(|z| z.arg()).collect::<Vec<f64>>();
        let phases = match &plan.phases {
            Phases::Shared(v) => PhaseFile::Shared(angles(v)),
            Phases::PerPoint { sensing, comm } => PhaseFile::PerPoint {
                sensing: sensing.iter().map(angles).collect(),
                comm: comm.iter().map(angles).collect(),
            },
        };
        Self {
            case: plan.case,
            beta: plan.beta.clone(),
            deployed_sites: plan.beta.iter().enumerate().filter(|(_, b)| **b).map(|(k, _)| k).collect(),
            elements_per_site,
            p0_w: plan.p0,
            p0_dbm: watts_to_dbm(plan.p0),
            cost: plan.cost,
            phases,
        }
    }

    pub fn to_plan(&self) -> DeploymentPlan {
        let vector =
            |a: &[f64]| crate::channel::CVector::from_iterator(a.len(), a.iter().map(|t| num_complex::Complex64::from_polar(1.0, *t)));
        let phases = match &self.phases {
            PhaseFile::Shared(a) => Phases::Shared(vector(a)),
            PhaseFile::PerPoint { sensing, comm } => Phases::PerPoint {
                sensing: sensing.iter().map(|a| vector(a)).collect(),
                comm: comm.iter().map(|a| vector(a)).collect(),
            },
        };
        DeploymentPlan { beta: self.beta.clone(), phases, p0: self.p0_w, cost: self.cost, case: self.case }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Settings echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: PathBuf,
    pub algorithm: Algorithm,
    pub case: Case,
    pub requirements: RequirementsDb,
    pub weights: CostWeights,
    pub seed: u64,
    pub n_gr: usize,
    pub scene_hash: String,
    pub sites: usize,
    pub elements_per_site: usize,
    /// Element count in the scenario file when auto-scaling reduced it.
    pub scaled_from_elements: Option<usize>,
    pub sensing_points: usize,
    pub comm_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: RunSummary,
    pub plan: Option<DeploymentPlan>,
    pub feasible: bool,
    pub infeasibility: Option<Infeasibility>,
    pub coverage: Vec<CoverageRow>,
    pub cost: Option<CostBreakdown>,
    pub trace: Vec<TraceEntry>,
    pub sca_stop: Option<String>,
    pub timings: Vec<Timing>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    summary: &'a RunSummary,
    feasible: bool,
    infeasibility: &'a Option<Infeasibility>,
    cost: &'a Option<CostBreakdown>,
    coverage_met: usize,
    coverage_points: usize,
    min_sensing_dbm: Option<f64>,
    min_snr_db: Option<f64>,
    sca_iterations: Option<usize>,
    sca_stop: &'a Option<String>,
    timings: &'a [Timing],
}

impl Report {
    fn min_metric(&self, kind: PointKind) -> Option<f64> {
        self.coverage.iter().filter(|r| r.kind == kind).map(|r| r.metric_db).reduce(f64::min)
    }

    pub fn report_json(&self) -> String {
        let file = ReportFile {
            summary: &self.summary,
            feasible: self.feasible,
            infeasibility: &self.infeasibility,
            cost: &self.cost,
            coverage_met: self.coverage.iter().filter(|r| r.met).count(),
            coverage_points: self.coverage.len(),
            min_sensing_dbm: self.min_metric(PointKind::Sensing).filter(|v| v.is_finite()),
            min_snr_db: self.min_metric(PointKind::Communication).filter(|v| v.is_finite()),
            sca_iterations: (!self.trace.is_empty()).then(|| self.trace.len() - 1),
            sca_stop: &self.sca_stop,
            timings: &self.timings,
        };
        serde_json::to_string_pretty(&file).expect("report serializes")
    }

    pub fn plan_json(&self) -> Option<String> {
        let plan = self.plan.as_ref()?;
        let file = PlanFile::from_plan(plan, self.summary.elements_per_site);
        Some(serde_json::to_string_pretty(&file).expect("plan serializes"))
    }

    pub fn coverage_csv(&self) -> Result<String, PipelineError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.coverage {
            w.serialize(row).map_err(|e| PipelineError::Report(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| PipelineError::Report(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| PipelineError::Report(e.to_string()))
    }

    pub fn trace_csv(&self) -> String {
        crate::sca::trace_csv(&self.trace)
    }

    /// Writes `plan.json` (when a plan exists), `coverage.csv`,
    /// `sca_trace.csv` (SCA runs) and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        let io = |e: std::io::Error| PipelineError::Report(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        if let Some(plan) = self.plan_json() {
            fs::write(dir.join("plan.json"), plan).map_err(io)?;
        }
        if !self.coverage.is_empty() {
            fs::write(dir.join("coverage.csv"), self.coverage_csv()?).map_err(io)?;
        }
        if !self.trace.is_empty() {
            fs::write(dir.join("sca_trace.csv"), self.trace_csv()).map_err(io)?;
        }
        fs::write(dir.join("report.json"), self.report_json()).map_err(io)
    }
}

/// Largest element count per site that keeps the lifted relaxation of `k`
/// sites within the SDP size guard.
pub fn max_elements_for_sdr(k: usize) -> usize {
    // Order of the real relaxation is 2(K·M + 1) + 1.
    let budget = (irs_solvers::MAX_SDP_ORDER - 3) / 2;
    budget / k.max(1)
}

/// Scene, points and channels shared by every run on one scenario.
pub struct Prepared {
    pub scene: Scene,
    pub points: PointSet,
    pub ckm: Ckm,
    pub channels: ChannelSet,
    pub scene_hash: String,
    pub scaled_from_elements: Option<usize>,
    pub timings: Vec<Timing>,
}

fn timed<T>(timings: &mut Vec<Timing>, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push(Timing { stage: stage.into(), seconds: start.elapsed().as_secs_f64() });
    out
}

/// Loads the scenario, applies auto-scaling and obtains the channel map from
/// the cache or by tracing.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared, PipelineError> {
    let mut timings = Vec::new();
    let text = fs::read_to_string(&cfg.scenario)
        .map_err(|source| PipelineError::ReadScenario { path: cfg.scenario.clone(), source })?;
    let (mut scene, points) = timed(&mut timings, "scenario", || load_scenario(&text))?;
    let mut scaled_from_elements = None;
    let limit = max_elements_for_sdr(scene.sites.len());
    if cfg.auto_scale && scene.array.n_elements > limit && cfg.algorithm != Algorithm::Rrb {
        scaled_from_elements = Some(scene.array.n_elements);
        scene.array.n_elements = limit.max(1);
    }
    let hash = scene_hash(&scene, &points);
    let hash_hex = hex::encode(hash);
    let ckm = timed(&mut timings, "ckm", || -> Result<Ckm, PipelineError> {
        let Some(dir) = &cfg.ckm_cache else {
            return Ok(build_ckm(&scene, &points)?);
        };
        let path = dir.join(format!("{hash_hex}.ckm"));
        if path.exists() {
            return Ok(load_ckm(&path, &scene, &points)?);
        }
        let ckm = build_ckm(&scene, &points)?;
        fs::create_dir_all(dir).map_err(CkmError::from)?;
        save_ckm(&ckm, &path)?;
        Ok(ckm)
    })?;
    let channels = timed(&mut timings, "channels", || assemble_channel_set(&ckm, &scene, &points))?;
    Ok(Prepared { scene, points, ckm, channels, scene_hash: hash_hex, scaled_from_elements, timings })
}

fn summary(cfg: &RunConfig, prep: &Prepared) -> RunSummary {
    RunSummary {
        scenario: cfg.scenario.clone(),
        algorithm: cfg.algorithm,
        case: cfg.case,
        requirements: cfg.requirements_db,
        weights: cfg.weights,
        seed: cfg.seed,
        n_gr: cfg.n_gr,
        scene_hash: prep.scene_hash.clone(),
        sites: prep.channels.num_sites(),
        elements_per_site: prep.channels.elements(),
        scaled_from_elements: prep.scaled_from_elements,
        sensing_points: prep.channels.num_sp(),
        comm_points: prep.channels.num_cp(),
    }
}

/// Runs the configured algorithm on prepared channels. Feasibility is
/// re-derived from the metrics, never taken from the optimizer.
pub fn run_prepared(cfg: &RunConfig, prep: &Prepared) -> Result<Report, PipelineError> {
    cfg.validate()?;
    let mut timings = prep.timings.clone();
    let ch = &prep.channels;
    let (plan, relaxed, reason) = if cfg.force_empty {
        (Some(empty_plan(ch, &cfg.requirements, &cfg.weights, cfg.case)), None, None)
    } else {
        match timed(&mut timings, "optimize", || optimize(ch, cfg))? {
            AlgoOutcome::Plan(p, r) => (Some(p), r, None),
            AlgoOutcome::Infeasible(reason) => (None, None, Some(reason)),
        }
    };
    let mut report = Report {
        summary: summary(cfg, prep),
        plan: None,
        feasible: false,
        infeasibility: None,
        coverage: Vec::new(),
        cost: None,
        trace: relaxed.as_ref().map(|r| r.trace.clone()).unwrap_or_default(),
        sca_stop: relaxed.as_ref().map(|r| format!("{:?}", r.stop)),
        timings: Vec::new(),
    };
    match plan {
        Some(plan) => {
            let start = Instant::now();
            report.coverage = coverage_map(&plan, ch, &cfg.requirements, &prep.points);
            let check = check_plan(&plan, ch, &cfg.requirements, &cfg.weights);
            timings.push(Timing { stage: "coverage".into(), seconds: start.elapsed().as_secs_f64() });
            report.feasible = check.is_ok();
            if let Err(violations) = check {
                report.infeasibility = Some(Infeasibility {
                    stage: Stage::Report,
                    reason: "plan fails the coverage re-check".into(),
                    violations,
                });
            }
            report.cost = Some(CostBreakdown::of(&plan, &cfg.weights));
            report.plan = Some(plan);
        }
        None => {
            report.infeasibility = Some(Infeasibility {
                stage: Stage::Optimize,
                reason: reason.unwrap_or_default(),
                violations: Vec::new(),
            });
        }
    }
    report.timings = timings;
    Ok(report)
}

/// Scenario → channel map → channels → plan → coverage, writing the report
/// files when an output directory is configured.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Report, PipelineError> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let report = run_prepared(cfg, &prep)?;
    if let Some(dir) = &cfg.out_dir {
        report.write(dir)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Γ_c in dB.
    Gc,
    /// P_s in dBm.
    Ps,
    /// Power weight w2.
    W2,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gc" | "gamma_c" => Ok(SweepAxis::Gc),
            "ps" | "p_s" => Ok(SweepAxis::Ps),
            "w2" => Ok(SweepAxis::W2),
            _ => Err(format!("unknown sweep axis `{s}` (expected gc, ps or w2)")),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Gc => "gc",
            SweepAxis::Ps => "ps",
            SweepAxis::W2 => "w2",
        })
    }
}

fn config_at(base: &RunConfig, axis: SweepAxis, value: f64) -> Result<RunConfig, PipelineError> {
    match axis {
        SweepAxis::Gc => base.with_requirements(RequirementsDb { gc_db: value, ..base.requirements_db }),
        SweepAxis::Ps => base.with_requirements(RequirementsDb { ps_dbm: value, ..base.requirements_db }),
        SweepAxis::W2 => {
            let cfg = RunConfig { weights: CostWeights { w2: value, ..base.weights }, ..base.clone() };
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub feasible: bool,
    pub irs_count: Option<usize>,
    pub p0_dbm: Option<f64>,
    pub total_cost: Option<f64>,
    /// Sweep value whose optimized plan is reported at this value.
    pub plan_from: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    /// Reported plan per value.
    pub plans: Vec<Option<DeploymentPlan>>,
}

impl SweepResult {
    pub fn to_csv(&self) -> Result<String, PipelineError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| PipelineError::Report(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| PipelineError::Report(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| PipelineError::Report(e.to_string()))
    }
}

/// `plan` re-priced under `cfg`: its phases and deployment kept, P0 set to
/// the least power meeting `cfg`'s requirements. `None` if that exceeds the
/// budget or the re-check fails.
pub fn reprice(plan: &DeploymentPlan, channels: &ChannelSet, cfg: &RunConfig) -> Option<DeploymentPlan> {
    let req = &cfg.requirements;
    let p0 = required_power(&plan.beta_f64(), &plan.phases, channels, req).ok()?;
    if p0 > req.p0_max * (1.0 + BUDGET_MARGIN) {
        return None;
    }
    let p0 = p0.min(req.p0_max);
    let cost = system_cost(&plan.beta, p0, &cfg.weights);
    let out = DeploymentPlan { p0, cost, ..plan.clone() };
    check_plan(&out, channels, req, &cfg.weights).ok()?;
    Some(out)
}

/// One optimization per value on a shared channel map, run on `workers`
/// threads (all available when `None`).
///
/// Every optimized plan is also re-priced at every other value and the
/// cheapest feasible one is reported. A plan meeting a stricter requirement
/// meets every looser one at no more power, so the reported cost is
/// monotone in the requirement axes.
pub fn sweep(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
    workers: Option<usize>,
) -> Result<SweepResult, PipelineError> {
    if values.is_empty() {
        return Err(PipelineError::Config("sweep needs at least one value".into()));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(PipelineError::Config("sweep values must be strictly ascending".into()));
    }
    let configs: Vec<RunConfig> = values.iter().map(|&v| config_at(base, axis, v)).collect::<Result<_, _>>()?;
    let prep = prepare(base)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
    let runs: Vec<Result<Report, PipelineError>> =
        pool.install(|| configs.par_iter().map(|cfg| run_prepared(cfg, &prep)).collect());

    let own: Vec<Option<DeploymentPlan>> = runs
        .iter()
        .map(|r| r.as_ref().ok().filter(|r| r.feasible).and_then(|r| r.plan.clone()))
        .collect();
    let mut rows = Vec::with_capacity(values.len());
    let mut plans = Vec::with_capacity(values.len());
    for (i, cfg) in configs.iter().enumerate() {
        let mut best: Option<(usize, DeploymentPlan)> = own[i].clone().map(|p| (i, p));
        for (j, plan) in own.iter().enumerate() {
            let Some(plan) = plan.as_ref().filter(|_| j != i) else { continue };
            if let Some(p) = reprice(plan, &prep.channels, cfg) {
                if best.as_ref().map_or(true, |(_, b)| p.cost < b.cost * (1.0 - 1e-12)) {
                    best = Some((j, p));
                }
            }
        }
        let note = match &runs[i] {
            Err(e) => e.to_string(),
            Ok(r) => r.infeasibility.as_ref().map(|inf| inf.reason.clone()).unwrap_or_default(),
        };
        rows.push(match &best {
            Some((j, p)) => SweepRow {
                value: values[i],
                feasible: true,
                irs_count: Some(p.deployed()),
                p0_dbm: Some(watts_to_dbm(p.p0)),
                total_cost: Some(p.cost),
                plan_from: Some(values[*j]),
                note,
            },
            None => SweepRow {
                value: values[i],
                feasible: false,
                irs_count: None,
                p0_dbm: None,
                total_cost: None,
                plan_from: None,
                note,
            },
        });
        plans.push(best.map(|(_, p)| p));
    }
    Ok(SweepResult { axis, rows, plans })
}
