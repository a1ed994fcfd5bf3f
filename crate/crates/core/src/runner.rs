//! Experiment configuration, multi-seed execution and output files.
//!
//! A run is described by a JSON [`ExperimentConfig`]. Graph, data and the
//! common initial point are drawn from `data_seed` and shared by all run
//! seeds; each run seed only drives the stochastic oracles. Outputs:
//!
//! * `trace_<alg>_<graph>_<seed>.csv`, one per seed;
//! * `aggregate_<alg>_<graph>.csv`, per-`t` means over seeds (dB columns are
//!   the dB of the mean);
//! * `summary.json`.

use crate::curvature::{compute_constants, gap_bound, CurvatureError, GeometryConstants, TheoremConstants};
use crate::exec::Exec;
use crate::manifolds::{Geometry, Manifold, ManifoldError, ManifoldKind};
use crate::network::{gen_complete, gen_cycle, gen_er, metropolis_weights, Graph, MixingMatrix, NetworkError};
use crate::optimizer::{ergodic_gap, flags, run, Algorithm, IterationRecord, OptimizerError, RunConfig, Trace};
use crate::problems::{build_karcher, build_pca, estimate_bounds, load_csv_dataset, GradBounds, KarcherParams, PcaParams, Problem, ProblemError};
use crate::rng::SeedStream;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Floor applied before converting to decibels.
pub const DB_FLOOR: f64 = 1e-300;

pub const CSV_HEADER: &str =
    "t,consensus,consensus_db,frechet_var,msd,msd_db,fgap_bar,bound_consensus,bound_gap,clip_count,flags";

pub fn to_db(x: f64) -> f64 {
    10.0 * x.max(DB_FLOOR).log10()
}

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("config: {0}")]
    Config(String),
    #[error("config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("unknown preset {0:?}; available: {1}")]
    UnknownPreset(String, String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error("seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: OptimizerError,
    },
    #[error("trace csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RunnerError {
    /// Process exit code: 2 for configuration errors, 3 for violated
    /// assumptions, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) | RunnerError::Parse { .. } | RunnerError::UnknownPreset(..) => 2,
            RunnerError::Network(NetworkError::AssumptionViolation { .. })
            | RunnerError::Manifold(ManifoldError::InvalidSpec(_))
            | RunnerError::Curvature(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Er { n: usize, p: f64 },
    Cycle { n: usize },
    Complete { n: usize },
    /// Mixing matrix read from a header-less CSV.
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Spiked-covariance principal subspace.
    Pca { d: usize, p: usize, spike_gap: f64, noise: f64, m: usize },
    /// Karcher mean of anchors within `radius` of a random centre.
    Karcher { radius: f64, m: usize },
    /// Principal subspace of a sample matrix read from CSV (rows are samples).
    Csv { path: PathBuf, p: usize },
}

/// Step sizes left out default to the theory choices
/// `eta0 = min(1, D/G)` and `s = C2/(2 C1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: Algorithm,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub s: Option<f64>,
}

fn default_batch() -> usize {
    32
}
fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}
fn default_record_every() -> usize {
    10
}
fn default_probes() -> usize {
    100
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifold: ManifoldKind,
    /// Diameter `D` of the monitored domain ball.
    pub domain_diameter: f64,
    pub graph: GraphSpec,
    pub problem: ProblemSpec,
    pub algorithm: AlgorithmSpec,
    pub horizon: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "yes")]
    pub enforce_assumptions: bool,
    #[serde(default = "yes")]
    pub emit_bounds: bool,
    #[serde(default)]
    pub check_contraction: bool,
    /// Seed for graph, data and initial point.
    #[serde(default)]
    pub data_seed: u64,
    /// Probe points for the gradient and noise bounds.
    #[serde(default = "default_probes")]
    pub n_probe: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, RunnerError> {
        let cfg: Self = serde_json::from_str(text).map_err(|source| RunnerError::Parse {
            path: origin.to_string(),
            source,
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let GraphSpec::Csv { path } = &mut cfg.graph {
            fix(path);
        }
        if let ProblemSpec::Csv { path, .. } = &mut cfg.problem {
            fix(path);
        }
        if let Some(path) = &mut cfg.output_dir {
            fix(path);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Schema-level checks that need no computation.
    pub fn check(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::Config(m));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.batch_size < 1 || self.record_every < 1 || self.n_probe < 1 {
            return bad("batch_size, record_every and n_probe must be positive".into());
        }
        if !(self.domain_diameter > 0.0) {
            return bad(format!("domain_diameter must be positive, got {}", self.domain_diameter));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        match (&self.problem, self.manifold) {
            (ProblemSpec::Pca { d, p, .. }, ManifoldKind::Grassmann { d: md, p: mp }) if (*d, *p) != (md, mp) => {
                bad(format!("problem is G({d},{p}) but manifold is G({md},{mp})"))
            }
            (ProblemSpec::Csv { p, .. }, ManifoldKind::Grassmann { p: mp, .. }) if *p != mp => {
                bad(format!("problem asks for p = {p} but manifold has p = {mp}"))
            }
            (ProblemSpec::Pca { .. } | ProblemSpec::Csv { .. }, k @ (ManifoldKind::Euclidean { .. } | ManifoldKind::Sphere { .. })) => {
                bad(format!("principal subspace problems live on a Grassmann manifold, not {k}"))
            }
            _ => Ok(()),
        }?;
        if self.algorithm.name == Algorithm::DiffusionFixed && self.algorithm.eta.is_none() {
            return bad("diffusion_fixed needs an explicit eta".into());
        }
        Ok(())
    }

    pub fn graph_label(&self) -> String {
        match &self.graph {
            GraphSpec::Er { n, .. } => format!("er{n}"),
            GraphSpec::Cycle { n } => format!("cycle{n}"),
            GraphSpec::Complete { n } => format!("complete{n}"),
            GraphSpec::Csv { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().replace(|c: char| !c.is_ascii_alphanumeric(), "-"))
                .unwrap_or_else(|| "csv".into()),
        }
    }
}

/// Everything a run needs, built once from a config.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub mixing: MixingMatrix,
    pub graph: Graph,
    pub bounds: GradBounds,
    pub geometry_constants: GeometryConstants,
    pub theory: TheoremConstants,
    pub eta: f64,
    pub s: f64,
}

impl Prepared {
    pub fn run_config(&self, seed: u64, exec: Exec) -> RunConfig {
        let c = &self.config;
        RunConfig {
            algorithm: c.algorithm.name,
            horizon: c.horizon,
            eta: self.eta,
            s: self.s,
            batch: c.batch_size,
            seed,
            record_every: c.record_every,
            enforce_assumptions: c.enforce_assumptions,
            exec,
            theory: c.emit_bounds.then_some(self.theory),
            check_contraction: c.check_contraction,
        }
    }

    /// Whether the run matches the hypotheses behind the bound columns.
    pub fn bounds_certified(&self) -> bool {
        self.config.algorithm.name == Algorithm::DiffusionDiminishing
            && self.eta == self.theory.eta0
            && self.s == self.theory.s
    }
}

/// Builds network, problem, probed bounds and theorem constants.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, RunnerError> {
    config.check()?;
    let geometry = Geometry::new(config.manifold)?;
    let spec = geometry.spec(config.domain_diameter)?;
    let geometry_constants = compute_constants(&spec)?;
    let data = SeedStream::new(config.data_seed);
    let graph = match &config.graph {
        GraphSpec::Er { n, p } => gen_er(*n, *p, &data)?,
        GraphSpec::Cycle { n } => gen_cycle(*n)?,
        GraphSpec::Complete { n } => gen_complete(*n)?,
        GraphSpec::Csv { path } => MixingMatrix::read_csv(path, None)?.support_graph(),
    };
    let mixing = match &config.graph {
        GraphSpec::Csv { path } => MixingMatrix::read_csv(path, Some(&graph))?,
        _ => metropolis_weights(&graph)?,
    };
    if !graph.is_connected() {
        return Err(NetworkError::AssumptionViolation {
            clause: crate::network::Clause::Connected,
            detail: "imported mixing matrix has a disconnected support".into(),
        }
        .into());
    }
    let n = graph.n();
    let (mut problem, whole_manifold) = match &config.problem {
        ProblemSpec::Pca { d, p, spike_gap, noise, m } => {
            let params = PcaParams {
                d: *d,
                p: *p,
                spike_gap: *spike_gap,
                noise: *noise,
                m: *m,
            };
            (build_pca(params, n, config.domain_diameter, &data)?, true)
        }
        ProblemSpec::Karcher { radius, m } => (
            build_karcher(config.manifold, KarcherParams { radius: *radius, m: *m }, n, config.domain_diameter, &data)?,
            false,
        ),
        ProblemSpec::Csv { path, p } => (load_csv_dataset(path, *p, n, config.domain_diameter, &data)?, true),
    };
    if problem.spec().kind != config.manifold {
        return Err(RunnerError::Config(format!(
            "problem lives on {} but the config names {}",
            problem.spec().kind,
            config.manifold
        )));
    }
    let bounds = estimate_bounds(&problem, config.n_probe, config.batch_size, whole_manifold, &data)?;
    problem.set_bounds(bounds);
    let theory = TheoremConstants::new(&geometry_constants, mixing.sigma2(), bounds.delta_hat, bounds.sigma_hat, n, bounds.g)?;
    let eta = config.algorithm.eta.unwrap_or(theory.eta0);
    let s = config.algorithm.s.unwrap_or(theory.s);
    if !(eta > 0.0 && eta.is_finite()) || !(s > 0.0 && s <= 1.0) {
        return Err(RunnerError::Config(format!("step sizes out of range: eta = {eta}, s = {s}")));
    }
    if eta * bounds.g >= spec.inj {
        return Err(RunnerError::Config(format!(
            "largest gradient step eta * G = {} reaches the injectivity radius {}",
            eta * bounds.g,
            spec.inj
        )));
    }
    Ok(Prepared {
        config: config.clone(),
        problem,
        mixing,
        graph,
        bounds,
        geometry_constants,
        theory,
        eta,
        s,
    })
}

/// One CSV row; `None` is written as an empty field.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub consensus: f64,
    pub frechet_var: f64,
    pub msd: Option<f64>,
    pub fgap_bar: Option<f64>,
    pub bound_consensus: Option<f64>,
    pub bound_gap: Option<f64>,
    pub clip_count: f64,
    pub flags: u32,
}

impl From<&IterationRecord> for TraceRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            t: r.t,
            consensus: r.consensus,
            frechet_var: r.frechet_var,
            msd: r.msd,
            fgap_bar: r.fgap_bar,
            bound_consensus: r.bound_consensus,
            bound_gap: r.bound_gap,
            clip_count: r.clip_count as f64,
            flags: r.flags,
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 160);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            num(r.consensus),
            num(to_db(r.consensus)),
            num(r.frechet_var),
            opt(r.msd),
            opt(r.msd.map(to_db)),
            opt(r.fgap_bar),
            opt(r.bound_consensus),
            opt(r.bound_gap),
            num(r.clip_count),
            flags::names(r.flags)
        );
    }
    out
}

pub fn read_trace_csv(text: &str) -> Result<Vec<TraceRow>, RunnerError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(RunnerError::Csv("missing or unexpected header".into()));
    }
    let parse = |f: &str, line: usize| -> Result<Option<f64>, RunnerError> {
        if f.is_empty() {
            Ok(None)
        } else {
            f.parse::<f64>()
                .map(Some)
                .map_err(|e| RunnerError::Csv(format!("line {line}: {e}")))
        }
    };
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let ln = k + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(RunnerError::Csv(format!("line {ln}: {} fields", f.len())));
        }
        let req = |i: usize| parse(f[i], ln)?.ok_or_else(|| RunnerError::Csv(format!("line {ln}: empty field {i}")));
        rows.push(TraceRow {
            t: f[0].parse().map_err(|e| RunnerError::Csv(format!("line {ln}: {e}")))?,
            consensus: req(1)?,
            frechet_var: req(3)?,
            msd: parse(f[4], ln)?,
            fgap_bar: parse(f[6], ln)?,
            bound_consensus: parse(f[7], ln)?,
            bound_gap: parse(f[8], ln)?,
            clip_count: req(9)?,
            flags: flags::parse(f[10]).ok_or_else(|| RunnerError::Csv(format!("line {ln}: bad flags {:?}", f[10])))?,
        });
    }
    Ok(rows)
}

/// Per-`t` arithmetic means over seeds; flags are OR-ed.
pub fn aggregate(traces: &[&Trace]) -> Vec<TraceRow> {
    let k = traces.len() as f64;
    let mean = |f: &dyn Fn(&IterationRecord) -> f64, i: usize| traces.iter().map(|tr| f(&tr.records[i])).sum::<f64>() / k;
    let mean_opt = |f: &dyn Fn(&IterationRecord) -> Option<f64>, i: usize| {
        traces
            .iter()
            .map(|tr| f(&tr.records[i]))
            .try_fold(0.0, |acc, v| v.map(|v| acc + v))
            .map(|s| s / k)
    };
    (0..traces[0].records.len())
        .map(|i| TraceRow {
            t: traces[0].records[i].t,
            consensus: mean(&|r| r.consensus, i),
            frechet_var: mean(&|r| r.frechet_var, i),
            msd: mean_opt(&|r| r.msd, i),
            fgap_bar: mean_opt(&|r| r.fgap_bar, i),
            bound_consensus: mean_opt(&|r| r.bound_consensus, i),
            bound_gap: mean_opt(&|r| r.bound_gap, i),
            clip_count: mean(&|r| r.clip_count as f64, i),
            flags: traces.iter().fold(0, |acc, tr| acc | tr.records[i].flags),
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_consensus: f64,
    pub final_frechet_var: f64,
    pub final_msd: Option<f64>,
    pub final_fgap_bar: Option<f64>,
    /// Records where this seed's `sum_i d^2(x_i, xbar)` exceeds the consensus bound.
    pub consensus_bound_exceedances: usize,
    pub ergodic_gap: Option<f64>,
    pub clip_count: usize,
    pub domain_violations: usize,
    pub step_guard_violations: usize,
    pub contraction_violations: usize,
    pub frechet_failures: usize,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub graph: String,
    pub n_agents: usize,
    pub edges: usize,
    pub sigma2_w: f64,
    pub manifold: String,
    pub domain_diameter: f64,
    pub eta: f64,
    pub s: f64,
    pub horizon: usize,
    pub batch_size: usize,
    pub grad_bounds: GradBounds,
    pub geometry_constants: GeometryConstants,
    pub theorem_constants: TheoremConstants,
    pub bounds_certified: bool,
    pub seeds: Vec<SeedSummary>,
    pub mean_final_consensus: f64,
    pub mean_final_msd: Option<f64>,
    pub mean_final_msd_db: Option<f64>,
    /// Records where the seed-mean `sum_i d^2(x_i, xbar)` exceeds the consensus bound.
    pub mean_consensus_bound_violations: usize,
    pub mean_ergodic_gap: Option<f64>,
    pub gap_bound_at_horizon: Option<f64>,
    pub total_clips: usize,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub trace: Trace,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub prepared: Prepared,
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<TraceRow>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn trace_file_name(&self, seed: u64) -> String {
        trace_file_name(&self.prepared.config, seed)
    }

    pub fn aggregate_file_name(&self) -> String {
        aggregate_file_name(&self.prepared.config)
    }
}

pub fn trace_file_name(c: &ExperimentConfig, seed: u64) -> String {
    format!("trace_{}_{}_{}.csv", c.algorithm.name, c.graph_label(), seed)
}

pub fn aggregate_file_name(c: &ExperimentConfig) -> String {
    format!("aggregate_{}_{}.csv", c.algorithm.name, c.graph_label())
}

fn ergodic_for(prepared: &Prepared, trace: &Trace) -> Option<f64> {
    let c = &prepared.config;
    if c.record_every != 1 {
        return None;
    }
    let alg = c.algorithm.name;
    let eta = prepared.eta;
    ergodic_gap(trace, c.horizon, |t| alg.step_size(eta, t)).ok()
}

/// Runs every seed (in parallel under [`Exec::Parallel`]) and writes the
/// outputs when `output_dir` is set.
pub fn run_experiment(config: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput, RunnerError> {
    let start = Instant::now();
    let prepared = prepare(config)?;
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
    }
    let runs = exec.try_map(config.seeds.len(), |k| {
        let seed = config.seeds[k];
        let t0 = Instant::now();
        let trace = run(&prepared.problem, &prepared.mixing, &prepared.run_config(seed, exec))
            .map_err(|source| RunnerError::Run { seed, source })?;
        if let Some(dir) = &config.output_dir {
            let rows: Vec<TraceRow> = trace.records.iter().map(TraceRow::from).collect();
            std::fs::write(dir.join(trace_file_name(config, seed)), write_trace_csv(&rows))?;
        }
        Ok::<_, RunnerError>(SeedRun {
            seed,
            trace,
            wall_time_s: t0.elapsed().as_secs_f64(),
        })
    })?;
    let traces: Vec<&Trace> = runs.iter().map(|r| &r.trace).collect();
    let agg = aggregate(&traces);
    if let Some(dir) = &config.output_dir {
        std::fs::write(dir.join(aggregate_file_name(config)), write_trace_csv(&agg))?;
    }
    let last = |tr: &Trace| tr.records.last().cloned().expect("at least one record");
    let seeds: Vec<SeedSummary> = runs
        .iter()
        .map(|r| {
            let l = last(&r.trace);
            SeedSummary {
                seed: r.seed,
                final_consensus: l.consensus,
                final_frechet_var: l.frechet_var,
                final_msd: l.msd,
                final_fgap_bar: l.fgap_bar,
                consensus_bound_exceedances: r
                    .trace
                    .records
                    .iter()
                    .filter(|x| x.bound_consensus.is_some_and(|b| x.frechet_var > b))
                    .count(),
                ergodic_gap: ergodic_for(&prepared, &r.trace),
                clip_count: r.trace.clip_total,
                domain_violations: r.trace.domain_violations,
                step_guard_violations: r.trace.step_guard_violations,
                contraction_violations: r.trace.contraction_violations,
                frechet_failures: r.trace.frechet_failures,
                wall_time_s: r.wall_time_s,
            }
        })
        .collect();
    let k = seeds.len() as f64;
    let final_row = agg.last().expect("at least one record");
    let mean_ergodic = seeds
        .iter()
        .map(|s| s.ergodic_gap)
        .try_fold(0.0, |a, v| v.map(|v| a + v))
        .map(|v| v / k);
    let d0 = prepared
        .problem
        .optimum()
        .map(|o| prepared.problem.geometry().dist(prepared.problem.init(), o))
        .transpose()?
        .map(|d| d * d);
    let summary = Summary {
        algorithm: config.algorithm.name,
        graph: config.graph_label(),
        n_agents: prepared.graph.n(),
        edges: prepared.graph.num_edges(),
        sigma2_w: prepared.mixing.sigma2(),
        manifold: config.manifold.to_string(),
        domain_diameter: config.domain_diameter,
        eta: prepared.eta,
        s: prepared.s,
        horizon: config.horizon,
        batch_size: config.batch_size,
        grad_bounds: prepared.bounds,
        geometry_constants: prepared.geometry_constants,
        theorem_constants: prepared.theory,
        bounds_certified: prepared.bounds_certified(),
        mean_final_consensus: final_row.consensus,
        mean_final_msd: final_row.msd,
        mean_final_msd_db: final_row.msd.map(to_db),
        mean_consensus_bound_violations: agg
            .iter()
            .filter(|r| r.bound_consensus.is_some_and(|b| r.frechet_var > b))
            .count(),
        mean_ergodic_gap: mean_ergodic,
        gap_bound_at_horizon: d0.map(|d0| gap_bound(&prepared.theory, config.horizon, d0)),
        total_clips: seeds.iter().map(|s| s.clip_count).sum(),
        seeds,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &config.output_dir {
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(dir.join("summary.json"), json)?;
    }
    Ok(ExperimentOutput {
        prepared,
        aggregate: agg,
        runs,
        summary,
    })
}

/// Grassmann dimensions of the full-scale presets.
pub const FULL_D: usize = 784;
pub const FULL_P: usize = 5;
/// Pooled sample count of the full-scale presets.
pub const FULL_SAMPLES: usize = 60_000;
/// Fixed-step baseline step sizes.
pub const FIXED_ETA: f64 = 0.002;
pub const FIXED_S: f64 = 0.005;
/// Fixed-step gradient step on cycle graphs.
pub const CYCLE_FIXED_ETA: f64 = 0.005;
/// Diminishing schedule on ER graphs: `eta0` and `s`.
pub const ER_ETA0: f64 = 0.1;
pub const ER_S: f64 = 0.1;
/// Diminishing schedule on cycle graphs.
pub const CYCLE_ETA0: f64 = 0.05;
pub const CYCLE_S: f64 = 0.05;

/// Desk-scale spiked-covariance data.
pub const DESK_PCA: ProblemSpec = ProblemSpec::Pca {
    d: 20,
    p: 3,
    spike_gap: 1.0,
    noise: 0.5,
    m: 50,
};

pub fn preset_names() -> Vec<String> {
    let mut out = Vec::new();
    for g in ["er35", "er70", "er100", "cycle35", "cycle70", "cycle100"] {
        for a in ["fixed", "diminishing"] {
            out.push(format!("{g}/{a}"));
        }
    }
    for g in ["er10", "cycle10"] {
        for a in ["fixed", "diminishing"] {
            out.push(format!("desk/{g}/{a}"));
        }
    }
    out.push("desk/sphere-karcher".into());
    out
}

fn step_preset(er: bool, diminishing: bool) -> AlgorithmSpec {
    let (name, eta, s) = match (er, diminishing) {
        (true, true) => (Algorithm::DiffusionDiminishing, ER_ETA0, ER_S),
        (false, true) => (Algorithm::DiffusionDiminishing, CYCLE_ETA0, CYCLE_S),
        (true, false) => (Algorithm::DiffusionFixed, FIXED_ETA, FIXED_S),
        (false, false) => (Algorithm::DiffusionFixed, CYCLE_FIXED_ETA, FIXED_S),
    };
    AlgorithmSpec {
        name,
        eta: Some(eta),
        s: Some(s),
    }
}

/// Named experiment presets. Full-scale presets use `G(784, 5)` with
/// `60000 / n` synthetic samples per agent; `desk/` presets shrink to
/// `G(20, 3)` with ten agents.
pub fn paper_preset(name: &str) -> Result<ExperimentConfig, RunnerError> {
    let unknown = || RunnerError::UnknownPreset(name.to_string(), preset_names().join(", "));
    let base = |manifold, graph, problem, algorithm, horizon, seeds: Vec<u64>, record_every| ExperimentConfig {
        manifold,
        domain_diameter: 1.0,
        graph,
        problem,
        algorithm,
        horizon,
        batch_size: 32,
        seeds,
        record_every,
        enforce_assumptions: true,
        emit_bounds: true,
        check_contraction: false,
        data_seed: 0,
        n_probe: 100,
        output_dir: None,
    };
    if name == "desk/sphere-karcher" {
        let mut c = base(
            ManifoldKind::Sphere { d: 2 },
            GraphSpec::Cycle { n: 10 },
            ProblemSpec::Karcher { radius: 0.3, m: 20 },
            AlgorithmSpec {
                name: Algorithm::DiffusionDiminishing,
                eta: None,
                s: None,
            },
            10_000,
            (0..20).collect(),
            1,
        );
        c.domain_diameter = std::f64::consts::FRAC_PI_4;
        c.batch_size = 1;
        c.n_probe = 200;
        return Ok(c);
    }
    let (desk, rest) = match name.strip_prefix("desk/") {
        Some(r) => (true, r),
        None => (false, name),
    };
    let (graph, alg) = rest.split_once('/').ok_or_else(unknown)?;
    let diminishing = match alg {
        "diminishing" => true,
        "fixed" => false,
        _ => return Err(unknown()),
    };
    let (er, n) = if let Some(n) = graph.strip_prefix("er") {
        (true, n)
    } else if let Some(n) = graph.strip_prefix("cycle") {
        (false, n)
    } else {
        return Err(unknown());
    };
    let n: usize = n.parse().map_err(|_| unknown())?;
    let allowed: &[usize] = if desk { &[10] } else { &[35, 70, 100] };
    if !allowed.contains(&n) {
        return Err(unknown());
    }
    let graph = match (er, desk) {
        (true, false) => GraphSpec::Er { n, p: 0.3 },
        (true, true) => GraphSpec::Er { n, p: 0.5 },
        (false, _) => GraphSpec::Cycle { n },
    };
    let step = step_preset(er, diminishing);
    if desk {
        let ProblemSpec::Pca { d, p, .. } = DESK_PCA else { unreachable!() };
        Ok(base(ManifoldKind::Grassmann { d, p }, graph, DESK_PCA, step, 5_000, (0..10).collect(), 10))
    } else {
        let problem = ProblemSpec::Pca {
            d: FULL_D,
            p: FULL_P,
            spike_gap: 1.0,
            noise: 0.5,
            m: FULL_SAMPLES / n,
        };
        Ok(base(
            ManifoldKind::Grassmann { d: FULL_D, p: FULL_P },
            graph,
            problem,
            step,
            10_000,
            (0..20).collect(),
            10,
        ))
    }
}
