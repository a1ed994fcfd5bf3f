//! The diffusion iteration, its fixed-step baseline, and a centralized reference.
//!
//! One round of diffusion:
//!
//! ```text
//! y_i^{t+1} = exp_{x_i^t}(-eta_t g_i)                              (local step)
//! x_i^{t+1} = exp_{y_i^{t+1}}(s sum_j w_ij log_{y_i^{t+1}}(y_j^{t+1}))   (consensus)
//! ```
//!
//! Both stages are synchronous: every agent's consensus update reads the
//! intermediate points of the same round. Agent work within a stage is
//! mapped through [`Exec`], and all oracle randomness is keyed by
//! `(seed, agent id, t)`, so serial and parallel runs agree bit for bit.

use crate::curvature::{consensus_bound, gap_bound, step_schedule, TheoremConstants};
use crate::exec::Exec;
use crate::frechet::{frechet_mean_lenient, weighted_disagreement, FrechetOptions};
use crate::manifolds::{Manifold, ManifoldError, Mat, Point, TangentVector};
use crate::network::MixingMatrix;
use crate::problems::{Problem, ProblemError, StochGradOracle};
use crate::rng::SeedStream;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Slack allowed in the live variance-contraction check.
pub const CONTRACTION_TOL: f64 = 1e-9;

/// Per-record event bits.
pub mod flags {
    /// Some `x_i` or `y_i` left the monitored domain ball.
    pub const DOMAIN: u32 = 1;
    /// The consensus step failed to contract the Fréchet variance by `rho1`.
    pub const CONTRACTION: u32 = 2;
    /// A gradient displacement exceeded `D` or a consensus displacement exceeded `s D`.
    pub const STEP_GUARD: u32 = 4;
    /// The Fréchet mean iteration hit its cap; metrics use the last iterate.
    pub const FRECHET: u32 = 8;
    /// At least one oracle output was clipped.
    pub const CLIPPED: u32 = 16;

    const NAMES: [(u32, &str); 5] = [
        (DOMAIN, "domain"),
        (CONTRACTION, "contraction"),
        (STEP_GUARD, "step_guard"),
        (FRECHET, "frechet"),
        (CLIPPED, "clipped"),
    ];

    /// `|`-separated names, empty when no bit is set.
    pub fn names(bits: u32) -> String {
        NAMES
            .iter()
            .filter(|(b, _)| bits & b != 0)
            .map(|(_, n)| *n)
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn parse(s: &str) -> Option<u32> {
        s.split('|').filter(|p| !p.is_empty()).try_fold(0, |acc, p| {
            NAMES.iter().find(|(_, n)| *n == p).map(|(b, _)| acc | b)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    DiffusionDiminishing,
    DiffusionFixed,
    CentralizedRsgd,
}

impl Algorithm {
    /// Gradient step size at round `t >= 1`.
    pub fn step_size(self, eta: f64, t: usize) -> f64 {
        match self {
            Algorithm::DiffusionFixed => eta,
            Algorithm::DiffusionDiminishing | Algorithm::CentralizedRsgd => step_schedule(eta, t),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::DiffusionDiminishing => "diffusion_diminishing",
            Algorithm::DiffusionFixed => "diffusion_fixed",
            Algorithm::CentralizedRsgd => "centralized_rsgd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// Number of rounds `T`; iterates `x^1 .. x^{T+1}` are produced.
    pub horizon: usize,
    /// `eta_0` for diminishing schedules, `eta` for the fixed one.
    pub eta: f64,
    /// Consensus step size.
    pub s: f64,
    pub batch: usize,
    pub seed: u64,
    pub record_every: usize,
    /// Monitor domain membership and step-size guards, flagging violations.
    pub enforce_assumptions: bool,
    pub exec: Exec,
    /// Theorem constants for the bound columns and the live contraction check.
    pub theory: Option<TheoremConstants>,
    /// Check `Var(x^{t+1}) <= rho1 Var(y^{t+1})` at every recorded round.
    pub check_contraction: bool,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, horizon: usize, eta: f64, s: f64, batch: usize, seed: u64) -> Self {
        Self {
            algorithm,
            horizon,
            eta,
            s,
            batch,
            seed,
            record_every: 1,
            enforce_assumptions: true,
            exec: Exec::default(),
            theory: None,
            check_contraction: false,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: String| Err(OptimizerError::Config(m));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("gradient step size must be positive, got {}", self.eta));
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return bad(format!("consensus step size must lie in (0, 1], got {}", self.s));
        }
        if self.batch < 1 || self.record_every < 1 {
            return bad("batch size and record interval must be positive".into());
        }
        if self.check_contraction && self.theory.is_none() {
            return bad("contraction check needs theorem constants".into());
        }
        Ok(())
    }

    fn records_at(&self, t: usize) -> bool {
        (t - 1).is_multiple_of(self.record_every) || t == self.horizon + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub t: usize,
    /// `sum_{i,j} w_ij d^2(x_i, x_j)`.
    pub consensus: f64,
    /// `sum_i d^2(x_i, xbar)`.
    pub frechet_var: f64,
    /// `(1/n) sum_i d^2(x_i, x*)`.
    pub msd: Option<f64>,
    /// `f(xbar) - f(x*)`.
    pub fgap_bar: Option<f64>,
    pub bound_consensus: Option<f64>,
    pub bound_gap: Option<f64>,
    /// Clipped oracle outputs so far.
    pub clip_count: usize,
    /// [`flags`] raised since the previous record.
    pub flags: u32,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub algorithm: Algorithm,
    pub records: Vec<IterationRecord>,
    pub final_states: Vec<Point>,
    pub clip_total: usize,
    pub oracle_calls: usize,
    /// Rounds in which some iterate left the domain ball.
    pub domain_violations: usize,
    pub step_guard_violations: usize,
    pub contraction_checks: usize,
    pub contraction_violations: usize,
    pub frechet_failures: usize,
}

impl Trace {
    pub fn record(&self, t: usize) -> Option<&IterationRecord> {
        self.records.binary_search_by_key(&t, |r| r.t).ok().map(|k| &self.records[k])
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OptimizerError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("round {t}, agent {agent}, gradient step: {source}")]
    Gradient {
        t: usize,
        agent: usize,
        #[source]
        source: ProblemError,
    },
    #[error("round {t}, consensus: {source}")]
    Consensus {
        t: usize,
        #[source]
        source: ConsensusError,
    },
    #[error("round {t}, metrics: {source}")]
    Metrics {
        t: usize,
        #[source]
        source: ProblemError,
    },
    #[error("record for t = {0} lacks the optimality gap")]
    MissingMetric(usize),
}

#[derive(Debug, thiserror::Error)]
#[error("edge ({i}, {j}): {source}")]
pub struct ConsensusError {
    pub i: usize,
    pub j: usize,
    #[source]
    pub source: ManifoldError,
}

/// `exp_x(-eta g)`.
pub fn gradient_step<M: Manifold + ?Sized>(m: &M, x: &Point, g: &TangentVector, eta: f64) -> Result<Point, ManifoldError> {
    m.exp(x, &g.scaled(-eta))
}

/// Synchronous consensus update of every agent from the same round's points.
pub fn consensus_step<M: Manifold + ?Sized>(
    m: &M,
    ys: &[Point],
    w: &MixingMatrix,
    s: f64,
    exec: Exec,
) -> Result<Vec<Point>, ConsensusError> {
    Ok(consensus_with_displacement(m, ys, w, s, exec)?.into_iter().map(|(x, _)| x).collect())
}

fn consensus_with_displacement<M: Manifold + ?Sized>(
    m: &M,
    ys: &[Point],
    w: &MixingMatrix,
    s: f64,
    exec: Exec,
) -> Result<Vec<(Point, f64)>, ConsensusError> {
    exec.try_map(ys.len(), |i| {
        let y = &ys[i];
        let mut acc = Mat::zeros(y.coords().nrows(), y.coords().ncols());
        for &(j, wij) in w.neighbors(i) {
            let v = m.log(y, &ys[j]).map_err(|source| ConsensusError { i, j, source })?;
            acc += v.into_vec() * wij;
        }
        let step = m
            .project_tangent(y, &(acc * s))
            .map_err(|source| ConsensusError { i, j: i, source })?;
        let disp = step.norm();
        let x = m.exp(y, &step).map_err(|source| ConsensusError { i, j: i, source })?;
        Ok((x, disp))
    })
}

/// Metrics of one joint state.
#[derive(Clone, Debug)]
pub struct StateMetrics {
    pub consensus: f64,
    pub frechet_var: f64,
    pub msd: Option<f64>,
    pub fgap_bar: Option<f64>,
    pub mean: Point,
    pub frechet_converged: bool,
}

/// Evaluates consensus error, Fréchet variance (times `n`), MSD and the gap at
/// the Fréchet mean. `w = None` gives zero consensus error.
pub fn state_metrics(problem: &Problem, w: Option<&MixingMatrix>, xs: &[Point]) -> Result<StateMetrics, ProblemError> {
    let geo = problem.geometry();
    let consensus = match w {
        Some(w) => weighted_disagreement(geo, xs, w)?,
        None => 0.0,
    };
    let (fr, converged) = frechet_mean_lenient(geo, xs, None, FrechetOptions::default())?;
    let n = xs.len() as f64;
    let (msd, fgap_bar) = match problem.optimum() {
        Some(opt) => {
            let mut sq = 0.0;
            for x in xs {
                sq += geo.dist(x, opt)?.powi(2);
            }
            let gap = problem.objective(&fr.mean)? - problem.objective(opt)?;
            (Some(sq / n), Some(gap))
        }
        None => (None, None),
    };
    Ok(StateMetrics {
        consensus,
        frechet_var: fr.variance * n,
        msd,
        fgap_bar,
        mean: fr.mean,
        frechet_converged: converged,
    })
}

struct Recorder<'a> {
    problem: &'a Problem,
    cfg: &'a RunConfig,
    init_dist_sq: Option<f64>,
    records: Vec<IterationRecord>,
    pending: u32,
    frechet_failures: usize,
}

impl Recorder<'_> {
    fn push(&mut self, t: usize, w: Option<&MixingMatrix>, xs: &[Point], clips: usize) -> Result<(), OptimizerError> {
        let m = state_metrics(self.problem, w, xs).map_err(|source| OptimizerError::Metrics { t, source })?;
        if !m.frechet_converged {
            self.pending |= flags::FRECHET;
            self.frechet_failures += 1;
        }
        let (bound_consensus, bound_gap) = match &self.cfg.theory {
            Some(tc) => (
                Some(consensus_bound(tc, t)),
                self.init_dist_sq.map(|d0| gap_bound(tc, t, d0)),
            ),
            None => (None, None),
        };
        self.records.push(IterationRecord {
            t,
            consensus: m.consensus,
            frechet_var: m.frechet_var,
            msd: m.msd,
            fgap_bar: m.fgap_bar,
            bound_consensus,
            bound_gap,
            clip_count: clips,
            flags: std::mem::take(&mut self.pending),
        });
        Ok(())
    }
}

fn init_dist_sq(problem: &Problem) -> Result<Option<f64>, OptimizerError> {
    match problem.optimum() {
        Some(opt) => Ok(Some(
            problem
                .geometry()
                .dist(problem.init(), opt)
                .map_err(|e| OptimizerError::Metrics { t: 1, source: e.into() })?
                .powi(2),
        )),
        None => Ok(None),
    }
}

fn clip_level(problem: &Problem) -> f64 {
    problem.bounds().map_or(f64::INFINITY, |b| b.g)
}

/// Runs the configured algorithm; diffusion variants need `w`.
pub fn run(problem: &Problem, w: &MixingMatrix, cfg: &RunConfig) -> Result<Trace, OptimizerError> {
    run_observed(problem, w, cfg, &mut |_, _| {})
}

/// As [`run`], calling `observer(t, x^t)` for every `t = 1..=T+1`.
pub fn run_observed(
    problem: &Problem,
    w: &MixingMatrix,
    cfg: &RunConfig,
    observer: &mut dyn FnMut(usize, &[Point]),
) -> Result<Trace, OptimizerError> {
    if cfg.algorithm == Algorithm::CentralizedRsgd {
        return run_centralized_observed(problem, cfg, observer);
    }
    cfg.validate()?;
    let n = problem.n_agents();
    if w.n() != n {
        return Err(OptimizerError::Config(format!("mixing matrix is {}x{} but there are {n} agents", w.n(), w.n())));
    }
    let geo = problem.geometry();
    let diameter = problem.spec().diameter;
    let oracle = StochGradOracle::new(problem, cfg.batch, clip_level(problem), SeedStream::new(cfg.seed));
    let mut rec = Recorder {
        problem,
        cfg,
        init_dist_sq: init_dist_sq(problem)?,
        records: Vec::new(),
        pending: 0,
        frechet_failures: 0,
    };
    let mut xs = vec![problem.init().clone(); n];
    let mut clips = 0usize;
    let mut domain_violations = 0;
    let mut guard_violations = 0;
    let mut contraction_checks = 0;
    let mut contraction_violations = 0;

    observer(1, &xs);
    rec.push(1, Some(w), &xs, 0)?;
    for t in 1..=cfg.horizon {
        let eta = cfg.algorithm.step_size(cfg.eta, t);
        let steps = cfg.exec.try_map(n, |i| {
            let g = oracle
                .sample(i, t, &xs[i])
                .map_err(|source| OptimizerError::Gradient { t, agent: i, source })?;
            let y = gradient_step(geo, &xs[i], &g.grad, eta)
                .map_err(|e| OptimizerError::Gradient { t, agent: i, source: e.into() })?;
            Ok((y, g.clipped, eta * g.grad.norm()))
        })?;
        let mut step_flags = 0;
        let mut ys = Vec::with_capacity(n);
        for (y, clipped, disp) in steps {
            if clipped {
                clips += 1;
                step_flags |= flags::CLIPPED;
            }
            if cfg.enforce_assumptions && disp > diameter {
                step_flags |= flags::STEP_GUARD;
            }
            ys.push(y);
        }
        let next = consensus_with_displacement(geo, &ys, w, cfg.s, cfg.exec)
            .map_err(|source| OptimizerError::Consensus { t, source })?;
        let mut new_xs = Vec::with_capacity(n);
        for (x, disp) in next {
            if cfg.enforce_assumptions && disp > cfg.s * diameter {
                step_flags |= flags::STEP_GUARD;
            }
            new_xs.push(x);
        }
        if cfg.enforce_assumptions {
            let outside = cfg
                .exec
                .try_map(2 * n, |k| {
                    let p = if k < n { &ys[k] } else { &new_xs[k - n] };
                    problem.in_domain(p).map(|inside| !inside)
                })
                .map_err(|e| OptimizerError::Metrics { t: t + 1, source: e.into() })?;
            if outside.into_iter().any(|o| o) {
                step_flags |= flags::DOMAIN;
                domain_violations += 1;
            }
        }
        if step_flags & flags::STEP_GUARD != 0 {
            guard_violations += 1;
        }
        if cfg.check_contraction && cfg.records_at(t + 1) {
            let rho1 = cfg.theory.as_ref().map(|tc| tc.rho1).unwrap_or(1.0);
            let var = |pts: &[Point]| {
                frechet_mean_lenient(geo, pts, None, FrechetOptions::default())
                    .map(|(r, _)| r.variance)
                    .map_err(|e| OptimizerError::Metrics { t: t + 1, source: e.into() })
            };
            contraction_checks += 1;
            if var(&new_xs)? > rho1 * var(&ys)? + CONTRACTION_TOL {
                contraction_violations += 1;
                step_flags |= flags::CONTRACTION;
            }
        }
        rec.pending |= step_flags;
        xs = new_xs;
        observer(t + 1, &xs);
        if cfg.records_at(t + 1) {
            rec.push(t + 1, Some(w), &xs, clips)?;
        }
    }
    Ok(Trace {
        algorithm: cfg.algorithm,
        records: rec.records,
        final_states: xs,
        clip_total: clips,
        oracle_calls: n * cfg.horizon,
        domain_violations,
        step_guard_violations: guard_violations,
        contraction_checks,
        contraction_violations,
        frechet_failures: rec.frechet_failures,
    })
}

/// Centralized reference: `x^{t+1} = exp_{x^t}(-eta_t (1/n) sum_i g_i(x^t))`.
pub fn run_centralized(problem: &Problem, cfg: &RunConfig) -> Result<Trace, OptimizerError> {
    run_centralized_observed(problem, cfg, &mut |_, _| {})
}

fn run_centralized_observed(
    problem: &Problem,
    cfg: &RunConfig,
    observer: &mut dyn FnMut(usize, &[Point]),
) -> Result<Trace, OptimizerError> {
    cfg.validate()?;
    let n = problem.n_agents();
    let geo = problem.geometry();
    let oracle = StochGradOracle::new(problem, cfg.batch, clip_level(problem), SeedStream::new(cfg.seed));
    let mut rec = Recorder {
        problem,
        cfg,
        init_dist_sq: init_dist_sq(problem)?,
        records: Vec::new(),
        pending: 0,
        frechet_failures: 0,
    };
    let mut x = problem.init().clone();
    let mut clips = 0;
    let mut domain_violations = 0;
    let mut guard_violations = 0;
    observer(1, std::slice::from_ref(&x));
    rec.push(1, None, std::slice::from_ref(&x), 0)?;
    for t in 1..=cfg.horizon {
        let eta = step_schedule(cfg.eta, t);
        let samples = cfg.exec.try_map(n, |i| {
            oracle
                .sample(i, t, &x)
                .map_err(|source| OptimizerError::Gradient { t, agent: i, source })
        })?;
        let mut acc = Mat::zeros(x.coords().nrows(), x.coords().ncols());
        for s in &samples {
            if s.clipped {
                clips += 1;
                rec.pending |= flags::CLIPPED;
            }
            acc += s.grad.vec();
        }
        let g = geo
            .project_tangent(&x, &(acc / n as f64))
            .map_err(|e| OptimizerError::Gradient { t, agent: 0, source: e.into() })?;
        if cfg.enforce_assumptions && eta * g.norm() > problem.spec().diameter {
            rec.pending |= flags::STEP_GUARD;
            guard_violations += 1;
        }
        x = gradient_step(geo, &x, &g, eta).map_err(|e| OptimizerError::Gradient { t, agent: 0, source: e.into() })?;
        if cfg.enforce_assumptions && !problem.in_domain(&x).map_err(|e| OptimizerError::Metrics { t: t + 1, source: e.into() })? {
            rec.pending |= flags::DOMAIN;
            domain_violations += 1;
        }
        observer(t + 1, std::slice::from_ref(&x));
        if cfg.records_at(t + 1) {
            rec.push(t + 1, None, std::slice::from_ref(&x), clips)?;
        }
    }
    Ok(Trace {
        algorithm: Algorithm::CentralizedRsgd,
        records: rec.records,
        final_states: vec![x],
        clip_total: clips,
        oracle_calls: n * cfg.horizon,
        domain_violations,
        step_guard_violations: guard_violations,
        contraction_checks: 0,
        contraction_violations: 0,
        frechet_failures: rec.frechet_failures,
    })
}

/// `sum_{t=1}^T eta_t gap_t / sum_{t=1}^T eta_t`, reading `gap_t` from the
/// records; every `t` in `1..=horizon` must be recorded with a gap.
pub fn ergodic_gap(trace: &Trace, horizon: usize, schedule: impl Fn(usize) -> f64) -> Result<f64, OptimizerError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 1..=horizon {
        let gap = trace
            .record(t)
            .and_then(|r| r.fgap_bar)
            .ok_or(OptimizerError::MissingMetric(t))?;
        let eta = schedule(t);
        num += eta * gap;
        den += eta;
    }
    Ok(num / den)
}
