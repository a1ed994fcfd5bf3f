//! Local objectives, stochastic gradient oracles and synthetic instances.
//!
//! Two problem families are provided:
//!
//! * principal subspace estimation on `G(d, p)`:
//!   `f_i(X) = -1/(2 m_i) sum_j |X^T z_j|^2`, gradient `-(I - X X^T) A_i X`
//!   with `A_i` the shard second-moment matrix;
//! * Karcher mean of anchor points on any geometry:
//!   `f_i(x) = 1/(2 m_i) sum_j d^2(x, a_j)`, gradient `-1/m_i sum_j log_x(a_j)`.
//!   Inside a small enough ball this is geodesically convex.
//!
//! Instances carry their optimum, a common initial point, the domain ball
//! used for monitoring, and probed gradient/noise bounds.

use crate::frechet::{frechet_mean, FrechetError, FrechetOptions};
use crate::manifolds::{Geometry, Manifold, ManifoldError, ManifoldKind, ManifoldSpec, Mat, Point, TangentVector};
use crate::rng::{tag, SeedStream};
use nalgebra::SymmetricEigen;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use std::path::Path;

/// Safety factor applied to probed suprema.
pub const PROBE_SAFETY: f64 = 1.1;
/// Default ratio of the clip bound `G` to the probed gradient bound.
pub const CLIP_FACTOR: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Frechet(#[from] FrechetError),
    #[error("dataset csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub enum ShardData {
    /// One sample per row.
    Vectors(Mat),
    Anchors(Vec<Point>),
}

#[derive(Clone, Debug)]
pub struct Shard {
    /// Identity of the owning agent; keys its oracle random stream.
    pub agent_id: usize,
    pub data: ShardData,
}

impl Shard {
    pub fn len(&self) -> usize {
        match &self.data {
            ShardData::Vectors(z) => z.nrows(),
            ShardData::Anchors(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Probed gradient bound, noise bound and the enforced clip level.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct GradBounds {
    pub delta_hat: f64,
    pub sigma_hat: f64,
    pub g: f64,
}

#[derive(Clone, Debug)]
pub struct Problem {
    geometry: Geometry,
    spec: ManifoldSpec,
    shards: Vec<Shard>,
    optimum: Option<Point>,
    center: Point,
    init: Point,
    bounds: Option<GradBounds>,
}

impl Problem {
    /// Assembles an instance. `center` is the centre of the monitored domain
    /// ball of diameter `spec.diameter`; `init` is the common starting point.
    pub fn new(
        spec: ManifoldSpec,
        shards: Vec<Shard>,
        optimum: Option<Point>,
        center: Point,
        init: Point,
    ) -> Result<Self, ProblemError> {
        spec.validate()?;
        let geometry = Geometry::new(spec.kind)?;
        if shards.is_empty() {
            return Err(ProblemError::Invalid("no shards".into()));
        }
        for p in [Some(&center), Some(&init), optimum.as_ref()].into_iter().flatten() {
            geometry.check_point(p)?;
        }
        let mut ids: Vec<usize> = shards.iter().map(|s| s.agent_id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != shards.len() {
            return Err(ProblemError::Invalid("agent ids must be unique".into()));
        }
        for (i, s) in shards.iter().enumerate() {
            if s.is_empty() {
                return Err(ProblemError::Invalid(format!("shard {i} is empty")));
            }
            match (&s.data, spec.kind) {
                (ShardData::Vectors(z), ManifoldKind::Grassmann { d, .. }) => {
                    if z.ncols() != d {
                        return Err(ProblemError::DimensionMismatch(format!("shard {i} samples have {} entries, expected {d}", z.ncols())));
                    }
                    if z.iter().any(|v| !v.is_finite()) {
                        return Err(ProblemError::Invalid(format!("shard {i} has non-finite samples")));
                    }
                }
                (ShardData::Vectors(_), k) => {
                    return Err(ProblemError::DimensionMismatch(format!("vector shards need a Grassmann manifold, got {k}")));
                }
                (ShardData::Anchors(a), _) => {
                    for p in a {
                        geometry.check_point(p)?;
                    }
                }
            }
        }
        Ok(Self {
            geometry,
            spec,
            shards,
            optimum,
            center,
            init,
            bounds: None,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn n_agents(&self) -> usize {
        self.shards.len()
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn optimum(&self) -> Option<&Point> {
        self.optimum.as_ref()
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn init(&self) -> &Point {
        &self.init
    }

    /// Relabels agents: new agent `k` owns old shard `perm[k]` and keeps its
    /// agent id, hence its oracle stream.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, ProblemError> {
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.n_agents()).collect::<Vec<_>>() {
            return Err(ProblemError::Invalid("not a permutation of the agents".into()));
        }
        let mut p = self.clone();
        p.shards = perm.iter().map(|&k| self.shards[k].clone()).collect();
        Ok(p)
    }

    pub fn with_init(mut self, init: Point) -> Result<Self, ProblemError> {
        self.geometry.check_point(&init)?;
        self.init = init;
        Ok(self)
    }

    /// Radius of the monitored domain ball.
    pub fn domain_radius(&self) -> f64 {
        self.spec.diameter / 2.0
    }

    pub fn bounds(&self) -> Option<GradBounds> {
        self.bounds
    }

    pub fn set_bounds(&mut self, b: GradBounds) {
        self.bounds = Some(b);
    }

    pub fn in_domain(&self, x: &Point) -> Result<bool, ManifoldError> {
        Ok(self.geometry.dist(&self.center, x)? <= self.domain_radius() + 1e-12)
    }

    pub fn local_objective(&self, agent: usize, x: &Point) -> Result<f64, ProblemError> {
        match &self.shards[agent].data {
            ShardData::Vectors(z) => {
                let zx = z * x.coords();
                Ok(-zx.norm_squared() / (2.0 * z.nrows() as f64))
            }
            ShardData::Anchors(a) => {
                let mut total = 0.0;
                for p in a {
                    total += self.geometry.dist(x, p)?.powi(2);
                }
                Ok(total / (2.0 * a.len() as f64))
            }
        }
    }

    /// `(1/n) sum_i f_i(x)`.
    pub fn objective(&self, x: &Point) -> Result<f64, ProblemError> {
        let mut total = 0.0;
        for i in 0..self.n_agents() {
            total += self.local_objective(i, x)?;
        }
        Ok(total / self.n_agents() as f64)
    }

    /// Exact Riemannian gradient of `f_i`.
    pub fn local_grad(&self, agent: usize, x: &Point) -> Result<TangentVector, ProblemError> {
        let m = self.shards[agent].len();
        self.batch_grad(agent, x, 0..m)
    }

    /// Riemannian gradient of the single-sample loss `F_i(x, xi_i^j)`.
    pub fn sample_grad(&self, agent: usize, j: usize, x: &Point) -> Result<TangentVector, ProblemError> {
        self.batch_grad(agent, x, std::iter::once(j))
    }

    /// Average of single-sample gradients over `idx` (with repetitions).
    pub fn batch_grad(
        &self,
        agent: usize,
        x: &Point,
        idx: impl IntoIterator<Item = usize>,
    ) -> Result<TangentVector, ProblemError> {
        let xc = x.coords();
        match &self.shards[agent].data {
            ShardData::Vectors(z) => {
                let rows: Vec<usize> = idx.into_iter().collect();
                let zb = z.select_rows(rows.iter());
                let zx = &zb * xc;
                let ax = zb.transpose() * zx / rows.len() as f64;
                Ok(self.geometry.project_tangent(x, &(-ax))?)
            }
            ShardData::Anchors(a) => {
                let mut acc = Mat::zeros(xc.nrows(), xc.ncols());
                let mut count = 0usize;
                for j in idx {
                    acc -= self.geometry.log(x, &a[j])?.into_vec();
                    count += 1;
                }
                Ok(self.geometry.project_tangent(x, &(acc / count as f64))?)
            }
        }
    }

    /// Exact gradient of the global objective `(1/n) sum_i f_i`.
    pub fn grad(&self, x: &Point) -> Result<TangentVector, ProblemError> {
        let mut acc = TangentVector::zero(x);
        for i in 0..self.n_agents() {
            acc = acc.add(&self.local_grad(i, x)?)?;
        }
        Ok(acc.scaled(1.0 / self.n_agents() as f64))
    }

    /// Exact variance of the with-replacement minibatch oracle at `x`:
    /// per-sample gradient variance divided by the batch size, zero for full batches.
    pub fn minibatch_variance(&self, agent: usize, x: &Point, batch: usize) -> Result<f64, ProblemError> {
        let m = self.shards[agent].len();
        if batch >= m {
            return Ok(0.0);
        }
        let mean = self.local_grad(agent, x)?;
        let mut total = 0.0;
        for j in 0..m {
            total += (self.sample_grad(agent, j, x)?.vec() - mean.vec()).norm_squared();
        }
        Ok(total / (m as f64 * batch as f64))
    }

    /// Random point of the monitored domain, used for probing bounds.
    pub fn random_domain_point(&self, rng: &mut dyn rand::RngCore) -> Result<Point, ProblemError> {
        Ok(self.geometry.random_point_near(&self.center, self.domain_radius(), rng)?)
    }
}

/// Probes `n_probe` points and every agent:
/// `delta_hat = 1.1 max |grad f_i(x)|` and `sigma_hat^2 = 1.1 max Var[oracle]`.
/// `whole_manifold` draws probes uniformly over the manifold instead of the domain ball.
pub fn estimate_bounds(
    problem: &Problem,
    n_probe: usize,
    batch: usize,
    whole_manifold: bool,
    stream: &SeedStream,
) -> Result<GradBounds, ProblemError> {
    if n_probe < 1 || batch < 1 {
        return Err(ProblemError::Invalid("n_probe and batch must be positive".into()));
    }
    let mut rng = stream.stream(&[tag::PROBE]);
    let mut max_grad: f64 = 0.0;
    let mut max_var: f64 = 0.0;
    for k in 0..n_probe {
        let x = if k == 0 {
            problem.init().clone()
        } else if whole_manifold {
            problem.geometry().random_point(&mut rng)
        } else {
            problem.random_domain_point(&mut rng)?
        };
        for i in 0..problem.n_agents() {
            max_grad = max_grad.max(problem.local_grad(i, &x)?.norm());
            max_var = max_var.max(problem.minibatch_variance(i, &x, batch)?);
        }
    }
    let delta_hat = PROBE_SAFETY * max_grad;
    Ok(GradBounds {
        delta_hat,
        sigma_hat: (PROBE_SAFETY * max_var).sqrt(),
        g: CLIP_FACTOR * delta_hat,
    })
}

#[derive(Clone, Debug)]
pub struct OracleSample {
    pub grad: TangentVector,
    pub clipped: bool,
}

/// Minibatch stochastic gradient with radial clipping at `clip`.
///
/// The batch for `(agent, t)` is drawn from `seeds.agent_stream(id, t)`, with
/// `id` the shard's agent id, as
/// `batch` successive `random_range(0..m)` indices; when `batch >= m` the full
/// shard is used and no randomness is consumed.
#[derive(Clone, Debug)]
pub struct StochGradOracle<'a> {
    problem: &'a Problem,
    batch: usize,
    clip: f64,
    seeds: SeedStream,
}

impl<'a> StochGradOracle<'a> {
    pub fn new(problem: &'a Problem, batch: usize, clip: f64, seeds: SeedStream) -> Self {
        Self {
            problem,
            batch: batch.max(1),
            clip,
            seeds,
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    pub fn sample(&self, agent: usize, t: usize, x: &Point) -> Result<OracleSample, ProblemError> {
        let m = self.problem.shards()[agent].len();
        let grad = if self.batch >= m {
            self.problem.local_grad(agent, x)?
        } else {
            let mut rng = self.seeds.agent_stream(self.problem.shards()[agent].agent_id, t);
            let idx: Vec<usize> = (0..self.batch).map(|_| rng.random_range(0..m)).collect();
            self.problem.batch_grad(agent, x, idx)?
        };
        let norm = grad.norm();
        if norm > self.clip {
            Ok(OracleSample {
                grad: grad.scaled(self.clip / norm),
                clipped: true,
            })
        } else {
            Ok(OracleSample { grad, clipped: false })
        }
    }
}

fn gaussian(rng: &mut impl Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Top-`p` eigenvectors of the second-moment matrix of the rows of `z`.
pub fn principal_subspace(z: &Mat, p: usize) -> Mat {
    let a = z.transpose() * z / z.nrows() as f64;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    Mat::from_fn(z.ncols(), p, |r, c| eig.eigenvectors[(r, order[c])])
}

/// Equal random split of the rows of `pooled`; a remainder of `rows mod n` is dropped.
pub fn partition_rows(pooled: &Mat, n_agents: usize, stream: &SeedStream) -> Vec<Shard> {
    let m = pooled.nrows() / n_agents;
    let mut perm: Vec<usize> = (0..pooled.nrows()).collect();
    perm.shuffle(&mut stream.stream(&[tag::SHUFFLE]));
    (0..n_agents)
        .map(|i| Shard {
            agent_id: i,
            data: ShardData::Vectors(pooled.select_rows(perm[i * m..(i + 1) * m].iter())),
        })
        .collect()
}

/// Spiked-covariance samples `z = U diag(lambda) g + noise g'` with
/// `lambda_k = spike_gap (p - k)`, split equally over `n_agents`.
/// Returns the shards, the planted subspace `span(U)` and the pooled sample.
pub fn gen_spiked_data(
    d: usize,
    p: usize,
    n_agents: usize,
    m_per_agent: usize,
    spike_gap: f64,
    noise: f64,
    stream: &SeedStream,
) -> Result<(Vec<Shard>, Point, Mat), ProblemError> {
    if !(d > p && p >= 1) {
        return Err(ProblemError::Invalid(format!("spiked model needs d > p >= 1, got d = {d}, p = {p}")));
    }
    if n_agents == 0 || m_per_agent == 0 {
        return Err(ProblemError::Invalid("need at least one agent and one sample".into()));
    }
    let mut rng = stream.stream(&[tag::DATA]);
    let u = gaussian(&mut rng, d, p).qr().q();
    let planted = Point::new(ManifoldKind::Grassmann { d, p }, u.clone())?;
    let lambda = Mat::from_diagonal(&nalgebra::DVector::from_fn(p, |k, _| spike_gap * (p - k) as f64));
    let total = n_agents * m_per_agent;
    let g = gaussian(&mut rng, p, total);
    let g2 = gaussian(&mut rng, d, total);
    let pooled = (&u * lambda * g + g2 * noise).transpose();
    let shards = partition_rows(&pooled, n_agents, stream);
    Ok((shards, planted, pooled))
}

/// Parameters of a spiked-covariance principal subspace instance.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaParams {
    pub d: usize,
    pub p: usize,
    pub spike_gap: f64,
    pub noise: f64,
    /// Samples per agent.
    pub m: usize,
}

/// Spiked PCA instance; the optimum is the top-`p` subspace of the pooled
/// sample, which is also the domain centre. The initial point is uniform.
pub fn build_pca(params: PcaParams, n_agents: usize, diameter: f64, stream: &SeedStream) -> Result<Problem, ProblemError> {
    let (shards, _, _) = gen_spiked_data(
        params.d,
        params.p,
        n_agents,
        params.m,
        params.spike_gap,
        params.noise,
        stream,
    )?;
    pca_from_shards(shards, params.d, params.p, diameter, stream)
}

fn pca_from_shards(
    shards: Vec<Shard>,
    d: usize,
    p: usize,
    diameter: f64,
    stream: &SeedStream,
) -> Result<Problem, ProblemError> {
    let kind = ManifoldKind::Grassmann { d, p };
    let geometry = Geometry::new(kind)?;
    let used = shards.len() * shards[0].len();
    let mut stacked = Mat::zeros(used, d);
    for (i, s) in shards.iter().enumerate() {
        if let ShardData::Vectors(z) = &s.data {
            stacked.rows_mut(i * z.nrows(), z.nrows()).copy_from(z);
        }
    }
    let opt = Point::normalized(kind, principal_subspace(&stacked, p))?;
    let init = geometry.random_point(&mut stream.stream(&[tag::INIT]));
    Problem::new(geometry.spec(diameter)?, shards, Some(opt.clone()), opt, init)
}

/// Reads a header-less numeric CSV (rows are samples), rescales all entries
/// to `[0, 1]` by the global min/max, subtracts the global mean row, shuffles
/// and splits equally. The optimum is the pooled top-`p` subspace.
pub fn load_csv_dataset(
    path: &Path,
    p: usize,
    n_agents: usize,
    diameter: f64,
    stream: &SeedStream,
) -> Result<Problem, ProblemError> {
    let text = std::fs::read_to_string(path)?;
    let pooled = parse_dataset(&text)?;
    let d = pooled.ncols();
    if !(d > p && p >= 1) {
        return Err(ProblemError::Invalid(format!("dataset has {d} columns, need more than p = {p}")));
    }
    if pooled.nrows() < n_agents {
        return Err(ProblemError::Invalid(format!("{} samples cannot feed {n_agents} agents", pooled.nrows())));
    }
    let pooled = normalize_dataset(pooled);
    let shards = partition_rows(&pooled, n_agents, stream);
    pca_from_shards(shards, d, p, diameter, stream)
}

pub fn parse_dataset(text: &str) -> Result<Mat, ProblemError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|e| ProblemError::Csv(format!("line {}: {e}", ln + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(ProblemError::Csv(format!("line {} has {} fields, expected {}", ln + 1, row.len(), first.len())));
            }
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::Csv(format!("line {}: non-finite value", ln + 1)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ProblemError::Csv("no samples".into()));
    }
    Ok(Mat::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]))
}

/// Global min/max scaling to `[0, 1]` followed by mean-row centering.
pub fn normalize_dataset(mut z: Mat) -> Mat {
    let (lo, hi) = (z.min(), z.max());
    if hi > lo {
        z.apply(|v| *v = (*v - lo) / (hi - lo));
    } else {
        z.fill(0.0);
    }
    let mean = z.row_mean();
    for mut r in z.row_iter_mut() {
        r -= &mean;
    }
    z
}

/// Parameters of a Karcher-mean instance.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KarcherParams {
    /// Radius of the ball holding all anchors.
    pub radius: f64,
    /// Anchors per agent.
    pub m: usize,
}

/// Karcher-mean instance with heterogeneous shards: each agent draws a local
/// centre within `radius/2` of a random global centre, then its anchors
/// within `radius/2` of that. The optimum is the pooled Fréchet mean; the
/// initial point is drawn within `radius` of the centre.
pub fn build_karcher(
    kind: ManifoldKind,
    params: KarcherParams,
    n_agents: usize,
    diameter: f64,
    stream: &SeedStream,
) -> Result<Problem, ProblemError> {
    if !(params.radius > 0.0) || params.radius > diameter / 2.0 {
        return Err(ProblemError::Invalid(format!(
            "anchor radius {} must lie in (0, D/2 = {}]",
            params.radius,
            diameter / 2.0
        )));
    }
    if n_agents == 0 || params.m == 0 {
        return Err(ProblemError::Invalid("need at least one agent and one anchor".into()));
    }
    let geometry = Geometry::new(kind)?;
    let spec = geometry.spec(diameter)?;
    let mut rng = stream.stream(&[tag::DATA]);
    let center = geometry.random_point(&mut rng);
    let half = params.radius / 2.0;
    let mut shards = Vec::with_capacity(n_agents);
    let mut pooled = Vec::with_capacity(n_agents * params.m);
    for i in 0..n_agents {
        let local = geometry.random_point_near(&center, half, &mut rng)?;
        let anchors = (0..params.m)
            .map(|_| geometry.random_point_near(&local, half, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        pooled.extend(anchors.iter().cloned());
        shards.push(Shard {
            agent_id: i,
            data: ShardData::Anchors(anchors),
        });
    }
    let opts = FrechetOptions { tol: 1e-13, max_iter: 2000 };
    let opt = frechet_mean(&geometry, &pooled, None, opts)?.mean;
    let init = geometry.random_point_near(&center, params.radius, &mut stream.stream(&[tag::INIT]))?;
    Problem::new(spec, shards, Some(opt), center, init)
}
