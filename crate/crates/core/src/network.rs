//! Communication graphs and symmetric doubly-stochastic mixing matrices.

use crate::manifolds::Mat;
use crate::rng::{tag, SeedStream};
use rand::Rng;
use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

/// Row/column sums and symmetry are checked to this tolerance.
pub const MIXING_TOL: f64 = 1e-12;
/// Retry budget for Erdős–Rényi rejection sampling.
pub const ER_MAX_RETRIES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clause {
    Connected,
    Symmetric,
    RowStochastic,
    ColumnStochastic,
    Nonnegative,
    PositiveDiagonal,
    Sparsity,
    SpectralGap,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Clause::Connected => "connectivity",
            Clause::Symmetric => "symmetry",
            Clause::RowStochastic => "row sums equal one",
            Clause::ColumnStochastic => "column sums equal one",
            Clause::Nonnegative => "entrywise nonnegativity",
            Clause::PositiveDiagonal => "positive diagonal",
            Clause::Sparsity => "zero weight between non-neighbours",
            Clause::SpectralGap => "second singular value below one",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("no connected Erdős–Rényi graph with n = {n}, p = {p} after {retries} draws")]
    ConnectivityFailure { n: usize, p: f64, retries: usize },
    #[error("network topology assumption violated ({clause}): {detail}")]
    AssumptionViolation { clause: Clause, detail: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("mixing matrix csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NetworkError {
    pub fn clause(&self) -> Option<Clause> {
        match self {
            NetworkError::AssumptionViolation { clause, .. } => Some(*clause),
            _ => None,
        }
    }
}

fn violation(clause: Clause, detail: String) -> NetworkError {
    NetworkError::AssumptionViolation { clause, detail }
}

/// Undirected simple graph on nodes `0..n`; edges stored as `(i, j)` with `i < j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, NetworkError> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(NetworkError::InvalidGraph(format!("self-loop at {i}")));
            }
            if i >= n || j >= n {
                return Err(NetworkError::InvalidGraph(format!("edge ({i},{j}) out of range for n = {n}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        Ok(Self { n, edges: set })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Copy with an extra edge.
    pub fn with_edge(&self, i: usize, j: usize) -> Result<Self, NetworkError> {
        Graph::new(self.n, self.edges().chain([(i, j)]))
    }
}

/// Erdős–Rényi graph: each pair independently with probability `p`,
/// redrawn from a fresh substream until connected.
pub fn gen_er(n: usize, p: f64, stream: &SeedStream) -> Result<Graph, NetworkError> {
    if n < 2 || !(p > 0.0 && p <= 1.0) {
        return Err(NetworkError::InvalidGraph(format!("ER needs n >= 2 and p in (0, 1], got n = {n}, p = {p}")));
    }
    for retry in 0..ER_MAX_RETRIES {
        let mut rng = stream.stream(&[tag::GRAPH, retry as u64]);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::new(n, edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(NetworkError::ConnectivityFailure {
        n,
        p,
        retries: ER_MAX_RETRIES,
    })
}

/// Ring `{i, i+1 mod n}`.
pub fn gen_cycle(n: usize) -> Result<Graph, NetworkError> {
    if n < 3 {
        return Err(NetworkError::InvalidGraph(format!("cycle needs n >= 3, got {n}")));
    }
    Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)))
}

pub fn gen_complete(n: usize) -> Result<Graph, NetworkError> {
    if n < 2 {
        return Err(NetworkError::InvalidGraph(format!("complete graph needs n >= 2, got {n}")));
    }
    Graph::new(n, (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))))
}

/// Validated mixing matrix with its second singular value and sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingMatrix {
    w: Mat,
    sigma2: f64,
    /// Off-diagonal nonzeros of each row, ascending column order.
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    /// Validates `w` against every clause of the network assumption. When
    /// `graph` is given the sparsity pattern is checked against it too.
    pub fn new(w: Mat, graph: Option<&Graph>) -> Result<Self, NetworkError> {
        validate(&w, graph)?;
        let sigma2 = sigma2(&w)?;
        let n = w.nrows();
        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && w[(i, j)] != 0.0).map(|j| (j, w[(i, j)])).collect())
            .collect();
        Ok(Self { w, sigma2, neighbors })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn weights(&self) -> &Mat {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// The same matrix with agents relabelled: new agent `k` is old agent `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, NetworkError> {
        let n = self.n();
        let w = Mat::from_fn(n, n, |a, b| self.w[(perm[a], perm[b])]);
        Self::new(w, None)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.n()).map(|j| format!("{:e}", self.w[(i, j)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), NetworkError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv_str(text: &str, graph: Option<&Graph>) -> Result<Self, NetworkError> {
        Self::new(parse_square_csv(text)?, graph)
    }

    pub fn read_csv(path: &Path, graph: Option<&Graph>) -> Result<Self, NetworkError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text, graph)
    }

    /// Graph of the nonzero off-diagonal pattern.
    pub fn support_graph(&self) -> Graph {
        let n = self.n();
        Graph::new(
            n,
            (0..n).flat_map(|i| self.neighbors[i].iter().filter(move |(j, _)| *j > i).map(move |&(j, _)| (i, j))),
        )
        .expect("pattern of a validated matrix")
    }
}

/// Header-less, row-major, comma-separated square matrix.
pub fn parse_square_csv(text: &str) -> Result<Mat, NetworkError> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, l)| {
            l.split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| NetworkError::Csv(format!("line {}: {e} ({:?})", ln + 1, f.trim())))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let n = rows.len();
    if n == 0 {
        return Err(NetworkError::Csv("empty matrix".into()));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(NetworkError::Csv(format!("row {} has {} entries, expected {n}", i + 1, r.len())));
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

/// Metropolis–Hastings weights: `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges,
/// diagonal fills each row to one.
pub fn metropolis_weights(g: &Graph) -> Result<MixingMatrix, NetworkError> {
    if !g.is_connected() {
        return Err(violation(Clause::Connected, format!("graph with {} nodes is disconnected", g.n())));
    }
    let n = g.n();
    let deg = g.degrees();
    let mut w = Mat::zeros(n, n);
    for (i, j) in g.edges() {
        let v = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::new(w, Some(g))
}

/// Checks every clause of the network assumption, naming the first violated one.
pub fn validate(w: &Mat, graph: Option<&Graph>) -> Result<(), NetworkError> {
    let n = w.nrows();
    if w.ncols() != n || n == 0 {
        return Err(NetworkError::InvalidGraph(format!("mixing matrix must be square and nonempty, got {}x{}", n, w.ncols())));
    }
    if let Some(g) = graph {
        if g.n() != n {
            return Err(NetworkError::InvalidGraph(format!("graph has {} nodes, matrix is {n}x{n}", g.n())));
        }
    }
    for i in 0..n {
        for j in 0..n {
            let v = w[(i, j)];
            if !v.is_finite() {
                return Err(violation(Clause::Nonnegative, format!("w[{i},{j}] = {v} is not finite")));
            }
            if (v - w[(j, i)]).abs() > MIXING_TOL {
                return Err(violation(Clause::Symmetric, format!("w[{i},{j}] = {v} but w[{j},{i}] = {}", w[(j, i)])));
            }
            if v < 0.0 {
                return Err(violation(Clause::Nonnegative, format!("w[{i},{j}] = {v}")));
            }
        }
    }
    for i in 0..n {
        let row: f64 = w.row(i).sum();
        if (row - 1.0).abs() > MIXING_TOL {
            return Err(violation(Clause::RowStochastic, format!("row {i} sums to {row}")));
        }
        let col: f64 = w.column(i).sum();
        if (col - 1.0).abs() > MIXING_TOL {
            return Err(violation(Clause::ColumnStochastic, format!("column {i} sums to {col}")));
        }
        if !(w[(i, i)] > 0.0) {
            return Err(violation(Clause::PositiveDiagonal, format!("w[{i},{i}] = {}", w[(i, i)])));
        }
    }
    if let Some(g) = graph {
        for i in 0..n {
            for j in 0..n {
                if i != j && w[(i, j)] != 0.0 && !g.has_edge(i, j) {
                    return Err(violation(Clause::Sparsity, format!("w[{i},{j}] = {} but ({i},{j}) is not an edge", w[(i, j)])));
                }
            }
        }
        if !g.is_connected() {
            return Err(violation(Clause::Connected, "graph is disconnected".into()));
        }
    }
    Ok(())
}

/// Second largest singular value of `w`; must be below one for a connected network.
pub fn sigma2(w: &Mat) -> Result<f64, NetworkError> {
    let n = w.nrows();
    if n == 1 {
        return Ok(0.0);
    }
    let mut sv: Vec<f64> = w.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let s2 = sv[1];
    if s2 >= 1.0 - MIXING_TOL {
        return Err(violation(Clause::SpectralGap, format!("sigma2(W) = {s2}; the network is disconnected or W is invalid")));
    }
    Ok(s2.max(0.0))
}
