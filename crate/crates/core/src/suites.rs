//! Monte-Carlo certification suites.
//!
//! Each suite draws random configurations inside a geodesic ball of the
//! configured diameter, evaluates one inequality or identity per case, and
//! reports the number of failures and the worst slack. Cases are independent
//! and keyed by `(seed, suite, case)`, so results do not depend on [`Exec`].

use crate::curvature::{check_cosine_law, check_log_lipschitz, GeometryConstants, TheoremConstants, CHECK_TOL};
use crate::exec::Exec;
use crate::frechet::{frechet_mean, weighted_disagreement, FrechetOptions};
use crate::manifolds::{Geometry, Manifold, ManifoldKind, ManifoldSpec, Point};
use crate::network::{gen_cycle, gen_er, metropolis_weights, MixingMatrix};
use crate::optimizer::consensus_step;
use crate::rng::{tag, SeedStream, StreamRng};
use rand::Rng;
use serde::Serialize;
use std::fmt;

/// Outcome of one suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Smallest slack observed; negative beyond tolerance means a failure.
    pub worst_slack: f64,
}

impl SuiteReport {
    fn from_slacks(name: impl Into<String>, slacks: &[f64], tol: f64) -> Self {
        Self {
            name: name.into(),
            cases: slacks.len(),
            failures: slacks.iter().filter(|&&s| !(s >= -tol)).count(),
            worst_slack: slacks.iter().copied().fold(f64::INFINITY, |a, b| if b.is_nan() { f64::NEG_INFINITY } else { a.min(b) }),
        }
    }

    pub fn passed(&self) -> bool {
        self.cases > 0 && self.failures == 0
    }

    pub fn pass_rate(&self) -> f64 {
        if self.cases == 0 {
            0.0
        } else {
            (self.cases - self.failures) as f64 / self.cases as f64
        }
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {}/{} passed ({:.4}%), worst slack {:.3e}",
            self.name,
            self.cases - self.failures,
            self.cases,
            100.0 * self.pass_rate(),
            self.worst_slack
        )
    }
}

mod suite_id {
    pub const GEOMETRY: u64 = 1;
    pub const COSINE: u64 = 2;
    pub const LIPSCHITZ: u64 = 3;
    pub const VARIANCE: u64 = 4;
}

fn case_rng(seed: u64, suite: u64, case: usize) -> StreamRng {
    SeedStream::new(seed).stream(&[tag::SUITE, suite, case as u64])
}

/// Point within `radius` of `center`; a quarter of the draws sit on the sphere
/// of that radius to stress the boundary.
fn ball_point(m: &Geometry, center: &Point, radius: f64, rng: &mut StreamRng) -> Point {
    let r = if rng.random::<f64>() < 0.25 { radius } else { radius * rng.random::<f64>() };
    let v = m.random_tangent(center, r, rng);
    m.exp(center, &v).expect("radius below injectivity radius")
}

fn ball_points(m: &Geometry, diameter: f64, k: usize, rng: &mut StreamRng) -> Vec<Point> {
    let c = m.random_point(rng);
    (0..k).map(|_| ball_point(m, &c, diameter / 2.0, rng)).collect()
}

/// Tangent-length cap used for exp/log round trips.
fn roundtrip_radius(m: &Geometry) -> f64 {
    let inj = m.injectivity_radius();
    if inj.is_finite() {
        0.9 * inj
    } else {
        10.0
    }
}

/// Exp/log round trip, norm consistency, geodesic midpoint and distance
/// symmetry on `cases` random pairs; representative invariance on Grassmann.
pub fn geometry_suite(m: &Geometry, cases: usize, seed: u64, exec: Exec) -> Vec<SuiteReport> {
    let rows: Vec<[f64; 5]> = exec.map(cases, |k| {
        let mut rng = case_rng(seed, suite_id::GEOMETRY, k);
        let x = m.random_point(&mut rng);
        let len = roundtrip_radius(m) * rng.random::<f64>();
        let v = m.random_tangent(&x, len, &mut rng);
        let y = m.exp(&x, &v).expect("tangent below injectivity radius");
        let slack = |f: &dyn Fn() -> Option<f64>| f().unwrap_or(f64::NEG_INFINITY);
        let roundtrip = slack(&|| {
            let back = m.log(&x, &y).ok()?;
            Some(1e-8 * (1.0 + v.norm()) - (back.vec() - v.vec()).norm())
        });
        let norm = slack(&|| Some(1e-9 - (m.log(&x, &y).ok()?.norm() - m.dist(&x, &y).ok()?).abs()));
        let midpoint = slack(&|| {
            let half = m.log(&x, &y).ok()?.scaled(0.5);
            let mid = m.exp(&x, &half).ok()?;
            Some(1e-9 - (m.dist(&x, &mid).ok()? - 0.5 * m.dist(&x, &y).ok()?).abs())
        });
        let symmetry = slack(&|| Some(1e-12 - (m.dist(&x, &y).ok()? - m.dist(&y, &x).ok()?).abs()));
        let representative = match m.kind() {
            ManifoldKind::Grassmann { p, .. } => slack(&|| {
                let q = crate::manifolds::gaussian_matrix(p, p, &mut case_rng(seed, suite_id::GEOMETRY, k + cases)).qr().q();
                let xq = Point::new(m.kind(), x.coords() * q).ok()?;
                Some(1e-10 - (m.dist(&xq, &y).ok()? - m.dist(&x, &y).ok()?).abs())
            }),
            _ => 0.0,
        };
        [roundtrip, norm, midpoint, symmetry, representative]
    });
    let names = ["roundtrip", "norm_consistency", "midpoint", "symmetry", "representative_invariance"];
    let kind = m.kind();
    names
        .iter()
        .enumerate()
        .filter(|(c, _)| *c < 4 || matches!(kind, ManifoldKind::Grassmann { .. }))
        .map(|(c, n)| {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            SuiteReport::from_slacks(format!("{kind} {n}"), &col, 0.0)
        })
        .collect()
}

/// Both cosine-law inequalities on `cases` random triples in a ball of diameter `D`.
pub fn cosine_law_suite(m: &Geometry, consts: &GeometryConstants, cases: usize, seed: u64, exec: Exec) -> [SuiteReport; 2] {
    let rows: Vec<(f64, f64)> = exec.map(cases, |k| {
        let mut rng = case_rng(seed, suite_id::COSINE, k);
        let p = ball_points(m, consts.diameter, 3, &mut rng);
        let c = check_cosine_law(m, consts, &p[0], &p[1], &p[2]);
        (c.slack_upper, c.slack_lower)
    });
    let kind = m.kind();
    [
        SuiteReport::from_slacks(format!("{kind} cosine law upper (C1)"), &rows.iter().map(|r| r.0).collect::<Vec<_>>(), CHECK_TOL),
        SuiteReport::from_slacks(format!("{kind} cosine law lower (C2)"), &rows.iter().map(|r| r.1).collect::<Vec<_>>(), CHECK_TOL),
    ]
}

/// Two-sided log-map Lipschitz bounds on `cases` random triples.
pub fn log_lipschitz_suite(m: &Geometry, consts: &GeometryConstants, cases: usize, seed: u64, exec: Exec) -> SuiteReport {
    let slacks: Vec<f64> = exec.map(cases, |k| {
        let mut rng = case_rng(seed, suite_id::LIPSCHITZ, k);
        let p = ball_points(m, consts.diameter, 3, &mut rng);
        let c = check_log_lipschitz(m, consts, &p[0], &p[1], &p[2]);
        if c.log_gap.is_nan() {
            return f64::NEG_INFINITY;
        }
        let lower = c.log_gap - c.lower_factor * c.dist;
        let upper = c.upper_factor * c.dist - c.log_gap;
        lower.min(upper)
    });
    SuiteReport::from_slacks(format!("{} log-map Lipschitz (C3, C4)", m.kind()), &slacks, CHECK_TOL)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GraphFamily {
    /// Erdős–Rényi with edge probability one half, redrawn per configuration.
    ErHalf,
    Cycle,
}

impl GraphFamily {
    fn mixing(self, n: usize, stream: &SeedStream) -> MixingMatrix {
        let g = match self {
            GraphFamily::ErHalf => gen_er(n, 0.5, stream).expect("ER(n, 1/2) connects quickly"),
            GraphFamily::Cycle => gen_cycle(n).expect("n >= 3"),
        };
        metropolis_weights(&g).expect("connected graph")
    }
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphFamily::ErHalf => "ER(n,0.5)",
            GraphFamily::Cycle => "cycle(n)",
        })
    }
}

/// Network-variance sandwich (lower and upper) and the contraction of one
/// consensus step with `s = C2/(2 C1)`, on `cases` random configurations of
/// `n` agents in a ball of diameter `D` with Metropolis weights.
pub fn variance_suite(
    m: &Geometry,
    consts: &GeometryConstants,
    family: GraphFamily,
    n: usize,
    cases: usize,
    seed: u64,
    exec: Exec,
) -> [SuiteReport; 3] {
    let d2 = consts.diameter * consts.diameter;
    let s = consts.consensus_step();
    let rows: Vec<[f64; 3]> = exec.map(cases, |k| {
        let stream = SeedStream::new(seed).derive(&[tag::SUITE, suite_id::VARIANCE, k as u64]);
        let w = family.mixing(n, &stream);
        let mut rng = stream.stream(&[tag::DATA]);
        // spread the cluster size over the whole admissible range
        let diam = consts.diameter * rng.random::<f64>().max(1e-3);
        let ys = ball_points(m, diam, n, &mut rng);
        let opts = FrechetOptions::default();
        let eval = || -> Option<[f64; 3]> {
            let dis = weighted_disagreement(m, &ys, &w).ok()?;
            let var_y = frechet_mean(m, &ys, None, opts).ok()?.variance;
            let lower = dis / (4.0 * n as f64 * (1.0 + consts.c3 * d2).powi(2));
            let upper = (1.0 + consts.c4 * d2).powi(2) / (2.0 * n as f64 * (1.0 - w.sigma2())) * dis;
            let xs = consensus_step(m, &ys, &w, s, Exec::Serial).ok()?;
            let var_x = frechet_mean(m, &xs, None, opts).ok()?.variance;
            let tc = TheoremConstants::new(consts, w.sigma2(), 0.0, 0.0, n, 1.0).ok()?;
            Some([var_y - lower, upper - var_y, tc.rho1 * var_y - var_x])
        };
        eval().unwrap_or([f64::NEG_INFINITY; 3])
    });
    let kind = m.kind();
    let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<_>>();
    [
        SuiteReport::from_slacks(format!("{kind} {family} variance lower"), &col(0), CHECK_TOL),
        SuiteReport::from_slacks(format!("{kind} {family} variance upper"), &col(1), CHECK_TOL),
        SuiteReport::from_slacks(format!("{kind} {family} consensus contraction"), &col(2), CHECK_TOL),
    ]
}

/// All lemma suites for one manifold specification.
pub fn lemma_suites(spec: &ManifoldSpec, consts: &GeometryConstants, triples: usize, configs: usize, n: usize, seed: u64, exec: Exec) -> Vec<SuiteReport> {
    let m = Geometry::new(spec.kind).expect("validated spec");
    let mut out = Vec::new();
    out.extend(cosine_law_suite(&m, consts, triples, seed, exec));
    out.push(log_lipschitz_suite(&m, consts, triples, seed, exec));
    for fam in [GraphFamily::ErHalf, GraphFamily::Cycle] {
        out.extend(variance_suite(&m, consts, fam, n, configs, seed, exec));
    }
    out
}

/// Manifolds and diameters used by the default certification run.
pub fn default_specs() -> Vec<ManifoldSpec> {
    let mk = |kind, d| Geometry::new(kind).and_then(|g| g.spec(d)).expect("valid built-in spec");
    vec![
        mk(ManifoldKind::Euclidean { d: 3 }, 2.0),
        mk(ManifoldKind::Sphere { d: 2 }, std::f64::consts::FRAC_PI_4),
        mk(ManifoldKind::Grassmann { d: 6, p: 2 }, 1.0),
    ]
}

/// Least-squares slope of `log y` against `log t`.
pub fn loglog_slope(t: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, v)| **v > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
