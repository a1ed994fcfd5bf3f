//! Comparison-geometry constants, theorem constants, step-size schedules and
//! the theoretical consensus / optimality-gap bounds.
//!
//! The constants `C1..C4` enter two comparison inequalities that every
//! downstream bound depends on:
//!
//! ```text
//! cosine law:   C2 d²(b,c) + d²(a,b) - 2<log_b a, log_b c>
//!                   <= d²(a,c) <=
//!               C1 d²(b,c) + d²(a,b) - 2<log_b a, log_b c>
//!
//! log map:      d(y,z) / (1 + C3 D²) <= |log_x y - log_x z| <= (1 + C4 D²) d(y,z)
//! ```
//!
//! [`check_cosine_law`] and [`check_log_lipschitz`] evaluate them on concrete
//! triples; the Monte-Carlo drivers in [`crate::suites`] use them to certify a
//! set of constants before bounds are reported.

use crate::manifolds::{Manifold, ManifoldSpec, Point};
use serde::Serialize;
use std::f64::consts::PI;

/// Slack tolerance of the inequality checkers.
pub const CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurvatureError {
    #[error("domain diameter {diameter} is not below pi/(2 sqrt(K_max)) = {cap}")]
    DomainTooLarge { diameter: f64, cap: f64 },
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeometryConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub diameter: f64,
    pub k_min: f64,
    pub k_max: f64,
}

impl GeometryConstants {
    /// Constants supplied by hand. Only the structural invariants are checked
    /// here; whether the inequalities actually hold is for the suites to say.
    pub fn manual(
        spec: &ManifoldSpec,
        c1: f64,
        c2: f64,
        c3: f64,
        c4: f64,
    ) -> Result<Self, CurvatureError> {
        let g = Self {
            c1,
            c2,
            c3,
            c4,
            diameter: spec.diameter,
            k_min: spec.k_min,
            k_max: spec.k_max,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), CurvatureError> {
        let bad = |m: String| Err(CurvatureError::InvalidConstants(m));
        if !(self.c1 >= 1.0) {
            return bad(format!("C1 = {} must be >= 1", self.c1));
        }
        if !(self.c2 > 0.0 && self.c2 <= 1.0) {
            return bad(format!("C2 = {} must lie in (0, 1]", self.c2));
        }
        if !(self.c3 >= 0.0 && self.c4 >= 0.0) {
            return bad(format!("C3 = {}, C4 = {} must be >= 0", self.c3, self.c4));
        }
        Ok(())
    }

    /// Consensus step `s = C2 / (2 C1)`, always in `(0, 1/2]`.
    pub fn consensus_step(&self) -> f64 {
        self.c2 / (2.0 * self.c1)
    }
}

/// Standard comparison constants for curvature in `[K_min, K_max]` on a
/// domain of diameter `D`:
///
/// * `C1 = sqrt|K_min| D coth(sqrt|K_min| D)` if `K_min < 0`, else 1
/// * `C2 = sqrt(K_max) D cot(sqrt(K_max) D)` if `K_max > 0`, else 1
/// * `C3 = C4 = max(|K_min|, K_max)`
pub fn compute_constants(spec: &ManifoldSpec) -> Result<GeometryConstants, CurvatureError> {
    let d = spec.diameter;
    if spec.k_max > 0.0 {
        let cap = PI / (2.0 * spec.k_max.sqrt());
        if !(d < cap) {
            return Err(CurvatureError::DomainTooLarge { diameter: d, cap });
        }
    }
    let c1 = if spec.k_min < 0.0 {
        let a = spec.k_min.abs().sqrt() * d;
        a / a.tanh()
    } else {
        1.0
    };
    let c2 = if spec.k_max > 0.0 {
        let a = spec.k_max.sqrt() * d;
        a / a.tan()
    } else {
        1.0
    };
    let c34 = spec.k_min.abs().max(spec.k_max);
    let g = GeometryConstants {
        c1,
        c2,
        c3: c34,
        c4: c34,
        diameter: d,
        k_min: spec.k_min,
        k_max: spec.k_max,
    };
    g.validate()?;
    Ok(g)
}

/// Constants of the consensus and optimality-gap theorems for one network and
/// one problem instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoremConstants {
    pub xi: f64,
    pub c_of_xi: f64,
    pub b: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub s: f64,
    pub eta0: f64,
    pub sigma2_w: f64,
    pub delta: f64,
    pub sigma: f64,
    pub n: usize,
    pub g: f64,
    pub geometry: GeometryConstants,
}

impl TheoremConstants {
    /// * `sigma2_w`: second largest singular value of the mixing matrix
    /// * `delta`: bound on `|grad f_i|`
    /// * `sigma`: bound on the oracle's conditional standard deviation
    /// * `g`: almost-sure bound on the stochastic gradient norm
    pub fn new(
        geometry: &GeometryConstants,
        sigma2_w: f64,
        delta: f64,
        sigma: f64,
        n: usize,
        g: f64,
    ) -> Result<Self, CurvatureError> {
        geometry.validate()?;
        if !(0.0..1.0).contains(&sigma2_w) {
            return Err(CurvatureError::InvalidConstants(format!(
                "sigma2(W) = {sigma2_w} must lie in [0, 1)"
            )));
        }
        if !(g > 0.0) || delta < 0.0 || sigma < 0.0 || n == 0 {
            return Err(CurvatureError::InvalidConstants(format!(
                "need G > 0, delta >= 0, sigma >= 0, n >= 1 (got G={g}, delta={delta}, sigma={sigma}, n={n})"
            )));
        }
        let GeometryConstants {
            c1, c2, c4, diameter, ..
        } = *geometry;
        let xi = c2.powi(3) * (1.0 - sigma2_w) / (4.0 * c1 * (1.0 + c4 * diameter * diameter).powi(2));
        let c_of_xi = (1.0 + xi * xi) / xi.powi(4);
        let b = (1.0 - xi) * (2.0 * c1 * (sigma * sigma + delta * delta) + delta * delta / xi);
        Ok(Self {
            xi,
            c_of_xi,
            b,
            rho1: 1.0 - xi,
            rho2: 1.0 - xi * xi,
            s: geometry.consensus_step(),
            eta0: 1f64.min(diameter / g),
            sigma2_w,
            delta,
            sigma,
            n,
            g,
            geometry: *geometry,
        })
    }
}

/// `eta_t = eta0 / sqrt(t)`.
pub fn step_schedule(eta0: f64, t: usize) -> f64 {
    debug_assert!(t >= 1);
    eta0 / (t as f64).sqrt()
}

/// `s = C2 / (2 C1)`.
pub fn consensus_step(consts: &GeometryConstants) -> f64 {
    consts.consensus_step()
}

/// Upper bound on `sum_i E d²(x_i^t, xbar^t)`: `eta0² C(xi) n B / t`.
pub fn consensus_bound(tc: &TheoremConstants, t: usize) -> f64 {
    debug_assert!(t >= 1);
    tc.eta0 * tc.eta0 * tc.c_of_xi * tc.n as f64 * tc.b / t as f64
}

/// Upper bound on the `eta`-weighted ergodic gap `sum eta_t (f(xbar^t) - f*) / sum eta_t`
/// at horizon `horizon`, given the mean initial squared distance to the optimum.
pub fn gap_bound(tc: &TheoremConstants, horizon: usize, init_dist_sq_mean: f64) -> f64 {
    debug_assert!(horizon >= 1);
    let t = horizon as f64;
    let sq = t.sqrt();
    let noise = tc.sigma * tc.sigma + tc.delta * tc.delta;
    init_dist_sq_mean / (2.0 * tc.eta0 * sq)
        + tc.eta0
            * (tc.delta * (tc.c_of_xi * tc.b).sqrt() + tc.geometry.c1 * noise)
            * (1.0 + t.ln())
            / sq
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineLawCheck {
    pub upper_ok: bool,
    pub lower_ok: bool,
    /// RHS - LHS of the upper inequality.
    pub slack_upper: f64,
    /// LHS - RHS of the lower inequality.
    pub slack_lower: f64,
}

impl CosineLawCheck {
    pub fn ok(&self) -> bool {
        self.upper_ok && self.lower_ok
    }

    fn failed() -> Self {
        Self {
            upper_ok: false,
            lower_ok: false,
            slack_upper: f64::NEG_INFINITY,
            slack_lower: f64::NEG_INFINITY,
        }
    }
}

/// Evaluates both cosine-law comparison inequalities for the triangle
/// `(a, b, c)`. A failing log map is reported as a failed check.
pub fn check_cosine_law<M: Manifold + ?Sized>(
    m: &M,
    consts: &GeometryConstants,
    a: &Point,
    b: &Point,
    c: &Point,
) -> CosineLawCheck {
    let eval = || -> Result<CosineLawCheck, crate::manifolds::ManifoldError> {
        let ac2 = m.dist(a, c)?.powi(2);
        let bc2 = m.dist(b, c)?.powi(2);
        let ab2 = m.dist(a, b)?.powi(2);
        let la = m.log(b, a)?;
        let lc = m.log(b, c)?;
        let cross = 2.0 * m.inner(b, &la, &lc)?;
        let slack_upper = consts.c1 * bc2 + ab2 - cross - ac2;
        let slack_lower = ac2 - (consts.c2 * bc2 + ab2 - cross);
        Ok(CosineLawCheck {
            upper_ok: slack_upper >= -CHECK_TOL,
            lower_ok: slack_lower >= -CHECK_TOL,
            slack_upper,
            slack_lower,
        })
    };
    eval().unwrap_or_else(|_| CosineLawCheck::failed())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLipschitzCheck {
    pub ok: bool,
    /// `|log_x y - log_x z|`.
    pub log_gap: f64,
    /// `d(y, z)`.
    pub dist: f64,
    /// `log_gap / dist`, NaN when `y = z`.
    pub ratio: f64,
    /// `1 / (1 + C3 D²)`.
    pub lower_factor: f64,
    /// `1 + C4 D²`.
    pub upper_factor: f64,
}

/// Checks the two-sided Lipschitz bound of `log_x` between `y` and `z`.
pub fn check_log_lipschitz<M: Manifold + ?Sized>(
    m: &M,
    consts: &GeometryConstants,
    x: &Point,
    y: &Point,
    z: &Point,
) -> LogLipschitzCheck {
    let d2 = consts.diameter * consts.diameter;
    let lower_factor = 1.0 / (1.0 + consts.c3 * d2);
    let upper_factor = 1.0 + consts.c4 * d2;
    let eval = || -> Result<(f64, f64), crate::manifolds::ManifoldError> {
        let ly = m.log(x, y)?;
        let lz = m.log(x, z)?;
        Ok(((ly.vec() - lz.vec()).norm(), m.dist(y, z)?))
    };
    match eval() {
        Ok((log_gap, dist)) => LogLipschitzCheck {
            ok: lower_factor * dist - CHECK_TOL <= log_gap && log_gap <= upper_factor * dist + CHECK_TOL,
            log_gap,
            dist,
            ratio: if dist > 0.0 { log_gap / dist } else { f64::NAN },
            lower_factor,
            upper_factor,
        },
        Err(_) => LogLipschitzCheck {
            ok: false,
            log_gap: f64::NAN,
            dist: f64::NAN,
            ratio: f64::NAN,
            lower_factor,
            upper_factor,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{Geometry, ManifoldKind};
    use crate::rng::SeedStream;
    use std::f64::consts::FRAC_PI_4;

    fn sphere_spec() -> (Geometry, ManifoldSpec) {
        let g = Geometry::new(ManifoldKind::Sphere { d: 2 }).unwrap();
        let spec = g.spec(FRAC_PI_4).unwrap();
        (g, spec)
    }

    #[test]
    fn flat_constants_degenerate() {
        let g = Geometry::new(ManifoldKind::Euclidean { d: 3 }).unwrap();
        let c = compute_constants(&g.spec(5.0).unwrap()).unwrap();
        assert_eq!((c.c1, c.c2, c.c3, c.c4), (1.0, 1.0, 0.0, 0.0));
        assert_eq!(consensus_step(&c), 0.5);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn sphere_quarter_pi_constants() {
        let (_, spec) = sphere_spec();
        let c = compute_constants(&spec).unwrap();
        assert_eq!(c.c1, 1.0);
        // (pi/4) cot(pi/4) = pi/4
        assert!((c.c2 - FRAC_PI_4).abs() < 1e-15);
        assert!((c.c2 - 0.785_398_163_397_448_3).abs() < 1e-15);
        assert_eq!((c.c3, c.c4), (1.0, 1.0));
        assert!((c.consensus_step() - 0.392_699_081_698_724_1).abs() < 1e-15);
    }

    #[test]
    fn negative_curvature_c1_above_one() {
        let spec = ManifoldSpec::new(ManifoldKind::Euclidean { d: 2 }, -1.0, 0.0, f64::INFINITY, 1.0).unwrap();
        let c = compute_constants(&spec).unwrap();
        assert!((c.c1 - 1.0 / 1f64.tanh()).abs() < 1e-15);
        assert_eq!(c.c2, 1.0);
    }

    #[test]
    fn domain_too_large_rejected() {
        let mut spec = sphere_spec().1;
        spec.diameter = 1.6;
        assert!(matches!(compute_constants(&spec), Err(CurvatureError::DomainTooLarge { .. })));
    }

    #[test]
    fn manual_constants_validated() {
        let spec = sphere_spec().1;
        assert!(GeometryConstants::manual(&spec, 0.9, 0.5, 1.0, 1.0).is_err());
        assert!(GeometryConstants::manual(&spec, 1.0, 1.5, 1.0, 1.0).is_err());
        assert!(GeometryConstants::manual(&spec, 1.0, 0.5, -1.0, 1.0).is_err());
        assert!(GeometryConstants::manual(&spec, 1.2, 0.5, 1.0, 1.0).is_ok());
    }

    #[test]
    fn c_of_xi_at_one_half_is_twenty() {
        // pick C2 so that xi = 1/2 exactly with C1 = 1, C4 = 0, sigma2 = 0: C2^3 / 4 = 1/2
        let geo = GeometryConstants {
            c1: 1.0,
            c2: 2f64.cbrt(),
            c3: 0.0,
            c4: 0.0,
            diameter: 1.0,
            k_min: 0.0,
            k_max: 0.0,
        };
        // c2 > 1 is outside the valid range, so bypass validation through the formula
        let xi = geo.c2.powi(3) / 4.0;
        assert!((xi - 0.5).abs() < 1e-15);
        assert!(((1.0 + xi * xi) / xi.powi(4) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn theorem_constant_formulas() {
        let (_, spec) = sphere_spec();
        let geo = compute_constants(&spec).unwrap();
        let tc = TheoremConstants::new(&geo, 0.6, 0.4, 0.2, 10, 0.8).unwrap();
        let d2 = FRAC_PI_4 * FRAC_PI_4;
        let xi = FRAC_PI_4.powi(3) * 0.4 / (4.0 * (1.0 + d2).powi(2));
        assert!((tc.xi - xi).abs() < 1e-15);
        assert!(tc.xi > 0.0 && tc.xi < 1.0);
        assert!((tc.rho1 - (1.0 - xi)).abs() < 1e-15);
        assert!((tc.rho2 - (1.0 - xi * xi)).abs() < 1e-15);
        let b = (1.0 - xi) * (2.0 * (0.04 + 0.16) + 0.16 / xi);
        assert!((tc.b - b).abs() < 1e-12 * b);
        assert!((tc.eta0 - 1f64.min(FRAC_PI_4 / 0.8)).abs() < 1e-15);
        assert!(tc.s * spec.diameter < spec.inj);
        assert!(tc.eta0 * tc.g <= spec.diameter + 1e-15);
        assert!(TheoremConstants::new(&geo, 1.0, 0.4, 0.2, 10, 0.8).is_err());
        assert!(TheoremConstants::new(&geo, 0.5, 0.4, 0.2, 10, 0.0).is_err());
    }

    #[test]
    fn consensus_bound_scales_as_one_over_t() {
        let geo = compute_constants(&sphere_spec().1).unwrap();
        let tc = TheoremConstants::new(&geo, 0.3, 0.5, 0.1, 7, 1.0).unwrap();
        for t in [1usize, 3, 17, 1000] {
            assert!((consensus_bound(&tc, t) / consensus_bound(&tc, 2 * t) - 2.0).abs() < 1e-12);
        }
        let expected = tc.eta0.powi(2) * tc.c_of_xi * 7.0 * tc.b / 5.0;
        assert!((consensus_bound(&tc, 5) - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn gap_bound_structure() {
        let geo = compute_constants(&sphere_spec().1).unwrap();
        let tc = TheoremConstants::new(&geo, 0.3, 0.5, 0.1, 4, 1.0).unwrap();
        let at_one = tc.eta0 * (tc.delta * (tc.c_of_xi * tc.b).sqrt() + tc.geometry.c1 * (0.01 + 0.25));
        assert!((gap_bound(&tc, 1, 0.0) - at_one).abs() < 1e-12 * at_one);
        for t in [1usize, 10, 1000] {
            let shift = gap_bound(&tc, t, 0.6) - gap_bound(&tc, t, 0.3);
            let expected = 0.3 / (2.0 * tc.eta0 * (t as f64).sqrt());
            assert!((shift - expected).abs() < 1e-9 * gap_bound(&tc, t, 0.6));
        }
        let mut prev = gap_bound(&tc, 8, 0.2);
        let mut t = 8usize;
        while t < 1_000_000 {
            t = (t as f64 * 1.1).ceil() as usize;
            let cur = gap_bound(&tc, t, 0.2);
            assert!(cur < prev, "not decreasing at T = {t}");
            prev = cur;
        }
    }

    #[test]
    fn step_schedule_values() {
        assert_eq!(step_schedule(0.3, 1), 0.3);
        assert_eq!(step_schedule(0.3, 4), 0.15);
    }

    #[test]
    fn degenerate_triangles_pass() {
        let (g, spec) = sphere_spec();
        let consts = compute_constants(&spec).unwrap();
        let mut rng = SeedStream::new(9).rng();
        let center = g.random_point(&mut rng);
        for _ in 0..100 {
            let a = g.random_point_near(&center, FRAC_PI_4 / 2.0, &mut rng).unwrap();
            let c = g.random_point_near(&center, FRAC_PI_4 / 2.0, &mut rng).unwrap();
            assert!(check_cosine_law(&g, &consts, &a, &a, &c).ok());
            let y = check_log_lipschitz(&g, &consts, &a, &c, &c);
            assert!(y.ok && y.log_gap == 0.0);
            let x = check_log_lipschitz(&g, &consts, &a, &a, &c);
            assert!(x.ok && (x.ratio - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_cosine_law_is_exact() {
        let g = Geometry::new(ManifoldKind::Euclidean { d: 3 }).unwrap();
        let consts = compute_constants(&g.spec(10.0).unwrap()).unwrap();
        let mut rng = SeedStream::new(10).rng();
        for _ in 0..200 {
            let (a, b, c) = (g.random_point(&mut rng), g.random_point(&mut rng), g.random_point(&mut rng));
            let r = check_cosine_law(&g, &consts, &a, &b, &c);
            assert!(r.slack_upper.abs() < 1e-12 && r.slack_lower.abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_constants_are_caught() {
        // C2 = 1 is too optimistic on the sphere: the lower inequality must fail somewhere
        let (g, spec) = sphere_spec();
        let mut consts = compute_constants(&spec).unwrap();
        consts.c2 = 1.0;
        let mut rng = SeedStream::new(12).rng();
        let center = g.random_point(&mut rng);
        let mut failures = 0;
        for _ in 0..500 {
            let p: Vec<Point> = (0..3)
                .map(|_| g.random_point_near(&center, FRAC_PI_4 / 2.0, &mut rng).unwrap())
                .collect();
            if !check_cosine_law(&g, &consts, &p[0], &p[1], &p[2]).lower_ok {
                failures += 1;
            }
        }
        assert!(failures > 0);
    }
}
