//! Manifold abstraction and the three concrete geometries.
//!
//! Points and tangent vectors are stored as dense coordinate matrices in an
//! ambient Euclidean space:
//!
//! | geometry        | coordinates                         | tangent space at `x`     |
//! |-----------------|-------------------------------------|--------------------------|
//! | Euclidean(d)    | `d x 1` column                      | all of R^d               |
//! | Sphere(d)       | unit `(d+1) x 1` column             | `{v : <x, v> = 0}`       |
//! | Grassmann(d, p) | `d x p` with orthonormal columns    | `{V : X^T V = 0}`        |
//!
//! All three use the trace inner product `<U, V> = tr(U^T V)` on coordinates.
//! Everything here is a pure function of its inputs; points and tangent
//! vectors are immutable values and are `Send + Sync`.

mod euclidean;
mod grassmann;
mod sphere;

pub use euclidean::Euclidean;
pub use grassmann::{principal_angles, Grassmann};
pub use sphere::Sphere;

use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

pub type Mat = DMatrix<f64>;

/// Tolerance for the unit-norm / orthonormality invariants.
pub const POINT_TOL: f64 = 1e-10;
/// Two base points closer than this (max-abs on coordinates) are the same point.
pub const BASE_TOL: f64 = 1e-12;
/// Grassmann log refuses principal angles above `pi/2 - CUT_LOCUS_MARGIN`.
pub const CUT_LOCUS_MARGIN: f64 = 1e-6;
/// Grassmann representatives are re-orthonormalized when `|X^T X - I|` exceeds this.
pub const REORTH_DRIFT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ManifoldError {
    #[error("tangent vector is not based at the given point")]
    BaseMismatch,
    #[error("manifold mismatch: expected {expected}, found {found}")]
    ManifoldMismatch {
        expected: ManifoldKind,
        found: ManifoldKind,
    },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("tangent norm {norm} is not below the injectivity radius {inj}")]
    InjectivityViolation { norm: f64, inj: f64 },
    #[error("logarithm undefined: {0}")]
    CutLocus(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("invalid manifold specification: {0}")]
    InvalidSpec(String),
}

/// Which manifold a point lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldKind {
    Euclidean { d: usize },
    /// The unit sphere S^d embedded in R^{d+1}.
    Sphere { d: usize },
    /// Grassmann manifold of p-dimensional subspaces of R^d.
    Grassmann { d: usize, p: usize },
}

impl ManifoldKind {
    /// Shape of the coordinate matrix.
    pub fn coord_shape(&self) -> (usize, usize) {
        match *self {
            ManifoldKind::Euclidean { d } => (d, 1),
            ManifoldKind::Sphere { d } => (d + 1, 1),
            ManifoldKind::Grassmann { d, p } => (d, p),
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match *self {
            ManifoldKind::Euclidean { d } | ManifoldKind::Sphere { d } => d,
            ManifoldKind::Grassmann { d, p } => p * (d - p),
        }
    }

    fn validate(&self) -> Result<(), ManifoldError> {
        match *self {
            ManifoldKind::Euclidean { d } | ManifoldKind::Sphere { d } if d == 0 => Err(
                ManifoldError::InvalidSpec("dimension must be positive".into()),
            ),
            ManifoldKind::Grassmann { d, p } if p == 0 || p >= d => Err(ManifoldError::InvalidSpec(
                format!("Grassmann({d},{p}) needs d > p >= 1"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ManifoldKind::Euclidean { d } => write!(f, "Euclidean({d})"),
            ManifoldKind::Sphere { d } => write!(f, "Sphere({d})"),
            ManifoldKind::Grassmann { d, p } => write!(f, "Grassmann({d},{p})"),
        }
    }
}

/// A point on a manifold, stored by its ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    kind: ManifoldKind,
    coords: Mat,
}

impl Point {
    /// Wraps coordinates after checking shape and the manifold invariant
    /// (unit norm on the sphere, orthonormal columns on the Grassmann).
    pub fn new(kind: ManifoldKind, coords: Mat) -> Result<Self, ManifoldError> {
        let expected = kind.coord_shape();
        if coords.shape() != expected {
            return Err(ManifoldError::ShapeMismatch {
                expected,
                found: coords.shape(),
            });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(ManifoldError::InvalidPoint("non-finite coordinate".into()));
        }
        let p = Self { kind, coords };
        let drift = p.invariant_drift();
        if drift > POINT_TOL {
            return Err(ManifoldError::InvalidPoint(format!(
                "{kind} invariant violated by {drift:e}"
            )));
        }
        Ok(p)
    }

    /// Builds a point from arbitrary (full-rank) coordinates by normalizing
    /// (sphere) or orthonormalizing via QR (Grassmann).
    pub fn normalized(kind: ManifoldKind, coords: Mat) -> Result<Self, ManifoldError> {
        let coords = match kind {
            ManifoldKind::Euclidean { .. } => coords,
            ManifoldKind::Sphere { .. } => {
                let n = coords.norm();
                if n == 0.0 {
                    return Err(ManifoldError::InvalidPoint("zero vector".into()));
                }
                coords / n
            }
            ManifoldKind::Grassmann { .. } => orthonormalize(coords),
        };
        Self::new(kind, coords)
    }

    pub(crate) fn from_raw(kind: ManifoldKind, coords: Mat) -> Self {
        debug_assert_eq!(coords.shape(), kind.coord_shape());
        Self { kind, coords }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn coords(&self) -> &Mat {
        &self.coords
    }

    pub fn into_coords(self) -> Mat {
        self.coords
    }

    /// How far the coordinates are from satisfying the manifold invariant.
    pub fn invariant_drift(&self) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean { .. } => 0.0,
            ManifoldKind::Sphere { .. } => (self.coords.norm() - 1.0).abs(),
            ManifoldKind::Grassmann { p, .. } => {
                let g = self.coords.transpose() * &self.coords;
                (g - Mat::identity(p, p)).amax()
            }
        }
    }

    /// Same manifold and numerically identical coordinates.
    pub fn same_as(&self, other: &Point) -> bool {
        self.kind == other.kind && (&self.coords - &other.coords).amax() <= BASE_TOL
    }
}

/// A tangent vector together with its base point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    base: Point,
    vec: Mat,
}

impl TangentVector {
    pub(crate) fn from_raw(base: Point, vec: Mat) -> Self {
        debug_assert_eq!(base.coords.shape(), vec.shape());
        Self { base, vec }
    }

    pub fn zero(base: &Point) -> Self {
        let (r, c) = base.coords.shape();
        Self {
            base: base.clone(),
            vec: Mat::zeros(r, c),
        }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn vec(&self) -> &Mat {
        &self.vec
    }

    pub fn into_vec(self) -> Mat {
        self.vec
    }

    /// Norm induced by the trace inner product.
    pub fn norm(&self) -> f64 {
        self.vec.norm()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            base: self.base.clone(),
            vec: &self.vec * a,
        }
    }

    /// `self + other`; both must share a base point.
    pub fn add(&self, other: &TangentVector) -> Result<Self, ManifoldError> {
        if !self.base.same_as(&other.base) {
            return Err(ManifoldError::BaseMismatch);
        }
        Ok(Self {
            base: self.base.clone(),
            vec: &self.vec + &other.vec,
        })
    }

    pub fn sub(&self, other: &TangentVector) -> Result<Self, ManifoldError> {
        self.add(&other.scaled(-1.0))
    }

    /// Largest violation of the tangency condition at the base point.
    pub fn tangency_drift(&self) -> f64 {
        match self.base.kind {
            ManifoldKind::Euclidean { .. } => 0.0,
            ManifoldKind::Sphere { .. } => self.base.coords.dot(&self.vec).abs(),
            ManifoldKind::Grassmann { .. } => (self.base.coords.transpose() * &self.vec).amax(),
        }
    }
}

/// Geometry of one manifold: exponential and logarithm maps, distance,
/// metric, tangent projection and sampling.
pub trait Manifold: Send + Sync {
    fn kind(&self) -> ManifoldKind;

    /// Sectional curvature bounds `(K_min, K_max)`.
    fn curvature_bounds(&self) -> (f64, f64);

    fn injectivity_radius(&self) -> f64;

    /// Endpoint of the geodesic leaving `x` with velocity `v`.
    fn exp(&self, x: &Point, v: &TangentVector) -> Result<Point, ManifoldError>;

    /// Inverse of `exp`: the tangent at `x` pointing to `y` with length `dist(x, y)`.
    fn log(&self, x: &Point, y: &Point) -> Result<TangentVector, ManifoldError>;

    fn dist(&self, x: &Point, y: &Point) -> Result<f64, ManifoldError>;

    /// Orthogonal projection of an ambient matrix onto `T_x M`.
    fn project_tangent(&self, x: &Point, w: &Mat) -> Result<TangentVector, ManifoldError>;

    fn random_point(&self, rng: &mut dyn RngCore) -> Point;

    fn inner(&self, x: &Point, u: &TangentVector, v: &TangentVector) -> Result<f64, ManifoldError> {
        self.check_point(x)?;
        if !u.base.same_as(x) || !v.base.same_as(x) {
            return Err(ManifoldError::BaseMismatch);
        }
        Ok(u.vec.dot(&v.vec))
    }

    /// Tangent vector at `x` of exactly `norm`, in a uniformly random direction.
    fn random_tangent(&self, x: &Point, norm: f64, rng: &mut dyn RngCore) -> TangentVector {
        if norm == 0.0 {
            return TangentVector::zero(x);
        }
        loop {
            let w = gaussian_matrix(x.coords.nrows(), x.coords.ncols(), rng);
            let t = self
                .project_tangent(x, &w)
                .expect("shape taken from the point itself");
            let n = t.norm();
            if n > 1e-8 {
                return t.scaled(norm / n);
            }
        }
    }

    /// Random point within geodesic distance `radius` of `center`.
    fn random_point_near(
        &self,
        center: &Point,
        radius: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Point, ManifoldError> {
        let r = radius * rand::Rng::random::<f64>(rng);
        let v = self.random_tangent(center, r, rng);
        self.exp(center, &v)
    }

    fn check_point(&self, x: &Point) -> Result<(), ManifoldError> {
        if x.kind != self.kind() {
            return Err(ManifoldError::ManifoldMismatch {
                expected: self.kind(),
                found: x.kind,
            });
        }
        Ok(())
    }

    fn check_base(&self, x: &Point, v: &TangentVector) -> Result<(), ManifoldError> {
        self.check_point(x)?;
        if !v.base.same_as(x) {
            return Err(ManifoldError::BaseMismatch);
        }
        Ok(())
    }
}

/// Runtime-selected geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Geometry {
    Euclidean(Euclidean),
    Sphere(Sphere),
    Grassmann(Grassmann),
}

impl Geometry {
    pub fn new(kind: ManifoldKind) -> Result<Self, ManifoldError> {
        kind.validate()?;
        Ok(match kind {
            ManifoldKind::Euclidean { d } => Geometry::Euclidean(Euclidean::new(d)),
            ManifoldKind::Sphere { d } => Geometry::Sphere(Sphere::new(d)),
            ManifoldKind::Grassmann { d, p } => Geometry::Grassmann(Grassmann::new(d, p)),
        })
    }

    fn inner_manifold(&self) -> &dyn Manifold {
        match self {
            Geometry::Euclidean(m) => m,
            Geometry::Sphere(m) => m,
            Geometry::Grassmann(m) => m,
        }
    }

    /// Built-in curvature bounds and injectivity radius, with domain diameter `diameter`.
    pub fn spec(&self, diameter: f64) -> Result<ManifoldSpec, ManifoldError> {
        let (k_min, k_max) = self.curvature_bounds();
        ManifoldSpec::new(self.kind(), k_min, k_max, self.injectivity_radius(), diameter)
    }
}

impl Manifold for Geometry {
    fn kind(&self) -> ManifoldKind {
        self.inner_manifold().kind()
    }
    fn curvature_bounds(&self) -> (f64, f64) {
        self.inner_manifold().curvature_bounds()
    }
    fn injectivity_radius(&self) -> f64 {
        self.inner_manifold().injectivity_radius()
    }
    fn exp(&self, x: &Point, v: &TangentVector) -> Result<Point, ManifoldError> {
        self.inner_manifold().exp(x, v)
    }
    fn log(&self, x: &Point, y: &Point) -> Result<TangentVector, ManifoldError> {
        self.inner_manifold().log(x, y)
    }
    fn dist(&self, x: &Point, y: &Point) -> Result<f64, ManifoldError> {
        self.inner_manifold().dist(x, y)
    }
    fn project_tangent(&self, x: &Point, w: &Mat) -> Result<TangentVector, ManifoldError> {
        self.inner_manifold().project_tangent(x, w)
    }
    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        self.inner_manifold().random_point(rng)
    }
}

/// Manifold plus the curvature and diameter data the comparison constants need.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub k_min: f64,
    pub k_max: f64,
    /// Injectivity radius over the domain; `f64::INFINITY` for flat space.
    pub inj: f64,
    /// Diameter cap `D` of the domain.
    pub diameter: f64,
}

impl ManifoldSpec {
    pub fn new(
        kind: ManifoldKind,
        k_min: f64,
        k_max: f64,
        inj: f64,
        diameter: f64,
    ) -> Result<Self, ManifoldError> {
        let spec = Self {
            kind,
            k_min,
            k_max,
            inj,
            diameter,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ManifoldError> {
        self.kind.validate()?;
        let bad = |m: String| Err(ManifoldError::InvalidSpec(m));
        if !(self.k_min <= self.k_max) {
            return bad(format!("K_min {} > K_max {}", self.k_min, self.k_max));
        }
        if !(self.diameter > 0.0) {
            return bad(format!("diameter {} must be positive", self.diameter));
        }
        if !(self.diameter < self.inj) {
            return bad(format!(
                "diameter {} must be below the injectivity radius {}",
                self.diameter, self.inj
            ));
        }
        if self.k_max > 0.0 {
            let cap = PI / (2.0 * self.k_max.sqrt());
            if !(self.diameter < cap) {
                return bad(format!(
                    "diameter {} must be below pi/(2 sqrt(K_max)) = {cap}",
                    self.diameter
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn gaussian_matrix(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Thin-QR orthonormal basis of the column span.
pub(crate) fn orthonormalize(m: Mat) -> Mat {
    m.qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn geometries() -> Vec<Geometry> {
        [
            ManifoldKind::Euclidean { d: 4 },
            ManifoldKind::Sphere { d: 3 },
            ManifoldKind::Grassmann { d: 6, p: 2 },
        ]
        .into_iter()
        .map(|k| Geometry::new(k).unwrap())
        .collect()
    }

    #[test]
    fn point_constructor_enforces_invariants() {
        let s = ManifoldKind::Sphere { d: 2 };
        assert!(Point::new(s, Mat::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).is_ok());
        assert!(matches!(
            Point::new(s, Mat::from_column_slice(3, 1, &[1.0, 1.0, 0.0])),
            Err(ManifoldError::InvalidPoint(_))
        ));
        assert!(matches!(
            Point::new(s, Mat::zeros(2, 1)),
            Err(ManifoldError::ShapeMismatch { .. })
        ));
        let g = ManifoldKind::Grassmann { d: 3, p: 2 };
        let p = Point::normalized(g, Mat::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        assert!(p.invariant_drift() < 1e-14);
    }

    #[test]
    fn invalid_kinds_rejected() {
        assert!(Geometry::new(ManifoldKind::Grassmann { d: 3, p: 3 }).is_err());
        assert!(Geometry::new(ManifoldKind::Sphere { d: 0 }).is_err());
    }

    #[test]
    fn spec_invariants() {
        let sphere = Geometry::new(ManifoldKind::Sphere { d: 2 }).unwrap();
        assert!(sphere.spec(PI / 4.0).is_ok());
        // D must stay below pi / (2 sqrt(K_max)) = pi/2 on the unit sphere
        assert!(sphere.spec(PI / 2.0).is_err());
        let gr = Geometry::new(ManifoldKind::Grassmann { d: 5, p: 2 }).unwrap();
        assert!(gr.spec(1.0).is_ok());
        assert!(gr.spec(1.2).is_err());
        let flat = Geometry::new(ManifoldKind::Euclidean { d: 2 }).unwrap();
        assert!(flat.spec(1e6).is_ok());
        assert!(flat.spec(0.0).is_err());
        assert!(ManifoldSpec::new(ManifoldKind::Euclidean { d: 1 }, 1.0, 0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn exp_of_zero_is_identity_and_log_of_self_is_zero() {
        let mut rng = SeedStream::new(1).rng();
        for m in geometries() {
            let x = m.random_point(&mut rng);
            let y = m.exp(&x, &TangentVector::zero(&x)).unwrap();
            assert!((y.coords() - x.coords()).amax() < 1e-15, "{}", m.kind());
            assert_eq!(m.log(&x, &x).unwrap().norm(), 0.0);
            assert_eq!(m.dist(&x, &x).unwrap(), 0.0);
        }
    }

    #[test]
    fn base_mismatch_detected() {
        let mut rng = SeedStream::new(2).rng();
        for m in geometries() {
            let x = m.random_point(&mut rng);
            let y = m.random_point(&mut rng);
            let v = m.random_tangent(&y, 0.1, &mut rng);
            assert_eq!(m.exp(&x, &v), Err(ManifoldError::BaseMismatch));
            let u = m.random_tangent(&x, 0.1, &mut rng);
            assert_eq!(m.inner(&x, &u, &v), Err(ManifoldError::BaseMismatch));
        }
    }

    #[test]
    fn manifold_mismatch_detected() {
        let mut rng = SeedStream::new(3).rng();
        let s = Geometry::new(ManifoldKind::Sphere { d: 3 }).unwrap();
        let e = Geometry::new(ManifoldKind::Euclidean { d: 4 }).unwrap();
        let x = s.random_point(&mut rng);
        let y = e.random_point(&mut rng);
        assert!(matches!(s.dist(&x, &y), Err(ManifoldError::ManifoldMismatch { .. })));
    }

    #[test]
    fn inner_product_basics() {
        let mut rng = SeedStream::new(4).rng();
        for m in geometries() {
            let x = m.random_point(&mut rng);
            for _ in 0..200 {
                let u = m.random_tangent(&x, 0.7, &mut rng);
                let v = m.random_tangent(&x, 1.3, &mut rng);
                let uv = m.inner(&x, &u, &v).unwrap();
                assert!((uv - m.inner(&x, &v, &u).unwrap()).abs() < 1e-15);
                assert!(uv.abs() <= u.norm() * v.norm() + 1e-12);
                assert!((m.inner(&x, &v, &v).unwrap() - v.norm().powi(2)).abs() < 1e-12);
                assert_eq!(m.inner(&x, &v, &TangentVector::zero(&x)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn projection_is_idempotent_and_orthogonal() {
        let mut rng = SeedStream::new(5).rng();
        for m in geometries() {
            let x = m.random_point(&mut rng);
            let (r, c) = x.coords().shape();
            for _ in 0..50 {
                let w = gaussian_matrix(r, c, &mut rng);
                let t = m.project_tangent(&x, &w).unwrap();
                assert!(t.tangency_drift() < 1e-12);
                let tt = m.project_tangent(&x, t.vec()).unwrap();
                assert!((tt.vec() - t.vec()).amax() < 1e-12);
                // the discarded component is normal: orthogonal to every tangent
                let normal = &w - t.vec();
                let probe = m.random_tangent(&x, 1.0, &mut rng);
                assert!(normal.dot(probe.vec()).abs() < 1e-12);
            }
            assert!(m.project_tangent(&x, &Mat::zeros(r + 1, c)).is_err());
        }
    }

    #[test]
    fn random_tangent_has_requested_norm() {
        let mut rng = SeedStream::new(6).rng();
        for m in geometries() {
            let x = m.random_point(&mut rng);
            assert_eq!(m.random_tangent(&x, 0.0, &mut rng).norm(), 0.0);
            let v = m.random_tangent(&x, 0.5, &mut rng);
            assert!((v.norm() - 0.5).abs() < 1e-12);
            assert!(v.tangency_drift() < 1e-12);
        }
    }

    #[test]
    fn tangent_arithmetic_requires_common_base() {
        let mut rng = SeedStream::new(7).rng();
        let m = Geometry::new(ManifoldKind::Sphere { d: 2 }).unwrap();
        let x = m.random_point(&mut rng);
        let u = m.random_tangent(&x, 1.0, &mut rng);
        let d = u.sub(&u).unwrap();
        assert_eq!(d.norm(), 0.0);
        let y = m.random_point(&mut rng);
        assert!(u.add(&m.random_tangent(&y, 1.0, &mut rng)).is_err());
    }
}
