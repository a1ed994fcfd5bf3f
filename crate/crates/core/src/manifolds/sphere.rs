use super::euclidean::check_shape;
use super::{gaussian_matrix, Manifold, ManifoldError, ManifoldKind, Mat, Point, TangentVector};
use rand::RngCore;
use std::f64::consts::PI;

/// Unit sphere S^d in R^{d+1}, curvature identically 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sphere {
    d: usize,
}

/// `log` refuses pairs with `<x, y>` below `-1 + ANTIPODAL_TOL`.
const ANTIPODAL_TOL: f64 = 1e-12;

impl Sphere {
    pub fn new(d: usize) -> Self {
        Self { d }
    }

    pub fn point(&self, coords: &[f64]) -> Result<Point, ManifoldError> {
        Point::new(self.kind(), Mat::from_column_slice(coords.len(), 1, coords))
    }

    /// `(atan2(|y - <x,y> x|, <x,y>), <x,y>, y - <x,y> x)`; accurate at both
    /// small and large angles, unlike `acos`.
    fn angle(x: &Point, y: &Point) -> (f64, f64, Mat) {
        let c = x.coords().dot(y.coords());
        let u = y.coords() - x.coords() * c;
        (u.norm().atan2(c), c, u)
    }
}

impl Manifold for Sphere {
    fn kind(&self) -> ManifoldKind {
        ManifoldKind::Sphere { d: self.d }
    }

    fn curvature_bounds(&self) -> (f64, f64) {
        (1.0, 1.0)
    }

    fn injectivity_radius(&self) -> f64 {
        PI
    }

    fn exp(&self, x: &Point, v: &TangentVector) -> Result<Point, ManifoldError> {
        self.check_base(x, v)?;
        let nv = v.norm();
        if nv >= PI {
            return Err(ManifoldError::InjectivityViolation { norm: nv, inj: PI });
        }
        if nv == 0.0 {
            return Ok(x.clone());
        }
        let y = x.coords() * nv.cos() + v.vec() * (nv.sin() / nv);
        let n = y.norm();
        Ok(Point::from_raw(self.kind(), y / n))
    }

    fn log(&self, x: &Point, y: &Point) -> Result<TangentVector, ManifoldError> {
        self.check_point(x)?;
        self.check_point(y)?;
        if x.coords() == y.coords() {
            return Ok(TangentVector::zero(x));
        }
        let (theta, c, u) = Self::angle(x, y);
        if c < -1.0 + ANTIPODAL_TOL {
            return Err(ManifoldError::CutLocus(format!(
                "nearly antipodal points (<x,y> = {c})"
            )));
        }
        let nu = u.norm();
        if nu == 0.0 {
            return Ok(TangentVector::zero(x));
        }
        Ok(TangentVector::from_raw(x.clone(), u * (theta / nu)))
    }

    fn dist(&self, x: &Point, y: &Point) -> Result<f64, ManifoldError> {
        self.check_point(x)?;
        self.check_point(y)?;
        if x.coords() == y.coords() {
            return Ok(0.0);
        }
        Ok(Self::angle(x, y).0)
    }

    fn project_tangent(&self, x: &Point, w: &Mat) -> Result<TangentVector, ManifoldError> {
        self.check_point(x)?;
        check_shape(x, w)?;
        let c = x.coords().dot(w);
        Ok(TangentVector::from_raw(x.clone(), w - x.coords() * c))
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        loop {
            let g = gaussian_matrix(self.d + 1, 1, rng);
            let n = g.norm();
            if n > 1e-12 {
                return Point::from_raw(self.kind(), g / n);
            }
        }
    }
}
