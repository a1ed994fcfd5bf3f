use super::{gaussian_matrix, Manifold, ManifoldError, ManifoldKind, Mat, Point, TangentVector};
use rand::RngCore;

/// Flat space R^d. `exp(x, v) = x + v`, `log(x, y) = y - x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Euclidean {
    d: usize,
}

impl Euclidean {
    pub fn new(d: usize) -> Self {
        Self { d }
    }

    pub fn point(&self, coords: &[f64]) -> Result<Point, ManifoldError> {
        Point::new(self.kind(), Mat::from_column_slice(coords.len(), 1, coords))
    }
}

impl Manifold for Euclidean {
    fn kind(&self) -> ManifoldKind {
        ManifoldKind::Euclidean { d: self.d }
    }

    fn curvature_bounds(&self) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn injectivity_radius(&self) -> f64 {
        f64::INFINITY
    }

    fn exp(&self, x: &Point, v: &TangentVector) -> Result<Point, ManifoldError> {
        self.check_base(x, v)?;
        Ok(Point::from_raw(self.kind(), x.coords() + v.vec()))
    }

    fn log(&self, x: &Point, y: &Point) -> Result<TangentVector, ManifoldError> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(TangentVector::from_raw(x.clone(), y.coords() - x.coords()))
    }

    fn dist(&self, x: &Point, y: &Point) -> Result<f64, ManifoldError> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok((y.coords() - x.coords()).norm())
    }

    fn project_tangent(&self, x: &Point, w: &Mat) -> Result<TangentVector, ManifoldError> {
        self.check_point(x)?;
        check_shape(x, w)?;
        Ok(TangentVector::from_raw(x.clone(), w.clone()))
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        Point::from_raw(self.kind(), gaussian_matrix(self.d, 1, rng))
    }
}

pub(super) fn check_shape(x: &Point, w: &Mat) -> Result<(), ManifoldError> {
    if x.coords().shape() != w.shape() {
        return Err(ManifoldError::ShapeMismatch {
            expected: x.coords().shape(),
            found: w.shape(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_maps_are_vector_arithmetic() {
        let m = Euclidean::new(3);
        let x = m.point(&[1.0, 2.0, 3.0]).unwrap();
        let y = m.point(&[0.0, -1.0, 5.0]).unwrap();
        let v = m.log(&x, &y).unwrap();
        assert_eq!(v.vec().as_slice(), &[-1.0, -3.0, 2.0]);
        assert_eq!(m.exp(&x, &v).unwrap(), y);
        assert!((m.dist(&x, &y).unwrap() - 14f64.sqrt()).abs() < 1e-15);
    }
}
