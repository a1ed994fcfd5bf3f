//! Grassmann manifold G(d, p) of p-dimensional subspaces of R^d.
//!
//! A point is stored as an orthonormal representative `X` (`d x p`,
//! `X^T X = I`); `X` and `X Q` for orthogonal `Q` are the same point.
//! Horizontal tangent vectors satisfy `X^T V = 0`. With the canonical metric
//! `tr(U^T V)` the sectional curvature lies in `[0, 2]` and the injectivity
//! radius is `pi/2`.
//!
//! ```text
//! exp_X(V)  = X W cos(S) W^T + U sin(S) W^T,       V = U S W^T (thin SVD)
//! log_X(Y)  = U atan(S) W^T,   (I - X X^T) Y (X^T Y)^{-1} = U S W^T
//! dist(X,Y) = sqrt(sum_k theta_k^2), theta_k principal angles
//! ```
//!
//! The log is independent of the representative chosen for `Y`.

use super::euclidean::check_shape;
use super::{
    gaussian_matrix, orthonormalize, Manifold, ManifoldError, ManifoldKind, Mat, Point,
    TangentVector, CUT_LOCUS_MARGIN, REORTH_DRIFT,
};
use rand::RngCore;
use std::f64::consts::FRAC_PI_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grassmann {
    d: usize,
    p: usize,
}

impl Grassmann {
    pub fn new(d: usize, p: usize) -> Self {
        Self { d, p }
    }

    pub fn point(&self, coords: Mat) -> Result<Point, ManifoldError> {
        Point::new(self.kind(), coords)
    }
}

/// Principal angles between span(X) and span(Y), ascending.
///
/// Cosines come from the singular values of `X^T Y` and sines from those of
/// `(I - X X^T) Y`; pairing the largest cosine with the smallest sine and
/// taking `atan2` keeps full accuracy near both 0 and pi/2.
pub fn principal_angles(x: &Mat, y: &Mat) -> Vec<f64> {
    let xty = x.transpose() * y;
    let resid = y - x * &xty;
    let mut cos: Vec<f64> = xty.singular_values().iter().copied().collect();
    let mut sin: Vec<f64> = resid.singular_values().iter().copied().collect();
    cos.sort_by(|a, b| b.total_cmp(a));
    sin.sort_by(|a, b| a.total_cmp(b));
    let mut angles: Vec<f64> = cos
        .iter()
        .zip(&sin)
        .map(|(&c, &s)| s.atan2(c.max(0.0)))
        .collect();
    angles.sort_by(|a, b| a.total_cmp(b));
    angles
}

impl Manifold for Grassmann {
    fn kind(&self) -> ManifoldKind {
        ManifoldKind::Grassmann {
            d: self.d,
            p: self.p,
        }
    }

    fn curvature_bounds(&self) -> (f64, f64) {
        (0.0, 2.0)
    }

    fn injectivity_radius(&self) -> f64 {
        FRAC_PI_2
    }

    fn exp(&self, x: &Point, v: &TangentVector) -> Result<Point, ManifoldError> {
        self.check_base(x, v)?;
        let nv = v.norm();
        if nv >= FRAC_PI_2 {
            return Err(ManifoldError::InjectivityViolation {
                norm: nv,
                inj: FRAC_PI_2,
            });
        }
        if nv == 0.0 {
            return Ok(x.clone());
        }
        let svd = v.vec().clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let wt = svd.v_t.expect("requested V^T");
        let s = &svd.singular_values;
        let cos = Mat::from_diagonal(&s.map(f64::cos));
        let sin = Mat::from_diagonal(&s.map(f64::sin));
        let y = (x.coords() * wt.transpose() * cos + u * sin) * &wt;
        let mut p = Point::from_raw(self.kind(), y);
        if p.invariant_drift() > REORTH_DRIFT {
            p = Point::from_raw(self.kind(), orthonormalize(p.into_coords()));
        }
        Ok(p)
    }

    fn log(&self, x: &Point, y: &Point) -> Result<TangentVector, ManifoldError> {
        self.check_point(x)?;
        self.check_point(y)?;
        let xc = x.coords();
        if xc == y.coords() {
            return Ok(TangentVector::zero(x));
        }
        let xty = xc.transpose() * y.coords();
        let min_cos = xty.singular_values().min();
        if min_cos < CUT_LOCUS_MARGIN.sin() {
            return Err(ManifoldError::CutLocus(format!(
                "principal angle within {CUT_LOCUS_MARGIN:e} of pi/2 (cos = {min_cos:e})"
            )));
        }
        let theta = principal_angles(xc, y.coords());
        let dist = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        if dist >= FRAC_PI_2 {
            return Err(ManifoldError::CutLocus(format!(
                "distance {dist} is not below the injectivity radius"
            )));
        }
        let resid = y.coords() - xc * &xty;
        // M = resid * (X^T Y)^{-1}, via M^T = (X^T Y)^{-T} resid^T
        let mt = xty
            .transpose()
            .lu()
            .solve(&resid.transpose())
            .ok_or_else(|| ManifoldError::CutLocus("X^T Y is singular".into()))?;
        let svd = mt.transpose().svd(true, true);
        let u = svd.u.expect("requested U");
        let wt = svd.v_t.expect("requested V^T");
        let atan = Mat::from_diagonal(&svd.singular_values.map(f64::atan));
        let v = u * atan * wt;
        // clear rounding in the normal direction
        let v = &v - xc * (xc.transpose() * &v);
        Ok(TangentVector::from_raw(x.clone(), v))
    }

    fn dist(&self, x: &Point, y: &Point) -> Result<f64, ManifoldError> {
        self.check_point(x)?;
        self.check_point(y)?;
        if x.coords() == y.coords() {
            return Ok(0.0);
        }
        Ok(principal_angles(x.coords(), y.coords())
            .iter()
            .map(|t| t * t)
            .sum::<f64>()
            .sqrt())
    }

    fn project_tangent(&self, x: &Point, w: &Mat) -> Result<TangentVector, ManifoldError> {
        self.check_point(x)?;
        check_shape(x, w)?;
        let xc = x.coords();
        Ok(TangentVector::from_raw(x.clone(), w - xc * (xc.transpose() * w)))
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        Point::from_raw(self.kind(), orthonormalize(gaussian_matrix(self.d, self.p, rng)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn span(cols: &[&[f64]]) -> Mat {
        let d = cols[0].len();
        Mat::from_fn(d, cols.len(), |i, j| cols[j][i])
    }

    /// Reference angles: acos of the singular values of X^T Y.
    fn acos_angles(x: &Mat, y: &Mat) -> Vec<f64> {
        let mut a: Vec<f64> = (x.transpose() * y)
            .singular_values()
            .iter()
            .map(|s| s.clamp(-1.0, 1.0).acos())
            .collect();
        a.sort_by(|p, q| p.total_cmp(q));
        a
    }

    #[test]
    fn lines_in_r3_distance_is_the_angle() {
        let g = Grassmann::new(3, 1);
        let x = g.point(span(&[&[1.0, 0.0, 0.0]])).unwrap();
        for &theta in &[0.1f64, 0.5, 1.0, 1.4] {
            let y = g.point(span(&[&[theta.cos(), theta.sin(), 0.0]])).unwrap();
            assert!((g.dist(&x, &y).unwrap() - theta).abs() < 1e-14);
            let oracle = acos_angles(x.coords(), y.coords())[0];
            assert!((oracle - theta).abs() < 1e-7);
        }
    }

    #[test]
    fn exp_travels_the_tangent_length() {
        let g = Grassmann::new(4, 2);
        let mut rng = SeedStream::new(3).rng();
        for _ in 0..50 {
            let x = g.random_point(&mut rng);
            let v = g.random_tangent(&x, 0.3, &mut rng);
            let y = g.exp(&x, &v).unwrap();
            assert!(y.invariant_drift() < 1e-12);
            assert!((g.dist(&x, &y).unwrap() - 0.3).abs() < 1e-9);
            // independent check through acos of the principal cosines
            let ang = acos_angles(x.coords(), y.coords());
            let d = ang.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!((d - 0.3).abs() < 1e-6);
        }
    }

    #[test]
    fn exp_matches_small_step_geodesic_integration() {
        // integrate X' = V, V' = -X (V^T V) (geodesic ODE on horizontal lifts)
        // with RK4 and compare subspaces
        let g = Grassmann::new(5, 2);
        let mut rng = SeedStream::new(11).rng();
        let x = g.random_point(&mut rng);
        let v = g.random_tangent(&x, 0.8, &mut rng);
        let f = |xm: &Mat, vm: &Mat| -> (Mat, Mat) { (vm.clone(), -(xm * (vm.transpose() * vm))) };
        let (mut xs, mut vs) = (x.coords().clone(), v.vec().clone());
        let steps = 2000;
        let h = 1.0 / steps as f64;
        for _ in 0..steps {
            let (k1x, k1v) = f(&xs, &vs);
            let (k2x, k2v) = f(&(&xs + &k1x * (h / 2.0)), &(&vs + &k1v * (h / 2.0)));
            let (k3x, k3v) = f(&(&xs + &k2x * (h / 2.0)), &(&vs + &k2v * (h / 2.0)));
            let (k4x, k4v) = f(&(&xs + &k3x * h), &(&vs + &k3v * h));
            xs += (k1x + &k2x * 2.0 + &k3x * 2.0 + k4x) * (h / 6.0);
            vs += (k1v + &k2v * 2.0 + &k3v * 2.0 + k4v) * (h / 6.0);
        }
        let y = g.exp(&x, &v).unwrap();
        let integrated = Point::normalized(g.kind(), xs).unwrap();
        assert!(g.dist(&y, &integrated).unwrap() < 1e-9);
    }

    #[test]
    fn log_is_representative_invariant() {
        let g = Grassmann::new(6, 3);
        let mut rng = SeedStream::new(5).rng();
        let x = g.random_point(&mut rng);
        let y = g.exp(&x, &g.random_tangent(&x, 0.9, &mut rng)).unwrap();
        let q = orthonormalize(gaussian_matrix(3, 3, &mut rng));
        let yq = g.point(y.coords() * &q).unwrap();
        let a = g.log(&x, &y).unwrap();
        let b = g.log(&x, &yq).unwrap();
        assert!((a.vec() - b.vec()).amax() < 1e-12);
    }

    #[test]
    fn orthogonal_subspaces_are_on_the_cut_locus() {
        let g = Grassmann::new(4, 1);
        let x = g.point(span(&[&[1.0, 0.0, 0.0, 0.0]])).unwrap();
        let y = g.point(span(&[&[0.0, 1.0, 0.0, 0.0]])).unwrap();
        assert!(matches!(g.log(&x, &y), Err(ManifoldError::CutLocus(_))));
        assert!((g.dist(&x, &y).unwrap() - FRAC_PI_2).abs() < 1e-15);
        // within the margin
        let t = FRAC_PI_2 - 1e-7;
        let z = g.point(span(&[&[t.cos(), t.sin(), 0.0, 0.0]])).unwrap();
        assert!(g.log(&x, &z).is_err());
    }

    #[test]
    fn far_but_regular_pair_is_rejected_by_distance() {
        // two angles of 1.2 each: dist = 1.697 > pi/2 although X^T Y is invertible
        let g = Grassmann::new(4, 2);
        let x = g.point(span(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]])).unwrap();
        let t: f64 = 1.2;
        let y = g
            .point(span(&[&[t.cos(), 0.0, t.sin(), 0.0], &[0.0, t.cos(), 0.0, t.sin()]]))
            .unwrap();
        assert!(matches!(g.log(&x, &y), Err(ManifoldError::CutLocus(_))));
    }
}
