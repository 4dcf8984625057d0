use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::filter::Match;

/// Condition number of the (normalized) normal matrix above which a fit is
/// rejected as degenerate.
pub const MAX_CONDITION: f64 = 1e10;

/// Minimum `|det(A)|` of an accepted model.
pub const MIN_DETERMINANT: f64 = 1e-6;

/// Planar map `(x, y) -> (a11 x + a12 y + b1, a21 x + a22 y + b2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineModel {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
}

impl AffineModel {
    pub const IDENTITY: AffineModel = AffineModel {
        a11: 1.0,
        a12: 0.0,
        a21: 0.0,
        a22: 1.0,
        b1: 0.0,
        b2: 0.0,
    };

    pub fn translation(u: f64, v: f64) -> Self {
        AffineModel {
            b1: u,
            b2: v,
            ..AffineModel::IDENTITY
        }
    }

    /// Model whose flow is `(u, v) = (c11 x + c12 y + d1, c21 x + c22 y + d2)`.
    pub fn from_flow_coefficients(c: [[f64; 3]; 2]) -> Self {
        AffineModel {
            a11: 1.0 + c[0][0],
            a12: c[0][1],
            b1: c[0][2],
            a21: c[1][0],
            a22: 1.0 + c[1][1],
            b2: c[1][2],
        }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a11 * x + self.a12 * y + self.b1,
            self.a21 * x + self.a22 * y + self.b2,
        )
    }

    #[inline]
    pub fn flow_at(&self, x: f64, y: f64) -> (f64, f64) {
        let (mx, my) = self.apply(x, y);
        (mx - x, my - y)
    }

    /// Euclidean distance between the model's flow and the match's flow.
    #[inline]
    pub fn residual(&self, m: &Match) -> f64 {
        let (u, v) = self.flow_at(m.x as f64, m.y as f64);
        (u - m.u as f64).hypot(v - m.v as f64)
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn params(&self) -> [f64; 6] {
        [self.a11, self.a12, self.a21, self.a22, self.b1, self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    /// Finite with `|det(A)| > 1e-6`.
    pub fn is_acceptable(&self) -> bool {
        self.is_finite() && self.det().abs() > MIN_DETERMINANT
    }

    /// Largest absolute parameter difference.
    pub fn max_param_diff(&self, other: &AffineModel) -> f64 {
        self.params()
            .iter()
            .zip(other.params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Weighted least-squares affine fit mapping match positions to their
/// targets. Positions are centered and scaled before forming the normal
/// matrix; its condition number must not exceed [`MAX_CONDITION`].
pub fn fit_affine(matches: &[Match], weights: &[f64]) -> Result<AffineModel> {
    if matches.len() != weights.len() {
        return Err(Error::invalid("one weight per support match required"));
    }
    if matches.len() < 3 {
        return Err(Error::DegenerateFit(f64::INFINITY));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateFit(f64::INFINITY));
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for (m, &w) in matches.iter().zip(weights) {
        cx += w * m.x as f64;
        cy += w * m.y as f64;
    }
    cx /= total;
    cy /= total;
    let spread: f64 = matches
        .iter()
        .zip(weights)
        .map(|(m, &w)| w * (m.x as f64 - cx).hypot(m.y as f64 - cy))
        .sum::<f64>()
        / total;
    if spread <= 0.0 {
        return Err(Error::DegenerateFit(f64::INFINITY));
    }
    let s = std::f64::consts::SQRT_2 / spread;

    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs_x = Vector3::<f64>::zeros();
    let mut rhs_y = Vector3::<f64>::zeros();
    for (m, &w) in matches.iter().zip(weights) {
        let p = Vector3::new(s * (m.x as f64 - cx), s * (m.y as f64 - cy), 1.0);
        normal += w * p * p.transpose();
        let tx = m.x as f64 + m.u as f64;
        let ty = m.y as f64 + m.v as f64;
        rhs_x += (w * tx) * p;
        rhs_y += (w * ty) * p;
    }
    let eig = SymmetricEigen::new(normal).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::DegenerateFit(condition));
    }
    let chol = normal.cholesky().ok_or(Error::DegenerateFit(condition))?;
    let px = chol.solve(&rhs_x);
    let py = chol.solve(&rhs_y);
    // undo the normalization x' = s (x - cx)
    let model = AffineModel {
        a11: px[0] * s,
        a12: px[1] * s,
        b1: px[2] - s * (px[0] * cx + px[1] * cy),
        a21: py[0] * s,
        a22: py[1] * s,
        b2: py[2] - s * (py[0] * cx + py[1] * cy),
    };
    if !model.is_finite() {
        return Err(Error::DegenerateFit(condition));
    }
    Ok(model)
}

/// Unit-weight fit.
pub fn fit_affine_unweighted(matches: &[Match]) -> Result<AffineModel> {
    fit_affine(matches, &vec![1.0; matches.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(x: f32, y: f32, u: f32, v: f32) -> Match {
        Match {
            x,
            y,
            u,
            v,
            consistency_error: 0.0,
        }
    }

    fn sample(model: &AffineModel, pts: &[(f32, f32)]) -> Vec<Match> {
        pts.iter()
            .map(|&(x, y)| {
                let (u, v) = model.flow_at(x as f64, y as f64);
                m(x, y, u as f32, v as f32)
            })
            .collect()
    }

    #[test]
    fn zero_flow_gives_identity() {
        let pts = [m(0.0, 0.0, 0.0, 0.0), m(10.0, 0.0, 0.0, 0.0), m(0.0, 7.0, 0.0, 0.0)];
        let fit = fit_affine_unweighted(&pts).unwrap();
        assert!(fit.max_param_diff(&AffineModel::IDENTITY) < 1e-9, "{fit:?}");
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts = [m(0.0, 0.0, 1.0, 0.0), m(1.0, 1.0, 1.0, 0.0), m(2.0, 2.0, 1.0, 0.0)];
        assert!(matches!(fit_affine_unweighted(&pts), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn too_few_points() {
        let pts = [m(0.0, 0.0, 1.0, 0.0), m(5.0, 1.0, 1.0, 0.0)];
        assert!(fit_affine_unweighted(&pts).is_err());
    }

    #[test]
    fn flow_coefficients_round_trip() {
        let a = AffineModel::from_flow_coefficients([[0.01, -0.02, 3.0], [0.005, 0.03, -1.5]]);
        let (u, v) = a.flow_at(10.0, 20.0);
        assert!((u - (0.1 - 0.4 + 3.0)).abs() < 1e-12);
        assert!((v - (0.05 + 0.6 - 1.5)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn recovers_exact_affine(
            c in prop::array::uniform6(-0.05f64..0.05),
            b in prop::array::uniform2(-8.0f64..8.0),
            pts in prop::collection::vec((0u16..300, 0u16..200), 6..40),
        ) {
            let truth = AffineModel::from_flow_coefficients([[c[0], c[1], b[0]], [c[2], c[3], b[1]]]);
            let pts: Vec<(f32, f32)> = pts.iter().map(|&(x, y)| (x as f32, y as f32)).collect();
            let matches = sample(&truth, &pts);
            match fit_affine_unweighted(&matches) {
                Ok(fit) => {
                    // f32 storage of the sampled flow limits exactness
                    for (x, y) in [(0.0, 0.0), (300.0, 200.0), (150.0, 100.0)] {
                        let (u0, v0) = truth.flow_at(x, y);
                        let (u1, v1) = fit.flow_at(x, y);
                        prop_assert!((u0 - u1).abs() < 1e-3 && (v0 - v1).abs() < 1e-3);
                    }
                }
                Err(Error::DegenerateFit(_)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }

    #[test]
    fn recovers_parameters_from_exact_samples() {
        // flow values exactly representable in f32 make the system consistent
        let truth = AffineModel::from_flow_coefficients([[0.25, -0.5, 2.0], [0.125, 0.0625, -3.0]]);
        let pts = [(0.0, 0.0), (8.0, 0.0), (0.0, 8.0), (16.0, 24.0), (32.0, 4.0)];
        let fit = fit_affine_unweighted(&sample(&truth, &pts)).unwrap();
        assert!(fit.max_param_diff(&truth) < 1e-7, "{fit:?}");
    }

    #[test]
    fn weights_select_subset() {
        let a = AffineModel::translation(1.0, 0.0);
        let b = AffineModel::translation(-4.0, 2.0);
        let pa = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)];
        let mut all = sample(&a, &pa);
        all.extend(sample(&b, &pa));
        let weights: Vec<f64> = (0..8).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect();
        let fit = fit_affine(&all, &weights).unwrap();
        assert!(fit.max_param_diff(&a) < 1e-9);
    }
}
