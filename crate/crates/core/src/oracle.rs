//! Reference solvers and metrics for the least-deviations subspace problem
//!
//! ```text
//! L(P) = Σᵢ ‖(I − P) zᵢ‖₂^q
//! ```
//!
//! `q = 2` is (uncentered) PCA, `q = 1` is the geometric median subspace.
//! The solvers here are independent of the trained model and serve as its
//! oracles: exhaustive grid search in two and three dimensions, and IRLS
//! (alternating residual-inverse weights with weighted PCA) in general.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::ndcore::{
    dot, gaussian_matrix, norm, qr_orthonormalize, rng_from_seed, singular_values,
    standard_normal, sym_eig, Matrix,
};

/// Maximum deviation of `basisᵀ·basis` from the identity accepted by [`Subspace::new`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// A subspace held as an orthonormal basis (one column per direction).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    basis: Matrix,
}

impl Subspace {
    pub fn new(basis: Matrix) -> Result<Self> {
        let err = basis
            .t_matmul(&basis)
            .sub(&Matrix::identity(basis.cols()))
            .frobenius_norm();
        if err > ORTHONORMAL_TOL {
            return Err(RiskError::InvalidShape(format!(
                "basis columns are not orthonormal (error {err:e})"
            )));
        }
        Ok(Self { basis })
    }

    /// Orthonormalizes the columns of `spanning` first.
    pub fn from_spanning(spanning: &Matrix) -> Result<Self> {
        Ok(Self {
            basis: qr_orthonormalize(spanning)?,
        })
    }

    pub fn from_directions(dirs: &[Vec<f64>]) -> Result<Self> {
        Self::from_spanning(&Matrix::from_columns(dirs)?)
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn projector(&self) -> Matrix {
        self.basis.matmul_t(&self.basis)
    }

    /// Image of the subspace under an orthogonal map `r` (applied as `r · basis`).
    pub fn rotated(&self, r: &Matrix) -> Result<Self> {
        if r.cols() != self.ambient_dim() {
            return Err(shape("Subspace::rotated", r.cols(), self.ambient_dim()));
        }
        Subspace::new(r.matmul(&self.basis))
    }

    /// Residual `z − B·Bᵀ·z` of a single vector.
    pub fn residual(&self, z: &[f64]) -> Vec<f64> {
        let coords: Vec<f64> = (0..self.dim())
            .map(|k| {
                (0..z.len())
                    .map(|i| self.basis[(i, k)] * z[i])
                    .sum::<f64>()
            })
            .collect();
        z.iter()
            .enumerate()
            .map(|(i, zi)| zi - dot(self.basis.row(i), &coords))
            .collect()
    }
}

fn shape(op: &'static str, got: usize, want: usize) -> RiskError {
    RiskError::ShapeMismatch {
        op,
        detail: format!("dimension {got}, expected {want}"),
    }
}

fn check_dims(op: &'static str, z: &Matrix, sub: &Subspace) -> Result<()> {
    if z.cols() != sub.ambient_dim() {
        return Err(shape(op, z.cols(), sub.ambient_dim()));
    }
    Ok(())
}

fn residual_norms(z: &Matrix, sub: &Subspace) -> Vec<f64> {
    (0..z.rows()).map(|i| norm(&sub.residual(z.row(i)))).collect()
}

/// Sum of Euclidean distances from the rows of `z` to the subspace.
pub fn gms_objective(z: &Matrix, sub: &Subspace) -> Result<f64> {
    check_dims("gms_objective", z, sub)?;
    Ok(residual_norms(z, sub).iter().sum())
}

/// Sum of squared distances (the `q = 2` objective).
pub fn squared_objective(z: &Matrix, sub: &Subspace) -> Result<f64> {
    check_dims("squared_objective", z, sub)?;
    Ok(residual_norms(z, sub).iter().map(|r| r * r).sum())
}

/// Second-moment matrix `Σ wᵢ zᵢ zᵢᵀ` (all weights one when `weights` is `None`).
pub fn second_moment(z: &Matrix, weights: Option<&[f64]>) -> Matrix {
    let d = z.cols();
    let mut s = Matrix::zeros(d, d);
    for i in 0..z.rows() {
        let w = weights.map_or(1.0, |w| w[i]);
        let zi = z.row(i);
        for a in 0..d {
            let wa = w * zi[a];
            for b in a..d {
                s[(a, b)] += wa * zi[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            s[(a, b)] = s[(b, a)];
        }
    }
    s
}

fn top_eigenspace(s: &Matrix, d: usize) -> Result<Subspace> {
    let eig = sym_eig(s)?;
    Subspace::new(eig.vectors.leading_columns(d))
}

fn check_subspace_dim(d: usize, ambient: usize) -> Result<()> {
    if d == 0 || d > ambient {
        return Err(RiskError::InvalidConfig(format!(
            "subspace dimension {d} must lie in 1..={ambient}"
        )));
    }
    Ok(())
}

/// Top-`d` eigenvectors of the second-moment matrix. With `center`, the
/// column mean is removed first (classical PCA).
pub fn pca_subspace(z: &Matrix, d: usize, center: bool) -> Result<Subspace> {
    check_subspace_dim(d, z.cols())?;
    if z.rows() == 0 {
        return Err(RiskError::EmptySplit("pca input".into()));
    }
    let s = if center {
        let mean = z.column_means();
        let centered = Matrix::from_fn(z.rows(), z.cols(), |i, j| z[(i, j)] - mean[j]);
        second_moment(&centered, None)
    } else {
        second_moment(z, None)
    };
    top_eigenspace(&s, d)
}

/// Exhaustive search for the best line (`d = 1`) in two or three dimensions.
///
/// Directions are enumerated on a half circle (`D = 2`) or a
/// latitude–longitude grid over the upper hemisphere (`D = 3`) with the
/// given angular step; the lowest grid index wins ties.
pub fn gms_grid_search(z: &Matrix, d: usize, resolution: f64) -> Result<(Subspace, f64)> {
    let dim = z.cols();
    if !(2..=3).contains(&dim) || d != 1 {
        return Err(RiskError::Unsupported(format!(
            "grid search supports D in {{2, 3}} and d = 1, got D = {dim}, d = {d}"
        )));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(RiskError::InvalidConfig(format!(
            "grid resolution must be positive, got {resolution}"
        )));
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut consider = |u: Vec<f64>| {
        let obj: f64 = (0..z.rows())
            .map(|i| {
                let zi = z.row(i);
                let c = dot(zi, &u);
                zi.iter()
                    .zip(&u)
                    .map(|(a, b)| (a - c * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum();
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((u, obj));
        }
    };

    if dim == 2 {
        let steps = (PI / resolution).ceil() as usize;
        for k in 0..steps {
            let t = k as f64 * resolution;
            consider(vec![t.cos(), t.sin()]);
        }
    } else {
        let lat_steps = (FRAC_PI_2 / resolution).floor() as usize;
        let lon_steps = (2.0 * PI / resolution).ceil() as usize;
        for i in 0..=lat_steps {
            let phi = i as f64 * resolution;
            let (sp, cp) = phi.sin_cos();
            let lons = if i == 0 { 1 } else { lon_steps };
            for j in 0..lons {
                let theta = j as f64 * resolution;
                consider(vec![sp * theta.cos(), sp * theta.sin(), cp]);
            }
        }
    }

    let (u, obj) = best.expect("grid is never empty");
    Ok((Subspace::new(Matrix::from_columns(&[u])?)?, obj))
}

/// Outcome of [`gms_irls`].
#[derive(Clone, Debug)]
pub struct IrlsResult {
    pub subspace: Subspace,
    /// Exact sum-of-distances objective of `subspace`.
    pub objective: f64,
    /// Per-iteration value of the δ-smoothed objective `Σ ρ_δ(‖rᵢ‖)`, where
    /// `ρ_δ(r) = r` for `r ≥ δ` and `r²/(2δ) + δ/2` below. The clamped
    /// weights majorize exactly this function, so the trace never increases.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Improvement below which IRLS stops.
pub const IRLS_TOL: f64 = 1e-10;

pub fn smoothed_abs(r: f64, delta: f64) -> f64 {
    if r >= delta {
        r
    } else {
        r * r / (2.0 * delta) + delta / 2.0
    }
}

/// Iteratively reweighted least squares for the geometric median subspace.
///
/// The first weights are `1/max(‖zᵢ‖, δ)`, the residuals against the zero
/// subspace. Each iteration takes the top-`d` eigenvectors of
/// `Σ wᵢ zᵢ zᵢᵀ` and resets `wᵢ = 1/max(‖rᵢ‖, δ)`.
pub fn gms_irls(z: &Matrix, d: usize, delta: f64, max_iter: usize) -> Result<IrlsResult> {
    check_subspace_dim(d, z.cols())?;
    if z.rows() == 0 {
        return Err(RiskError::EmptySplit("irls input".into()));
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(RiskError::InvalidConfig(format!(
            "IRLS delta must be positive, got {delta}"
        )));
    }
    let mut weights: Vec<f64> = (0..z.rows())
        .map(|i| 1.0 / norm(z.row(i)).max(delta))
        .collect();
    let mut trace = Vec::new();
    let mut current: Option<Subspace> = None;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter.max(1) {
        iterations += 1;
        let sub = top_eigenspace(&second_moment(z, Some(&weights)), d)?;
        let res = residual_norms(z, &sub);
        let obj: f64 = res.iter().map(|&r| smoothed_abs(r, delta)).sum();
        let improved = trace.last().is_none_or(|&prev: &f64| prev - obj >= IRLS_TOL);
        if current.is_none() || obj <= *trace.last().unwrap_or(&f64::INFINITY) {
            current = Some(sub);
        }
        trace.push(obj);
        if !improved {
            converged = true;
            break;
        }
        weights = res.iter().map(|&r| 1.0 / r.max(delta)).collect();
    }

    let subspace = current.expect("at least one iteration runs");
    let objective = gms_objective(z, &subspace)?;
    Ok(IrlsResult {
        subspace,
        objective,
        trace,
        iterations,
        converged,
    })
}

/// Principal angles in ascending order, in `[0, π/2]`.
///
/// Cosines are the singular values of `UᵀV` (clamped to `[0, 1]`). Angles
/// below π/4 are taken from the sines, the singular values of `V − U·UᵀV`,
/// which keeps nearly coincident subspaces accurate to machine precision.
pub fn principal_angles(u: &Subspace, v: &Subspace) -> Result<Vec<f64>> {
    if u.ambient_dim() != v.ambient_dim() {
        return Err(shape(
            "principal_angles",
            v.ambient_dim(),
            u.ambient_dim(),
        ));
    }
    // Project the smaller subspace onto the larger one.
    let (big, small) = if u.dim() >= v.dim() { (u, v) } else { (v, u) };
    let k = small.dim();
    if k == 0 {
        return Ok(Vec::new());
    }
    let cross = big.basis().t_matmul(small.basis());
    let cosines = singular_values(&cross)?;
    let resid = small.basis().sub(&big.basis().matmul(&cross));
    let mut sines = singular_values(&resid)?;
    sines.reverse();

    let angles = (0..k)
        .map(|i| {
            let c = cosines[i].clamp(0.0, 1.0);
            let angle = c.acos();
            if angle < FRAC_PI_4 {
                sines[i].clamp(0.0, 1.0).asin()
            } else {
                angle
            }
        })
        .collect::<Vec<_>>();
    let mut angles = angles;
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Largest principal angle; zero iff the smaller subspace lies in the larger.
pub fn max_principal_angle(u: &Subspace, v: &Subspace) -> Result<f64> {
    Ok(principal_angles(u, v)?.last().copied().unwrap_or(0.0))
}

/// Random orthogonal matrix from the orthonormalized columns of a seeded Gaussian.
pub fn random_orthogonal(n: usize, seed: u64) -> Result<Matrix> {
    qr_orthonormalize(&gaussian_matrix(n, n, seed)?)
}

/// Robust-line test instance: `n − n_outliers` inliers spread along a random
/// unit direction with small isotropic jitter, plus `n_outliers` isotropic
/// Gaussian outliers.
pub fn line_with_outliers(
    n: usize,
    dim: usize,
    n_outliers: usize,
    jitter: f64,
    seed: u64,
) -> Result<(Matrix, Vec<f64>)> {
    if n_outliers > n || dim == 0 {
        return Err(RiskError::InvalidConfig(
            "line instance needs n_outliers <= n and dim >= 1".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut dir: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
    let len = norm(&dir);
    dir.iter_mut().for_each(|x| *x /= len);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        if i < n - n_outliers {
            let t = 2.0 * standard_normal(&mut rng);
            rows.push(
                dir.iter()
                    .map(|u| t * u + jitter * standard_normal(&mut rng))
                    .collect(),
            );
        } else {
            rows.push((0..dim).map(|_| 1.5 * standard_normal(&mut rng)).collect());
        }
    }
    Ok((Matrix::from_rows(&rows)?, dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(dir: &[f64]) -> Subspace {
        Subspace::from_directions(&[dir.to_vec()]).unwrap()
    }

    fn cross() -> Matrix {
        Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap()
    }

    /// Ten points at ±e₁ and one outlier at (0, 5).
    fn contaminated() -> Matrix {
        let mut rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0])
            .collect();
        rows.push(vec![0.0, 5.0]);
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn objective_examples() {
        let z = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(gms_objective(&z, &line(&[1.0, 0.0])).unwrap(), 4.0);

        let full = Subspace::new(Matrix::identity(2)).unwrap();
        assert!(gms_objective(&cross(), &full).unwrap().abs() < 1e-15);

        let diag = gms_objective(&cross(), &line(&[1.0, 1.0])).unwrap();
        assert!((diag - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(gms_objective(&cross(), &line(&[1.0, 0.0])).unwrap(), 2.0);
    }

    #[test]
    fn objective_rejects_mismatch() {
        let z = Matrix::zeros(2, 3);
        assert!(matches!(
            gms_objective(&z, &line(&[1.0, 0.0])),
            Err(RiskError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn pca_examples() {
        let z = Matrix::from_rows(&[
            vec![2.0, 0.0],
            vec![-2.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let s = pca_subspace(&z, 1, false).unwrap();
        assert!(max_principal_angle(&s, &line(&[1.0, 0.0])).unwrap() < 1e-12);

        let s = pca_subspace(&contaminated(), 1, false).unwrap();
        assert!(max_principal_angle(&s, &line(&[0.0, 1.0])).unwrap() < 1e-12);

        let full = pca_subspace(&contaminated(), 2, false).unwrap();
        assert!(gms_objective(&contaminated(), &full).unwrap() < 1e-12);
        assert!(matches!(
            pca_subspace(&contaminated(), 3, false),
            Err(RiskError::InvalidConfig(_))
        ));
    }

    #[test]
    fn centered_pca_ignores_offset() {
        let z = Matrix::from_rows(&[
            vec![10.0, 1.0],
            vec![10.0, -1.0],
            vec![10.0, 2.0],
            vec![10.0, -2.0],
        ])
        .unwrap();
        let raw = pca_subspace(&z, 1, false).unwrap();
        let centered = pca_subspace(&z, 1, true).unwrap();
        assert!(max_principal_angle(&raw, &line(&[1.0, 0.0])).unwrap() < 0.1);
        assert!(max_principal_angle(&centered, &line(&[0.0, 1.0])).unwrap() < 1e-12);
    }

    #[test]
    fn grid_examples() {
        let (s, obj) = gms_grid_search(&cross(), 1, 0.5f64.to_radians()).unwrap();
        assert!((obj - 2.0).abs() < 1e-3);
        let b = s.basis();
        assert!(b[(0, 0)].abs() < 1e-9 || b[(1, 0)].abs() < 1e-9);

        let (s, obj) = gms_grid_search(&contaminated(), 1, 0.5f64.to_radians()).unwrap();
        assert!((obj - 5.0).abs() < 1e-3);
        assert!(max_principal_angle(&s, &line(&[1.0, 0.0])).unwrap() < 1e-9);

        let z = Matrix::from_rows(&[vec![1.0, 1.0], vec![-2.0, -2.0], vec![3.0, 3.0]]).unwrap();
        let (s, obj) = gms_grid_search(&z, 1, 1f64.to_radians()).unwrap();
        assert!(obj <= 1e-9, "{obj}");
        assert!(max_principal_angle(&s, &line(&[1.0, 1.0])).unwrap() < 1e-9);
    }

    #[test]
    fn grid_three_dimensional() {
        let z = Matrix::from_rows(&[
            vec![0.0, 0.0, 2.0],
            vec![0.0, 0.0, -1.0],
            vec![0.1, 0.0, 0.0],
        ])
        .unwrap();
        let (s, obj) = gms_grid_search(&z, 1, 1f64.to_radians()).unwrap();
        assert!((obj - 0.1).abs() < 1e-9);
        assert!(max_principal_angle(&s, &line(&[0.0, 0.0, 1.0])).unwrap() < 1e-9);
    }

    #[test]
    fn grid_rejects_unsupported() {
        assert!(matches!(
            gms_grid_search(&Matrix::zeros(2, 4), 1, 0.1),
            Err(RiskError::Unsupported(_))
        ));
        assert!(matches!(
            gms_grid_search(&Matrix::zeros(2, 3), 2, 0.1),
            Err(RiskError::Unsupported(_))
        ));
        assert!(gms_grid_search(&Matrix::zeros(2, 2), 1, 0.0).is_err());
    }

    #[test]
    fn irls_examples() {
        let r = gms_irls(&cross(), 1, 1e-8, 100).unwrap();
        assert!((r.objective - 2.0).abs() < 1e-6, "{}", r.objective);

        let r = gms_irls(&contaminated(), 1, 1e-8, 100).unwrap();
        let angle = max_principal_angle(&r.subspace, &line(&[1.0, 0.0])).unwrap();
        assert!(angle < 0.5f64.to_radians());
        assert!((r.objective - 5.0).abs() < 1e-6);
        assert!(r.converged);

        let z = Matrix::from_rows(&[
            vec![1.0, 2.0, 0.0],
            vec![-1.0, 1.0, 0.0],
            vec![3.0, 0.5, 0.0],
        ])
        .unwrap();
        let r = gms_irls(&z, 2, 1e-8, 100).unwrap();
        assert!(r.objective <= 1e-9);
        assert!(r.iterations <= 2);
        let plane = Subspace::new(Matrix::identity(3).leading_columns(2)).unwrap();
        assert!(max_principal_angle(&r.subspace, &plane).unwrap() < 1e-8);
    }

    #[test]
    fn irls_reports_non_convergence() {
        let (z, _) = line_with_outliers(12, 3, 3, 0.05, 3).unwrap();
        let r = gms_irls(&z, 1, 1e-8, 1).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(!r.converged);
    }

    #[test]
    fn angle_examples() {
        let e1 = line(&[1.0, 0.0]);
        let e2 = line(&[0.0, 1.0]);
        let d = line(&[1.0, 1.0]);
        assert_eq!(principal_angles(&e1, &e1).unwrap(), vec![0.0]);
        assert!((principal_angles(&e1, &e2).unwrap()[0] - FRAC_PI_2).abs() < 1e-15);
        assert!((principal_angles(&e1, &d).unwrap()[0] - FRAC_PI_4).abs() < 1e-15);
        let e3 = line(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            principal_angles(&e1, &e3),
            Err(RiskError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn angles_of_mixed_dimensions() {
        let plane = Subspace::new(Matrix::identity(3).leading_columns(2)).unwrap();
        let tilted = line(&[1.0, 0.0, 1.0]);
        let a = principal_angles(&plane, &tilted).unwrap();
        assert_eq!(a.len(), 1);
        assert!((a[0] - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(principal_angles(&tilted, &plane).unwrap(), a);
    }

    #[test]
    fn grid_and_irls_agree_on_random_instances() {
        for seed in 0..20 {
            for dim in [2, 3] {
                let (z, _) = line_with_outliers(12 + (seed as usize % 8), dim, 3, 0.1, seed).unwrap();
                let res = if dim == 2 { 0.1f64 } else { 0.5 };
                let (_, grid_obj) = gms_grid_search(&z, 1, res.to_radians()).unwrap();
                let irls = gms_irls(&z, 1, 1e-8, 500).unwrap();
                let rel = (irls.objective - grid_obj).abs() / grid_obj;
                assert!(rel <= 0.01, "seed {seed} dim {dim}: irls {} grid {grid_obj}", irls.objective);
                if dim == 2 {
                    // Lipschitz slack of the half-circle grid at 0.1°.
                    let slack: f64 = (0..z.rows()).map(|i| norm(z.row(i))).sum::<f64>()
                        * (0.05f64).to_radians();
                    assert!(grid_obj <= irls.objective + slack);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn irls_trace_is_monotone(seed in any::<u64>(), dim in 2usize..=5, d in 1usize..=2) {
            prop_assume!(d < dim);
            let (z, _) = line_with_outliers(15, dim, 4, 0.2, seed).unwrap();
            let r = gms_irls(&z, d, 1e-8, 200).unwrap();
            for w in r.trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12, "trace rose: {:?}", w);
            }
        }

        #[test]
        fn orthogonal_equivariance(seed in any::<u64>(), dim in 2usize..=6) {
            let z = gaussian_matrix(9, dim, seed).unwrap();
            let r = random_orthogonal(dim, seed ^ 0x55).unwrap();
            let zr = z.matmul_t(&r);
            let sub = Subspace::from_spanning(&gaussian_matrix(dim, 1, seed ^ 0xAA).unwrap()).unwrap();
            let before = gms_objective(&z, &sub).unwrap();
            let after = gms_objective(&zr, &sub.rotated(&r).unwrap()).unwrap();
            prop_assert!((before - after).abs() <= 1e-10 * (1.0 + before));

            let p = pca_subspace(&z, 1, false).unwrap();
            let pr = pca_subspace(&zr, 1, false).unwrap();
            let angle = max_principal_angle(&pr, &p.rotated(&r).unwrap()).unwrap();
            prop_assert!(angle <= 1e-8, "angle {}", angle);
        }

        #[test]
        fn objective_scales_linearly(seed in any::<u64>(), c in 0.01f64..100.0) {
            let (z, _) = line_with_outliers(10, 2, 2, 0.1, seed).unwrap();
            let sub = line(&[0.3, 0.7]);
            let base = gms_objective(&z, &sub).unwrap();
            let scaled = gms_objective(&z.scale(c), &sub).unwrap();
            prop_assert!((scaled - c * base).abs() <= 1e-10 * (1.0 + c * base));

            let res = 1f64.to_radians();
            let (g1, _) = gms_grid_search(&z, 1, res).unwrap();
            let (g2, _) = gms_grid_search(&z.scale(c), 1, res).unwrap();
            prop_assert!(max_principal_angle(&g1, &g2).unwrap() <= res);
        }
    }
}
