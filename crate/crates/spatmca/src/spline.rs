//! Smoothing-spline machinery shared by both spatial fields.
//!
//! A pattern observed at `p` sites is carried off-grid by a polyharmonic
//! interpolant: a radial-kernel expansion around the sites plus an affine
//! term, with coefficients tied together by a bordered linear system. The
//! same system yields the roughness penalty matrix `Omega`, the quadratic
//! form that measures integrated squared second derivatives of the
//! interpolant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Bordered systems whose condition estimate exceeds this are rejected
/// instead of silently regularized.
pub const CONDITION_LIMIT: f64 = 1e12;

/// A set of `p` spatial sites in `d` dimensions (`d` in {1, 2, 3}).
///
/// Sites are pairwise distinct and `p >= d + 2`, so the bordered
/// interpolation system has full rank for generic geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet {
    coords: DMatrix<f64>,
}

impl LocationSet {
    /// Builds a location set from a `p x d` coordinate matrix (one row per site).
    pub fn new(coords: DMatrix<f64>) -> Result<Self> {
        let dim = coords.ncols();
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let p = coords.nrows();
        if p < dim + 2 {
            return Err(Error::SingularGeometry(format!(
                "need at least {} sites in {} dimension(s), got {}",
                dim + 2,
                dim,
                p
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(
                "site coordinates must be finite".into(),
            ));
        }
        let locs = Self { coords };
        if let Some((i, j)) = locs.find_duplicate() {
            return Err(Error::SingularGeometry(format!(
                "sites {i} and {j} coincide"
            )));
        }
        Ok(locs)
    }

    /// Skips validation; used by in-crate tests that exercise degenerate geometry.
    #[cfg(test)]
    pub(crate) fn new_unchecked(coords: DMatrix<f64>) -> Self {
        Self { coords }
    }

    /// One-dimensional sites from a coordinate list.
    pub fn one_dim(xs: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(xs.len(), 1, xs))
    }

    /// `p` equally spaced sites on `[lo, hi]`.
    pub fn grid_1d(p: usize, lo: f64, hi: f64) -> Result<Self> {
        if p < 2 || !(lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "grid_1d needs p >= 2 and lo < hi, got p={p}, [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / (p - 1) as f64;
        let xs: Vec<f64> = (0..p).map(|i| lo + step * i as f64).collect();
        Self::one_dim(&xs)
    }

    /// A `side x side` lattice on `[lo, hi]^2`, row-major with x varying fastest.
    pub fn grid_2d(side: usize, lo: f64, hi: f64) -> Result<Self> {
        if side < 2 || !(lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "grid_2d needs side >= 2 and lo < hi, got side={side}, [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / (side - 1) as f64;
        let mut coords = DMatrix::zeros(side * side, 2);
        for iy in 0..side {
            for ix in 0..side {
                let row = iy * side + ix;
                coords[(row, 0)] = lo + step * ix as f64;
                coords[(row, 1)] = lo + step * iy as f64;
            }
        }
        Self::new(coords)
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    /// The `p x d` coordinate matrix.
    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    /// Euclidean distance between sites `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let mut s = 0.0;
        for l in 0..self.dim() {
            let d = self.coords[(i, l)] - self.coords[(j, l)];
            s += d * d;
        }
        s.sqrt()
    }

    fn find_duplicate(&self) -> Option<(usize, usize)> {
        let p = self.len();
        for i in 0..p {
            for j in (i + 1)..p {
                if self.distance(i, j) == 0.0 {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

/// Coefficients of one fitted pattern: `p` kernel weights (tied to the sites)
/// and `d + 1` affine weights (intercept first, then one slope per coordinate).
///
/// The kernel weights satisfy the side condition `E' a = 0` of the bordered
/// system (to 1e-8), which keeps the interpolant in the natural spline class.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCoefficients {
    pub kernel_weights: DVector<f64>,
    pub affine_weights: DVector<f64>,
}

/// The roughness penalty matrix `Omega`: symmetric, positive semi-definite,
/// and annihilating affine functions of the coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    omega: DMatrix<f64>,
}

impl PenaltyMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn size(&self) -> usize {
        self.omega.nrows()
    }

    /// The quadratic form `u' Omega u`.
    pub fn quad_form(&self, u: &DVector<f64>) -> f64 {
        (u.transpose() * &self.omega * u)[(0, 0)]
    }
}

/// The radial kernel `g(r)` of the interpolant.
///
/// `g(r) = r^2 log(r) / (16 pi)` for `d = 2` and
/// `Gamma(d/2 - 2) / (16 pi^{d/2}) * r^{4-d}` for `d` in {1, 3}, which
/// reduces to `r^3 / 12` and `-r / (8 pi)`. `g(0) = 0` for every `d` (the
/// analytic limit). Some thin-plate references scale the 2-D kernel by
/// `1/(8 pi)` instead of `1/(16 pi)`; the choice only rescales the
/// smoothness parameter.
pub fn radial_kernel(r: f64, dim: usize) -> Result<f64> {
    if !(1..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    debug_assert!(r >= 0.0, "radial_kernel expects a nonnegative radius");
    Ok(kernel_value(r, dim))
}

fn kernel_value(r: f64, dim: usize) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    match dim {
        1 => r * r * r / 12.0,
        2 => r * r * r.ln() / (16.0 * std::f64::consts::PI),
        3 => -r / (8.0 * std::f64::consts::PI),
        _ => unreachable!("dimension validated upstream"),
    }
}

/// Assembles the kernel matrix `G` (`G[i][j] = g(|s_i - s_j|)`) and the
/// null-space matrix `E` (row `i` = `(1, s_i')`) of the bordered system.
pub fn build_bordered_system(locs: &LocationSet) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = locs.len();
    let d = locs.dim();
    if !(1..=3).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    let mut g = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let r = locs.distance(i, j);
            if r == 0.0 {
                return Err(Error::SingularGeometry(format!(
                    "sites {i} and {j} coincide"
                )));
            }
            let v = kernel_value(r, d);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let mut e = DMatrix::zeros(p, d + 1);
    for i in 0..p {
        e[(i, 0)] = 1.0;
        for l in 0..d {
            e[(i, l + 1)] = locs.coords()[(i, l)];
        }
    }
    Ok((g, e))
}

/// Factored bordered system `[[G, E], [E', 0]]` for one location set.
///
/// Holds the LU factorization so that repeated right-hand sides (one per
/// pattern column) and the penalty matrix reuse the same decomposition.
#[derive(Debug, Clone)]
pub struct BorderedSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    kernel: DMatrix<f64>,
    p: usize,
    dim: usize,
}

impl BorderedSolver {
    pub fn new(locs: &LocationSet) -> Result<Self> {
        let (g, e) = build_bordered_system(locs)?;
        let p = locs.len();
        let d = locs.dim();
        let m = p + d + 1;
        let mut bordered = DMatrix::zeros(m, m);
        bordered.view_mut((0, 0), (p, p)).copy_from(&g);
        bordered.view_mut((0, p), (p, d + 1)).copy_from(&e);
        bordered.view_mut((p, 0), (d + 1, p)).copy_from(&e.transpose());

        let sv = bordered.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if smin <= 0.0 || smax / smin > CONDITION_LIMIT {
            return Err(Error::SingularGeometry(format!(
                "bordered system condition estimate {:.3e} exceeds {CONDITION_LIMIT:.0e}",
                if smin > 0.0 { smax / smin } else { f64::INFINITY }
            )));
        }
        Ok(Self {
            lu: bordered.lu(),
            kernel: g,
            p,
            dim: d,
        })
    }

    pub fn num_sites(&self) -> usize {
        self.p
    }

    /// Solves `[[G, E], [E', 0]] (a; b) = (values; 0)`.
    pub fn solve(&self, values: &DVector<f64>) -> Result<SplineCoefficients> {
        if values.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values, got {}",
                self.p,
                values.len()
            )));
        }
        let mut rhs = DVector::zeros(self.p + self.dim + 1);
        rhs.rows_mut(0, self.p).copy_from(values);
        let sol = self.lu.solve(&rhs).ok_or_else(|| {
            Error::SingularGeometry("bordered system solve failed".into())
        })?;
        Ok(SplineCoefficients {
            kernel_weights: sol.rows(0, self.p).into_owned(),
            affine_weights: sol.rows(self.p, self.dim + 1).into_owned(),
        })
    }

    /// Roughness of the interpolant through `values`, computed as `a' G a`
    /// from a fresh bordered solve. Serves as the independent route against
    /// which the penalty matrix is checked.
    pub fn roughness_of(&self, values: &DVector<f64>) -> Result<f64> {
        let coef = self.solve(values)?;
        Ok((coef.kernel_weights.transpose() * &self.kernel * &coef.kernel_weights)[(0, 0)])
    }

    /// The penalty matrix: the top-left `p x p` block of the inverse of the
    /// bordered matrix, symmetrized as `(A + A') / 2`.
    pub fn penalty_matrix(&self) -> Result<PenaltyMatrix> {
        let inv = self.lu.try_inverse().ok_or_else(|| {
            Error::SingularGeometry("bordered system is not invertible".into())
        })?;
        let a = inv.view((0, 0), (self.p, self.p)).into_owned();
        let omega = (&a + a.transpose()) * 0.5;
        Ok(PenaltyMatrix { omega })
    }
}

/// The roughness penalty matrix for one location set.
pub fn roughness_matrix(locs: &LocationSet) -> Result<PenaltyMatrix> {
    BorderedSolver::new(locs)?.penalty_matrix()
}

/// Interpolating spline coefficients for the given site values.
pub fn solve_spline(locs: &LocationSet, values: &DVector<f64>) -> Result<SplineCoefficients> {
    BorderedSolver::new(locs)?.solve(values)
}

/// Evaluates a fitted pattern at arbitrary query points (`q x d` matrix,
/// one point per row).
pub fn evaluate_spline(
    coef: &SplineCoefficients,
    locs: &LocationSet,
    query: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let d = locs.dim();
    if query.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "query points have {} coordinates, sites have {}",
            query.ncols(),
            d
        )));
    }
    if coef.kernel_weights.len() != locs.len() || coef.affine_weights.len() != d + 1 {
        return Err(Error::DimensionMismatch(
            "spline coefficients do not match the location set".into(),
        ));
    }
    let p = locs.len();
    let mut out = DVector::zeros(query.nrows());
    for q in 0..query.nrows() {
        let mut acc = coef.affine_weights[0];
        for l in 0..d {
            acc += coef.affine_weights[l + 1] * query[(q, l)];
        }
        for i in 0..p {
            let mut s = 0.0;
            for l in 0..d {
                let diff = query[(q, l)] - locs.coords()[(i, l)];
                s += diff * diff;
            }
            acc += coef.kernel_weights[i] * kernel_value(s.sqrt(), d);
        }
        out[q] = acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn gamma_form(r: f64, d: usize) -> f64 {
        // Independent route through the gamma function.
        let gamma = statrs::function::gamma::gamma(d as f64 / 2.0 - 2.0);
        gamma / (16.0 * std::f64::consts::PI.powf(d as f64 / 2.0)) * r.powi(4 - d as i32)
    }

    #[test]
    fn kernel_frozen_values() {
        assert_eq!(radial_kernel(0.0, 2).unwrap(), 0.0);
        assert_eq!(radial_kernel(1.0, 2).unwrap(), 0.0);
        assert_relative_eq!(radial_kernel(2.0, 1).unwrap(), 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(
            radial_kernel(1.0, 3).unwrap(),
            -1.0 / (8.0 * std::f64::consts::PI),
            max_relative = 1e-15
        );
        assert_eq!(radial_kernel(0.0, 1).unwrap(), 0.0);
        assert_eq!(radial_kernel(0.0, 3).unwrap(), 0.0);
    }

    #[test]
    fn kernel_rejects_bad_dimension() {
        assert!(matches!(
            radial_kernel(1.0, 0),
            Err(Error::UnsupportedDimension(0))
        ));
        assert!(matches!(
            radial_kernel(1.0, 4),
            Err(Error::UnsupportedDimension(4))
        ));
    }

    #[test]
    fn kernel_matches_gamma_form() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..20 {
            let r: f64 = rng.gen_range(0.01..10.0);
            assert_relative_eq!(radial_kernel(r, 1).unwrap(), gamma_form(r, 1), max_relative = 1e-12);
            assert_relative_eq!(radial_kernel(r, 3).unwrap(), gamma_form(r, 3), max_relative = 1e-12);
        }
    }

    #[test]
    fn bordered_system_two_sites_1d() {
        let locs = LocationSet::new_unchecked(DMatrix::from_column_slice(2, 1, &[0.0, 1.0]));
        let (g, e) = build_bordered_system(&locs).unwrap();
        assert_relative_eq!(g[(0, 1)], 1.0 / 12.0, max_relative = 1e-15);
        assert_relative_eq!(g[(1, 0)], 1.0 / 12.0, max_relative = 1e-15);
        assert_eq!(g[(0, 0)], 0.0);
        assert_eq!(g[(1, 1)], 0.0);
        assert_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
    }

    #[test]
    fn bordered_system_zero_diagonal() {
        let locs = LocationSet::grid_1d(6, -2.0, 3.0).unwrap();
        let (g, _) = build_bordered_system(&locs).unwrap();
        for i in 0..6 {
            assert_eq!(g[(i, i)], 0.0);
        }
    }

    #[test]
    fn bordered_system_unit_distance_2d() {
        let locs =
            LocationSet::new_unchecked(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        let (g, _) = build_bordered_system(&locs).unwrap();
        assert_eq!(g, DMatrix::zeros(2, 2));
    }

    #[test]
    fn duplicate_sites_rejected() {
        let coords = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 1.0, 2.0]);
        assert!(matches!(
            LocationSet::new(coords),
            Err(Error::SingularGeometry(_))
        ));
    }

    #[test]
    fn too_few_sites_rejected() {
        let coords = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!(matches!(
            LocationSet::new(coords),
            Err(Error::SingularGeometry(_))
        ));
    }

    #[test]
    fn roughness_zero_on_affine() {
        let locs = LocationSet::grid_1d(7, 0.0, 3.0).unwrap();
        let omega = roughness_matrix(&locs).unwrap();
        // u = 2 + 0.5 x
        let u = DVector::from_fn(7, |i, _| 2.0 + 0.5 * locs.coords()[(i, 0)]);
        assert!(omega.quad_form(&u).abs() <= 1e-8);
        let ones = DVector::from_element(7, 1.0);
        assert!((omega.matrix() * &ones).norm() <= 1e-8 * omega.matrix().norm());
    }

    #[test]
    fn roughness_matches_bordered_oracle() {
        let locs = LocationSet::grid_1d(5, 0.0, 4.0).unwrap();
        let solver = BorderedSolver::new(&locs).unwrap();
        let omega = solver.penalty_matrix().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..10 {
            let u = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
            let direct = solver.roughness_of(&u).unwrap();
            let via_omega = omega.quad_form(&u);
            assert!((via_omega - direct).abs() <= 1e-8 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn roughness_symmetric_and_psd() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let coords = DMatrix::from_fn(9, 2, |_, _| rng.gen_range(-1.0..1.0));
        let locs = LocationSet::new(coords).unwrap();
        let omega = roughness_matrix(&locs).unwrap();
        let m = omega.matrix();
        let asym = (m - m.transpose()).norm() / m.norm();
        assert!(asym <= 1e-10);
        let eig = m.clone().symmetric_eigen();
        let lmax = eig.eigenvalues.max();
        let lmin = eig.eigenvalues.min();
        assert!(lmin >= -1e-8 * lmax);
    }

    #[test]
    fn solve_spline_zero_and_affine() {
        let locs = LocationSet::grid_1d(6, -1.0, 4.0).unwrap();
        let zero = solve_spline(&locs, &DVector::zeros(6)).unwrap();
        assert!(zero.kernel_weights.norm() <= 1e-12);
        assert!(zero.affine_weights.norm() <= 1e-12);

        let values = DVector::from_fn(6, |i, _| 3.0 - 2.0 * locs.coords()[(i, 0)]);
        let coef = solve_spline(&locs, &values).unwrap();
        assert!(coef.kernel_weights.norm() <= 1e-8);
        assert_relative_eq!(coef.affine_weights[0], 3.0, epsilon = 1e-8);
        assert_relative_eq!(coef.affine_weights[1], -2.0, epsilon = 1e-8);
    }

    #[test]
    fn spline_interpolates_at_knots() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let locs = LocationSet::grid_1d(8, 0.0, 7.0).unwrap();
        let values = DVector::from_fn(8, |_, _| rng.gen_range(-2.0..2.0));
        let coef = solve_spline(&locs, &values).unwrap();
        // Side condition of the bordered system.
        let (_, e) = build_bordered_system(&locs).unwrap();
        assert!((e.transpose() * &coef.kernel_weights).norm() <= 1e-8);
        let at_knots = evaluate_spline(&coef, &locs, locs.coords()).unwrap();
        for i in 0..8 {
            assert!((at_knots[i] - values[i]).abs() <= 1e-8 * (1.0 + values[i].abs()));
        }
    }

    #[test]
    fn evaluate_zero_and_affine() {
        let locs = LocationSet::grid_1d(5, 0.0, 4.0).unwrap();
        let zero = SplineCoefficients {
            kernel_weights: DVector::zeros(5),
            affine_weights: DVector::zeros(2),
        };
        let out = evaluate_spline(&zero, &locs, &DMatrix::from_row_slice(2, 1, &[0.3, 2.5])).unwrap();
        assert_eq!(out, DVector::zeros(2));

        let affine = SplineCoefficients {
            kernel_weights: DVector::zeros(5),
            affine_weights: DVector::from_column_slice(&[1.0, 2.0]),
        };
        let out = evaluate_spline(&affine, &locs, &DMatrix::from_row_slice(1, 1, &[3.0])).unwrap();
        assert_relative_eq!(out[0], 7.0, epsilon = 1e-14);
    }

    #[test]
    fn evaluate_rejects_dimension_mismatch() {
        let locs = LocationSet::grid_1d(5, 0.0, 4.0).unwrap();
        let coef = SplineCoefficients {
            kernel_weights: DVector::zeros(5),
            affine_weights: DVector::zeros(2),
        };
        let query = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert!(matches!(
            evaluate_spline(&coef, &locs, &query),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn collinear_2d_sites_rejected() {
        // Sites on a line in 2-D leave E rank-deficient.
        let coords = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let locs = LocationSet::new(coords).unwrap();
        assert!(matches!(
            BorderedSolver::new(&locs),
            Err(Error::SingularGeometry(_))
        ));
    }
}
