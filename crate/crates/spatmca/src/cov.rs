//! Paired observations and the sample cross-covariance matrix, the solver's
//! sole data summary.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spline::LocationSet;

/// Joint observations of the two fields: `n` rows (time) by `p_j` columns
/// (sites), with the site geometry attached.
#[derive(Debug, Clone)]
pub struct PairedSample {
    y1: DMatrix<f64>,
    y2: DMatrix<f64>,
    locs1: LocationSet,
    locs2: LocationSet,
}

impl PairedSample {
    pub fn new(
        y1: DMatrix<f64>,
        y2: DMatrix<f64>,
        locs1: LocationSet,
        locs2: LocationSet,
    ) -> Result<Self> {
        if y1.nrows() != y2.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "y1 has {} rows, y2 has {}",
                y1.nrows(),
                y2.nrows()
            )));
        }
        if y1.nrows() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 joint observations, got {}",
                y1.nrows()
            )));
        }
        if y1.ncols() != locs1.len() || y2.ncols() != locs2.len() {
            return Err(Error::DimensionMismatch(format!(
                "column counts ({}, {}) do not match site counts ({}, {})",
                y1.ncols(),
                y2.ncols(),
                locs1.len(),
                locs2.len()
            )));
        }
        if y1.iter().chain(y2.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(
                "observation matrices must contain only finite values".into(),
            ));
        }
        Ok(Self { y1, y2, locs1, locs2 })
    }

    pub fn y1(&self) -> &DMatrix<f64> {
        &self.y1
    }

    pub fn y2(&self) -> &DMatrix<f64> {
        &self.y2
    }

    pub fn locs1(&self) -> &LocationSet {
        &self.locs1
    }

    pub fn locs2(&self) -> &LocationSet {
        &self.locs2
    }

    pub fn n(&self) -> usize {
        self.y1.nrows()
    }

    pub fn p1(&self) -> usize {
        self.y1.ncols()
    }

    pub fn p2(&self) -> usize {
        self.y2.ncols()
    }

    /// The sub-sample holding only the given rows (used by cross-validation).
    pub fn take_rows(&self, rows: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.y1.select_rows(rows), self.y2.select_rows(rows))
    }
}

/// The sample cross-covariance `S12 = Y1' Y2 / n` (divisor `n`, not `n - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCovMatrix {
    s12: DMatrix<f64>,
    n_used: usize,
}

impl CrossCovMatrix {
    /// Wraps an already-computed cross-covariance matrix.
    pub fn from_matrix(s12: DMatrix<f64>, n_used: usize) -> Result<Self> {
        if s12.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(
                "cross-covariance entries must be finite".into(),
            ));
        }
        Ok(Self { s12, n_used })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s12
    }

    pub fn n_used(&self) -> usize {
        self.n_used
    }

    pub fn p1(&self) -> usize {
        self.s12.nrows()
    }

    pub fn p2(&self) -> usize {
        self.s12.ncols()
    }

    /// Largest singular value, used by the solver's automatic penalty rule.
    pub fn max_singular_value(&self) -> f64 {
        max_singular_value(self)
    }
}

/// Subtracts the mean of each column.
pub fn center_columns(y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = y.clone();
    if y.nrows() == 0 {
        return out;
    }
    for j in 0..y.ncols() {
        let mean = y.column(j).mean();
        for i in 0..y.nrows() {
            out[(i, j)] -= mean;
        }
    }
    out
}

/// `S12 = Y1' Y2 / n` from raw matrices, optionally after column centering.
pub fn cross_cov_matrix(
    y1: &DMatrix<f64>,
    y2: &DMatrix<f64>,
    center: bool,
) -> Result<CrossCovMatrix> {
    if y1.nrows() != y2.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "y1 has {} rows, y2 has {}",
            y1.nrows(),
            y2.nrows()
        )));
    }
    let n = y1.nrows();
    if n == 0 || (center && n < 2) {
        return Err(Error::InsufficientData(format!(
            "cross-covariance needs at least {} rows, got {n}",
            if center { 2 } else { 1 }
        )));
    }
    let s12 = if center {
        let c1 = center_columns(y1);
        let c2 = center_columns(y2);
        c1.transpose() * c2 / n as f64
    } else {
        y1.transpose() * y2 / n as f64
    };
    CrossCovMatrix::from_matrix(s12, n)
}

/// The cross-covariance of a paired sample.
pub fn sample_cross_cov(sample: &PairedSample, center: bool) -> Result<CrossCovMatrix> {
    cross_cov_matrix(sample.y1(), sample.y2(), center)
}

/// Largest singular value of the cross-covariance matrix.
pub fn max_singular_value(s12: &CrossCovMatrix) -> f64 {
    if s12.matrix().is_empty() {
        return 0.0;
    }
    s12.matrix().clone().singular_values().max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn centering_examples() {
        let zero_mean = DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]);
        assert_eq!(center_columns(&zero_mean), zero_mean);

        let constant = DMatrix::from_column_slice(3, 1, &[4.0, 4.0, 4.0]);
        assert_eq!(center_columns(&constant), DMatrix::zeros(3, 1));

        let col = DMatrix::from_column_slice(2, 1, &[1.0, 3.0]);
        assert_eq!(
            center_columns(&col),
            DMatrix::from_column_slice(2, 1, &[-1.0, 1.0])
        );
    }

    #[test]
    fn cross_cov_examples() {
        let y1 = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let y2 = DMatrix::from_column_slice(2, 1, &[2.0, -2.0]);
        let s = cross_cov_matrix(&y1, &y2, false).unwrap();
        assert_eq!(s.matrix()[(0, 0)], 2.0);
        assert_eq!(s.n_used(), 2);

        let zeros = DMatrix::zeros(2, 3);
        let s = cross_cov_matrix(&y1, &zeros, false).unwrap();
        assert_eq!(s.matrix(), &DMatrix::zeros(1, 3));

        let eye = DMatrix::identity(2, 2);
        let s = cross_cov_matrix(&eye, &eye, false).unwrap();
        assert_eq!(
            s.matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5])
        );
    }

    #[test]
    fn cross_cov_errors() {
        let y1 = DMatrix::zeros(3, 2);
        let y2 = DMatrix::zeros(2, 2);
        assert!(matches!(
            cross_cov_matrix(&y1, &y2, false),
            Err(Error::DimensionMismatch(_))
        ));

        let one_row = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(
            cross_cov_matrix(&one_row, &one_row, true),
            Err(Error::InsufficientData(_))
        ));
        assert!(cross_cov_matrix(&one_row, &one_row, false).is_ok());
    }

    #[test]
    fn max_singular_value_examples() {
        let z = CrossCovMatrix::from_matrix(DMatrix::zeros(3, 2), 4).unwrap();
        assert_eq!(max_singular_value(&z), 0.0);

        let d = CrossCovMatrix::from_matrix(
            DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]),
            4,
        )
        .unwrap();
        assert_relative_eq!(max_singular_value(&d), 3.0, max_relative = 1e-12);

        // rank-1: c * u v' with unit u, v
        let u = DVector::from_column_slice(&[0.6, 0.8]);
        let v = DVector::from_column_slice(&[1.0 / 2.0_f64.sqrt(), -1.0 / 2.0_f64.sqrt()]);
        let c = -2.5_f64;
        let m = CrossCovMatrix::from_matrix(c * &u * v.transpose(), 4).unwrap();
        assert_relative_eq!(max_singular_value(&m), c.abs(), max_relative = 1e-12);
    }

    #[test]
    fn transpose_symmetry() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let y1 = DMatrix::from_fn(7, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y2 = DMatrix::from_fn(7, 4, |_, _| rng.gen_range(-1.0..1.0));
        let a = cross_cov_matrix(&y1, &y2, true).unwrap();
        let b = cross_cov_matrix(&y2, &y1, true).unwrap();
        let diff = (a.matrix() - b.matrix().transpose()).abs().max();
        assert!(diff <= 1e-14);
    }

    #[test]
    fn scaling_linearity() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let y1 = DMatrix::from_fn(6, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y2 = DMatrix::from_fn(6, 2, |_, _| rng.gen_range(-1.0..1.0));
        let base = cross_cov_matrix(&y1, &y2, false).unwrap();
        let scaled = cross_cov_matrix(&(3.5 * &y1), &y2, false).unwrap();
        let err = (scaled.matrix() - 3.5 * base.matrix()).norm() / base.matrix().norm();
        assert!(err <= 1e-12);
    }

    #[test]
    fn paired_sample_validation() {
        let locs1 = crate::spline::LocationSet::grid_1d(3, 0.0, 2.0).unwrap();
        let locs2 = crate::spline::LocationSet::grid_1d(4, 0.0, 3.0).unwrap();
        let ok = PairedSample::new(
            DMatrix::zeros(5, 3),
            DMatrix::zeros(5, 4),
            locs1.clone(),
            locs2.clone(),
        );
        assert!(ok.is_ok());

        let row_mismatch = PairedSample::new(
            DMatrix::zeros(5, 3),
            DMatrix::zeros(4, 4),
            locs1.clone(),
            locs2.clone(),
        );
        assert!(matches!(row_mismatch, Err(Error::DimensionMismatch(_))));

        let col_mismatch =
            PairedSample::new(DMatrix::zeros(5, 2), DMatrix::zeros(5, 4), locs1, locs2);
        assert!(matches!(col_mismatch, Err(Error::DimensionMismatch(_))));
    }
}
