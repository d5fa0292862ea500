//! Model assembly: pattern-strength estimation, cross-covariance
//! reconstruction, and spline-based prediction at arbitrary locations.

use nalgebra::{DMatrix, DVector};

use crate::admm::{self, AdmmSolution, CoupledPatterns, PenaltyConfig, Residuals};
use crate::cov::CrossCovMatrix;
use crate::error::{Error, Result};
use crate::spline::{
    evaluate_spline, BorderedSolver, LocationSet, PenaltyMatrix, SplineCoefficients,
};

/// A fitted model: patterns at the sites, their strengths, and the spline
/// coefficients that carry each pattern off-grid.
#[derive(Debug, Clone)]
pub struct CoupledPatternModel {
    pub patterns: CoupledPatterns,
    /// Pattern strengths; entry `k` is `max(u_k' S12 v_k, 0)`. Kept in the
    /// solver's column order (clamping is not followed by re-sorting).
    pub d_hat: Vec<f64>,
    pub u_splines: Vec<SplineCoefficients>,
    pub v_splines: Vec<SplineCoefficients>,
    pub locs1: LocationSet,
    pub locs2: LocationSet,
    /// The tuning values the model was fit with.
    pub config: PenaltyConfig,
    /// The augmented-Lagrangian parameter actually used.
    pub zeta: f64,
    /// Final scaled solver residuals.
    pub residuals: Residuals,
}

/// `d_hat[k] = max(u_k' S12 v_k, 0)`: the nonnegative minimizer of
/// `|S12 - sum_k u_k d_k v_k'|_F^2` given orthonormal patterns.
pub fn estimate_d(patterns: &CoupledPatterns, s12: &CrossCovMatrix) -> Result<Vec<f64>> {
    let k = patterns.u_hat.ncols();
    if patterns.u_hat.nrows() != s12.p1()
        || patterns.v_hat.nrows() != s12.p2()
        || patterns.v_hat.ncols() != k
    {
        return Err(Error::DimensionMismatch(format!(
            "patterns are {}x{k} and {}x{}, cross-covariance is {}x{}",
            patterns.u_hat.nrows(),
            patterns.v_hat.nrows(),
            patterns.v_hat.ncols(),
            s12.p1(),
            s12.p2()
        )));
    }
    Ok((0..k)
        .map(|kk| {
            let c = (patterns.u_hat.column(kk).transpose()
                * s12.matrix()
                * patterns.v_hat.column(kk))[(0, 0)];
            c.max(0.0)
        })
        .collect())
}

/// Fits the full model for one penalty configuration, reusing precomputed
/// roughness matrices (the hot path for cross-validation sweeps).
pub fn fit_with_penalties(
    s12: &CrossCovMatrix,
    locs1: &LocationSet,
    locs2: &LocationSet,
    omega1: &PenaltyMatrix,
    omega2: &PenaltyMatrix,
    config: &PenaltyConfig,
) -> Result<CoupledPatternModel> {
    if locs1.len() != s12.p1() || locs2.len() != s12.p2() {
        return Err(Error::DimensionMismatch(format!(
            "location sets have {} and {} sites, cross-covariance is {}x{}",
            locs1.len(),
            locs2.len(),
            s12.p1(),
            s12.p2()
        )));
    }
    let AdmmSolution { patterns, state, zeta } = admm::solve(s12, omega1, omega2, config)?;
    let residuals = state.residuals;
    let d_hat = estimate_d(&patterns, s12)?;

    let solver1 = BorderedSolver::new(locs1)?;
    let solver2 = BorderedSolver::new(locs2)?;
    let mut u_splines = Vec::with_capacity(config.rank);
    let mut v_splines = Vec::with_capacity(config.rank);
    for k in 0..config.rank {
        u_splines.push(solver1.solve(&patterns.u_hat.column(k).into_owned())?);
        v_splines.push(solver2.solve(&patterns.v_hat.column(k).into_owned())?);
    }
    Ok(CoupledPatternModel {
        patterns,
        d_hat,
        u_splines,
        v_splines,
        locs1: locs1.clone(),
        locs2: locs2.clone(),
        config: *config,
        zeta,
        residuals,
    })
}

/// Fits the full model for one penalty configuration, building the roughness
/// matrices from the location sets.
pub fn fit(
    s12: &CrossCovMatrix,
    locs1: &LocationSet,
    locs2: &LocationSet,
    config: &PenaltyConfig,
) -> Result<CoupledPatternModel> {
    let omega1 = crate::spline::roughness_matrix(locs1)?;
    let omega2 = crate::spline::roughness_matrix(locs2)?;
    fit_with_penalties(s12, locs1, locs2, &omega1, &omega2, config)
}

impl CoupledPatternModel {
    pub fn rank(&self) -> usize {
        self.patterns.u_hat.ncols()
    }

    /// The estimated cross-covariance at the observation sites:
    /// `U diag(d) V'`.
    pub fn reconstruct_cross_cov(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.d_hat));
        &self.patterns.u_hat * d * self.patterns.v_hat.transpose()
    }

    /// Evaluates every pattern at the query points (`q x d` matrices, one
    /// point per row); returns `|q1| x K` and `|q2| x K` matrices.
    pub fn predict_patterns(
        &self,
        query1: &DMatrix<f64>,
        query2: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let k = self.rank();
        let mut u = DMatrix::zeros(query1.nrows(), k);
        let mut v = DMatrix::zeros(query2.nrows(), k);
        for kk in 0..k {
            let uk = evaluate_spline(&self.u_splines[kk], &self.locs1, query1)?;
            let vk = evaluate_spline(&self.v_splines[kk], &self.locs2, query2)?;
            u.set_column(kk, &uk);
            v.set_column(kk, &vk);
        }
        Ok((u, v))
    }

    /// The estimated cross-covariance between arbitrary locations of the two
    /// domains: `sum_k d_k u_k(s1) v_k(s2)`.
    pub fn predict_cross_cov(
        &self,
        query1: &DMatrix<f64>,
        query2: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        let (u, v) = self.predict_patterns(query1, query2)?;
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.d_hat));
        Ok(u * d * v.transpose())
    }
}
