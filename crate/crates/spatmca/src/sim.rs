//! Synthetic bivariate fields and the four-method benchmark harness.
//!
//! Data are drawn from a pair of latent fields whose cross-covariance is
//! exactly `U diag(d1, d2) V'` for two fixed coupled pattern pairs (a smooth
//! bump and an oscillating second pattern per field), plus independent
//! observation noise. The harness fits each competing method — plain MCA,
//! smoothness-only, sparseness-only, and the full two-step procedure — and
//! scores the estimated cross-covariance against the truth by mean squared
//! entry error.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::admm::{PenaltyConfig, Zeta};
use crate::cov::{sample_cross_cov, PairedSample};
use crate::cv::{select_rank, two_step, CVConfig};
use crate::error::{Error, Result};
use crate::model::fit_with_penalties;
use crate::spline::{roughness_matrix, LocationSet};

/// One synthetic-experiment design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Spatial dimension of both domains (1 or 2).
    pub dim: usize,
    /// Number of joint observations.
    pub n: usize,
    /// Site counts; in two dimensions these must be perfect squares.
    pub p1: usize,
    pub p2: usize,
    /// Domain bounds per field (each axis spans the same interval).
    pub bounds1: (f64, f64),
    pub bounds2: (f64, f64),
    /// True pattern strengths, `d1 >= d2 >= 0`; `d1 <= 1` keeps the joint
    /// covariance positive semi-definite.
    pub d1: f64,
    pub d2: f64,
    /// Observation-noise standard deviations.
    pub noise_sd1: f64,
    pub noise_sd2: f64,
    pub seed: u64,
}

impl SimConfig {
    /// The one-dimensional benchmark design: 50 sites per field on
    /// `[-7, 7]`, 1000 observations, unit noise.
    pub fn benchmark_1d() -> Self {
        Self {
            dim: 1,
            n: 1000,
            p1: 50,
            p2: 50,
            bounds1: (-7.0, 7.0),
            bounds2: (-7.0, 7.0),
            d1: 1.0,
            d2: 0.0,
            noise_sd1: 1.0,
            noise_sd2: 1.0,
            seed: 0,
        }
    }

    /// The two-dimensional benchmark design: a 25x25 lattice on `[-5, 5]^2`
    /// against a 20x20 lattice on `[-7, 7]^2`, 5000 observations.
    pub fn benchmark_2d() -> Self {
        Self {
            dim: 2,
            n: 5000,
            p1: 25 * 25,
            p2: 20 * 20,
            bounds1: (-5.0, 5.0),
            bounds2: (-7.0, 7.0),
            d1: 1.0,
            d2: 0.0,
            noise_sd1: 1.0,
            noise_sd2: 1.0,
            seed: 0,
        }
    }

    /// A shrunken one-dimensional design that keeps full comparison runs
    /// fast: 20 sites per field on `[-7, 7]`, 200 observations.
    pub fn desk_1d() -> Self {
        Self {
            dim: 1,
            n: 200,
            p1: 20,
            p2: 20,
            bounds1: (-7.0, 7.0),
            bounds2: (-7.0, 7.0),
            d1: 1.0,
            d2: 0.0,
            noise_sd1: 1.0,
            noise_sd2: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::InvalidConfig(format!(
                "synthetic designs are defined for 1 or 2 dimensions, got {}",
                self.dim
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig("need at least 2 observations".into()));
        }
        if !(self.d1 >= self.d2 && self.d2 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "need d1 >= d2 >= 0, got ({}, {})",
                self.d1, self.d2
            )));
        }
        if self.d1 > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "d1 = {} > 1 makes the joint covariance indefinite",
                self.d1
            )));
        }
        if self.noise_sd1 < 0.0 || self.noise_sd2 < 0.0 {
            return Err(Error::InvalidConfig("noise sd must be nonnegative".into()));
        }
        if self.dim == 2 {
            for (name, p) in [("p1", self.p1), ("p2", self.p2)] {
                let side = (p as f64).sqrt().round() as usize;
                if side * side != p {
                    return Err(Error::InvalidConfig(format!(
                        "{name} = {p} is not a perfect square; two-dimensional \
                         designs use square lattices"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The site grids for both fields.
    pub fn locations(&self) -> Result<(LocationSet, LocationSet)> {
        self.validate()?;
        let build = |p: usize, (lo, hi): (f64, f64)| -> Result<LocationSet> {
            match self.dim {
                1 => LocationSet::grid_1d(p, lo, hi),
                2 => {
                    let side = (p as f64).sqrt().round() as usize;
                    LocationSet::grid_2d(side, lo, hi)
                }
                _ => unreachable!("dimension validated"),
            }
        };
        Ok((build(self.p1, self.bounds1)?, build(self.p2, self.bounds2)?))
    }
}

/// The true coupled patterns evaluated at the sites, each of unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct TruePatterns {
    pub u1: DVector<f64>,
    pub v1: DVector<f64>,
    pub u2: DVector<f64>,
    pub v2: DVector<f64>,
    /// Normalization constants: `u1 = c1 * raw`, etc.
    pub c: [f64; 4],
}

impl TruePatterns {
    /// `p1 x 2` matrix `[u1 u2]`.
    pub fn u_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&[self.u1.clone(), self.u2.clone()])
    }

    /// `p2 x 2` matrix `[v1 v2]`.
    pub fn v_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&[self.v1.clone(), self.v2.clone()])
    }

    /// The true cross-covariance `U diag(d1, d2) V'`.
    pub fn cross_cov(&self, d1: f64, d2: f64) -> DMatrix<f64> {
        d1 * &self.u1 * self.v1.transpose() + d2 * &self.u2 * self.v2.transpose()
    }
}

fn normalize_with_constant(raw: DVector<f64>) -> (DVector<f64>, f64) {
    let norm = raw.norm();
    if norm == 0.0 {
        return (raw, 1.0);
    }
    (&raw / norm, 1.0 / norm)
}

/// The two coupled pattern pairs at the design's sites: a centered bump and
/// its oscillating partner for field 1, the same shapes shifted to 2 for
/// field 2, each normalized to unit Euclidean norm over its grid.
pub fn true_patterns(cfg: &SimConfig) -> Result<TruePatterns> {
    let (locs1, locs2) = cfg.locations()?;
    let bump = |coords: &DMatrix<f64>, i: usize, shift: f64, scale: f64| -> f64 {
        let mut sq = 0.0;
        for l in 0..coords.ncols() {
            let x = coords[(i, l)] - shift;
            sq += x * x;
        }
        (-sq / scale).exp()
    };
    let prod = |coords: &DMatrix<f64>, i: usize, shift: f64| -> f64 {
        (0..coords.ncols()).map(|l| coords[(i, l)] - shift).product()
    };
    let (c1m, c2m) = (locs1.coords(), locs2.coords());
    let u1_raw = DVector::from_fn(cfg.p1, |i, _| bump(c1m, i, 0.0, 1.0));
    let v1_raw = DVector::from_fn(cfg.p2, |i, _| bump(c2m, i, 2.0, 2.0));
    let u2_raw = DVector::from_fn(cfg.p1, |i, _| prod(c1m, i, 0.0) * bump(c1m, i, 0.0, 1.0));
    let v2_raw = DVector::from_fn(cfg.p2, |i, _| prod(c2m, i, 2.0) * bump(c2m, i, 2.0, 2.0));
    let (u1, c1) = normalize_with_constant(u1_raw);
    let (v1, c2) = normalize_with_constant(v1_raw);
    let (u2, c3) = normalize_with_constant(u2_raw);
    let (v2, c4) = normalize_with_constant(v2_raw);
    Ok(TruePatterns {
        u1,
        v1,
        u2,
        v2,
        c: [c1, c2, c3, c4],
    })
}

/// Draws `n` joint observations with population cross-covariance
/// `U diag(d) V'` and unit marginal covariances, plus independent Gaussian
/// noise. Deterministic for a fixed seed.
///
/// Sampling is conditional: the second latent field is standard normal and
/// the first is `U D V' eta2` plus Gaussian innovation with covariance
/// `I - U D^2 U'` (a symmetric square root; eigenvalues pushed to zero from
/// below when `d1 = 1` puts the covariance on the boundary).
pub fn generate_sample(cfg: &SimConfig) -> Result<PairedSample> {
    cfg.validate()?;
    let (locs1, locs2) = cfg.locations()?;
    let pats = true_patterns(cfg)?;
    let u = pats.u_matrix();
    let v = pats.v_matrix();
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(&[cfg.d1, cfg.d2]));
    let cross = &u * &d * v.transpose();

    // Symmetric square root of I - U D^2 U'.
    let mut cond = DMatrix::identity(cfg.p1, cfg.p1);
    cond -= &u * &d * &d * u.transpose();
    let eig = cond.symmetric_eigen();
    let sqrt_vals = DVector::from_fn(cfg.p1, |i, _| eig.eigenvalues[i].max(0.0).sqrt());
    let sqrt_cond = &eig.eigenvectors
        * DMatrix::from_diagonal(&sqrt_vals)
        * eig.eigenvectors.transpose();

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut y1 = DMatrix::zeros(cfg.n, cfg.p1);
    let mut y2 = DMatrix::zeros(cfg.n, cfg.p2);
    let mut z = DVector::zeros(cfg.p2);
    let mut w = DVector::zeros(cfg.p1);
    for i in 0..cfg.n {
        for j in 0..cfg.p2 {
            z[j] = rng.sample(StandardNormal);
        }
        for j in 0..cfg.p1 {
            w[j] = rng.sample(StandardNormal);
        }
        let eta1 = &cross * &z + &sqrt_cond * &w;
        for j in 0..cfg.p1 {
            let e: f64 = rng.sample(StandardNormal);
            y1[(i, j)] = eta1[j] + cfg.noise_sd1 * e;
        }
        for j in 0..cfg.p2 {
            let e: f64 = rng.sample(StandardNormal);
            y2[(i, j)] = z[j] + cfg.noise_sd2 * e;
        }
    }
    PairedSample::new(y1, y2, locs1, locs2)
}

/// Mean squared entry error between two same-shape matrices.
pub fn loss(c_hat: &DMatrix<f64>, c_true: &DMatrix<f64>) -> Result<f64> {
    if c_hat.shape() != c_true.shape() {
        return Err(Error::DimensionMismatch(format!(
            "shapes {:?} and {:?} differ",
            c_hat.shape(),
            c_true.shape()
        )));
    }
    let (p1, p2) = c_hat.shape();
    Ok((c_hat - c_true).norm_squared() / (p1 * p2) as f64)
}

/// The competing estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Plain maximum covariance analysis: all penalties zero.
    Mca,
    /// Smoothness penalties only.
    SmoothOnly,
    /// Sparseness penalties only.
    SparseOnly,
    /// The full two-step procedure.
    SpatMca,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Mca,
        Method::SmoothOnly,
        Method::SparseOnly,
        Method::SpatMca,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Mca => "mca",
            Method::SmoothOnly => "smooth_only",
            Method::SparseOnly => "sparse_only",
            Method::SpatMca => "spatmca",
        }
    }

    /// The method's restriction of the tuning grids.
    pub fn restrict(&self, cv: &CVConfig) -> CVConfig {
        let zero = vec![0.0];
        let mut out = cv.clone();
        match self {
            Method::Mca => {
                out.tau1_grid_u = zero.clone();
                out.tau1_grid_v = zero.clone();
                out.tau2_grid_u = zero.clone();
                out.tau2_grid_v = zero;
            }
            Method::SmoothOnly => {
                out.tau2_grid_u = zero.clone();
                out.tau2_grid_v = zero;
            }
            Method::SparseOnly => {
                out.tau1_grid_u = zero.clone();
                out.tau1_grid_v = zero;
            }
            Method::SpatMca => {}
        }
        out
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mca" => Ok(Method::Mca),
            "smooth_only" | "smooth" => Ok(Method::SmoothOnly),
            "sparse_only" | "sparse" => Ok(Method::SparseOnly),
            "spatmca" => Ok(Method::SpatMca),
            other => Err(Error::InvalidConfig(format!(
                "unknown method '{other}' (expected mca, smooth_only, sparse_only, or spatmca)"
            ))),
        }
    }
}

/// Whether the rank is fixed in advance or selected by the rank rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KPolicy {
    Fixed(usize),
    Select,
}

/// One benchmark row: a method's tuning outcome and loss on one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub method: Method,
    pub replicate: usize,
    pub k_used: usize,
    /// For `KPolicy::Select`: whether the rank scan stopped by the rule
    /// rather than by exhausting `k_max`.
    pub k_converged: Option<bool>,
    pub tau1u: f64,
    pub tau1v: f64,
    pub tau2u: f64,
    pub tau2v: f64,
    pub cv_score: f64,
    pub loss: f64,
}

/// Benchmark results keyed by (method, replicate).
#[derive(Debug, Clone, Default)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn losses(&self, method: Method) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.loss)
            .collect()
    }

    /// Median loss for one method (mean of the middle pair for even counts).
    pub fn median_loss(&self, method: Method) -> Option<f64> {
        let mut l = self.losses(method);
        if l.is_empty() {
            return None;
        }
        l.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = l.len();
        Some(if n % 2 == 1 {
            l[n / 2]
        } else {
            0.5 * (l[n / 2 - 1] + l[n / 2])
        })
    }
}

/// Runs the full benchmark: for each replicate (seeded `cfg.seed + index`)
/// and method, tunes under the method's grid restriction, fits on the full
/// sample, and scores against the true cross-covariance.
pub fn run_comparison(
    cfg: &SimConfig,
    methods: &[Method],
    k_policy: KPolicy,
    replicates: usize,
    cv: &CVConfig,
) -> Result<ComparisonTable> {
    cfg.validate()?;
    cv.validate()?;
    if replicates == 0 {
        return Err(Error::InvalidConfig("need at least 1 replicate".into()));
    }
    if let KPolicy::Fixed(k) = k_policy {
        if k == 0 || k > cfg.p1.min(cfg.p2) {
            return Err(Error::InvalidConfig(format!(
                "fixed rank {k} out of range 1..={}",
                cfg.p1.min(cfg.p2)
            )));
        }
    }
    let (locs1, locs2) = cfg.locations()?;
    let omega1 = roughness_matrix(&locs1)?;
    let omega2 = roughness_matrix(&locs2)?;
    let truth = true_patterns(cfg)?.cross_cov(cfg.d1, cfg.d2);

    let per_replicate: Result<Vec<Vec<ComparisonRow>>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let rep_cfg = SimConfig {
                seed: cfg.seed + rep as u64,
                ..*cfg
            };
            let sample = generate_sample(&rep_cfg)?;
            let s12 = sample_cross_cov(&sample, false)?;
            let mut rows = Vec::with_capacity(methods.len());
            for method in methods {
                let mut mcv = method.restrict(cv);
                mcv.seed = cv.seed + rep as u64;
                let (selection, k_used, k_converged) = match k_policy {
                    KPolicy::Fixed(k) => {
                        let (sel, _) = two_step(&sample, &mcv, k)?;
                        (sel, k, None)
                    }
                    KPolicy::Select => {
                        let result = select_rank(&sample, &mcv)?;
                        (result.selected, result.k_selected, Some(result.k_converged))
                    }
                };
                let config = PenaltyConfig {
                    tau1u: selection.tau1u,
                    tau1v: selection.tau1v,
                    tau2u: selection.tau2u,
                    tau2v: selection.tau2v,
                    rank: k_used,
                    zeta: Zeta::Auto,
                    tol: mcv.tol,
                    max_iter: mcv.max_iter,
                };
                let model =
                    fit_with_penalties(&s12, &locs1, &locs2, &omega1, &omega2, &config)?;
                let c_hat = model.reconstruct_cross_cov();
                rows.push(ComparisonRow {
                    method: *method,
                    replicate: rep,
                    k_used,
                    k_converged,
                    tau1u: selection.tau1u,
                    tau1v: selection.tau1v,
                    tau2u: selection.tau2u,
                    tau2v: selection.tau2v,
                    cv_score: selection.score,
                    loss: loss(&c_hat, &truth)?,
                });
            }
            Ok(rows)
        })
        .collect();

    Ok(ComparisonTable {
        rows: per_replicate?.into_iter().flatten().collect(),
    })
}
