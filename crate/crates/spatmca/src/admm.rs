//! The core solver: an alternating-direction method of multipliers for the
//! penalized maximum-covariance problem.
//!
//! The stacked pattern matrix `G = (U; V)` maximizes `tr(U' S12 V)` minus
//! roughness penalties `tau1u u' Omega1 u`, `tau1v v' Omega2 v` and lasso
//! penalties `tau2u |u|_1`, `tau2v |v|_1`, subject to each block having
//! orthonormal columns. The splitting introduces a lasso copy `R` and an
//! orthonormal copy `Q` of `G`, with multipliers `gamma_r`, `gamma_q`, and
//! cycles closed-form updates: a linear solve in `(zeta I - Theta)`, entrywise
//! soft-thresholding, and per-block polar factors.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::cov::CrossCovMatrix;
use crate::error::{Error, Result};
use crate::spline::PenaltyMatrix;

/// Singular values below this fraction of the largest are treated as zero in
/// the polar-factor update, triggering the deterministic completion path.
const POLAR_RANK_TOL: f64 = 1e-12;

/// How the augmented-Lagrangian parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Zeta {
    /// `10 * sigma_max(S12)`, doubled as needed until `zeta I - Theta` is
    /// positive definite (with a floor of 1 when `S12 = 0`).
    Auto,
    /// A caller-supplied positive value; the solver fails rather than raise it.
    Fixed(f64),
}

/// Tuning values and iteration controls for one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    /// Smoothness weights for the two fields.
    pub tau1u: f64,
    pub tau1v: f64,
    /// Sparseness weights for the two fields.
    pub tau2u: f64,
    pub tau2v: f64,
    /// Number of coupled pattern pairs `K`.
    pub rank: usize,
    pub zeta: Zeta,
    /// Convergence tolerance on the scaled residuals.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            tau1u: 0.0,
            tau1v: 0.0,
            tau2u: 0.0,
            tau2v: 0.0,
            rank: 1,
            zeta: Zeta::Auto,
            tol: 1e-4,
            max_iter: 5000,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self, p1: usize, p2: usize) -> Result<()> {
        let taus = [self.tau1u, self.tau1v, self.tau2u, self.tau2v];
        if taus.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidConfig(
                "penalty weights must be finite and nonnegative".into(),
            ));
        }
        if self.rank == 0 || self.rank > p1.min(p2) {
            return Err(Error::InvalidConfig(format!(
                "rank {} out of range 1..={}",
                self.rank,
                p1.min(p2)
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if let Zeta::Fixed(z) = self.zeta {
            if !(z > 0.0 && z.is_finite()) {
                return Err(Error::InvalidConfig("zeta must be positive".into()));
            }
        }
        Ok(())
    }
}

/// The symmetric matrix coupling the two fields:
/// `[[-tau1u Omega1, S12/2], [S12'/2, -tau1v Omega2]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMatrix {
    theta: DMatrix<f64>,
    p1: usize,
}

impl ThetaMatrix {
    /// Wraps a symmetric matrix with the given first-block size.
    pub fn new(theta: DMatrix<f64>, p1: usize) -> Result<Self> {
        if theta.nrows() != theta.ncols() {
            return Err(Error::DimensionMismatch("theta must be square".into()));
        }
        if p1 > theta.nrows() {
            return Err(Error::DimensionMismatch(
                "block size exceeds theta dimension".into(),
            ));
        }
        let asym = (&theta - theta.transpose()).norm();
        if asym > 1e-10 * (1.0 + theta.norm()) {
            return Err(Error::InvalidConfig("theta must be symmetric".into()));
        }
        Ok(Self { theta, p1 })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn p1(&self) -> usize {
        self.p1
    }

    pub fn p2(&self) -> usize {
        self.theta.nrows() - self.p1
    }
}

/// Assembles `Theta` from the cross-covariance and the two penalty matrices.
pub fn build_theta(
    s12: &CrossCovMatrix,
    omega1: &PenaltyMatrix,
    omega2: &PenaltyMatrix,
    tau1u: f64,
    tau1v: f64,
) -> Result<ThetaMatrix> {
    let (p1, p2) = (s12.p1(), s12.p2());
    if omega1.size() != p1 || omega2.size() != p2 {
        return Err(Error::DimensionMismatch(format!(
            "penalty matrices are {}x{} and {}x{}, expected {p1} and {p2}",
            omega1.size(),
            omega1.size(),
            omega2.size(),
            omega2.size()
        )));
    }
    let n = p1 + p2;
    let mut theta = DMatrix::zeros(n, n);
    theta
        .view_mut((0, 0), (p1, p1))
        .copy_from(&(omega1.matrix() * -tau1u));
    theta
        .view_mut((p1, p1), (p2, p2))
        .copy_from(&(omega2.matrix() * -tau1v));
    let half = s12.matrix() * 0.5;
    theta.view_mut((0, p1), (p1, p2)).copy_from(&half);
    theta
        .view_mut((p1, 0), (p2, p1))
        .copy_from(&half.transpose());
    Ok(ThetaMatrix { theta, p1 })
}

/// `sign(x) * max(|x| - tau, 0)`, the lasso proximal map. Exact at the dead
/// zone: returns literal `0.0` whenever `|x| <= tau`.
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    let mag = x.abs() - tau;
    if mag <= 0.0 {
        0.0
    } else {
        mag * x.signum()
    }
}

/// Scaled residuals of one iteration: each is a Frobenius norm divided by
/// `sqrt(p1 * p2)`, matching the stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// `|G - G_prev|_F / sqrt(p1 p2)`.
    pub delta_g: f64,
    /// `|G - R|_F / sqrt(p1 p2)`.
    pub primal_r: f64,
    /// `|G - Q|_F / sqrt(p1 p2)`.
    pub primal_q: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.delta_g.max(self.primal_r).max(self.primal_q)
    }
}

/// The ADMM iterates and diagnostics.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub p1: usize,
    pub p2: usize,
    pub rank: usize,
    /// Stacked primal variable `(U; V)`, `(p1+p2) x K`.
    pub g: DMatrix<f64>,
    /// Lasso copy of `g`.
    pub r: DMatrix<f64>,
    /// Orthonormal-block copy of `g`.
    pub q: DMatrix<f64>,
    pub gamma_r: DMatrix<f64>,
    pub gamma_q: DMatrix<f64>,
    pub iter: usize,
    pub residuals: Residuals,
    /// How many polar-factor updates hit a rank-deficient block and used the
    /// deterministic completion.
    pub degenerate_projections: usize,
}

impl SolverState {
    /// Initial iterates: `G = R = Q =` the stacked top-`K` singular vectors of
    /// `S12`, multipliers zero. When `S12 = 0` the singular directions are
    /// undefined; canonical basis columns are used instead.
    pub fn initialize(s12: &CrossCovMatrix, rank: usize) -> Result<Self> {
        let (p1, p2) = (s12.p1(), s12.p2());
        if rank == 0 || rank > p1.min(p2) {
            return Err(Error::InvalidConfig(format!(
                "rank {rank} out of range 1..={}",
                p1.min(p2)
            )));
        }
        let mut g = DMatrix::zeros(p1 + p2, rank);
        let svd = s12.matrix().clone().svd(true, true);
        if svd.singular_values.max() > 0.0 {
            let u = svd.u.as_ref().expect("svd with u requested");
            let vt = svd.v_t.as_ref().expect("svd with v requested");
            for k in 0..rank {
                for i in 0..p1 {
                    g[(i, k)] = u[(i, k)];
                }
                for j in 0..p2 {
                    g[(p1 + j, k)] = vt[(k, j)];
                }
            }
        } else {
            for k in 0..rank {
                g[(k, k)] = 1.0;
                g[(p1 + k, k)] = 1.0;
            }
        }
        Ok(Self {
            p1,
            p2,
            rank,
            r: g.clone(),
            q: g.clone(),
            gamma_r: DMatrix::zeros(p1 + p2, rank),
            gamma_q: DMatrix::zeros(p1 + p2, rank),
            g,
            iter: 0,
            residuals: Residuals {
                delta_g: f64::INFINITY,
                primal_r: f64::INFINITY,
                primal_q: f64::INFINITY,
            },
            degenerate_projections: 0,
        })
    }
}

fn zeta_shifted(theta: &ThetaMatrix, zeta: f64) -> DMatrix<f64> {
    let mut m = -theta.matrix();
    for i in 0..m.nrows() {
        m[(i, i)] += zeta;
    }
    m
}

fn factorize(theta: &ThetaMatrix, zeta: f64) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(zeta_shifted(theta, zeta)).ok_or(Error::ZetaTooSmall { zeta })
}

fn g_step(state: &SolverState, chol: &Cholesky<f64, Dyn>, zeta: f64) -> DMatrix<f64> {
    let mut rhs = &state.r + &state.q;
    rhs *= zeta;
    rhs -= &state.gamma_r;
    rhs -= &state.gamma_q;
    chol.solve(&rhs) * 0.5
}

/// One `G`-update: `(zeta I - Theta)^{-1} (zeta (R + Q) - gamma_r - gamma_q) / 2`.
pub fn update_g(state: &SolverState, theta: &ThetaMatrix, zeta: f64) -> Result<DMatrix<f64>> {
    let chol = factorize(theta, zeta)?;
    Ok(g_step(state, &chol, zeta))
}

/// One `R`-update: entrywise `soft_threshold(zeta g + gamma_r, tau) / zeta`,
/// with `tau = tau2u` on the first `p1` rows and `tau2v` below.
pub fn update_r(state: &SolverState, zeta: f64, tau2u: f64, tau2v: f64) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(state.g.nrows(), state.g.ncols());
    for k in 0..state.g.ncols() {
        for i in 0..state.g.nrows() {
            let tau = if i < state.p1 { tau2u } else { tau2v };
            r[(i, k)] = soft_threshold(zeta * state.g[(i, k)] + state.gamma_r[(i, k)], tau) / zeta;
        }
    }
    r
}

/// Polar factor of `m` (`p x k`, `p >= k`): the nearest matrix with
/// orthonormal columns. Returns `(factor, degenerate)`; when `m` is
/// rank-deficient the missing directions are completed deterministically
/// from canonical basis vectors.
fn polar_factor(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let (p, k) = (m.nrows(), m.ncols());
    debug_assert!(p >= k);
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        // Zero block: fall back to the first k canonical columns.
        let mut q = DMatrix::zeros(p, k);
        for j in 0..k {
            q[(j, j)] = 1.0;
        }
        return (q, true);
    }
    let u = svd.u.expect("svd with u requested");
    let vt = svd.v_t.expect("svd with v requested");
    let deficient: Vec<usize> = (0..k)
        .filter(|&j| svd.singular_values[j] < POLAR_RANK_TOL * smax)
        .collect();
    if deficient.is_empty() {
        return (u * vt, false);
    }
    // Keep the well-determined singular directions and fill the rest with
    // canonical axes orthonormalized against them (lowest index first).
    let mut basis: Vec<nalgebra::DVector<f64>> = (0..k)
        .filter(|j| !deficient.contains(j))
        .map(|j| u.column(j).into_owned())
        .collect();
    let mut fillers = Vec::new();
    let mut axis = 0;
    while fillers.len() < deficient.len() && axis < p {
        let mut cand = nalgebra::DVector::zeros(p);
        cand[axis] = 1.0;
        for b in basis.iter().chain(fillers.iter()) {
            let proj = b.dot(&cand);
            cand.axpy(-proj, b, 1.0);
        }
        let norm = cand.norm();
        if norm > 0.5 {
            fillers.push(cand / norm);
        }
        axis += 1;
    }
    let mut u_full = u.clone();
    for (slot, filler) in deficient.iter().zip(fillers.iter()) {
        u_full.set_column(*slot, filler);
    }
    basis.clear();
    (u_full * vt, true)
}

/// One `Q`-update: per block `j`, the polar factor of
/// `M_j = zeta G_j + gamma_q_j`.
pub fn update_q(state: &SolverState, zeta: f64) -> DMatrix<f64> {
    q_step(state, zeta).0
}

fn q_step(state: &SolverState, zeta: f64) -> (DMatrix<f64>, usize) {
    let mut q = DMatrix::zeros(state.g.nrows(), state.g.ncols());
    let mut degenerate = 0;
    let blocks = [(0, state.p1), (state.p1, state.p2)];
    for &(start, len) in &blocks {
        if len == 0 {
            continue;
        }
        let m = zeta * state.g.rows(start, len) + state.gamma_q.rows(start, len);
        let (factor, was_degenerate) = polar_factor(&m);
        q.rows_mut(start, len).copy_from(&factor);
        if was_degenerate {
            degenerate += 1;
        }
    }
    (q, degenerate)
}

/// One dual ascent: `gamma_r + zeta (G - R)` and `gamma_q + zeta (G - Q)`.
pub fn update_multipliers(state: &SolverState, zeta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let gr = &state.gamma_r + zeta * (&state.g - &state.r);
    let gq = &state.gamma_q + zeta * (&state.g - &state.q);
    (gr, gq)
}

/// The estimated coupled patterns.
///
/// Columns are ordered so `u_k' S12 v_k` is non-increasing, and each coupled
/// pair `(u_k, v_k)` is sign-fixed jointly — both columns are flipped
/// together so the largest-magnitude entry of `u_k` is positive (falling back
/// to `v_k` when `u_k` is entirely zero; ties broken by lowest index).
/// Flipping the pair together pins the singular-vector sign indeterminacy
/// without changing `u_k' S12 v_k`.
///
/// Entries are taken from the orthonormal `Q` blocks, with exact zeros
/// imposed wherever the lasso copy `R` is exactly zero; with the sparseness
/// penalties off this masking is a no-op and the blocks are orthonormal to
/// 1e-8. Under active sparseness penalties the masked entries perturb
/// orthonormality at the order of the convergence tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPatterns {
    /// `p1 x K` left patterns.
    pub u_hat: DMatrix<f64>,
    /// `p2 x K` right patterns.
    pub v_hat: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Everything `solve` produces: the post-processed patterns, the raw final
/// solver state, and the penalty parameter actually used.
#[derive(Debug, Clone)]
pub struct AdmmSolution {
    pub patterns: CoupledPatterns,
    pub state: SolverState,
    pub zeta: f64,
}

/// Runs the ADMM iteration to convergence (or `max_iter`).
///
/// Stops when `max(|dG|_F, |G-R|_F, |G-Q|_F) / sqrt(p1 p2) <= tol`. A run
/// that exhausts `max_iter` is returned with `converged = false`, not an
/// error; `Zeta::Fixed` values that leave `zeta I - Theta` indefinite fail
/// with [`Error::ZetaTooSmall`].
pub fn solve(
    s12: &CrossCovMatrix,
    omega1: &PenaltyMatrix,
    omega2: &PenaltyMatrix,
    config: &PenaltyConfig,
) -> Result<AdmmSolution> {
    solve_traced(s12, omega1, omega2, config, |_, _| {})
}

/// As [`solve`], invoking `on_iter(iteration, residuals)` after every pass.
pub fn solve_traced(
    s12: &CrossCovMatrix,
    omega1: &PenaltyMatrix,
    omega2: &PenaltyMatrix,
    config: &PenaltyConfig,
    mut on_iter: impl FnMut(usize, &Residuals),
) -> Result<AdmmSolution> {
    let (p1, p2) = (s12.p1(), s12.p2());
    config.validate(p1, p2)?;
    let theta = build_theta(s12, omega1, omega2, config.tau1u, config.tau1v)?;

    let (mut zeta, auto) = match config.zeta {
        Zeta::Auto => {
            let sigma = s12.max_singular_value();
            (if sigma > 0.0 { 10.0 * sigma } else { 1.0 }, true)
        }
        Zeta::Fixed(z) => (z, false),
    };
    let chol = {
        let mut attempts = 0;
        loop {
            match factorize(&theta, zeta) {
                Ok(c) => break c,
                Err(e) => {
                    if !auto || attempts >= 60 {
                        return Err(e);
                    }
                    zeta *= 2.0;
                    attempts += 1;
                }
            }
        }
    };

    let mut state = SolverState::initialize(s12, config.rank)?;
    let scale = ((p1 * p2) as f64).sqrt();
    let mut converged = false;
    for iter in 1..=config.max_iter {
        let g_new = g_step(&state, &chol, zeta);
        let delta_g = (&g_new - &state.g).norm() / scale;
        state.g = g_new;
        state.r = update_r(&state, zeta, config.tau2u, config.tau2v);
        let (q_new, degenerate) = q_step(&state, zeta);
        state.q = q_new;
        state.degenerate_projections += degenerate;
        let (gr, gq) = update_multipliers(&state, zeta);
        state.gamma_r = gr;
        state.gamma_q = gq;
        state.iter = iter;
        state.residuals = Residuals {
            delta_g,
            primal_r: (&state.g - &state.r).norm() / scale,
            primal_q: (&state.g - &state.q).norm() / scale,
        };
        on_iter(iter, &state.residuals);
        if state.residuals.max() <= config.tol {
            converged = true;
            break;
        }
    }

    let patterns = finalize_patterns(&state, s12, converged);
    Ok(AdmmSolution { patterns, state, zeta })
}

fn finalize_patterns(
    state: &SolverState,
    s12: &CrossCovMatrix,
    converged: bool,
) -> CoupledPatterns {
    let (p1, p2, k) = (state.p1, state.p2, state.rank);
    let mut u = state.q.rows(0, p1).into_owned();
    let mut v = state.q.rows(p1, p2).into_owned();
    // Impose the lasso copy's exact zero pattern.
    for kk in 0..k {
        for i in 0..p1 {
            if state.r[(i, kk)] == 0.0 {
                u[(i, kk)] = 0.0;
            }
        }
        for j in 0..p2 {
            if state.r[(p1 + j, kk)] == 0.0 {
                v[(j, kk)] = 0.0;
            }
        }
    }
    // Order pairs by covariance, descending (stable).
    let cov: Vec<f64> = (0..k)
        .map(|kk| (u.column(kk).transpose() * s12.matrix() * v.column(kk))[(0, 0)])
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| cov[b].partial_cmp(&cov[a]).unwrap_or(std::cmp::Ordering::Equal));
    let u = u.select_columns(&order);
    let v = v.select_columns(&order);
    let (mut u, mut v) = (u, v);
    // Joint sign fix per pair.
    for kk in 0..k {
        let mut sign = 0.0;
        let mut best = 0.0;
        for i in 0..p1 {
            if u[(i, kk)].abs() > best {
                best = u[(i, kk)].abs();
                sign = u[(i, kk)].signum();
            }
        }
        if best == 0.0 {
            for j in 0..p2 {
                if v[(j, kk)].abs() > best {
                    best = v[(j, kk)].abs();
                    sign = v[(j, kk)].signum();
                }
            }
        }
        if sign < 0.0 {
            for i in 0..p1 {
                u[(i, kk)] = -u[(i, kk)];
            }
            for j in 0..p2 {
                v[(j, kk)] = -v[(j, kk)];
            }
        }
    }
    CoupledPatterns {
        u_hat: u,
        v_hat: v,
        converged,
        iterations: state.iter,
    }
}

/// Principal angles (radians) between the column spaces of `a` and `b`
/// (assumed to have orthonormal columns), ascending.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let m = a.transpose() * b;
    let mut cosines: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
    cosines.sort_by(|x, y| y.partial_cmp(x).unwrap());
    cosines.iter().map(|c| c.min(1.0).max(-1.0).acos()).collect()
}
