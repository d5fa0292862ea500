//! Cross-validated tuning: the M-fold score, the two-step parameter search,
//! and the rank rule.
//!
//! The score for a candidate `(K, tau1u, tau2u, tau1v, tau2v)` is
//! `(1/M) sum_m |S12^(m) - U^(-m) D^(-m) V^(-m)'|_F^2`, where the model is
//! fit on the complement of fold `m` and `S12^(m)` is the held-out fold's
//! own cross-covariance (divisor: the fold's row count). Tuning follows the
//! two-step search: smoothness first with sparseness off, then sparseness
//! with the selected smoothness frozen. Data are used exactly as given —
//! center or detrend beforehand if needed.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::admm::{self, PenaltyConfig, Zeta};
use crate::cov::{CrossCovMatrix, PairedSample};
use crate::error::{Error, Result};
use crate::model::estimate_d;
use crate::spline::{roughness_matrix, PenaltyMatrix};

/// `count` points equally spaced on the log scale over `[lo, hi]`, inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2, "log_grid needs 0 < lo < hi and count >= 2");
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            // Pin the endpoints exactly; exp(ln(x)) can drift by an ulp.
            if i == 0 {
                lo
            } else if i == count - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// The default smoothness grid: `{0}` plus 20 log-spaced points in `[1e-2, 10]`.
pub fn default_tau1_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(log_grid(1e-2, 10.0, 20));
    g
}

/// The default sparseness grid: `{0}` plus 10 log-spaced points in `[1e-3, 1]`.
pub fn default_tau2_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(log_grid(1e-3, 1.0, 10));
    g
}

/// Settings for the cross-validated search.
#[derive(Debug, Clone)]
pub struct CVConfig {
    /// Number of folds `M`.
    pub m_folds: usize,
    pub tau1_grid_u: Vec<f64>,
    pub tau1_grid_v: Vec<f64>,
    pub tau2_grid_u: Vec<f64>,
    pub tau2_grid_v: Vec<f64>,
    /// Largest rank the rank rule may scan.
    pub k_max: usize,
    /// Seed for the fold assignment.
    pub seed: u64,
    /// Solver controls used for every candidate fit.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CVConfig {
    fn default() -> Self {
        Self {
            m_folds: 5,
            tau1_grid_u: default_tau1_grid(),
            tau1_grid_v: default_tau1_grid(),
            tau2_grid_u: default_tau2_grid(),
            tau2_grid_v: default_tau2_grid(),
            k_max: 5,
            seed: 0,
            tol: 1e-4,
            max_iter: 5000,
        }
    }
}

impl CVConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_folds < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 folds, got {}",
                self.m_folds
            )));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        for (name, grid) in [
            ("tau1u", &self.tau1_grid_u),
            ("tau1v", &self.tau1_grid_v),
            ("tau2u", &self.tau2_grid_u),
            ("tau2v", &self.tau2_grid_v),
        ] {
            if grid.first() != Some(&0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} grid must start at 0"
                )));
            }
            if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} grid must be finite and strictly increasing"
                )));
            }
        }
        Ok(())
    }
}

/// Which stage of the search produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvStage {
    /// Smoothness search with sparseness off.
    Tau1,
    /// Sparseness search with smoothness frozen.
    Tau2,
}

impl std::fmt::Display for CvStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CvStage::Tau1 => write!(f, "tau1"),
            CvStage::Tau2 => write!(f, "tau2"),
        }
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CVRecord {
    pub k: usize,
    pub stage: CvStage,
    pub tau1u: f64,
    pub tau1v: f64,
    pub tau2u: f64,
    pub tau2v: f64,
    pub score: f64,
}

/// A winning tuning tuple with its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSelection {
    pub tau1u: f64,
    pub tau1v: f64,
    pub tau2u: f64,
    pub tau2v: f64,
    pub score: f64,
}

/// Outcome of the full rank-and-tuning search.
#[derive(Debug, Clone)]
pub struct CVResult {
    /// Every candidate evaluated, in evaluation order.
    pub records: Vec<CVRecord>,
    /// The winning tuning values at the selected rank.
    pub selected: StageSelection,
    pub k_selected: usize,
    /// True when the scan stopped because the score stopped decreasing;
    /// false when it ran through `k_max` still decreasing.
    pub k_converged: bool,
}

/// Splits `{0..n}` into `m` disjoint index sets whose sizes differ by at
/// most one, deterministically for a fixed seed. Each set is sorted.
pub fn make_folds(n: usize, m: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if m < 2 {
        return Err(Error::InvalidFold(format!("need at least 2 folds, got {m}")));
    }
    if m > n {
        return Err(Error::InvalidFold(format!(
            "cannot split {n} rows into {m} folds"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let base = n / m;
    let extra = n % m;
    let mut folds = Vec::with_capacity(m);
    let mut start = 0;
    for f in 0..m {
        let size = base + usize::from(f < extra);
        let mut fold: Vec<usize> = idx[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}

struct FoldData {
    s_train: CrossCovMatrix,
    s_val: DMatrix<f64>,
}

/// Precomputed per-fold cross-covariances, shared across candidates.
struct CvEngine<'a> {
    folds: Vec<FoldData>,
    omega1: &'a PenaltyMatrix,
    omega2: &'a PenaltyMatrix,
    tol: f64,
    max_iter: usize,
}

impl<'a> CvEngine<'a> {
    fn new(
        sample: &PairedSample,
        folds: &[Vec<usize>],
        omega1: &'a PenaltyMatrix,
        omega2: &'a PenaltyMatrix,
        tol: f64,
        max_iter: usize,
    ) -> Result<Self> {
        let n = sample.n();
        if folds.is_empty() {
            return Err(Error::InvalidFold("no folds given".into()));
        }
        let mut owner = vec![usize::MAX; n];
        for (f, fold) in folds.iter().enumerate() {
            if fold.is_empty() {
                return Err(Error::InvalidFold(format!("fold {f} is empty")));
            }
            for &i in fold {
                if i >= n {
                    return Err(Error::InvalidFold(format!(
                        "fold {f} references row {i}, but the sample has {n} rows"
                    )));
                }
                if owner[i] != usize::MAX {
                    return Err(Error::InvalidFold(format!(
                        "row {i} appears in folds {} and {f}",
                        owner[i]
                    )));
                }
                owner[i] = f;
            }
        }
        let mut data = Vec::with_capacity(folds.len());
        for (f, fold) in folds.iter().enumerate() {
            let train: Vec<usize> = (0..n).filter(|i| owner[*i] != f).collect();
            if train.is_empty() {
                return Err(Error::InvalidFold(format!(
                    "fold {f} leaves no training rows"
                )));
            }
            let (y1v, y2v) = sample.take_rows(fold);
            let (y1t, y2t) = sample.take_rows(&train);
            let s_val = y1v.transpose() * y2v / fold.len() as f64;
            let s_train = CrossCovMatrix::from_matrix(
                y1t.transpose() * y2t / train.len() as f64,
                train.len(),
            )?;
            data.push(FoldData { s_train, s_val });
        }
        Ok(Self {
            folds: data,
            omega1,
            omega2,
            tol,
            max_iter,
        })
    }

    fn score(&self, k: usize, tau1u: f64, tau2u: f64, tau1v: f64, tau2v: f64) -> Result<f64> {
        let mut total = 0.0;
        for fold in &self.folds {
            let config = PenaltyConfig {
                tau1u,
                tau1v,
                tau2u,
                tau2v,
                rank: k,
                zeta: Zeta::Auto,
                tol: self.tol,
                max_iter: self.max_iter,
            };
            let sol = admm::solve(&fold.s_train, self.omega1, self.omega2, &config)?;
            let d = estimate_d(&sol.patterns, &fold.s_train)?;
            let mut rec = DMatrix::zeros(fold.s_val.nrows(), fold.s_val.ncols());
            for kk in 0..k {
                rec += d[kk] * sol.patterns.u_hat.column(kk) * sol.patterns.v_hat.column(kk).transpose();
            }
            total += (&fold.s_val - rec).norm_squared();
        }
        Ok(total / self.folds.len() as f64)
    }
}

/// The M-fold score of one candidate tuple.
#[allow(clippy::too_many_arguments)]
pub fn cv_score(
    sample: &PairedSample,
    folds: &[Vec<usize>],
    k: usize,
    tau1u: f64,
    tau2u: f64,
    tau1v: f64,
    tau2v: f64,
    omega1: &PenaltyMatrix,
    omega2: &PenaltyMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let engine = CvEngine::new(sample, folds, omega1, omega2, tol, max_iter)?;
    engine.score(k, tau1u, tau2u, tau1v, tau2v)
}

/// Evaluates candidates in lexicographic grid order; ties keep the first
/// (least-regularized) candidate. Candidates run in parallel, the reduction
/// order is fixed.
fn grid_argmin(
    engine: &CvEngine,
    k: usize,
    grid_a: &[f64],
    grid_b: &[f64],
    eval: impl Fn(&CvEngine, usize, f64, f64) -> Result<f64> + Sync,
) -> Result<(usize, usize, Vec<f64>)> {
    let candidates: Vec<(usize, usize)> = (0..grid_a.len())
        .flat_map(|i| (0..grid_b.len()).map(move |j| (i, j)))
        .collect();
    let scores: Result<Vec<f64>> = candidates
        .par_iter()
        .map(|&(i, j)| eval(engine, k, grid_a[i], grid_b[j]))
        .collect();
    let scores = scores?;
    let mut best = 0;
    for c in 1..scores.len() {
        if scores[c] < scores[best] {
            best = c;
        }
    }
    let (i, j) = candidates[best];
    Ok((i, j, scores))
}

/// Smoothness search: argmin of the score over the `tau1` grids with the
/// sparseness penalties off.
pub fn select_tau1(
    sample: &PairedSample,
    cvcfg: &CVConfig,
    k: usize,
) -> Result<(StageSelection, Vec<CVRecord>)> {
    cvcfg.validate()?;
    let folds = make_folds(sample.n(), cvcfg.m_folds, cvcfg.seed)?;
    let omega1 = roughness_matrix(sample.locs1())?;
    let omega2 = roughness_matrix(sample.locs2())?;
    let engine = CvEngine::new(sample, &folds, &omega1, &omega2, cvcfg.tol, cvcfg.max_iter)?;
    select_tau1_with(&engine, cvcfg, k)
}

fn select_tau1_with(
    engine: &CvEngine,
    cvcfg: &CVConfig,
    k: usize,
) -> Result<(StageSelection, Vec<CVRecord>)> {
    let (gu, gv) = (&cvcfg.tau1_grid_u, &cvcfg.tau1_grid_v);
    let (i, j, scores) = grid_argmin(engine, k, gu, gv, |e, k, a, b| {
        e.score(k, a, 0.0, b, 0.0)
    })?;
    let records = (0..gu.len())
        .flat_map(|a| (0..gv.len()).map(move |b| (a, b)))
        .zip(scores.iter())
        .map(|((a, b), s)| CVRecord {
            k,
            stage: CvStage::Tau1,
            tau1u: gu[a],
            tau1v: gv[b],
            tau2u: 0.0,
            tau2v: 0.0,
            score: *s,
        })
        .collect();
    let selection = StageSelection {
        tau1u: gu[i],
        tau1v: gv[j],
        tau2u: 0.0,
        tau2v: 0.0,
        score: scores[i * gv.len() + j],
    };
    Ok((selection, records))
}

/// Sparseness search holding the selected smoothness values fixed.
pub fn select_tau2(
    sample: &PairedSample,
    cvcfg: &CVConfig,
    k: usize,
    tau1u: f64,
    tau1v: f64,
) -> Result<(StageSelection, Vec<CVRecord>)> {
    cvcfg.validate()?;
    let folds = make_folds(sample.n(), cvcfg.m_folds, cvcfg.seed)?;
    let omega1 = roughness_matrix(sample.locs1())?;
    let omega2 = roughness_matrix(sample.locs2())?;
    let engine = CvEngine::new(sample, &folds, &omega1, &omega2, cvcfg.tol, cvcfg.max_iter)?;
    select_tau2_with(&engine, cvcfg, k, tau1u, tau1v)
}

fn select_tau2_with(
    engine: &CvEngine,
    cvcfg: &CVConfig,
    k: usize,
    tau1u: f64,
    tau1v: f64,
) -> Result<(StageSelection, Vec<CVRecord>)> {
    let (gu, gv) = (&cvcfg.tau2_grid_u, &cvcfg.tau2_grid_v);
    let (i, j, scores) = grid_argmin(engine, k, gu, gv, |e, k, a, b| {
        e.score(k, tau1u, a, tau1v, b)
    })?;
    let records = (0..gu.len())
        .flat_map(|a| (0..gv.len()).map(move |b| (a, b)))
        .zip(scores.iter())
        .map(|((a, b), s)| CVRecord {
            k,
            stage: CvStage::Tau2,
            tau1u,
            tau1v,
            tau2u: gu[a],
            tau2v: gv[b],
            score: *s,
        })
        .collect();
    let selection = StageSelection {
        tau1u,
        tau1v,
        tau2u: gu[i],
        tau2v: gv[j],
        score: scores[i * gv.len() + j],
    };
    Ok((selection, records))
}

/// The two-step search at a fixed rank: smoothness first, then sparseness.
pub fn two_step(
    sample: &PairedSample,
    cvcfg: &CVConfig,
    k: usize,
) -> Result<(StageSelection, Vec<CVRecord>)> {
    cvcfg.validate()?;
    let folds = make_folds(sample.n(), cvcfg.m_folds, cvcfg.seed)?;
    let omega1 = roughness_matrix(sample.locs1())?;
    let omega2 = roughness_matrix(sample.locs2())?;
    let engine = CvEngine::new(sample, &folds, &omega1, &omega2, cvcfg.tol, cvcfg.max_iter)?;
    two_step_with(&engine, cvcfg, k)
}

fn two_step_with(
    engine: &CvEngine,
    cvcfg: &CVConfig,
    k: usize,
) -> Result<(StageSelection, Vec<CVRecord>)> {
    let (stage1, mut records) = select_tau1_with(engine, cvcfg, k)?;
    let (stage2, records2) = select_tau2_with(engine, cvcfg, k, stage1.tau1u, stage1.tau1v)?;
    records.extend(records2);
    Ok((stage2, records))
}

/// The rank rule on a precomputed score sequence (index `i` holds the score
/// for rank `i + 1`): the first rank whose score does not exceed the next
/// rank's score. Returns `(rank, true)` at the first non-decrease, or
/// `(scores.len(), false)` if the sequence keeps decreasing to the end.
pub fn rank_rule(scores: &[f64]) -> (usize, bool) {
    for i in 0..scores.len().saturating_sub(1) {
        if scores[i] <= scores[i + 1] {
            return (i + 1, true);
        }
    }
    (scores.len(), false)
}

/// Scans ranks `1, 2, ...` with the two-step search, stopping at the first
/// rank whose score does not exceed the next rank's score. Never evaluates
/// past the first non-decrease. `k_max` is clamped to `min(p1, p2)`.
pub fn select_rank(sample: &PairedSample, cvcfg: &CVConfig) -> Result<CVResult> {
    cvcfg.validate()?;
    let folds = make_folds(sample.n(), cvcfg.m_folds, cvcfg.seed)?;
    let omega1 = roughness_matrix(sample.locs1())?;
    let omega2 = roughness_matrix(sample.locs2())?;
    let engine = CvEngine::new(sample, &folds, &omega1, &omega2, cvcfg.tol, cvcfg.max_iter)?;

    let k_cap = cvcfg.k_max.min(sample.p1().min(sample.p2()));
    let mut records = Vec::new();
    let mut selections = Vec::new();
    let mut scores = Vec::new();

    let (sel, recs) = two_step_with(&engine, cvcfg, 1)?;
    records.extend(recs);
    scores.push(sel.score);
    selections.push(sel);

    let mut k = 1;
    while k < k_cap {
        let (sel, recs) = two_step_with(&engine, cvcfg, k + 1)?;
        records.extend(recs);
        scores.push(sel.score);
        selections.push(sel);
        if scores[k - 1] <= scores[k] {
            return Ok(CVResult {
                records,
                selected: selections[k - 1],
                k_selected: k,
                k_converged: true,
            });
        }
        k += 1;
    }
    Ok(CVResult {
        records,
        selected: selections[k - 1],
        k_selected: k,
        k_converged: false,
    })
}
