//! The `spatmca` command-line interface.
//!
//! Five subcommands: `fit` (one penalty configuration), `cv` (tuned fit with
//! rank selection), `predict` (evaluate a saved model at new locations),
//! `simulate` (draw a synthetic sample), and `compare` (the four-method
//! benchmark). Every command writes a `run_summary.json` describing what ran
//! and exits 0 exactly when no error occurred.
//!
//! All flags can instead be given in a flat `key=value` config file via
//! `--config`; explicit flags override file values. Keys equal the long flag
//! names without the leading dashes (for example `y1=data.csv`,
//! `grid-tau2u=0,0.1,1`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::admm::{PenaltyConfig, Zeta};
use crate::cov::{center_columns, sample_cross_cov, CrossCovMatrix, PairedSample};
use crate::cv::{
    default_tau1_grid, default_tau2_grid, select_rank, two_step, CVConfig, CVRecord,
    StageSelection,
};
use crate::error::{Error, Result};
use crate::io::{
    detrend_monthly, read_matrix_csv, read_month_labels, sha256_file, write_cv_trace,
    write_loss_table, write_matrix_csv, CvTraceRow, LossRow, ModelFile, Provenance,
    ResidualSummary, RunSummary,
};
use crate::model::{fit, CoupledPatternModel};
use crate::plot::{emit_plots, PlotKind};
use crate::sim::{run_comparison, KPolicy, Method, SimConfig};
use crate::spline::LocationSet;

/// Estimates smooth, sparse coupled spatial patterns and the
/// cross-covariance between two fields.
#[derive(Parser, Debug)]
#[command(name = "spatmca", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one penalty configuration on a data pair.
    Fit(FitArgs),
    /// Cross-validate penalties (and optionally the rank), then fit.
    Cv(CvArgs),
    /// Evaluate a saved model at query locations.
    Predict(PredictArgs),
    /// Draw a synthetic sample from the benchmark generator.
    Simulate(SimArgs),
    /// Run the four-method benchmark on synthetic replicates.
    Compare(CompareArgs),
}

/// Flat `key=value` config file; `#` starts a comment line.
struct ConfigMap(BTreeMap<String, String>);

impl ConfigMap {
    fn empty() -> Self {
        Self(BTreeMap::new())
    }

    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut map = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "{}:{}: expected key=value, got '{line}'",
                    path.display(),
                    idx + 1
                ))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                Error::InvalidConfig(format!("config key '{key}': {e} (value '{raw}')"))
            }),
        }
    }

    fn flag(&self, key: &str) -> Result<bool> {
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }
}

/// Flag value if given, else the config-file value, else `None`.
fn merged<T: FromStr>(flag: Option<T>, cfg: &ConfigMap, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key),
    }
}

fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidConfig(format!("missing required --{name} (or '{name}' in the config file)")))
}

fn parse_grid(raw: &str, key: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|e| {
                Error::InvalidConfig(format!("{key}: bad grid value '{}': {e}", s.trim()))
            })
        })
        .collect()
}

fn merged_grid(
    flag: &Option<String>,
    cfg: &ConfigMap,
    key: &str,
    default: fn() -> Vec<f64>,
) -> Result<Vec<f64>> {
    let raw = match flag {
        Some(v) => Some(v.clone()),
        None => cfg.get::<String>(key)?,
    };
    match raw {
        Some(raw) => parse_grid(&raw, key),
        None => Ok(default()),
    }
}

fn parse_zeta(raw: &str) -> Result<Zeta> {
    if raw.eq_ignore_ascii_case("auto") {
        return Ok(Zeta::Auto);
    }
    raw.parse::<f64>().map(Zeta::Fixed).map_err(|_| {
        Error::InvalidConfig(format!("--zeta must be 'auto' or a number, got '{raw}'"))
    })
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Field-1 data CSV: rows = observations, columns = sites.
    #[arg(long)]
    y1: Option<PathBuf>,
    /// Field-2 data CSV.
    #[arg(long)]
    y2: Option<PathBuf>,
    /// Field-1 locations CSV: one row per site, d columns.
    #[arg(long)]
    locs1: Option<PathBuf>,
    /// Field-2 locations CSV.
    #[arg(long)]
    locs2: Option<PathBuf>,
    /// Month labels (single column, 1-12) for monthly detrending.
    #[arg(long)]
    months: Option<PathBuf>,
    /// Skip column centering of the data matrices.
    #[arg(long)]
    no_center: bool,
}

/// Data matrices prepared for fitting, plus provenance.
struct LoadedData {
    sample: PairedSample,
    s12: CrossCovMatrix,
    centered: bool,
    inputs: Vec<String>,
    provenance: Provenance,
}

fn load_data(args: &DataArgs, cfg: &ConfigMap) -> Result<LoadedData> {
    let y1_path = required(merged(args.y1.clone(), cfg, "y1")?, "y1")?;
    let y2_path = required(merged(args.y2.clone(), cfg, "y2")?, "y2")?;
    let locs1_path = required(merged(args.locs1.clone(), cfg, "locs1")?, "locs1")?;
    let locs2_path = required(merged(args.locs2.clone(), cfg, "locs2")?, "locs2")?;
    let months_path = merged(args.months.clone(), cfg, "months")?;
    let no_center = args.no_center || cfg.flag("no-center")?;

    let mut y1 = read_matrix_csv(&y1_path)?;
    let mut y2 = read_matrix_csv(&y2_path)?;
    let locs1 = LocationSet::new(read_matrix_csv(&locs1_path)?)?;
    let locs2 = LocationSet::new(read_matrix_csv(&locs2_path)?)?;

    let mut inputs: Vec<String> = vec![
        y1_path.display().to_string(),
        y2_path.display().to_string(),
        locs1_path.display().to_string(),
        locs2_path.display().to_string(),
    ];
    let mut centered = false;
    if let Some(months_path) = &months_path {
        let months = read_month_labels(months_path)?;
        y1 = detrend_monthly(&y1, &months)?;
        y2 = detrend_monthly(&y2, &months)?;
        inputs.push(months_path.display().to_string());
        centered = true;
    } else if !no_center {
        y1 = center_columns(&y1);
        y2 = center_columns(&y2);
        centered = true;
    }

    let provenance = Provenance {
        y1_sha256: Some(sha256_file(&y1_path)?),
        y2_sha256: Some(sha256_file(&y2_path)?),
        locs1_sha256: Some(sha256_file(&locs1_path)?),
        locs2_sha256: Some(sha256_file(&locs2_path)?),
        seed: None,
        n: Some(y1.nrows()),
        centered: Some(centered),
    };
    let sample = PairedSample::new(y1, y2, locs1, locs2)?;
    let s12 = sample_cross_cov(&sample, false)?;
    Ok(LoadedData {
        sample,
        s12,
        centered,
        inputs,
        provenance,
    })
}

fn ensure_out_dir(out: &Option<PathBuf>, cfg: &ConfigMap) -> Result<PathBuf> {
    let out = required(merged(out.clone(), cfg, "out")?, "out")?;
    std::fs::create_dir_all(&out)?;
    Ok(out)
}

fn coord_names(dim: usize) -> Vec<String> {
    ["x", "y", "z"][..dim].iter().map(|s| s.to_string()).collect()
}

/// Writes a patterns CSV: coordinate columns then one column per pattern.
fn write_patterns_csv(
    path: &Path,
    coords: &DMatrix<f64>,
    patterns: &DMatrix<f64>,
    prefix: &str,
) -> Result<()> {
    let mut names = coord_names(coords.ncols());
    for k in 1..=patterns.ncols() {
        names.push(format!("{prefix}{k}"));
    }
    let mut table = DMatrix::zeros(coords.nrows(), coords.ncols() + patterns.ncols());
    table.columns_mut(0, coords.ncols()).copy_from(coords);
    table
        .columns_mut(coords.ncols(), patterns.ncols())
        .copy_from(patterns);
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    write_matrix_csv(path, &table, Some(&name_refs))
}

/// Writes the standard model artifacts (patterns, d-hat, model file) and
/// records them in the summary.
fn write_model_artifacts(
    out: &Path,
    model: &CoupledPatternModel,
    provenance: Provenance,
    summary: &mut RunSummary,
) -> Result<()> {
    let u_path = out.join("u_patterns.csv");
    write_patterns_csv(&u_path, model.locs1.coords(), &model.patterns.u_hat, "u")?;
    let v_path = out.join("v_patterns.csv");
    write_patterns_csv(&v_path, model.locs2.coords(), &model.patterns.v_hat, "v")?;
    let d_path = out.join("d_hat.csv");
    let d = DMatrix::from_iterator(model.d_hat.len(), 1, model.d_hat.iter().copied());
    write_matrix_csv(&d_path, &d, Some(&["d"]))?;
    let model_path = out.join("model.json");
    ModelFile::from_model(model, provenance).save(&model_path)?;
    for p in [&u_path, &v_path, &d_path, &model_path] {
        summary.outputs.push(p.display().to_string());
    }
    summary.k = Some(model.config.rank);
    summary.tau1u = Some(model.config.tau1u);
    summary.tau1v = Some(model.config.tau1v);
    summary.tau2u = Some(model.config.tau2u);
    summary.tau2v = Some(model.config.tau2v);
    summary.zeta_used = Some(model.zeta);
    summary.tol = Some(model.config.tol);
    summary.max_iter = Some(model.config.max_iter);
    summary.converged = Some(model.patterns.converged);
    summary.iterations = Some(model.patterns.iterations);
    summary.residuals = Some(ResidualSummary {
        delta_g: model.residuals.delta_g,
        primal_r: model.residuals.primal_r,
        primal_q: model.residuals.primal_q,
    });
    Ok(())
}

fn finish(out: &Path, mut summary: RunSummary) -> Result<()> {
    let path = out.join("run_summary.json");
    summary.outputs.push(path.display().to_string());
    summary.save(&path)
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rank K (number of coupled pattern pairs).
    #[arg(long)]
    k: Option<usize>,
    /// Smoothness penalty for field 1.
    #[arg(long)]
    tau1u: Option<f64>,
    /// Smoothness penalty for field 2.
    #[arg(long)]
    tau1v: Option<f64>,
    /// Sparseness penalty for field 1.
    #[arg(long)]
    tau2u: Option<f64>,
    /// Sparseness penalty for field 2.
    #[arg(long)]
    tau2v: Option<f64>,
    /// ADMM parameter: 'auto' or a positive number.
    #[arg(long)]
    zeta: Option<String>,
    /// Convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Also render plots of the written artifacts.
    #[arg(long)]
    plots: bool,
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn penalty_config(
    cfg: &ConfigMap,
    k: Option<usize>,
    tau1u: Option<f64>,
    tau1v: Option<f64>,
    tau2u: Option<f64>,
    tau2v: Option<f64>,
    zeta: &Option<String>,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> Result<PenaltyConfig> {
    let zeta = match merged(zeta.clone(), cfg, "zeta")? {
        Some(raw) => parse_zeta(&raw)?,
        None => Zeta::Auto,
    };
    Ok(PenaltyConfig {
        tau1u: merged(tau1u, cfg, "tau1u")?.unwrap_or(0.0),
        tau1v: merged(tau1v, cfg, "tau1v")?.unwrap_or(0.0),
        tau2u: merged(tau2u, cfg, "tau2u")?.unwrap_or(0.0),
        tau2v: merged(tau2v, cfg, "tau2v")?.unwrap_or(0.0),
        rank: merged(k, cfg, "k")?.unwrap_or(1),
        zeta,
        tol: merged(tol, cfg, "tol")?.unwrap_or(1e-4),
        max_iter: merged(max_iter, cfg, "max-iter")?.unwrap_or(5000),
    })
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let cfg = match merged(args.config.clone(), &ConfigMap::empty(), "config")? {
        Some(path) => ConfigMap::load(&path)?,
        None => ConfigMap::empty(),
    };
    let out = ensure_out_dir(&args.out, &cfg)?;
    let data = load_data(&args.data, &cfg)?;
    let config = penalty_config(
        &cfg, args.k, args.tau1u, args.tau1v, args.tau2u, args.tau2v, &args.zeta, args.tol,
        args.max_iter,
    )?;
    let model = fit(&data.s12, data.sample.locs1(), data.sample.locs2(), &config)?;

    let mut summary = RunSummary::new("fit");
    summary.inputs = data.inputs;
    summary.n = Some(data.sample.n());
    summary.p1 = Some(data.sample.p1());
    summary.p2 = Some(data.sample.p2());
    summary.centered = Some(data.centered);
    write_model_artifacts(&out, &model, data.provenance, &mut summary)?;
    if args.plots || cfg.flag("plots")? {
        for p in emit_plots(&out, PlotKind::Patterns)? {
            summary.outputs.push(p.display().to_string());
        }
    }
    finish(&out, summary)
}

#[derive(Args, Debug)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fix the rank instead of selecting it.
    #[arg(long)]
    k: Option<usize>,
    /// Largest rank the selection rule may scan.
    #[arg(long)]
    k_max: Option<usize>,
    /// Number of folds M.
    #[arg(long)]
    folds: Option<usize>,
    /// Seed for the fold assignment.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated smoothness grid for field 1.
    #[arg(long)]
    grid_tau1u: Option<String>,
    /// Comma-separated smoothness grid for field 2.
    #[arg(long)]
    grid_tau1v: Option<String>,
    /// Comma-separated sparseness grid for field 1.
    #[arg(long)]
    grid_tau2u: Option<String>,
    /// Comma-separated sparseness grid for field 2.
    #[arg(long)]
    grid_tau2v: Option<String>,
    /// Convergence tolerance for every candidate fit.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap for every candidate fit.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Also render plots of the written artifacts.
    #[arg(long)]
    plots: bool,
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cv_config(args: &CvArgs, cfg: &ConfigMap) -> Result<CVConfig> {
    Ok(CVConfig {
        m_folds: merged(args.folds, cfg, "folds")?.unwrap_or(5),
        tau1_grid_u: merged_grid(&args.grid_tau1u, cfg, "grid-tau1u", default_tau1_grid)?,
        tau1_grid_v: merged_grid(&args.grid_tau1v, cfg, "grid-tau1v", default_tau1_grid)?,
        tau2_grid_u: merged_grid(&args.grid_tau2u, cfg, "grid-tau2u", default_tau2_grid)?,
        tau2_grid_v: merged_grid(&args.grid_tau2v, cfg, "grid-tau2v", default_tau2_grid)?,
        k_max: merged(args.k_max, cfg, "k-max")?.unwrap_or(5),
        seed: merged(args.seed, cfg, "seed")?.unwrap_or(0),
        tol: merged(args.tol, cfg, "tol")?.unwrap_or(1e-4),
        max_iter: merged(args.max_iter, cfg, "max-iter")?.unwrap_or(5000),
    })
}

fn trace_rows(records: &[CVRecord]) -> Vec<CvTraceRow> {
    records
        .iter()
        .map(|r| CvTraceRow {
            k: r.k,
            stage: r.stage.to_string(),
            tau1u: r.tau1u,
            tau1v: r.tau1v,
            tau2u: r.tau2u,
            tau2v: r.tau2v,
            score: r.score,
        })
        .collect()
}

fn cmd_cv(args: CvArgs) -> Result<()> {
    let cfg = match merged(args.config.clone(), &ConfigMap::empty(), "config")? {
        Some(path) => ConfigMap::load(&path)?,
        None => ConfigMap::empty(),
    };
    let out = ensure_out_dir(&args.out, &cfg)?;
    let data = load_data(&args.data, &cfg)?;
    let cvcfg = cv_config(&args, &cfg)?;
    let fixed_k = merged(args.k, &cfg, "k")?;

    let (selection, k_used, k_converged, records): (StageSelection, usize, Option<bool>, Vec<CVRecord>) =
        match fixed_k {
            Some(k) => {
                let (sel, records) = two_step(&data.sample, &cvcfg, k)?;
                (sel, k, None, records)
            }
            None => {
                let result = select_rank(&data.sample, &cvcfg)?;
                (
                    result.selected,
                    result.k_selected,
                    Some(result.k_converged),
                    result.records,
                )
            }
        };

    let trace_path = out.join("cv_trace.csv");
    write_cv_trace(&trace_path, &trace_rows(&records))?;

    let config = PenaltyConfig {
        tau1u: selection.tau1u,
        tau1v: selection.tau1v,
        tau2u: selection.tau2u,
        tau2v: selection.tau2v,
        rank: k_used,
        zeta: Zeta::Auto,
        tol: cvcfg.tol,
        max_iter: cvcfg.max_iter,
    };
    let model = fit(&data.s12, data.sample.locs1(), data.sample.locs2(), &config)?;

    let mut provenance = data.provenance;
    provenance.seed = Some(cvcfg.seed);
    let mut summary = RunSummary::new("cv");
    summary.inputs = data.inputs;
    summary.n = Some(data.sample.n());
    summary.p1 = Some(data.sample.p1());
    summary.p2 = Some(data.sample.p2());
    summary.centered = Some(data.centered);
    summary.folds = Some(cvcfg.m_folds);
    summary.seed = Some(cvcfg.seed);
    summary.cv_score = Some(selection.score);
    summary.k_converged = k_converged;
    summary.outputs.push(trace_path.display().to_string());
    write_model_artifacts(&out, &model, provenance, &mut summary)?;
    if args.plots || cfg.flag("plots")? {
        for kind in [PlotKind::CvCurve, PlotKind::Patterns] {
            for p in emit_plots(&out, kind)? {
                summary.outputs.push(p.display().to_string());
            }
        }
    }
    finish(&out, summary)
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Saved model file from `fit` or `cv`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Field-1 query locations CSV (defaults to the model's sites).
    #[arg(long)]
    locs1: Option<PathBuf>,
    /// Field-2 query locations CSV (defaults to the model's sites).
    #[arg(long)]
    locs2: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let cfg = match merged(args.config.clone(), &ConfigMap::empty(), "config")? {
        Some(path) => ConfigMap::load(&path)?,
        None => ConfigMap::empty(),
    };
    let out = ensure_out_dir(&args.out, &cfg)?;
    let model_path = required(merged(args.model.clone(), &cfg, "model")?, "model")?;
    let model = ModelFile::load(&model_path)?.into_model()?;

    let mut inputs = vec![model_path.display().to_string()];
    let q1 = match merged(args.locs1.clone(), &cfg, "locs1")? {
        Some(p) => {
            inputs.push(p.display().to_string());
            read_matrix_csv(&p)?
        }
        None => model.locs1.coords().clone(),
    };
    let q2 = match merged(args.locs2.clone(), &cfg, "locs2")? {
        Some(p) => {
            inputs.push(p.display().to_string());
            read_matrix_csv(&p)?
        }
        None => model.locs2.coords().clone(),
    };

    let (u_pred, v_pred) = model.predict_patterns(&q1, &q2)?;
    let cross = model.predict_cross_cov(&q1, &q2)?;

    let u_path = out.join("u_patterns.csv");
    write_patterns_csv(&u_path, &q1, &u_pred, "u")?;
    let v_path = out.join("v_patterns.csv");
    write_patterns_csv(&v_path, &q2, &v_pred, "v")?;
    let c_path = out.join("cross_cov.csv");
    write_matrix_csv(&c_path, &cross, None)?;

    let mut summary = RunSummary::new("predict");
    summary.inputs = inputs;
    summary.k = Some(model.config.rank);
    summary.p1 = Some(q1.nrows());
    summary.p2 = Some(q2.nrows());
    for p in [&u_path, &v_path, &c_path] {
        summary.outputs.push(p.display().to_string());
    }
    finish(&out, summary)
}

#[derive(Args, Debug, Clone)]
struct SimDesignArgs {
    /// Spatial dimension (1 or 2).
    #[arg(long)]
    dim: Option<usize>,
    /// Number of observations.
    #[arg(long)]
    n: Option<usize>,
    /// Field-1 site count (a perfect square in two dimensions).
    #[arg(long)]
    p1: Option<usize>,
    /// Field-2 site count.
    #[arg(long)]
    p2: Option<usize>,
    /// Field-1 domain bounds.
    #[arg(long)]
    lo1: Option<f64>,
    #[arg(long)]
    hi1: Option<f64>,
    /// Field-2 domain bounds.
    #[arg(long)]
    lo2: Option<f64>,
    #[arg(long)]
    hi2: Option<f64>,
    /// True pattern strengths (d1 >= d2 >= 0, d1 <= 1).
    #[arg(long)]
    d1: Option<f64>,
    #[arg(long)]
    d2: Option<f64>,
    /// Observation-noise standard deviations.
    #[arg(long)]
    noise1: Option<f64>,
    #[arg(long)]
    noise2: Option<f64>,
    /// Seed for data generation.
    #[arg(long)]
    seed: Option<u64>,
}

fn sim_config(args: &SimDesignArgs, cfg: &ConfigMap) -> Result<SimConfig> {
    let base = SimConfig::desk_1d();
    Ok(SimConfig {
        dim: merged(args.dim, cfg, "dim")?.unwrap_or(base.dim),
        n: merged(args.n, cfg, "n")?.unwrap_or(base.n),
        p1: merged(args.p1, cfg, "p1")?.unwrap_or(base.p1),
        p2: merged(args.p2, cfg, "p2")?.unwrap_or(base.p2),
        bounds1: (
            merged(args.lo1, cfg, "lo1")?.unwrap_or(base.bounds1.0),
            merged(args.hi1, cfg, "hi1")?.unwrap_or(base.bounds1.1),
        ),
        bounds2: (
            merged(args.lo2, cfg, "lo2")?.unwrap_or(base.bounds2.0),
            merged(args.hi2, cfg, "hi2")?.unwrap_or(base.bounds2.1),
        ),
        d1: merged(args.d1, cfg, "d1")?.unwrap_or(base.d1),
        d2: merged(args.d2, cfg, "d2")?.unwrap_or(base.d2),
        noise_sd1: merged(args.noise1, cfg, "noise1")?.unwrap_or(base.noise_sd1),
        noise_sd2: merged(args.noise2, cfg, "noise2")?.unwrap_or(base.noise_sd2),
        seed: merged(args.seed, cfg, "seed")?.unwrap_or(base.seed),
    })
}

#[derive(Args, Debug)]
struct SimArgs {
    #[command(flatten)]
    design: SimDesignArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_simulate(args: SimArgs) -> Result<()> {
    let cfg = match merged(args.config.clone(), &ConfigMap::empty(), "config")? {
        Some(path) => ConfigMap::load(&path)?,
        None => ConfigMap::empty(),
    };
    let out = ensure_out_dir(&args.out, &cfg)?;
    let sim = sim_config(&args.design, &cfg)?;
    let sample = crate::sim::generate_sample(&sim)?;
    let truth = crate::sim::true_patterns(&sim)?.cross_cov(sim.d1, sim.d2);

    let files = [
        ("y1.csv", None),
        ("y2.csv", None),
        ("locs1.csv", Some(coord_names(sim.dim))),
        ("locs2.csv", Some(coord_names(sim.dim))),
        ("true_cross_cov.csv", None),
    ];
    let matrices: [&DMatrix<f64>; 5] = [
        sample.y1(),
        sample.y2(),
        sample.locs1().coords(),
        sample.locs2().coords(),
        &truth,
    ];
    let mut summary = RunSummary::new("simulate");
    for ((name, header), matrix) in files.iter().zip(matrices) {
        let path = out.join(name);
        let refs: Option<Vec<&str>> = header
            .as_ref()
            .map(|names| names.iter().map(String::as_str).collect());
        write_matrix_csv(&path, matrix, refs.as_deref())?;
        summary.outputs.push(path.display().to_string());
    }
    summary.n = Some(sim.n);
    summary.p1 = Some(sim.p1);
    summary.p2 = Some(sim.p2);
    summary.seed = Some(sim.seed);
    finish(&out, summary)
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    design: SimDesignArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of synthetic replicates.
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated methods (mca, smooth_only, sparse_only, spatmca).
    #[arg(long)]
    methods: Option<String>,
    /// Fix the rank for every method instead of selecting it.
    #[arg(long)]
    k: Option<usize>,
    /// Largest rank the selection rule may scan.
    #[arg(long)]
    k_max: Option<usize>,
    /// Number of folds M.
    #[arg(long)]
    folds: Option<usize>,
    /// Base seed for fold assignment (replicate index is added).
    #[arg(long)]
    cv_seed: Option<u64>,
    /// Comma-separated smoothness grid for field 1.
    #[arg(long)]
    grid_tau1u: Option<String>,
    /// Comma-separated smoothness grid for field 2.
    #[arg(long)]
    grid_tau1v: Option<String>,
    /// Comma-separated sparseness grid for field 1.
    #[arg(long)]
    grid_tau2u: Option<String>,
    /// Comma-separated sparseness grid for field 2.
    #[arg(long)]
    grid_tau2v: Option<String>,
    /// Convergence tolerance for every candidate fit.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap for every candidate fit.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Also render plots of the written artifacts.
    #[arg(long)]
    plots: bool,
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let cfg = match merged(args.config.clone(), &ConfigMap::empty(), "config")? {
        Some(path) => ConfigMap::load(&path)?,
        None => ConfigMap::empty(),
    };
    let out = ensure_out_dir(&args.out, &cfg)?;
    let sim = sim_config(&args.design, &cfg)?;
    let replicates = merged(args.replicates, &cfg, "replicates")?.unwrap_or(20);
    let methods: Vec<Method> = match merged(args.methods.clone(), &cfg, "methods")? {
        Some(raw) => raw
            .split(',')
            .map(|s| s.trim().parse::<Method>())
            .collect::<Result<_>>()?,
        None => Method::ALL.to_vec(),
    };
    let cvcfg = CVConfig {
        m_folds: merged(args.folds, &cfg, "folds")?.unwrap_or(5),
        tau1_grid_u: merged_grid(&args.grid_tau1u, &cfg, "grid-tau1u", default_tau1_grid)?,
        tau1_grid_v: merged_grid(&args.grid_tau1v, &cfg, "grid-tau1v", default_tau1_grid)?,
        tau2_grid_u: merged_grid(&args.grid_tau2u, &cfg, "grid-tau2u", default_tau2_grid)?,
        tau2_grid_v: merged_grid(&args.grid_tau2v, &cfg, "grid-tau2v", default_tau2_grid)?,
        k_max: merged(args.k_max, &cfg, "k-max")?.unwrap_or(5),
        seed: merged(args.cv_seed, &cfg, "cv-seed")?.unwrap_or(0),
        tol: merged(args.tol, &cfg, "tol")?.unwrap_or(1e-4),
        max_iter: merged(args.max_iter, &cfg, "max-iter")?.unwrap_or(5000),
    };
    let k_policy = match merged(args.k, &cfg, "k")? {
        Some(k) => KPolicy::Fixed(k),
        None => KPolicy::Select,
    };

    let table = run_comparison(&sim, &methods, k_policy, replicates, &cvcfg)?;
    let rows: Vec<LossRow> = table
        .rows
        .iter()
        .map(|r| LossRow {
            method: r.method.name().to_string(),
            replicate: r.replicate,
            k: r.k_used,
            tau1u: r.tau1u,
            tau1v: r.tau1v,
            tau2u: r.tau2u,
            tau2v: r.tau2v,
            cv_score: r.cv_score,
            loss: r.loss,
        })
        .collect();
    let table_path = out.join("loss_table.csv");
    write_loss_table(&table_path, &rows)?;

    let mut summary = RunSummary::new("compare");
    summary.n = Some(sim.n);
    summary.p1 = Some(sim.p1);
    summary.p2 = Some(sim.p2);
    summary.seed = Some(sim.seed);
    summary.folds = Some(cvcfg.m_folds);
    summary.outputs.push(table_path.display().to_string());
    if args.plots || cfg.flag("plots")? {
        for p in emit_plots(&out, PlotKind::Loss)? {
            summary.outputs.push(p.display().to_string());
        }
    }
    finish(&out, summary)
}

/// Parses the command line, runs the command, and maps errors to a one-line
/// diagnostic and exit code 1 (0 on success).
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("spatmca: {e}");
            1
        }
    }
}
