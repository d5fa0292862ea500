//! Deterministic SVG rendering of run artifacts.
//!
//! Plots are a convenience layer over the CSV artifacts: each `emit_plots`
//! kind reads the corresponding tables written by a CLI command, writes
//! self-contained vector-graphics files, and (where the plot aggregates) a
//! tidy CSV of exactly what was drawn. Output bytes are a pure function of
//! the input files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io::{format_full, read_cv_trace, read_loss_table, read_named_csv};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Which artifact family to render.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// `u_patterns.csv` / `v_patterns.csv` from `fit` (or `cv`): line plots
    /// in one dimension, one heatmap per pattern in two.
    Patterns,
    /// `loss_table.csv` from `compare`: a per-method loss boxplot.
    Loss,
    /// `cv_trace.csv` from `cv`: the best score per candidate rank.
    CvCurve,
}

fn missing(path: &Path, command: &str) -> Error {
    Error::MissingArtifact {
        path: path.to_path_buf(),
        command: command.to_string(),
    }
}

fn require(path: PathBuf, command: &str) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(missing(&path, command))
    }
}

/// Axis scale: maps data to pixel coordinates, padding degenerate ranges.
struct Scale {
    min: f64,
    max: f64,
    lo_px: f64,
    hi_px: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, lo_px: f64, hi_px: f64) -> Self {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() || !max.is_finite() {
            min = 0.0;
            max = 1.0;
        }
        if min == max {
            min -= 0.5;
            max += 0.5;
        }
        Self { min, max, lo_px, hi_px }
    }

    fn px(&self, v: f64) -> f64 {
        self.lo_px + (v - self.min) / (self.max - self.min) * (self.hi_px - self.lo_px)
    }

    fn ticks(&self, count: usize) -> Vec<f64> {
        (0..count)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (count - 1) as f64)
            .collect()
    }
}

fn fmt_px(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() || s == "-" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.3e}")
    }
}

fn svg_header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" ",
            "text-anchor=\"middle\">{title}</text>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = WIDTH / 2.0,
        title = escape(title),
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, xs: &Scale, ys: &Scale, x_label: &str, y_label: &str, x_ticks: &[f64]) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt_px(x0),
        fmt_px(y0),
        fmt_px(x1),
        fmt_px(y0)
    );
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt_px(x0),
        fmt_px(y0),
        fmt_px(x0),
        fmt_px(y1)
    );
    for &t in x_ticks {
        let px = xs.px(t);
        let _ = writeln!(
            out,
            "<line x1=\"{x}\" y1=\"{y0}\" x2=\"{x}\" y2=\"{y2}\" stroke=\"black\"/>\n\
             <text x=\"{x}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{label}</text>",
            x = fmt_px(px),
            y0 = fmt_px(y0),
            y2 = fmt_px(y0 + 5.0),
            ty = fmt_px(y0 + 18.0),
            label = fmt_tick(t)
        );
    }
    for t in ys.ticks(5) {
        let py = ys.px(t);
        let _ = writeln!(
            out,
            "<line x1=\"{x2}\" y1=\"{y}\" x2=\"{x0}\" y2=\"{y}\" stroke=\"black\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{label}</text>",
            x2 = fmt_px(x0 - 5.0),
            x0 = fmt_px(x0),
            y = fmt_px(py),
            tx = fmt_px(x0 - 8.0),
            ty = fmt_px(py + 4.0),
            label = fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{label}</text>",
        x = fmt_px((x0 + x1) / 2.0),
        y = fmt_px(HEIGHT - 12.0),
        label = escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {y})\">{label}</text>",
        y = fmt_px((y0 + y1) / 2.0),
        label = escape(y_label)
    );
}

/// Multi-series line plot over a shared x column.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    x: &[f64],
    series: &[(String, Vec<f64>)],
) -> String {
    let xs = Scale::new(x.iter().copied(), MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let ys = Scale::new(
        series.iter().flat_map(|(_, v)| v.iter().copied()),
        HEIGHT - MARGIN_BOTTOM,
        MARGIN_TOP,
    );
    let mut out = svg_header(title);
    axes(&mut out, &xs, &ys, x_label, y_label, &xs.ticks(5));
    for (idx, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let points: Vec<String> = x
            .iter()
            .zip(values)
            .map(|(&xv, &yv)| format!("{},{}", fmt_px(xs.px(xv)), fmt_px(ys.px(yv))))
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.join(" ")
        );
        let ly = MARGIN_TOP + 14.0 * idx as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{x1}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"11\">{name}</text>",
            x1 = fmt_px(WIDTH - MARGIN_RIGHT - 110.0),
            x2 = fmt_px(WIDTH - MARGIN_RIGHT - 90.0),
            y = fmt_px(ly),
            tx = fmt_px(WIDTH - MARGIN_RIGHT - 84.0),
            ty = fmt_px(ly + 4.0),
            name = escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Diverging blue-white-red fill for a value scaled to `[-1, 1]`.
fn diverging_color(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let s = -t;
        (
            (255.0 + (0.0 - 255.0) * s).round() as u8,
            (255.0 + (84.0 - 255.0) * s).round() as u8,
            (255.0 + (159.0 - 255.0) * s).round() as u8,
        )
    } else {
        (
            (255.0 + (172.0 - 255.0) * t).round() as u8,
            (255.0 + (43.0 - 255.0) * t).round() as u8,
            (255.0 + (36.0 - 255.0) * t).round() as u8,
        )
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap of scattered 2-D sites colored by value, drawn as cells sized by
/// the smallest site spacing. Works for lattices and irregular site sets.
pub fn heatmap(title: &str, coords: &DMatrix<f64>, values: &[f64]) -> String {
    let n = coords.nrows();
    let xs_data: Vec<f64> = (0..n).map(|i| coords[(i, 0)]).collect();
    let ys_data: Vec<f64> = (0..n).map(|i| coords[(i, 1)]).collect();
    let xs = Scale::new(xs_data.iter().copied(), MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let ys = Scale::new(ys_data.iter().copied(), HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);

    // Cell size from the smallest positive per-axis spacing.
    let spacing = |mut a: Vec<f64>| -> f64 {
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        a.dedup();
        a.windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    };
    let dx = spacing(xs_data.clone());
    let dy = spacing(ys_data.clone());
    let dx = if dx.is_finite() { dx } else { 1.0 };
    let dy = if dy.is_finite() { dy } else { 1.0 };
    let wpx = (xs.px(xs.min + dx) - xs.px(xs.min)).abs();
    let hpx = (ys.px(ys.min) - ys.px(ys.min + dy)).abs();

    let vmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut out = svg_header(title);
    for i in 0..n {
        let cx = xs.px(xs_data[i]);
        let cy = ys.px(ys_data[i]);
        let _ = writeln!(
            out,
            "<rect x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" fill=\"{c}\"/>",
            x = fmt_px(cx - wpx / 2.0),
            y = fmt_px(cy - hpx / 2.0),
            w = fmt_px(wpx),
            h = fmt_px(hpx),
            c = diverging_color(values[i] / vmax)
        );
    }
    axes(&mut out, &xs, &ys, "x", "y", &xs.ticks(5));
    let _ = writeln!(
        out,
        "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\">max |value| = {m}</text>",
        x = fmt_px(WIDTH - MARGIN_RIGHT - 180.0),
        y = fmt_px(MARGIN_TOP - 8.0),
        m = fmt_tick(vmax)
    );
    out.push_str("</svg>\n");
    out
}

/// Five-number summary used by the boxplot and its tidy CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile on sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Computes the five-number summary of a non-empty sample.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(BoxStats {
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

/// Boxplot over named groups (whiskers at the extremes).
pub fn box_plot(title: &str, y_label: &str, groups: &[(String, BoxStats)]) -> String {
    let ys = Scale::new(
        groups.iter().flat_map(|(_, s)| [s.min, s.max]),
        HEIGHT - MARGIN_BOTTOM,
        MARGIN_TOP,
    );
    let k = groups.len();
    let mut out = svg_header(title);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let slot = plot_w / k as f64;
    let box_w = (slot * 0.5).min(80.0);
    let xs = Scale {
        min: 0.0,
        max: k as f64,
        lo_px: MARGIN_LEFT,
        hi_px: WIDTH - MARGIN_RIGHT,
    };
    axes(&mut out, &xs, &ys, "method", y_label, &[]);
    for (idx, (name, s)) in groups.iter().enumerate() {
        let cx = MARGIN_LEFT + slot * (idx as f64 + 0.5);
        let color = PALETTE[idx % PALETTE.len()];
        let (x0, x1) = (cx - box_w / 2.0, cx + box_w / 2.0);
        let _ = writeln!(
            out,
            "<line x1=\"{cx}\" y1=\"{ymin}\" x2=\"{cx}\" y2=\"{yq1}\" stroke=\"black\"/>\n\
             <line x1=\"{cx}\" y1=\"{yq3}\" x2=\"{cx}\" y2=\"{ymax}\" stroke=\"black\"/>\n\
             <rect x=\"{x0}\" y=\"{yq3}\" width=\"{w}\" height=\"{h}\" fill=\"{color}\" \
             fill-opacity=\"0.4\" stroke=\"black\"/>\n\
             <line x1=\"{x0}\" y1=\"{ymed}\" x2=\"{x1}\" y2=\"{ymed}\" stroke=\"black\" \
             stroke-width=\"2\"/>\n\
             <text x=\"{cx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{name}</text>",
            cx = fmt_px(cx),
            ymin = fmt_px(ys.px(s.min)),
            yq1 = fmt_px(ys.px(s.q1)),
            yq3 = fmt_px(ys.px(s.q3)),
            ymax = fmt_px(ys.px(s.max)),
            x0 = fmt_px(x0),
            x1 = fmt_px(x1),
            w = fmt_px(box_w),
            h = fmt_px((ys.px(s.q1) - ys.px(s.q3)).abs()),
            ymed = fmt_px(ys.px(s.median)),
            ty = fmt_px(HEIGHT - MARGIN_BOTTOM + 18.0),
            name = escape(name),
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Splits a patterns table into coordinate columns (named among x, y, z)
/// and pattern columns.
fn split_patterns(
    names: &[String],
    table: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<String>)> {
    let dim = names
        .iter()
        .take_while(|n| ["x", "y", "z"].contains(&n.as_str()))
        .count();
    if dim == 0 || dim >= names.len() {
        return Err(Error::ModelFile(format!(
            "patterns table must start with coordinate columns x[,y[,z]] \
             followed by pattern columns; got header {names:?}"
        )));
    }
    let coords = table.columns(0, dim).into_owned();
    let patterns = table.columns(dim, names.len() - dim).into_owned();
    Ok((coords, patterns, names[dim..].to_vec()))
}

fn emit_pattern_file(dir: &Path, stem: &str, command: &str) -> Result<Vec<PathBuf>> {
    let csv_path = require(dir.join(format!("{stem}_patterns.csv")), command)?;
    let (names, table) = read_named_csv(&csv_path)?;
    let (coords, patterns, pattern_names) = split_patterns(&names, &table)?;
    let mut written = Vec::new();
    match coords.ncols() {
        1 => {
            let x: Vec<f64> = coords.column(0).iter().copied().collect();
            let series: Vec<(String, Vec<f64>)> = pattern_names
                .iter()
                .enumerate()
                .map(|(j, n)| (n.clone(), patterns.column(j).iter().copied().collect()))
                .collect();
            let svg = line_plot(
                &format!("{stem} patterns"),
                "location",
                "pattern value",
                &x,
                &series,
            );
            let out = dir.join(format!("{stem}_patterns.svg"));
            std::fs::write(&out, svg)?;
            written.push(out);
        }
        2 => {
            for (j, name) in pattern_names.iter().enumerate() {
                let values: Vec<f64> = patterns.column(j).iter().copied().collect();
                let svg = heatmap(&format!("{stem} pattern {name}"), &coords, &values);
                let out = dir.join(format!("{stem}_pattern_{}.svg", j + 1));
                std::fs::write(&out, svg)?;
                written.push(out);
            }
        }
        d => {
            return Err(Error::UnsupportedDimension(d));
        }
    }
    Ok(written)
}

/// Renders the plots for one artifact family inside `dir`, returning the
/// files written. Missing prerequisites name the command that produces them.
pub fn emit_plots(dir: impl AsRef<Path>, kind: PlotKind) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    match kind {
        PlotKind::Patterns => {
            let mut written = emit_pattern_file(dir, "u", "fit")?;
            written.extend(emit_pattern_file(dir, "v", "fit")?);
            Ok(written)
        }
        PlotKind::Loss => {
            let path = require(dir.join("loss_table.csv"), "compare")?;
            let rows = read_loss_table(&path)?;
            if rows.is_empty() {
                return Err(Error::InsufficientData(
                    "loss table has no rows; nothing to plot".into(),
                ));
            }
            let mut methods: Vec<String> = Vec::new();
            for r in &rows {
                if !methods.contains(&r.method) {
                    methods.push(r.method.clone());
                }
            }
            let groups: Vec<(String, BoxStats)> = methods
                .iter()
                .map(|m| {
                    let losses: Vec<f64> = rows
                        .iter()
                        .filter(|r| &r.method == m)
                        .map(|r| r.loss)
                        .collect();
                    (m.clone(), box_stats(&losses).expect("method has rows"))
                })
                .collect();
            let svg = box_plot("loss by method", "loss", &groups);
            let svg_path = dir.join("loss_boxplot.svg");
            std::fs::write(&svg_path, svg)?;

            let tidy_path = dir.join("loss_summary.csv");
            let mut w = csv::Writer::from_path(&tidy_path)?;
            w.write_record(["method", "min", "q1", "median", "q3", "max"])?;
            for (m, s) in &groups {
                w.write_record([
                    m.clone(),
                    format_full(s.min),
                    format_full(s.q1),
                    format_full(s.median),
                    format_full(s.q3),
                    format_full(s.max),
                ])?;
            }
            w.flush()?;
            Ok(vec![svg_path, tidy_path])
        }
        PlotKind::CvCurve => {
            let path = require(dir.join("cv_trace.csv"), "cv")?;
            let rows = read_cv_trace(&path)?;
            if rows.is_empty() {
                return Err(Error::InsufficientData(
                    "cv trace has no rows; nothing to plot".into(),
                ));
            }
            // Best (final-stage) score per rank present in the trace.
            let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
            ks.sort_unstable();
            ks.dedup();
            let best: Vec<f64> = ks
                .iter()
                .map(|&k| {
                    let stage2: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.k == k && r.stage == "tau2")
                        .map(|r| r.score)
                        .collect();
                    let pool: Vec<f64> = if stage2.is_empty() {
                        rows.iter().filter(|r| r.k == k).map(|r| r.score).collect()
                    } else {
                        stage2
                    };
                    pool.into_iter().fold(f64::INFINITY, f64::min)
                })
                .collect();
            let x: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
            let xs = Scale::new(x.iter().copied(), MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
            let ys = Scale::new(best.iter().copied(), HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
            let mut out = svg_header("cross-validation score by rank");
            axes(&mut out, &xs, &ys, "K", "cv score", &x);
            let points: Vec<String> = x
                .iter()
                .zip(&best)
                .map(|(&xv, &yv)| format!("{},{}", fmt_px(xs.px(xv)), fmt_px(ys.px(yv))))
                .collect();
            let _ = writeln!(
                out,
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
                PALETTE[0],
                points.join(" ")
            );
            for (&xv, &yv) in x.iter().zip(&best) {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>",
                    fmt_px(xs.px(xv)),
                    fmt_px(ys.px(yv)),
                    PALETTE[0]
                );
            }
            out.push_str("</svg>\n");
            let svg_path = dir.join("cv_curve.svg");
            std::fs::write(&svg_path, out)?;

            let tidy_path = dir.join("cv_curve.csv");
            let mut w = csv::Writer::from_path(&tidy_path)?;
            w.write_record(["k", "score"])?;
            for (&k, &s) in ks.iter().zip(&best) {
                w.write_record([k.to_string(), format_full(s)])?;
            }
            w.flush()?;
            Ok(vec![svg_path, tidy_path])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{write_cv_trace, write_loss_table, CvTraceRow, LossRow};

    fn write(dir: &Path, name: &str, contents: &str) {
        std::fs::write(dir.join(name), contents).unwrap();
    }

    #[test]
    fn one_dimensional_patterns_make_two_line_plots() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "u_patterns.csv",
            "x,u1,u2\n0,0.1,0.0\n1,0.5,-0.2\n2,0.3,0.4\n",
        );
        write(
            dir.path(),
            "v_patterns.csv",
            "x,v1,v2\n0,0.2,0.1\n1,0.6,-0.1\n2,0.1,0.5\n",
        );
        let files = emit_plots(dir.path(), PlotKind::Patterns).unwrap();
        assert_eq!(files.len(), 2);
        assert!(dir.path().join("u_patterns.svg").is_file());
        assert!(dir.path().join("v_patterns.svg").is_file());
        let svg = std::fs::read_to_string(dir.path().join("u_patterns.svg")).unwrap();
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("u2"));
    }

    #[test]
    fn two_dimensional_patterns_make_per_pattern_heatmaps() {
        let dir = tempfile::tempdir().unwrap();
        let mut u = String::from("x,y,u1\n");
        let mut v = String::from("x,y,v1\n");
        for i in 0..3 {
            for j in 0..3 {
                u.push_str(&format!("{i},{j},{}\n", (i + j) as f64 / 4.0 - 0.5));
                v.push_str(&format!("{i},{j},{}\n", (i * j) as f64 / 4.0 - 0.5));
            }
        }
        write(dir.path(), "u_patterns.csv", &u);
        write(dir.path(), "v_patterns.csv", &v);
        let files = emit_plots(dir.path(), PlotKind::Patterns).unwrap();
        assert_eq!(files.len(), 2);
        assert!(dir.path().join("u_pattern_1.svg").is_file());
        assert!(dir.path().join("v_pattern_1.svg").is_file());
        let svg = std::fs::read_to_string(dir.path().join("u_pattern_1.svg")).unwrap();
        assert!(svg.contains("<rect"));
    }

    #[test]
    fn missing_patterns_artifact_names_fit() {
        let dir = tempfile::tempdir().unwrap();
        match emit_plots(dir.path(), PlotKind::Patterns) {
            Err(Error::MissingArtifact { command, .. }) => assert_eq!(command, "fit"),
            other => panic!("expected missing-artifact error, got {other:?}"),
        }
    }

    #[test]
    fn empty_loss_table_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_loss_table(dir.path().join("loss_table.csv"), &[]).unwrap();
        assert!(matches!(
            emit_plots(dir.path(), PlotKind::Loss),
            Err(Error::InsufficientData(_))
        ));
        assert!(!dir.path().join("loss_boxplot.svg").exists());
    }

    #[test]
    fn loss_plot_writes_boxplot_and_tidy_summary() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<LossRow> = (0..5)
            .flat_map(|rep| {
                [("mca", 1.0 + rep as f64), ("spatmca", 0.25 * (rep as f64 + 1.0))]
                    .into_iter()
                    .map(move |(m, l)| LossRow {
                        method: m.into(),
                        replicate: rep,
                        k: 1,
                        tau1u: 0.0,
                        tau1v: 0.0,
                        tau2u: 0.0,
                        tau2v: 0.0,
                        cv_score: 1.0,
                        loss: l,
                    })
            })
            .collect();
        write_loss_table(dir.path().join("loss_table.csv"), &rows).unwrap();
        let files = emit_plots(dir.path(), PlotKind::Loss).unwrap();
        assert_eq!(files.len(), 2);
        let tidy = std::fs::read_to_string(dir.path().join("loss_summary.csv")).unwrap();
        let mut lines = tidy.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,min,q1,median,q3,max"
        );
        // Median of {1,...,5} is 3 for mca.
        let mca_line = lines.next().unwrap();
        assert!(mca_line.starts_with("mca,"), "{mca_line}");
        assert!(mca_line.contains(&format_full(3.0)), "{mca_line}");
    }

    #[test]
    fn cv_curve_uses_ranks_present_in_trace() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |k: usize, stage: &str, score: f64| CvTraceRow {
            k,
            stage: stage.into(),
            tau1u: 0.0,
            tau1v: 0.0,
            tau2u: 0.0,
            tau2v: 0.0,
            score,
        };
        let rows = vec![
            mk(1, "tau1", 0.9),
            mk(1, "tau2", 0.7),
            mk(1, "tau2", 0.8),
            mk(3, "tau1", 1.4),
            mk(3, "tau2", 1.1),
        ];
        write_cv_trace(dir.path().join("cv_trace.csv"), &rows).unwrap();
        let files = emit_plots(dir.path(), PlotKind::CvCurve).unwrap();
        assert_eq!(files.len(), 2);
        let tidy = std::fs::read_to_string(dir.path().join("cv_curve.csv")).unwrap();
        let lines: Vec<&str> = tidy.lines().collect();
        assert_eq!(lines[0], "k,score");
        assert!(lines[1].starts_with("1,"), "{}", lines[1]);
        assert!(lines[2].starts_with("3,"), "{}", lines[2]);
        assert_eq!(lines.len(), 3);
        // Chose the best final-stage score per rank.
        assert!(lines[1].contains(&format_full(0.7)));
        assert!(lines[2].contains(&format_full(1.1)));
        // The x-axis ticks are exactly the ranks present.
        let svg = std::fs::read_to_string(dir.path().join("cv_curve.svg")).unwrap();
        assert!(svg.contains(">1</text>"));
        assert!(svg.contains(">3</text>"));
        assert!(!svg.contains(">2</text>"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let x = vec![0.0, 1.0, 2.0];
        let series = vec![("u1".to_string(), vec![0.3, -0.1, 0.8])];
        let a = line_plot("t", "x", "y", &x, &series);
        let b = line_plot("t", "x", "y", &x, &series);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn box_stats_five_numbers() {
        let s = box_stats(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!(
            s,
            BoxStats {
                min: 1.0,
                q1: 2.0,
                median: 3.0,
                q3: 4.0,
                max: 5.0
            }
        );
        assert!(box_stats(&[]).is_none());
    }
}
