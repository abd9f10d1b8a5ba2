//! Static SVG rendering of experiment summaries.
//!
//! Pure functions of `summary.csv`: a mean-FDR-versus-noise figure for edge
//! sweeps and a mean-p-value figure with 20th/80th-percentile error bars
//! for the model-fit sweeps. Series for different estimators are offset
//! horizontally so overlapping error bars stay readable.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::{read_summary_csv, SummaryRow};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 54.0;
const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-12);
        MARGIN_LEFT + (v - self.x_min) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        HEIGHT - MARGIN_BOTTOM - (v - self.y_min) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

struct SeriesPoint {
    x: f64,
    y: f64,
    lo: Option<f64>,
    hi: Option<f64>,
}

struct Series {
    name: String,
    points: Vec<SeriesPoint>,
}

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"16\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\">{title}</text>\n",
        WIDTH / 2.0
    )
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = write!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    );
    for i in 0..=4 {
        let fx = frame.x_min + (frame.x_max - frame.x_min) * i as f64 / 4.0;
        let px = frame.x(fx);
        let _ = write!(
            out,
            "<line x1=\"{px}\" y1=\"{y0}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{px}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"11\">{:.3}</text>\n",
            y0 + 5.0,
            y0 + 20.0,
            fx
        );
        let fy = frame.y_min + (frame.y_max - frame.y_min) * i as f64 / 4.0;
        let py = frame.y(fy);
        let _ = write!(
            out,
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{x0}\" y2=\"{py}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" \
             font-size=\"11\">{:.2}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            fy
        );
    }
    let _ = write!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"12\">{x_label}</text>\n\
         <text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"12\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 16.0,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
    );
}

fn render(title: &str, x_label: &str, y_label: &str, series: &[Series], y_max_hint: f64) -> String {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_max = y_max_hint;
    for s in series {
        for p in &s.points {
            x_min = x_min.min(p.x);
            x_max = x_max.max(p.x);
            y_max = y_max.max(p.hi.unwrap_or(p.y));
        }
    }
    if x_min == x_max {
        x_min -= 0.5;
        x_max += 0.5;
    }
    let pad = (x_max - x_min) * 0.05;
    let frame = Frame {
        x_min: x_min - pad,
        x_max: x_max + pad,
        y_min: 0.0,
        y_max: y_max * 1.05,
    };
    // Horizontal offsets keep overlapping series distinguishable.
    let dx = (frame.x_max - frame.x_min) * 0.008;
    let mut out = svg_header(title);
    axes(&mut out, &frame, x_label, y_label);
    for (s_idx, s) in series.iter().enumerate() {
        let color = PALETTE[s_idx % PALETTE.len()];
        let shift = (s_idx as f64 - (series.len() as f64 - 1.0) / 2.0) * dx;
        let mut path = String::new();
        for (p_idx, p) in s.points.iter().enumerate() {
            let px = frame.x(p.x + shift);
            let py = frame.y(p.y);
            let _ = write!(path, "{}{px},{py}", if p_idx == 0 { "M" } else { " L" });
            if let (Some(lo), Some(hi)) = (p.lo, p.hi) {
                let (ylo, yhi) = (frame.y(lo), frame.y(hi));
                let _ = write!(
                    out,
                    "<line x1=\"{px}\" y1=\"{ylo}\" x2=\"{px}\" y2=\"{yhi}\" stroke=\"{color}\"/>\n\
                     <line x1=\"{}\" y1=\"{ylo}\" x2=\"{}\" y2=\"{ylo}\" stroke=\"{color}\"/>\n\
                     <line x1=\"{}\" y1=\"{yhi}\" x2=\"{}\" y2=\"{yhi}\" stroke=\"{color}\"/>\n",
                    px - 4.0,
                    px + 4.0,
                    px - 4.0,
                    px + 4.0
                );
            }
            let _ = write!(
                out,
                "<circle cx=\"{px}\" cy=\"{py}\" r=\"3.5\" fill=\"{color}\"/>\n"
            );
        }
        if s.points.len() > 1 {
            let _ = write!(
                out,
                "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n"
            );
        }
        let ly = MARGIN_TOP + 16.0 * s_idx as f64 + 10.0;
        let _ = write!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            WIDTH - MARGIN_RIGHT - 120.0,
            ly - 9.0,
            WIDTH - MARGIN_RIGHT - 106.0,
            ly,
            s.name
        );
    }
    out.push_str("</svg>\n");
    out
}

fn sweep_axis(rows: &[SummaryRow]) -> (&'static str, fn(&SummaryRow) -> f64) {
    let mut a_vals: Vec<f64> = rows.iter().map(|r| r.a).collect();
    a_vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    a_vals.dedup();
    let mut b_vals: Vec<f64> = rows.iter().map(|r| r.b).collect();
    b_vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b_vals.dedup();
    if b_vals.len() > a_vals.len() {
        ("b", |r: &SummaryRow| r.b)
    } else {
        ("a", |r: &SummaryRow| r.a)
    }
}

fn estimator_order(rows: &[SummaryRow]) -> Vec<String> {
    let mut names = Vec::new();
    for r in rows {
        if !names.contains(&r.estimator) {
            names.push(r.estimator.clone());
        }
    }
    names
}

/// Renders the figures supported by `summary.csv` in `report_dir`, returning
/// the paths written. Mean-FDR data produces `fdr_vs_a.svg`; model-fit
/// p-value data produces `pvalue_vs_sweep.svg`.
pub fn emit_plots(report_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let report_dir = report_dir.as_ref();
    let rows = read_summary_csv(report_dir.join("summary.csv"))?;
    if rows.is_empty() {
        return Err(Error::PlotEmpty);
    }
    let mut written = Vec::new();

    let fdr_rows: Vec<&SummaryRow> = rows.iter().filter(|r| r.mean_fdr.is_some()).collect();
    if !fdr_rows.is_empty() {
        let mut series = Vec::new();
        for name in estimator_order(&rows) {
            let mut points: Vec<SeriesPoint> = fdr_rows
                .iter()
                .filter(|r| r.estimator == name)
                .map(|r| SeriesPoint {
                    x: r.a,
                    y: r.mean_fdr.unwrap(),
                    lo: None,
                    hi: None,
                })
                .collect();
            points.sort_by(|p, q| p.x.partial_cmp(&q.x).unwrap());
            if !points.is_empty() {
                series.push(Series { name, points });
            }
        }
        let svg = render("mean FDR by noise scale", "a", "mean FDR", &series, 0.4);
        let path = report_dir.join("fdr_vs_a.svg");
        std::fs::write(&path, svg).map_err(|source| Error::FileWrite {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }

    let p_rows: Vec<&SummaryRow> = rows.iter().filter(|r| r.mean_p.is_some()).collect();
    if !p_rows.is_empty() {
        let owned: Vec<SummaryRow> = p_rows.iter().map(|r| (*r).clone()).collect();
        let (axis_label, axis) = sweep_axis(&owned);
        let mut series = Vec::new();
        for name in estimator_order(&rows) {
            let mut points: Vec<SeriesPoint> = p_rows
                .iter()
                .filter(|r| r.estimator == name)
                .map(|r| SeriesPoint {
                    x: axis(r),
                    y: r.mean_p.unwrap(),
                    lo: r.p20,
                    hi: r.p80,
                })
                .collect();
            points.sort_by(|p, q| p.x.partial_cmp(&q.x).unwrap());
            if !points.is_empty() {
                series.push(Series { name, points });
            }
        }
        let svg = render(
            "mean model-fit p-value (bars: 20th/80th percentiles)",
            axis_label,
            "p-value",
            &series,
            1.0,
        );
        let path = report_dir.join("pvalue_vs_sweep.svg");
        std::fs::write(&path, svg).map_err(|source| Error::FileWrite {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }

    if written.is_empty() {
        return Err(Error::PlotEmpty);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_summary(dir: &Path, body: &str) {
        let header = "experiment,estimator,a,b,n_trials,mean_fdr,mean_p,p20,p80,mean_estimate\n";
        std::fs::write(dir.join("summary.csv"), format!("{header}{body}")).unwrap();
    }

    #[test]
    fn single_point_single_estimator_has_one_marker() {
        let dir = tempfile::tempdir().unwrap();
        write_summary(dir.path(), "fdr_sweep,odin1,0.1,0,10,0.2,,,,\n");
        let paths = emit_plots(dir.path()).unwrap();
        assert_eq!(paths.len(), 1);
        let svg = std::fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn empty_summary_is_an_error_and_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        write_summary(dir.path(), "");
        assert!(matches!(emit_plots(dir.path()), Err(Error::PlotEmpty)));
        assert!(!dir.path().join("fdr_vs_a.svg").exists());
        assert!(!dir.path().join("pvalue_vs_sweep.svg").exists());
    }

    #[test]
    fn three_estimators_make_three_offset_series() {
        let dir = tempfile::tempdir().unwrap();
        write_summary(
            dir.path(),
            "cl_fit_sweep,plugin,0.1,0,10,,0.4,0.2,0.6,0.9\n\
             cl_fit_sweep,odin1,0.1,0,10,,0.5,0.3,0.7,0.95\n\
             cl_fit_sweep,odin2,0.1,0,10,,0.45,0.25,0.65,0.92\n",
        );
        let paths = emit_plots(dir.path()).unwrap();
        let svg = std::fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        // Marker x positions must all differ (horizontal offsets).
        let xs: Vec<&str> = svg
            .split("<circle cx=\"")
            .skip(1)
            .map(|s| s.split('"').next().unwrap())
            .collect();
        assert_eq!(xs.len(), 3);
        assert!(xs[0] != xs[1] && xs[1] != xs[2] && xs[0] != xs[2]);
        // Error bars: one vertical line plus two caps per point.
        assert!(svg.matches("<line").count() >= 9);
    }

    #[test]
    fn b_sweep_uses_the_varying_axis() {
        let dir = tempfile::tempdir().unwrap();
        write_summary(
            dir.path(),
            "cycle_fit_sweep,odin1,0.05,0.25,10,,0.4,0.2,0.6,0.9\n\
             cycle_fit_sweep,odin1,0.05,0.5,10,,0.3,0.1,0.5,0.8\n",
        );
        let paths = emit_plots(dir.path()).unwrap();
        let svg = std::fs::read_to_string(&paths[0]).unwrap();
        assert!(svg.contains(">b</text>"));
    }

    #[test]
    fn missing_summary_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_plots(dir.path()),
            Err(Error::FileRead { .. })
        ));
    }
}
