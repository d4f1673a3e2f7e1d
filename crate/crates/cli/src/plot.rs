//! Static SVG figures. Everything is rendered from data already written to
//! CSV, with fixed geometry, a fixed palette, and coordinates printed at two
//! decimals, so the same inputs always produce byte-identical files.

use std::fmt::Write as _;

use crate::CliError;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

/// Okabe-Ito palette: color-blind safe and print friendly.
const PALETTE: [&str; 8] = [
    "#0072b2", "#d55e00", "#009e73", "#cc79a7", "#e69f00", "#56b4e9", "#f0e442", "#000000",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Tick positions for a linear axis: five evenly spaced values.
fn linear_ticks(min: f64, max: f64) -> Vec<f64> {
    (0..=4).map(|i| min + (max - min) * i as f64 / 4.0).collect()
}

/// Power-of-ten tick exponents covering `[min, max]`, thinned to at most
/// ten labels when the range spans many decades.
fn log_ticks(min: f64, max: f64) -> Vec<i32> {
    let lo = min.log10().floor() as i32;
    let hi = max.log10().ceil() as i32;
    let span = (hi - lo).max(1);
    let step = ((span as usize).div_ceil(10)).max(1) as i32;
    (lo..=hi).step_by(step as usize).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() || s == "-" {
            "0".to_string()
        } else {
            s
        }
    } else {
        format!("{v:e}")
    }
}

/// Renders a line chart, or `None` when no series has a drawable point
/// (callers warn and skip the file). Log-scale charts drop points with
/// non-positive or non-finite y instead of failing.
pub fn render_line_chart(spec: &ChartSpec, series: &[Series]) -> Option<String> {
    let usable: Vec<(usize, Vec<(f64, f64)>)> = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .copied()
                .filter(|&(x, y)| {
                    x.is_finite() && y.is_finite() && (!spec.log_y || y > 0.0)
                })
                .collect();
            (i, pts)
        })
        .filter(|(_, pts)| !pts.is_empty())
        .collect();
    if usable.is_empty() {
        return None;
    }

    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (_, pts) in &usable {
        for &(x, y) in pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if xmin == xmax {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if spec.log_y {
        if ymin == ymax {
            ymin /= 10.0;
            ymax *= 10.0;
        }
    } else if ymin == ymax {
        ymin -= 0.5;
        ymax += 0.5;
    }

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * plot_w;
    let sy = |y: f64| {
        let t = if spec.log_y {
            (y.log10() - ymin.log10()) / (ymax.log10() - ymin.log10())
        } else {
            (y - ymin) / (ymax - ymin)
        };
        MARGIN_T + (1.0 - t) * plot_h
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
        px(MARGIN_L + plot_w / 2.0),
        escape(&spec.title)
    );

    // Axes.
    let x0 = px(MARGIN_L);
    let y0 = px(MARGIN_T + plot_h);
    let x1 = px(MARGIN_L + plot_w);
    let y1 = px(MARGIN_T);
    let _ = writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"#333333\" stroke-width=\"1\"/>"
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"#333333\" stroke-width=\"1\"/>"
    );

    for &tx in &linear_ticks(xmin, xmax) {
        let cx = px(sx(tx));
        let _ = writeln!(
            svg,
            "<line x1=\"{cx}\" y1=\"{y0}\" x2=\"{cx}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>",
            px(MARGIN_T + plot_h + 5.0)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{cx}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            px(MARGIN_T + plot_h + 18.0),
            fmt_tick(tx)
        );
    }
    if spec.log_y {
        for &k in &log_ticks(ymin, ymax) {
            let y = 10f64.powi(k);
            let cy = px(sy(y.clamp(ymin, ymax)));
            let _ = writeln!(
                svg,
                "<line x1=\"{}\" y1=\"{cy}\" x2=\"{x0}\" y2=\"{cy}\" stroke=\"#333333\" stroke-width=\"1\"/>",
                px(MARGIN_L - 5.0)
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">1e{k}</text>",
                px(MARGIN_L - 8.0),
                px(sy(y.clamp(ymin, ymax)) + 4.0)
            );
        }
    } else {
        for &ty in &linear_ticks(ymin, ymax) {
            let cy = px(sy(ty));
            let _ = writeln!(
                svg,
                "<line x1=\"{}\" y1=\"{cy}\" x2=\"{x0}\" y2=\"{cy}\" stroke=\"#333333\" stroke-width=\"1\"/>",
                px(MARGIN_L - 5.0)
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>",
                px(MARGIN_L - 8.0),
                px(sy(ty) + 4.0),
                fmt_tick(ty)
            );
        }
    }

    // Axis labels.
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        px(MARGIN_L + plot_w / 2.0),
        px(HEIGHT - 12.0),
        escape(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        px(MARGIN_T + plot_h / 2.0),
        px(MARGIN_T + plot_h / 2.0),
        escape(&spec.y_label)
    );

    // Series polylines and legend.
    for (slot, (idx, pts)) in usable.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let coords: Vec<String> =
            pts.iter().map(|&(x, y)| format!("{},{}", px(sx(x)), px(sy(y)))).collect();
        if pts.len() == 1 {
            let _ = writeln!(
                svg,
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>",
                px(sx(pts[0].0)),
                px(sy(pts[0].1))
            );
        } else {
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                coords.join(" ")
            );
        }
        let ly = MARGIN_T + 14.0 * slot as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
            px(WIDTH - MARGIN_R + 10.0),
            px(ly)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            px(WIDTH - MARGIN_R + 24.0),
            px(ly + 9.0),
            escape(&series[*idx].label)
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

// --- CSV re-parsers used by the `plot` subcommand -------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub epoch: usize,
    pub layer: usize,
    pub cdnv_train: f64,
    pub cdnv_test: f64,
    pub ncc_train_err: f64,
    pub ncc_test_err: f64,
    pub model_train_err: f64,
    pub model_test_err: f64,
    pub effective_depth: usize,
}

fn bad_csv(file: &str, line: usize, what: &str) -> CliError {
    CliError::Run(format!("{file}:{line}: {what}"))
}

fn parse_f64(file: &str, line: usize, field: &str) -> Result<f64, CliError> {
    field.parse().map_err(|_| bad_csv(file, line, &format!("bad float `{field}`")))
}

fn parse_usize(file: &str, line: usize, field: &str) -> Result<usize, CliError> {
    field.parse().map_err(|_| bad_csv(file, line, &format!("bad integer `{field}`")))
}

/// Parses `report.csv` (and the sweep summaries after their leading grid
/// columns are stripped by the caller).
pub fn parse_report_csv(file: &str, text: &str) -> Result<Vec<ReportRow>, CliError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != crate::artifacts::REPORT_CSV_HEADER {
                return Err(bad_csv(file, 1, "unexpected header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad_csv(file, i + 1, &format!("expected 9 fields, got {}", f.len())));
        }
        rows.push(ReportRow {
            epoch: parse_usize(file, i + 1, f[0])?,
            layer: parse_usize(file, i + 1, f[1])?,
            cdnv_train: parse_f64(file, i + 1, f[2])?,
            cdnv_test: parse_f64(file, i + 1, f[3])?,
            ncc_train_err: parse_f64(file, i + 1, f[4])?,
            ncc_test_err: parse_f64(file, i + 1, f[5])?,
            model_train_err: parse_f64(file, i + 1, f[6])?,
            model_test_err: parse_f64(file, i + 1, f[7])?,
            effective_depth: parse_usize(file, i + 1, f[8])?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSummaryRow {
    pub noise: f64,
    pub seed: u64,
    pub layer: usize,
    pub effective_depth: usize,
}

/// Parses the columns `plot` needs from `noise_summary.csv`.
pub fn parse_noise_summary_csv(file: &str, text: &str) -> Result<Vec<NoiseSummaryRow>, CliError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != crate::artifacts::NOISE_SUMMARY_CSV_HEADER {
                return Err(bad_csv(file, 1, "unexpected header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(bad_csv(file, i + 1, &format!("expected 10 fields, got {}", f.len())));
        }
        rows.push(NoiseSummaryRow {
            noise: parse_f64(file, i + 1, f[0])?,
            seed: f[1].parse().map_err(|_| bad_csv(file, i + 1, "bad seed"))?,
            layer: parse_usize(file, i + 1, f[2])?,
            effective_depth: parse_usize(file, i + 1, f[9])?,
        });
    }
    Ok(rows)
}

/// CDNV-versus-epoch figure: one log-scale series per layer.
pub fn cdnv_vs_epoch_chart(rows: &[ReportRow]) -> (ChartSpec, Vec<Series>) {
    let layers = rows.iter().map(|r| r.layer).max().unwrap_or(0);
    let series = (1..=layers)
        .map(|l| Series {
            label: format!("layer {l}"),
            points: rows
                .iter()
                .filter(|r| r.layer == l)
                .map(|r| (r.epoch as f64, r.cdnv_train))
                .collect(),
        })
        .collect();
    (
        ChartSpec {
            title: "Train CDNV by layer".into(),
            x_label: "epoch".into(),
            y_label: "CDNV".into(),
            log_y: true,
        },
        series,
    )
}

/// NCC-error-versus-layer figure at the final recorded epoch.
pub fn ncc_vs_layer_chart(rows: &[ReportRow]) -> (ChartSpec, Vec<Series>) {
    let last = rows.iter().map(|r| r.epoch).max().unwrap_or(0);
    let at_last: Vec<&ReportRow> = rows.iter().filter(|r| r.epoch == last).collect();
    let series = vec![
        Series {
            label: "train".into(),
            points: at_last.iter().map(|r| (r.layer as f64, r.ncc_train_err)).collect(),
        },
        Series {
            label: "test".into(),
            points: at_last.iter().map(|r| (r.layer as f64, r.ncc_test_err)).collect(),
        },
    ];
    (
        ChartSpec {
            title: format!("NCC error by layer (epoch {last})"),
            x_label: "layer".into(),
            y_label: "error".into(),
            log_y: false,
        },
        series,
    )
}

/// Effective-depth-versus-noise figure: per-seed lines plus the mean.
pub fn depth_vs_noise_chart(rows: &[NoiseSummaryRow]) -> (ChartSpec, Vec<Series>) {
    let runs: Vec<&NoiseSummaryRow> = rows.iter().filter(|r| r.layer == 1).collect();
    let mut seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut noises: Vec<f64> = runs.iter().map(|r| r.noise).collect();
    noises.sort_by(|a, b| a.partial_cmp(b).expect("finite noise fractions"));
    noises.dedup();

    let mut series: Vec<Series> = seeds
        .iter()
        .map(|&s| Series {
            label: format!("seed {s}"),
            points: runs
                .iter()
                .filter(|r| r.seed == s)
                .map(|r| (r.noise, r.effective_depth as f64))
                .collect(),
        })
        .collect();
    let mean_points: Vec<(f64, f64)> = noises
        .iter()
        .map(|&p| {
            let vals: Vec<f64> = runs
                .iter()
                .filter(|r| r.noise == p)
                .map(|r| r.effective_depth as f64)
                .collect();
            (p, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    series.push(Series { label: "mean".into(), points: mean_points });
    (
        ChartSpec {
            title: "Effective depth vs label noise".into(),
            x_label: "noise fraction".into(),
            y_label: "effective depth".into(),
            log_y: false,
        },
        series,
    )
}
