//! Subcommand implementations. Every command creates an output directory,
//! writes artifacts atomically, and finalizes the manifest even when a run
//! dies partway, so whatever landed on disk is always inventoried.

use std::fmt::Write as _;
use std::path::Path;

use collapse_core::bound::{bound_estimate, minimal_ncc_depth, DepthSweepConfig};
use collapse_core::data::Dataset;
use collapse_core::metrics::{
    class_stats, collapse_report, linear_probe, ncc_error, CollapseReport,
};
use collapse_core::nn::{build_network, save_checkpoint, Family, Network};
use collapse_core::optim::{train, SgdConfig, TrainRecord};
use collapse_core::{exec, SeededRng};

use crate::artifacts::{
    fmt_float, fmt_opt_float, OutDir, RunManifest, DEPTH_ROWS_CSV_HEADER,
    DEPTH_SUMMARY_CSV_HEADER, NOISE_SUMMARY_CSV_HEADER, PROBE_CSV_HEADER, REPORT_CSV_HEADER,
    TRAIN_CSV_HEADER,
};
use crate::config::ExperimentConfig;
use crate::pipeline::{prepare_data, shaped_for_mlp, train_chunked, PreparedData};
use crate::plot::{
    cdnv_vs_epoch_chart, depth_vs_noise_chart, ncc_vs_layer_chart, parse_noise_summary_csv,
    parse_report_csv, render_line_chart, NoiseSummaryRow, ReportRow,
};
use crate::CliError;

fn data_rng(cfg: &ExperimentConfig) -> SeededRng {
    SeededRng::new(cfg.dataset.seed)
}

/// Both splits in the shape the model family consumes.
fn shaped(prep: &PreparedData, family: Family) -> (Dataset, Dataset) {
    match family {
        Family::Mlp => (shaped_for_mlp(&prep.train), shaped_for_mlp(&prep.test)),
        Family::Conv => (prep.train.clone(), prep.test.clone()),
    }
}

/// One full training run. `run_seed` fixes initialization and batch order
/// through the same child streams the bound machinery uses, so a sweep
/// point is reproducible as a single run with `--seed`.
fn run_training(
    family: Family,
    depth: usize,
    width: usize,
    ds: &Dataset,
    base: &SgdConfig,
    run_seed: u64,
) -> Result<(Network, Vec<TrainRecord>), CliError> {
    let rng = SeededRng::new(run_seed);
    let mut net = build_network(
        family,
        depth,
        width,
        ds.sample_shape(),
        ds.classes,
        &mut rng.split("init"),
    )?;
    let cfg = SgdConfig { seed: rng.split("sgd").seed(), ..base.clone() };
    let records = train(&mut net, &ds.x, &ds.labels, &cfg)?;
    Ok((net, records))
}

fn finish(out: OutDir, result: Result<(), CliError>) -> Result<(), CliError> {
    let finalized = out.finalize();
    result.and(finalized)
}

// --- CSV builders ----------------------------------------------------------

fn train_log_csv(records: &[TrainRecord]) -> String {
    let mut s = String::from(TRAIN_CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.epoch,
            fmt_float(r.lr),
            fmt_float(r.train_loss),
            fmt_float(r.train_err)
        );
    }
    s
}

fn report_layer_fields(report: &CollapseReport, layer: usize) -> String {
    let l = &report.layers[layer];
    format!(
        "{},{},{},{},{},{},{},{}",
        l.index,
        fmt_opt_float(l.cdnv_train_avg),
        fmt_opt_float(l.cdnv_test_avg),
        fmt_float(l.ncc_train_err),
        fmt_float(l.ncc_test_err),
        fmt_float(report.model_train_err),
        fmt_float(report.model_test_err),
        report.effective_depth
    )
}

fn report_csv(snapshots: &[(usize, CollapseReport)]) -> String {
    let mut s = String::from(REPORT_CSV_HEADER);
    s.push('\n');
    for (epoch, report) in snapshots {
        for layer in 0..report.layers.len() {
            let _ = writeln!(s, "{},{}", epoch, report_layer_fields(report, layer));
        }
    }
    s
}

fn chart_rows(snapshots: &[(usize, CollapseReport)]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (epoch, report) in snapshots {
        for l in &report.layers {
            rows.push(ReportRow {
                epoch: *epoch,
                layer: l.index,
                cdnv_train: l.cdnv_train_avg.unwrap_or(f64::INFINITY),
                cdnv_test: l.cdnv_test_avg.unwrap_or(f64::INFINITY),
                ncc_train_err: l.ncc_train_err,
                ncc_test_err: l.ncc_test_err,
                model_train_err: report.model_train_err,
                model_test_err: report.model_test_err,
                effective_depth: report.effective_depth,
            });
        }
    }
    rows
}

#[derive(serde::Serialize)]
struct Snapshot<'a> {
    epoch: usize,
    report: &'a CollapseReport,
}

fn snapshots_json(snapshots: &[(usize, CollapseReport)]) -> Result<String, CliError> {
    let view: Vec<Snapshot> =
        snapshots.iter().map(|(epoch, report)| Snapshot { epoch: *epoch, report }).collect();
    Ok(serde_json::to_string_pretty(&view)?)
}

fn write_report_figures(
    out: &mut OutDir,
    rows: &[ReportRow],
) -> Result<(), CliError> {
    let (spec, series) = cdnv_vs_epoch_chart(rows);
    match render_line_chart(&spec, &series) {
        Some(svg) => out.write("cdnv_vs_epoch.svg", svg.as_bytes())?,
        None => eprintln!("warning: no drawable CDNV points; skipping cdnv_vs_epoch.svg"),
    }
    let (spec, series) = ncc_vs_layer_chart(rows);
    match render_line_chart(&spec, &series) {
        Some(svg) => out.write("ncc_error_by_layer.svg", svg.as_bytes())?,
        None => eprintln!("warning: no drawable NCC points; skipping ncc_error_by_layer.svg"),
    }
    Ok(())
}

// --- train -----------------------------------------------------------------

pub fn cmd_train(
    cfg: &ExperimentConfig,
    canonical: &str,
    out_root: &Path,
) -> Result<(), CliError> {
    let mut out = OutDir::new(out_root, "train", cfg.master_seed, canonical)?;
    let result = train_inner(cfg, &mut out);
    finish(out, result)
}

fn train_inner(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<(), CliError> {
    let prep = prepare_data(&cfg.dataset, &data_rng(cfg), None)?;
    out.write("dataset.json", serde_json::to_string_pretty(&prep.manifest)?.as_bytes())?;
    let (train_ds, _) = shaped(&prep, cfg.arch.family);

    let run_seed = cfg.master_seed;
    let rng = SeededRng::new(run_seed);
    let mut net = build_network(
        cfg.arch.family,
        cfg.arch.depth,
        cfg.arch.width,
        train_ds.sample_shape(),
        train_ds.classes,
        &mut rng.split("init"),
    )?;
    let sgd = SgdConfig { seed: rng.split("sgd").seed(), ..cfg.sgd.clone() };
    let horizon = sgd.epochs;

    let records =
        train_chunked(&mut net, &train_ds, &sgd, &cfg.checkpoint_epochs, |epoch, net| {
            let rel = if epoch == horizon {
                "checkpoint-final.ncpk".to_string()
            } else {
                format!("checkpoint-{epoch:04}.ncpk")
            };
            save_checkpoint(net, run_seed, &out.path(&rel))?;
            out.track(&rel)
        })?;
    out.write("train_log.csv", train_log_csv(&records).as_bytes())?;
    Ok(())
}

// --- report ----------------------------------------------------------------

pub fn cmd_report(
    cfg: &ExperimentConfig,
    canonical: &str,
    out_root: &Path,
) -> Result<(), CliError> {
    let mut out = OutDir::new(out_root, "report", cfg.master_seed, canonical)?;
    let result = report_inner(cfg, &mut out);
    finish(out, result)
}

fn report_inner(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<(), CliError> {
    let prep = prepare_data(&cfg.dataset, &data_rng(cfg), None)?;
    out.write("dataset.json", serde_json::to_string_pretty(&prep.manifest)?.as_bytes())?;
    let (train_ds, test_ds) = shaped(&prep, cfg.arch.family);

    let run_seed = cfg.master_seed;
    let rng = SeededRng::new(run_seed);
    let mut net = build_network(
        cfg.arch.family,
        cfg.arch.depth,
        cfg.arch.width,
        train_ds.sample_shape(),
        train_ds.classes,
        &mut rng.split("init"),
    )?;
    let sgd = SgdConfig { seed: rng.split("sgd").seed(), ..cfg.sgd.clone() };

    let stops: Vec<usize> = if cfg.report_every > 0 {
        (0..sgd.epochs).step_by(cfg.report_every).collect()
    } else {
        vec![0]
    };
    let mut snapshots: Vec<(usize, CollapseReport)> = Vec::new();
    let records = train_chunked(&mut net, &train_ds, &sgd, &stops, |epoch, net| {
        let report =
            collapse_report(net, &train_ds, &test_ds, cfg.epsilon, cfg.recompute_test_means)?;
        snapshots.push((epoch, report));
        Ok(())
    })?;

    out.write("train_log.csv", train_log_csv(&records).as_bytes())?;
    out.write("report.csv", report_csv(&snapshots).as_bytes())?;
    out.write("snapshots.json", snapshots_json(&snapshots)?.as_bytes())?;
    let (_, final_report) = snapshots.last().expect("schedule always contains the final epoch");
    out.write("report_final.json", serde_json::to_string_pretty(final_report)?.as_bytes())?;
    write_report_figures(out, &chart_rows(&snapshots))
}

// --- depth sweep -------------------------------------------------------------

pub fn cmd_depth_sweep(
    cfg: &ExperimentConfig,
    canonical: &str,
    out_root: &Path,
) -> Result<(), CliError> {
    let mut out = OutDir::new(out_root, "depth-sweep", cfg.master_seed, canonical)?;
    let result = depth_sweep_inner(cfg, &mut out);
    finish(out, result)
}

fn depth_sweep_inner(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<(), CliError> {
    if cfg.depths.is_empty() {
        return Err(CliError::Usage("depths list is empty".into()));
    }
    if cfg.seeds.is_empty() {
        return Err(CliError::Usage("seeds list is empty".into()));
    }
    let prep = prepare_data(&cfg.dataset, &data_rng(cfg), None)?;
    out.write("dataset.json", serde_json::to_string_pretty(&prep.manifest)?.as_bytes())?;
    let (train_ds, test_ds) = shaped(&prep, cfg.arch.family);

    let points: Vec<(usize, u64)> = cfg
        .depths
        .iter()
        .flat_map(|&depth| cfg.seeds.iter().map(move |&seed| (depth, seed)))
        .collect();
    let outcomes: Vec<Result<CollapseReport, String>> = exec::map(points.clone(), |(depth, seed)| {
        run_training(cfg.arch.family, depth, cfg.arch.width, &train_ds, &cfg.sgd, seed)
            .and_then(|(net, _)| {
                Ok(collapse_report(
                    &net,
                    &train_ds,
                    &test_ds,
                    cfg.epsilon,
                    cfg.recompute_test_means,
                )?)
            })
            .map_err(|e| format!("depth {depth} seed {seed}: {e}"))
    });

    let mut csv = String::from(DEPTH_SUMMARY_CSV_HEADER);
    csv.push('\n');
    let mut failures = Vec::new();
    for ((depth, seed), outcome) in points.iter().zip(outcomes) {
        match outcome {
            Ok(report) => {
                out.write(
                    &format!("runs/depth-{depth}-seed-{seed}/report.json"),
                    serde_json::to_string_pretty(&report)?.as_bytes(),
                )?;
                for layer in 0..report.layers.len() {
                    let _ = writeln!(
                        csv,
                        "{},{},{}",
                        depth,
                        seed,
                        report_layer_fields(&report, layer)
                    );
                }
            }
            Err(msg) => failures.push(msg),
        }
    }
    out.write("depth_summary.csv", csv.as_bytes())?;
    fail_or_ok(out, failures, points.len())
}

/// Records sweep failures and converts them into a nonzero exit after all
/// successful points have been written.
fn fail_or_ok(out: &mut OutDir, failures: Vec<String>, total: usize) -> Result<(), CliError> {
    if failures.is_empty() {
        return Ok(());
    }
    let mut text = failures.join("\n");
    text.push('\n');
    out.write("failures.txt", text.as_bytes())?;
    Err(CliError::Run(format!(
        "{} of {} sweep runs failed; see failures.txt",
        failures.len(),
        total
    )))
}

// --- noise sweep -------------------------------------------------------------

pub fn cmd_noise_sweep(
    cfg: &ExperimentConfig,
    canonical: &str,
    out_root: &Path,
) -> Result<(), CliError> {
    let mut out = OutDir::new(out_root, "noise-sweep", cfg.master_seed, canonical)?;
    let result = noise_sweep_inner(cfg, &mut out);
    finish(out, result)
}

fn noise_sweep_inner(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<(), CliError> {
    if cfg.noise_fractions.is_empty() {
        return Err(CliError::Usage("noise_fractions list is empty".into()));
    }
    if cfg.seeds.is_empty() {
        return Err(CliError::Usage("seeds list is empty".into()));
    }
    for &p in &cfg.noise_fractions {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(CliError::Usage(format!("noise fraction {p} outside [0, 1]")));
        }
    }

    // One dataset per fraction, shared across seeds: same base samples, same
    // corruption stream.
    let mut grids: Vec<(f64, Dataset, Dataset)> = Vec::new();
    let mut manifests = Vec::new();
    for &p in &cfg.noise_fractions {
        let prep = prepare_data(&cfg.dataset, &data_rng(cfg), Some(p))?;
        let (train_ds, test_ds) = shaped(&prep, cfg.arch.family);
        manifests.push(prep.manifest);
        grids.push((p, train_ds, test_ds));
    }
    out.write("datasets.json", serde_json::to_string_pretty(&manifests)?.as_bytes())?;

    let points: Vec<(usize, u64)> = (0..grids.len())
        .flat_map(|gi| cfg.seeds.iter().map(move |&seed| (gi, seed)))
        .collect();
    let outcomes: Vec<Result<CollapseReport, String>> = exec::map(points.clone(), |(gi, seed)| {
        let (p, train_ds, test_ds) = &grids[gi];
        run_training(cfg.arch.family, cfg.arch.depth, cfg.arch.width, train_ds, &cfg.sgd, seed)
            .and_then(|(net, _)| {
                Ok(collapse_report(&net, train_ds, test_ds, cfg.epsilon, cfg.recompute_test_means)?)
            })
            .map_err(|e| format!("noise {p} seed {seed}: {e}"))
    });

    let mut csv = String::from(NOISE_SUMMARY_CSV_HEADER);
    csv.push('\n');
    let mut chart_input: Vec<NoiseSummaryRow> = Vec::new();
    let mut failures = Vec::new();
    for ((gi, seed), outcome) in points.iter().zip(outcomes) {
        let p = grids[*gi].0;
        match outcome {
            Ok(report) => {
                out.write(
                    &format!("runs/noise-{p}-seed-{seed}/report.json"),
                    serde_json::to_string_pretty(&report)?.as_bytes(),
                )?;
                for layer in 0..report.layers.len() {
                    let _ = writeln!(
                        csv,
                        "{},{},{}",
                        fmt_float(p),
                        seed,
                        report_layer_fields(&report, layer)
                    );
                    chart_input.push(NoiseSummaryRow {
                        noise: p,
                        seed: *seed,
                        layer: report.layers[layer].index,
                        effective_depth: report.effective_depth,
                    });
                }
            }
            Err(msg) => failures.push(msg),
        }
    }
    out.write("noise_summary.csv", csv.as_bytes())?;
    if !chart_input.is_empty() {
        let (spec, series) = depth_vs_noise_chart(&chart_input);
        match render_line_chart(&spec, &series) {
            Some(svg) => out.write("effective_depth_vs_noise.svg", svg.as_bytes())?,
            None => eprintln!(
                "warning: no drawable effective-depth points; skipping effective_depth_vs_noise.svg"
            ),
        }
    }
    fail_or_ok(out, failures, points.len())
}

// --- bound -------------------------------------------------------------------

pub fn cmd_bound(
    cfg: &ExperimentConfig,
    canonical: &str,
    out_root: &Path,
) -> Result<(), CliError> {
    let mut out = OutDir::new(out_root, "bound", cfg.master_seed, canonical)?;
    let result = bound_inner(cfg, &mut out);
    finish(out, result)
}

fn bound_inner(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<(), CliError> {
    let k = cfg.bound.k;
    if k == 0 {
        return Err(CliError::Usage("bound.k must be at least 1".into()));
    }
    let prep = prepare_data(&cfg.dataset, &data_rng(cfg), None)?;
    out.write("dataset.json", serde_json::to_string_pretty(&prep.manifest)?.as_bytes())?;
    let (train_ds, _) = shaped(&prep, cfg.arch.family);

    let classes = train_ds.classes;
    let per_class = train_ds.label_histogram().first().copied().unwrap_or(0);
    let m_each = if cfg.bound.m_each == 0 {
        let per_part = per_class / (2 * k);
        if per_part == 0 {
            return Err(CliError::Usage(format!(
                "dataset has {per_class} samples per class; too few for {} disjoint parts",
                2 * k
            )));
        }
        per_part * classes
    } else {
        cfg.bound.m_each
    };
    let parts = train_ds
        .split_disjoint(2 * k, m_each, &data_rng(cfg).split("bound-split"))
        .map_err(|e| {
            CliError::Usage(format!("cannot carve {k} disjoint (S1, S2) pairs: {e}"))
        })?;
    let mut pairs: Vec<(Dataset, Dataset)> = Vec::with_capacity(k);
    let mut iter = parts.into_iter();
    while let (Some(a), Some(b)) = (iter.next(), iter.next()) {
        pairs.push((a, b));
    }

    let params = &cfg.bound.params;
    let estimate = bound_estimate(&pairs, params)?;
    out.write("bound.json", serde_json::to_string_pretty(&estimate)?.as_bytes())?;

    // Depth-search context on the first clean S1: the documented CSV surface
    // for minimal-depth sweeps, and a sanity row set for the bound's proxy.
    let sweep = DepthSweepConfig {
        l_max: params.l_max,
        width: params.width,
        seeds: params.gamma_seeds.clone(),
        interp_tol: params.interp_tol,
        train: params.train.clone(),
    };
    let search = minimal_ncc_depth(&pairs[0].0, &sweep)?;
    let mut csv = String::from(DEPTH_ROWS_CSV_HEADER);
    csv.push('\n');
    for row in &search.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            row.depth,
            row.seed,
            fmt_float(row.ncc_train_err),
            row.interpolated
        );
    }
    out.write("depth_search.csv", csv.as_bytes())?;

    let mut text = String::new();
    let _ = writeln!(text, "comparative generalization bound (desk scale)");
    let _ = writeln!(text, "pairs attempted: {}", estimate.per_pair.len());
    let _ = writeln!(text, "pairs valid (k): {}", estimate.k);
    let _ = writeln!(text, "indicators: {:?}", estimate.indicators);
    let avg =
        estimate.indicators.iter().map(|&v| v as f64).sum::<f64>() / estimate.k as f64;
    let _ = writeln!(text, "indicator average: {avg:.6}");
    let _ = writeln!(text, "p_m: {:.6}", estimate.p_m);
    let _ = writeln!(text, "delta_m: {:.6}", estimate.delta_m);
    let _ = writeln!(text, "delta: {:.6}", estimate.delta);
    let _ = writeln!(text, "hoeffding term: {:.6}", estimate.hoeffding);
    let _ = writeln!(text, "total (raw): {:.6}", estimate.total_raw);
    let _ = writeln!(text, "total (clipped): {:.6}", estimate.total_clipped);
    let _ = writeln!(text);
    for (i, pair) in estimate.per_pair.iter().enumerate() {
        let _ = writeln!(
            text,
            "pair {i}: eff_depth={} min_depth_union={} valid={} censored={}",
            pair.eff_depth.map_or("n/a".to_string(), |v| format!("{v:.4}")),
            pair.min_depth_union.map_or("n/a".to_string(), |v| format!("{v:.4}")),
            pair.valid,
            pair.censored
        );
    }
    let _ = writeln!(text);
    let _ = writeln!(
        text,
        "clean S1 depth search (l_max {}): minimal qualifying depth {}",
        params.l_max,
        search.minimal.map_or("none".to_string(), |d| d.to_string())
    );
    let _ = writeln!(
        text,
        "note: minimal depths are SGD-reachable proxies, upper bounds on the true minimum over parameters."
    );
    out.write("bound_summary.txt", text.as_bytes())?;
    Ok(())
}

// --- probe -------------------------------------------------------------------

pub fn cmd_probe(
    cfg: &ExperimentConfig,
    canonical: &str,
    out_root: &Path,
) -> Result<(), CliError> {
    let mut out = OutDir::new(out_root, "probe", cfg.master_seed, canonical)?;
    let result = probe_inner(cfg, &mut out);
    finish(out, result)
}

fn probe_inner(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<(), CliError> {
    let prep = prepare_data(&cfg.dataset, &data_rng(cfg), None)?;
    out.write("dataset.json", serde_json::to_string_pretty(&prep.manifest)?.as_bytes())?;
    let (train_ds, test_ds) = shaped(&prep, cfg.arch.family);

    let (net, records) = run_training(
        cfg.arch.family,
        cfg.arch.depth,
        cfg.arch.width,
        &train_ds,
        &cfg.sgd,
        cfg.master_seed,
    )?;
    out.write("train_log.csv", train_log_csv(&records).as_bytes())?;

    let train_trace = net.eval_trace(&train_ds.x)?;
    let test_trace = net.eval_trace(&test_ds.x)?;
    let mut csv = String::from(PROBE_CSV_HEADER);
    csv.push('\n');
    for (i, (ft, fs)) in train_trace.features.iter().zip(&test_trace.features).enumerate() {
        let probe = linear_probe(
            ft,
            &train_ds.labels,
            fs,
            &test_ds.labels,
            train_ds.classes,
            &cfg.probe,
        )?;
        let stats = class_stats(ft, &train_ds.labels, train_ds.classes)?;
        let ncc_train = ncc_error(ft, &train_ds.labels, &stats.means)?;
        let ncc_test = ncc_error(fs, &test_ds.labels, &stats.means)?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            i + 1,
            fmt_float(probe.train_err),
            fmt_float(probe.test_err),
            fmt_float(ncc_train),
            fmt_float(ncc_test)
        );
    }
    out.write("probe.csv", csv.as_bytes())?;
    Ok(())
}

// --- plot --------------------------------------------------------------------

pub fn cmd_plot(
    cfg: &ExperimentConfig,
    canonical: &str,
    out_root: &Path,
) -> Result<(), CliError> {
    let mut figures: Vec<(&str, String)> = Vec::new();

    let report_path = out_root.join("report.csv");
    if report_path.exists() {
        let text = std::fs::read_to_string(&report_path)?;
        let rows = parse_report_csv("report.csv", &text)?;
        let (spec, series) = cdnv_vs_epoch_chart(&rows);
        match render_line_chart(&spec, &series) {
            Some(svg) => figures.push(("cdnv_vs_epoch.svg", svg)),
            None => eprintln!("warning: report.csv has no drawable CDNV points"),
        }
        let (spec, series) = ncc_vs_layer_chart(&rows);
        match render_line_chart(&spec, &series) {
            Some(svg) => figures.push(("ncc_error_by_layer.svg", svg)),
            None => eprintln!("warning: report.csv has no drawable NCC points"),
        }
    }
    let noise_path = out_root.join("noise_summary.csv");
    if noise_path.exists() {
        let text = std::fs::read_to_string(&noise_path)?;
        let rows = parse_noise_summary_csv("noise_summary.csv", &text)?;
        let (spec, series) = depth_vs_noise_chart(&rows);
        match render_line_chart(&spec, &series) {
            Some(svg) => figures.push(("effective_depth_vs_noise.svg", svg)),
            None => eprintln!("warning: noise_summary.csv has no drawable points"),
        }
    }
    if figures.is_empty() {
        eprintln!(
            "warning: no summary CSVs with drawable data under {}; nothing to plot",
            out_root.display()
        );
        return Ok(());
    }

    let prior: Option<RunManifest> = std::fs::read_to_string(out_root.join("manifest.json"))
        .ok()
        .and_then(|text| serde_json::from_str(&text).ok());
    let mut out = OutDir::attach(out_root, "plot", cfg.master_seed, canonical)?;
    if let Some(prior) = &prior {
        out.absorb(prior);
    }
    let mut result = Ok(());
    for (rel, svg) in figures {
        if let Err(e) = out.write(rel, svg.as_bytes()) {
            result = Err(e);
            break;
        }
    }
    finish(out, result)
}
