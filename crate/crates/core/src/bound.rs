//! Depth-based generalization bound machinery: minimal-depth sweeps,
//! expected effective depth, an error-uniformity diagnostic, and the
//! four-term bound estimate
//!
//! ```text
//! bound = avg_i V_i + p_m + delta_m + sqrt(ln(2/delta) / (2k))
//! ```
//!
//! where `V_i` indicates, for an independent sample pair `(S1, S2)`, that the
//! expected effective depth of nets trained on `S1` reaches the expected
//! minimal depth needed to interpolate `S1` together with a partially
//! relabeled copy of `S2`.

use serde::{Deserialize, Serialize};

use crate::data::{inject_noise, DataError, Dataset};
use crate::exec;
use crate::mathfn;
use crate::metrics::{class_stats, effective_depth, ncc_error, MetricsError};
use crate::nn::{build_conv, build_mlp, Network, NnError};
use crate::optim::{train, OptimError, SgdConfig};
use crate::rng::SeededRng;

#[derive(Debug, thiserror::Error)]
pub enum BoundError {
    #[error("dataset sample shape {0:?} is neither flat nor an image")]
    BadSampleShape(Vec<usize>),
    #[error("sweep needs l_max >= 1 and at least one seed")]
    EmptySweep,
    #[error("no valid pairs; every pair's training diverged")]
    NoValidPairs,
    #[error("delta {0} outside (0, 1)")]
    BadDelta(f64),
    #[error("bound estimate needs noise_draws >= 1")]
    NoDraws,
    #[error("uniformity diagnostic needs at least 2 seeds, got {0}")]
    NeedTwoSeeds(usize),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Hoeffding deviation term `sqrt(ln(2/delta) / (2k))`.
pub fn hoeffding_term(k: usize, delta: f64) -> f64 {
    (mathfn::ln(2.0 / delta) / (2.0 * k as f64)).sqrt()
}

/// Builds a depth-`depth` net matching the dataset's sample shape: flat
/// samples get an MLP, `(c, h, w)` samples get the conv family.
pub fn build_net_for(
    ds: &Dataset,
    depth: usize,
    width: usize,
    rng: &mut SeededRng,
) -> Result<Network, BoundError> {
    match ds.sample_shape() {
        &[d] => Ok(build_mlp(depth, width, d, ds.classes, rng)?),
        &[c, h, w] => Ok(build_conv(depth, width, (c, h, w), ds.classes, rng)?),
        other => Err(BoundError::BadSampleShape(other.to_vec())),
    }
}

/// Trains a fresh net on `ds`; `seed` fixes both the initialization and the
/// batch order (overriding `cfg.seed`).
pub fn train_fresh(
    ds: &Dataset,
    depth: usize,
    width: usize,
    cfg: &SgdConfig,
    seed: u64,
) -> Result<Network, BoundError> {
    let rng = SeededRng::new(seed);
    let mut net = build_net_for(ds, depth, width, &mut rng.split("init"))?;
    let cfg = SgdConfig { seed: rng.split("sgd").seed(), ..cfg.clone() };
    train(&mut net, &ds.x, &ds.labels, &cfg)?;
    Ok(net)
}

/// NCC training error at the top block of `net` on `ds`.
pub fn top_layer_ncc_err(net: &Network, ds: &Dataset) -> Result<f64, BoundError> {
    let trace = net.eval_trace(&ds.x)?;
    let top = trace.features.last().expect("network has at least one block");
    let stats = class_stats(top, &ds.labels, ds.classes)?;
    Ok(ncc_error(top, &ds.labels, &stats.means)?)
}

/// Effective depth of `net` on `ds` at tolerance `epsilon`.
pub fn effective_depth_of(net: &Network, ds: &Dataset, epsilon: f64) -> Result<usize, BoundError> {
    let trace = net.eval_trace(&ds.x)?;
    let errs: Vec<Result<f64, MetricsError>> =
        exec::map_indexed(trace.features.len(), |i| {
            let f = &trace.features[i];
            let stats = class_stats(f, &ds.labels, ds.classes)?;
            ncc_error(f, &ds.labels, &stats.means)
        });
    let errs = errs.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(effective_depth(&errs, epsilon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthSweepConfig {
    pub l_max: usize,
    pub width: usize,
    pub seeds: Vec<u64>,
    /// Top-layer NCC training error at or below this counts as interpolation.
    pub interp_tol: f64,
    pub train: SgdConfig,
}

impl Default for DepthSweepConfig {
    fn default() -> Self {
        DepthSweepConfig {
            l_max: 6,
            width: 32,
            seeds: vec![1, 2, 3],
            interp_tol: 0.0,
            train: SgdConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthSearchRow {
    pub depth: usize,
    pub seed: u64,
    pub ncc_train_err: f64,
    pub interpolated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthSearch {
    pub rows: Vec<DepthSearchRow>,
    /// Smallest depth at which any seed interpolated, if one did.
    pub minimal: Option<usize>,
}

/// Minimal depth over rows: the smallest depth at which at least one seed
/// interpolated.
pub fn qualifying_depth(rows: &[DepthSearchRow]) -> Option<usize> {
    rows.iter().filter(|r| r.interpolated).map(|r| r.depth).min()
}

/// Re-evaluates the minimal depth from recorded rows at a different
/// interpolation tolerance. Monotone non-increasing in `tol`.
pub fn qualifying_depth_at(rows: &[DepthSearchRow], tol: f64) -> Option<usize> {
    rows.iter().filter(|r| r.ncc_train_err <= tol).map(|r| r.depth).min()
}

/// Sweeps depths `1..=l_max`, training every seed at each depth, and stops
/// after the first depth where some seed interpolates the training set at the
/// top block. Rows for all visited (depth, seed) runs are returned.
pub fn minimal_ncc_depth(ds: &Dataset, cfg: &DepthSweepConfig) -> Result<DepthSearch, BoundError> {
    if cfg.l_max == 0 || cfg.seeds.is_empty() {
        return Err(BoundError::EmptySweep);
    }
    let mut rows = Vec::new();
    for depth in 1..=cfg.l_max {
        let depth_rows: Vec<Result<DepthSearchRow, BoundError>> =
            exec::map(cfg.seeds.clone(), |seed| {
                let net = train_fresh(ds, depth, cfg.width, &cfg.train, seed)?;
                let err = top_layer_ncc_err(&net, ds)?;
                Ok(DepthSearchRow {
                    depth,
                    seed,
                    ncc_train_err: err,
                    interpolated: err <= cfg.interp_tol,
                })
            });
        let mut done = false;
        for row in depth_rows {
            let row = row?;
            done |= row.interpolated;
            rows.push(row);
        }
        if done {
            break;
        }
    }
    let minimal = qualifying_depth(&rows);
    Ok(DepthSearch { rows, minimal })
}

/// Mean effective depth over nets trained from each seed on `ds`.
pub fn expected_effective_depth(
    ds: &Dataset,
    depth: usize,
    width: usize,
    seeds: &[u64],
    cfg: &SgdConfig,
    epsilon: f64,
) -> Result<f64, BoundError> {
    let depths: Vec<Result<usize, BoundError>> = exec::map(seeds.to_vec(), |seed| {
        let net = train_fresh(ds, depth, width, cfg, seed)?;
        effective_depth_of(&net, ds, epsilon)
    });
    let mut sum = 0usize;
    for d in depths {
        sum += d?;
    }
    Ok(sum as f64 / seeds.len() as f64)
}

// ---------------------------------------------------------------------------
// Error-uniformity diagnostic
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityReport {
    /// Mistakes per seed on the held-out set.
    pub per_seed_errors: Vec<usize>,
    /// `max - min` of `per_seed_errors`.
    pub spread: usize,
    /// How often each sample was missed, summed over seeds.
    pub per_sample_frequency: Vec<usize>,
    /// Goodness-of-fit statistic of mistake placement against the uniform
    /// distribution over samples.
    pub chi_square: f64,
    pub p_value: f64,
    /// True when the error count is stable across seeds (spread <= 1) and
    /// placement is compatible with uniform (p >= 0.01).
    pub uniform: bool,
}

/// Builds the report from per-seed lists of missed sample indices on a set of
/// size `m`.
pub fn diagnostic_from_mistakes(mistakes: &[Vec<usize>], m: usize) -> UniformityReport {
    let per_seed_errors: Vec<usize> = mistakes.iter().map(Vec::len).collect();
    let spread = match (per_seed_errors.iter().max(), per_seed_errors.iter().min()) {
        (Some(max), Some(min)) => max - min,
        _ => 0,
    };
    let mut freq = vec![0usize; m];
    for seed_mistakes in mistakes {
        for &i in seed_mistakes {
            freq[i] += 1;
        }
    }
    let total: usize = freq.iter().sum();
    let (chi_square, p_value) = if total == 0 || m < 2 {
        (0.0, 1.0)
    } else {
        let expected = total as f64 / m as f64;
        let chi: f64 = freq
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        let dist = statrs::distribution::ChiSquared::new((m - 1) as f64)
            .expect("m >= 2 gives positive dof");
        use statrs::distribution::ContinuousCDF;
        (chi, 1.0 - dist.cdf(chi))
    };
    UniformityReport {
        uniform: spread <= 1 && p_value >= 0.01,
        per_seed_errors,
        spread,
        per_sample_frequency: freq,
        chi_square,
        p_value,
    }
}

/// Trains one net per seed on `train_ds` and diagnoses how its mistakes on
/// `eval_ds` are distributed. Needs at least two seeds, since the spread is
/// meaningless for one.
pub fn uniformity_diagnostic(
    train_ds: &Dataset,
    eval_ds: &Dataset,
    depth: usize,
    width: usize,
    seeds: &[u64],
    cfg: &SgdConfig,
) -> Result<UniformityReport, BoundError> {
    if seeds.len() < 2 {
        return Err(BoundError::NeedTwoSeeds(seeds.len()));
    }
    let mistakes: Vec<Result<Vec<usize>, BoundError>> = exec::map(seeds.to_vec(), |seed| {
        let net = train_fresh(train_ds, depth, width, cfg, seed)?;
        let logits = net.eval_logits(&eval_ds.x)?;
        let mut missed = Vec::new();
        for (i, &y) in eval_ds.labels.iter().enumerate() {
            let row = logits.row(i);
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            if best != y {
                missed.push(i);
            }
        }
        Ok(missed)
    });
    let mistakes = mistakes.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(diagnostic_from_mistakes(&mistakes, eval_ds.len()))
}

// ---------------------------------------------------------------------------
// Bound estimate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    /// Depth of the reference nets whose effective depth is measured on S1.
    pub depth: usize,
    pub width: usize,
    /// Depth cap of the minimal-depth sweep on the union.
    pub l_max: usize,
    /// Effective-depth tolerance.
    pub epsilon: f64,
    /// Interpolation tolerance of the minimal-depth sweep.
    pub interp_tol: f64,
    /// Fraction of S2 labels resampled in each relabeling draw; also the
    /// additive noise term of the estimate.
    pub p_m: f64,
    /// Confidence level of the Hoeffding term.
    pub delta: f64,
    /// Memorization-uniformity slack, measured separately.
    pub delta_m: f64,
    /// Training seeds entering the expected effective depth and the sweep.
    pub gamma_seeds: Vec<u64>,
    /// Relabeling draws of S2 per pair.
    pub noise_draws: usize,
    /// Root seed of the relabeling streams.
    pub noise_seed: u64,
    pub train: SgdConfig,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams {
            depth: 4,
            width: 16,
            l_max: 4,
            epsilon: 0.01,
            interp_tol: 0.0,
            p_m: 0.0,
            delta: 0.05,
            delta_m: 0.0,
            gamma_seeds: vec![1, 2, 3],
            noise_draws: 1,
            noise_seed: 0,
            train: SgdConfig {
                epochs: 60,
                batch_size: 32,
                decay_epochs: vec![30, 45],
                ..SgdConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    /// Mean effective depth on S1 over the gamma seeds (null if invalid).
    pub eff_depth: Option<f64>,
    /// Mean minimal interpolating depth on the union (null if invalid);
    /// censored draws count as `l_max + 1`.
    pub min_depth_union: Option<f64>,
    pub valid: bool,
    /// True when some relabeling draw never interpolated within `l_max`.
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    /// Number of valid pairs actually averaged (Hoeffding uses this count).
    pub k: usize,
    pub p_m: f64,
    pub delta: f64,
    pub delta_m: f64,
    pub hoeffding: f64,
    /// One 0/1 entry per valid pair, in pair order.
    pub indicators: Vec<u8>,
    /// One entry per attempted pair, including invalid ones.
    pub per_pair: Vec<PairResult>,
    pub total_raw: f64,
    pub total_clipped: f64,
}

/// Averages censored-aware minimal depths: a draw that never interpolated
/// within `l_max` contributes `l_max + 1` (a lower bound on its true minimal
/// depth, so the pair indicator errs toward 0).
pub fn summarize_min_depths(draws: &[Option<usize>], l_max: usize) -> (f64, bool) {
    let mut sum = 0.0;
    let mut censored = false;
    for d in draws {
        match d {
            Some(v) => sum += *v as f64,
            None => {
                sum += (l_max + 1) as f64;
                censored = true;
            }
        }
    }
    (sum / draws.len() as f64, censored)
}

/// Assembles the four-term estimate from per-pair indicators.
pub fn assemble_estimate(
    indicators: Vec<u8>,
    per_pair: Vec<PairResult>,
    p_m: f64,
    delta: f64,
    delta_m: f64,
) -> Result<BoundEstimate, BoundError> {
    let k = indicators.len();
    if k == 0 {
        return Err(BoundError::NoValidPairs);
    }
    let avg = indicators.iter().map(|&v| v as f64).sum::<f64>() / k as f64;
    let hoeffding = hoeffding_term(k, delta);
    let total_raw = avg + p_m + delta_m + hoeffding;
    Ok(BoundEstimate {
        k,
        p_m,
        delta,
        delta_m,
        hoeffding,
        indicators,
        per_pair,
        total_raw,
        total_clipped: total_raw.min(1.0),
    })
}

/// Runs the full estimate over caller-supplied disjoint `(S1, S2)` pairs.
///
/// For each pair the expected effective depth of nets trained on the clean
/// `S1` is compared against the expected minimal depth interpolating the
/// union of `S1` with a relabeled copy of `S2` that resamples exactly
/// `ceil(p_m * |S2|)` labels uniformly among the wrong classes (one or more
/// draws, averaged).
/// A pair whose training diverges is marked invalid and excluded, shrinking
/// the effective `k`.
pub fn bound_estimate(
    pairs: &[(Dataset, Dataset)],
    params: &BoundParams,
) -> Result<BoundEstimate, BoundError> {
    if !(params.delta > 0.0 && params.delta < 1.0) {
        return Err(BoundError::BadDelta(params.delta));
    }
    if params.noise_draws == 0 {
        return Err(BoundError::NoDraws);
    }
    if params.l_max == 0 || params.gamma_seeds.is_empty() {
        return Err(BoundError::EmptySweep);
    }
    let noise_root = SeededRng::new(params.noise_seed);

    let pair_runs: Vec<Result<(Option<u8>, PairResult), BoundError>> =
        exec::map_indexed(pairs.len(), |i| {
            let (s1, s2) = &pairs[i];
            match run_pair(s1, s2, i, params, &noise_root) {
                Ok((indicator, result)) => Ok((Some(indicator), result)),
                Err(BoundError::Optim(_)) => Ok((
                    None,
                    PairResult {
                        eff_depth: None,
                        min_depth_union: None,
                        valid: false,
                        censored: false,
                    },
                )),
                Err(e) => Err(e),
            }
        });

    let mut indicators = Vec::new();
    let mut per_pair = Vec::new();
    for run in pair_runs {
        let (indicator, result) = run?;
        if let Some(v) = indicator {
            indicators.push(v);
        }
        per_pair.push(result);
    }
    assemble_estimate(indicators, per_pair, params.p_m, params.delta, params.delta_m)
}

fn run_pair(
    s1: &Dataset,
    s2: &Dataset,
    pair_index: usize,
    params: &BoundParams,
    noise_root: &SeededRng,
) -> Result<(u8, PairResult), BoundError> {
    let eff = expected_effective_depth(
        s1,
        params.depth,
        params.width,
        &params.gamma_seeds,
        &params.train,
        params.epsilon,
    )?;

    let sweep_cfg = DepthSweepConfig {
        l_max: params.l_max,
        width: params.width,
        seeds: params.gamma_seeds.clone(),
        interp_tol: params.interp_tol,
        train: params.train.clone(),
    };
    let mut draws = Vec::with_capacity(params.noise_draws);
    for d in 0..params.noise_draws {
        let relabel_rng = noise_root.split(&format!("pair-{pair_index}-draw-{d}"));
        let (s2_noisy, _) = inject_noise(s2, params.p_m, &relabel_rng)?;
        let union = s1.union(&s2_noisy)?;
        let search = minimal_ncc_depth(&union, &sweep_cfg)?;
        draws.push(search.minimal);
    }
    let (min_depth, censored) = summarize_min_depths(&draws, params.l_max);
    let indicator = u8::from(eff >= min_depth);
    Ok((
        indicator,
        PairResult {
            eff_depth: Some(eff),
            min_depth_union: Some(min_depth),
            valid: true,
            censored,
        },
    ))
}
