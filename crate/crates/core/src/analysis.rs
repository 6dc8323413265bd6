//! Model-versus-measurement comparison.
//!
//! The error convention throughout is `epsilon = RPP_measured -
//! RPP_predicted`. Both powers sit behind the same link budget, so epsilon
//! equals `PL_predicted - PL_measured` and every aggregation here can work
//! in path-loss space without resolving gateways a second time. A negative
//! mean epsilon means the model overestimates the received power.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fitting::{fit_ldpl, FitError, PlPoint};
use crate::models::ValidityWarning;
use crate::pipeline::{LinkedSample, Sample};
use crate::{Environment, ModelCatalog};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap, HashSet};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("empty input")]
    EmptyInput,
    #[error("bin edges must be at least two strictly increasing values")]
    BadBinEdges,
    #[error("subset size {size} exceeds population {population}")]
    SizeExceedsPopulation { size: usize, population: usize },
    #[error("fit failed for subset size {size}, repeat {repeat}: {source}")]
    SubsetFit {
        size: usize,
        repeat: usize,
        source: FitError,
    },
    #[error("fit failed: {0}")]
    Fit(#[from] FitError),
}

/// One prediction error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSample {
    pub distance_m: f64,
    /// `RPP_measured - RPP_predicted` in dB.
    pub epsilon_db: f64,
}

/// Error series and RMSE of one model over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEval {
    pub model_name: String,
    pub rmse_db: f64,
    pub errors: Vec<ErrorSample>,
}

impl ModelEval {
    pub fn count(&self) -> usize {
        self.errors.len()
    }
}

/// Per-model evaluation over a dataset, plus any validity warnings the
/// models raised (deduplicated per model and parameter).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub models: Vec<ModelEval>,
    pub warnings: Vec<ValidityWarning>,
}

impl EvalReport {
    pub fn rmse_of(&self, model_name: &str) -> Option<f64> {
        self.models
            .iter()
            .find(|m| m.model_name == model_name)
            .map(|m| m.rmse_db)
    }
}

/// Evaluates every catalog model over the linked samples.
///
/// Per-sample errors are computed in parallel but summed in input order, so
/// the report is deterministic and permutation of samples only permutes the
/// error series, never the RMSE.
pub fn evaluate_models(
    linked: &[LinkedSample],
    catalog: &ModelCatalog,
    env: &Environment,
) -> Result<EvalReport, AnalysisError> {
    if linked.is_empty() || catalog.models.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }

    let mut models = Vec::with_capacity(catalog.models.len());
    let mut warnings: Vec<ValidityWarning> = Vec::new();
    let mut seen_warnings: HashSet<(String, String)> = HashSet::new();

    for model in &catalog.models {
        let errors: Vec<ErrorSample> = linked
            .par_iter()
            .map(|l| {
                let predicted_pl = model.predict(&l.link, env);
                ErrorSample {
                    distance_m: l.link.distance_m,
                    epsilon_db: predicted_pl - l.measured_pl_db,
                }
            })
            .collect();
        let sum_sq: f64 = errors.iter().map(|e| e.epsilon_db * e.epsilon_db).sum();
        let rmse_db = (sum_sq / errors.len() as f64).sqrt();

        for l in linked {
            for w in model.check_validity(&l.link, env) {
                let key = (w.model.clone(), format!("{:?}", w.parameter));
                if seen_warnings.insert(key) {
                    warnings.push(w);
                }
            }
        }

        models.push(ModelEval {
            model_name: model.name.clone(),
            rmse_db,
            errors,
        });
    }
    Ok(EvalReport { models, warnings })
}

/// One distance bin of the bias analysis. `count == 0` flags an empty bin;
/// its statistics are absent rather than silently dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasBin {
    pub lo_m: f64,
    pub hi_m: f64,
    pub count: usize,
    pub mean_epsilon_db: Option<f64>,
    pub p25_db: Option<f64>,
    pub p75_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBias {
    pub model_name: String,
    pub bins: Vec<BiasBin>,
    /// Errors at distances outside the binning range.
    pub out_of_range: usize,
}

/// Linear-interpolation quantile of pre-sorted values.
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

/// Aggregates each model's error series into the given distance bins with
/// per-bin mean and quartiles of epsilon.
pub fn distance_bias(
    report: &EvalReport,
    bin_edges_m: &[f64],
) -> Result<Vec<ModelBias>, AnalysisError> {
    if bin_edges_m.len() < 2 || bin_edges_m.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::BadBinEdges);
    }
    if report.models.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }

    let n_bins = bin_edges_m.len() - 1;
    Ok(report
        .models
        .iter()
        .map(|eval| {
            let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
            let mut out_of_range = 0usize;
            for e in &eval.errors {
                // Bins are [lo, hi); the final edge is inclusive so the
                // maximum distance is not orphaned.
                let idx = bin_edges_m[..n_bins]
                    .iter()
                    .rposition(|lo| e.distance_m >= *lo)
                    .filter(|&i| {
                        e.distance_m < bin_edges_m[i + 1]
                            || (i == n_bins - 1 && e.distance_m == bin_edges_m[n_bins])
                    });
                match (idx, e.distance_m >= bin_edges_m[0]) {
                    (Some(i), true) => per_bin[i].push(e.epsilon_db),
                    _ => out_of_range += 1,
                }
            }
            let bins = per_bin
                .into_iter()
                .enumerate()
                .map(|(i, mut eps)| {
                    if eps.is_empty() {
                        BiasBin {
                            lo_m: bin_edges_m[i],
                            hi_m: bin_edges_m[i + 1],
                            count: 0,
                            mean_epsilon_db: None,
                            p25_db: None,
                            p75_db: None,
                        }
                    } else {
                        eps.sort_by(|a, b| a.partial_cmp(b).expect("finite epsilon"));
                        let mean = eps.iter().sum::<f64>() / eps.len() as f64;
                        BiasBin {
                            lo_m: bin_edges_m[i],
                            hi_m: bin_edges_m[i + 1],
                            count: eps.len(),
                            mean_epsilon_db: Some(mean),
                            p25_db: Some(quantile(&eps, 0.25)),
                            p75_db: Some(quantile(&eps, 0.75)),
                        }
                    }
                })
                .collect();
            ModelBias {
                model_name: eval.model_name.clone(),
                bins,
                out_of_range,
            }
        })
        .collect())
}

/// Evenly spaced bias bin edges, `0, width, ..., max` (the default Fig-style
/// binning is 500 m edges up to 13 km).
pub fn even_bin_edges(max_m: f64, width_m: f64) -> Vec<f64> {
    let mut edges = Vec::new();
    let mut edge = 0.0;
    while edge < max_m {
        edges.push(edge);
        edge += width_m;
    }
    edges.push(max_m);
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProgressionPoint {
    pub max_distance_m: f64,
    pub n: f64,
    pub pl_d0_db: f64,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedDistance {
    pub max_distance_m: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgressionResult {
    pub points: Vec<ProgressionPoint>,
    pub skipped: Vec<SkippedDistance>,
}

/// Fits the log-distance model over the sub-sample with distance <= D, for
/// each D in `max_distances_m`. Distances whose sub-sample cannot support a
/// fit are skipped and flagged.
pub fn coefficient_progression(
    points: &[PlPoint<f64>],
    max_distances_m: &[f64],
    bin_width_m: f64,
    d0_m: f64,
) -> Result<ProgressionResult, AnalysisError> {
    if points.is_empty() || max_distances_m.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut result = ProgressionResult {
        points: Vec::new(),
        skipped: Vec::new(),
    };
    for &max_d in max_distances_m {
        let subset: Vec<PlPoint<f64>> = points
            .iter()
            .filter(|p| p.distance_m <= max_d)
            .copied()
            .collect();
        if subset.is_empty() {
            result.skipped.push(SkippedDistance {
                max_distance_m: max_d,
                reason: "no samples at or below this distance".to_string(),
            });
            continue;
        }
        match fit_ldpl(&subset, bin_width_m, d0_m, false) {
            Ok(fit) => result.points.push(ProgressionPoint {
                max_distance_m: max_d,
                n: fit.params.n,
                pl_d0_db: fit.params.pl_d0_db,
                sample_count: subset.len(),
            }),
            Err(err @ (FitError::DegenerateInput | FitError::EmptyInput)) => {
                result.skipped.push(SkippedDistance {
                    max_distance_m: max_d,
                    reason: err.to_string(),
                })
            }
            Err(other) => return Err(other.into()),
        }
    }
    Ok(result)
}

/// Whether a convergence repeat scores its fit on the full population or
/// only on the drawn subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceScope {
    FullSet,
    Subset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub subset_size: usize,
    pub repeats: usize,
    pub rmse_mean_db: f64,
    pub rmse_std_db: f64,
    pub n_mean: f64,
    pub n_std: f64,
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Seed for one (size, repeat) cell, decorrelated from its neighbors.
fn derive_seed(master: u64, size: usize, repeat: usize) -> u64 {
    let mut x = master
        ^ (size as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (repeat as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// For each subset size, repeatedly draws that many samples uniformly
/// without replacement, fits the log-distance model on the subset, scores
/// the fitted model's RMSE, and aggregates mean/std across repeats (of both
/// the RMSE and the recovered exponent).
pub fn rmse_convergence(
    points: &[PlPoint<f64>],
    subset_sizes: &[usize],
    repeats: usize,
    seed: u64,
    bin_width_m: f64,
    d0_m: f64,
    scope: ConvergenceScope,
) -> Result<Vec<ConvergencePoint>, AnalysisError> {
    if points.is_empty() || subset_sizes.is_empty() || repeats == 0 {
        return Err(AnalysisError::EmptyInput);
    }
    for &size in subset_sizes {
        if size > points.len() {
            return Err(AnalysisError::SizeExceedsPopulation {
                size,
                population: points.len(),
            });
        }
        if size == 0 {
            return Err(AnalysisError::EmptyInput);
        }
    }

    let rmse_of = |params: &crate::LdplParams, over: &[PlPoint<f64>]| -> f64 {
        let sum_sq: f64 = over
            .iter()
            .map(|p| {
                let eps = params.path_loss_db(p.distance_m) - p.pl_db;
                eps * eps
            })
            .sum();
        (sum_sq / over.len() as f64).sqrt()
    };

    let mut out = Vec::with_capacity(subset_sizes.len());
    for &size in subset_sizes {
        // Repeats are independent and carry derived seeds, so running them
        // in parallel cannot change the result.
        let fits: Vec<Result<(f64, f64), AnalysisError>> = (0..repeats)
            .into_par_iter()
            .map(|repeat| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, size, repeat));
                let subset: Vec<PlPoint<f64>> =
                    rand::seq::index::sample(&mut rng, points.len(), size)
                        .into_iter()
                        .map(|i| points[i])
                        .collect();
                let fit = fit_ldpl(&subset, bin_width_m, d0_m, false).map_err(|source| {
                    AnalysisError::SubsetFit {
                        size,
                        repeat,
                        source,
                    }
                })?;
                let rmse = match scope {
                    ConvergenceScope::FullSet => rmse_of(&fit.params, points),
                    ConvergenceScope::Subset => rmse_of(&fit.params, &subset),
                };
                Ok((rmse, fit.params.n))
            })
            .collect();

        let mut rmses = Vec::with_capacity(repeats);
        let mut ns = Vec::with_capacity(repeats);
        for fit in fits {
            let (rmse, n) = fit?;
            rmses.push(rmse);
            ns.push(n);
        }
        let (rmse_mean_db, rmse_std_db) = mean_and_std(&rmses);
        let (n_mean, n_std) = mean_and_std(&ns);
        out.push(ConvergencePoint {
            subset_size: size,
            repeats,
            rmse_mean_db,
            rmse_std_db,
            n_mean,
            n_std,
        });
    }
    Ok(out)
}

/// Reception statistics grouped by packet id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatewayStats {
    /// Share of packets seen by exactly `k` gateways, keyed by `k`.
    pub histogram: BTreeMap<u32, f64>,
    pub packet_count: usize,
    /// Mean number of distinct gateways per packet (0 when empty).
    pub mean_receptions: f64,
}

impl GatewayStats {
    /// Share of packets received by at least `k` gateways.
    pub fn share_at_least(&self, k: u32) -> f64 {
        self.histogram
            .iter()
            .filter(|(count, _)| **count >= k)
            .map(|(_, share)| share)
            .sum::<f64>()
            // an empty float sum is -0.0
            .max(0.0)
    }
}

/// Groups raw samples by packet id, counts distinct receiving gateways per
/// packet, and normalizes into a share histogram.
pub fn gateway_reception_histogram(samples: &[Sample]) -> GatewayStats {
    let mut per_packet: HashMap<&str, HashSet<&str>> = HashMap::new();
    for s in samples {
        per_packet
            .entry(s.packet_id.as_str())
            .or_default()
            .insert(s.gateway_id.as_str());
    }
    let packet_count = per_packet.len();
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut total = 0usize;
    for gws in per_packet.values() {
        *counts.entry(gws.len() as u32).or_default() += 1;
        total += gws.len();
    }
    let histogram = counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / packet_count.max(1) as f64))
        .collect();
    GatewayStats {
        histogram,
        packet_count,
        mean_receptions: if packet_count == 0 {
            0.0
        } else {
            total as f64 / packet_count as f64
        },
    }
}

/// Demodulation floors in dBm for SF 7 through 12 at 125 kHz bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SfSensitivity {
    pub floors_dbm: [f64; 6],
}

impl Default for SfSensitivity {
    /// Typical urban-gateway chipset floors.
    fn default() -> Self {
        Self {
            floors_dbm: [-123.0, -126.0, -129.0, -132.0, -134.5, -137.0],
        }
    }
}

impl SfSensitivity {
    pub fn floor_dbm(&self, sf: u8) -> Option<f64> {
        if (7..=12).contains(&sf) {
            Some(self.floors_dbm[(sf - 7) as usize])
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SfFeasibility {
    pub packet_count: usize,
    pub feasible_count: usize,
    /// Share of packets whose strongest reception clears the SF7 floor.
    pub share: f64,
}

/// Per packet, takes the strongest RPP across gateways and checks it
/// against the SF7 demodulation floor: the share of traffic that could have
/// used the fastest modulation.
pub fn sf_feasibility(samples: &[Sample], sensitivity: &SfSensitivity) -> SfFeasibility {
    let floor = sensitivity
        .floor_dbm(7)
        .expect("table covers SF 7 by construction");
    let mut best: HashMap<&str, f64> = HashMap::new();
    for s in samples {
        best.entry(s.packet_id.as_str())
            .and_modify(|b| *b = b.max(s.rpp_dbm))
            .or_insert(s.rpp_dbm);
    }
    let packet_count = best.len();
    let feasible_count = best.values().filter(|rpp| **rpp >= floor).count();
    SfFeasibility {
        packet_count,
        feasible_count,
        share: if packet_count == 0 {
            0.0
        } else {
            feasible_count as f64 / packet_count as f64
        },
    }
}
