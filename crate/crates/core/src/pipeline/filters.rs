//! The four-stage measurement filter chain.
//!
//! Stages run in a fixed order and a sample is charged to the first stage
//! that rejects it:
//!
//! 1. fewer locked GPS satellites than the minimum,
//! 2. street-snap offset above the maximum (survivors adopt the snapped
//!    position),
//! 3. altitude above the highest point of the survey area,
//! 4. measured path loss below free-space loss at the snapped distance,
//!    which is physically impossible and indicates a bad location.
//!
//! Samples whose snap lookup fails outright are quarantined, not rejected:
//! they may be retried against a live provider or an extended fixture.

use serde::Serialize;
use thiserror::Error;

use crate::geo::haversine_distance;
use crate::models::fspl_db_at_meters;

use super::snap::{SnapError, SnapProvider};
use super::{measured_path_loss, Gateway, GatewayRegistry, LinkBudget, PipelineError, Sample};

#[derive(Debug, Error, PartialEq)]
pub enum FilterConfigError {
    #[error("max_offset_m must be > 0, got {0}")]
    OffsetNotPositive(f64),
    #[error("max_altitude_m must be finite, got {0}")]
    AltitudeNotFinite(f64),
    #[error("freq_mhz must be > 0, got {0}")]
    FrequencyNotPositive(f64),
}

/// Filter thresholds. `max_altitude_m` has no default on purpose: the
/// ceiling is a property of the survey area and must be configured
/// explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub min_satellites: u32,
    pub max_offset_m: f64,
    pub max_altitude_m: f64,
    pub budget: LinkBudget,
    pub freq_mhz: f64,
}

impl FilterConfig {
    pub fn new(max_altitude_m: f64) -> Self {
        Self {
            min_satellites: 5,
            max_offset_m: 20.0,
            max_altitude_m,
            budget: LinkBudget::default(),
            freq_mhz: 868.1,
        }
    }

    pub fn validate(&self) -> Result<(), FilterConfigError> {
        if !(self.max_offset_m > 0.0) {
            return Err(FilterConfigError::OffsetNotPositive(self.max_offset_m));
        }
        if !self.max_altitude_m.is_finite() {
            return Err(FilterConfigError::AltitudeNotFinite(self.max_altitude_m));
        }
        if !(self.freq_mhz > 0.0) {
            return Err(FilterConfigError::FrequencyNotPositive(self.freq_mhz));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LowSatellites,
    SnapOffset,
    Altitude,
    BelowFspl,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RejectReason::LowSatellites => "low_satellites",
            RejectReason::SnapOffset => "snap_offset",
            RejectReason::Altitude => "altitude",
            RejectReason::BelowFspl => "below_fspl",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedSample {
    pub sample: Sample,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuarantinedSample {
    pub sample: Sample,
    pub error: SnapError,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RejectionCounts {
    pub low_satellites: usize,
    pub snap_offset: usize,
    pub altitude: usize,
    pub below_fspl: usize,
}

impl RejectionCounts {
    pub fn total(&self) -> usize {
        self.low_satellites + self.snap_offset + self.altitude + self.below_fspl
    }
}

/// Per-stage rejection shares (fractions of a denominator).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageShares {
    pub low_satellites: f64,
    pub snap_offset: f64,
    pub altitude: f64,
    pub below_fspl: f64,
}

/// Counts for one filter run. `input` always equals
/// `output + rejections + quarantined`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FilterReport {
    pub input: usize,
    pub output: usize,
    pub quarantined: usize,
    pub rejections: RejectionCounts,
}

impl FilterReport {
    pub fn is_conserved(&self) -> bool {
        self.input == self.output + self.rejections.total() + self.quarantined
    }

    /// Shares with the raw input count as the common denominator.
    pub fn shares_of_input(&self) -> StageShares {
        let d = self.input.max(1) as f64;
        StageShares {
            low_satellites: self.rejections.low_satellites as f64 / d,
            snap_offset: self.rejections.snap_offset as f64 / d,
            altitude: self.rejections.altitude as f64 / d,
            below_fspl: self.rejections.below_fspl as f64 / d,
        }
    }

    /// Shares with each stage's own input (survivors of the previous
    /// stages) as the denominator.
    pub fn shares_of_stage_input(&self) -> StageShares {
        let s1_in = self.input;
        let s2_in = s1_in - self.rejections.low_satellites;
        let s3_in = s2_in - self.rejections.snap_offset - self.quarantined;
        let s4_in = s3_in - self.rejections.altitude;
        let ratio = |n: usize, d: usize| n as f64 / d.max(1) as f64;
        StageShares {
            low_satellites: ratio(self.rejections.low_satellites, s1_in),
            snap_offset: ratio(self.rejections.snap_offset, s2_in),
            altitude: ratio(self.rejections.altitude, s3_in),
            below_fspl: ratio(self.rejections.below_fspl, s4_in),
        }
    }
}

#[derive(Debug)]
pub struct FilterOutcome {
    /// Survivors, with stage-2 snapped positions adopted.
    pub clean: Vec<Sample>,
    pub report: FilterReport,
    pub rejected: Vec<RejectedSample>,
    pub quarantined: Vec<QuarantinedSample>,
}

enum StageVerdict {
    Keep(Sample),
    Reject(RejectReason, String),
}

fn run_stages(
    sample: &Sample,
    snap: &super::snap::SnappedPoint,
    gw: &Gateway,
    config: &FilterConfig,
) -> StageVerdict {
    // Stage 2: offset gate, survivors adopt the snapped position.
    if snap.offset_m > config.max_offset_m {
        return StageVerdict::Reject(
            RejectReason::SnapOffset,
            format!(
                "snap offset {:.2} m > {} m",
                snap.offset_m, config.max_offset_m
            ),
        );
    }
    let mut cleaned = sample.clone();
    cleaned.pos = snap.pos;

    // Stage 3: altitude ceiling. Samples without an altitude cannot violate it.
    if let Some(alt) = cleaned.pos.alt_m() {
        if alt > config.max_altitude_m {
            return StageVerdict::Reject(
                RejectReason::Altitude,
                format!("altitude {alt} m > {} m", config.max_altitude_m),
            );
        }
    }

    // Stage 4: free-space plausibility floor at the snapped distance.
    let distance_m = haversine_distance(&cleaned.pos, &gw.pos);
    if distance_m <= 0.0 {
        return StageVerdict::Reject(
            RejectReason::BelowFspl,
            "zero link distance: location coincides with the gateway".to_string(),
        );
    }
    let measured_pl = measured_path_loss(&cleaned, gw, &config.budget);
    let floor = fspl_db_at_meters(distance_m, config.freq_mhz);
    if measured_pl < floor {
        return StageVerdict::Reject(
            RejectReason::BelowFspl,
            format!(
                "measured path loss {measured_pl:.2} dB below FSPL {floor:.2} dB at {distance_m:.1} m"
            ),
        );
    }
    StageVerdict::Keep(cleaned)
}

/// Runs the filter chain over `samples`. Every sample's gateway must
/// resolve in the registry; an unknown gateway aborts the run.
pub fn apply_filters(
    samples: &[Sample],
    registry: &GatewayRegistry,
    config: &FilterConfig,
    provider: &dyn SnapProvider,
) -> Result<FilterOutcome, PipelineError> {
    // Fail fast on unresolvable gateways before any I/O.
    for sample in samples {
        registry.resolve(sample)?;
    }

    let mut outcome = FilterOutcome {
        clean: Vec::new(),
        report: FilterReport {
            input: samples.len(),
            ..FilterReport::default()
        },
        rejected: Vec::new(),
        quarantined: Vec::new(),
    };

    // Stage 1 runs first so that its rejects are charged there and never
    // reach the snap provider.
    let mut survivors: Vec<&Sample> = Vec::with_capacity(samples.len());
    for sample in samples {
        if sample.satellites < config.min_satellites {
            outcome.report.rejections.low_satellites += 1;
            outcome.rejected.push(RejectedSample {
                sample: sample.clone(),
                reason: RejectReason::LowSatellites,
                detail: format!(
                    "satellites {} < {}",
                    sample.satellites, config.min_satellites
                ),
            });
        } else {
            survivors.push(sample);
        }
    }

    // One snap pass for all stage-1 survivors; the provider bounds its own
    // request concurrency.
    let positions: Vec<_> = survivors.iter().map(|s| s.pos).collect();
    let snaps = provider.snap_batch(&positions);

    for (sample, snap) in survivors.into_iter().zip(snaps) {
        let snap = match snap {
            Ok(snap) => snap,
            Err(error) => {
                outcome.report.quarantined += 1;
                outcome.quarantined.push(QuarantinedSample {
                    sample: sample.clone(),
                    error,
                });
                continue;
            }
        };
        let gw = registry.resolve(sample).expect("pre-checked above");
        match run_stages(sample, &snap, gw, config) {
            StageVerdict::Keep(cleaned) => outcome.clean.push(cleaned),
            StageVerdict::Reject(reason, detail) => {
                match reason {
                    RejectReason::LowSatellites => outcome.report.rejections.low_satellites += 1,
                    RejectReason::SnapOffset => outcome.report.rejections.snap_offset += 1,
                    RejectReason::Altitude => outcome.report.rejections.altitude += 1,
                    RejectReason::BelowFspl => outcome.report.rejections.below_fspl += 1,
                }
                outcome.rejected.push(RejectedSample {
                    sample: sample.clone(),
                    reason,
                    detail,
                });
            }
        }
    }

    outcome.report.output = outcome.clean.len();
    debug_assert!(outcome.report.is_conserved());
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::super::snap::{FixtureSnapProvider, IdentitySnapProvider};
    use super::super::test_support::*;
    use super::*;
    use crate::geo::destination_point;
    use crate::GeoPoint;
    use proptest::prelude::*;

    fn registry() -> GatewayRegistry {
        GatewayRegistry::new(vec![gateway("gw-1", 50.73, 7.10)]).unwrap()
    }

    fn config() -> FilterConfig {
        FilterConfig::new(195.0)
    }

    /// RPP that corresponds to `fspl + margin_db` at the sample's distance.
    fn rpp_for_margin(pos: &GeoPoint, gw: &Gateway, margin_db: f64, cfg: &FilterConfig) -> f64 {
        let d = haversine_distance(pos, &gw.pos);
        let pl = fspl_db_at_meters(d, cfg.freq_mhz) + margin_db;
        cfg.budget.for_gateway(gw).rpp_from_path_loss(pl)
    }

    #[test]
    fn low_satellite_samples_are_rejected_first() {
        let mut s = sample("p-1", "gw-1", 50.74, 7.10, -110.0);
        s.satellites = 4;
        let out = apply_filters(&[s], &registry(), &config(), &IdentitySnapProvider).unwrap();
        assert_eq!(out.report.rejections.low_satellites, 1);
        assert_eq!(out.report.output, 0);
        assert_eq!(out.rejected[0].reason, RejectReason::LowSatellites);
    }

    #[test]
    fn satellites_at_the_threshold_pass() {
        let reg = registry();
        let cfg = config();
        let mut s = sample("p-1", "gw-1", 50.74, 7.10, 0.0);
        s.satellites = 5;
        s.rpp_dbm = rpp_for_margin(&s.pos, reg.get("gw-1").unwrap(), 5.0, &cfg);
        let out = apply_filters(&[s], &reg, &cfg, &IdentitySnapProvider).unwrap();
        assert_eq!(out.report.output, 1);
    }

    #[test]
    fn large_snap_offsets_are_rejected_and_small_ones_adopted() {
        let reg = registry();
        let cfg = config();
        let gw = reg.get("gw-1").unwrap().clone();

        let far = sample("p-far", "gw-1", 50.74, 7.10, 0.0);
        let near = sample("p-near", "gw-1", 50.745, 7.10, 0.0);
        let far_street = destination_point(&far.pos, 90.0, 25.0).unwrap();
        let near_street = destination_point(&near.pos, 90.0, 8.0).unwrap();
        let mut provider = FixtureSnapProvider::default();
        provider.insert(&far.pos, &far_street);
        provider.insert(&near.pos, &near_street);

        let mut far = far;
        far.rpp_dbm = rpp_for_margin(&far_street, &gw, 5.0, &cfg);
        let mut near = near;
        near.rpp_dbm = rpp_for_margin(&near_street, &gw, 5.0, &cfg);

        let out = apply_filters(&[far, near], &reg, &cfg, &provider).unwrap();
        assert_eq!(out.report.rejections.snap_offset, 1);
        assert_eq!(out.report.output, 1);
        // Survivor carries the snapped position.
        assert_eq!(out.clean[0].pos.lon_deg(), near_street.lon_deg());
    }

    #[test]
    fn altitude_above_ceiling_is_rejected_and_missing_altitude_passes() {
        let reg = registry();
        let cfg = config();
        let gw = reg.get("gw-1").unwrap().clone();

        let mut high = sample("p-high", "gw-1", 50.74, 7.10, 0.0);
        high.pos = high.pos.with_altitude(210.0);
        high.rpp_dbm = rpp_for_margin(&high.pos, &gw, 5.0, &cfg);

        let mut no_alt = sample("p-none", "gw-1", 50.745, 7.10, 0.0);
        no_alt.rpp_dbm = rpp_for_margin(&no_alt.pos, &gw, 5.0, &cfg);

        let out = apply_filters(&[high, no_alt], &reg, &cfg, &IdentitySnapProvider).unwrap();
        assert_eq!(out.report.rejections.altitude, 1);
        assert_eq!(out.report.output, 1);
        assert_eq!(out.clean[0].packet_id, "p-none");
    }

    #[test]
    fn path_loss_below_fspl_is_rejected_and_above_is_kept() {
        let reg = registry();
        let cfg = config();
        let gw = reg.get("gw-1").unwrap().clone();

        let mut impossible = sample("p-below", "gw-1", 50.74, 7.10, 0.0);
        impossible.rpp_dbm = rpp_for_margin(&impossible.pos, &gw, -1.0, &cfg);
        let mut plausible = sample("p-above", "gw-1", 50.74, 7.10, 0.0);
        plausible.rpp_dbm = rpp_for_margin(&plausible.pos, &gw, 1.0, &cfg);

        let out =
            apply_filters(&[impossible, plausible], &reg, &cfg, &IdentitySnapProvider).unwrap();
        assert_eq!(out.report.rejections.below_fspl, 1);
        assert_eq!(out.report.output, 1);
        assert_eq!(out.clean[0].packet_id, "p-above");
    }

    #[test]
    fn sample_at_the_gateway_position_is_rejected() {
        let out = apply_filters(
            &[sample("p-0", "gw-1", 50.73, 7.10, -50.0)],
            &registry(),
            &config(),
            &IdentitySnapProvider,
        )
        .unwrap();
        assert_eq!(out.report.rejections.below_fspl, 1);
        assert!(out.rejected[0].detail.contains("zero link distance"));
    }

    #[test]
    fn a_sample_failing_two_stages_is_charged_to_the_first() {
        // satellites = 3 and a 30 m snap offset: counted once, under stage 1.
        let s = {
            let mut s = sample("p-1", "gw-1", 50.74, 7.10, -110.0);
            s.satellites = 3;
            s
        };
        let street = destination_point(&s.pos, 0.0, 30.0).unwrap();
        let mut provider = FixtureSnapProvider::default();
        provider.insert(&s.pos, &street);

        let out = apply_filters(&[s], &registry(), &config(), &provider).unwrap();
        assert_eq!(out.report.rejections.low_satellites, 1);
        assert_eq!(out.report.rejections.snap_offset, 0);
        assert_eq!(out.report.rejections.total(), 1);
    }

    #[test]
    fn snap_failures_are_quarantined_not_rejected() {
        // Empty fixture: every lookup misses.
        let provider = FixtureSnapProvider::default();
        let s = sample("p-1", "gw-1", 50.74, 7.10, -110.0);
        let out = apply_filters(&[s], &registry(), &config(), &provider).unwrap();
        assert_eq!(out.report.quarantined, 1);
        assert_eq!(out.report.rejections.total(), 0);
        assert_eq!(out.quarantined.len(), 1);
        assert!(out.report.is_conserved());
    }

    #[test]
    fn unknown_gateway_aborts_the_run() {
        let s = sample("p-1", "gw-unknown", 50.74, 7.10, -110.0);
        let err = apply_filters(&[s], &registry(), &config(), &IdentitySnapProvider).unwrap_err();
        assert!(matches!(err, PipelineError::UnknownGateway { .. }));
    }

    #[test]
    fn filtering_clean_output_rejects_nothing() {
        let reg = registry();
        let cfg = config();
        let gw = reg.get("gw-1").unwrap().clone();
        let samples: Vec<Sample> = (0..20)
            .map(|i| {
                let mut s = sample(
                    &format!("p-{i}"),
                    "gw-1",
                    50.735 + 0.001 * i as f64,
                    7.10,
                    0.0,
                );
                s.rpp_dbm = rpp_for_margin(&s.pos, &gw, 3.0 + i as f64, &cfg);
                s
            })
            .collect();
        let first = apply_filters(&samples, &reg, &cfg, &IdentitySnapProvider).unwrap();
        assert_eq!(first.report.output, 20);
        let second = apply_filters(&first.clean, &reg, &cfg, &IdentitySnapProvider).unwrap();
        assert_eq!(second.report.rejections.total(), 0);
        assert_eq!(second.report.quarantined, 0);
        assert_eq!(second.clean, first.clean);
    }

    proptest! {
        #[test]
        fn report_conservation_holds(
            sats in proptest::collection::vec(0u32..12, 1..60),
            margins in proptest::collection::vec(-10.0f64..10.0, 1..60),
            alts in proptest::collection::vec(0.0f64..400.0, 1..60),
        ) {
            let reg = registry();
            let cfg = config();
            let gw = reg.get("gw-1").unwrap().clone();
            let n = sats.len().min(margins.len()).min(alts.len());
            let samples: Vec<Sample> = (0..n)
                .map(|i| {
                    let mut s = sample(
                        &format!("p-{i}"),
                        "gw-1",
                        50.735 + 0.0005 * i as f64,
                        7.10 + 0.0002 * i as f64,
                        0.0,
                    );
                    s.satellites = sats[i];
                    s.pos = s.pos.with_altitude(alts[i]);
                    s.rpp_dbm = rpp_for_margin(&s.pos, &gw, margins[i], &cfg);
                    s
                })
                .collect();
            let out = apply_filters(&samples, &reg, &cfg, &IdentitySnapProvider).unwrap();
            prop_assert!(out.report.is_conserved());
            prop_assert_eq!(out.report.input, n);
            prop_assert_eq!(out.report.output, out.clean.len());
            prop_assert_eq!(out.report.rejections.total(), out.rejected.len());
        }
    }

    #[test]
    fn stage_share_denominators() {
        let report = FilterReport {
            input: 1000,
            output: 860,
            quarantined: 0,
            rejections: RejectionCounts {
                low_satellites: 80,
                snap_offset: 40,
                altitude: 10,
                below_fspl: 10,
            },
        };
        assert!(report.is_conserved());
        let of_input = report.shares_of_input();
        assert!((of_input.low_satellites - 0.08).abs() < 1e-12);
        assert!((of_input.snap_offset - 0.04).abs() < 1e-12);
        let of_stage = report.shares_of_stage_input();
        assert!((of_stage.low_satellites - 0.08).abs() < 1e-12);
        assert!((of_stage.snap_offset - 40.0 / 920.0).abs() < 1e-12);
        assert!((of_stage.altitude - 10.0 / 880.0).abs() < 1e-12);
        assert!((of_stage.below_fspl - 10.0 / 870.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = FilterConfig::new(195.0);
        assert!(cfg.validate().is_ok());
        cfg.max_offset_m = 0.0;
        assert!(matches!(cfg.validate(), Err(FilterConfigError::OffsetNotPositive(_))));
        cfg = FilterConfig::new(f64::NAN);
        assert!(matches!(cfg.validate(), Err(FilterConfigError::AltitudeNotFinite(_))));
    }
}
