//! Measurement ingestion, the four-stage filter chain, and link-budget
//! arithmetic between received packet power (RPP) and path loss.

mod filters;
mod ingest;
mod snap;

pub use filters::{
    apply_filters, FilterConfig, FilterOutcome, FilterReport, QuarantinedSample, RejectReason,
    RejectedSample, StageShares,
};
pub use ingest::{
    parse_gateways, parse_samples, write_gateways_csv, write_samples_csv, ColumnMapping,
    IngestError, ParseOutcome, RowReject,
};
pub use snap::{
    FixtureSnapProvider, HttpSnapConfig, HttpSnapProvider, IdentitySnapProvider, SnapError,
    SnapProvider, SnappedPoint,
};

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::fitting::PlPoint;
use crate::geo::{link_geometry, GeoError};
use crate::{GeoPoint, LinkGeometry};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sample {packet_id:?} references unknown gateway {gateway_id:?}")]
    UnknownGateway {
        packet_id: String,
        gateway_id: String,
    },
    #[error("duplicate gateway id {0:?} in registry")]
    DuplicateGateway(String),
    #[error("sample {packet_id:?} at gateway {gateway_id:?}: {source}")]
    BadGeometry {
        packet_id: String,
        gateway_id: String,
        source: GeoError,
    },
}

/// One received LoRa packet observation as reported by a gateway.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub packet_id: String,
    pub timestamp: DateTime<Utc>,
    pub gateway_id: String,
    pub pos: GeoPoint,
    pub satellites: u32,
    pub rpp_dbm: f64,
    pub sf: u8,
}

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("spreading factor {0} outside [7, 12]")]
    InvalidSf(u8),
    #[error("RPP must be finite, got {0}")]
    NonFiniteRpp(f64),
}

impl Sample {
    pub fn validate(&self) -> Result<(), SampleError> {
        if !(7..=12).contains(&self.sf) {
            return Err(SampleError::InvalidSf(self.sf));
        }
        if !self.rpp_dbm.is_finite() {
            return Err(SampleError::NonFiniteRpp(self.rpp_dbm));
        }
        Ok(())
    }
}

/// A stationary receiver: position, antenna height above ground, and
/// antenna gain.
#[derive(Debug, Clone, PartialEq)]
pub struct Gateway {
    pub gateway_id: String,
    pub pos: GeoPoint,
    pub height_m: f64,
    pub gain_dbi: f64,
}

impl Gateway {
    /// Link geometry from a sensor position to this gateway; the gateway
    /// height comes from the record, the sensor height from configuration.
    pub fn link_from(
        &self,
        sensor_pos: &GeoPoint,
        sensor_height_m: f64,
    ) -> Result<LinkGeometry, GeoError> {
        link_geometry(sensor_pos, &self.pos, self.height_m, sensor_height_m)
    }
}

/// Gateways keyed by id; ids are unique within a registry.
#[derive(Debug, Clone, Default)]
pub struct GatewayRegistry {
    by_id: HashMap<String, Gateway>,
}

impl GatewayRegistry {
    pub fn new(gateways: impl IntoIterator<Item = Gateway>) -> Result<Self, PipelineError> {
        let mut by_id = HashMap::new();
        for gw in gateways {
            if by_id.contains_key(&gw.gateway_id) {
                return Err(PipelineError::DuplicateGateway(gw.gateway_id));
            }
            by_id.insert(gw.gateway_id.clone(), gw);
        }
        Ok(Self { by_id })
    }

    pub fn get(&self, gateway_id: &str) -> Option<&Gateway> {
        self.by_id.get(gateway_id)
    }

    pub fn resolve(&self, sample: &Sample) -> Result<&Gateway, PipelineError> {
        self.get(&sample.gateway_id)
            .ok_or_else(|| PipelineError::UnknownGateway {
                packet_id: sample.packet_id.clone(),
                gateway_id: sample.gateway_id.clone(),
            })
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Gateway> {
        self.by_id.values()
    }
}

/// The fixed terms of the link budget:
/// `RPP = tx_power + tx_gain + rx_gain - fixed_losses - PL`.
///
/// The receive gain here is the default; when a sample is paired with a
/// gateway record, the record's antenna gain takes its place (see
/// [`LinkBudget::for_gateway`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub fixed_losses_db: f64,
}

impl Default for LinkBudget {
    /// 14 dBm modem output, antenna embedded in the enclosure (0 dBi),
    /// 3 dBi gateway antenna, no accounted cable losses.
    fn default() -> Self {
        Self {
            tx_power_dbm: 14.0,
            tx_gain_dbi: 0.0,
            rx_gain_dbi: 3.0,
            fixed_losses_db: 0.0,
        }
    }
}

impl LinkBudget {
    /// The budget with the receive gain taken from the gateway record.
    pub fn for_gateway(&self, gw: &Gateway) -> LinkBudget {
        LinkBudget {
            rx_gain_dbi: gw.gain_dbi,
            ..*self
        }
    }

    fn gain_sum(&self) -> f64 {
        self.tx_power_dbm + self.tx_gain_dbi + self.rx_gain_dbi - self.fixed_losses_db
    }

    /// `PL = tx_power + tx_gain + rx_gain - fixed_losses - RPP`.
    pub fn path_loss_from_rpp(&self, rpp_dbm: f64) -> f64 {
        self.gain_sum() - rpp_dbm
    }

    /// `RPP = tx_power + tx_gain + rx_gain - fixed_losses - PL`.
    pub fn rpp_from_path_loss(&self, pl_db: f64) -> f64 {
        self.gain_sum() - pl_db
    }
}

/// Path loss a sample experienced, from the link budget and the gateway's
/// antenna gain.
pub fn measured_path_loss(sample: &Sample, gw: &Gateway, budget: &LinkBudget) -> f64 {
    budget.for_gateway(gw).path_loss_from_rpp(sample.rpp_dbm)
}

/// RPP a path-loss prediction corresponds to under the given budget;
/// inverse of [`measured_path_loss`].
pub fn predicted_rpp(pl_db: f64, budget: &LinkBudget) -> f64 {
    budget.rpp_from_path_loss(pl_db)
}

/// A sample joined with its gateway: the unit the fitting and evaluation
/// stages work on.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkedSample {
    pub packet_id: String,
    pub gateway_id: String,
    pub link: LinkGeometry,
    pub measured_pl_db: f64,
    pub rpp_dbm: f64,
}

impl LinkedSample {
    pub fn pl_point(&self) -> PlPoint<f64> {
        PlPoint {
            distance_m: self.link.distance_m,
            pl_db: self.measured_pl_db,
        }
    }
}

/// Joins samples with their gateways, computing link geometry and measured
/// path loss. Fails on unknown gateways and on degenerate geometry, naming
/// the offending sample.
pub fn link_samples(
    samples: &[Sample],
    registry: &GatewayRegistry,
    budget: &LinkBudget,
    sensor_height_m: f64,
) -> Result<Vec<LinkedSample>, PipelineError> {
    samples
        .iter()
        .map(|sample| {
            let gw = registry.resolve(sample)?;
            let link = link_geometry(&sample.pos, &gw.pos, gw.height_m, sensor_height_m).map_err(
                |source| PipelineError::BadGeometry {
                    packet_id: sample.packet_id.clone(),
                    gateway_id: sample.gateway_id.clone(),
                    source,
                },
            )?;
            Ok(LinkedSample {
                packet_id: sample.packet_id.clone(),
                gateway_id: sample.gateway_id.clone(),
                link,
                measured_pl_db: measured_path_loss(sample, gw, budget),
                rpp_dbm: sample.rpp_dbm,
            })
        })
        .collect()
}
