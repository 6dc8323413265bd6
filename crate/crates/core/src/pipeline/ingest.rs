//! CSV ingestion for samples and gateways.
//!
//! `samples.csv` columns: `packet_id,timestamp,gateway_id,lat,lon,alt_m,
//! satellites,rpp_dbm,sf` (header required, timestamps ISO-8601 UTC, the
//! altitude cell may be empty). A [`ColumnMapping`] renames the expected
//! headers so a dump with a different schema can be ingested unchanged.
//!
//! `gateways.csv` columns: `gateway_id,lat,lon,height_m,gain_dbi`.
//!
//! Malformed sample rows are never silently dropped: they are collected in
//! a rejects list with their line numbers.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint as GenericGeoPoint;
use crate::{GeoPoint, Scalar};

use super::{Gateway, Sample};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing required columns: {0:?}")]
    Schema(Vec<String>),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("gateways.csv line {line}: {message}")]
    BadGateway { line: u64, message: String },
}

/// Maps the logical sample fields onto the header names of the file being
/// ingested. The default is the native schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub packet_id: String,
    pub timestamp: String,
    pub gateway_id: String,
    pub lat: String,
    pub lon: String,
    pub alt_m: String,
    pub satellites: String,
    pub rpp_dbm: String,
    pub sf: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            packet_id: "packet_id".into(),
            timestamp: "timestamp".into(),
            gateway_id: "gateway_id".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            alt_m: "alt_m".into(),
            satellites: "satellites".into(),
            rpp_dbm: "rpp_dbm".into(),
            sf: "sf".into(),
        }
    }
}

/// A row that could not be turned into a valid [`Sample`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowReject {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub samples: Vec<Sample>,
    pub rejects: Vec<RowReject>,
}

struct ColumnIndices {
    packet_id: usize,
    timestamp: usize,
    gateway_id: usize,
    lat: usize,
    lon: usize,
    alt_m: usize,
    satellites: usize,
    rpp_dbm: usize,
    sf: usize,
}

fn resolve_columns(
    headers: &csv::StringRecord,
    mapping: &ColumnMapping,
) -> Result<ColumnIndices, IngestError> {
    let index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, name)| (name.trim(), i))
        .collect();
    let mut missing = Vec::new();
    let mut lookup = |name: &str| -> usize {
        match index.get(name) {
            Some(&i) => i,
            None => {
                missing.push(name.to_string());
                usize::MAX
            }
        }
    };
    let cols = ColumnIndices {
        packet_id: lookup(&mapping.packet_id),
        timestamp: lookup(&mapping.timestamp),
        gateway_id: lookup(&mapping.gateway_id),
        lat: lookup(&mapping.lat),
        lon: lookup(&mapping.lon),
        alt_m: lookup(&mapping.alt_m),
        satellites: lookup(&mapping.satellites),
        rpp_dbm: lookup(&mapping.rpp_dbm),
        sf: lookup(&mapping.sf),
    };
    if missing.is_empty() {
        Ok(cols)
    } else {
        Err(IngestError::Schema(missing))
    }
}

fn parse_row(record: &csv::StringRecord, cols: &ColumnIndices) -> Result<Sample, String> {
    let field = |i: usize, what: &str| -> Result<&str, String> {
        record.get(i).ok_or_else(|| format!("missing {what} field"))
    };

    let timestamp = DateTime::parse_from_rfc3339(field(cols.timestamp, "timestamp")?)
        .map_err(|e| format!("bad timestamp: {e}"))?
        .with_timezone(&Utc);
    let lat: f64 = field(cols.lat, "lat")?
        .trim()
        .parse()
        .map_err(|e| format!("bad lat: {e}"))?;
    let lon: f64 = field(cols.lon, "lon")?
        .trim()
        .parse()
        .map_err(|e| format!("bad lon: {e}"))?;
    let mut pos = GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
    let alt_field = field(cols.alt_m, "alt_m")?.trim();
    if !alt_field.is_empty() {
        let alt: f64 = alt_field.parse().map_err(|e| format!("bad alt_m: {e}"))?;
        pos = pos.with_altitude(alt);
    }
    let satellites: u32 = field(cols.satellites, "satellites")?
        .trim()
        .parse()
        .map_err(|e| format!("bad satellites: {e}"))?;
    let rpp_dbm: f64 = field(cols.rpp_dbm, "rpp_dbm")?
        .trim()
        .parse()
        .map_err(|e| format!("bad rpp_dbm: {e}"))?;
    let sf: u8 = field(cols.sf, "sf")?
        .trim()
        .parse()
        .map_err(|e| format!("bad sf: {e}"))?;

    let sample = Sample {
        packet_id: field(cols.packet_id, "packet_id")?.to_string(),
        timestamp,
        gateway_id: field(cols.gateway_id, "gateway_id")?.to_string(),
        pos,
        satellites,
        rpp_dbm,
        sf,
    };
    sample.validate().map_err(|e| e.to_string())?;
    Ok(sample)
}

/// Parses a samples CSV stream. Returns one [`Sample`] per valid row and a
/// reject entry (with line number) per malformed row. Fails only when the
/// header is missing required columns.
pub fn parse_samples<R: Read>(
    reader: R,
    mapping: &ColumnMapping,
) -> Result<ParseOutcome, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = resolve_columns(&headers, mapping)?;

    let mut outcome = ParseOutcome::default();
    for result in rdr.records() {
        match result {
            Ok(record) => {
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                match parse_row(&record, &cols) {
                    Ok(sample) => outcome.samples.push(sample),
                    Err(message) => outcome.rejects.push(RowReject { line, message }),
                }
            }
            Err(err) => {
                let line = err
                    .position()
                    .map(|p| p.line())
                    .unwrap_or(outcome.samples.len() as u64 + 1);
                outcome.rejects.push(RowReject {
                    line,
                    message: err.to_string(),
                });
            }
        }
    }
    Ok(outcome)
}

/// Parses a gateways CSV stream. Gateway records are configuration, so a
/// malformed row is a hard error naming the line.
pub fn parse_gateways<R: Read>(reader: R) -> Result<Vec<Gateway>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, name)| (name.trim(), i))
        .collect();
    let required = ["gateway_id", "lat", "lon", "height_m", "gain_dbi"];
    let missing: Vec<String> = required
        .iter()
        .filter(|c| !index.contains_key(**c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::Schema(missing));
    }

    let mut gateways = Vec::new();
    for result in rdr.records() {
        let record = result?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| IngestError::BadGateway { line, message };
        let get = |name: &str| record.get(index[name]).unwrap_or("").trim().to_string();
        let parse_f64 = |name: &str| -> Result<f64, IngestError> {
            get(name)
                .parse()
                .map_err(|e| bad(format!("bad {name}: {e}")))
        };
        let lat = parse_f64("lat")?;
        let lon = parse_f64("lon")?;
        let height_m = parse_f64("height_m")?;
        if height_m <= 0.0 {
            return Err(bad(format!("gateway height must be > 0, got {height_m}")));
        }
        gateways.push(Gateway {
            gateway_id: get("gateway_id"),
            pos: GeoPoint::new(lat, lon).map_err(|e| bad(e.to_string()))?,
            height_m,
            gain_dbi: parse_f64("gain_dbi")?,
        });
    }
    Ok(gateways)
}

fn format_opt_alt(pos: &GeoPoint) -> String {
    match pos.alt_m() {
        Some(alt) => format!("{alt}"),
        None => String::new(),
    }
}

/// Writes samples in the native schema. Numeric fields use the shortest
/// representation that round-trips, so a write/parse cycle is lossless and
/// repeated runs are byte-identical.
pub fn write_samples_csv<W: Write>(samples: &[Sample], writer: W) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "packet_id",
        "timestamp",
        "gateway_id",
        "lat",
        "lon",
        "alt_m",
        "satellites",
        "rpp_dbm",
        "sf",
    ])?;
    for s in samples {
        wtr.write_record([
            s.packet_id.as_str(),
            &s.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            s.gateway_id.as_str(),
            &format!("{}", s.pos.lat_deg()),
            &format!("{}", s.pos.lon_deg()),
            &format_opt_alt(&s.pos),
            &format!("{}", s.satellites),
            &format!("{}", s.rpp_dbm),
            &format!("{}", s.sf),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_gateways_csv<W: Write>(gateways: &[Gateway], writer: W) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["gateway_id", "lat", "lon", "height_m", "gain_dbi"])?;
    for g in gateways {
        wtr.write_record([
            g.gateway_id.as_str(),
            &format!("{}", g.pos.lat_deg()),
            &format!("{}", g.pos.lon_deg()),
            &format!("{}", g.height_m),
            &format!("{}", g.gain_dbi),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Snap-fixture key for a position: latitude/longitude rounded to six
/// decimal places (about 0.1 m), comma separated.
pub(crate) fn fixture_key<T: Scalar>(pos: &GenericGeoPoint<T>) -> String {
    format!(
        "{:.6},{:.6}",
        pos.lat_deg().to_f64().unwrap_or(f64::NAN),
        pos.lon_deg().to_f64().unwrap_or(f64::NAN)
    )
}
