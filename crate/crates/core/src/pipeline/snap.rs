//! Street snapping: maps a GPS fix to the nearest street point.
//!
//! Three providers implement the same contract:
//!
//! * [`HttpSnapProvider`] — a live OSRM-compatible `nearest` service.
//! * [`FixtureSnapProvider`] — replay of recorded snaps, keyed by the
//!   rounded coordinate, for reproducible reruns after the street network
//!   has changed.
//! * [`IdentitySnapProvider`] — passthrough for synthetic corpora.
//!
//! The reported offset is always the great-circle distance between the
//! original and the snapped position, computed locally rather than trusted
//! from the provider.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::geo::haversine_distance;
use crate::GeoPoint;

use super::ingest::fixture_key;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SnapError {
    #[error("snap provider unavailable after {attempts} attempts: {message}")]
    ProviderUnavailable { attempts: u32, message: String },
    #[error("snap provider returned an unusable response: {0}")]
    BadResponse(String),
    #[error("no recorded snap for key {0:?}")]
    MissingFixture(String),
    #[error("snap fixture file {path}: {message}")]
    BadFixture { path: String, message: String },
}

/// Result of snapping one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnappedPoint {
    pub pos: GeoPoint,
    pub offset_m: f64,
}

pub trait SnapProvider: Sync {
    fn snap(&self, pos: &GeoPoint) -> Result<SnappedPoint, SnapError>;

    /// Snaps a batch of positions; providers doing I/O may overlap requests.
    fn snap_batch(&self, positions: &[GeoPoint]) -> Vec<Result<SnappedPoint, SnapError>> {
        positions.iter().map(|p| self.snap(p)).collect()
    }
}

fn snapped(original: &GeoPoint, lat: f64, lon: f64) -> Result<SnappedPoint, SnapError> {
    let mut pos = GeoPoint::new(lat, lon)
        .map_err(|e| SnapError::BadResponse(format!("snapped coordinate invalid: {e}")))?;
    if let Some(alt) = original.alt_m() {
        pos = pos.with_altitude(alt);
    }
    Ok(SnappedPoint {
        pos,
        offset_m: haversine_distance(original, &pos),
    })
}

/// Passthrough provider: every position is already "on the street".
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentitySnapProvider;

impl SnapProvider for IdentitySnapProvider {
    fn snap(&self, pos: &GeoPoint) -> Result<SnappedPoint, SnapError> {
        Ok(SnappedPoint {
            pos: *pos,
            offset_m: 0.0,
        })
    }
}

#[derive(Debug, Deserialize)]
struct FixtureEntry {
    lat: f64,
    lon: f64,
}

/// Replays recorded snaps from a JSON map of
/// `"lat,lon" (6 decimal places) -> {lat, lon}`. A position without a
/// recorded entry is an error, so gaps surface as quarantined samples
/// instead of silently passing unsnapped.
#[derive(Debug, Default, Clone)]
pub struct FixtureSnapProvider {
    entries: HashMap<String, (f64, f64)>,
}

impl FixtureSnapProvider {
    pub fn new(entries: HashMap<String, (f64, f64)>) -> Self {
        Self { entries }
    }

    pub fn load(path: &Path) -> Result<Self, SnapError> {
        let text = fs::read_to_string(path).map_err(|e| SnapError::BadFixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let raw: HashMap<String, FixtureEntry> =
            serde_json::from_str(&text).map_err(|e| SnapError::BadFixture {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Ok(Self::new(
            raw.into_iter()
                .map(|(k, v)| (k, (v.lat, v.lon)))
                .collect(),
        ))
    }

    /// Records an entry mapping `original` to `snapped_to`.
    pub fn insert(&mut self, original: &GeoPoint, snapped_to: &GeoPoint) {
        self.entries.insert(
            fixture_key(original),
            (snapped_to.lat_deg(), snapped_to.lon_deg()),
        );
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl SnapProvider for FixtureSnapProvider {
    fn snap(&self, pos: &GeoPoint) -> Result<SnappedPoint, SnapError> {
        let key = fixture_key(pos);
        let (lat, lon) = self
            .entries
            .get(&key)
            .ok_or(SnapError::MissingFixture(key))?;
        snapped(pos, *lat, *lon)
    }
}

/// Configuration for the live OSRM-compatible client.
#[derive(Debug, Clone)]
pub struct HttpSnapConfig {
    /// Service base, e.g. `http://localhost:5000`.
    pub base_url: String,
    pub timeout: Duration,
    /// Total attempts per position (first try plus retries).
    pub attempts: u32,
    pub retry_backoff: Duration,
    /// Upper bound on overlapping requests in `snap_batch`.
    pub max_in_flight: usize,
}

impl HttpSnapConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout: Duration::from_secs(5),
            attempts: 3,
            retry_backoff: Duration::from_millis(100),
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Deserialize)]
struct NearestResponse {
    code: String,
    #[serde(default)]
    waypoints: Vec<NearestWaypoint>,
}

#[derive(Debug, Deserialize)]
struct NearestWaypoint {
    /// `[lon, lat]`, OSRM coordinate order.
    location: [f64; 2],
}

/// Live client for `GET {base}/nearest/v1/driving/{lon},{lat}`.
pub struct HttpSnapProvider {
    config: HttpSnapConfig,
    client: reqwest::blocking::Client,
}

impl HttpSnapProvider {
    pub fn new(config: HttpSnapConfig) -> Result<Self, SnapError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| SnapError::BadResponse(format!("client setup failed: {e}")))?;
        Ok(Self { config, client })
    }

    fn request(&self, pos: &GeoPoint) -> Result<SnappedPoint, String> {
        let url = format!(
            "{}/nearest/v1/driving/{},{}",
            self.config.base_url.trim_end_matches('/'),
            pos.lon_deg(),
            pos.lat_deg()
        );
        let response: NearestResponse = self
            .client
            .get(&url)
            .send()
            .map_err(|e| e.to_string())?
            .json()
            .map_err(|e| e.to_string())?;
        if response.code != "Ok" {
            return Err(format!("service code {:?}", response.code));
        }
        let waypoint = response
            .waypoints
            .first()
            .ok_or_else(|| "no waypoints in response".to_string())?;
        snapped(pos, waypoint.location[1], waypoint.location[0]).map_err(|e| e.to_string())
    }
}

impl SnapProvider for HttpSnapProvider {
    fn snap(&self, pos: &GeoPoint) -> Result<SnappedPoint, SnapError> {
        let mut last_error = String::new();
        for attempt in 0..self.config.attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.retry_backoff);
            }
            match self.request(pos) {
                Ok(point) => return Ok(point),
                Err(message) => last_error = message,
            }
        }
        Err(SnapError::ProviderUnavailable {
            attempts: self.config.attempts,
            message: last_error,
        })
    }

    /// Work-stealing over a shared index with at most `max_in_flight`
    /// requests outstanding.
    fn snap_batch(&self, positions: &[GeoPoint]) -> Vec<Result<SnappedPoint, SnapError>> {
        let workers = self.config.max_in_flight.max(1).min(positions.len());
        if workers <= 1 {
            return positions.iter().map(|p| self.snap(p)).collect();
        }
        let next = AtomicUsize::new(0);
        let results: Vec<Mutex<Option<Result<SnappedPoint, SnapError>>>> =
            positions.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= positions.len() {
                        break;
                    }
                    *results[i].lock().expect("result slot") = Some(self.snap(&positions[i]));
                });
            }
        });
        results
            .into_iter()
            .map(|slot| slot.into_inner().expect("slot filled").expect("slot filled"))
            .collect()
    }
}
