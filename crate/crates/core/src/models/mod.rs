//! Catalog of closed-form path-loss models.
//!
//! Each model maps a [`LinkGeometry`] plus an [`Environment`] to a median
//! path loss in dB. Shadow fading is never part of [`ModelSpec::predict`];
//! use [`ModelSpec::sample_with_shadowing`] to draw a noisy realization.
//!
//! Models evaluated outside their published frequency/height/distance
//! windows still return a prediction; [`ModelSpec::check_validity`] reports
//! the violations as warnings. That is deliberate: comparing models where
//! they were not designed to operate is half the point of a campaign
//! evaluation.

mod catalog;

pub use catalog::{CatalogError, ModelCatalog};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::LinkGeometry;
use crate::{cast, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("reference distance d0 must be > 0, got {0}")]
    InvalidReferenceDistance(f64),
    #[error("shadow-fading sigma must be >= 0, got {0}")]
    InvalidSigma(f64),
    #[error("exponent must be finite, got {0}")]
    InvalidExponent(f64),
    #[error("breakpoint distance {d_break} must exceed reference distance {d0}")]
    InvalidBreakpoint { d_break: f64, d0: f64 },
    #[error("frequency must be > 0 MHz, got {0}")]
    InvalidFrequency(f64),
    #[error("antenna height must be > 0 m, got {0}")]
    InvalidHeight(f64),
}

/// Coefficients of the one-slope log-distance model
/// `PL(d) = pl_d0 + 10 n log10(d / d0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdplParams<T> {
    /// Path-loss exponent (slope per decade / 10).
    pub n: T,
    /// Intercept in dB at the reference distance.
    pub pl_d0_db: T,
    /// Reference distance in meters.
    pub d0_m: T,
    /// Shadow-fading standard deviation in dB.
    pub sigma_db: T,
}

impl<T: Scalar> LdplParams<T> {
    pub fn new(n: T, pl_d0_db: T, d0_m: T, sigma_db: T) -> Result<Self, ModelError> {
        let params = Self {
            n,
            pl_d0_db,
            d0_m,
            sigma_db,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.d0_m > T::zero()) {
            return Err(ModelError::InvalidReferenceDistance(to_f64(self.d0_m)));
        }
        if !(self.sigma_db >= T::zero()) {
            return Err(ModelError::InvalidSigma(to_f64(self.sigma_db)));
        }
        if !self.n.is_finite() {
            return Err(ModelError::InvalidExponent(to_f64(self.n)));
        }
        Ok(())
    }

    /// The same line expressed against a different reference distance:
    /// `pl_d0` shifts by exactly `10 n log10(d0_new / d0)`, `n` is unchanged.
    pub fn rebased(&self, d0_new_m: T) -> Result<Self, ModelError> {
        if !(d0_new_m > T::zero()) {
            return Err(ModelError::InvalidReferenceDistance(to_f64(d0_new_m)));
        }
        let shift = cast::<T>(10.0) * self.n * (d0_new_m / self.d0_m).log10();
        Ok(Self {
            n: self.n,
            pl_d0_db: self.pl_d0_db + shift,
            d0_m: d0_new_m,
            sigma_db: self.sigma_db,
        })
    }

    pub fn path_loss_db(&self, distance_m: T) -> T {
        self.pl_d0_db + cast::<T>(10.0) * self.n * (distance_m / self.d0_m).log10()
    }
}

/// Two-slope log-distance model: slope `n1` up to `d_break`, `n2` beyond,
/// continuous at the breakpoint by construction (single intercept).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualSlopeParams<T> {
    pub n1: T,
    pub n2: T,
    pub pl_d0_db: T,
    pub d0_m: T,
    pub d_break_m: T,
    pub sigma_db: T,
}

impl<T: Scalar> DualSlopeParams<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.d0_m > T::zero()) {
            return Err(ModelError::InvalidReferenceDistance(to_f64(self.d0_m)));
        }
        if !(self.d_break_m > self.d0_m) {
            return Err(ModelError::InvalidBreakpoint {
                d_break: to_f64(self.d_break_m),
                d0: to_f64(self.d0_m),
            });
        }
        if !(self.sigma_db >= T::zero()) {
            return Err(ModelError::InvalidSigma(to_f64(self.sigma_db)));
        }
        if !self.n1.is_finite() || !self.n2.is_finite() {
            return Err(ModelError::InvalidExponent(to_f64(self.n1)));
        }
        Ok(())
    }

    pub fn path_loss_db(&self, distance_m: T) -> T {
        let ten = cast::<T>(10.0);
        if distance_m <= self.d_break_m {
            self.pl_d0_db + ten * self.n1 * (distance_m / self.d0_m).log10()
        } else {
            self.pl_d0_db
                + ten * self.n1 * (self.d_break_m / self.d0_m).log10()
                + ten * self.n2 * (distance_m / self.d_break_m).log10()
        }
    }
}

/// City-size correction class used by the Hata family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CityClass {
    MediumSmall,
    Metropolitan,
}

/// Campaign-level evaluation context: carrier frequency, default antenna
/// heights, and the city class.
///
/// Predictions read antenna heights from the per-link [`LinkGeometry`]
/// (gateways differ in height); the heights here are the defaults used when
/// constructing links and synthetic corpora.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment<T> {
    pub freq_mhz: T,
    pub gw_height_m: T,
    pub sensor_height_m: T,
    pub city_class: CityClass,
}

impl<T: Scalar> Environment<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.freq_mhz > T::zero()) {
            return Err(ModelError::InvalidFrequency(to_f64(self.freq_mhz)));
        }
        if !(self.gw_height_m > T::zero()) || !(self.sensor_height_m > T::zero()) {
            return Err(ModelError::InvalidHeight(to_f64(self.gw_height_m)));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for Environment<T> {
    /// EU868 LoRa uplink with a rooftop gateway and a vehicle-roof sensor.
    fn default() -> Self {
        Self {
            freq_mhz: cast(868.1),
            gw_height_m: cast(30.0),
            sensor_height_m: cast(2.0),
            city_class: CityClass::MediumSmall,
        }
    }
}

/// The model family plus its coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "params")]
pub enum ModelKind<T> {
    Fspl,
    Ldpl(LdplParams<T>),
    DualSlope(DualSlopeParams<T>),
    OkumuraHata,
    CostHata,
    Egli,
    Ecc33,
    WinnerPlusUmaNlos,
}

/// A named, fully parameterized path-loss model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec<T> {
    pub name: String,
    #[serde(flatten)]
    pub kind: ModelKind<T>,
}

/// Which parameter fell outside a model's published validity window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidityParameter {
    FrequencyMhz,
    DistanceKm,
    GwHeightM,
    SensorHeightM,
}

/// Non-fatal notice that a model was evaluated outside its published range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityWarning {
    pub model: String,
    pub parameter: ValidityParameter,
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

impl std::fmt::Display for ValidityWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let what = match self.parameter {
            ValidityParameter::FrequencyMhz => "frequency (MHz)",
            ValidityParameter::DistanceKm => "distance (km)",
            ValidityParameter::GwHeightM => "gateway height (m)",
            ValidityParameter::SensorHeightM => "sensor height (m)",
        };
        write!(
            f,
            "{}: {} = {:.3} outside published range [{}, {}]",
            self.model, what, self.value, self.min, self.max
        )
    }
}

/// Published validity window of one model family; `None` means unrestricted.
struct ValidityWindow {
    freq_mhz: Option<(f64, f64)>,
    distance_km: Option<(f64, f64)>,
    gw_height_m: Option<(f64, f64)>,
    sensor_height_m: Option<(f64, f64)>,
}

const UNRESTRICTED: ValidityWindow = ValidityWindow {
    freq_mhz: None,
    distance_km: None,
    gw_height_m: None,
    sensor_height_m: None,
};

impl<T: Scalar> ModelSpec<T> {
    pub fn new(name: impl Into<String>, kind: ModelKind<T>) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match &self.kind {
            ModelKind::Ldpl(p) => p.validate(),
            ModelKind::DualSlope(p) => p.validate(),
            _ => Ok(()),
        }
    }

    /// Shadow-fading sigma carried by the model itself, when it has one.
    pub fn sigma_db(&self) -> Option<T> {
        match &self.kind {
            ModelKind::Ldpl(p) => Some(p.sigma_db),
            ModelKind::DualSlope(p) => Some(p.sigma_db),
            _ => None,
        }
    }

    /// Median path loss in dB for the given link. Deterministic; the
    /// shadow-fading term is never added here.
    pub fn predict(&self, link: &LinkGeometry<T>, env: &Environment<T>) -> T {
        let d_m = link.distance_m;
        let d_km = d_m / cast::<T>(1000.0);
        let f_mhz = env.freq_mhz;
        let f_ghz = f_mhz / cast::<T>(1000.0);
        let h_b = link.gw_height_m;
        let h_m = link.sensor_height_m;

        match &self.kind {
            ModelKind::Fspl => fspl_db(d_km, f_mhz),
            ModelKind::Ldpl(p) => p.path_loss_db(d_m),
            ModelKind::DualSlope(p) => p.path_loss_db(d_m),
            ModelKind::OkumuraHata => {
                let a_hm = match env.city_class {
                    CityClass::MediumSmall => hata_mobile_correction_small(f_mhz, h_m),
                    CityClass::Metropolitan => hata_mobile_correction_large(f_mhz, h_m),
                };
                cast::<T>(69.55) + cast::<T>(26.16) * f_mhz.log10()
                    - cast::<T>(13.82) * h_b.log10()
                    - a_hm
                    + (cast::<T>(44.9) - cast::<T>(6.55) * h_b.log10()) * d_km.log10()
            }
            ModelKind::CostHata => {
                let a_hm = hata_mobile_correction_small(f_mhz, h_m);
                let c = match env.city_class {
                    CityClass::MediumSmall => T::zero(),
                    CityClass::Metropolitan => cast::<T>(3.0),
                };
                cast::<T>(46.3) + cast::<T>(33.9) * f_mhz.log10()
                    - cast::<T>(13.82) * h_b.log10()
                    - a_hm
                    + (cast::<T>(44.9) - cast::<T>(6.55) * h_b.log10()) * d_km.log10()
                    + c
            }
            ModelKind::Egli => {
                let base = cast::<T>(20.0) * f_mhz.log10() + cast::<T>(40.0) * d_km.log10()
                    - cast::<T>(20.0) * h_b.log10();
                if h_m < cast::<T>(10.0) {
                    base + cast::<T>(76.3) - cast::<T>(10.0) * h_m.log10()
                } else {
                    base + cast::<T>(85.9) - cast::<T>(20.0) * h_m.log10()
                }
            }
            ModelKind::Ecc33 => {
                let log_d = d_km.log10();
                let log_f = f_ghz.log10();
                let a_fs =
                    cast::<T>(92.4) + cast::<T>(20.0) * log_d + cast::<T>(20.0) * log_f;
                let a_bm = cast::<T>(20.41)
                    + cast::<T>(9.83) * log_d
                    + cast::<T>(7.894) * log_f
                    + cast::<T>(9.56) * log_f * log_f;
                let g_b = (h_b / cast::<T>(200.0)).log10()
                    * (cast::<T>(13.958) + cast::<T>(5.8) * log_d * log_d);
                let g_r = (cast::<T>(42.57) + cast::<T>(13.7) * log_f)
                    * (h_m.log10() - cast::<T>(0.585));
                a_fs + a_bm - g_b - g_r
            }
            ModelKind::WinnerPlusUmaNlos => {
                (cast::<T>(44.9) - cast::<T>(6.55) * h_b.log10()) * d_m.log10()
                    + cast::<T>(34.46)
                    + cast::<T>(5.83) * h_b.log10()
                    + cast::<T>(23.0) * (f_ghz / cast::<T>(5.0)).log10()
            }
        }
    }

    /// One predicted sample including a shadow-fading draw: `predict + N(0, σ)`.
    ///
    /// LDPL variants use their own sigma; the other models fall back to
    /// `fallback_sigma_db`. Seeded and reproducible.
    pub fn sample_with_shadowing(
        &self,
        link: &LinkGeometry<T>,
        env: &Environment<T>,
        fallback_sigma_db: T,
        seed: u64,
    ) -> T
    where
        StandardNormal: Distribution<T>,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with_shadowing_rng(link, env, fallback_sigma_db, &mut rng)
    }

    /// Same as [`Self::sample_with_shadowing`] but drawing from a caller-owned
    /// RNG, for bulk generation.
    pub fn sample_with_shadowing_rng<R: Rng + ?Sized>(
        &self,
        link: &LinkGeometry<T>,
        env: &Environment<T>,
        fallback_sigma_db: T,
        rng: &mut R,
    ) -> T
    where
        StandardNormal: Distribution<T>,
    {
        let median = self.predict(link, env);
        let sigma = self.sigma_db().unwrap_or(fallback_sigma_db);
        if sigma <= T::zero() {
            return median;
        }
        let noise: T = Normal::new(T::zero(), sigma)
            .expect("sigma validated non-negative")
            .sample(rng);
        median + noise
    }

    /// Checks the link and environment against the model's published
    /// validity window. Violations are warnings, never errors; the
    /// prediction is still meaningful as an extrapolation.
    pub fn check_validity(&self, link: &LinkGeometry<T>, env: &Environment<T>) -> Vec<ValidityWarning> {
        let window = match &self.kind {
            ModelKind::Fspl | ModelKind::Ldpl(_) | ModelKind::DualSlope(_) => UNRESTRICTED,
            ModelKind::OkumuraHata => ValidityWindow {
                freq_mhz: Some((150.0, 1500.0)),
                distance_km: Some((1.0, 20.0)),
                gw_height_m: Some((30.0, 200.0)),
                sensor_height_m: Some((1.0, 10.0)),
            },
            ModelKind::CostHata => ValidityWindow {
                freq_mhz: Some((1500.0, 2000.0)),
                distance_km: Some((1.0, 20.0)),
                gw_height_m: Some((30.0, 200.0)),
                sensor_height_m: Some((1.0, 10.0)),
            },
            ModelKind::Egli => ValidityWindow {
                freq_mhz: Some((40.0, 1000.0)),
                ..UNRESTRICTED
            },
            ModelKind::Ecc33 => ValidityWindow {
                freq_mhz: Some((900.0, 3500.0)),
                ..UNRESTRICTED
            },
            ModelKind::WinnerPlusUmaNlos => ValidityWindow {
                freq_mhz: Some((450.0, 6000.0)),
                distance_km: Some((0.05, 5.0)),
                ..UNRESTRICTED
            },
        };

        let mut warnings = Vec::new();
        let mut check = |parameter, value: T, range: Option<(f64, f64)>| {
            if let Some((min, max)) = range {
                let v = to_f64(value);
                if v < min || v > max {
                    warnings.push(ValidityWarning {
                        model: self.name.clone(),
                        parameter,
                        value: v,
                        min,
                        max,
                    });
                }
            }
        };
        check(ValidityParameter::FrequencyMhz, env.freq_mhz, window.freq_mhz);
        check(
            ValidityParameter::DistanceKm,
            link.distance_m / cast::<T>(1000.0),
            window.distance_km,
        );
        check(ValidityParameter::GwHeightM, link.gw_height_m, window.gw_height_m);
        check(
            ValidityParameter::SensorHeightM,
            link.sensor_height_m,
            window.sensor_height_m,
        );
        warnings
    }
}

/// Free-space path loss: `32.45 + 20 log10(d_km) + 20 log10(f_MHz)`.
pub fn fspl_db<T: Scalar>(d_km: T, f_mhz: T) -> T {
    cast::<T>(32.45) + cast::<T>(20.0) * d_km.log10() + cast::<T>(20.0) * f_mhz.log10()
}

/// FSPL for a distance in meters, the form the pipeline filter uses.
pub fn fspl_db_at_meters<T: Scalar>(distance_m: T, f_mhz: T) -> T {
    fspl_db(distance_m / cast::<T>(1000.0), f_mhz)
}

/// Hata mobile-antenna correction for medium/small cities.
fn hata_mobile_correction_small<T: Scalar>(f_mhz: T, h_m: T) -> T {
    (cast::<T>(1.1) * f_mhz.log10() - cast::<T>(0.7)) * h_m
        - (cast::<T>(1.56) * f_mhz.log10() - cast::<T>(0.8))
}

/// Hata mobile-antenna correction for large cities.
fn hata_mobile_correction_large<T: Scalar>(f_mhz: T, h_m: T) -> T {
    if f_mhz >= cast::<T>(400.0) {
        let t = (cast::<T>(11.75) * h_m).log10();
        cast::<T>(3.2) * t * t - cast::<T>(4.97)
    } else {
        let t = (cast::<T>(1.54) * h_m).log10();
        cast::<T>(8.29) * t * t - cast::<T>(1.1)
    }
}

fn to_f64<T: Scalar>(value: T) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}
