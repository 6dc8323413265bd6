//! Run configuration: a TOML key-value file plus flag overrides, flags win.
//!
//! Every subcommand resolves and validates its full configuration before
//! touching any data: referenced paths must exist, thresholds must be
//! positive, and the snap provider spec must parse.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use lorapath::analysis::{ConvergenceScope, SfSensitivity};
use lorapath::models::CityClass;
use lorapath::pipeline::{
    ColumnMapping, FilterConfig, FixtureSnapProvider, HttpSnapConfig, HttpSnapProvider,
    IdentitySnapProvider, LinkBudget, SnapProvider,
};
use lorapath::Environment;

use crate::CliError;

/// Raw file-level configuration; all keys optional so the file only states
/// what it overrides.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub samples: Option<PathBuf>,
    pub gateways: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub snap: Option<String>,
    pub max_offset_m: Option<f64>,
    pub min_satellites: Option<u32>,
    pub max_altitude_m: Option<f64>,
    pub bin_width_m: Option<f64>,
    pub d0_m: Option<f64>,
    pub subset_sizes: Option<Vec<usize>>,
    pub repeats: Option<usize>,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub columns: Option<ColumnMapping>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub tx_power_dbm: Option<f64>,
    pub tx_gain_dbi: Option<f64>,
    pub rx_gain_dbi: Option<f64>,
    pub fixed_losses_db: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub freq_mhz: Option<f64>,
    pub gw_height_m: Option<f64>,
    pub sensor_height_m: Option<f64>,
    /// `medium_small` or `metropolitan`.
    pub city_class: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub bias_bin_width_m: Option<f64>,
    pub bias_max_distance_m: Option<f64>,
    pub progression_distances_m: Option<Vec<f64>>,
    pub sf_floors_dbm: Option<[f64; 6]>,
    /// `full_set` (default) or `subset`: which population the convergence
    /// RMSE is scored on.
    pub convergence_scope: Option<String>,
    pub weighted_fit: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }
}

/// Flag values as parsed by clap; `None` defers to the config file, then to
/// the built-in default.
#[derive(Debug, Default, Clone)]
pub struct FlagOverrides {
    pub samples: Option<PathBuf>,
    pub gateways: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub snap: Option<String>,
    pub max_offset_m: Option<f64>,
    pub min_satellites: Option<u32>,
    pub max_altitude_m: Option<f64>,
    pub bin_width_m: Option<f64>,
    pub d0_m: Option<f64>,
    pub subset_sizes: Option<Vec<usize>>,
    pub repeats: Option<usize>,
}

/// Which snap provider a run uses.
#[derive(Debug, Clone, PartialEq)]
pub enum SnapSpec {
    Identity,
    Fixture(PathBuf),
    Live(String),
}

impl SnapSpec {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        if spec == "identity" {
            return Ok(SnapSpec::Identity);
        }
        if let Some(path) = spec.strip_prefix("fixture:") {
            return Ok(SnapSpec::Fixture(PathBuf::from(path)));
        }
        if let Some(url) = spec.strip_prefix("live:") {
            return Ok(SnapSpec::Live(url.to_string()));
        }
        Err(CliError::Validation(format!(
            "unrecognized snap spec {spec:?}; expected identity, fixture:PATH, or live:URL"
        )))
    }

    pub fn build(&self) -> Result<Box<dyn SnapProvider>, CliError> {
        match self {
            SnapSpec::Identity => Ok(Box::new(IdentitySnapProvider)),
            SnapSpec::Fixture(path) => Ok(Box::new(
                FixtureSnapProvider::load(path)
                    .map_err(|e| CliError::Runtime(format!("snap fixture: {e}")))?,
            )),
            SnapSpec::Live(url) => Ok(Box::new(
                HttpSnapProvider::new(HttpSnapConfig::new(url.clone()))
                    .map_err(|e| CliError::Runtime(format!("snap client: {e}")))?,
            )),
        }
    }
}

/// Fully resolved configuration for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub samples: Option<PathBuf>,
    pub gateways: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub snap: SnapSpec,
    pub min_satellites: u32,
    pub max_offset_m: f64,
    /// No built-in default: the survey-area ceiling must be configured.
    pub max_altitude_m: Option<f64>,
    pub bin_width_m: f64,
    pub d0_m: f64,
    pub subset_sizes: Vec<usize>,
    pub repeats: usize,
    pub budget: LinkBudget,
    pub env: Environment,
    pub columns: ColumnMapping,
    pub bias_bin_width_m: f64,
    pub bias_max_distance_m: f64,
    pub progression_distances_m: Vec<f64>,
    pub sf_sensitivity: SfSensitivity,
    pub convergence_scope: ConvergenceScope,
    pub weighted_fit: bool,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SUBSET_SIZES: &[usize] = &[1_000, 2_000, 5_000, 10_000, 20_000, 30_000, 50_000];
pub const DEFAULT_REPEATS: usize = 20;

fn default_progression_distances() -> Vec<f64> {
    (1..=13).map(|km| km as f64 * 1000.0).collect()
}

impl RunConfig {
    /// Merges flags over the config file over the defaults.
    pub fn resolve(file: FileConfig, flags: FlagOverrides) -> Result<Self, CliError> {
        let snap_spec = flags
            .snap
            .or(file.snap)
            .unwrap_or_else(|| "identity".to_string());

        let default_budget = LinkBudget::default();
        let budget = LinkBudget {
            tx_power_dbm: file.budget.tx_power_dbm.unwrap_or(default_budget.tx_power_dbm),
            tx_gain_dbi: file.budget.tx_gain_dbi.unwrap_or(default_budget.tx_gain_dbi),
            rx_gain_dbi: file.budget.rx_gain_dbi.unwrap_or(default_budget.rx_gain_dbi),
            fixed_losses_db: file
                .budget
                .fixed_losses_db
                .unwrap_or(default_budget.fixed_losses_db),
        };

        let default_env = Environment::default();
        let city_class = match file.environment.city_class.as_deref() {
            None => default_env.city_class,
            Some("medium_small") => CityClass::MediumSmall,
            Some("metropolitan") => CityClass::Metropolitan,
            Some(other) => {
                return Err(CliError::Validation(format!(
                    "unknown city_class {other:?}; expected medium_small or metropolitan"
                )))
            }
        };
        let env = Environment {
            freq_mhz: file.environment.freq_mhz.unwrap_or(default_env.freq_mhz),
            gw_height_m: file
                .environment
                .gw_height_m
                .unwrap_or(default_env.gw_height_m),
            sensor_height_m: file
                .environment
                .sensor_height_m
                .unwrap_or(default_env.sensor_height_m),
            city_class,
        };

        let convergence_scope = match file.analysis.convergence_scope.as_deref() {
            None | Some("full_set") => ConvergenceScope::FullSet,
            Some("subset") => ConvergenceScope::Subset,
            Some(other) => {
                return Err(CliError::Validation(format!(
                    "unknown convergence_scope {other:?}; expected full_set or subset"
                )))
            }
        };

        Ok(Self {
            samples: flags.samples.or(file.samples),
            gateways: flags.gateways.or(file.gateways),
            catalog: flags.catalog.or(file.catalog),
            out: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            snap: SnapSpec::parse(&snap_spec)?,
            min_satellites: flags.min_satellites.or(file.min_satellites).unwrap_or(5),
            max_offset_m: flags.max_offset_m.or(file.max_offset_m).unwrap_or(20.0),
            max_altitude_m: flags.max_altitude_m.or(file.max_altitude_m),
            bin_width_m: flags.bin_width_m.or(file.bin_width_m).unwrap_or(10.0),
            d0_m: flags.d0_m.or(file.d0_m).unwrap_or(1000.0),
            subset_sizes: flags
                .subset_sizes
                .or(file.subset_sizes)
                .unwrap_or_else(|| DEFAULT_SUBSET_SIZES.to_vec()),
            repeats: flags.repeats.or(file.repeats).unwrap_or(DEFAULT_REPEATS),
            budget,
            env,
            columns: file.columns.unwrap_or_default(),
            bias_bin_width_m: file.analysis.bias_bin_width_m.unwrap_or(500.0),
            bias_max_distance_m: file.analysis.bias_max_distance_m.unwrap_or(13_000.0),
            progression_distances_m: file
                .analysis
                .progression_distances_m
                .unwrap_or_else(default_progression_distances),
            sf_sensitivity: file
                .analysis
                .sf_floors_dbm
                .map(|floors_dbm| SfSensitivity { floors_dbm })
                .unwrap_or_default(),
            convergence_scope,
            weighted_fit: file.analysis.weighted_fit.unwrap_or(false),
        })
    }

    /// Structural validation shared by all subcommands.
    pub fn validate_common(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(CliError::Validation(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("max_offset_m", self.max_offset_m)?;
        positive("bin_width_m", self.bin_width_m)?;
        positive("d0_m", self.d0_m)?;
        positive("freq_mhz", self.env.freq_mhz)?;
        positive("sensor_height_m", self.env.sensor_height_m)?;
        positive("gw_height_m", self.env.gw_height_m)?;
        positive("bias_bin_width_m", self.bias_bin_width_m)?;
        positive("bias_max_distance_m", self.bias_max_distance_m)?;
        if self.repeats == 0 {
            return Err(CliError::Validation("repeats must be >= 1".to_string()));
        }
        if self.subset_sizes.contains(&0) {
            return Err(CliError::Validation(
                "subset_sizes entries must be >= 1".to_string(),
            ));
        }
        if let Some(alt) = self.max_altitude_m {
            if !alt.is_finite() {
                return Err(CliError::Validation(format!(
                    "max_altitude_m must be finite, got {alt}"
                )));
            }
        }
        if let SnapSpec::Fixture(path) = &self.snap {
            require_exists("snap fixture", path)?;
        }
        if let Some(catalog) = &self.catalog {
            require_exists("catalog", catalog)?;
        }
        Ok(())
    }

    pub fn require_samples(&self) -> Result<&Path, CliError> {
        let path = self
            .samples
            .as_deref()
            .ok_or_else(|| CliError::Validation("--samples is required".to_string()))?;
        require_exists("samples", path)?;
        Ok(path)
    }

    pub fn require_gateways(&self) -> Result<&Path, CliError> {
        let path = self
            .gateways
            .as_deref()
            .ok_or_else(|| CliError::Validation("--gateways is required".to_string()))?;
        require_exists("gateways", path)?;
        Ok(path)
    }

    pub fn require_max_altitude(&self) -> Result<f64, CliError> {
        self.max_altitude_m.ok_or_else(|| {
            CliError::Validation(
                "--max-altitude-m is required (the ceiling is survey-area specific and has no default)"
                    .to_string(),
            )
        })
    }

    pub fn filter_config(&self) -> Result<FilterConfig, CliError> {
        let mut config = FilterConfig::new(self.require_max_altitude()?);
        config.min_satellites = self.min_satellites;
        config.max_offset_m = self.max_offset_m;
        config.budget = self.budget;
        config.freq_mhz = self.env.freq_mhz;
        config
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(config)
    }
}

pub fn require_exists(what: &str, path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{what} path {} does not exist",
            path.display()
        )))
    }
}
