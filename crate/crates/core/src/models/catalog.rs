//! Loading, saving, and the built-in default model catalog.
//!
//! A catalog file is a JSON array of `{name, variant, params}` records:
//!
//! ```json
//! [
//!   {"name": "FSPL", "variant": "Fspl"},
//!   {"name": "Oulu", "variant": "Ldpl",
//!    "params": {"n": 2.65, "pl_d0_db": 132.25, "d0_m": 1000.0, "sigma_db": 0.0}}
//! ]
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use super::{LdplParams, ModelError, ModelKind, ModelSpec};
use crate::{cast, Scalar};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog i/o error for {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("catalog parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("catalog is empty")]
    Empty,
    #[error("duplicate model name {0:?} in catalog")]
    DuplicateName(String),
    #[error("model {name:?} has invalid parameters: {source}")]
    InvalidModel { name: String, source: ModelError },
}

/// An ordered list of named path-loss models.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCatalog<T> {
    pub models: Vec<ModelSpec<T>>,
}

impl<T: Scalar> ModelCatalog<T> {
    /// The catalog shipped with the toolkit: FSPL, the Oulu and Bonn
    /// log-distance coefficient sets, and the empirical models. Further
    /// coefficient sets (e.g. other campaigns' LDPL or dual-slope fits) are
    /// added through a catalog file.
    pub fn bundled() -> Self {
        let models = vec![
            ModelSpec::new("FSPL", ModelKind::Fspl),
            ModelSpec::new(
                "Oulu",
                ModelKind::Ldpl(LdplParams {
                    n: cast(2.65),
                    pl_d0_db: cast(132.25),
                    d0_m: cast(1000.0),
                    sigma_db: cast(0.0),
                }),
            ),
            ModelSpec::new(
                "Bonn",
                ModelKind::Ldpl(LdplParams {
                    n: cast(1.58),
                    pl_d0_db: cast(132.41),
                    d0_m: cast(1000.0),
                    sigma_db: cast(9.9),
                }),
            ),
            ModelSpec::new("Okumura", ModelKind::OkumuraHata),
            ModelSpec::new("COST", ModelKind::CostHata),
            ModelSpec::new("Egli", ModelKind::Egli),
            ModelSpec::new("ECC33", ModelKind::Ecc33),
            ModelSpec::new("Winner+", ModelKind::WinnerPlusUmaNlos),
        ];
        Self { models }
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.models.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut seen = HashSet::new();
        for model in &self.models {
            if !seen.insert(model.name.as_str()) {
                return Err(CatalogError::DuplicateName(model.name.clone()));
            }
            model.validate().map_err(|source| CatalogError::InvalidModel {
                name: model.name.clone(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ModelSpec<T>> {
        self.models.iter().find(|m| m.name == name)
    }
}

impl<T: Scalar + DeserializeOwned> ModelCatalog<T> {
    pub fn from_json(json: &str) -> Result<Self, CatalogError> {
        let models: Vec<ModelSpec<T>> = serde_json::from_str(json)?;
        let catalog = Self { models };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let json = fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&json)
    }
}

impl<T: Scalar + Serialize> ModelCatalog<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.models).expect("catalog always serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), CatalogError> {
        fs::write(path, self.to_json()).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
