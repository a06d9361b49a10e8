use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_tsf, seasonality_from_lag, Dataset, DatasetId, Frequency};
use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../data/registry.csv");

/// One benchmark configuration: where the archive file lives and which lag
/// and horizon it is evaluated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub id: DatasetId,
    pub name: String,
    pub file: String,
    pub frequency: Frequency,
    /// Series count reported for the archive file.
    pub series: usize,
    pub lag: usize,
    pub horizon: usize,
}

impl RegistryEntry {
    pub fn seasonality(&self) -> usize {
        seasonality_from_lag(self.lag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    entries: Vec<RegistryEntry>,
}

impl Registry {
    /// The 32 benchmark configurations shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_csv(BUILTIN.as_bytes()).expect("builtin registry is valid")
    }

    pub fn from_csv(raw: &[u8]) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(raw);
        let entries = reader.deserialize().collect::<Result<Vec<RegistryEntry>, _>>()?;
        for e in &entries {
            if e.lag == 0 || e.horizon == 0 {
                return Err(Error::Config(format!("registry entry `{}` has zero lag or horizon", e.id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read(path)?)
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.id.as_str() == id)
    }

    /// Reads the entry's archive from `data_dir`, imputes gaps, and applies
    /// the registry lag and horizon.
    pub fn load_dataset(&self, id: &str, data_dir: impl AsRef<Path>) -> Result<Dataset> {
        let entry = self.get(id).ok_or_else(|| Error::UnknownDataset(id.to_string()))?;
        let ds = read_tsf(data_dir.as_ref().join(&entry.file))?;
        let mut ds = ds.imputed()?.with_lag_horizon(entry.lag, entry.horizon)?;
        ds.meta.id = entry.id.clone();
        ds.meta.name = entry.name.clone();
        Ok(ds)
    }
}
