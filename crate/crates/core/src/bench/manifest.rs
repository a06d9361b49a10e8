//! Benchmark manifests: which datasets, how they are truncated, which
//! methods run, and with what configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::synthetic::{gen_synthetic, SyntheticSpec};
use crate::baselines::BaselineMethod;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::trainer::{Strategy, TrainConfig};
use crate::tsf::{read_tsf, Dataset, DatasetId, Registry};

/// A benchmark column: a statistical baseline or a training strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Baseline(BaselineMethod),
    Learned(Strategy),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline(BaselineMethod::Mean) => "mean",
            Method::Baseline(BaselineMethod::Naive) => "naive",
            Method::Learned(s) => s.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Method::Baseline(BaselineMethod::Mean)),
            "naive" => Ok(Method::Baseline(BaselineMethod::Naive)),
            other => other
                .parse::<Strategy>()
                .map(Method::Learned)
                .map_err(|_| Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn one() -> usize {
    1
}

/// One dataset of the suite. Exactly one of `path`, `registry` and
/// `synthetic` names its source.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    /// Overrides the id taken from the source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// `.tsf` file, relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Id in the built-in registry, read from `data_dir`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    /// Generator seed for synthetic sources; derived from the master seed if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Observed steps of the target; defaults to `delta + 2 * horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_length: Option<usize>,
    #[serde(default = "one")]
    pub window_stride: usize,
    /// Validation series names; drawn at random if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_series: Option<Vec<String>>,
}

impl DatasetEntry {
    pub fn synthetic(spec: SyntheticSpec, seed: u64) -> Self {
        Self {
            synthetic: Some(spec),
            seed: Some(seed),
            window_stride: 1,
            ..Self::default()
        }
    }

    pub fn path(path: impl Into<PathBuf>) -> Self {
        Self {
            path: Some(path.into()),
            window_stride: 1,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkManifest {
    #[serde(default)]
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub datasets: Vec<DatasetEntry>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    /// Concurrent cells; not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl BenchmarkManifest {
    pub fn new(methods: Vec<Method>, datasets: Vec<DatasetEntry>) -> Self {
        Self {
            master_seed: 0,
            methods,
            datasets,
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            data_dir: None,
            jobs: None,
            base_dir: PathBuf::new(),
        }
    }

    pub fn from_json(raw: &[u8], base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: Self = serde_json::from_slice(raw)?;
        m.base_dir = base_dir.into();
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&raw, base)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("manifest lists no methods".into()));
        }
        if self.datasets.len() < 2 {
            return Err(Error::Config("leave-one-out needs at least two datasets".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::Config(format!("method `{m}` listed twice")));
            }
        }
        for (i, d) in self.datasets.iter().enumerate() {
            let sources = [d.path.is_some(), d.registry.is_some(), d.synthetic.is_some()];
            if sources.iter().filter(|&&b| b).count() != 1 {
                return Err(Error::Config(format!(
                    "dataset entry {i} must name exactly one of path, registry, synthetic"
                )));
            }
            if d.window_stride == 0 {
                return Err(Error::Config(format!("dataset entry {i}: window_stride must be at least 1")));
            }
        }
        self.train.validate()?;
        self.model.validate()
    }

    /// SHA-256 over the canonical JSON form, excluding `jobs`.
    pub fn hash(&self) -> String {
        let canonical = Self {
            jobs: None,
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&canonical).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Reads, imputes and configures every dataset in declaration order.
    pub fn load_datasets(&self) -> Result<Vec<Dataset>> {
        let mut out: Vec<Dataset> = Vec::with_capacity(self.datasets.len());
        for (i, entry) in self.datasets.iter().enumerate() {
            let mut ds = if let Some(p) = &entry.path {
                read_tsf(self.resolve(p))?.imputed()?
            } else if let Some(id) = &entry.registry {
                let dir = self
                    .data_dir
                    .as_deref()
                    .ok_or_else(|| Error::Config(format!("registry dataset `{id}` needs data_dir")))?;
                Registry::builtin().load_dataset(id, self.resolve(dir))?
            } else {
                let spec = entry.synthetic.as_ref().expect("validated source");
                let seed = entry.seed.unwrap_or_else(|| derive_seed(self.master_seed, &[&spec.id, "synthetic"]));
                gen_synthetic(spec, seed)?
            };
            if entry.delta.is_some() || entry.horizon.is_some() {
                let d = entry.delta.unwrap_or(ds.meta.delta);
                let h = entry.horizon.unwrap_or(ds.meta.horizon);
                ds = ds.with_lag_horizon(d, h)?;
            }
            if let Some(id) = &entry.id {
                ds.meta.id = DatasetId::new(id.clone());
            }
            if out.iter().any(|o| o.meta.id == ds.meta.id) {
                return Err(Error::Config(format!("dataset entry {i}: duplicate id `{}`", ds.meta.id)));
            }
            out.push(ds);
        }
        Ok(out)
    }

    /// The entry describing dataset `id`, if any.
    pub fn entry_for(&self, datasets: &[Dataset], id: &DatasetId) -> Option<&DatasetEntry> {
        datasets
            .iter()
            .position(|d| &d.meta.id == id)
            .and_then(|i| self.datasets.get(i))
    }
}

/// Stable 64-bit seed from a master seed and string labels.
pub fn derive_seed(master: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
