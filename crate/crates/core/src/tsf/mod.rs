//! Reader and writer for the `.tsf` time series archive format, plus the
//! registry of benchmark dataset configurations.

mod parse;
mod registry;
mod write;

use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use parse::{parse_tsf, read_tsf};
pub use registry::{Registry, RegistryEntry};
pub use write::{serialize_tsf, write_tsf};

/// Timestamp layout used by the archive (`1979-01-01 00-00-00`).
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H-%M-%S";

/// Opaque dataset key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetId(pub String);

impl DatasetId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DatasetId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    Yearly,
    Quarterly,
    Monthly,
    Weekly,
    Daily,
    Hourly,
    SubHourly,
}

impl Frequency {
    /// Maps an archive `@frequency` token onto the enumerated frequency.
    pub fn from_token(token: &str) -> Option<Self> {
        let t = token.trim().to_ascii_lowercase();
        let freq = match t.as_str() {
            "yearly" => Self::Yearly,
            "quarterly" => Self::Quarterly,
            "monthly" => Self::Monthly,
            "weekly" => Self::Weekly,
            "daily" => Self::Daily,
            "hourly" => Self::Hourly,
            "half_hourly" | "minutely" => Self::SubHourly,
            _ if t.ends_with("_minutes") || t.ends_with("_seconds") => Self::SubHourly,
            _ => return None,
        };
        Some(freq)
    }

    pub fn token(self) -> &'static str {
        match self {
            Self::Yearly => "yearly",
            Self::Quarterly => "quarterly",
            Self::Monthly => "monthly",
            Self::Weekly => "weekly",
            Self::Daily => "daily",
            Self::Hourly => "hourly",
            Self::SubHourly => "half_hourly",
        }
    }

    /// Archive default lag when no registry entry overrides it.
    pub fn default_lag(self) -> usize {
        match self {
            Self::Yearly => 2,
            Self::Quarterly => 5,
            Self::Monthly => 15,
            Self::Weekly => 65,
            Self::Daily => 9,
            Self::Hourly => 30,
            Self::SubHourly => 60,
        }
    }

    /// Archive default horizon for files without an `@horizon` line.
    pub fn default_horizon(self) -> usize {
        match self {
            Self::Yearly => 6,
            Self::Quarterly => 8,
            Self::Monthly => 18,
            Self::Weekly => 13,
            Self::Daily => 14,
            Self::Hourly | Self::SubHourly => 48,
        }
    }
}

/// Seasonality implied by a lag: the archive sets lag = 1.25 x seasonality.
pub fn seasonality_from_lag(delta: usize) -> usize {
    ((delta as f64 / 1.25).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub id: DatasetId,
    pub name: String,
    pub frequency: Frequency,
    /// Number of series (M).
    pub series_count: usize,
    /// Observation range fed to the model.
    pub delta: usize,
    pub horizon: usize,
    pub seasonality: usize,
}

impl DatasetMeta {
    pub fn new(
        id: DatasetId,
        name: impl Into<String>,
        frequency: Frequency,
        series_count: usize,
        delta: usize,
        horizon: usize,
    ) -> Result<Self> {
        if series_count < 2 {
            return Err(Error::Data(format!(
                "dataset `{id}` has {series_count} series; at least 2 are required"
            )));
        }
        if delta == 0 || horizon == 0 {
            return Err(Error::Config(format!(
                "dataset `{id}`: lag and horizon must be positive"
            )));
        }
        Ok(Self {
            id,
            name: name.into(),
            frequency,
            series_count,
            delta,
            horizon,
            seasonality: seasonality_from_lag(delta),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    String,
    Numeric,
    Date,
}

impl AttributeKind {
    fn parse(token: &str) -> Option<Self> {
        match token {
            "string" => Some(Self::String),
            "numeric" => Some(Self::Numeric),
            "date" => Some(Self::Date),
            _ => None,
        }
    }

    fn token(self) -> &'static str {
        match self {
            Self::String => "string",
            Self::Numeric => "numeric",
            Self::Date => "date",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
}

/// Header attributes as declared in the file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TsfHeader {
    pub relation: Option<String>,
    pub attributes: Vec<Attribute>,
    /// Raw `@frequency` token, kept verbatim so sub-hourly tokens survive.
    pub frequency: Option<String>,
    pub horizon: Option<usize>,
    pub missing: Option<bool>,
    pub equal_length: Option<bool>,
}

impl TsfHeader {
    /// Position of the attribute that names each series.
    fn name_index(&self) -> Option<usize> {
        self.attributes
            .iter()
            .position(|a| a.name == "series_name")
            .or_else(|| {
                self.attributes
                    .iter()
                    .position(|a| a.kind == AttributeKind::String)
            })
    }

    fn timestamp_index(&self) -> Option<usize> {
        self.attributes
            .iter()
            .position(|a| a.kind == AttributeKind::Date)
    }
}

/// One univariate series. `None` entries are missing observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub name: String,
    pub start_timestamp: Option<NaiveDateTime>,
    /// Values of declared attributes other than the name and timestamp, in
    /// declaration order.
    pub extra: Vec<String>,
    pub values: Vec<Option<f64>>,
}

impl SeriesRecord {
    pub fn new(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Self {
            name: name.into(),
            start_timestamp: None,
            extra: Vec::new(),
            values,
        }
    }

    pub fn from_values(name: impl Into<String>, values: &[f64]) -> Self {
        Self::new(name, values.iter().copied().map(Some).collect())
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(Option::is_none)
    }

    /// Observed values; fails if any entry is missing.
    pub fn observed(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .map(|v| v.ok_or_else(|| Error::Data(format!("series `{}` has missing values", self.name))))
            .collect()
    }
}

/// Last-observation-carried-forward imputation; leading gaps take the first
/// observed value.
pub fn impute_missing(series: &SeriesRecord) -> Result<SeriesRecord> {
    let first = series
        .values
        .iter()
        .flatten()
        .next()
        .copied()
        .ok_or_else(|| Error::AllMissing(series.name.clone()))?;
    let mut last = first;
    let values = series
        .values
        .iter()
        .map(|v| {
            if let Some(v) = v {
                last = *v;
            }
            Some(last)
        })
        .collect();
    Ok(SeriesRecord {
        values,
        ..series.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub header: TsfHeader,
    pub series: Vec<SeriesRecord>,
}

impl Dataset {
    /// Builds a dataset whose meta is derived from the header: the
    /// `@horizon` line (or the frequency default) and the frequency's default lag.
    pub fn from_header(id: DatasetId, header: TsfHeader, series: Vec<SeriesRecord>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::NoSeries);
        }
        if let Some(s) = series.iter().find(|s| s.values.is_empty()) {
            return Err(Error::Data(format!("series `{}` is empty", s.name)));
        }
        let token = header
            .frequency
            .as_deref()
            .ok_or_else(|| Error::Data("header declares no @frequency".into()))?;
        let frequency = Frequency::from_token(token)
            .ok_or_else(|| Error::Data(format!("unrecognised frequency `{token}`")))?;
        let horizon = header.horizon.unwrap_or_else(|| frequency.default_horizon());
        let name = header.relation.clone().unwrap_or_else(|| id.0.clone());
        let meta = DatasetMeta::new(id, name, frequency, series.len(), frequency.default_lag(), horizon)?;
        Ok(Self { meta, header, series })
    }

    /// Builds a dataset with explicit lag and horizon, producing a matching header.
    pub fn with_config(
        id: DatasetId,
        frequency: Frequency,
        delta: usize,
        horizon: usize,
        series: Vec<SeriesRecord>,
    ) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::NoSeries);
        }
        let header = TsfHeader {
            relation: Some(id.0.clone()),
            attributes: vec![Attribute {
                name: "series_name".into(),
                kind: AttributeKind::String,
            }],
            frequency: Some(frequency.token().into()),
            horizon: Some(horizon),
            missing: Some(series.iter().any(SeriesRecord::has_missing)),
            equal_length: Some(series.windows(2).all(|w| w[0].values.len() == w[1].values.len())),
        };
        let meta = DatasetMeta::new(id.clone(), id.0, frequency, series.len(), delta, horizon)?;
        Ok(Self { meta, header, series })
    }

    /// Overrides lag and horizon (e.g. from a registry entry).
    pub fn with_lag_horizon(mut self, delta: usize, horizon: usize) -> Result<Self> {
        self.meta = DatasetMeta::new(
            self.meta.id.clone(),
            self.meta.name.clone(),
            self.meta.frequency,
            self.series.len(),
            delta,
            horizon,
        )?;
        Ok(self)
    }

    /// Copy with every series imputed.
    pub fn imputed(&self) -> Result<Self> {
        let series = self.series.iter().map(impute_missing).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            series,
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locf_fills_gaps() {
        let s = SeriesRecord::new("a", vec![Some(1.0), None, Some(3.0)]);
        assert_eq!(impute_missing(&s).unwrap().values, vec![Some(1.0), Some(1.0), Some(3.0)]);
    }

    #[test]
    fn leading_gaps_take_first_observation() {
        let s = SeriesRecord::new("a", vec![None, None, Some(5.0), None]);
        assert_eq!(impute_missing(&s).unwrap().values, vec![Some(5.0); 4]);
    }

    #[test]
    fn all_missing_is_rejected() {
        let s = SeriesRecord::new("lonely", vec![None, None]);
        match impute_missing(&s) {
            Err(Error::AllMissing(name)) => assert_eq!(name, "lonely"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn seasonality_inverts_lag_heuristic() {
        assert_eq!(seasonality_from_lag(15), 12);
        assert_eq!(seasonality_from_lag(65), 52);
        assert_eq!(seasonality_from_lag(9), 7);
        assert_eq!(seasonality_from_lag(2), 2);
        assert_eq!(seasonality_from_lag(1), 1);
    }

    #[test]
    fn single_series_meta_is_rejected() {
        assert!(DatasetMeta::new("x".into(), "x", Frequency::Daily, 1, 9, 14).is_err());
    }

    #[test]
    fn frequency_tokens() {
        assert_eq!(Frequency::from_token("10_minutes"), Some(Frequency::SubHourly));
        assert_eq!(Frequency::from_token("Monthly"), Some(Frequency::Monthly));
        assert_eq!(Frequency::from_token("fortnightly"), None);
    }
}
