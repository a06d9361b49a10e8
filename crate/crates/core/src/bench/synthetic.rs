//! Seeded synthetic datasets for tests and benchmarks.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsf::{Dataset, DatasetId, Frequency, SeriesRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `level_j + a_j sin(2 pi t / period + phase_j) + noise`, with
    /// `a_j ~ amplitude * U(0.5, 1.5)` and `level_j ~ level * U(-1, 1)`.
    Sinusoid {
        period: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        level: f64,
        #[serde(default)]
        noise: f64,
    },
    /// `a_j + b_j t + noise` with `a_j ~ U(-1, 1)`, `b_j ~ U(-slope, slope)`.
    Trend {
        slope: f64,
        #[serde(default)]
        noise: f64,
    },
    /// `y_t = coefficient * y_{t-1} + noise * e_t`, started at `e_0`.
    Ar1 {
        coefficient: f64,
        #[serde(default = "one")]
        noise: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub id: String,
    #[serde(flatten)]
    pub family: Family,
    pub series: usize,
    pub length: usize,
    pub delta: usize,
    pub horizon: usize,
    #[serde(default = "default_frequency")]
    pub frequency: Frequency,
}

fn default_frequency() -> Frequency {
    Frequency::Daily
}

impl SyntheticSpec {
    pub fn sinusoid(id: impl Into<String>, period: f64, series: usize, length: usize, delta: usize, horizon: usize) -> Self {
        Self {
            id: id.into(),
            family: Family::Sinusoid {
                period,
                amplitude: 1.0,
                level: 0.0,
                noise: 0.0,
            },
            series,
            length,
            delta,
            horizon,
            frequency: Frequency::Daily,
        }
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    if spec.length == 0 {
        return Err(Error::Config(format!("synthetic `{}`: length must be positive", spec.id)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = |rng: &mut ChaCha8Rng, scale: f64| -> f64 {
        if scale == 0.0 {
            0.0
        } else {
            scale * rng.sample::<f64, _>(StandardNormal)
        }
    };
    let mut series = Vec::with_capacity(spec.series);
    for j in 0..spec.series {
        let values: Vec<f64> = match spec.family {
            Family::Sinusoid {
                period,
                amplitude,
                level,
                noise: sigma,
            } => {
                if !(period > 0.0) {
                    return Err(Error::Config("sinusoid period must be positive".into()));
                }
                let a = amplitude * rng.gen_range(0.5..1.5);
                let phase = rng.gen_range(0.0..TAU);
                let base = level * rng.gen_range(-1.0..1.0);
                (0..spec.length)
                    .map(|t| base + a * (TAU * t as f64 / period + phase).sin() + noise(&mut rng, sigma))
                    .collect()
            }
            Family::Trend { slope, noise: sigma } => {
                let a = rng.gen_range(-1.0..1.0);
                let b = if slope > 0.0 { rng.gen_range(-slope..slope) } else { 0.0 };
                (0..spec.length).map(|t| a + b * t as f64 + noise(&mut rng, sigma)).collect()
            }
            Family::Ar1 {
                coefficient,
                noise: sigma,
            } => {
                let mut y = noise(&mut rng, sigma);
                let mut out = Vec::with_capacity(spec.length);
                out.push(y);
                for _ in 1..spec.length {
                    y = coefficient * y + noise(&mut rng, sigma);
                    out.push(y);
                }
                out
            }
        };
        series.push(SeriesRecord::from_values(format!("T{}", j + 1), &values));
    }
    Dataset::with_config(DatasetId::new(spec.id.clone()), spec.frequency, spec.delta, spec.horizon, series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(ds: &Dataset, j: usize) -> Vec<f64> {
        ds.series[j].observed().unwrap()
    }

    #[test]
    fn noiseless_sinusoid_is_periodic() {
        let ds = gen_synthetic(&SyntheticSpec::sinusoid("s", 8.0, 5, 64, 12, 6), 1).unwrap();
        assert_eq!(ds.meta.series_count, 5);
        assert_eq!((ds.meta.delta, ds.meta.horizon), (12, 6));
        for j in 0..5 {
            let v = values(&ds, j);
            for t in 8..64 {
                assert!((v[t] - v[t - 8]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn seeded() {
        let spec = SyntheticSpec {
            family: Family::Trend {
                slope: 0.5,
                noise: 0.1,
            },
            ..SyntheticSpec::sinusoid("t", 1.0, 3, 30, 4, 2)
        };
        assert_eq!(gen_synthetic(&spec, 4).unwrap(), gen_synthetic(&spec, 4).unwrap());
        assert_ne!(gen_synthetic(&spec, 4).unwrap(), gen_synthetic(&spec, 5).unwrap());
    }

    #[test]
    fn white_noise_autocorrelation_is_small() {
        let spec = SyntheticSpec {
            family: Family::Ar1 {
                coefficient: 0.0,
                noise: 1.0,
            },
            ..SyntheticSpec::sinusoid("w", 1.0, 2, 20_000, 4, 2)
        };
        let v = values(&gen_synthetic(&spec, 9).unwrap(), 0);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let lag1 = v.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / n;
        // Standard error of the lag-1 autocorrelation is 1/sqrt(n).
        assert!((lag1 / var).abs() < 4.0 / n.sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn spec_json_shape() {
        let raw = r#"{"id":"s","family":"sinusoid","period":6,"noise":0.1,"series":4,"length":40,"delta":12,"horizon":6}"#;
        let spec: SyntheticSpec = serde_json::from_str(raw).unwrap();
        assert_eq!(
            spec.family,
            Family::Sinusoid {
                period: 6.0,
                amplitude: 1.0,
                level: 0.0,
                noise: 0.1
            }
        );
        assert_eq!(spec.frequency, Frequency::Daily);
    }
}
