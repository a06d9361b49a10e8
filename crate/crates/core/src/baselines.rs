//! Mean and seasonal-naive forecasts. The naive forecast is also the MASE
//! denominator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Mean,
    Naive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineForecast {
    pub method: BaselineMethod,
    pub values: Vec<f64>,
}

/// Repeats the input mean over the horizon.
pub fn mean_forecast(x: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Data("mean forecast of an empty input".into()));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    Ok(vec![mean; horizon])
}

/// Tiles the last season of `x` over the horizon. A season longer than the
/// input degrades to the whole input.
pub fn naive_forecast(x: &[f64], horizon: usize, seasonality: usize) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Data("naive forecast of an empty input".into()));
    }
    if seasonality == 0 {
        return Err(Error::Config("seasonality must be at least 1".into()));
    }
    let season = &x[x.len() - seasonality.min(x.len())..];
    Ok((0..horizon).map(|t| season[t % season.len()]).collect())
}

pub fn baseline_forecast(method: BaselineMethod, x: &[f64], horizon: usize, seasonality: usize) -> Result<BaselineForecast> {
    let values = match method {
        BaselineMethod::Mean => mean_forecast(x, horizon)?,
        BaselineMethod::Naive => naive_forecast(x, horizon, seasonality)?,
    };
    Ok(BaselineForecast { method, values })
}
