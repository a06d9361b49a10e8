//! Per-series MASE against the seasonal naive forecast.

use serde::{Deserialize, Serialize};

use crate::baselines::naive_forecast;
use crate::error::{shape, Error, Result};
use crate::numerics::mae_loss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaseScore {
    pub mase: f64,
    /// Series skipped because the naive forecast was exact.
    pub excluded: usize,
    /// Per-series ratio, `None` where excluded.
    pub ratios: Vec<Option<f64>>,
}

pub fn compute_mase(
    forecasts: &[Vec<f64>],
    targets: &[Vec<f64>],
    observed: &[Vec<f64>],
    seasonality: usize,
) -> Result<MaseScore> {
    if forecasts.len() != targets.len() || targets.len() != observed.len() {
        return Err(shape(format!(
            "mase: {} forecasts, {} targets, {} prefixes",
            forecasts.len(),
            targets.len(),
            observed.len()
        )));
    }
    let mut ratios = Vec::with_capacity(targets.len());
    let mut sum = 0.0;
    let mut kept = 0usize;
    for ((f, y), x) in forecasts.iter().zip(targets).zip(observed) {
        let naive = naive_forecast(x, y.len(), seasonality)?;
        let denom = mae_loss(&naive, y)?;
        let num = mae_loss(f, y)?;
        if denom == 0.0 {
            ratios.push(None);
        } else {
            let r = num / denom;
            sum += r;
            kept += 1;
            ratios.push(Some(r));
        }
    }
    if kept == 0 {
        return Err(Error::Data("every naive MASE denominator is zero".into()));
    }
    Ok(MaseScore {
        mase: sum / kept as f64,
        excluded: ratios.len() - kept,
        ratios,
    })
}
