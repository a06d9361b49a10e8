//! Observed-prefix truncation, validation splits and the sample sets the
//! trainer consumes.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::windows::make_windows;
use crate::error::{Error, Result};
use crate::trainer::{TaskData, ValidationWindow};
use crate::tsf::{Dataset, DatasetMeta};

/// A target dataset cut into what is observed and what is held out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtsfTask {
    /// Meta of the kept series; `series_count` excludes dropped ones.
    pub meta: DatasetMeta,
    pub prefix_length: usize,
    pub series_names: Vec<String>,
    pub observed: Vec<Vec<f64>>,
    pub test_targets: Vec<Vec<f64>>,
    /// Series too short for `prefix_length + horizon`.
    pub dropped: usize,
}

impl EtsfTask {
    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// The last `delta` observed values of every series.
    pub fn test_inputs(&self) -> Vec<Vec<f64>> {
        let d = self.meta.delta;
        self.observed.iter().map(|o| o[o.len() - d..].to_vec()).collect()
    }
}

pub fn truncate_for_etsf(dataset: &Dataset, prefix_length: usize) -> Result<EtsfTask> {
    let meta = &dataset.meta;
    let h = meta.horizon;
    if prefix_length < meta.delta + h {
        return Err(Error::Config(format!(
            "dataset `{}`: prefix length {prefix_length} is shorter than lag + horizon ({})",
            meta.id,
            meta.delta + h
        )));
    }
    let mut names = Vec::new();
    let mut observed = Vec::new();
    let mut targets = Vec::new();
    let mut dropped = 0;
    for s in &dataset.series {
        if s.values.len() < prefix_length + h {
            dropped += 1;
            continue;
        }
        let values = s.observed()?;
        names.push(s.name.clone());
        observed.push(values[..prefix_length].to_vec());
        targets.push(values[prefix_length..prefix_length + h].to_vec());
    }
    if observed.is_empty() {
        return Err(Error::Data(format!(
            "dataset `{}`: every series is shorter than {}",
            meta.id,
            prefix_length + h
        )));
    }
    if dropped > 0 {
        log::warn!("dataset `{}`: dropped {dropped} short series", meta.id);
    }
    let meta = DatasetMeta::new(meta.id.clone(), meta.name.clone(), meta.frequency, observed.len(), meta.delta, h)
        .map(|m| DatasetMeta {
            seasonality: dataset.meta.seasonality,
            ..m
        })?;
    Ok(EtsfTask {
        meta,
        prefix_length,
        series_names: names,
        observed,
        test_targets: targets,
        dropped,
    })
}

/// Series indices used for training and for early-stopping validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

pub fn validation_count(series: usize) -> usize {
    ((series as f64 * 0.1).round() as usize).max(1)
}

/// Draws `max(1, round(0.1 M))` validation series without replacement.
pub fn split_validation(task: &EtsfTask, seed: u64) -> Result<ValidationSplit> {
    let m = task.len();
    let k = validation_count(m);
    if k >= m {
        return Err(Error::Data(format!(
            "dataset `{}` has {m} usable series; at least 2 are needed to hold one out",
            task.meta.id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut validation = sample(&mut rng, m, k).into_vec();
    validation.sort_unstable();
    let train = (0..m).filter(|i| validation.binary_search(i).is_err()).collect();
    Ok(ValidationSplit { train, validation })
}

/// Support windows from the training series' prefixes and the final prefix
/// window of each validation series.
pub fn target_task_data(task: &EtsfTask, split: &ValidationSplit, stride: usize) -> Result<TaskData> {
    let meta = &task.meta;
    let (d, h) = (meta.delta, meta.horizon);
    let mut train = Vec::new();
    for &j in &split.train {
        train.extend(make_windows(&meta.id, j, &task.observed[j], d, h, stride));
    }
    let validation = split
        .validation
        .iter()
        .map(|&j| {
            let o = &task.observed[j];
            let p = o.len();
            ValidationWindow {
                series: j,
                input: o[p - h - d..p - h].to_vec(),
                target: o[p - h..].to_vec(),
                prefix: o[..p - h].to_vec(),
            }
        })
        .collect();
    TaskData::new(meta.clone(), train, validation)
}

/// Every window of every series of a fully observed auxiliary dataset.
pub fn auxiliary_task_data(dataset: &Dataset, stride: usize) -> Result<TaskData> {
    let meta = &dataset.meta;
    let mut train = Vec::new();
    for (j, s) in dataset.series.iter().enumerate() {
        let values = s.observed()?;
        train.extend(make_windows(&meta.id, j, &values, meta.delta, meta.horizon, stride));
    }
    TaskData::new(meta.clone(), train, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsf::{DatasetId, Frequency, SeriesRecord};

    fn dataset(lengths: &[usize], delta: usize, h: usize) -> Dataset {
        let series = lengths
            .iter()
            .enumerate()
            .map(|(i, &n)| SeriesRecord::from_values(format!("T{i}"), &(1..=n).map(|v| v as f64).collect::<Vec<_>>()))
            .collect();
        Dataset::with_config(DatasetId::new("d"), Frequency::Daily, delta, h, series).unwrap()
    }

    #[test]
    fn truncation_example() {
        let t = truncate_for_etsf(&dataset(&[10, 8], 2, 2), 6).unwrap();
        assert_eq!(t.observed[0], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(t.test_targets[0], vec![7.0, 8.0]);
        assert_eq!(t.len(), 2);
        assert_eq!(t.dropped, 0);
        assert_eq!(t.test_inputs()[1], vec![5.0, 6.0]);
    }

    #[test]
    fn drop_count_matches_filter() {
        let lengths = [5, 12, 7, 8, 30, 3, 9, 8];
        let t = truncate_for_etsf(&dataset(&lengths, 2, 2), 6).unwrap();
        let brute = lengths.iter().filter(|&&n| n < 8).count();
        assert_eq!(t.dropped, brute);
        assert_eq!(t.len(), lengths.len() - brute);
        assert!(truncate_for_etsf(&dataset(&[5, 6], 2, 2), 6).is_err());
        assert!(truncate_for_etsf(&dataset(&[10, 10], 5, 2), 6).is_err());
    }

    #[test]
    fn validation_sizes() {
        assert_eq!(validation_count(10), 1);
        assert_eq!(validation_count(5), 1);
        assert_eq!(validation_count(107), 11);
        let t = truncate_for_etsf(&dataset(&[20; 107], 2, 2), 6).unwrap();
        let s = split_validation(&t, 3).unwrap();
        assert_eq!(s.validation.len(), 11);
        assert_eq!(s.train.len(), 96);
        assert_eq!(s, split_validation(&t, 3).unwrap());
    }

    #[test]
    fn support_stays_inside_prefix() {
        let t = truncate_for_etsf(&dataset(&[20; 10], 3, 2), 9).unwrap();
        let split = split_validation(&t, 0).unwrap();
        let data = target_task_data(&t, &split, 1).unwrap();
        // 9 train series, 9 - 5 + 1 windows each
        assert_eq!(data.train.len(), 9 * 5);
        assert!(data.train.iter().all(|s| s.end() <= 9 && !split.validation.contains(&s.series)));
        let v = &data.validation[0];
        assert_eq!(v.input, vec![5.0, 6.0, 7.0]);
        assert_eq!(v.target, vec![8.0, 9.0]);
    }
}
