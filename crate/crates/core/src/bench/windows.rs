//! Sliding-window (input, target) samples.

use serde::{Deserialize, Serialize};

use crate::tsf::DatasetId;

/// One supervised window tagged with its origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub dataset: DatasetId,
    pub series: usize,
    /// Index of `x[0]` in the source series.
    pub offset: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Sample {
    /// One past the last series index covered by the window.
    pub fn end(&self) -> usize {
        self.offset + self.x.len() + self.y.len()
    }
}

/// Window start offsets `0, stride, 2 stride, ...` plus the final offset.
pub fn window_offsets(len: usize, delta: usize, horizon: usize, stride: usize) -> Vec<usize> {
    let span = delta + horizon;
    if delta == 0 || horizon == 0 || len < span {
        return Vec::new();
    }
    let last = len - span;
    let mut offsets: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if offsets.last() != Some(&last) {
        offsets.push(last);
    }
    offsets
}

/// Windows over one series. Series shorter than `delta + horizon` give none.
pub fn make_windows(
    dataset: &DatasetId,
    series: usize,
    values: &[f64],
    delta: usize,
    horizon: usize,
    stride: usize,
) -> Vec<Sample> {
    window_offsets(values.len(), delta, horizon, stride)
        .into_iter()
        .map(|o| Sample {
            dataset: dataset.clone(),
            series,
            offset: o,
            x: values[o..o + delta].to_vec(),
            y: values[o + delta..o + delta + horizon].to_vec(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id() -> DatasetId {
        DatasetId::new("d")
    }

    #[test]
    fn basic_windows() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        let w = make_windows(&id(), 0, &v, 2, 1, 1);
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].x, vec![1.0, 2.0]);
        assert_eq!(w[0].y, vec![3.0]);
        assert_eq!(w[2].end(), 5);
    }

    #[test]
    fn exact_length_and_short() {
        assert_eq!(make_windows(&id(), 0, &[1.0, 2.0, 3.0], 2, 1, 1).len(), 1);
        assert!(make_windows(&id(), 0, &[1.0, 2.0], 2, 1, 1).is_empty());
    }

    #[test]
    fn final_window_off_stride() {
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        let offs: Vec<usize> = make_windows(&id(), 0, &v, 3, 2, 3).iter().map(|s| s.offset).collect();
        assert_eq!(offs, vec![0, 3, 5]);
    }

    proptest! {
        #[test]
        fn count_matches_enumeration(len in 0usize..60, delta in 1usize..10, h in 1usize..6, stride in 1usize..5) {
            let v: Vec<f64> = (0..len).map(|i| i as f64).collect();
            let w = make_windows(&id(), 0, &v, delta, h, stride);
            let mut brute = Vec::new();
            let mut o = 0;
            while o + delta + h <= len {
                brute.push(o);
                o += stride;
            }
            if len >= delta + h && *brute.last().unwrap() != len - delta - h {
                brute.push(len - delta - h);
            }
            let got: Vec<usize> = w.iter().map(|s| s.offset).collect();
            prop_assert_eq!(got, brute);
            for s in &w {
                prop_assert_eq!(s.x[0], s.offset as f64);
                prop_assert!(s.end() <= len);
            }
        }
    }
}
