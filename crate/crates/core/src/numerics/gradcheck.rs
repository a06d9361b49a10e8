use serde::Serialize;

use crate::error::{shape, Result};

/// A named flat parameter array together with its analytic gradient.
#[derive(Debug, Clone)]
pub struct ParamBlock {
    pub name: String,
    pub values: Vec<f64>,
    pub analytic: Vec<f64>,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, values: Vec<f64>, analytic: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
            analytic,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many evenly spaced coordinates per block.
    pub max_coords_per_block: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-6,
            max_coords_per_block: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a non-differentiable point.
    pub skipped: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| !b.flagged)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.blocks.iter().map(|b| b.checked).sum()
    }
}

/// Relative error with a unit floor on the denominator, so gradients near
/// zero are compared on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compares analytic gradients against central differences of `f`.
///
/// `f` receives the current values of every block and returns the objective,
/// or `None` if the evaluation point is not differentiable (for example a
/// ReLU pattern changed); such coordinates are skipped and counted.
pub fn finite_diff_check<F>(mut f: F, blocks: &[ParamBlock], options: GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&[Vec<f64>]) -> Option<f64>,
{
    for b in blocks {
        if b.values.len() != b.analytic.len() {
            return Err(shape(format!(
                "block `{}`: {} values but {} gradients",
                b.name,
                b.values.len(),
                b.analytic.len()
            )));
        }
    }
    let mut point: Vec<Vec<f64>> = blocks.iter().map(|b| b.values.clone()).collect();
    let h = options.step;
    let mut reports = Vec::with_capacity(blocks.len());
    for (bi, block) in blocks.iter().enumerate() {
        let n = block.values.len();
        let coords: Vec<usize> = match options.max_coords_per_block {
            Some(m) if m < n => (0..m).map(|j| j * n / m).collect(),
            _ => (0..n).collect(),
        };
        let mut report = BlockReport {
            name: block.name.clone(),
            max_rel_error: 0.0,
            checked: 0,
            skipped: 0,
            flagged: false,
        };
        for j in coords {
            let orig = point[bi][j];
            point[bi][j] = orig + h;
            let plus = f(&point);
            point[bi][j] = orig - h;
            let minus = f(&point);
            point[bi][j] = orig;
            match (plus, minus) {
                (Some(p), Some(m)) => {
                    let numeric = (p - m) / (2.0 * h);
                    let err = relative_error(block.analytic[j], numeric);
                    report.max_rel_error = report.max_rel_error.max(err);
                    report.checked += 1;
                }
                _ => report.skipped += 1,
            }
        }
        report.flagged = report.max_rel_error >= options.tolerance || report.max_rel_error.is_nan();
        reports.push(report);
    }
    Ok(GradCheckReport {
        tolerance: options.tolerance,
        blocks: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(p: &[Vec<f64>]) -> Option<f64> {
        // f(a, b) = sum a_i^2 + 3 a_0 b_0 + b_1^2 / 2
        let a = &p[0];
        let b = &p[1];
        Some(a.iter().map(|v| v * v).sum::<f64>() + 3.0 * a[0] * b[0] + 0.5 * b[1] * b[1])
    }

    #[test]
    fn quadratic_passes_tightly() {
        let a = vec![0.3, -1.2, 2.0];
        let b = vec![0.7, -0.4];
        let ga = vec![2.0 * a[0] + 3.0 * b[0], 2.0 * a[1], 2.0 * a[2]];
        let gb = vec![3.0 * a[0], b[1]];
        let blocks = vec![ParamBlock::new("a", a, ga), ParamBlock::new("b", b, gb)];
        let r = finite_diff_check(quadratic, &blocks, GradCheckOptions::default()).unwrap();
        assert!(r.passed());
        assert!(r.max_rel_error() < 1e-8, "{}", r.max_rel_error());
        assert_eq!(r.checked(), 5);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let blocks = vec![ParamBlock::new("c", vec![1.0, 2.0], vec![0.0, 0.0])];
        let r = finite_diff_check(|_| Some(4.2), &blocks, GradCheckOptions::default()).unwrap();
        assert_eq!(r.max_rel_error(), 0.0);
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let a = vec![0.3, -1.2, 2.0];
        let b = vec![0.7, -0.4];
        let mut ga = vec![2.0 * a[0] + 3.0 * b[0], 2.0 * a[1], 2.0 * a[2]];
        ga[1] += 0.01;
        let gb = vec![3.0 * a[0], b[1]];
        let blocks = vec![ParamBlock::new("a", a, ga), ParamBlock::new("b", b, gb)];
        let r = finite_diff_check(quadratic, &blocks, GradCheckOptions::default()).unwrap();
        assert!(!r.passed());
        assert!(r.blocks[0].flagged);
        assert!(!r.blocks[1].flagged);
    }

    #[test]
    fn non_differentiable_points_are_skipped() {
        let blocks = vec![ParamBlock::new("x", vec![0.0, 1.0], vec![0.0, 1.0])];
        let r = finite_diff_check(
            |p| if p[0][0].abs() < 1e-3 && p[0][0] != 0.0 { None } else { Some(p[0][1]) },
            &blocks,
            GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(r.blocks[0].skipped, 1);
        assert_eq!(r.blocks[0].checked, 1);
    }
}
