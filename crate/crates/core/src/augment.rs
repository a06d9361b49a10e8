//! FGSM adversarial samples for the target dataset and the weighted
//! clean + adversarial loss.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::numerics::{mae_loss, sign};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarialConfig {
    /// Absolute perturbation size per coordinate.
    pub epsilon: f64,
    /// Weight of the adversarial loss term.
    pub weight: f64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            weight: 1.0,
        }
    }
}

impl AdversarialConfig {
    pub const DISABLED: AdversarialConfig = AdversarialConfig {
        epsilon: 0.0,
        weight: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::Config(format!("adversarial weight must be >= 0, got {}", self.weight)));
        }
        Ok(())
    }
}

/// `x' = x + epsilon * sign(grad_x)`, with `sign(0) = 0`.
pub fn fgsm_perturb(x: &[f64], grad_x: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if x.len() != grad_x.len() {
        return Err(shape(format!("fgsm: {} inputs vs {} gradients", x.len(), grad_x.len())));
    }
    Ok(x.iter().zip(grad_x).map(|(x, g)| x + epsilon * sign(*g)).collect())
}

/// `MAE(y, y_hat) + w * MAE(y, y_hat_adv)`.
pub fn adversarial_loss(y: &[f64], y_hat: &[f64], y_hat_adv: &[f64], weight: f64) -> Result<f64> {
    Ok(mae_loss(y_hat, y)? + weight * mae_loss(y_hat_adv, y)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_epsilon_is_identity() {
        let x = [0.1, -2.0, 3.5];
        assert_eq!(fgsm_perturb(&x, &[1.0, -1.0, 0.0], 0.0).unwrap(), x.to_vec());
    }

    #[test]
    fn sign_convention() {
        let got = fgsm_perturb(&[1.0, 1.0, 1.0], &[2.0, -3.0, 0.0], 0.1).unwrap();
        assert_eq!(got, vec![1.1, 0.9, 1.0]);
        assert!(fgsm_perturb(&[1.0], &[1.0, 2.0], 0.1).is_err());
    }

    /// One-parameter model y_hat = a * x on a single input: the loss
    /// |a x - y| grows when x moves along sign(d loss / d x) by less than
    /// the residual allows.
    #[test]
    fn ascent_on_scalar_linear_model() {
        for &(a, x, y) in &[(2.0, 1.0, 0.5), (-1.5, 0.3, 2.0), (0.7, -2.0, -3.0), (3.0, 1.0, 3.5)] {
            let loss = |x: f64| (a * x - y as f64).abs();
            let residual = a * x - y;
            let grad_x = sign(residual) * a;
            for eps in [1e-3, 0.01, 0.1] {
                if eps * a.abs() >= residual.abs() {
                    continue;
                }
                let xp = fgsm_perturb(&[x], &[grad_x], eps).unwrap()[0];
                assert!(loss(xp) >= loss(x));
                assert!((loss(xp) - loss(x) - eps * a.abs()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_reductions() {
        let y = [1.0, 2.0];
        let yh = [1.5, 1.0];
        let ya = [0.0, 2.0];
        assert_eq!(adversarial_loss(&y, &yh, &ya, 0.0).unwrap(), mae_loss(&yh, &y).unwrap());
        assert_eq!(adversarial_loss(&y, &yh, &yh, 0.5).unwrap(), 1.5 * mae_loss(&yh, &y).unwrap());
        // 0.75 + 2 * 0.5
        assert_eq!(adversarial_loss(&y, &yh, &ya, 2.0).unwrap(), 1.75);
        assert!(adversarial_loss(&y, &yh, &[1.0], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn perturbation_bounded_by_epsilon(
            xs in prop::collection::vec((-100.0f64..100.0, -5.0f64..5.0), 1..40),
            eps in 0.0f64..2.0,
        ) {
            let (x, g): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
            let xp = fgsm_perturb(&x, &g, eps).unwrap();
            for (a, b) in x.iter().zip(&xp) {
                let d = (a - b).abs();
                prop_assert!(d <= eps * (1.0 + 1e-12) + 1e-12);
            }
        }

        #[test]
        fn adversarial_loss_matches_formula(
            rows in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 1..20),
            w in 0.0f64..3.0,
        ) {
            let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let a: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let b: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let n = y.len() as f64;
            let mut clean = 0.0;
            let mut adv = 0.0;
            for i in 0..y.len() {
                clean += (y[i] - a[i]).abs();
                adv += (y[i] - b[i]).abs();
            }
            let want = clean / n + w * adv / n;
            prop_assert!((adversarial_loss(&y, &a, &b, w).unwrap() - want).abs() < 1e-9);
        }
    }
}
