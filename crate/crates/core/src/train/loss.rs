//! Classification losses with their gradients w.r.t. the logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss selected in the training configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    SmoothedCe,
    Bce,
}

/// A loss with its parameters bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    /// Cross-entropy against `(1−ε)·t + ε/C`.
    SmoothedCe { smoothing: f64 },
    /// Mean binary cross-entropy over classes.
    Bce,
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 classes, got {}", logits.len())));
    }
    Ok(())
}

fn check_targets(logits: &[f64], target: &[f64]) -> Result<()> {
    check_logits(logits)?;
    if target.len() != logits.len() {
        return Err(Error::LengthMismatch(logits.len(), target.len()));
    }
    if let Some(t) = target.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidParameter(format!("target {t} outside [0, 1]")));
    }
    Ok(())
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Label-smoothed cross-entropy for a hard class index.
pub fn smoothed_ce_loss(logits: &[f64], class: usize, smoothing: f64) -> Result<f64> {
    check_logits(logits)?;
    if class >= logits.len() {
        return Err(Error::InvalidParameter(format!("class {class} out of range for {} logits", logits.len())));
    }
    let mut t = vec![0.0; logits.len()];
    t[class] = 1.0;
    Ok(smoothed_ce(logits, &t, smoothing)?.0)
}

/// Label-smoothed cross-entropy against a soft target, with gradient.
pub fn smoothed_ce(logits: &[f64], target: &[f64], smoothing: f64) -> Result<(f64, Vec<f64>)> {
    check_targets(logits, target)?;
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::InvalidParameter(format!("label smoothing {smoothing} outside [0, 1)")));
    }
    let c = logits.len() as f64;
    let ts: Vec<f64> = target.iter().map(|t| (1.0 - smoothing) * t + smoothing / c).collect();
    let lp = log_softmax(logits);
    let loss = -ts.iter().zip(&lp).map(|(t, l)| t * l).sum::<f64>();
    let mass: f64 = ts.iter().sum();
    let grad = lp.iter().zip(&ts).map(|(l, t)| l.exp() * mass - t).collect();
    Ok((loss, grad))
}

/// Mean over classes of `−[t·log σ(z) + (1−t)·log(1−σ(z))]`, evaluated as
/// `max(z, 0) − z·t + log(1 + e^{−|z|})`.
pub fn bce_loss(logits: &[f64], target: &[f64]) -> Result<f64> {
    Ok(bce(logits, target)?.0)
}

pub fn bce(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_targets(logits, target)?;
    let c = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(target) {
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - t) / c);
    }
    Ok((loss / c, grad))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Loss {
    pub fn value_grad(&self, logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        match *self {
            Loss::SmoothedCe { smoothing } => smoothed_ce(logits, target, smoothing),
            Loss::Bce => bce(logits, target),
        }
    }

    pub fn value(&self, logits: &[f64], target: &[f64]) -> Result<f64> {
        Ok(self.value_grad(logits, target)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_c() {
        for c in [2usize, 3, 50] {
            let z = vec![0.37; c];
            for k in [0, c - 1] {
                let l = smoothed_ce_loss(&z, k, 0.1).unwrap();
                assert!((l - (c as f64).ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothing_target_mass() {
        // Gradient at the correct class is p − t' with p = 1/C.
        let z = vec![0.0; 50];
        let mut t = vec![0.0; 50];
        t[4] = 1.0;
        let (_, g) = smoothed_ce(&z, &t, 0.1).unwrap();
        assert!((g[4] - (1.0 / 50.0 - 0.902)).abs() < 1e-12);
        assert!((g[0] - (1.0 / 50.0 - 0.002)).abs() < 1e-12);
    }

    #[test]
    fn zero_smoothing_is_plain_ce() {
        let z = [1.0, -2.0, 0.5];
        let l = smoothed_ce_loss(&z, 2, 0.0).unwrap();
        let lse = z.iter().map(|v: &f64| v.exp()).sum::<f64>().ln();
        assert!((l - (lse - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn bce_closed_forms() {
        let l = bce_loss(&[0.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let z = [1.3, -0.4, 2.0];
        let t: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let (_, g) = bce(&z, &t).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        let (l, g) = bce(&[800.0, -800.0], &[0.0, 1.0]).unwrap();
        assert!((l - 800.0).abs() < 1e-9);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_inputs() {
        assert!(smoothed_ce_loss(&[0.0, 0.0], 2, 0.1).is_err());
        assert!(smoothed_ce_loss(&[0.0], 0, 0.1).is_err());
        assert!(bce_loss(&[0.0, 0.0], &[1.5, 0.0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let z = vec![0.3, -1.2, 2.2, 0.1];
        let t = vec![0.2, 0.0, 0.7, 0.1];
        for loss in [Loss::SmoothedCe { smoothing: 0.1 }, Loss::Bce] {
            let (_, g) = loss.value_grad(&z, &t).unwrap();
            for i in 0..z.len() {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += 1e-6;
                zm[i] -= 1e-6;
                let num = (loss.value(&zp, &t).unwrap() - loss.value(&zm, &t).unwrap()) / 2e-6;
                assert!((num - g[i]).abs() < 1e-8, "{loss:?} {i}");
            }
        }
    }
}
