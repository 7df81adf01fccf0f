//! AdamW, the one-cycle learning-rate schedule and parameter EMA.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Initial learning rate is `max_lr / DIV_FACTOR`.
pub const DIV_FACTOR: f64 = 25.0;
/// Final learning rate is `max_lr / FINAL_DIV_FACTOR`.
pub const FINAL_DIV_FACTOR: f64 = 1e4;

/// One AdamW update at 1-based step `t`. Weight decay is decoupled:
/// `p ← p − lr·m̂/(√v̂ + ε) − lr·wd·p`.
#[allow(clippy::too_many_arguments)]
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    weight_decay: f64,
    betas: (f64, f64),
    eps: f64,
) {
    debug_assert!(t >= 1);
    let (b1, b2) = betas;
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        let p = params[i];
        params[i] = p - lr * mh / (vh.sqrt() + eps) - lr * weight_decay * p;
    }
}

/// Fails with the tensor path when any gradient entry is NaN or infinite.
pub fn check_finite<'a>(grads: &[Vec<f64>], paths: impl IntoIterator<Item = &'a str>) -> Result<()> {
    for (g, p) in grads.iter().zip(paths) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(p.to_string()));
        }
    }
    Ok(())
}

/// Cosine warm-up from `max_lr/25` to `max_lr` over `warmup_fraction` of
/// the steps, then cosine annealing to `max_lr/1e4` at `step = total_steps`.
pub fn one_cycle_lr(step: u64, total_steps: u64, max_lr: f64, warmup_fraction: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::InvalidParameter("one-cycle schedule needs total_steps > 0".into()));
    }
    if !(0.0..=1.0).contains(&warmup_fraction) {
        return Err(Error::InvalidParameter(format!("warmup_fraction {warmup_fraction} outside [0, 1]")));
    }
    let s = step.min(total_steps) as f64;
    let total = total_steps as f64;
    let warm = warmup_fraction * total;
    let start = max_lr / DIV_FACTOR;
    let end = max_lr / FINAL_DIV_FACTOR;
    Ok(if s < warm {
        start + (max_lr - start) * 0.5 * (1.0 - (PI * s / warm).cos())
    } else if s == warm || total == warm {
        max_lr
    } else {
        end + (max_lr - end) * 0.5 * (1.0 + (PI * (s - warm) / (total - warm)).cos())
    })
}

/// `shadow ← decay·shadow + (1−decay)·params`.
pub fn ema_update(shadow: &mut [f64], params: &[f64], decay: f64) -> Result<()> {
    if shadow.len() != params.len() {
        return Err(Error::LengthMismatch(shadow.len(), params.len()));
    }
    for (s, p) in shadow.iter_mut().zip(params) {
        *s = decay * *s + (1.0 - decay) * p;
    }
    Ok(())
}
