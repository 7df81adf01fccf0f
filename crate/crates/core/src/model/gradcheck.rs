//! Central finite-difference checks of the hand-written adjoints.
//!
//! A layer `y = f(θ, x)` is reduced to the scalar `L = ⟨r, y⟩` with a fixed
//! random `r`; the analytic gradients w.r.t. every parameter and every
//! input entry are compared against `(L(·+ε) − L(·−ε)) / 2ε`.

use rand::Rng;

use super::blocks::{DilatedResidual, DownsampleBlock, ModifiedResidual, PlainResidual};
use super::layers::{gelu_backward, gelu_forward, ChannelNorm, Conv1d, DepthwiseConv1d, LayerNorm, Linear, LowpassDecimate};
use super::params::{Grads, ParamSet};
use super::tensor::{dot, Mat};
use super::transformer::{Encoder, EncoderLayer};
use super::EatModel;
use crate::error::Result;
use crate::parallel::Execution;
use crate::rng::rng_from;
use crate::train::loss::Loss;

/// Step used by every check.
pub const EPS: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradReport {
    fn merge(&mut self, other: GradReport) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.checked += other.checked;
    }
}

fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = rng_from(seed, &[0x6763]);
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Randomizes every parameter so that no gradient is trivially zero.
fn randomize(ps: &mut ParamSet, seed: u64) {
    let mut rng = rng_from(seed, &[0x7273]);
    for p in ps.params_mut() {
        for v in p.data.iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
}

/// Checks a layer given its forward map and a backward map that returns
/// `dL/dx` and accumulates parameter gradients.
pub fn check_layer<F, B>(ps: &mut ParamSet, x: &Mat, forward: F, backward: B) -> GradReport
where
    F: Fn(&ParamSet, &Mat) -> Mat,
    B: Fn(&ParamSet, &Mat, &Mat, &mut Grads) -> Mat,
{
    let y = forward(ps, x);
    let r = random_mat(y.rows, y.cols, 99);
    let scalar = |ps: &ParamSet, x: &Mat| dot(&forward(ps, x).data, &r.data);
    let mut g = Grads::zeros_like(ps);
    let dx = backward(ps, x, &r, &mut g);
    let mut report = GradReport { max_rel_error: 0.0, checked: 0 };
    for pi in 0..ps.len() {
        for j in 0..ps.params()[pi].data.len() {
            let orig = ps.params()[pi].data[j];
            ps.params_mut()[pi].data[j] = orig + EPS;
            let lp = scalar(ps, x);
            ps.params_mut()[pi].data[j] = orig - EPS;
            let lm = scalar(ps, x);
            ps.params_mut()[pi].data[j] = orig;
            let num = (lp - lm) / (2.0 * EPS);
            report.max_rel_error = report.max_rel_error.max(rel_error(g.data[pi][j], num));
            report.checked += 1;
        }
    }
    let mut xp = x.clone();
    for j in 0..x.data.len() {
        let orig = xp.data[j];
        xp.data[j] = orig + EPS;
        let lp = scalar(ps, &xp);
        xp.data[j] = orig - EPS;
        let lm = scalar(ps, &xp);
        xp.data[j] = orig;
        let num = (lp - lm) / (2.0 * EPS);
        report.max_rel_error = report.max_rel_error.max(rel_error(dx.data[j], num));
        report.checked += 1;
    }
    report
}

/// Gradient checks of every layer primitive, block and the encoder.
pub fn layer_reports(seed: u64) -> Vec<(&'static str, GradReport)> {
    let mut out = Vec::new();
    let x = random_mat(3, 23, seed);

    let mut ps = ParamSet::new(seed, true);
    let l = Conv1d::new(&mut ps, "c", 3, 4, 5, 2, false);
    out.push(("conv1d", check_layer(&mut ps, &x, |p, x| l.forward(p, x), |p, x, dy, g| l.backward(p, x, dy, g))));

    let mut ps = ParamSet::new(seed, true);
    let l = Conv1d::new(&mut ps, "pw", 3, 5, 1, 1, false);
    out.push(("pointwise_conv", check_layer(&mut ps, &x, |p, x| l.forward(p, x), |p, x, dy, g| l.backward(p, x, dy, g))));

    let mut ps = ParamSet::new(seed, true);
    let l = DepthwiseConv1d::new(&mut ps, "dw", 3, 7, 1);
    out.push(("depthwise_conv", check_layer(&mut ps, &x, |p, x| l.forward(p, x), |p, x, dy, g| l.backward(p, x, dy, g))));

    let mut ps = ParamSet::new(seed, true);
    let l = ChannelNorm::new(&mut ps, "n", 3);
    randomize(&mut ps, seed);
    out.push((
        "channel_norm",
        check_layer(
            &mut ps,
            &x,
            |p, x| l.forward(p, x).0,
            |p, x, dy, g| {
                let (_, c) = l.forward(p, x);
                l.backward(p, &c, dy, g)
            },
        ),
    ));

    let xt = random_mat(4, 8, seed + 1);
    let mut ps = ParamSet::new(seed, true);
    let l = LayerNorm::new(&mut ps, "ln", 8);
    randomize(&mut ps, seed);
    out.push((
        "layer_norm",
        check_layer(
            &mut ps,
            &xt,
            |p, x| l.forward(p, x).0,
            |p, x, dy, g| {
                let (_, c) = l.forward(p, x);
                l.backward(p, &c, dy, g)
            },
        ),
    ));

    let mut ps = ParamSet::new(seed, true);
    out.push(("gelu", check_layer(&mut ps, &x, |_, x| gelu_forward(x), |_, x, dy, _| gelu_backward(x, dy))));

    let mut ps = ParamSet::new(seed, true);
    let l = Linear::new(&mut ps, "lin", 8, 6, false);
    out.push(("linear", check_layer(&mut ps, &xt, |p, x| l.forward(p, x), |p, x, dy, g| l.backward(p, x, dy, g))));

    let mut ps = ParamSet::new(seed, true);
    let l = LowpassDecimate::new(4);
    out.push(("lowpass_decimate", check_layer(&mut ps, &x, |_, x| l.forward(x), |_, x, dy, _| l.backward(dy, x.cols))));

    let mut ps = ParamSet::new(seed, true);
    let l = DownsampleBlock::new(&mut ps, "down", 3, 4, 3, 2);
    out.push((
        "downsample_block",
        check_layer(
            &mut ps,
            &x,
            |p, x| l.forward(p, x).0,
            |p, x, dy, g| {
                let (_, c) = l.forward(p, x);
                l.backward(p, &c, dy, g)
            },
        ),
    ));

    let mut ps = ParamSet::new(seed, true);
    let l = ModifiedResidual::new(&mut ps, "res", 3, 5, 2, false);
    randomize(&mut ps, seed);
    out.push((
        "modified_residual",
        check_layer(
            &mut ps,
            &x,
            |p, x| l.forward(p, x).0,
            |p, x, dy, g| {
                let (_, c) = l.forward(p, x);
                l.backward(p, &c, dy, g)
            },
        ),
    ));

    let mut ps = ParamSet::new(seed, true);
    let l = PlainResidual::new(&mut ps, "plain", 3, false);
    randomize(&mut ps, seed);
    out.push((
        "plain_residual",
        check_layer(
            &mut ps,
            &x,
            |p, x| l.forward(p, x).0,
            |p, x, dy, g| {
                let (_, c) = l.forward(p, x);
                l.backward(p, &c, dy, g)
            },
        ),
    ));

    let mut ps = ParamSet::new(seed, true);
    let stack: Vec<DilatedResidual> =
        [1, 3, 9].iter().enumerate().map(|(i, &d)| DilatedResidual::new(&mut ps, &format!("dil{i}"), 3, 3, d, false)).collect();
    randomize(&mut ps, seed);
    out.push((
        "dilated_residual_stack",
        check_layer(
            &mut ps,
            &x,
            |p, x| stack.iter().fold(x.clone(), |h, b| b.forward(p, &h).0),
            |p, x, dy, g| {
                let mut h = x.clone();
                let mut caches = Vec::new();
                for b in &stack {
                    let (y, c) = b.forward(p, &h);
                    caches.push(c);
                    h = y;
                }
                let mut d = dy.clone();
                for (b, c) in stack.iter().zip(&caches).rev() {
                    d = b.backward(p, c, &d, g);
                }
                d
            },
        ),
    ));

    let mut ps = ParamSet::new(seed, true);
    let l = EncoderLayer::new(&mut ps, "enc", 8, 2, 2);
    randomize(&mut ps, seed);
    out.push((
        "attention_encoder_layer",
        check_layer(
            &mut ps,
            &xt,
            |p, x| l.forward(p, x).0,
            |p, x, dy, g| {
                let (_, c) = l.forward(p, x);
                l.backward(p, &c, dy, g)
            },
        ),
    ));

    let mut ps = ParamSet::new(seed, true);
    let l = Encoder::new(&mut ps, "encoder", 8, 4, 2, 2);
    randomize(&mut ps, seed);
    out.push((
        "transformer_encoder",
        check_layer(
            &mut ps,
            &xt,
            |p, x| l.forward(p, x).0,
            |p, x, dy, g| {
                let (_, c) = l.forward(p, x);
                l.backward(p, &c, dy, g)
            },
        ),
    ));

    for (name, loss) in [("smoothed_ce_loss", Loss::SmoothedCe { smoothing: 0.1 }), ("bce_loss", Loss::Bce)] {
        let z = random_mat(1, 5, seed + 7);
        let mut rng = rng_from(seed, &[0x7467]);
        let t: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let t: Vec<f64> = if name == "bce_loss" { t } else { t.iter().map(|v| v / t.iter().sum::<f64>()).collect() };
        let mut ps = ParamSet::new(seed, true);
        out.push((
            name,
            check_layer(
                &mut ps,
                &z,
                |_, z| Mat::from_vec(1, 1, vec![loss.value(&z.data, &t).expect("valid")]),
                |_, z, dy, _| {
                    let (_, g) = loss.value_grad(&z.data, &t).expect("valid");
                    Mat::from_vec(1, g.len(), g.iter().map(|v| v * dy.data[0]).collect())
                },
            ),
        ));
    }
    out
}

/// Checks the gradient of the mean batch loss w.r.t. every model
/// parameter. `stride > 1` samples every `stride`-th entry of each tensor.
pub fn model_report(model: &mut EatModel, inputs: &[Mat], targets: &[Vec<f64>], loss: Loss, stride: usize) -> Result<GradReport> {
    let vg = model.value_and_grad(inputs, targets, loss, Execution::Sequential)?;
    let mean_loss = |m: &EatModel| -> Result<f64> {
        let logits = m.forward(inputs, Execution::Sequential)?;
        let mut s = 0.0;
        for (r, t) in targets.iter().enumerate() {
            s += loss.value(logits.row(r), t)?;
        }
        Ok(s / targets.len() as f64)
    };
    let mut report = GradReport { max_rel_error: 0.0, checked: 0 };
    for pi in 0..model.params().len() {
        let n = model.params().params()[pi].data.len();
        let mut sub = GradReport { max_rel_error: 0.0, checked: 0 };
        for j in (0..n).step_by(stride.max(1)) {
            let orig = model.params().params()[pi].data[j];
            model.params_mut().params_mut()[pi].data[j] = orig + EPS;
            let lp = mean_loss(model)?;
            model.params_mut().params_mut()[pi].data[j] = orig - EPS;
            let lm = mean_loss(model)?;
            model.params_mut().params_mut()[pi].data[j] = orig;
            let num = (lp - lm) / (2.0 * EPS);
            sub.max_rel_error = sub.max_rel_error.max(rel_error(vg.grads.data[pi][j], num));
            sub.checked += 1;
        }
        report.merge(sub);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EatConfig;

    #[test]
    fn every_layer_passes() {
        for (name, r) in layer_reports(11) {
            assert!(r.max_rel_error < 1e-4, "{name}: {r:?}");
            assert!(r.checked > 0);
        }
    }

    #[test]
    fn tiny_model_passes_sampled() {
        let mut model = EatModel::build(&EatConfig::tiny(3), 2).unwrap();
        let x = random_mat(1, 1000, 5);
        let t = vec![vec![0.0, 1.0, 0.0]];
        let r = model_report(&mut model, &[x], &t, Loss::SmoothedCe { smoothing: 0.1 }, 7).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
