use eat_core::model::blocks::{DilatedResidual, ModifiedResidual};
use eat_core::model::params::ParamSet;
use eat_core::model::tensor::Mat;
use eat_core::model::transformer::Encoder;
use eat_core::model::{Aggregator, BlockKind, EatConfig, EatModel};
use eat_core::parallel::Execution;
use eat_core::train::loss::Loss;
use eat_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn noise(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = eat_core::rng::rng_from(seed, &[1]);
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

#[test]
fn preset_parameter_counts() {
    let s = EatConfig::eat_s(50).param_count().unwrap() as f64;
    let m = EatConfig::eat_m(50).param_count().unwrap() as f64;
    assert!((s - 5.3e6).abs() <= 0.15 * 5.3e6, "EAT-S {s}");
    assert!((m - 25.5e6).abs() <= 0.15 * 25.5e6, "EAT-M {m}");
    assert!(EatConfig::toy(3).param_count().unwrap() < EatConfig::eat_s(3).param_count().unwrap());
}

#[test]
fn built_count_matches_shape_only_count() {
    let cfg = EatConfig::tiny(3);
    assert_eq!(EatModel::build(&cfg, 0).unwrap().param_count(), cfg.param_count().unwrap());
}

#[test]
fn default_frames_for_five_seconds() {
    let cfg = EatConfig::default();
    assert_eq!(cfg.total_factor(), 256);
    assert_eq!(cfg.frames_for(110_250), 431);
    let tiny = EatConfig::tiny(3);
    let model = EatModel::build(&tiny, 1).unwrap();
    let f = model.frames(&noise(1, 1000, 2)).unwrap();
    assert_eq!(f.shape(), (tiny.frames_for(1000), tiny.embed_dim));
    assert_eq!(f.rows, 63);
}

#[test]
fn same_seed_same_parameters() {
    let cfg = EatConfig::tiny(3);
    let a = EatModel::build(&cfg, 9).unwrap();
    let b = EatModel::build(&cfg, 9).unwrap();
    let c = EatModel::build(&cfg, 10).unwrap();
    assert_eq!(a.params().values(), b.params().values());
    assert_ne!(a.params().values(), c.params().values());
}

#[test]
fn zero_init_residuals_are_identity() {
    let mut ps = ParamSet::new(3, true);
    let r = ModifiedResidual::new(&mut ps, "r", 4, 7, 2, true);
    let d = DilatedResidual::new(&mut ps, "d", 4, 3, 9, true);
    let x = noise(4, 50, 4);
    assert_eq!(r.forward(&ps, &x).0, x);
    assert_eq!(d.forward(&ps, &x).0, x);
}

#[test]
fn attention_rows_sum_to_one() {
    let model = EatModel::build(&EatConfig::tiny(3), 5).unwrap();
    let (_, cache) = model.forward_with_cache(&noise(1, 1000, 6)).unwrap();
    let layers = cache.attention();
    assert_eq!(layers.len(), 1);
    assert_eq!(layers[0].len(), 2);
    for head in layers[0] {
        for r in 0..head.rows {
            let s: f64 = head.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(head.row(r).iter().all(|&w| w >= 0.0));
        }
    }
}

#[test]
fn encoder_is_permutation_equivariant() {
    let mut ps = ParamSet::new(4, true);
    let enc = Encoder::new(&mut ps, "e", 8, 2, 2, 2);
    let x = noise(6, 8, 7);
    let perm = [3, 0, 5, 1, 4, 2];
    let rows: Vec<&[f64]> = perm.iter().map(|&i| x.row(i)).collect();
    let xp = Mat::from_rows(&rows);
    let y = enc.forward(&ps, &x).0;
    let yp = enc.forward(&ps, &xp).0;
    for (k, &i) in perm.iter().enumerate() {
        for (a, b) in yp.row(k).iter().zip(y.row(i)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn duplicated_rows_give_identical_logits() {
    let model = EatModel::build(&EatConfig::tiny(3), 8).unwrap();
    let x = noise(1, 1000, 9);
    let logits = model.forward(&[x.clone(), x.clone(), x], Execution::Parallel).unwrap();
    assert_eq!(logits.shape(), (3, 3));
    assert_eq!(logits.row(0), logits.row(1));
    assert_eq!(logits.row(0), logits.row(2));
}

#[test]
fn sequential_and_parallel_gradients_are_bitwise_equal() {
    let model = EatModel::build(&EatConfig::tiny(3), 10).unwrap();
    let inputs: Vec<Mat> = (0..9).map(|i| noise(1, 1000, 100 + i)).collect();
    let targets: Vec<Vec<f64>> = (0..9)
        .map(|i| {
            let mut t = vec![0.0; 3];
            t[i as usize % 3] = 1.0;
            t
        })
        .collect();
    let loss = Loss::SmoothedCe { smoothing: 0.1 };
    let a = model.value_and_grad(&inputs, &targets, loss, Execution::Sequential).unwrap();
    let b = model.value_and_grad(&inputs, &targets, loss, Execution::Parallel).unwrap();
    assert_eq!(a.loss.to_bits(), b.loss.to_bits());
    assert_eq!(a.grads.data, b.grads.data);
}

#[test]
fn variants_build_and_run() {
    let x = noise(1, 1000, 11);
    for cfg in [
        EatConfig { block: BlockKind::Plain, ..EatConfig::tiny(3) },
        EatConfig { aggregator: Aggregator::ConvPool, ..EatConfig::tiny(3) },
        EatConfig { dilated: false, ..EatConfig::tiny(3) },
        EatConfig { positional_embedding: false, ..EatConfig::tiny(3) },
    ] {
        let m = EatModel::build(&cfg, 1).unwrap();
        assert!(m.forward_one(&x).unwrap().iter().all(|v| v.is_finite()));
    }
    let plain = EatConfig { block: BlockKind::Plain, ..EatConfig::tiny(3) };
    let mut m = EatModel::build(&plain, 2).unwrap();
    let r = eat_core::model::gradcheck::model_report(&mut m, &[x], &[vec![1.0, 0.0, 0.0]], Loss::Bce, 5).unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn bad_inputs_are_rejected() {
    let model = EatModel::build(&EatConfig::tiny(3), 1).unwrap();
    let min = model.config().min_input_len();
    assert!(matches!(model.forward_one(&noise(1, min - 1, 0)), Err(Error::InputTooShort { .. })));
    assert!(model.forward_one(&noise(1, min, 0)).is_ok());
    assert!(matches!(model.forward_one(&noise(2, 1000, 0)), Err(Error::Shape(_))));
    assert!(matches!(model.forward(&[noise(1, 1000, 0), noise(1, 1001, 0)], Execution::Sequential), Err(Error::LengthMismatch(..))));
    let mut x = noise(1, 1000, 0);
    x.data[5] = f64::NAN;
    assert!(matches!(model.forward_one(&x), Err(Error::NonFinite(5))));
    assert!(matches!(model.forward_one(&noise(1, 40_000, 0)), Err(Error::Shape(_))));
    assert!(EatConfig { embed_dim: 9, ..EatConfig::tiny(3) }.validate().is_err());
    assert!(EatConfig { dw_kernel: 4, ..EatConfig::tiny(3) }.validate().is_err());
    assert!(EatConfig { num_classes: 1, ..EatConfig::tiny(3) }.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn frames_follow_ceil_division(len in 1usize..300_000) {
        let cfg = EatConfig::default();
        let mut l = len;
        for d in [4, 4, 4, 4] { l = l.div_ceil(d); }
        prop_assert_eq!(cfg.frames_for(len), l);
    }

    #[test]
    fn logits_are_finite(seed in 0u64..1000, len in 400usize..1500) {
        let model = EatModel::build(&EatConfig::tiny(3), seed).unwrap();
        let z = model.forward_one(&noise(1, len, seed)).unwrap();
        prop_assert!(z.iter().all(|v| v.is_finite()));
    }
}
