use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eat_core::mix::LabeledSample;
use eat_core::model::tensor::Mat;
use eat_core::model::{EatConfig, EatModel};
use eat_core::parallel::{self, Execution};
use eat_core::pipeline::{Pipeline, PipelineConfig};
use eat_core::rng::rng_from;
use eat_core::signal::{self, StftConfig, Waveform};
use eat_core::train::loss::Loss;
use rand::Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn wave(len: usize, seed: u64) -> Waveform {
    let mut rng = rng_from(seed, &[]);
    Waveform::new((0..len).map(|_| rng.random_range(-0.5..0.5)).collect(), 16000).unwrap()
}

fn batch(n: usize, len: usize) -> Vec<LabeledSample> {
    (0..n).map(|i| LabeledSample::one_hot(wave(len, i as u64), i % 3, 3).unwrap()).collect()
}

fn model(c: &mut Criterion) {
    let m = EatModel::build(&EatConfig::toy(3), 0).unwrap();
    let inputs: Vec<Mat> = batch(8, 16000).iter().map(|s| Mat::from_vec(1, 16000, s.waveform.samples.clone())).collect();
    let targets: Vec<Vec<f64>> = batch(8, 16).into_iter().map(|s| s.label).collect();
    let mut g = c.benchmark_group("toy_model_batch8_1s");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("forward", name), &exec, |b, &e| b.iter(|| m.forward(&inputs, e).unwrap()));
        g.bench_with_input(BenchmarkId::new("value_and_grad", name), &exec, |b, &e| {
            b.iter(|| m.value_and_grad(&inputs, &targets, Loss::SmoothedCe { smoothing: 0.1 }, e).unwrap())
        });
    }
    g.finish();
}

fn stft(c: &mut Criterion) {
    let cfg = StftConfig::default();
    let waves: Vec<Waveform> = (0..16).map(|i| wave(22050, i)).collect();
    let mut g = c.benchmark_group("stft_round_trip_16x1s");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| parallel::map(e, waves.len(), |i| signal::istft(&signal::stft(&waves[i], &cfg).unwrap(), 22050).unwrap()))
        });
    }
    g.finish();
}

fn augment(c: &mut Criterion) {
    let p = Pipeline::new(PipelineConfig::default(), StftConfig::default()).unwrap();
    let data = batch(16, 16000);
    let mut g = c.benchmark_group("augment_pipeline_16x1s");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| b.iter(|| p.run(&data, 7, e).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, model, stft, augment);
criterion_main!(benches);
