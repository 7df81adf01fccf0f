use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eat_core::data::{read_wav, write_wav, WavFormat};
use eat_core::Waveform;
use serde_json::Value;
use tempfile::TempDir;

fn eat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eat")).args(args).env_remove("EAT_DATA_ROOT").output().expect("spawn eat")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tone(dir: &Path, name: &str, hz: f64, gain: f64, len: usize) -> PathBuf {
    let rate = 8000;
    let x = (0..len).map(|n| gain * (2.0 * std::f64::consts::PI * hz * n as f64 / rate as f64).sin()).collect();
    let p = dir.join(name);
    write_wav(&p, &Waveform::new(x, rate).unwrap(), WavFormat::Float32).unwrap();
    p
}

const SMALL: [&str; 10] = [
    "--preset",
    "tiny",
    "--set",
    "data.duration_s=0.1",
    "--set",
    "data.sample_rate=8000",
    "--set",
    "train.epochs=2",
    "--set",
    "train.batch_size=4",
];

fn train_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--threads", "1", "train", "--synthetic", "4", "--synthetic-folds", "2", "--out", s(out)];
    args.extend(SMALL);
    args.extend(extra);
    eat(&args)
}

#[test]
fn freqmix_sidecar_carries_label_weights() {
    let d = TempDir::new().unwrap();
    let a = tone(d.path(), "a.wav", 300.0, 0.5, 4000);
    let b = tone(d.path(), "b.wav", 1500.0, 0.5, 3000);
    let out = d.path().join("out.wav");
    let o = eat(&["augment", "--op", "freqmix", "--lambda", "0.8", "--p", "0.3", s(&a), s(&b), s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_wav(&out).unwrap().len(), 4000);
    let side: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("out.wav.json")).unwrap()).unwrap();
    let w: Vec<f64> = side["label_weights"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((w[0] - 0.8).abs() < 1e-12 && (w[1] - 0.2).abs() < 1e-12, "{w:?}");
    assert_eq!(side["ops"][0]["op"], "freqmix");
}

#[test]
fn double_inversion_is_identity() {
    let d = TempDir::new().unwrap();
    let a = tone(d.path(), "a.wav", 440.0, 0.3, 2000);
    let out = d.path().join("out.wav");
    let o = eat(&["augment", "--op", "invert_polarity", "--op", "invert_polarity", s(&a), s(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_wav(&out).unwrap().samples, read_wav(&a).unwrap().samples);
}

#[test]
fn augment_records_realized_parameters_and_is_seeded() {
    let d = TempDir::new().unwrap();
    let a = tone(d.path(), "a.wav", 440.0, 0.3, 4000);
    let ops = ["--op", "amplitude", "--op", "time_shift", "--op", "filter", "--op", "time_mask", "--op", "quantize", "--op", "noise"];
    let run = |name: &str, seed: &str| {
        let out = d.path().join(name);
        let mut args = vec!["augment", "--seed", seed];
        args.extend(ops);
        args.extend([s(&a), s(&out)]);
        assert_eq!(code(&eat(&args)), 0);
        let side: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join(format!("{name}.json"))).unwrap()).unwrap();
        (read_wav(&out).unwrap().samples, side)
    };
    let (x1, s1) = run("one.wav", "7");
    let (x2, s2) = run("two.wav", "7");
    let (x3, _) = run("three.wav", "8");
    assert_eq!(x1, x2);
    assert_eq!(s1["ops"], s2["ops"]);
    assert_ne!(x1, x3);
    assert_eq!(s1["ops"].as_array().unwrap().len(), 6);
    let snr = s1["ops"][5]["snr_db"].as_f64().unwrap();
    assert!((10.0..=40.0).contains(&snr));
}

#[test]
fn invalid_augment_requests_exit_2() {
    let d = TempDir::new().unwrap();
    let a = tone(d.path(), "a.wav", 440.0, 0.3, 1000);
    let out = d.path().join("o.wav");
    assert_eq!(code(&eat(&["augment", "--op", "no_such_op", s(&a), s(&out)])), 2);
    assert_eq!(code(&eat(&["augment", "--op", "mixup", s(&a), s(&out)])), 2);
    assert_eq!(code(&eat(&["augment", "--op", "mixup", "--op", "amplitude", s(&a), s(&a), s(&out)])), 2);
    assert_eq!(code(&eat(&["augment", "--op", "freqmix", "--lambda", "0.2", s(&a), s(&a), s(&out)])), 2);
    assert_eq!(code(&eat(&["augment", "--op", "noise", "--noise-kind", "purple", s(&a), s(&out)])), 2);
    assert!(!out.exists());
}

#[test]
fn missing_files_exit_1() {
    let d = TempDir::new().unwrap();
    let missing = d.path().join("missing.wav");
    let out = d.path().join("o.wav");
    assert_eq!(code(&eat(&["augment", "--op", "amplitude", s(&missing), s(&out)])), 1);
    assert_eq!(code(&eat(&["synth", "--mode", "phase", s(&missing), s(&out)])), 1);
}

#[test]
fn synth_modes_preserve_length() {
    let d = TempDir::new().unwrap();
    let a = tone(d.path(), "a.wav", 440.0, 0.3, 3001);
    let a2 = tone(d.path(), "a2.wav", 440.0, 0.6, 3001);
    let z = d.path().join("z.wav");
    write_wav(&z, &Waveform::zeros(2000, 8000), WavFormat::Float32).unwrap();
    let run = |mode: &str, input: &Path, name: &str| {
        let out = d.path().join(name);
        let o = eat(&["synth", "--mode", mode, s(input), s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        read_wav(&out).unwrap()
    };
    let p1 = run("phase", &a, "p1.wav");
    let p2 = run("phase", &a2, "p2.wav");
    assert_eq!(p1.len(), 3001);
    let diff = p1.samples.iter().zip(&p2.samples).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-9, "phase output depends on scale: {diff}");
    assert_eq!(run("magnitude", &a, "m.wav").len(), 3001);
    let mz = run("magnitude", &z, "mz.wav");
    assert!(mz.samples.iter().all(|&v| v == 0.0));
}

#[test]
fn train_writes_config_checkpoints_and_metrics() {
    let d = TempDir::new().unwrap();
    let run = d.path().join("run");
    let o = train_small(&run, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.toml", "fold1_r0.ckpt", "fold2_r0.ckpt", "fold1_r0.state.ckpt", "summary.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let text = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2 * 2 * 2);
    assert!(lines.iter().all(|l| l["loss"].as_f64().unwrap().is_finite()));
    assert!(lines.iter().any(|l| l["split"] == "eval" && l["accuracy"].is_number()));

    let again = d.path().join("again");
    let o = eat(&["--threads", "1", "train", "--config", s(&run.join("config.toml")), "--out", s(&again)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(text, std::fs::read_to_string(again.join("metrics.jsonl")).unwrap());
}

#[test]
fn resume_continues_the_step_counter() {
    let d = TempDir::new().unwrap();
    let full = d.path().join("full");
    let part = d.path().join("part");
    assert_eq!(code(&train_small(&full, &[])), 0);
    assert_eq!(code(&train_small(&part, &["--stop-after", "1"])), 0);
    assert_eq!(std::fs::read_to_string(part.join("metrics.jsonl")).unwrap().lines().count(), 2);
    assert!(!part.join("fold1_r0.ckpt").exists());
    let o = eat(&["--threads", "1", "train", "--out", s(&part), "--resume"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(full.join("metrics.jsonl")).unwrap(), std::fs::read_to_string(part.join("metrics.jsonl")).unwrap());
    assert_eq!(std::fs::read(full.join("fold2_r0.ckpt")).unwrap(), std::fs::read(part.join("fold2_r0.ckpt")).unwrap());
}

#[test]
fn eval_reports_param_count_and_is_repeatable() {
    let d = TempDir::new().unwrap();
    let run = d.path().join("run");
    assert_eq!(code(&train_small(&run, &[])), 0);
    let ck = run.join("fold1_r0.ckpt");
    let manifest = run.join("data/manifest.csv");
    let args = ["eval", "--checkpoint", s(&ck), "--manifest", s(&manifest), "--fold", "1"];
    let o1 = eat(&args);
    assert_eq!(code(&o1), 0, "{}", String::from_utf8_lossy(&o1.stderr));
    let o2 = eat(&args);
    assert_eq!(o1.stdout, o2.stdout);
    let v: Value = serde_json::from_slice(&o1.stdout).unwrap();
    let built = eat_core::model::EatConfig::tiny(3).param_count().unwrap();
    assert_eq!(v["param_count"].as_u64().unwrap() as usize, built);
    assert_eq!(v["n"], 6);
    assert!((0.0..=1.0).contains(&v["accuracy"].as_f64().unwrap()));

    let two = d.path().join("two.csv");
    let text = std::fs::read_to_string(&manifest).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.contains("tone")).collect();
    std::fs::write(&two, kept.join("\n") + "\n").unwrap();
    let o = eat(&["eval", "--checkpoint", s(&ck), "--manifest", s(&two), "--audio-root", s(&run.join("data"))]);
    assert_eq!(code(&o), 2);

    let o = eat(&["eval", "--checkpoint", s(&ck), "--manifest", s(&manifest), "--set", "model.embed_dim=16"]);
    assert_eq!(code(&o), 2);
    let junk = d.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    assert_ne!(code(&eat(&["eval", "--checkpoint", s(&junk), "--manifest", s(&manifest)])), 0);
}

#[test]
fn bad_configuration_exits_2() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("o");
    assert_eq!(code(&train_small(&out, &["--set", "train.no_such_key=1"])), 2);
    assert_eq!(code(&train_small(&out, &["--set", "train.max_lr=-1"])), 2);
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "[model\n").unwrap();
    assert_eq!(code(&eat(&["train", "--config", s(&cfg), "--synthetic", "2", "--out", s(&out)])), 2);
    assert_eq!(code(&eat(&["train", "--out", s(&out)])), 2);
}

#[test]
fn bench_emits_one_row_per_duration() {
    let d = TempDir::new().unwrap();
    let csv = d.path().join("b.csv");
    let o = eat(&["bench", "--preset", "toy", "--durations", "0.25,2", "--runs", "3", "--warmup", "1", "--out", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(text.lines().next(), Some("duration_s,median_ms,p90_ms"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[2] >= r[1] && r[1] > 0.0));
    assert!(rows[1][1] > rows[0][1], "longer input should take longer: {rows:?}");
    assert_eq!(code(&eat(&["bench", "--durations", "1,-2"])), 2);
}
