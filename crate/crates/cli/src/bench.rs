use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use eat_core::model::tensor::Mat;
use eat_core::model::EatModel;
use eat_core::parallel::Execution;

use crate::{CliResult, ConfigArgs, Failure};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(flatten)]
    config: ConfigArgs,
    /// Input durations in seconds.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    durations: Vec<f64>,
    /// Timed runs per duration.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Untimed runs before timing.
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn run(a: Args) -> CliResult {
    if let Some(d) = a.durations.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Failure::invalid(format!("durations must be positive, got {d}")));
    }
    if a.runs == 0 {
        return Err(Failure::invalid("--runs must be at least 1"));
    }
    let mut cfg = a.config.load()?;
    let lens = a
        .durations
        .iter()
        .map(|&d| Ok(eat_core::data::clip_len(d, cfg.data.sample_rate)?.max(cfg.model.min_input_len())))
        .collect::<CliResult<Vec<usize>>>()?;
    // Positional table sized for the longest input.
    let longest = lens.iter().map(|&n| cfg.model.frames_for(n)).max().unwrap_or(0);
    cfg.model.max_frames = cfg.model.max_frames.max(longest);
    let model = EatModel::build(&cfg.model, cfg.train.seed)?;
    let mut csv = String::from("duration_s,median_ms,p90_ms\n");
    for (&d, &len) in a.durations.iter().zip(&lens) {
        let x = vec![Mat::zeros(cfg.model.in_channels, len)];
        for _ in 0..a.warmup {
            model.forward(&x, Execution::Sequential)?;
        }
        let mut ms: Vec<f64> = (0..a.runs)
            .map(|_| {
                let t = Instant::now();
                model.forward(&x, Execution::Sequential).map(|_| t.elapsed().as_secs_f64() * 1e3)
            })
            .collect::<Result<_, _>>()?;
        ms.sort_by(f64::total_cmp);
        log::info!("{d} s: {:.2} ms median", median(&ms));
        csv.push_str(&format!("{d},{:.3},{:.3}\n", median(&ms), percentile(&ms, 0.9)));
    }
    match &a.out {
        Some(p) => std::fs::write(p, csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistics() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(median(&v), 5.5);
        assert_eq!(percentile(&v, 0.9), 9.0);
        assert_eq!(median(&[3.0]), 3.0);
        assert_eq!(percentile(&[3.0], 0.9), 3.0);
    }
}
