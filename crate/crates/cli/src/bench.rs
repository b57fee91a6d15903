//! Channel-mixer micro-benchmarks: dense 1×1 convolution, naive WHT and FWHT.

use std::fmt::Write as _;
use std::time::Instant;

use hadanet::wht::{fwht, naive_wht, Ordering, Scaling, TransformPlan};
use hadanet::{Shape, Tensor32};
use hadanet_train::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Relative agreement required between FWHT and naive WHT before anything is timed.
pub const GATE_TOLERANCE: f64 = 1e-4;
pub const MIN_REPS: usize = 5;
pub const MIN_WARMUP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mixer {
    /// `c×c` dense weight applied as one matrix multiply.
    Dense,
    NaiveWht,
    Fwht,
}

impl Mixer {
    pub const ALL: [Mixer; 3] = [Mixer::Dense, Mixer::NaiveWht, Mixer::Fwht];

    pub fn name(self) -> &'static str {
        match self {
            Mixer::Dense => "conv1x1-matmul",
            Mixer::NaiveWht => "naive-wht",
            Mixer::Fwht => "fwht",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 10,
            h: 32,
            w: 32,
            c: 1024,
            reps: MIN_REPS,
            warmup: MIN_WARMUP,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn shape(&self) -> CliResult<Shape> {
        Ok(Shape::new(self.n, self.h, self.w, self.c)?)
    }

    pub fn validate(&self) -> CliResult<()> {
        if !self.c.is_power_of_two() {
            return Err(CliError::Usage(format!("channel count {} is not a power of two", self.c)));
        }
        if self.reps < MIN_REPS || self.warmup < MIN_WARMUP {
            return Err(CliError::Usage(format!(
                "need at least {MIN_REPS} repetitions after {MIN_WARMUP} warmup runs, got {} and {}",
                self.reps, self.warmup
            )));
        }
        self.shape().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub case: String,
    pub shape: [usize; 4],
    pub repetitions: usize,
    pub warmup: usize,
    pub times: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub stddev: f64,
    pub machine: String,
}

impl BenchReport {
    fn new(case: &str, shape: Shape, warmup: usize, times: Vec<f64>) -> Self {
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / times.len() as f64;
        Self {
            case: case.to_string(),
            shape: shape.dims(),
            repetitions: times.len(),
            warmup,
            median: median(&times),
            mean,
            stddev: var.sqrt(),
            times,
            machine: machine_descriptor(),
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}

/// OS, architecture, worker threads and CPU model when the platform exposes it.
pub fn machine_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!(
        "{}-{}, {} threads, {cpu}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        rayon::current_num_threads()
    )
}

/// Uniform `[-1, 1)` tensor, reproducible from `seed`.
pub fn random_input(shape: Shape, seed: u64) -> Tensor32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor32::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn time_runs(warmup: usize, reps: usize, mut run: impl FnMut()) -> Vec<f64> {
    for _ in 0..warmup {
        run();
    }
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            run();
            t.elapsed().as_secs_f64()
        })
        .collect()
}

/// Largest `|a − b| / max(1, |b|)` over the two tensors.
pub fn max_relative_deviation(a: &Tensor32, b: &Tensor32) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs() / (y as f64).abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Times `mixers` on one random `n×h×w×c` tensor. Fails before timing if the
/// FWHT output disagrees with the naive transform.
pub fn bench_mixers(cfg: &BenchConfig, mixers: &[Mixer]) -> CliResult<Vec<BenchReport>> {
    cfg.validate()?;
    let shape = cfg.shape()?;
    let x = random_input(shape, cfg.seed);
    let plan = TransformPlan::new(cfg.c, Ordering::Natural, Scaling::None)?;
    let dev = max_relative_deviation(&fwht(&x, &plan)?, &naive_wht(&x, &plan)?);
    if !(dev <= GATE_TOLERANCE) {
        return Err(CliError::Check(format!(
            "fwht deviates from naive wht by {dev:.3e} (limit {GATE_TOLERANCE:e}) at c={}",
            cfg.c
        )));
    }
    let mut reports = Vec::with_capacity(mixers.len());
    for &mixer in mixers {
        let times = match mixer {
            Mixer::Dense => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
                let bound = 1.0 / (cfg.c as f32).sqrt();
                let weights: Vec<f32> = (0..cfg.c * cfg.c).map(|_| rng.gen_range(-bound..bound)).collect();
                let rows = shape.positions();
                let mut out = vec![0.0f32; rows * cfg.c];
                time_runs(cfg.warmup, cfg.reps, || {
                    f32::gemm(rows, cfg.c, cfg.c, x.data(), false, &weights, false, 0.0, &mut out);
                    std::hint::black_box(&out);
                })
            }
            Mixer::NaiveWht => time_runs(cfg.warmup, cfg.reps, || {
                std::hint::black_box(naive_wht(&x, &plan).expect("shape checked"));
            }),
            Mixer::Fwht => time_runs(cfg.warmup, cfg.reps, || {
                std::hint::black_box(fwht(&x, &plan).expect("shape checked"));
            }),
        };
        reports.push(BenchReport::new(mixer.name(), shape, cfg.warmup, times));
    }
    Ok(reports)
}

/// The three channel mixers of the speed comparison.
pub fn bench_channel_mixers(cfg: &BenchConfig) -> CliResult<Vec<BenchReport>> {
    bench_mixers(cfg, &Mixer::ALL)
}

/// Runs [`bench_mixers`] once per channel count in `sizes`.
pub fn scaling_sweep(base: &BenchConfig, sizes: &[usize], mixers: &[Mixer]) -> CliResult<Vec<BenchReport>> {
    let mut out = Vec::new();
    for &c in sizes {
        out.extend(bench_mixers(&BenchConfig { c, ..*base }, mixers)?);
    }
    Ok(out)
}

/// Ratios `median(size_{i+1}) / median(size_i)` for one case across a sweep, in report order.
pub fn growth_ratios(reports: &[BenchReport], case: &str) -> Vec<f64> {
    let medians: Vec<f64> = reports.iter().filter(|r| r.case == case).map(|r| r.median).collect();
    medians.windows(2).map(|w| w[1] / w[0]).collect()
}

pub fn to_json(reports: &[BenchReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// One row per report; per-rep times are `;`-separated.
pub fn to_csv(reports: &[BenchReport]) -> String {
    let mut out = String::from("case,n,h,w,c,repetitions,warmup,median,mean,stddev,times,machine\n");
    for r in reports {
        let times: Vec<String> = r.times.iter().map(|t| format!("{t:.6}")).collect();
        let [n, h, w, c] = r.shape;
        let _ = writeln!(
            out,
            "{},{n},{h},{w},{c},{},{},{:.6},{:.6},{:.6},{},\"{}\"",
            r.case,
            r.repetitions,
            r.warmup,
            r.median,
            r.mean,
            r.stddev,
            times.join(";"),
            r.machine.replace('"', "'")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(c: usize) -> BenchConfig {
        BenchConfig {
            n: 1,
            h: 2,
            w: 2,
            c,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn reports_carry_statistics() {
        let reports = bench_channel_mixers(&small(16)).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert_eq!(r.repetitions, 5);
            assert_eq!(r.warmup, 2);
            assert_eq!(r.times.len(), 5);
            assert_eq!(r.shape, [1, 2, 2, 16]);
            assert!(r.stddev >= 0.0 && r.mean > 0.0);
        }
        let csv = to_csv(&reports);
        assert_eq!(csv.lines().count(), 4);
        assert!(to_json(&reports).contains("\"case\": \"naive-wht\""));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(bench_channel_mixers(&small(12)), Err(CliError::Usage(_))));
        let few = BenchConfig { reps: 4, ..small(8) };
        assert!(matches!(bench_channel_mixers(&few), Err(CliError::Usage(_))));
    }

    #[test]
    fn inputs_are_reproducible() {
        let s = Shape::new(1, 2, 2, 4).unwrap();
        assert_eq!(random_input(s, 3), random_input(s, 3));
        assert_ne!(random_input(s, 3), random_input(s, 4));
    }
}
