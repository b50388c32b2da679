use std::fmt::Write as _;
use std::sync::Arc;

use super::nist::{
    approximate_entropy_test, block_frequency_test, cusum_test, longest_run_test, monobit_test,
    runs_test, serial_test,
};
use super::{stream_from_chain, BitStream, RandomnessError, TestResult, DEFAULT_ALPHA};
use crate::idvv::{IdvvState, Root, Seed};

pub const TEST_NAMES: [&str; 7] = [
    "monobit",
    "block_frequency",
    "runs",
    "longest_run",
    "cusum",
    "approximate_entropy",
    "serial",
];

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryConfig {
    pub n_bits: usize,
    pub trials: usize,
    pub alpha: f64,
    pub block_len: usize,
    pub apen_m: usize,
    pub serial_m: usize,
}

impl BatteryConfig {
    /// Standard operating point for a given stream length: block frequency
    /// with M = 128, approximate entropy with m = 10 and serial with m = 16,
    /// both lowered for short streams to stay inside the length guidelines.
    pub fn new(n_bits: usize, trials: usize, alpha: f64) -> Self {
        let log2n = if n_bits == 0 { 0 } else { n_bits.ilog2() as usize };
        Self {
            n_bits,
            trials,
            alpha,
            block_len: 128,
            apen_m: log2n.saturating_sub(5).clamp(1, 10),
            serial_m: log2n.saturating_sub(2).clamp(2, 16),
        }
    }

    fn validate(&self) -> Result<(), RandomnessError> {
        if self.trials < 20 {
            return Err(RandomnessError::Parameter(format!(
                "battery needs at least 20 trials, got {}",
                self.trials
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RandomnessError::Parameter(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }

    /// Lowest acceptable pass count: the lower end of the proportion
    /// confidence interval `p ± 3 sqrt(p (1 - p) / T)`, `p = 1 - alpha`,
    /// truncated to a whole count. Gives 96 of 100 at alpha = 0.01.
    pub fn min_passes(&self) -> usize {
        let p = 1.0 - self.alpha;
        let t = self.trials as f64;
        let lower = p - 3.0 * (p * self.alpha / t).sqrt();
        (lower * t).floor().max(0.0) as usize
    }

    /// Highest acceptable pass count (upper end of the same interval).
    pub fn max_passes(&self) -> usize {
        let p = 1.0 - self.alpha;
        let t = self.trials as f64;
        let upper = p + 3.0 * (p * self.alpha / t).sqrt();
        ((upper * t).floor() as usize).min(self.trials)
    }
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self::new(1_000_000, 100, DEFAULT_ALPHA)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSummary {
    pub test_name: &'static str,
    pub passes: usize,
    pub trials: usize,
    pub proportion: f64,
    pub within_interval: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomnessReport {
    pub config: BatteryConfig,
    /// `results[trial][test]`, in trial order and [`TEST_NAMES`] order.
    pub results: Vec<Vec<TestResult>>,
    pub summaries: Vec<TestSummary>,
    pub pass: bool,
}

impl RandomnessReport {
    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }

    /// Machine-readable form: `test,trial,p_value,pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test,trial,p_value,pass\n");
        for (trial, row) in self.results.iter().enumerate() {
            for r in row {
                writeln!(out, "{},{},{:.6},{}", r.test_name, trial, r.p_value, r.pass).unwrap();
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        writeln!(
            out,
            "n_bits={} trials={} alpha={} block_len={} apen_m={} serial_m={} min_passes={}",
            c.n_bits,
            c.trials,
            c.alpha,
            c.block_len,
            c.apen_m,
            c.serial_m,
            c.min_passes()
        )
        .unwrap();
        writeln!(out, "{:<22} {:>8} {:>10}  result", "test", "passes", "proportion").unwrap();
        for s in &self.summaries {
            writeln!(
                out,
                "{:<22} {:>4}/{:<3} {:>10.4}  {}",
                s.test_name,
                s.passes,
                s.trials,
                s.proportion,
                if s.within_interval { "ok" } else { "FAIL" }
            )
            .unwrap();
        }
        writeln!(out, "verdict: {}", self.verdict()).unwrap();
        out
    }
}

fn run_all(s: &BitStream, cfg: &BatteryConfig) -> Result<Vec<TestResult>, RandomnessError> {
    Ok([
        monobit_test(s)?,
        block_frequency_test(s, cfg.block_len)?,
        runs_test(s)?,
        longest_run_test(s)?,
        cusum_test(s)?,
        approximate_entropy_test(s, cfg.apen_m)?,
        serial_test(s, cfg.serial_m)?,
    ]
    .into_iter()
    .map(|r| r.with_alpha(cfg.alpha))
    .collect())
}

/// Runs the battery over streams produced by `source(trial)`.
pub fn run_battery_with<F>(cfg: &BatteryConfig, mut source: F) -> Result<RandomnessReport, RandomnessError>
where
    F: FnMut(usize) -> Result<BitStream, RandomnessError>,
{
    cfg.validate()?;
    let mut results = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let stream = source(trial)?;
        results.push(run_all(&stream, cfg)?);
    }
    let (min, max) = (cfg.min_passes(), cfg.max_passes());
    let summaries: Vec<TestSummary> = TEST_NAMES
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            let passes = results.iter().filter(|row| row[i].pass).count();
            TestSummary {
                test_name: name,
                passes,
                trials: cfg.trials,
                proportion: passes as f64 / cfg.trials as f64,
                within_interval: (min..=max).contains(&passes),
            }
        })
        .collect();
    let pass = summaries.iter().all(|s| s.within_interval);
    Ok(RandomnessReport {
        config: cfg.clone(),
        results,
        summaries,
        pass,
    })
}

/// Label of the chain feeding trial `trial`.
pub fn trial_label(trial: usize) -> Vec<u8> {
    format!("rnd-{trial:06}").into_bytes()
}

/// Runs the battery over `trials` chains sharing (seed, root) with distinct
/// direction labels.
pub fn run_battery(
    seed: &Seed,
    root: &Root,
    n_bits: usize,
    trials: usize,
    alpha: f64,
) -> Result<RandomnessReport, RandomnessError> {
    let cfg = BatteryConfig::new(n_bits, trials, alpha);
    let seed = Arc::new(seed.clone());
    run_battery_with(&cfg, |trial| {
        let mut chain = IdvvState::new(seed.clone(), root, &trial_label(trial))?;
        stream_from_chain(&mut chain, n_bits)
    })
}
