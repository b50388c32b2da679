//! Micro-benchmarks of security primitives and channel throughput.
//!
//! Every case is timed with a monotonic clock in batched samples; per-op
//! latency percentiles and throughput come from the same samples, and warmup
//! work is never recorded.

mod channel;
mod compare;
mod external;
mod primitives;

use std::fmt;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::channel::ChannelError;

pub use channel::{bench_channel, ChannelCase};
pub use compare::{compare_reports, Comparison};
pub use external::{bench_tls_baseline, parse_speed_output, DEFAULT_TLS_TEMPLATE};
pub use primitives::{bench_primitive, Primitive};

/// Message-size axis used when none is given.
pub const DEFAULT_SIZES: [usize; 4] = [64, 512, 1500, 16384];

/// Relative ops/sec drift between two runs above which a case is flagged.
pub const STABILITY_TOLERANCE: f64 = 0.15;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
    #[error("cannot parse external tool output: {reason}\n--- raw output ---\n{raw}")]
    ExternalParse { reason: String, raw: String },
    #[error("external tool failed: {0}")]
    External(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    /// Minimum number of recorded operations per case.
    pub iterations: u64,
    /// Minimum recorded wall time per case.
    pub min_duration: Duration,
    /// Operations run and discarded before recording.
    pub warmup: u64,
    /// Minimum number of timed samples per case.
    pub min_samples: u32,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: DEFAULT_SIZES.to_vec(),
            iterations: 20_000,
            min_duration: Duration::ZERO,
            warmup: 1_000,
            min_samples: 20,
        }
    }
}

impl BenchConfig {
    pub fn with_sizes(sizes: &[usize]) -> Self {
        Self {
            sizes: sizes.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(BenchError::Parameter("message sizes must be non-empty and positive".into()));
        }
        if self.iterations < 1000 && self.min_duration < Duration::from_secs(1) {
            return Err(BenchError::Parameter(format!(
                "need at least 1000 iterations or 1 s of measurement, got {} and {:?}",
                self.iterations, self.min_duration
            )));
        }
        if self.min_samples == 0 {
            return Err(BenchError::Parameter("min_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CaseStatus {
    Measured,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub case: String,
    pub size_bytes: usize,
    pub ops_per_sec: f64,
    pub mb_per_sec: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    pub status: CaseStatus,
}

impl CaseResult {
    pub fn skipped(case: &str, size_bytes: usize, reason: impl Into<String>) -> Self {
        Self {
            case: case.to_string(),
            size_bytes,
            ops_per_sec: 0.0,
            mb_per_sec: 0.0,
            p50_us: 0.0,
            p99_us: 0.0,
            status: CaseStatus::Skipped(reason.into()),
        }
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self.status, CaseStatus::Skipped(_))
    }

    fn from_measurement(case: &str, size_bytes: usize, m: &Measurement) -> Self {
        Self {
            case: case.to_string(),
            size_bytes,
            ops_per_sec: m.ops_per_sec(),
            mb_per_sec: m.ops_per_sec() * size_bytes as f64 / 1e6,
            p50_us: m.percentile_us(50.0),
            p99_us: m.percentile_us(99.0),
            status: CaseStatus::Measured,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub cpu_model: String,
    pub timestamp: u64,
}

impl Environment {
    pub fn capture() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|info| {
                info.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .unwrap_or_else(|| format!("unknown ({})", std::env::consts::ARCH));
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self { cpu_model, timestamp }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub environment: Environment,
    pub cases: Vec<CaseResult>,
}

pub const CSV_HEADER: &str = "case,size_bytes,ops_per_sec,mb_per_sec,p50_us,p99_us";

fn csv_row(c: &CaseResult) -> String {
    match &c.status {
        CaseStatus::Measured => format!(
            "{},{},{:.2},{:.3},{:.3},{:.3}",
            c.case, c.size_bytes, c.ops_per_sec, c.mb_per_sec, c.p50_us, c.p99_us
        ),
        CaseStatus::Skipped(_) => format!("{},{},skipped,,,", c.case, c.size_bytes),
    }
}

impl BenchReport {
    pub fn new(cases: Vec<CaseResult>) -> Self {
        Self {
            environment: Environment::capture(),
            cases,
        }
    }

    pub fn merge(reports: impl IntoIterator<Item = BenchReport>) -> Self {
        let mut cases = Vec::new();
        for r in reports {
            cases.extend(r.cases);
        }
        Self::new(cases)
    }

    pub fn find(&self, case: &str, size_bytes: usize) -> Option<&CaseResult> {
        self.cases
            .iter()
            .find(|c| c.case == case && c.size_bytes == size_bytes)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.cases.iter().map(|c| c.size_bytes).collect();
        sizes.sort_unstable();
        sizes.dedup();
        sizes
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for c in &self.cases {
            out.push_str(&csv_row(c));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "<!-- cpu: {} | unix time: {} -->\n| case | size (B) | ops/s | MB/s | p50 (us) | p99 (us) |\n|---|---:|---:|---:|---:|---:|\n",
            self.environment.cpu_model, self.environment.timestamp
        );
        for c in &self.cases {
            match &c.status {
                CaseStatus::Measured => out.push_str(&format!(
                    "| {} | {} | {:.0} | {:.2} | {:.3} | {:.3} |\n",
                    c.case, c.size_bytes, c.ops_per_sec, c.mb_per_sec, c.p50_us, c.p99_us
                )),
                CaseStatus::Skipped(why) => out.push_str(&format!(
                    "| {} | {} | skipped: {} | | | |\n",
                    c.case, c.size_bytes, why
                )),
            }
        }
        out
    }

    /// Cases whose ops/sec differ from `other` by more than
    /// [`STABILITY_TOLERANCE`]. Informational only.
    pub fn stability_flags(&self, other: &BenchReport) -> Vec<String> {
        self.cases
            .iter()
            .filter(|c| !c.is_skipped())
            .filter_map(|c| {
                let o = other.find(&c.case, c.size_bytes).filter(|o| !o.is_skipped())?;
                let drift = (c.ops_per_sec - o.ops_per_sec).abs() / c.ops_per_sec.max(o.ops_per_sec);
                (drift > STABILITY_TOLERANCE)
                    .then(|| format!("{}@{}: {:.1}% drift", c.case, c.size_bytes, drift * 100.0))
            })
            .collect()
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_markdown())
    }
}

/// Timed samples of one case: each entry is (ops, elapsed).
#[derive(Debug, Default, Clone)]
pub(crate) struct Measurement {
    samples: Vec<(u64, Duration)>,
}

impl Measurement {
    pub(crate) fn push(&mut self, ops: u64, elapsed: Duration) {
        self.samples.push((ops, elapsed));
    }

    pub(crate) fn total_ops(&self) -> u64 {
        self.samples.iter().map(|s| s.0).sum()
    }

    pub(crate) fn total_time(&self) -> Duration {
        self.samples.iter().map(|s| s.1).sum()
    }

    pub(crate) fn ops_per_sec(&self) -> f64 {
        let secs = self.total_time().as_secs_f64();
        if secs == 0.0 {
            return 0.0;
        }
        self.total_ops() as f64 / secs
    }

    /// Nearest-rank percentile of per-op latency across samples, in µs.
    pub(crate) fn percentile_us(&self, pct: f64) -> f64 {
        let mut per_op: Vec<f64> = self
            .samples
            .iter()
            .filter(|s| s.0 > 0)
            .map(|(ops, d)| d.as_secs_f64() * 1e6 / *ops as f64)
            .collect();
        if per_op.is_empty() {
            return 0.0;
        }
        per_op.sort_by(f64::total_cmp);
        let rank = ((pct / 100.0) * per_op.len() as f64).ceil().max(1.0) as usize;
        per_op[rank.min(per_op.len()) - 1]
    }
}

/// Longest a single sample of a slow operation should take.
const SLOW_SAMPLE_BUDGET: Duration = Duration::from_millis(50);
const OPS_PER_SAMPLE: u64 = 1000;

/// Runs `op(i)` with a running counter `i` under the config's budget.
///
/// Samples batch 1000 operations; operations so slow that a batch would
/// exceed 50 ms are batched to fit that budget instead (timer overhead is
/// irrelevant at that scale).
pub(crate) fn measure<F: FnMut(u64)>(cfg: &BenchConfig, mut op: F) -> Measurement {
    let mut counter = 0u64;
    for _ in 0..cfg.warmup {
        op(counter);
        counter += 1;
    }
    let probe = Instant::now();
    op(counter);
    counter += 1;
    let single = probe.elapsed().max(Duration::from_nanos(1));
    let batch = if single * OPS_PER_SAMPLE as u32 <= SLOW_SAMPLE_BUDGET {
        OPS_PER_SAMPLE
    } else {
        (SLOW_SAMPLE_BUDGET.as_nanos() / single.as_nanos()).max(1) as u64
    };

    let mut m = Measurement::default();
    while m.total_ops() < cfg.iterations
        || m.total_time() < cfg.min_duration
        || m.samples.len() < cfg.min_samples as usize
    {
        let start = Instant::now();
        for _ in 0..batch {
            op(counter);
            counter += 1;
        }
        m.push(batch, start.elapsed());
    }
    m
}

/// Non-blank, non-comment source lines of the protocol modules (chain,
/// association, record layer), excluding unit tests.
pub fn core_line_count() -> usize {
    const SOURCES: [&str; 5] = [
        include_str!("../idvv.rs"),
        include_str!("../association.rs"),
        include_str!("../channel/mod.rs"),
        include_str!("../channel/record.rs"),
        include_str!("../channel/endpoint.rs"),
    ];
    SOURCES.iter().map(|src| count_code_lines(src)).sum()
}

fn count_code_lines(src: &str) -> usize {
    src.lines()
        .take_while(|l| l.trim() != "#[cfg(test)]")
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("//"))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(BenchConfig::default().validate().is_ok());
        let zero = BenchConfig {
            iterations: 0,
            ..BenchConfig::default()
        };
        assert!(matches!(zero.validate(), Err(BenchError::Parameter(_))));
        let timed = BenchConfig {
            iterations: 0,
            min_duration: Duration::from_secs(1),
            ..BenchConfig::default()
        };
        assert!(timed.validate().is_ok());
        assert!(BenchConfig::with_sizes(&[]).validate().is_err());
        assert!(BenchConfig::with_sizes(&[64, 0]).validate().is_err());
    }

    #[test]
    fn percentiles_and_throughput_share_samples() {
        let mut m = Measurement::default();
        for us in 1..=100u64 {
            m.push(1000, Duration::from_micros(us * 1000));
        }
        assert_eq!(m.total_ops(), 100_000);
        assert!((m.percentile_us(50.0) - 50.0).abs() < 1e-9);
        assert!((m.percentile_us(99.0) - 99.0).abs() < 1e-9);
        // 100k ops over 5.05 s
        assert!((m.ops_per_sec() - 100_000.0 / 5.05).abs() < 1e-6);
    }

    #[test]
    fn measure_respects_budget_and_excludes_warmup() {
        let cfg = BenchConfig {
            iterations: 5000,
            warmup: 123,
            min_samples: 3,
            ..BenchConfig::default()
        };
        let mut calls = 0u64;
        let m = measure(&cfg, |_| calls += 1);
        assert!(m.total_ops() >= 5000);
        assert!(m.samples.len() >= 3);
        // warmup and the calibration probe are not recorded
        assert_eq!(calls, m.total_ops() + 124);
    }

    #[test]
    fn csv_and_markdown_shapes() {
        let m = {
            let mut m = Measurement::default();
            m.push(1000, Duration::from_millis(1));
            m
        };
        let report = BenchReport::new(vec![
            CaseResult::from_measurement("x", 64, &m),
            CaseResult::skipped("tls", 64, "tool not found"),
        ]);
        let csv = report.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "x,64,1000000.00,64.000,1.000,1.000");
        assert_eq!(lines[2], "tls,64,skipped,,,");
        assert!(report.to_markdown().contains("skipped: tool not found"));
    }

    #[test]
    fn stability_flagging() {
        let mk = |ops| BenchReport::new(vec![CaseResult {
            case: "c".into(),
            size_bytes: 64,
            ops_per_sec: ops,
            mb_per_sec: 0.0,
            p50_us: 0.0,
            p99_us: 0.0,
            status: CaseStatus::Measured,
        }]);
        assert!(mk(100.0).stability_flags(&mk(90.0)).is_empty());
        assert_eq!(mk(100.0).stability_flags(&mk(80.0)).len(), 1);
    }

    #[test]
    fn line_count_is_positive() {
        let n = core_line_count();
        assert!(n > 200 && n < 5000, "{n}");
        assert_eq!(count_code_lines("// c\n\nfn a() {}\n#[cfg(test)]\nfn b() {}\n"), 1);
    }
}
