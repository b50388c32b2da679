use std::process::Command;
use std::sync::OnceLock;

use log::{debug, info};
use regex::Regex;

use super::{BenchConfig, BenchError, BenchReport, CaseResult, CaseStatus};

pub const TLS_CASE: &str = "tls-baseline";

/// Runs OpenSSL's AEAD speed loop for each message size.
pub const DEFAULT_TLS_TEMPLATE: &str = "openssl speed -bytes {size} -seconds 1 -evp aes-256-gcm";

fn doing_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // e.g. "Doing AES-256-GCM for 1s on 64 size blocks: 23493640 AES-256-GCM's in 0.98s"
    RE.get_or_init(|| {
        Regex::new(r"Doing .* on (\d+) size blocks: (\d+) .* in ([0-9]*\.?[0-9]+)s").unwrap()
    })
}

fn key_value_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^\s*ops_per_sec\s*=\s*([0-9]*\.?[0-9]+(?:[eE][+-]?\d+)?)\s*$").unwrap())
}

/// Extracts operations per second for `size`-byte messages from a speed
/// tool's output. Understands OpenSSL `speed` progress lines and a plain
/// `ops_per_sec = <number>` line for custom scripts.
pub fn parse_speed_output(output: &str, size: usize) -> Result<f64, BenchError> {
    let fail = |reason: String| BenchError::ExternalParse {
        reason,
        raw: output.to_string(),
    };
    let mut seen_sizes = Vec::new();
    for caps in doing_line().captures_iter(output) {
        let block: usize = caps[1].parse().map_err(|_| fail("bad block size".into()))?;
        if block != size {
            seen_sizes.push(block);
            continue;
        }
        let count: f64 = caps[2].parse().map_err(|_| fail("bad operation count".into()))?;
        let secs: f64 = caps[3].parse().map_err(|_| fail("bad elapsed time".into()))?;
        if secs <= 0.0 {
            return Err(fail(format!("non-positive elapsed time {secs}")));
        }
        return Ok(count / secs);
    }
    if !seen_sizes.is_empty() {
        return Err(fail(format!("no result for {size}-byte blocks (saw {seen_sizes:?})")));
    }
    if let Some(caps) = key_value_line().captures(output) {
        return caps[1]
            .parse()
            .map_err(|_| fail("bad ops_per_sec value".into()));
    }
    Err(fail("no recognizable throughput line".into()))
}

enum Run {
    Missing(String),
    Output(String),
}

fn run_template(template: &str, size: usize) -> Result<Run, BenchError> {
    let cmd = template.replace("{size}", &size.to_string());
    debug!("running external baseline: {cmd}");
    let out = match Command::new("sh").arg("-c").arg(&cmd).output() {
        Ok(out) => out,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Ok(Run::Missing(format!("shell unavailable: {e}")));
        }
        Err(e) => return Err(e.into()),
    };
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    match out.status.code() {
        Some(0) => Ok(Run::Output(text)),
        // command not found / not executable
        Some(127) | Some(126) => Ok(Run::Missing(format!("`{cmd}` not available"))),
        _ => Err(BenchError::External(format!("`{cmd}` exited with {}: {text}", out.status))),
    }
}

/// Measures an external TLS toolchain through a user-supplied command
/// template (`{size}` is replaced by the message size). A missing tool yields
/// skipped rows rather than an error.
pub fn bench_tls_baseline(cfg: &BenchConfig, template: &str) -> Result<BenchReport, BenchError> {
    if cfg.sizes.is_empty() || cfg.sizes.contains(&0) {
        return Err(BenchError::Parameter("message sizes must be non-empty and positive".into()));
    }
    let mut cases = Vec::with_capacity(cfg.sizes.len());
    for &size in &cfg.sizes {
        match run_template(template, size)? {
            Run::Missing(why) => {
                info!("tls baseline skipped: {why}");
                cases.push(CaseResult::skipped(TLS_CASE, size, why));
            }
            Run::Output(text) => {
                let ops = parse_speed_output(&text, size)?;
                let mean_us = if ops > 0.0 { 1e6 / ops } else { 0.0 };
                cases.push(CaseResult {
                    case: TLS_CASE.to_string(),
                    size_bytes: size,
                    ops_per_sec: ops,
                    mb_per_sec: ops * size as f64 / 1e6,
                    // the tool reports only an aggregate rate
                    p50_us: mean_us,
                    p99_us: mean_us,
                    status: CaseStatus::Measured,
                });
            }
        }
    }
    Ok(BenchReport::new(cases))
}

#[cfg(test)]
mod tests {
    use super::*;

    const OPENSSL3: &str = "Doing AES-256-GCM for 1s on 64 size blocks: 23493640 AES-256-GCM's in 0.98s\n\
version: 3.0.2\n\
The 'numbers' are in 1000s of bytes per second processed.\n\
type             64 bytes\n\
AES-256-GCM    1534278.53k\n";

    #[test]
    fn parses_openssl_progress_line() {
        // 23493640 / 0.98
        let ops = parse_speed_output(OPENSSL3, 64).unwrap();
        assert!((ops - 23_973_102.040_816_33).abs() < 1e-3);
    }

    #[test]
    fn picks_matching_block_size() {
        let multi = "Doing aes-256-gcm for 3s on 16 size blocks: 3000 aes-256-gcm's in 3.00s\n\
                     Doing aes-256-gcm for 3s on 64 size blocks: 1500 aes-256-gcm's in 2.50s\n";
        assert_eq!(parse_speed_output(multi, 64).unwrap(), 600.0);
        assert_eq!(parse_speed_output(multi, 16).unwrap(), 1000.0);
        assert!(parse_speed_output(multi, 1500).is_err());
    }

    #[test]
    fn parses_key_value_form() {
        assert_eq!(parse_speed_output("warming up\nops_per_sec = 12.5e3\n", 64).unwrap(), 12_500.0);
    }

    #[test]
    fn malformed_output_keeps_raw_text() {
        match parse_speed_output("segfault\n", 64) {
            Err(BenchError::ExternalParse { raw, .. }) => assert_eq!(raw, "segfault\n"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_tool_is_skipped() {
        let cfg = BenchConfig::with_sizes(&[64, 512]);
        let r = bench_tls_baseline(&cfg, "kiss-no-such-speed-tool-xyz {size}").unwrap();
        assert_eq!(r.cases.len(), 2);
        assert!(r.cases.iter().all(|c| c.is_skipped() && c.case == TLS_CASE));
    }

    #[test]
    fn script_output_is_parsed() {
        let cfg = BenchConfig::with_sizes(&[64, 128]);
        let r = bench_tls_baseline(&cfg, "echo ops_per_sec = {size}000").unwrap();
        assert_eq!(r.cases[0].ops_per_sec, 64_000.0);
        assert_eq!(r.cases[1].ops_per_sec, 128_000.0);
        assert!((r.cases[1].mb_per_sec - 16.384).abs() < 1e-9);
    }

    #[test]
    fn failing_tool_is_an_error() {
        let cfg = BenchConfig::with_sizes(&[64]);
        assert!(matches!(
            bench_tls_baseline(&cfg, "echo nope; exit 3"),
            Err(BenchError::External(_))
        ));
        assert!(matches!(
            bench_tls_baseline(&cfg, "echo garbage"),
            Err(BenchError::ExternalParse { .. })
        ));
    }
}
