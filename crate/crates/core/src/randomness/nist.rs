use super::special::{erfc, igamc, normal_cdf};
use super::{BitStream, RandomnessError, TestResult, MIN_STREAM_BITS};

fn param_err(msg: String) -> RandomnessError {
    RandomnessError::Parameter(msg)
}

fn require_len(s: &BitStream, min: usize, test: &str) -> Result<usize, RandomnessError> {
    let n = s.len();
    if n < min {
        return Err(param_err(format!("{test} needs at least {min} bits, got {n}")));
    }
    Ok(n)
}

fn floor_log2(n: usize) -> usize {
    (usize::BITS - 1 - n.leading_zeros()) as usize
}

/// Frequency (monobit) test.
pub fn monobit_test(s: &BitStream) -> Result<TestResult, RandomnessError> {
    let n = require_len(s, MIN_STREAM_BITS, "monobit")?;
    let sum = 2 * s.ones() as i64 - n as i64;
    let s_obs = (sum.unsigned_abs() as f64) / (n as f64).sqrt();
    let p = erfc(s_obs / std::f64::consts::SQRT_2);
    Ok(TestResult::new("monobit", p, vec![("n", n as f64), ("s_n", sum as f64)]))
}

/// Frequency test within blocks of `block_len` bits.
pub fn block_frequency_test(s: &BitStream, block_len: usize) -> Result<TestResult, RandomnessError> {
    let n = require_len(s, MIN_STREAM_BITS, "block frequency")?;
    if block_len < 2 || block_len > n {
        return Err(param_err(format!("block length {block_len} outside 2..={n}")));
    }
    let blocks = n / block_len;
    let chi_sq: f64 = s
        .bits()
        .chunks_exact(block_len)
        .map(|blk| {
            let pi = blk.iter().map(|&b| b as usize).sum::<usize>() as f64 / block_len as f64;
            (pi - 0.5).powi(2)
        })
        .sum::<f64>()
        * 4.0
        * block_len as f64;
    let p = igamc(blocks as f64 / 2.0, chi_sq / 2.0);
    Ok(TestResult::new(
        "block_frequency",
        p,
        vec![("n", n as f64), ("block_len", block_len as f64), ("chi_sq", chi_sq)],
    ))
}

/// Runs test. A stream failing the frequency prerequisite yields a failed
/// result with `prerequisite_met = false` rather than an error.
pub fn runs_test(s: &BitStream) -> Result<TestResult, RandomnessError> {
    let n = require_len(s, MIN_STREAM_BITS, "runs")?;
    let nf = n as f64;
    let pi = s.ones() as f64 / nf;
    let tau = 2.0 / nf.sqrt();
    if (pi - 0.5).abs() >= tau {
        let mut r = TestResult::new("runs", 0.0, vec![("n", nf), ("pi", pi), ("tau", tau)]);
        r.prerequisite_met = false;
        r.pass = false;
        return Ok(r);
    }
    let v_obs = 1 + s.bits().windows(2).filter(|w| w[0] != w[1]).count();
    let q = pi * (1.0 - pi);
    let p = erfc((v_obs as f64 - 2.0 * nf * q).abs() / (2.0 * (2.0 * nf).sqrt() * q));
    Ok(TestResult::new(
        "runs",
        p,
        vec![("n", nf), ("pi", pi), ("v_obs", v_obs as f64)],
    ))
}

struct LongestRunTable {
    block_len: usize,
    /// run length mapped to class 0
    lowest: usize,
    probs: &'static [f64],
}

// Class probabilities for the longest run of ones in a block.
const LONGEST_RUN_8: LongestRunTable = LongestRunTable {
    block_len: 8,
    lowest: 1,
    probs: &[0.21484375, 0.3671875, 0.23046875, 0.1875],
};
const LONGEST_RUN_128: LongestRunTable = LongestRunTable {
    block_len: 128,
    lowest: 4,
    probs: &[0.1174035788, 0.242955959, 0.249363483, 0.17517706, 0.102701071, 0.112398847],
};
const LONGEST_RUN_10K: LongestRunTable = LongestRunTable {
    block_len: 10_000,
    lowest: 10,
    probs: &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727],
};

/// Longest-run-of-ones test; the block size is chosen from the stream length.
pub fn longest_run_test(s: &BitStream) -> Result<TestResult, RandomnessError> {
    let n = require_len(s, 128, "longest run")?;
    let table = if n < 6272 {
        &LONGEST_RUN_8
    } else if n < 750_000 {
        &LONGEST_RUN_128
    } else {
        &LONGEST_RUN_10K
    };
    let k = table.probs.len() - 1;
    let mut counts = vec![0usize; k + 1];
    for blk in s.bits().chunks_exact(table.block_len) {
        let (mut run, mut longest) = (0usize, 0usize);
        for &b in blk {
            run = if b == 1 { run + 1 } else { 0 };
            longest = longest.max(run);
        }
        counts[longest.saturating_sub(table.lowest).min(k)] += 1;
    }
    let blocks = (n / table.block_len) as f64;
    let chi_sq: f64 = counts
        .iter()
        .zip(table.probs)
        .map(|(&c, &p)| (c as f64 - blocks * p).powi(2) / (blocks * p))
        .sum();
    let p = igamc(k as f64 / 2.0, chi_sq / 2.0);
    Ok(TestResult::new(
        "longest_run",
        p,
        vec![("n", n as f64), ("block_len", table.block_len as f64), ("chi_sq", chi_sq)],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CusumMode {
    Forward,
    Reverse,
}

/// Cumulative sums test, forward mode.
pub fn cusum_test(s: &BitStream) -> Result<TestResult, RandomnessError> {
    cusum_test_mode(s, CusumMode::Forward)
}

pub fn cusum_test_mode(s: &BitStream, mode: CusumMode) -> Result<TestResult, RandomnessError> {
    let n = require_len(s, MIN_STREAM_BITS, "cumulative sums")?;
    let mut sum = 0i64;
    let mut z = 0i64;
    let mut step = |b: &u8| {
        sum += if *b == 1 { 1 } else { -1 };
        z = z.max(sum.abs());
    };
    match mode {
        CusumMode::Forward => s.bits().iter().for_each(&mut step),
        CusumMode::Reverse => s.bits().iter().rev().for_each(&mut step),
    }
    let n_i = n as i64;
    let sqrt_n = (n as f64).sqrt();
    let zf = z as f64;
    let phi = |k: i64, off: i64| normal_cdf(((4 * k + off) as f64) * zf / sqrt_n);
    // summation bounds use truncating integer division, as in the reference code
    let mut sum1 = 0.0;
    for k in ((-n_i / z + 1) / 4)..=((n_i / z - 1) / 4) {
        sum1 += phi(k, 1) - phi(k, -1);
    }
    let mut sum2 = 0.0;
    for k in ((-n_i / z - 3) / 4)..=((n_i / z - 1) / 4) {
        sum2 += phi(k, 3) - phi(k, 1);
    }
    let p = 1.0 - sum1 + sum2;
    let name = match mode {
        CusumMode::Forward => "cusum",
        CusumMode::Reverse => "cusum_reverse",
    };
    Ok(TestResult::new(name, p, vec![("n", n as f64), ("z", zf)]))
}

/// Overlapping pattern counts of length `m` with wrap-around; index is the
/// pattern read most-significant bit first.
fn pattern_counts(bits: &[u8], m: usize) -> Vec<u64> {
    let mut counts = vec![0u64; 1 << m];
    if m == 0 {
        counts[0] = bits.len() as u64;
        return counts;
    }
    let mask = (1usize << m) - 1;
    let mut window = 0usize;
    for &b in &bits[..m - 1] {
        window = (window << 1) | b as usize;
    }
    for &b in bits[m - 1..].iter().chain(&bits[..m - 1]) {
        window = ((window << 1) | b as usize) & mask;
        counts[window] += 1;
    }
    counts
}

fn check_pattern_len(n: usize, m: usize, min_m: usize, test: &str) -> Result<(), RandomnessError> {
    let max_m = floor_log2(n).saturating_sub(2);
    if m < min_m || m > max_m {
        return Err(param_err(format!(
            "{test}: pattern length {m} outside {min_m}..={max_m} for n = {n}"
        )));
    }
    Ok(())
}

/// Approximate entropy test with pattern length `m`.
pub fn approximate_entropy_test(s: &BitStream, m: usize) -> Result<TestResult, RandomnessError> {
    let n = require_len(s, MIN_STREAM_BITS, "approximate entropy")?;
    check_pattern_len(n, m, 1, "approximate entropy")?;
    let nf = n as f64;
    let phi = |m: usize| -> f64 {
        pattern_counts(s.bits(), m)
            .into_iter()
            .filter(|&c| c > 0)
            .map(|c| {
                let f = c as f64 / nf;
                f * f.ln()
            })
            .sum()
    };
    let ap_en = phi(m) - phi(m + 1);
    let chi_sq = 2.0 * nf * (std::f64::consts::LN_2 - ap_en);
    let p = igamc((1u64 << (m - 1)) as f64, chi_sq / 2.0);
    Ok(TestResult::new(
        "approximate_entropy",
        p,
        vec![("n", nf), ("m", m as f64), ("ap_en", ap_en), ("chi_sq", chi_sq)],
    ))
}

/// Serial test with pattern length `m`. The reported p-value is the one for
/// the first difference of the psi-squared statistics; the second-difference
/// p-value is kept in `params` as `p_value_2`.
pub fn serial_test(s: &BitStream, m: usize) -> Result<TestResult, RandomnessError> {
    let n = require_len(s, MIN_STREAM_BITS, "serial")?;
    check_pattern_len(n, m, 2, "serial")?;
    let (del1, del2, pv1, pv2) = serial_stats(s.bits(), m);
    Ok(TestResult::new(
        "serial",
        pv1,
        vec![("n", n as f64), ("m", m as f64), ("del_psi_sq", del1), ("del2_psi_sq", del2), ("p_value_2", pv2)],
    ))
}

/// First and second psi-squared differences and their p-values.
fn serial_stats(bits: &[u8], m: usize) -> (f64, f64, f64, f64) {
    let nf = bits.len() as f64;
    let psi_sq = |m: usize| -> f64 {
        if m == 0 {
            return 0.0;
        }
        let sum_sq: f64 = pattern_counts(bits, m)
            .into_iter()
            .map(|c| (c as f64) * (c as f64))
            .sum();
        (1u64 << m) as f64 / nf * sum_sq - nf
    };
    let (p0, p1, p2) = (psi_sq(m), psi_sq(m - 1), psi_sq(m - 2));
    let del1 = p0 - p1;
    let del2 = p0 - 2.0 * p1 + p2;
    let pv1 = igamc(2f64.powi(m as i32 - 2), del1 / 2.0);
    let pv2 = igamc(2f64.powi(m as i32 - 3), del2 / 2.0);
    (del1, del2, pv1, pv2)
}
