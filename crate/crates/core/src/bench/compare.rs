use std::fmt::Write as _;

use super::{BenchError, BenchReport, CaseStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    /// `label:case`
    pub name: String,
    pub size_bytes: usize,
    pub ops_per_sec: Option<f64>,
    pub mb_per_sec: Option<f64>,
    pub p50_us: Option<f64>,
    pub p99_us: Option<f64>,
    /// ops/sec relative to the baseline row at the same size.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_default()
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case,size_bytes,ops_per_sec,mb_per_sec,p50_us,p99_us,ratio\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.name,
                r.size_bytes,
                opt(r.ops_per_sec, 2),
                opt(r.mb_per_sec, 3),
                opt(r.p50_us, 3),
                opt(r.p99_us, 3),
                opt(r.ratio, 2)
            )
            .unwrap();
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    r.size_bytes.to_string(),
                    r.ops_per_sec.map_or("skipped".into(), |v| format!("{v:.0}")),
                    opt(r.mb_per_sec, 2),
                    opt(r.ratio, 2),
                ]
            })
            .collect();
        let head = ["case", "size (B)", "ops/s", "MB/s", &format!("x {}", self.baseline)];
        let mut widths: Vec<usize> = head.iter().map(|h| h.len()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cols: &[&str]| {
            let body: Vec<String> = cols
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            format!("| {} |\n", body.join(" | "))
        };
        let mut out = line(&head);
        let rule: Vec<String> = widths
            .iter()
            .enumerate()
            .map(|(i, w)| if i == 0 { "-".repeat(*w) } else { format!("{}:", "-".repeat(w - 1)) })
            .collect();
        out.push_str(&format!("| {} |\n", rule.join(" | ")));
        for row in &cells {
            let refs: Vec<&str> = row.iter().map(String::as_str).collect();
            out.push_str(&line(&refs));
        }
        out
    }
}

/// Lines up labeled reports on a shared message-size axis and computes each
/// row's ops/sec ratio against the `baseline` row (`label:case`).
pub fn compare_reports(reports: &[(&str, &BenchReport)], baseline: &str) -> Result<Comparison, BenchError> {
    if reports.len() < 2 {
        return Err(BenchError::Parameter("comparison needs at least two reports".into()));
    }
    let axis = reports[0].1.sizes();
    for (label, r) in &reports[1..] {
        if r.sizes() != axis {
            return Err(BenchError::Parameter(format!(
                "report `{label}` has sizes {:?}, expected {axis:?}",
                r.sizes()
            )));
        }
    }
    let base = reports
        .iter()
        .flat_map(|(label, r)| r.cases.iter().map(move |c| (format!("{label}:{}", c.case), c)))
        .filter(|(name, _)| name == baseline)
        .map(|(_, c)| c)
        .collect::<Vec<_>>();
    if base.is_empty() {
        return Err(BenchError::Parameter(format!("baseline row `{baseline}` not found")));
    }
    let base_ops = |size: usize| {
        base.iter()
            .find(|c| c.size_bytes == size && c.status == CaseStatus::Measured)
            .map(|c| c.ops_per_sec)
            .filter(|v| *v > 0.0)
    };
    let rows = reports
        .iter()
        .flat_map(|(label, r)| {
            r.cases.iter().map(move |c| {
                let measured = c.status == CaseStatus::Measured;
                let keep = |v: f64| measured.then_some(v);
                ComparisonRow {
                    name: format!("{label}:{}", c.case),
                    size_bytes: c.size_bytes,
                    ops_per_sec: keep(c.ops_per_sec),
                    mb_per_sec: keep(c.mb_per_sec),
                    p50_us: keep(c.p50_us),
                    p99_us: keep(c.p99_us),
                    ratio: base_ops(c.size_bytes).and_then(|b| keep(c.ops_per_sec / b)),
                }
            })
        })
        .collect();
    Ok(Comparison {
        baseline: baseline.to_string(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::super::CaseResult;
    use super::*;

    fn report(case: &str, rows: &[(usize, f64)]) -> BenchReport {
        BenchReport::new(
            rows.iter()
                .map(|&(size, ops)| CaseResult {
                    case: case.into(),
                    size_bytes: size,
                    ops_per_sec: ops,
                    mb_per_sec: ops * size as f64 / 1e6,
                    p50_us: 1.0,
                    p99_us: 2.0,
                    status: CaseStatus::Measured,
                })
                .collect(),
        )
    }

    #[test]
    fn identical_reports_have_unit_ratios() {
        let r = report("hmac", &[(64, 1000.0), (512, 400.0)]);
        let cmp = compare_reports(&[("a", &r), ("b", &r)], "a:hmac").unwrap();
        assert_eq!(cmp.rows.len(), 4);
        assert!(cmp.rows.iter().all(|row| row.ratio == Some(1.0)));
        assert!(cmp.to_csv().lines().skip(1).all(|l| l.ends_with(",1.00")));
    }

    #[test]
    fn ratio_is_cell_division() {
        let kiss = report("seal", &[(64, 900.0), (1500, 300.0)]);
        let tls = report("tls", &[(64, 600.0), (1500, 250.0)]);
        let cmp = compare_reports(&[("kiss", &kiss), ("tls", &tls)], "tls:tls").unwrap();
        assert_eq!(cmp.rows[0].ratio, Some(1.5));
        assert_eq!(cmp.rows[1].ratio, Some(1.2));
        let csv = cmp.to_csv();
        // header plus cases x sizes
        assert_eq!(csv.lines().count(), 1 + 2 * 2);
        assert!(csv.contains("kiss:seal,64,900.00,0.058,1.000,2.000,1.50"));
        let md = cmp.to_markdown();
        assert!(md.contains("kiss:seal") && md.contains("tls:tls"));
        let widths: Vec<usize> = md.lines().map(str::len).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]), "{md}");
    }

    #[test]
    fn skipped_rows_have_no_ratio() {
        let kiss = report("seal", &[(64, 900.0)]);
        let tls = BenchReport::new(vec![CaseResult::skipped("tls", 64, "missing")]);
        let cmp = compare_reports(&[("kiss", &kiss), ("tls", &tls)], "kiss:seal").unwrap();
        assert_eq!(cmp.rows[1].ratio, None);
        assert!(cmp.to_csv().contains("tls:tls,64,,,,,"));
        assert!(cmp.to_markdown().contains("skipped"));
    }

    #[test]
    fn parameter_errors() {
        let a = report("x", &[(64, 1.0)]);
        let b = report("x", &[(512, 1.0)]);
        assert!(compare_reports(&[("a", &a)], "a:x").is_err());
        assert!(compare_reports(&[("a", &a), ("b", &b)], "a:x").is_err());
        assert!(compare_reports(&[("a", &a), ("c", &a)], "zzz").is_err());
    }
}
