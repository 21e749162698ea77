//! Quality of a sketch's output measured against the exact oracle.
//!
//! CSV column order (see [`EvalReport::CSV_HEADER`]):
//! `n,runs,output_size,exact_size,accuracy_violation_rate,mean_abs_error,coverage_violation_rate,coverage_failure_rate,false_positive_ratio,recall`.

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::Prefix;
use crate::oracle::ExactCounts;
use crate::sketch::HhhCandidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Packets in the evaluated stream.
    pub n: u64,
    /// Independent runs folded into this report.
    pub runs: u64,
    /// Mean number of emitted prefixes.
    pub output_size: f64,
    /// Size of the exact HHH set.
    pub exact_size: f64,
    /// Fraction of emitted prefixes with `|f_p - f_p^+| > epsilon * N`.
    pub accuracy_violation_rate: f64,
    /// Mean of `|f_p - f_p^+| / N` over emitted prefixes.
    pub mean_abs_error: f64,
    /// Fraction of non-emitted prefixes `q` with `C_{q|P} >= theta * N`, over
    /// all generalizations of observed keys.
    pub coverage_violation_rate: f64,
    /// Fraction of runs with at least one coverage violation.
    pub coverage_failure_rate: f64,
    /// `|P \ exact| / |P|`.
    pub false_positive_ratio: f64,
    /// `|P ∩ exact| / |exact|`.
    pub recall: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "n,runs,output_size,exact_size,accuracy_violation_rate,mean_abs_error,coverage_violation_rate,coverage_failure_rate,false_positive_ratio,recall";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.runs,
            self.output_size,
            self.exact_size,
            self.accuracy_violation_rate,
            self.mean_abs_error,
            self.coverage_violation_rate,
            self.coverage_failure_rate,
            self.false_positive_ratio,
            self.recall
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn miss_rate(&self) -> f64 {
        1.0 - self.recall
    }
}

/// Compares one output against the oracle.
///
/// `n` is the sketch's packet count and must match the oracle's stream length.
pub fn evaluate(
    candidates: &[HhhCandidate],
    n: u64,
    counts: &ExactCounts,
    epsilon: f64,
    theta: f64,
) -> Result<EvalReport> {
    if n != counts.n() {
        return Err(Error::usage(format!(
            "sketch saw {n} packets but the oracle counted {}",
            counts.n()
        )));
    }
    if n == 0 {
        return Err(Error::usage("cannot evaluate an empty stream"));
    }
    let exact = counts.exact_hhh(theta)?;
    let nf = n as f64;

    let mut violations = 0usize;
    let mut abs_err = 0.0;
    for c in candidates {
        let err = (counts.frequency(&c.prefix) as f64 - c.upper).abs();
        abs_err += err / nf;
        if err > epsilon * nf {
            violations += 1;
        }
    }
    let emitted: Vec<Prefix> = candidates.iter().map(|c| c.prefix).collect();
    let emitted_set: FxHashSet<Prefix> = emitted.iter().copied().collect();
    let exact_set: FxHashSet<Prefix> = exact.iter().copied().collect();

    let threshold = theta * nf;
    let conditioned = counts.conditioned_all(&emitted);
    let uncovered = conditioned.iter().filter(|(_, c)| *c as f64 >= threshold).count();
    let universe: usize = (0..counts.spec().h())
        .map(|node| {
            counts
                .node_counts(node)
                .filter(|(p, _)| !emitted_set.contains(p))
                .count()
        })
        .sum();

    let hits = emitted_set.intersection(&exact_set).count();
    let rate = |num: usize, den: usize, empty: f64| if den == 0 { empty } else { num as f64 / den as f64 };

    Ok(EvalReport {
        n,
        runs: 1,
        output_size: emitted_set.len() as f64,
        exact_size: exact_set.len() as f64,
        accuracy_violation_rate: rate(violations, candidates.len(), 0.0),
        mean_abs_error: if candidates.is_empty() {
            0.0
        } else {
            abs_err / candidates.len() as f64
        },
        coverage_violation_rate: rate(uncovered, universe, 0.0),
        coverage_failure_rate: if uncovered > 0 { 1.0 } else { 0.0 },
        false_positive_ratio: rate(emitted_set.len() - hits, emitted_set.len(), 0.0),
        recall: rate(hits, exact_set.len(), 1.0),
    })
}

/// Averages reports from runs over the same stream length.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports.first().ok_or_else(|| Error::usage("no reports to aggregate"))?;
    if let Some(r) = reports.iter().find(|r| r.n != first.n) {
        return Err(Error::usage(format!(
            "reports cover different stream lengths ({} and {})",
            first.n, r.n
        )));
    }
    let runs: u64 = reports.iter().map(|r| r.runs).sum();
    // Weight by runs so that aggregating aggregates stays a plain mean.
    let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(|r| f(r) * r.runs as f64).sum::<f64>() / runs as f64;
    Ok(EvalReport {
        n: first.n,
        runs,
        output_size: mean(|r| r.output_size),
        exact_size: mean(|r| r.exact_size),
        accuracy_violation_rate: mean(|r| r.accuracy_violation_rate),
        mean_abs_error: mean(|r| r.mean_abs_error),
        coverage_violation_rate: mean(|r| r.coverage_violation_rate),
        coverage_failure_rate: mean(|r| r.coverage_failure_rate),
        false_positive_ratio: mean(|r| r.false_positive_ratio),
        recall: mean(|r| r.recall),
    })
}
