//! Per-cell agent metrics: success rate, precision, pass@k and per-success costs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::RunRecord;

/// Largest attempt count accepted by the exact rational form.
pub const MAX_EXACT_N: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("success count {c} outside 0..={n}")]
    Successes { n: u32, c: u32 },
    #[error("k = {k} outside 1..={n}")]
    K { n: u32, k: u32 },
    #[error("n = {0} exceeds the exact range ({MAX_EXACT_N})")]
    TooLarge(u32),
}

fn check(n: u32, c: u32, k: u32) -> Result<(), DomainError> {
    if c > n {
        return Err(DomainError::Successes { n, c });
    }
    if k == 0 || k > n {
        return Err(DomainError::K { n, k });
    }
    Ok(())
}

/// `1 - C(n-c, k) / C(n, k)` as a product of ratios, so it never forms a binomial.
pub fn pass_at_k(n: u32, c: u32, k: u32) -> Result<f64, DomainError> {
    check(n, c, k)?;
    if k == 1 {
        return Ok(f64::from(c) / f64::from(n));
    }
    if n - c < k {
        return Ok(1.0);
    }
    let miss: f64 = (0..k).map(|i| f64::from(n - c - i) / f64::from(n - i)).product();
    Ok(1.0 - miss)
}

/// Binomial coefficient; exact for `n <= 64`.
pub fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * u128::from(n - i) / u128::from(i + 1))
}

/// pass@k as an exact fraction `(numerator, denominator)` with denominator `C(n, k)`.
pub fn pass_at_k_exact(n: u32, c: u32, k: u32) -> Result<(u128, u128), DomainError> {
    check(n, c, k)?;
    if n > MAX_EXACT_N {
        return Err(DomainError::TooLarge(n));
    }
    let total = binomial(n, k);
    Ok((total - binomial(n - c, k), total))
}

/// Metrics for one (model, mode, query) cell, or an average over several.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub attempts: usize,
    pub successes: usize,
    pub exact: usize,
    pub su: f64,
    pub pr: f64,
    pub p_at_1: f64,
    pub p_at_5: f64,
    pub tokens: u64,
    pub function_calls: u64,
    /// `None` when there are no successes.
    pub tk_per_su: Option<f64>,
    pub fc_per_su: Option<f64>,
}

impl MetricsRow {
    fn empty() -> Self {
        Self {
            attempts: 0,
            successes: 0,
            exact: 0,
            su: 0.0,
            pr: 0.0,
            p_at_1: 0.0,
            p_at_5: 0.0,
            tokens: 0,
            function_calls: 0,
            tk_per_su: None,
            fc_per_su: None,
        }
    }

    fn set_ratios(&mut self) {
        let su = self.successes as f64;
        self.tk_per_su = (self.successes > 0).then(|| self.tokens as f64 / su);
        self.fc_per_su = (self.successes > 0).then(|| self.function_calls as f64 / su);
    }
}

/// Metrics for the attempts of a single cell.
///
/// pass@5 uses `k = min(5, n)` so cells with fewer attempts still report a value.
pub fn compute_metrics_row(records: &[RunRecord]) -> MetricsRow {
    let mut row = MetricsRow::empty();
    if records.is_empty() {
        return row;
    }
    let n = records.len();
    row.attempts = n;
    row.successes = records.iter().filter(|r| r.success).count();
    row.exact = records.iter().filter(|r| r.precision).count();
    row.tokens = records.iter().map(|r| r.tokens).sum();
    row.function_calls = records.iter().map(|r| r.function_calls).sum();
    row.su = row.successes as f64 / n as f64;
    row.pr = row.exact as f64 / n as f64;
    let (n32, c32) = (n as u32, row.successes as u32);
    row.p_at_1 = pass_at_k(n32, c32, 1).unwrap_or(0.0);
    row.p_at_5 = pass_at_k(n32, c32, 5.min(n32)).unwrap_or(0.0);
    row.set_ratios();
    row
}

/// Averages rates over cells and divides summed costs by summed successes.
pub fn aggregate(rows: &[MetricsRow]) -> MetricsRow {
    let mut out = MetricsRow::empty();
    if rows.is_empty() {
        return out;
    }
    let m = rows.len() as f64;
    let mean = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / m;
    out.su = mean(|r| r.su);
    out.pr = mean(|r| r.pr);
    out.p_at_1 = mean(|r| r.p_at_1);
    out.p_at_5 = mean(|r| r.p_at_5);
    out.attempts = rows.iter().map(|r| r.attempts).sum();
    out.successes = rows.iter().map(|r| r.successes).sum();
    out.exact = rows.iter().map(|r| r.exact).sum();
    out.tokens = rows.iter().map(|r| r.tokens).sum();
    out.function_calls = rows.iter().map(|r| r.function_calls).sum();
    out.set_ratios();
    out
}
