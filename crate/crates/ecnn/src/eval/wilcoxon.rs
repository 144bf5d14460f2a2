//! Exact one-tailed Wilcoxon paired signed-rank test. Zero differences are
//! dropped; tied magnitudes receive average ranks; the p-value enumerates the
//! null distribution of W+ exactly.

use super::EvalError;

#[derive(Debug, Clone)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Number of non-zero differences actually used.
    pub n_used: usize,
    /// One-tailed P(W+ >= observed) under the null.
    pub p_value: f64,
}

/// One-tailed test of `a > b` over paired samples.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.len() < 5 {
        return Err(EvalError::TooFewPairs(a.len()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(EvalError::UndefinedTest);
    }
    let n = diffs.len();

    // Average ranks over |d|; doubling keeps every rank an exact integer
    // (average ranks are multiples of one half).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut doubled_ranks = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        // Ranks i+1 ..= j+1 tie; average rank = (i + j + 2) / 2.
        let doubled_avg = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            doubled_ranks[k] = doubled_avg;
        }
        i = j + 1;
    }

    let w2_obs: u64 = diffs
        .iter()
        .zip(&doubled_ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, &r)| r)
        .sum();

    // Null distribution of the doubled statistic by subset-sum counting.
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    for &r in &doubled_ranks {
        for s in (r as usize..counts.len()).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    let assignments = 2f64.powi(n as i32);
    let at_least: f64 = counts[w2_obs as usize..].iter().sum();

    Ok(WilcoxonResult {
        w_plus: w2_obs as f64 / 2.0,
        n_used: n,
        p_value: at_least / assignments,
    })
}
