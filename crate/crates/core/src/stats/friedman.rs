use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub df: usize,
    pub mean_ranks: Vec<f64>,
    pub p: f64,
}

/// Upper tail of the chi-squared distribution.
pub fn chi2_upper_tail(chi2: f64, df: usize) -> f64 {
    if chi2 <= 0.0 {
        return 1.0;
    }
    gamma_ur(df as f64 / 2.0, chi2 / 2.0)
}

/// Twice the within-row mid-ranks (so ties stay integral), plus the tie
/// term sum(t^3 - t) for the row.
fn doubled_ranks(row: &[f64]) -> (Vec<i64>, i64) {
    let k = row.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0i64; k];
    let mut ties = 0i64;
    let mut i = 0;
    while i < k {
        let mut j = i;
        while j + 1 < k && row[order[j + 1]] == row[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the mean of ranks i+1..=j+1
        let doubled = (i + j + 2) as i64;
        for &c in &order[i..=j] {
            ranks[c] = doubled;
        }
        let t = (j - i + 1) as i64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

/// Friedman test over `rows` (subjects) by columns (conditions), with
/// mid-ranks for ties and the usual tie-corrected statistic. Larger values
/// get larger ranks.
pub fn friedman(rows: &[Vec<f64>]) -> Result<FriedmanResult, StatsError> {
    let k = rows.first().map_or(0, Vec::len);
    if k < 2 {
        return Err(StatsError::TooFewConditions(k));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != k {
            return Err(StatsError::Ragged {
                row: i,
                expected: k,
                found: r.len(),
            });
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite { row: i, col });
        }
    }
    let n = rows.len();
    let mut sums2 = vec![0i64; k];
    let mut tie_total = 0i64;
    for r in rows {
        let (ranks, ties) = doubled_ranks(r);
        for (s, x) in sums2.iter_mut().zip(ranks) {
            *s += x;
        }
        tie_total += ties;
    }
    let mean_ranks: Vec<f64> = sums2.iter().map(|&s| s as f64 / (2 * n) as f64).collect();
    let df = k - 1;

    let (n_i, k_i) = (n as i128, k as i128);
    let sum_sq: i128 = sums2.iter().map(|&s| (s as i128) * (s as i128)).sum();
    // 12 * sum(R^2) with R = S/2 is 3 * sum(S^2).
    let numer = (k_i - 1) * (3 * sum_sq - 3 * n_i * n_i * k_i * (k_i + 1) * (k_i + 1));
    let denom = n_i * k_i * (k_i * k_i - 1) - tie_total as i128;
    let chi2 = if n < 2 || denom == 0 {
        0.0
    } else {
        (numer as f64 / denom as f64).max(0.0)
    };
    Ok(FriedmanResult {
        chi2,
        df,
        p: chi2_upper_tail(chi2, df),
        mean_ranks,
    })
}

/// "A>B>C" ordering of `labels` by descending mean rank; equal ranks are
/// joined with "=".
pub fn relationship(labels: &[&str], mean_ranks: &[f64]) -> String {
    let mut idx: Vec<usize> = (0..labels.len().min(mean_ranks.len())).collect();
    idx.sort_by(|&a, &b| mean_ranks[b].total_cmp(&mean_ranks[a]).then(a.cmp(&b)));
    let mut out = String::new();
    for (pos, &i) in idx.iter().enumerate() {
        if pos > 0 {
            let prev = idx[pos - 1];
            out.push(if mean_ranks[prev] == mean_ranks[i] {
                '='
            } else {
                '>'
            });
        }
        out.push_str(labels[i]);
    }
    out
}
