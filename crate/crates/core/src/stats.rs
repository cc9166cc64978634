//! Bootstrap confidence intervals and paired McNemar tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Below this many discordant pairs McNemar uses the exact binomial test.
pub const DEFAULT_EXACT_BELOW: usize = 25;

/// Linear-interpolated quantile of sorted data (`q` in [0, 1]).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap interval for the mean of a correctness vector.
pub fn bootstrap_ci(vector: &[bool], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    assert!(!vector.is_empty(), "bootstrap needs a non-empty vector");
    assert!(resamples > 0);
    let n = vector.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let hits = (0..n).filter(|_| vector[rng.random_range(0..n)]).count();
            hits as f64 / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&means, tail), quantile_sorted(&means, 1.0 - tail))
}

pub fn mean(v: &[bool]) -> f64 {
    v.iter().filter(|&&b| b).count() as f64 / v.len().max(1) as f64
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Discordant counts: `b` = first right & second wrong, `c` = the reverse.
pub fn discordant(v1: &[bool], v2: &[bool]) -> (usize, usize) {
    assert_eq!(v1.len(), v2.len(), "McNemar needs equal-length vectors");
    v1.iter().zip(v2).fold((0, 0), |(b, c), (&x, &y)| match (x, y) {
        (true, false) => (b + 1, c),
        (false, true) => (b, c + 1),
        _ => (b, c),
    })
}

/// Two-sided exact binomial p-value for `b` vs `c` under p = 1/2.
pub fn exact_binomial_p(b: usize, c: usize) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.min(c);
    // C(n, i) / 2^n accumulated in log space keeps large n finite
    let mut log_c = 0.0f64;
    let mut tail = 0.0f64;
    let ln2n = n as f64 * std::f64::consts::LN_2;
    for i in 0..=k {
        if i > 0 {
            log_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (log_c - ln2n).exp();
    }
    (2.0 * tail).min(1.0)
}

/// Continuity-corrected chi-square McNemar p-value (no correction when b == c).
pub fn chi_square_p(b: usize, c: usize) -> f64 {
    let n = (b + c) as f64;
    if n == 0.0 {
        return 1.0;
    }
    let diff = (b as f64 - c as f64).abs();
    let corrected = if b == c { 0.0 } else { diff - 1.0 };
    let stat = corrected * corrected / n;
    statrs::function::erf::erfc((stat / 2.0).sqrt())
}

pub fn mcnemar_with(v1: &[bool], v2: &[bool], exact_below: usize) -> f64 {
    let (b, c) = discordant(v1, v2);
    if b + c == 0 {
        1.0
    } else if b + c < exact_below {
        exact_binomial_p(b, c)
    } else {
        chi_square_p(b, c)
    }
}

/// McNemar p-value; symmetric in its arguments.
pub fn mcnemar(v1: &[bool], v2: &[bool]) -> f64 {
    mcnemar_with(v1, v2, DEFAULT_EXACT_BELOW)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMatrix {
    pub names: Vec<String>,
    pub p: Vec<Vec<f64>>,
    pub significant: Vec<Vec<bool>>,
    pub pairs: usize,
    pub threshold: f64,
}

/// All-pairs McNemar with a Bonferroni threshold of `alpha / pairs`.
pub fn bonferroni_matrix(named: &[(String, Vec<bool>)], alpha: f64) -> PairwiseMatrix {
    let k = named.len();
    assert!(k >= 2, "need at least two vectors");
    let pairs = k * (k - 1) / 2;
    let threshold = alpha / pairs as f64;
    let mut p = vec![vec![1.0; k]; k];
    let mut significant = vec![vec![false; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = mcnemar(&named[i].1, &named[j].1);
            p[i][j] = v;
            p[j][i] = v;
            significant[i][j] = v < threshold;
            significant[j][i] = v < threshold;
        }
    }
    PairwiseMatrix {
        names: named.iter().map(|(n, _)| n.clone()).collect(),
        p,
        significant,
        pairs,
        threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(hits: usize, n: usize) -> Vec<bool> {
        (0..n).map(|i| i < hits).collect()
    }

    #[test]
    fn degenerate_bootstrap() {
        assert_eq!(bootstrap_ci(&[true; 50], 1000, 0.95, 1), (1.0, 1.0));
    }

    #[test]
    fn bootstrap_is_seeded() {
        let v = vector(30, 80);
        assert_eq!(bootstrap_ci(&v, 500, 0.95, 4), bootstrap_ci(&v, 500, 0.95, 4));
    }

    #[test]
    fn mcnemar_basics() {
        let v = vector(10, 20);
        assert_eq!(mcnemar(&v, &v), 1.0);
        let p = exact_binomial_p(15, 0);
        assert!((p - 2.0 * 0.5f64.powi(15)).abs() < 1e-15);
        assert!((p - 6.1e-5).abs() < 1e-6);
        assert!((chi_square_p(100, 100) - 1.0).abs() < 0.05);
    }

    #[test]
    fn switch_point() {
        // 24 discordants -> exact; 25 -> chi-square
        let a: Vec<bool> = (0..40).map(|i| i < 24).collect();
        let b = vec![false; 40];
        assert_eq!(mcnemar(&a, &b), exact_binomial_p(24, 0));
        let a: Vec<bool> = (0..40).map(|i| i < 25).collect();
        assert_eq!(mcnemar(&a, &b), chi_square_p(25, 0));
    }

    #[test]
    fn seven_configs_give_21_pairs() {
        let named: Vec<(String, Vec<bool>)> = (0..7).map(|i| (format!("c{i}"), vector(i * 3, 40))).collect();
        let m = bonferroni_matrix(&named, 0.05);
        assert_eq!(m.pairs, 21);
        assert!((m.threshold - 0.00238).abs() < 5e-6);
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(m.p[i][j], m.p[j][i]);
            }
        }
    }

    #[test]
    fn identical_pair_not_significant() {
        let v = vector(5, 10);
        let m = bonferroni_matrix(&[("a".into(), v.clone()), ("b".into(), v)], 0.05);
        assert_eq!(m.pairs, 1);
        assert_eq!(m.p[0][1], 1.0);
        assert!(!m.significant[0][1]);
    }

    #[test]
    fn mean_and_sd() {
        let (m, sd) = mean_sd(&[0.795, 0.789, 0.771]);
        assert!((m - 0.785).abs() < 1e-3);
        assert!((sd - 0.0125).abs() < 1e-3);
    }
}
