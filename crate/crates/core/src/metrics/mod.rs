//! Relevance and diversity metrics, the rho sweep, rank correlation and
//! classical MDS.

mod bleu;
mod mds;
mod sweep;

pub use bleu::{bleu_multi_ref, corpus_bleu, BLEU_EPSILON};
pub use mds::{mds_project, stress, write_mds_csv, MdsPoint};
pub use sweep::{evaluate_outputs, sweep_rho, write_report_csv, EvalContext, MetricReport};

use std::collections::HashMap;

fn ngram_counts<T: Eq + std::hash::Hash + Clone>(corpus: &[Vec<T>], n: usize) -> (HashMap<&[T], usize>, usize) {
    let mut counts: HashMap<&[T], usize> = HashMap::new();
    let mut total = 0;
    for s in corpus {
        if s.len() < n || n == 0 {
            continue;
        }
        for w in s.windows(n) {
            *counts.entry(w).or_default() += 1;
            total += 1;
        }
    }
    (counts, total)
}

/// Unique n-grams over total n-grams across the corpus; 0 when the corpus has
/// no n-grams of that order.
pub fn distinct_n<T: Eq + std::hash::Hash + Clone>(corpus: &[Vec<T>], n: usize) -> f64 {
    let (counts, total) = ngram_counts(corpus, n);
    if total == 0 {
        return 0.0;
    }
    counts.len() as f64 / total as f64
}

/// Shannon entropy (nats) of the empirical n-gram distribution.
pub fn entropy_n<T: Eq + std::hash::Hash + Clone>(corpus: &[Vec<T>], n: usize) -> f64 {
    let (counts, total) = ngram_counts(corpus, n);
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    let mut freqs: Vec<usize> = counts.into_values().collect();
    freqs.sort_unstable();
    -freqs
        .into_iter()
        .map(|c| {
            let p = c as f64 / t;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks. `NaN`
/// when either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn distinct_examples() {
        assert!((distinct_n(&[s("a a b")], 1) - 2.0 / 3.0).abs() < 1e-15);
        let same: Vec<Vec<String>> = (0..10).map(|_| s("x")).collect();
        assert!((distinct_n(&same, 1) - 0.1).abs() < 1e-15);
        assert_eq!(distinct_n(&[s("a b c"), s("d e")], 2), 1.0);
        assert_eq!(distinct_n::<String>(&[], 2), 0.0);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_n(&[s("a b c d"), s("a b c d")], 4), 0.0);
        let uniform = vec![s("a b c d e f g")];
        assert!((entropy_n(&uniform, 4) - 4f64.ln()).abs() < 1e-12);
        assert!((entropy_n(&uniform, 4) - 1.3863).abs() < 1e-4);
        // counts {2, 1, 1}
        let corpus = vec![s("a b c d"), s("a b c d"), s("e f g h"), s("i j k l")];
        let expect = -(0.5 * 0.5f64.ln() + 0.25 * 0.25f64.ln() + 0.25 * 0.25f64.ln());
        assert!((entropy_n(&corpus, 4) - expect).abs() < 1e-12);
        assert!((entropy_n(&corpus, 4) - 1.0397).abs() < 1e-4);
    }

    /// O(corpus^2) enumeration: compare every n-gram with every other.
    fn brute(corpus: &[Vec<u8>], n: usize) -> (f64, f64) {
        let grams: Vec<&[u8]> = corpus
            .iter()
            .filter(|s| s.len() >= n)
            .flat_map(|s| s.windows(n))
            .collect();
        if grams.is_empty() {
            return (0.0, 0.0);
        }
        let mut distinct = 0usize;
        let mut entropy = 0.0;
        for (i, g) in grams.iter().enumerate() {
            if grams[..i].iter().all(|h| h != g) {
                distinct += 1;
                let c = grams.iter().filter(|h| *h == g).count() as f64;
                let p = c / grams.len() as f64;
                entropy -= p * p.ln();
            }
        }
        (distinct as f64 / grams.len() as f64, entropy)
    }

    proptest! {
        #[test]
        fn match_brute_force(corpus in proptest::collection::vec(proptest::collection::vec(0u8..4, 0..8), 0..12), n in 1usize..5) {
            let (d, e) = brute(&corpus, n);
            prop_assert_eq!(distinct_n(&corpus, n), d);
            prop_assert!((entropy_n(&corpus, n) - e).abs() < 1e-12);
            if d > 0.0 {
                prop_assert!(d <= 1.0);
            }
            prop_assert!(entropy_n(&corpus, n) >= 0.0);
        }
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        // hand value with ties: ranks x=[1,2,3,4], y=[1,2.5,2.5,4] -> rho = 4.5/sqrt(5*4.5)
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[0.1, 0.5, 0.5, 0.9]);
        assert!((rho - 4.5 / (5.0f64 * 4.5).sqrt()).abs() < 1e-12);
        assert!(spearman(&[1.0, 2.0], &[1.0, 1.0]).is_nan());
    }
}
