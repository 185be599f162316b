use std::collections::HashMap;

/// Stand-in count for an n-gram order with no clipped matches.
pub const BLEU_EPSILON: f64 = 1e-9;

fn counts(t: &[usize], n: usize) -> HashMap<&[usize], usize> {
    let mut c = HashMap::new();
    if t.len() >= n {
        for w in t.windows(n) {
            *c.entry(w).or_insert(0) += 1;
        }
    }
    c
}

/// Clipped matches and hypothesis n-gram total for one order.
fn clipped(hyp: &[usize], refs: &[Vec<usize>], n: usize) -> (usize, usize) {
    let h = counts(hyp, n);
    let mut max_ref: HashMap<&[usize], usize> = HashMap::new();
    for r in refs {
        for (g, c) in counts(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let matched = h
        .iter()
        .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, hyp.len().saturating_sub(n - 1))
}

/// Reference length closest to `c`; the shorter one on ties.
fn closest_ref_len(c: usize, refs: &[Vec<usize>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| ((r as i64 - c as i64).abs(), r))
        .unwrap_or(0)
}

fn combine(matched: &[usize], totals: &[usize], c: usize, r: usize) -> f64 {
    if c == 0 {
        return 0.0;
    }
    let max_n = matched.len();
    let log_p: f64 = matched
        .iter()
        .zip(totals)
        .map(|(&m, &t)| {
            let num = if m == 0 { BLEU_EPSILON } else { m as f64 };
            (num / t.max(1) as f64).ln()
        })
        .sum::<f64>()
        / max_n as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    100.0 * bp * log_p.exp()
}

/// Sentence BLEU-`max_n` in percent with uniform weights, clipping against
/// the per-n-gram maximum over references and a brevity penalty against the
/// closest reference length. Zero match counts are replaced by
/// [`BLEU_EPSILON`].
pub fn bleu_multi_ref(hyp: &[usize], refs: &[Vec<usize>], max_n: usize) -> f64 {
    assert!(!refs.is_empty(), "BLEU needs at least one reference");
    if hyp.is_empty() {
        log::warn!("empty hypothesis scores BLEU 0");
        return 0.0;
    }
    let (matched, totals): (Vec<usize>, Vec<usize>) = (1..=max_n).map(|n| clipped(hyp, refs, n)).unzip();
    combine(&matched, &totals, hyp.len(), closest_ref_len(hyp.len(), refs))
}

/// Corpus BLEU: clipped counts, hypothesis lengths and closest reference
/// lengths are summed over the corpus before combining.
pub fn corpus_bleu(hyps: &[Vec<usize>], refs: &[Vec<Vec<usize>>], max_n: usize) -> f64 {
    assert_eq!(hyps.len(), refs.len());
    let mut matched = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let mut c = 0;
    let mut r = 0;
    for (h, rs) in hyps.iter().zip(refs) {
        for n in 1..=max_n {
            let (m, t) = clipped(h, rs, n);
            matched[n - 1] += m;
            totals[n - 1] += t;
        }
        c += h.len();
        r += closest_ref_len(h.len(), rs);
    }
    combine(&matched, &totals, c, r)
}
