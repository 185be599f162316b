use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{corpus_bleu, distinct_n, entropy_n};
use crate::corpus::{StylizedTestSet, Vocabulary};
use crate::error::{Error, Result};
use crate::inference::{generate_candidates, SampleSpec};
use crate::model::ModelParams;
use crate::rng::derive_seed;
use crate::style::{count_metric, StyleKeywordList, StyleScorer};

/// One row of metrics over a set of system outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub entropy4: f64,
    pub distinct1: f64,
    pub distinct2: f64,
    pub style_neural: f64,
    pub style_ngram: f64,
    /// Keyword ratio, divided by the target corpus value when one is given.
    pub style_count_norm: f64,
}

pub const REPORT_COLUMNS: [&str; 10] = [
    "bleu1",
    "bleu2",
    "bleu3",
    "bleu4",
    "entropy4",
    "distinct1",
    "distinct2",
    "style_neural",
    "style_ngram",
    "style_count_norm",
];

impl MetricReport {
    pub fn values(&self) -> [f64; 10] {
        [
            self.bleu1,
            self.bleu2,
            self.bleu3,
            self.bleu4,
            self.entropy4,
            self.distinct1,
            self.distinct2,
            self.style_neural,
            self.style_ngram,
            self.style_count_norm,
        ]
    }
}

pub struct EvalContext<'a> {
    pub model: &'a ModelParams,
    pub scorer: &'a StyleScorer,
    pub vocab: &'a Vocabulary,
    pub keywords: Option<&'a StyleKeywordList>,
    /// Count metric of the target style corpus, used as normalizer.
    pub count_reference: Option<f64>,
}

/// Scores system outputs against the test references.
pub fn evaluate_outputs(
    scorer: &StyleScorer,
    vocab: &Vocabulary,
    keywords: Option<&StyleKeywordList>,
    count_reference: Option<f64>,
    outputs: &[Vec<usize>],
    refs: &[Vec<Vec<usize>>],
) -> MetricReport {
    let n = outputs.len().max(1) as f64;
    let (neural, ngram) = outputs.iter().fold((0.0, 0.0), |(a, b), h| {
        let s = scorer.scores(h);
        (a + s.neural, b + s.ngram)
    });
    let count = keywords.map_or(0.0, |kw| {
        let words: Vec<Vec<String>> = outputs.iter().map(|h| vocab.decode(h)).collect();
        let raw = count_metric(&words, kw);
        match count_reference {
            Some(r) if r > 0.0 => raw / r,
            _ => raw,
        }
    });
    MetricReport {
        bleu1: corpus_bleu(outputs, refs, 1),
        bleu2: corpus_bleu(outputs, refs, 2),
        bleu3: corpus_bleu(outputs, refs, 3),
        bleu4: corpus_bleu(outputs, refs, 4),
        entropy4: entropy_n(outputs, 4),
        distinct1: distinct_n(outputs, 1),
        distinct2: distinct_n(outputs, 2),
        style_neural: neural / n,
        style_ngram: ngram / n,
        style_count_norm: count,
    }
}

/// Top-1 output per test context at each rho. Per-context seeds are derived
/// from `spec.seed` and the context index, so rows are reproducible.
pub fn sweep_rho(
    test_set: &StylizedTestSet,
    ctx: &EvalContext<'_>,
    rhos: &[f64],
    spec: &SampleSpec,
) -> Result<Vec<(f64, MetricReport)>> {
    if test_set.is_empty() {
        return Err(Error::input("the test set is empty"));
    }
    let refs: Vec<Vec<Vec<usize>>> = test_set
        .entries
        .iter()
        .map(|e| e.references.iter().map(|r| r.tokens.clone()).collect())
        .collect();
    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let outputs: Vec<Vec<usize>> = test_set
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let s = SampleSpec {
                    rho,
                    seed: derive_seed(spec.seed, i as u64),
                    ..spec.clone()
                };
                let hyps = generate_candidates(ctx.model, ctx.scorer, &e.context, &s)?;
                Ok(hyps.into_iter().next().map(|h| h.tokens).unwrap_or_default())
            })
            .collect::<Result<_>>()?;
        let report = evaluate_outputs(
            ctx.scorer,
            ctx.vocab,
            ctx.keywords,
            ctx.count_reference,
            &outputs,
            &refs,
        );
        log::info!(
            "rho {rho}: style_ngram {:.4} bleu4 {:.3}",
            report.style_ngram,
            report.bleu4
        );
        rows.push((rho, report));
    }
    Ok(rows)
}

/// CSV with a leading key column (`rho` for sweeps, `variant` for grids)
/// followed by the metric columns.
pub fn write_report_csv<W: Write, K: std::fmt::Display>(w: W, key: &str, rows: &[(K, MetricReport)]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec![key.to_string()];
    header.extend(REPORT_COLUMNS.iter().map(|s| s.to_string()));
    csv.write_record(&header)?;
    for (k, r) in rows {
        let mut rec = vec![k.to_string()];
        rec.extend(r.values().iter().map(|v| format!("{v}")));
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows() {
        let mut buf = Vec::new();
        let r = MetricReport {
            bleu1: 1.0,
            ..MetricReport::default()
        };
        write_report_csv(&mut buf, "rho", &[(0.5, r.clone()), (1.0, r)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "rho,bleu1,bleu2,bleu3,bleu4,entropy4,distinct1,distinct2,style_neural,style_ngram,style_count_norm"
        );
        assert_eq!(lines[1], "0.5,1,0,0,0,0,0,0,0,0,0");
        assert_eq!(lines.len(), 3);
    }
}
