use fusedstyle_core::corpus::{synth_corpus, StyleTransform, SynthSpec, Vocabulary};
use fusedstyle_core::style::{train_classifiers, ClassifierConfig};

/// Held-out n-gram accuracy of a classifier separating style sentences from
/// conversation responses.
fn ngram_accuracy(spec: &SynthSpec) -> f64 {
    let corpus = synth_corpus(spec, 41).unwrap();
    let vocab = Vocabulary::build(
        corpus
            .pairs
            .iter()
            .map(|p| &p.response)
            .chain(corpus.style.iter())
            .map(Vec::as_slice),
        10_000,
    );
    let pos: Vec<Vec<usize>> = corpus.style.iter().map(|s| vocab.encode(s)).collect();
    let neg: Vec<Vec<usize>> = corpus.pairs.iter().map(|p| vocab.encode(&p.response)).collect();
    let (_, report) = train_classifiers(&pos, &neg, vocab.len(), &ClassifierConfig::default()).unwrap();
    report.ngram_accuracy
}

fn base() -> SynthSpec {
    SynthSpec {
        n_pairs: 4000,
        n_style: 4000,
        stylized_response_rate: 0.0,
        ..SynthSpec::default()
    }
}

#[test]
fn identity_transform_is_indistinguishable() {
    let spec = SynthSpec {
        style: StyleTransform::identity(),
        ..base()
    };
    let acc = ngram_accuracy(&spec);
    assert!((acc - 0.5).abs() <= 0.05, "accuracy {acc}");
}

#[test]
fn thirty_percent_substitution_is_separable() {
    let spec = base();
    let style = StyleTransform::substitute_fraction(&spec.lexicon(), 0.3, 17);
    let acc = ngram_accuracy(&SynthSpec { style, ..spec });
    assert!(acc > 0.9, "accuracy {acc}");
}
