use crate::corpus::{synth_corpus, ConversationPair, StyleSentence, SynthSpec, Vocabulary};
use crate::model::{ModelConfig, ModelParams};
use crate::nn::CellType;

pub(crate) struct Fixture {
    pub vocab: Vocabulary,
    pub conv: Vec<ConversationPair>,
    pub style: Vec<StyleSentence>,
}

pub(crate) fn fixture(n_pairs: usize, n_style: usize, seed: u64) -> Fixture {
    let spec = SynthSpec {
        n_pairs,
        n_style,
        ..SynthSpec::default()
    };
    let corpus = synth_corpus(&spec, seed).unwrap();
    let vocab = Vocabulary::build(
        corpus
            .pairs
            .iter()
            .flat_map(|p| p.context.iter().chain(std::iter::once(&p.response)))
            .chain(corpus.style.iter())
            .map(Vec::as_slice),
        10_000,
    );
    let conv = corpus.pairs.iter().map(|p| p.encode(&vocab)).collect();
    let style = corpus
        .style
        .iter()
        .enumerate()
        .map(|(i, s)| StyleSentence::new(vocab.encode(s), format!("synth#{i}")).unwrap())
        .collect();
    Fixture { vocab, conv, style }
}

pub(crate) fn small_model(vocab_size: usize, l: usize, seed: u64) -> ModelParams {
    ModelParams::new(
        ModelConfig {
            vocab_size,
            latent_dim: l,
            embed_dim: l,
            layers: 2,
            cell: CellType::Gru,
        },
        seed,
    )
    .unwrap()
}
