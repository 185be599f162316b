//! Conversation and style datasets: vocabulary, file formats, masking
//! augmentation, the synthetic two-style grammar and stylized test sets.

mod io;
mod masking;
mod synth;
mod testset;
mod vocab;

pub use io::{
    format_conversation_line, load_conversations, load_style, parse_conversation_line, read_conversations, read_style,
    write_conversations, write_style, Loaded,
};
pub use masking::{mask_probability, mask_style_tokens, MaskConfig};
pub use synth::{synth_corpus, StyleTransform, SynthCorpus, SynthSpec, Template};
pub use testset::{build_stylized_test_set, Reference, StylizedTestSet, TestEntry};
pub use vocab::{Vocabulary, BOS, EOS, EOU, PAD, RESERVED, UNK};

use serde::{Deserialize, Serialize};

/// A context of one or more utterances and a single response, as text tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawPair {
    pub context: Vec<Vec<String>>,
    pub response: Vec<String>,
}

/// A context/response pair encoded with a [`Vocabulary`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConversationPair {
    pub context: Vec<Vec<usize>>,
    pub response: Vec<usize>,
}

impl ConversationPair {
    pub fn new(context: Vec<Vec<usize>>, response: Vec<usize>) -> crate::Result<Self> {
        if context.is_empty() || context.iter().any(Vec::is_empty) {
            return Err(crate::Error::input(
                "context must hold at least one non-empty utterance",
            ));
        }
        if response.is_empty() {
            return Err(crate::Error::input("response must be non-empty"));
        }
        Ok(ConversationPair { context, response })
    }

    pub fn last_utterance(&self) -> &[usize] {
        self.context.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl RawPair {
    pub fn encode(&self, vocab: &Vocabulary) -> ConversationPair {
        ConversationPair {
            context: self.context.iter().map(|u| vocab.encode(u)).collect(),
            response: vocab.encode(&self.response),
        }
    }
}

/// One sentence of the non-parallel style corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleSentence {
    pub tokens: Vec<usize>,
    pub source: String,
}

impl StyleSentence {
    pub fn new(tokens: Vec<usize>, source: impl Into<String>) -> crate::Result<Self> {
        if tokens.is_empty() {
            return Err(crate::Error::input("style sentence must be non-empty"));
        }
        Ok(StyleSentence {
            tokens,
            source: source.into(),
        })
    }
}

/// Context utterances joined for the context encoder: every utterance is
/// followed by the end-of-utterance token.
pub fn flatten_context(context: &[Vec<usize>]) -> Vec<usize> {
    let mut out = Vec::with_capacity(context.iter().map(|u| u.len() + 1).sum());
    for utt in context {
        out.extend_from_slice(utt);
        out.push(Vocabulary::EOU_ID);
    }
    out
}

/// Splits `text` on the `<EOU>` separator into whitespace-tokenized utterances.
pub fn split_context(text: &str) -> Vec<Vec<String>> {
    let mut utts = vec![Vec::new()];
    for tok in text.split_whitespace() {
        if tok == EOU {
            utts.push(Vec::new());
        } else {
            utts.last_mut().expect("non-empty").push(tok.to_string());
        }
    }
    utts
}

/// Removes the larger class's surplus so both lists have equal length. The
/// kept items are a seeded uniform subset in original order.
pub fn balance<T: Clone>(a: &[T], b: &[T], seed: u64) -> (Vec<T>, Vec<T>) {
    use rand::seq::index::sample;
    let n = a.len().min(b.len());
    let pick = |xs: &[T], stream: u64| -> Vec<T> {
        if xs.len() == n {
            return xs.to_vec();
        }
        let mut idx = sample(&mut crate::rng::derived_rng(seed, stream), xs.len(), n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| xs[i].clone()).collect()
    };
    (pick(a, 0), pick(b, 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_appends_separator_after_each_utterance() {
        assert_eq!(flatten_context(&[vec![7, 8], vec![9]]), vec![7, 8, 4, 9, 4]);
    }

    #[test]
    fn split_context_on_separator() {
        assert_eq!(
            split_context("a <EOU> b c"),
            vec![vec!["a".to_string()], vec!["b".to_string(), "c".to_string()]]
        );
    }

    #[test]
    fn pair_invariants_enforced() {
        assert!(ConversationPair::new(vec![], vec![1]).is_err());
        assert!(ConversationPair::new(vec![vec![]], vec![1]).is_err());
        assert!(ConversationPair::new(vec![vec![5]], vec![]).is_err());
        assert!(StyleSentence::new(vec![], "x").is_err());
    }

    #[test]
    fn balance_downsamples_larger_side() {
        let a: Vec<u32> = (0..10).collect();
        let b: Vec<u32> = (100..104).collect();
        let (x, y) = balance(&a, &b, 5);
        assert_eq!(x.len(), 4);
        assert_eq!(y, b);
        assert!(x.windows(2).all(|w| w[0] < w[1]));
    }
}
