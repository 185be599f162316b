//! Fixed-seed inputs for the benchmarks in `benches/`.

use fusedstyle_core::corpus::ConversationPair;
use fusedstyle_core::model::{ModelConfig, ModelParams};
use fusedstyle_core::nn::CellType;
use fusedstyle_core::objectives::StyleBatch;
use fusedstyle_core::rng::rng;
use rand::Rng as _;

pub fn latent_set(n: usize, l: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| (0..l).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn model(vocab_size: usize, l: usize) -> ModelParams {
    ModelParams::new(
        ModelConfig {
            vocab_size,
            latent_dim: l,
            embed_dim: l,
            layers: 2,
            cell: CellType::Gru,
        },
        1,
    )
    .expect("valid model config")
}

/// Token ids drawn from the non-reserved range of a `vocab_size` vocabulary.
pub fn sentence(len: usize, vocab_size: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed);
    (0..len).map(|_| r.random_range(8..vocab_size)).collect()
}

pub fn batch(n: usize, vocab_size: usize, seed: u64) -> (Vec<ConversationPair>, StyleBatch) {
    let pairs = (0..n as u64)
        .map(|i| {
            let ctx = vec![
                sentence(8, vocab_size, seed + 3 * i),
                sentence(6, vocab_size, seed + 3 * i + 1),
            ];
            ConversationPair::new(ctx, sentence(7, vocab_size, seed + 3 * i + 2)).expect("non-empty")
        })
        .collect();
    let style = StyleBatch::clean(
        (0..n as u64)
            .map(|i| sentence(9, vocab_size, seed + 1000 + i))
            .collect(),
    );
    (pairs, style)
}
