use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{StyleSentence, Vocabulary};

/// Frequency-dependent token masking: `p(w) = min(p_cap, c_mask / freq(w))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskConfig {
    pub c_mask: f64,
    pub p_cap: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            c_mask: 1.0,
            p_cap: 0.5,
        }
    }
}

pub fn mask_probability(freq: u64, cfg: MaskConfig) -> f64 {
    if cfg.c_mask <= 0.0 {
        return 0.0;
    }
    if freq == 0 {
        return cfg.p_cap;
    }
    cfg.p_cap.min(cfg.c_mask / freq as f64)
}

/// Replaces each token independently with the mask id. Length is preserved.
pub fn mask_style_tokens(s: &StyleSentence, vocab: &Vocabulary, cfg: MaskConfig, seed: u64) -> Vec<usize> {
    let mut rng = crate::rng::rng(seed);
    s.tokens
        .iter()
        .map(|&t| {
            let p = mask_probability(vocab.freq(t), cfg);
            if p > 0.0 && rng.random::<f64>() < p {
                Vocabulary::MASK_ID
            } else {
                t
            }
        })
        .collect()
}
