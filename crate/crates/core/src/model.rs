//! The shared-latent network: a context encoder (prediction branch), a
//! sentence encoder (autoencoder branch) and one decoder used by both.
//!
//! Every recurrent layer is `l` wide. The context encoder's top-layer final
//! state is the prediction latent; the sentence encoder's is the
//! autoencoder latent; the decoder starts every layer from the latent and
//! reads the previous token's embedding at each step.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Container;
use crate::corpus::{flatten_context, Vocabulary};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::{log_softmax, CellType, OutputLayer, StackedGru};
use crate::tensor::{ParamId, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentRole {
    Prediction,
    Autoencoder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub values: Vec<f64>,
    pub role: LatentRole,
}

impl LatentVector {
    pub fn new(values: Vec<f64>, role: LatentRole) -> Self {
        LatentVector { values, role }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Gaussian perturbation `N(0, sigma^2 I)` added to interpolated latents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    sigma: f64,
}

impl NoiseSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be positive, got {sigma}")));
        }
        Ok(NoiseSpec { sigma })
    }

    pub fn sigma(self) -> f64 {
        self.sigma
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { sigma: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Latent dimension; also the width of every recurrent layer.
    pub latent_dim: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub cell: CellType,
}

impl ModelConfig {
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            latent_dim: 32,
            embed_dim: 32,
            layers: 2,
            cell: CellType::Gru,
        }
    }

    /// Full-size preset: 1000-dimensional latents and embeddings.
    pub fn full_size(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            latent_dim: 1000,
            embed_dim: 1000,
            layers: 2,
            cell: CellType::Gru,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.vocab_size <= Vocabulary::EOU_ID || self.latent_dim == 0 || self.embed_dim == 0 || self.layers == 0 {
            return Err(Error::Config(format!("degenerate model configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoder {
    pub rnn: StackedGru,
    pub out: OutputLayer,
}

/// Decoder hidden states between steps.
#[derive(Clone, Debug)]
pub struct DecoderState {
    states: Vec<Vec<f64>>,
}

impl DecoderState {
    pub fn top(&self) -> &[f64] {
        self.states.last().expect("at least one layer")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
    embedding: ParamId,
    s2s_encoder: StackedGru,
    ae_encoder: StackedGru,
    decoder: Decoder,
}

#[derive(Serialize, Deserialize)]
struct GeneratorHeader {
    config: ModelConfig,
    #[serde(default)]
    variant: Option<String>,
}

pub const GENERATOR_KIND: &str = "generator";

impl ModelParams {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::rng::rng(seed);
        let mut store = ParamStore::new();
        let l = config.latent_dim;
        let embedding = store.add(
            "embedding",
            Tensor::uniform(config.vocab_size, config.embed_dim, 0.5, &mut rng),
        );
        let s2s_encoder = StackedGru::new(&mut store, "s2s_encoder", config.embed_dim, l, config.layers, &mut rng);
        let ae_encoder = StackedGru::new(&mut store, "ae_encoder", config.embed_dim, l, config.layers, &mut rng);
        let rnn = StackedGru::new(&mut store, "decoder", config.embed_dim, l, config.layers, &mut rng);
        let out = OutputLayer::new(&mut store, "decoder.out", l, config.vocab_size, &mut rng);
        Ok(ModelParams {
            config,
            store,
            embedding,
            s2s_encoder,
            ae_encoder,
            decoder: Decoder { rnn, out },
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn embedding(&self) -> ParamId {
        self.embedding
    }

    pub fn s2s_encoder(&self) -> &StackedGru {
        &self.s2s_encoder
    }

    pub fn ae_encoder(&self) -> &StackedGru {
        &self.ae_encoder
    }

    /// Decoder used by the prediction branch.
    pub fn s2s_decoder(&self) -> &Decoder {
        &self.decoder
    }

    /// Decoder used by the autoencoder branch. Same storage as
    /// [`ModelParams::s2s_decoder`].
    pub fn ae_decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn decoder_param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.decoder.rnn.layers.iter().flat_map(|c| c.param_ids()).collect();
        ids.push(self.decoder.out.w);
        ids.push(self.decoder.out.b);
        ids
    }

    pub fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::input(format!(
                "token id {bad} out of range for vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    fn check_latent(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.config.latent_dim {
            return Err(Error::input(format!(
                "latent has dimension {}, model expects {}",
                z.len(),
                self.config.latent_dim
            )));
        }
        Ok(())
    }

    fn run_encoder(&self, encoder: &StackedGru, tokens: &[usize]) -> Vec<f64> {
        let l = self.config.latent_dim;
        let mut states = vec![vec![0.0; l]; encoder.depth()];
        let emb = self.store.get(self.embedding);
        for &t in tokens {
            encoder.step(&self.store, emb.row(t), &mut states);
        }
        states.pop().expect("at least one layer")
    }

    /// Prediction latent of a (multi-utterance) context.
    pub fn encode_context(&self, context: &[Vec<usize>]) -> Result<LatentVector> {
        if context.is_empty() || context.iter().any(Vec::is_empty) {
            return Err(Error::input("context must hold at least one non-empty utterance"));
        }
        let flat = flatten_context(context);
        self.check_tokens(&flat)?;
        Ok(LatentVector::new(
            self.run_encoder(&self.s2s_encoder, &flat),
            LatentRole::Prediction,
        ))
    }

    /// Autoencoder latent of a single utterance.
    pub fn encode_sentence(&self, tokens: &[usize]) -> Result<LatentVector> {
        if tokens.is_empty() {
            return Err(Error::input("cannot encode an empty sentence"));
        }
        self.check_tokens(tokens)?;
        Ok(LatentVector::new(
            self.run_encoder(&self.ae_encoder, tokens),
            LatentRole::Autoencoder,
        ))
    }

    pub fn decoder_start(&self, z: &[f64]) -> Result<DecoderState> {
        self.check_latent(z)?;
        Ok(DecoderState {
            states: vec![z.to_vec(); self.decoder.rnn.depth()],
        })
    }

    /// Feeds `prev` and returns the log-distribution over the next token.
    pub fn decoder_step(&self, state: &mut DecoderState, prev: usize) -> Vec<f64> {
        let emb = self.store.get(self.embedding);
        self.decoder.rnn.step(&self.store, emb.row(prev), &mut state.states);
        log_softmax(&self.decoder.out.logits(&self.store, state.top()))
    }

    /// Teacher-forced log-distributions for every target position of
    /// `tokens` followed by end-of-sentence.
    pub fn step_log_probs(&self, z: &[f64], tokens: &[usize]) -> Result<Vec<Vec<f64>>> {
        if tokens.is_empty() {
            return Err(Error::input("cannot score an empty sequence"));
        }
        self.check_tokens(tokens)?;
        let mut state = self.decoder_start(z)?;
        let mut prev = Vocabulary::BOS_ID;
        let mut out = Vec::with_capacity(tokens.len() + 1);
        for &t in tokens.iter().chain(std::iter::once(&Vocabulary::EOS_ID)) {
            out.push(self.decoder_step(&mut state, prev));
            prev = t;
        }
        Ok(out)
    }

    /// `log p(tokens, EOS | z)`. `tokens` must not include the terminator.
    pub fn decode_logprob(&self, z: &[f64], tokens: &[usize]) -> Result<f64> {
        let steps = self.step_log_probs(z, tokens)?;
        Ok(tokens
            .iter()
            .chain(std::iter::once(&Vocabulary::EOS_ID))
            .zip(&steps)
            .map(|(&t, lp)| lp[t])
            .sum())
    }

    /// Argmax decoding until end-of-sentence or `max_len` tokens; the
    /// terminator is not included. Ties resolve to the lowest id.
    pub fn decode_greedy(&self, z: &[f64], max_len: usize) -> Result<Vec<usize>> {
        let mut state = self.decoder_start(z)?;
        let mut prev = Vocabulary::BOS_ID;
        let mut out = Vec::new();
        while out.len() < max_len {
            let lp = self.decoder_step(&mut state, prev);
            let next = argmax(&lp);
            if next == Vocabulary::EOS_ID {
                break;
            }
            out.push(next);
            prev = next;
        }
        Ok(out)
    }

    // -- differentiable versions -------------------------------------------

    fn encode_graph(&self, g: &mut Graph<'_>, encoder: &StackedGru, tokens: &[usize]) -> Var {
        let l = self.config.latent_dim;
        let mut states: Vec<Var> = (0..encoder.depth()).map(|_| g.input(vec![0.0; l])).collect();
        for &t in tokens {
            let mut x = g.embed(self.embedding, t);
            for (cell, h) in encoder.layers.iter().zip(states.iter_mut()) {
                *h = g.gru(*cell, x, *h);
                x = *h;
            }
        }
        *states.last().expect("at least one layer")
    }

    pub fn encode_context_graph(&self, g: &mut Graph<'_>, context: &[Vec<usize>]) -> Var {
        self.encode_graph(g, &self.s2s_encoder, &flatten_context(context))
    }

    pub fn encode_sentence_graph(&self, g: &mut Graph<'_>, tokens: &[usize]) -> Var {
        self.encode_graph(g, &self.ae_encoder, tokens)
    }

    /// `-log p(tokens, EOS | z)` as a scalar node.
    pub fn decode_nll_graph(&self, g: &mut Graph<'_>, z: Var, tokens: &[usize]) -> Var {
        let mut states: Vec<Var> = vec![z; self.decoder.rnn.depth()];
        let mut prev = Vocabulary::BOS_ID;
        let mut steps = Vec::with_capacity(tokens.len() + 1);
        for &t in tokens.iter().chain(std::iter::once(&Vocabulary::EOS_ID)) {
            let mut x = g.embed(self.embedding, prev);
            for (cell, h) in self.decoder.rnn.layers.iter().zip(states.iter_mut()) {
                *h = g.gru(*cell, x, *h);
                x = *h;
            }
            steps.push(g.softmax_nll(self.decoder.out, x, t));
            prev = t;
        }
        g.sum_scaled(&steps, 1.0)
    }

    // -- persistence ---------------------------------------------------------

    pub fn to_container(&self, variant: Option<&str>) -> Result<Container> {
        Container::new(
            GENERATOR_KIND,
            &GeneratorHeader {
                config: self.config.clone(),
                variant: variant.map(str::to_string),
            },
            &self.store,
        )
    }

    pub fn save(&self, path: &Path, variant: Option<&str>) -> Result<()> {
        self.to_container(variant)?.save(path)
    }

    /// Rebuilds the parameter layout from the header and fills it.
    pub fn from_container(c: &Container) -> Result<(Self, Option<String>)> {
        c.expect_kind(GENERATOR_KIND)?;
        let header: GeneratorHeader = c.header()?;
        let mut model = ModelParams::new(header.config, 0)?;
        c.fill(&mut model.store)?;
        Ok((model, header.variant))
    }

    pub fn load(path: &Path) -> Result<(Self, Option<String>)> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn tiny(l: usize) -> ModelParams {
        ModelParams::new(
            ModelConfig {
                vocab_size: 12,
                latent_dim: l,
                embed_dim: 6,
                layers: 2,
                cell: CellType::Gru,
            },
            5,
        )
        .unwrap()
    }

    #[test]
    fn encoders_are_deterministic_and_shaped() {
        let m = tiny(7);
        let a = m.encode_context(&[vec![5, 6, 7]]).unwrap();
        assert_eq!(a, m.encode_context(&[vec![5, 6, 7]]).unwrap());
        assert_eq!(a.dim(), 7);
        assert_eq!(a.role, LatentRole::Prediction);
        let s = m.encode_sentence(&[5, 6]).unwrap();
        assert_eq!(s.dim(), 7);
        assert_eq!(s.role, LatentRole::Autoencoder);
    }

    #[test]
    fn token_order_matters() {
        let m = tiny(8);
        let a = m.encode_context(&[vec![5, 9]]).unwrap();
        let b = m.encode_context(&[vec![9, 5]]).unwrap();
        assert_ne!(a.values, b.values);
    }

    #[test]
    fn branches_use_distinct_encoders() {
        let m = tiny(8);
        let y = vec![6, 7, 8];
        assert_ne!(
            m.encode_sentence(&y).unwrap().values,
            m.encode_context(std::slice::from_ref(&y)).unwrap().values
        );
    }

    #[test]
    fn out_of_range_token_is_an_input_error() {
        let m = tiny(4);
        assert!(matches!(m.encode_context(&[vec![99]]), Err(Error::Input(_))));
        assert!(matches!(m.encode_sentence(&[12]), Err(Error::Input(_))));
        assert!(matches!(m.decode_logprob(&[0.0; 4], &[]), Err(Error::Input(_))));
    }

    #[test]
    fn logprob_is_sum_of_normalized_steps() {
        let m = tiny(5);
        let z = vec![0.3, -0.2, 0.1, 0.0, 0.5];
        let t = vec![7, 5, 11];
        let steps = m.step_log_probs(&z, &t).unwrap();
        for lp in &steps {
            let total: f64 = lp.iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
        // stepwise re-run, one decoder step at a time
        let mut state = m.decoder_start(&z).unwrap();
        let mut manual = 0.0;
        let mut prev = Vocabulary::BOS_ID;
        for &tok in t.iter().chain([Vocabulary::EOS_ID].iter()) {
            manual += m.decoder_step(&mut state, prev)[tok];
            prev = tok;
        }
        let lp = m.decode_logprob(&z, &t).unwrap();
        assert!((lp - manual).abs() < 1e-12);
        assert!(lp <= 0.0);
    }

    #[test]
    fn graph_and_plain_paths_agree() {
        let m = tiny(6);
        let ctx = vec![vec![5, 6], vec![7]];
        let mut g = Graph::new(&m.store);
        let zc = m.encode_context_graph(&mut g, &ctx);
        assert_eq!(g.value(zc), m.encode_context(&ctx).unwrap().values.as_slice());
        let nll = m.decode_nll_graph(&mut g, zc, &[8, 9]);
        let lp = m.decode_logprob(g.value(zc), &[8, 9]).unwrap();
        assert!((g.scalar(nll) + lp).abs() < 1e-12);
    }

    #[test]
    fn greedy_output_is_stepwise_argmax_and_beats_random_sequences() {
        let m = tiny(6);
        let mut rng = crate::rng::rng(17);
        for trial in 0..5 {
            let z: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = m.decode_greedy(&z, 8).unwrap();
            assert!(h.len() <= 8);
            assert_eq!(h, m.decode_greedy(&z, 8).unwrap());
            if h.is_empty() {
                continue;
            }
            // each emitted token is the argmax of its teacher-forced step
            let steps = m.step_log_probs(&z, &h).unwrap();
            for (i, &tok) in h.iter().enumerate() {
                assert_eq!(argmax(&steps[i]), tok, "trial {trial} step {i}");
            }
            // with the greedy prefix fixed, deviating at the first step never helps that step
            let best = m.decode_logprob(&z, &h).unwrap();
            let first_best = steps[0][h[0]];
            for _ in 0..100 {
                let alt: Vec<usize> = (0..h.len()).map(|_| rng.random_range(5..12)).collect();
                let alt_steps = m.step_log_probs(&z, &alt).unwrap();
                assert!(alt_steps[0][alt[0]] <= first_best + 1e-12);
                let _ = best;
            }
        }
    }

    #[test]
    fn decoder_storage_is_shared() {
        let m = tiny(4);
        assert!(std::ptr::eq(m.s2s_decoder(), m.ae_decoder()));
    }

    #[test]
    fn container_round_trip_is_exact() {
        let m = tiny(5);
        let c = m.to_container(Some("style_fusion")).unwrap();
        let bytes = c.to_bytes().unwrap();
        let back: Container = serde_json::from_slice(&bytes).unwrap();
        let (m2, variant) = ModelParams::from_container(&back).unwrap();
        assert_eq!(m2, m);
        assert_eq!(variant.as_deref(), Some("style_fusion"));
    }
}
