use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::nn::StackedGru;
use crate::optim::{Adam, AdamConfig};
use crate::rng::Rng;
use crate::tensor::{axpy, ParamId, ParamStore, Tensor};

use super::ngram::open_sigmoid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for NeuralTrainConfig {
    fn default() -> Self {
        NeuralTrainConfig {
            epochs: 4,
            batch_size: 16,
            lr: 3e-3,
        }
    }
}

/// Embedding, two stacked recurrent layers and a sigmoid head on the final
/// top-layer state.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralClassifier {
    pub config: NeuralConfig,
    pub(crate) store: ParamStore,
    embedding: ParamId,
    rnn: StackedGru,
    head_w: ParamId,
    head_b: ParamId,
}

impl NeuralClassifier {
    pub fn new(config: NeuralConfig, rng: &mut Rng) -> Self {
        let mut store = ParamStore::new();
        let embedding = store.add(
            "embedding",
            Tensor::uniform(config.vocab_size, config.embed_dim, 0.5, rng),
        );
        let rnn = StackedGru::new(&mut store, "rnn", config.embed_dim, config.hidden, config.layers, rng);
        let scale = 1.0 / (config.hidden as f64).sqrt();
        let head_w = store.add("head.w", Tensor::uniform(1, config.hidden, scale, rng));
        let head_b = store.add("head.b", Tensor::zeros(1, 1));
        NeuralClassifier {
            config,
            store,
            embedding,
            rnn,
            head_w,
            head_b,
        }
    }

    pub fn logit(&self, t: &[usize]) -> f64 {
        let mut states = vec![vec![0.0; self.config.hidden]; self.rnn.depth()];
        let emb = self.store.get(self.embedding);
        for &tok in t.iter().filter(|&&x| x < self.config.vocab_size) {
            self.rnn.step(&self.store, emb.row(tok), &mut states);
        }
        let top = states.last().expect("at least one layer");
        self.store.get(self.head_w).matvec(top)[0] + self.store.get(self.head_b).data[0]
    }

    pub fn predict(&self, t: &[usize]) -> f64 {
        open_sigmoid(self.logit(t))
    }

    fn example_grads(&self, t: &[usize], label: f64) -> (f64, crate::tensor::Grads) {
        let mut g = Graph::new(&self.store);
        let mut states: Vec<_> = (0..self.rnn.depth())
            .map(|_| g.input(vec![0.0; self.config.hidden]))
            .collect();
        for &tok in t.iter().filter(|&&x| x < self.config.vocab_size) {
            let mut x = g.embed(self.embedding, tok);
            for (cell, h) in self.rnn.layers.iter().zip(states.iter_mut()) {
                *h = g.gru(*cell, x, *h);
                x = *h;
            }
        }
        let top = *states.last().expect("at least one layer");
        let logit = g.affine(self.head_w, Some(self.head_b), top);
        let loss = g.bce_logit(logit, label);
        (g.scalar(loss), g.backward(loss).params)
    }

    /// Minibatch Adam on binary cross-entropy. Per-example gradients are
    /// computed in parallel and summed in a fixed order.
    pub fn train(&mut self, data: &[(Vec<usize>, f64)], cfg: NeuralTrainConfig, rng: &mut Rng) {
        let mut adam = Adam::new(
            AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            },
            &self.store,
        );
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(cfg.batch_size.max(1)) {
                let parts: Vec<_> = chunk
                    .par_iter()
                    .map(|&i| self.example_grads(&data[i].0, data[i].1).1)
                    .collect();
                let mut total = self.store.zero_grads();
                for p in &parts {
                    for id in self.store.ids() {
                        axpy(1.0, &p.get(id).data, &mut total.get_mut(id).data);
                    }
                }
                total.scale(1.0 / chunk.len() as f64);
                adam.step(&mut self.store, &mut total);
            }
        }
    }

    pub(crate) fn from_tensors<'a, I>(config: NeuralConfig, tensors: I) -> crate::Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a Tensor)>,
    {
        let mut shell = NeuralClassifier::new(config, &mut crate::rng::rng(0));
        crate::checkpoint::fill_store(tensors, &mut shell.store)?;
        Ok(shell)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_gradient_matches_finite_difference() {
        let cfg = NeuralConfig {
            vocab_size: 6,
            embed_dim: 3,
            hidden: 4,
            layers: 2,
        };
        let clf = NeuralClassifier::new(cfg, &mut crate::rng::rng(1));
        let t = vec![2, 5, 3];
        let (_, grads) = clf.example_grads(&t, 1.0);
        let loss = |c: &NeuralClassifier| {
            let z = c.logit(&t);
            (1.0 + (-z).exp()).ln()
        };
        let h = 1e-6;
        for id in clf.store.ids() {
            for k in 0..clf.store.get(id).data.len() {
                let mut up = clf.clone();
                up.store.get_mut(id).data[k] += h;
                let mut down = clf.clone();
                down.store.get_mut(id).data[k] -= h;
                let fd = (loss(&up) - loss(&down)) / (2.0 * h);
                let an = grads.get(id).data[k];
                assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "{}[{k}]", clf.store.name(id));
            }
        }
    }

    #[test]
    fn learns_a_token_presence_rule() {
        let cfg = NeuralConfig {
            vocab_size: 8,
            embed_dim: 6,
            hidden: 8,
            layers: 2,
        };
        let mut rng = crate::rng::rng(3);
        let mut clf = NeuralClassifier::new(cfg, &mut rng);
        let data: Vec<(Vec<usize>, f64)> = (0..200)
            .map(|i| {
                let label = (i % 2) as f64;
                let tok = if label == 1.0 { 7 } else { 6 };
                (vec![5, tok, 5 + (i % 2)], label)
            })
            .collect();
        clf.train(
            &data,
            NeuralTrainConfig {
                epochs: 5,
                batch_size: 8,
                lr: 1e-2,
            },
            &mut rng,
        );
        let acc = data
            .iter()
            .filter(|(t, y)| (clf.predict(t) > 0.5) == (*y == 1.0))
            .count() as f64
            / data.len() as f64;
        assert!(acc > 0.95, "accuracy {acc}");
    }
}
