use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

pub const MAX_ORDER: usize = 4;

/// All contiguous n-grams of `t` for n = 1..=4, as a set.
pub fn featurize_ngrams(t: &[usize]) -> BTreeSet<Vec<usize>> {
    let mut out = BTreeSet::new();
    for n in 1..=MAX_ORDER.min(t.len()) {
        for w in t.windows(n) {
            out.insert(w.to_vec());
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NgramTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for NgramTrainConfig {
    fn default() -> Self {
        NgramTrainConfig {
            epochs: 10,
            lr: 0.1,
            l2: 1e-4,
        }
    }
}

/// Logistic regression over multi-hot n-gram presence features.
#[derive(Clone, Debug, PartialEq)]
pub struct NgramClassifier {
    pub(crate) features: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: f64,
}

/// Sigmoid with the logit clamped so the result stays strictly inside (0, 1).
pub(crate) fn open_sigmoid(x: f64) -> f64 {
    crate::nn::sigmoid(x.clamp(-30.0, 30.0))
}

impl NgramClassifier {
    pub(crate) fn from_parts(features: Vec<Vec<usize>>, weights: Vec<f64>, bias: f64) -> Self {
        let index = features.iter().cloned().enumerate().map(|(i, f)| (f, i)).collect();
        NgramClassifier {
            features,
            index,
            weights,
            bias,
        }
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    fn active(&self, t: &[usize]) -> Vec<usize> {
        featurize_ngrams(t)
            .into_iter()
            .filter_map(|g| self.index.get(&g).copied())
            .collect()
    }

    pub fn logit(&self, t: &[usize]) -> f64 {
        self.bias + self.active(t).iter().map(|&i| self.weights[i]).sum::<f64>()
    }

    pub fn predict(&self, t: &[usize]) -> f64 {
        open_sigmoid(self.logit(t))
    }

    /// Plain SGD on the logistic loss with L2 decay. The feature index is
    /// the set of n-grams seen in `data`, in sorted order.
    pub fn train(data: &[(Vec<usize>, f64)], cfg: NgramTrainConfig, rng: &mut Rng) -> Self {
        let features: Vec<Vec<usize>> = data
            .iter()
            .flat_map(|(t, _)| featurize_ngrams(t))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut model = Self::from_parts(features.clone(), vec![0.0; features.len()], 0.0);
        let active: Vec<Vec<usize>> = data.iter().map(|(t, _)| model.active(t)).collect();
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for &i in &order {
                let z = model.bias + active[i].iter().map(|&f| model.weights[f]).sum::<f64>();
                let err = crate::nn::sigmoid(z) - data[i].1;
                model.bias -= cfg.lr * err;
                for &f in &active[i] {
                    let w = &mut model.weights[f];
                    *w -= cfg.lr * (err + cfg.l2 * *w);
                }
            }
        }
        model
    }
}
