//! Style classifiers, keyword lists and the count metric.

mod keywords;
mod neural;
mod ngram;

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use keywords::{build_keyword_list, count_metric, count_metric_normalized, StyleKeywordList};
pub use neural::{NeuralClassifier, NeuralConfig, NeuralTrainConfig};
pub use ngram::{featurize_ngrams, NgramClassifier, NgramTrainConfig, MAX_ORDER};

use crate::checkpoint::Container;
use crate::corpus::balance;
use crate::error::{Error, Result};
use crate::rng::derived_rng;
use crate::tensor::{ParamStore, Tensor};

/// Anything that maps a token sequence to a style probability in (0, 1).
pub trait StyleProbability {
    fn p_style(&self, tokens: &[usize]) -> f64;
}

#[derive(Clone, Debug, PartialEq)]
pub struct StyleScorer {
    pub ngram: NgramClassifier,
    pub neural: NeuralClassifier,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StyleScores {
    pub ngram: f64,
    pub neural: f64,
    pub p_style: f64,
}

impl StyleScorer {
    pub fn scores(&self, tokens: &[usize]) -> StyleScores {
        let ngram = self.ngram.predict(tokens);
        let neural = self.neural.predict(tokens);
        StyleScores {
            ngram,
            neural,
            p_style: (ngram + neural) / 2.0,
        }
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut store = ParamStore::new();
        store.add(
            "ngram.w",
            Tensor {
                rows: self.ngram.weights.len(),
                cols: 1,
                data: self.ngram.weights.clone(),
            },
        );
        store.add(
            "ngram.b",
            Tensor {
                rows: 1,
                cols: 1,
                data: vec![self.ngram.bias],
            },
        );
        for (name, t) in self.neural.store.iter() {
            store.add(format!("neural.{name}"), t.clone());
        }
        Container::new(
            SCORER_KIND,
            &ScorerHeader {
                ngram_features: self.ngram.features.clone(),
                neural: self.neural.config.clone(),
            },
            &store,
        )
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(SCORER_KIND)?;
        let header: ScorerHeader = c.header()?;
        let find = |name: &str| {
            c.tensors
                .iter()
                .find(|t| t.name == name)
                .map(|t| &t.tensor)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let w = find("ngram.w")?;
        let b = find("ngram.b")?;
        if w.data.len() != header.ngram_features.len() || b.data.len() != 1 {
            return Err(Error::Checkpoint(
                "n-gram weights do not match the feature index".into(),
            ));
        }
        let ngram = NgramClassifier::from_parts(header.ngram_features, w.data.clone(), b.data[0]);
        let neural = NeuralClassifier::from_tensors(
            header.neural,
            c.tensors
                .iter()
                .filter_map(|t| t.name.strip_prefix("neural.").map(|n| (n, &t.tensor))),
        )?;
        Ok(StyleScorer { ngram, neural })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

impl StyleProbability for StyleScorer {
    fn p_style(&self, tokens: &[usize]) -> f64 {
        self.scores(tokens).p_style
    }
}

pub const SCORER_KIND: &str = "style_scorer";

#[derive(Serialize, Deserialize)]
struct ScorerHeader {
    ngram_features: Vec<Vec<usize>>,
    neural: NeuralConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub seed: u64,
    pub holdout_frac: f64,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub ngram: NgramTrainConfig,
    pub neural: NeuralTrainConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            seed: 0,
            holdout_frac: 0.1,
            embed_dim: 16,
            hidden: 16,
            layers: 2,
            ngram: NgramTrainConfig::default(),
            neural: NeuralTrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub n_train: usize,
    pub n_holdout: usize,
    pub ngram_accuracy: f64,
    pub neural_accuracy: f64,
    pub combined_accuracy: f64,
}

/// Trains both classifiers on a class-balanced sample: style sentences are
/// positives, conversation responses negatives. Accuracy is measured on a
/// held-out slice.
pub fn train_classifiers(
    positives: &[Vec<usize>],
    negatives: &[Vec<usize>],
    vocab_size: usize,
    cfg: &ClassifierConfig,
) -> Result<(StyleScorer, ClassifierReport)> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::input(
            "style classifiers need both positive and negative examples",
        ));
    }
    if !(0.0..1.0).contains(&cfg.holdout_frac) {
        return Err(Error::Config(format!(
            "holdout fraction {} outside [0, 1)",
            cfg.holdout_frac
        )));
    }
    let (pos, neg) = balance(positives, negatives, cfg.seed);
    let mut data: Vec<(Vec<usize>, f64)> = pos
        .into_iter()
        .map(|t| (t, 1.0))
        .chain(neg.into_iter().map(|t| (t, 0.0)))
        .collect();
    data.shuffle(&mut derived_rng(cfg.seed, 1));
    let n_holdout = ((data.len() as f64) * cfg.holdout_frac).round() as usize;
    let (holdout, train) = data.split_at(n_holdout);

    let ngram = NgramClassifier::train(train, cfg.ngram, &mut derived_rng(cfg.seed, 2));
    let mut neural = NeuralClassifier::new(
        NeuralConfig {
            vocab_size,
            embed_dim: cfg.embed_dim,
            hidden: cfg.hidden,
            layers: cfg.layers,
        },
        &mut derived_rng(cfg.seed, 3),
    );
    neural.train(train, cfg.neural, &mut derived_rng(cfg.seed, 4));
    let scorer = StyleScorer { ngram, neural };

    let acc = |f: &dyn Fn(&[usize]) -> f64| {
        if holdout.is_empty() {
            return f64::NAN;
        }
        holdout.iter().filter(|(t, y)| (f(t) > 0.5) == (*y == 1.0)).count() as f64 / holdout.len() as f64
    };
    let report = ClassifierReport {
        n_train: train.len(),
        n_holdout,
        ngram_accuracy: acc(&|t| scorer.ngram.predict(t)),
        neural_accuracy: acc(&|t| scorer.neural.predict(t)),
        combined_accuracy: acc(&|t| scorer.p_style(t)),
    };
    log::info!(
        "style classifiers: n-gram {:.3}, neural {:.3}, combined {:.3} held-out accuracy",
        report.ngram_accuracy,
        report.neural_accuracy,
        report.combined_accuracy
    );
    Ok((scorer, report))
}
