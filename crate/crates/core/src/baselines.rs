//! Comparison systems and the ablation lattice, sharing the training and
//! evaluation plumbing.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{StylizedTestSet, TestEntry, Vocabulary};
use crate::error::{Error, Result};
use crate::inference::{generate_with, SampleSpec};
use crate::metrics::{evaluate_outputs, MetricReport};
use crate::model::{argmax, ModelParams};
use crate::objectives::LossTerms;
use crate::rng::derive_seed;
use crate::style::{StyleKeywordList, StyleScorer};
use crate::train::{train, Objective, TrainConfig, TrainData, TrainReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[serde(rename = "mtask")]
    MTask,
    SpaceFusion,
    StyleFusion,
    S2s,
    S2sLm,
    Retrieval,
    Rand,
    HumanRef,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::MTask,
        Variant::SpaceFusion,
        Variant::StyleFusion,
        Variant::S2s,
        Variant::S2sLm,
        Variant::Retrieval,
        Variant::Rand,
        Variant::HumanRef,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::MTask => "mtask",
            Variant::SpaceFusion => "space_fusion",
            Variant::StyleFusion => "style_fusion",
            Variant::S2s => "s2s",
            Variant::S2sLm => "s2s_lm",
            Variant::Retrieval => "retrieval",
            Variant::Rand => "rand",
            Variant::HumanRef => "human_ref",
        }
    }

    /// Training objective of the generator this variant relies on.
    pub fn objective(self) -> Option<Objective> {
        match self {
            Variant::MTask | Variant::Retrieval => Some(Objective::MultiTask),
            Variant::SpaceFusion => Some(Objective::Fusion(LossTerms::CONV_ONLY)),
            Variant::StyleFusion => Some(Objective::Fusion(LossTerms::FULL)),
            Variant::S2s | Variant::S2sLm => Some(Objective::ConversationOnly),
            Variant::Rand | Variant::HumanRef => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::input(format!("unknown variant {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub variant: Variant,
    pub train: TrainConfig,
    /// Language-model weight for the mixed decoder.
    pub lm_weight: f64,
}

impl VariantSpec {
    pub fn new(variant: Variant, train: TrainConfig) -> Self {
        VariantSpec {
            variant,
            train,
            lm_weight: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lm_weight) {
            return Err(Error::Config(format!("lm weight {} outside [0, 1]", self.lm_weight)));
        }
        self.train.validate()
    }
}

pub struct TrainedVariant {
    pub model: ModelParams,
    /// Style language model, for the mixed decoder.
    pub lm: Option<ModelParams>,
    pub report: TrainReport,
}

/// Trains the generator (and, for the mixed decoder, the style language
/// model) behind a variant. `init` fixes the architecture and the initial
/// weights.
pub fn train_variant(
    spec: &VariantSpec,
    init: ModelParams,
    data: &TrainData<'_>,
    log: Option<&mut dyn std::io::Write>,
) -> Result<TrainedVariant> {
    spec.validate()?;
    let objective = spec
        .variant
        .objective()
        .ok_or_else(|| Error::input(format!("variant {} has nothing to train", spec.variant)))?;
    if spec.variant == Variant::S2sLm && data.style.len() < 2 {
        return Err(Error::input("the style language model needs style data"));
    }
    let lm_init = init.clone();
    let (model, report) = train(init, data, objective, &spec.train, log)?;
    let lm = if spec.variant == Variant::S2sLm {
        let (lm, _) = train(lm_init, data, Objective::LanguageModel, &spec.train, None)?;
        Some(lm)
    } else {
        None
    };
    Ok(TrainedVariant { model, lm, report })
}

/// `(1 - w) p + w q`.
pub fn mix_distributions(p: &[f64], q: &[f64], w: f64) -> Vec<f64> {
    p.iter().zip(q).map(|(a, b)| (1.0 - w) * a + w * b).collect()
}

/// Greedy decoding from `z` with the per-step distribution mixed between
/// the conversation model and the language model (run from the zero
/// latent). Ties resolve to the lowest token id.
pub fn s2s_lm_decode(s2s: &ModelParams, lm: &ModelParams, z: &[f64], w: f64, max_len: usize) -> Result<Vec<usize>> {
    if s2s.config.vocab_size != lm.config.vocab_size {
        return Err(Error::input(format!(
            "vocabulary mismatch: {} vs {}",
            s2s.config.vocab_size, lm.config.vocab_size
        )));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::input(format!("lm weight {w} outside [0, 1]")));
    }
    let mut a = s2s.decoder_start(z)?;
    let mut b = lm.decoder_start(&vec![0.0; lm.latent_dim()])?;
    let mut prev = Vocabulary::BOS_ID;
    let mut out = Vec::new();
    while out.len() < max_len {
        let p: Vec<f64> = s2s.decoder_step(&mut a, prev).iter().map(|x| x.exp()).collect();
        let q: Vec<f64> = lm.decoder_step(&mut b, prev).iter().map(|x| x.exp()).collect();
        let next = argmax(&mix_distributions(&p, &q, w));
        if next == Vocabulary::EOS_ID {
            break;
        }
        out.push(next);
        prev = next;
    }
    Ok(out)
}

/// Index of the style sentence with the highest length-normalized
/// log-probability given the context; lowest index on ties.
pub fn retrieval_respond(model: &ModelParams, context: &[Vec<usize>], style: &[Vec<usize>]) -> Result<usize> {
    if style.is_empty() {
        return Err(Error::input("retrieval needs a non-empty style corpus"));
    }
    let z = model.encode_context(context)?;
    let scores: Vec<f64> = style
        .par_iter()
        .map(|s| Ok(model.decode_logprob(&z.values, s)? / (s.len() + 1) as f64))
        .collect::<Result<_>>()?;
    Ok(argmax(&scores))
}

pub fn rand_respond(n_style: usize, seed: u64) -> Result<usize> {
    if n_style == 0 {
        return Err(Error::input("cannot pick from an empty style corpus"));
    }
    Ok(crate::rng::rng(seed).random_range(0..n_style))
}

pub fn human_ref_respond(entry: &TestEntry, seed: u64) -> usize {
    crate::rng::rng(seed).random_range(0..entry.references.len())
}

/// A system that answers test contexts.
pub enum System<'a> {
    /// Sampling and ranking around the prediction point.
    Generator(&'a ModelParams),
    /// Same, with the mixed conversation/language-model decoder.
    S2sLm {
        s2s: &'a ModelParams,
        lm: &'a ModelParams,
        weight: f64,
    },
    Retrieval {
        model: &'a ModelParams,
        style: &'a [Vec<usize>],
    },
    Rand {
        style: &'a [Vec<usize>],
    },
    HumanRef,
}

/// Evaluates a system on the test set. Human references are scored against
/// the remaining references of their context.
pub fn evaluate_system(
    system: &System<'_>,
    test_set: &StylizedTestSet,
    scorer: &StyleScorer,
    vocab: &Vocabulary,
    keywords: Option<&StyleKeywordList>,
    count_reference: Option<f64>,
    spec: &SampleSpec,
) -> Result<MetricReport> {
    if test_set.is_empty() {
        return Err(Error::input("the test set is empty"));
    }
    let answers: Vec<(Vec<usize>, Vec<Vec<usize>>)> = test_set
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let seed = derive_seed(spec.seed, i as u64);
            let mut refs: Vec<Vec<usize>> = e.references.iter().map(|r| r.tokens.clone()).collect();
            let s = SampleSpec { seed, ..spec.clone() };
            let out = match system {
                System::Generator(m) => top1(generate_with(m, scorer, &e.context, &s, |z| {
                    m.decode_greedy(z, s.max_len)
                })?),
                System::S2sLm { s2s, lm, weight } => top1(generate_with(s2s, scorer, &e.context, &s, |z| {
                    s2s_lm_decode(s2s, lm, z, *weight, s.max_len)
                })?),
                System::Retrieval { model, style } => style[retrieval_respond(model, &e.context, style)?].clone(),
                System::Rand { style } => style[rand_respond(style.len(), seed)?].clone(),
                System::HumanRef => {
                    let k = human_ref_respond(e, seed);
                    let pick = refs.remove(k);
                    if refs.is_empty() {
                        refs.push(pick.clone());
                    }
                    pick
                }
            };
            Ok((out, refs))
        })
        .collect::<Result<_>>()?;
    let (outputs, refs): (Vec<_>, Vec<_>) = answers.into_iter().unzip();
    Ok(evaluate_outputs(
        scorer,
        vocab,
        keywords,
        count_reference,
        &outputs,
        &refs,
    ))
}

fn top1(hyps: Vec<crate::inference::Hypothesis>) -> Vec<usize> {
    hyps.into_iter().next().map(|h| h.tokens).unwrap_or_default()
}
