//! A loaded generator plus everything needed to answer a context string.

use std::path::{Path, PathBuf};

use fusedstyle_core::baselines::s2s_lm_decode;
use fusedstyle_core::corpus::{split_context, Vocabulary};
use fusedstyle_core::inference::{generate_with, Hypothesis, SampleMode, SampleSpec};
use fusedstyle_core::model::ModelParams;
use fusedstyle_core::style::StyleScorer;
use fusedstyle_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Files an [`Engine`] is loaded from.
#[derive(Clone, Debug)]
pub struct EnginePaths {
    pub model: PathBuf,
    pub scorer: PathBuf,
    pub vocab: PathBuf,
    /// Style language model for the mixed decoder.
    pub lm: Option<PathBuf>,
    pub lm_weight: f64,
}

pub struct Engine {
    pub model: ModelParams,
    pub lm: Option<ModelParams>,
    pub lm_weight: f64,
    pub scorer: StyleScorer,
    pub vocab: Vocabulary,
    /// SHA-256 of the checkpoint file, hex.
    pub model_id: String,
    pub variant: Option<String>,
}

/// One generation call, in text form.
#[derive(Clone, Debug)]
pub struct Query {
    pub context: String,
    pub rho: f64,
    pub lambda: f64,
    pub direction_sentence: Option<String>,
    pub n_candidates: usize,
    pub seed: u64,
    pub sigma: f64,
    pub max_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub relevance: f64,
    pub style_prob: f64,
    pub score: f64,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Default location of the language model written next to a mixed-decoder
/// checkpoint.
pub fn default_lm_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".lm");
    PathBuf::from(s)
}

impl Engine {
    pub fn load(paths: &EnginePaths) -> Result<Self> {
        let (model, variant) = ModelParams::load(&paths.model)?;
        let vocab = Vocabulary::load(&paths.vocab)?;
        if vocab.len() != model.config.vocab_size {
            return Err(Error::Input(format!(
                "vocabulary has {} entries but the checkpoint expects {}",
                vocab.len(),
                model.config.vocab_size
            )));
        }
        let scorer = StyleScorer::load(&paths.scorer)?;
        let lm_path = match (&paths.lm, variant.as_deref()) {
            (Some(p), _) => Some(p.clone()),
            (None, Some("s2s_lm")) => Some(default_lm_path(&paths.model)),
            _ => None,
        };
        let lm = lm_path.map(|p| ModelParams::load(&p).map(|(m, _)| m)).transpose()?;
        Ok(Engine {
            model_id: file_sha256(&paths.model)?,
            model,
            lm,
            lm_weight: paths.lm_weight,
            scorer,
            vocab,
            variant,
        })
    }

    pub fn tokenize_context(&self, text: &str) -> Result<Vec<Vec<usize>>> {
        let utts = split_context(text);
        if utts.iter().any(Vec::is_empty) {
            return Err(Error::Input("context is empty or has an empty utterance".into()));
        }
        Ok(utts.iter().map(|u| self.vocab.encode(u)).collect())
    }

    /// Ranked candidates for `q`.
    pub fn generate(&self, q: &Query) -> Result<Vec<(Candidate, usize)>> {
        let context = self.tokenize_context(&q.context)?;
        let mode = match q.direction_sentence.as_deref().map(str::trim) {
            Some(s) if !s.is_empty() => SampleMode::Towards(self.vocab.encode_text(s)),
            _ => SampleMode::Random,
        };
        let spec = SampleSpec {
            rho: q.rho,
            sigma: q.sigma,
            mode,
            n_candidates: q.n_candidates,
            lambda: q.lambda,
            max_len: q.max_len,
            seed: q.seed,
        };
        let hyps: Vec<Hypothesis> = match &self.lm {
            Some(lm) => generate_with(&self.model, &self.scorer, &context, &spec, |z| {
                s2s_lm_decode(&self.model, lm, z, self.lm_weight, q.max_len)
            })?,
            None => generate_with(&self.model, &self.scorer, &context, &spec, |z| {
                self.model.decode_greedy(z, q.max_len)
            })?,
        };
        Ok(hyps
            .into_iter()
            .map(|h| {
                (
                    Candidate {
                        text: self.vocab.decode_text(&h.tokens),
                        relevance: h.relevance,
                        style_prob: h.style_prob,
                        score: h.score,
                    },
                    h.count,
                )
            })
            .collect())
    }
}
