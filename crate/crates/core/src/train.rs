//! Two-phase training: conversation-only pretraining, then joint training
//! with style batches. Also drives the baseline objectives.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{mask_style_tokens, ConversationPair, MaskConfig, StyleSentence, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{ModelParams, NoiseSpec};
use crate::objectives::{
    lm_loss_and_grads, loss_and_grads, reconstruction_loss_and_grads, total_loss, LossBreakdown, LossOptions,
    LossTerms, Perturbations, StyleBatch,
};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{derive_seed, derived_rng, Rng};
use crate::tensor::Grads;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size_conv: usize,
    pub batch_size_style: usize,
    pub pretrain_epochs: usize,
    pub max_joint_epochs: usize,
    /// Evaluations without improvement before joint training stops.
    pub patience: usize,
    pub sigma: f64,
    pub seed: u64,
    pub validation_frac: f64,
    pub clip_norm: Option<f64>,
    pub spread_cap: Option<f64>,
    pub mask: MaskConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            batch_size_conv: 32,
            batch_size_style: 32,
            pretrain_epochs: 2,
            max_joint_epochs: 20,
            patience: 3,
            sigma: 0.1,
            seed: 0,
            validation_frac: 0.05,
            clip_norm: Some(5.0),
            spread_cap: None,
            mask: MaskConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size_conv < 2 || self.batch_size_style < 2 {
            return Err(Error::Config("batch sizes must be at least 2".into()));
        }
        if !(0.0..0.5).contains(&self.validation_frac) {
            return Err(Error::Config(format!(
                "validation fraction {} outside [0, 0.5)",
                self.validation_frac
            )));
        }
        NoiseSpec::new(self.sigma)?;
        Ok(())
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec::new(self.sigma).expect("validated")
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            clip_norm: self.clip_norm,
            ..AdamConfig::default()
        }
    }

    fn loss_options(&self) -> LossOptions {
        LossOptions {
            spread_cap: self.spread_cap,
        }
    }
}

/// What the optimizer minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// The combined loss with the given term groups. Pretraining uses the
    /// conversation terms only; the joint phase adds style batches.
    Fusion(LossTerms),
    /// Prediction NLL batches alternating with style reconstruction batches;
    /// no latent regularizers.
    MultiTask,
    /// Prediction NLL only, conversation data only.
    ConversationOnly,
    /// Unconditional decoder language model on the style corpus.
    LanguageModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub step: u64,
    pub phase: String,
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

/// Training and validation data.
pub struct TrainData<'a> {
    pub conv: &'a [ConversationPair],
    pub style: &'a [StyleSentence],
    pub vocab: &'a Vocabulary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: u64,
    pub validation: Vec<f64>,
    pub best_validation: Option<f64>,
}

/// Splits off `frac` of the items (at least one when `frac > 0` and the
/// input has two or more), chosen by `seed`. Returns `(train, validation)`
/// in original order.
pub fn validation_split<T: Clone>(items: &[T], frac: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    if frac <= 0.0 || items.len() < 2 {
        return (items.to_vec(), Vec::new());
    }
    let n_val = ((items.len() as f64 * frac).round() as usize).clamp(1, items.len() - 1);
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut crate::rng::rng(seed));
    let mut is_val = vec![false; items.len()];
    for &i in &idx[..n_val] {
        is_val[i] = true;
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, item) in items.iter().enumerate() {
        if is_val[i] {
            val.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    (train, val)
}

/// Endless stream of style batches; reshuffles on every pass.
struct StyleCycle<'a> {
    items: &'a [StyleSentence],
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl<'a> StyleCycle<'a> {
    fn new(items: &'a [StyleSentence], seed: u64) -> Self {
        let mut rng = crate::rng::rng(seed);
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng);
        StyleCycle {
            items,
            order,
            pos: 0,
            rng,
        }
    }

    fn next_batch(&mut self, size: usize) -> Vec<&'a StyleSentence> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(&self.items[self.order[self.pos]]);
            self.pos += 1;
        }
        out
    }
}

fn conv_batches(n: usize, size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size).filter(|c| c.len() >= 2).map(|c| c.to_vec()).collect()
}

fn masked_batch(sentences: &[&StyleSentence], vocab: &Vocabulary, mask: MaskConfig, seed: u64) -> StyleBatch {
    StyleBatch {
        inputs: sentences
            .iter()
            .enumerate()
            .map(|(i, s)| mask_style_tokens(s, vocab, mask, derive_seed(seed, i as u64)))
            .collect(),
        targets: sentences.iter().map(|s| s.tokens.clone()).collect(),
    }
}

fn describe_batch(pairs: &[ConversationPair], style: Option<&StyleBatch>) -> String {
    let mut s = String::new();
    for p in pairs {
        s.push_str(&format!("\n  context {:?} -> response {:?}", p.context, p.response));
    }
    if let Some(b) = style {
        for t in &b.targets {
            s.push_str(&format!("\n  style {t:?}"));
        }
    }
    s
}

struct Loop<'w> {
    adam: Adam,
    step: u64,
    log: Option<&'w mut dyn Write>,
}

impl Loop<'_> {
    fn record(&mut self, phase: &str, epoch: usize, loss: &LossBreakdown) -> Result<()> {
        if let Some(w) = self.log.as_mut() {
            let rec = TrainLogRecord {
                step: self.step,
                phase: phase.into(),
                epoch,
                loss: loss.clone(),
            };
            serde_json::to_writer(&mut **w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn apply(
        &mut self,
        model: &mut ModelParams,
        mut grads: Grads,
        loss: &LossBreakdown,
        diagnostic: impl FnOnce() -> String,
    ) -> Result<()> {
        self.step += 1;
        if !loss.is_finite() || !grads.all_finite() {
            return Err(Error::NonFinite {
                step: self.step,
                detail: format!("loss {loss:?}; offending batch:{}", diagnostic()),
            });
        }
        self.adam.step(&mut model.store, &mut grads);
        Ok(())
    }
}

fn nll_only(nll: f64) -> LossBreakdown {
    LossBreakdown {
        nll,
        total: nll,
        ..LossBreakdown::default()
    }
}

/// Validation loss under fixed perturbations and unmasked style batches.
pub fn validation_loss(
    model: &ModelParams,
    objective: Objective,
    conv: &[ConversationPair],
    style: &[StyleSentence],
    cfg: &TrainConfig,
) -> Result<f64> {
    let noise = cfg.noise();
    let opts = cfg.loss_options();
    let l = model.latent_dim();
    let bs = cfg.batch_size_conv;
    let style_tokens: Vec<Vec<usize>> = style.iter().map(|s| s.tokens.clone()).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    match objective {
        Objective::Fusion(terms) => {
            let chunks: Vec<&[ConversationPair]> = conv.chunks(bs).filter(|c| c.len() >= 2).collect();
            let style_chunks: Vec<&[Vec<usize>]> = style_tokens
                .chunks(cfg.batch_size_style)
                .filter(|c| c.len() >= 2)
                .collect();
            if terms.style && style_chunks.is_empty() {
                return Err(Error::input("validation style data needs at least 2 sentences"));
            }
            for (k, chunk) in chunks.iter().enumerate() {
                let sb = (!style_chunks.is_empty())
                    .then(|| StyleBatch::clean(style_chunks[k % style_chunks.len()].to_vec()));
                let m = sb.as_ref().map_or(0, StyleBatch::len);
                let pert = Perturbations::draw(chunk.len(), m, l, noise, derive_seed(cfg.seed, 0xa1_0000 + k as u64));
                total += total_loss(model, chunk, sb.as_ref(), &pert, terms, opts)?.total;
                count += 1;
            }
        }
        Objective::MultiTask | Objective::ConversationOnly => {
            let none = Perturbations {
                conv: vec![],
                style: vec![],
            };
            for chunk in conv.chunks(bs) {
                total += total_loss(model, chunk, None, &none, LossTerms::NLL_ONLY, opts)?.total;
                count += 1;
            }
            if objective == Objective::MultiTask {
                for chunk in style_tokens.chunks(cfg.batch_size_style) {
                    total += reconstruction_loss_and_grads(model, &StyleBatch::clean(chunk.to_vec()))?.0;
                    count += 1;
                }
            }
        }
        Objective::LanguageModel => {
            for chunk in style_tokens.chunks(cfg.batch_size_style) {
                total += lm_loss_and_grads(model, chunk)?.0;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::input("validation split is too small to evaluate"));
    }
    Ok(total / count as f64)
}

fn pretrain_terms(objective: Objective) -> Option<LossTerms> {
    match objective {
        Objective::Fusion(t) => Some(LossTerms {
            conv: t.conv,
            style: false,
        }),
        Objective::MultiTask => Some(LossTerms::NLL_ONLY),
        Objective::ConversationOnly | Objective::LanguageModel => None,
    }
}

fn run_pretrain(
    model: &mut ModelParams,
    conv: &[ConversationPair],
    terms: LossTerms,
    cfg: &TrainConfig,
    lp: &mut Loop<'_>,
) -> Result<()> {
    let noise = cfg.noise();
    let opts = cfg.loss_options();
    let mut rng = derived_rng(cfg.seed, 20);
    for epoch in 0..cfg.pretrain_epochs {
        for batch in conv_batches(conv.len(), cfg.batch_size_conv, &mut rng) {
            let pairs: Vec<ConversationPair> = batch.iter().map(|&i| conv[i].clone()).collect();
            let pert = Perturbations::draw(
                pairs.len(),
                0,
                model.latent_dim(),
                noise,
                derive_seed(cfg.seed, 1 << 32 | lp.step),
            );
            let (loss, grads) = loss_and_grads(model, &pairs, None, &pert, terms, opts)?;
            lp.record("pretrain", epoch, &loss)?;
            lp.apply(model, grads, &loss, || describe_batch(&pairs, None))?;
        }
        log::info!("pretrain epoch {} done at step {}", epoch + 1, lp.step);
    }
    Ok(())
}

/// Conversation-only pretraining with the style terms switched off. Returns
/// the model unchanged when `pretrain_epochs` is 0.
pub fn pretrain(
    mut model: ModelParams,
    conv: &[ConversationPair],
    terms: LossTerms,
    cfg: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<ModelParams> {
    cfg.validate()?;
    if conv.is_empty() {
        return Err(Error::input("no conversation data to pretrain on"));
    }
    let mut lp = Loop {
        adam: Adam::new(cfg.adam(), &model.store),
        step: 0,
        log,
    };
    run_pretrain(&mut model, conv, LossTerms { style: false, ..terms }, cfg, &mut lp)?;
    Ok(model)
}

/// Full schedule for `objective`: pretraining where it applies, then joint
/// epochs until validation loss stops improving for `patience` evaluations
/// or `max_joint_epochs` is reached. The best validated parameters are kept.
pub fn train(
    mut model: ModelParams,
    data: &TrainData<'_>,
    objective: Objective,
    cfg: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    let needs_conv = objective != Objective::LanguageModel;
    let needs_style = matches!(objective, Objective::MultiTask | Objective::LanguageModel)
        || matches!(objective, Objective::Fusion(t) if t.style);
    if needs_conv && data.conv.len() < 2 {
        return Err(Error::input("need at least 2 conversation pairs"));
    }
    if needs_style && data.style.len() < 2 {
        return Err(Error::input(
            "style data needs at least 2 sentences (nearest neighbour undefined)",
        ));
    }
    let (conv_train, conv_val) = validation_split(data.conv, cfg.validation_frac, derive_seed(cfg.seed, 30));
    let (style_train, style_val) = validation_split(data.style, cfg.validation_frac, derive_seed(cfg.seed, 31));
    // the fusion objective encodes style batches even when it does not optimize them
    let uses_style = needs_style || (matches!(objective, Objective::Fusion(_)) && style_train.len() >= 2);

    let mut lp = Loop {
        adam: Adam::new(cfg.adam(), &model.store),
        step: 0,
        log,
    };
    if let Some(terms) = pretrain_terms(objective) {
        run_pretrain(&mut model, &conv_train, terms, cfg, &mut lp)?;
    }

    let noise = cfg.noise();
    let opts = cfg.loss_options();
    let l = model.latent_dim();
    let mut conv_rng = derived_rng(cfg.seed, 21);
    let mut cycle = StyleCycle::new(if uses_style { &style_train } else { &[] }, derive_seed(cfg.seed, 22));
    let val_style: &[StyleSentence] = if uses_style { &style_val } else { &[] };
    let mut report = TrainReport::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0;

    for epoch in 0..cfg.max_joint_epochs {
        match objective {
            Objective::Fusion(terms) => {
                for batch in conv_batches(conv_train.len(), cfg.batch_size_conv, &mut conv_rng) {
                    let pairs: Vec<ConversationPair> = batch.iter().map(|&i| conv_train[i].clone()).collect();
                    let sb = uses_style.then(|| {
                        let s = cycle.next_batch(cfg.batch_size_style);
                        masked_batch(&s, data.vocab, cfg.mask, derive_seed(cfg.seed, 2 << 32 | lp.step))
                    });
                    let m = sb.as_ref().map_or(0, StyleBatch::len);
                    let pert = Perturbations::draw(pairs.len(), m, l, noise, derive_seed(cfg.seed, 3 << 32 | lp.step));
                    let (loss, grads) = loss_and_grads(&model, &pairs, sb.as_ref(), &pert, terms, opts)?;
                    lp.record("joint", epoch, &loss)?;
                    lp.apply(&mut model, grads, &loss, || describe_batch(&pairs, sb.as_ref()))?;
                }
            }
            Objective::MultiTask => {
                let none = Perturbations {
                    conv: vec![],
                    style: vec![],
                };
                for batch in conv_batches(conv_train.len(), cfg.batch_size_conv, &mut conv_rng) {
                    let pairs: Vec<ConversationPair> = batch.iter().map(|&i| conv_train[i].clone()).collect();
                    let (loss, grads) = loss_and_grads(&model, &pairs, None, &none, LossTerms::NLL_ONLY, opts)?;
                    lp.record("joint", epoch, &loss)?;
                    lp.apply(&mut model, grads, &loss, || describe_batch(&pairs, None))?;

                    let s = cycle.next_batch(cfg.batch_size_style);
                    let sb = masked_batch(&s, data.vocab, cfg.mask, derive_seed(cfg.seed, 2 << 32 | lp.step));
                    let (recon, grads) = reconstruction_loss_and_grads(&model, &sb)?;
                    let loss = nll_only(recon);
                    lp.record("joint_autoencoder", epoch, &loss)?;
                    lp.apply(&mut model, grads, &loss, || describe_batch(&[], Some(&sb)))?;
                }
            }
            Objective::ConversationOnly => {
                let none = Perturbations {
                    conv: vec![],
                    style: vec![],
                };
                for batch in conv_batches(conv_train.len(), cfg.batch_size_conv, &mut conv_rng) {
                    let pairs: Vec<ConversationPair> = batch.iter().map(|&i| conv_train[i].clone()).collect();
                    let (loss, grads) = loss_and_grads(&model, &pairs, None, &none, LossTerms::NLL_ONLY, opts)?;
                    lp.record("joint", epoch, &loss)?;
                    lp.apply(&mut model, grads, &loss, || describe_batch(&pairs, None))?;
                }
            }
            Objective::LanguageModel => {
                let n_batches = style_train.len().div_ceil(cfg.batch_size_style);
                for _ in 0..n_batches {
                    let s = cycle.next_batch(cfg.batch_size_style);
                    let tokens: Vec<Vec<usize>> = s.iter().map(|x| x.tokens.clone()).collect();
                    let (nll, grads) = lm_loss_and_grads(&model, &tokens)?;
                    let loss = nll_only(nll);
                    lp.record("joint", epoch, &loss)?;
                    lp.apply(&mut model, grads, &loss, || {
                        describe_batch(&[], Some(&StyleBatch::clean(tokens.clone())))
                    })?;
                }
            }
        }

        let has_val = match objective {
            Objective::LanguageModel => !style_val.is_empty(),
            _ => conv_val.len() >= 2,
        };
        if !has_val {
            continue;
        }
        let v = validation_loss(&model, objective, &conv_val, val_style, cfg)?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                step: lp.step,
                detail: format!("validation loss {v} after epoch {epoch}"),
            });
        }
        log::info!("epoch {} step {}: validation loss {v:.5}", epoch + 1, lp.step);
        report.validation.push(v);
        if let Some(w) = lp.log.as_mut() {
            writeln!(
                w,
                "{}",
                serde_json::json!({"step": lp.step, "phase": "validation", "epoch": epoch, "total": v})
            )?;
        }
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::info!("stopping: no improvement for {stale} evaluations");
                break;
            }
        }
    }
    report.steps = lp.step;
    if let Some((v, m)) = best {
        report.best_validation = Some(v);
        model = m;
    }
    Ok((model, report))
}

/// Joint phase only, on an already pretrained model.
pub fn joint_train(
    model: ModelParams,
    data: &TrainData<'_>,
    terms: LossTerms,
    cfg: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<(ModelParams, TrainReport)> {
    let cfg = TrainConfig {
        pretrain_epochs: 0,
        ..cfg.clone()
    };
    train(model, data, Objective::Fusion(terms), &cfg, log)
}
