//! Fusion distances, smoothness losses and the combined training objective.
//!
//! Every distance is an average of Euclidean distances normalized by
//! `n * sqrt(l)`, where `n` is the size of the set being averaged over.
//! Nearest-neighbour indices are picked on the forward values and treated as
//! constants when differentiating; ties go to the lowest index.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::ConversationPair;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::model::{ModelParams, NoiseSpec};
use crate::rng::{derived_rng, Rng};
use crate::tensor::{euclidean, Grads};

fn check_set(a: &[Vec<f64>], what: &str) -> Result<usize> {
    let Some(first) = a.first() else {
        return Err(Error::input(format!("{what} is empty")));
    };
    let l = first.len();
    if l == 0 || a.iter().any(|v| v.len() != l) {
        return Err(Error::input(format!("{what} has inconsistent or zero dimension")));
    }
    Ok(l)
}

fn norm_factor(n: usize, l: usize) -> f64 {
    1.0 / (n as f64 * (l as f64).sqrt())
}

/// For each `a`, the index of its nearest `b`, optionally skipping `b[i]`
/// for `a[i]`.
fn nearest(a: &[Vec<f64>], b: &[Vec<f64>], skip_self: bool) -> Vec<(usize, f64)> {
    a.iter()
        .enumerate()
        .map(|(i, ai)| {
            let mut best = (usize::MAX, f64::INFINITY);
            for (j, bj) in b.iter().enumerate() {
                if skip_self && i == j {
                    continue;
                }
                let d = euclidean(ai, bj);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

pub fn d_pairwise_conv(z_s2s: &[Vec<f64>], z_ae_y: &[Vec<f64>]) -> Result<f64> {
    let l = check_set(z_s2s, "prediction batch")?;
    if check_set(z_ae_y, "response batch")? != l || z_ae_y.len() != z_s2s.len() {
        return Err(Error::input(format!(
            "pairwise distance needs matching batches, got {} and {} rows",
            z_s2s.len(),
            z_ae_y.len()
        )));
    }
    let sum: f64 = z_s2s.iter().zip(z_ae_y).map(|(a, b)| euclidean(a, b)).sum();
    Ok(sum * norm_factor(z_s2s.len(), l))
}

pub fn d_nn_cross(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let l = check_set(a, "first set")?;
    if check_set(b, "second set")? != l {
        return Err(Error::input("sets have different dimensions"));
    }
    let sum: f64 = nearest(a, b, false).iter().map(|&(_, d)| d).sum();
    Ok(sum * norm_factor(a.len(), l))
}

pub fn d_style(z_s2s: &[Vec<f64>], z_ae_s: &[Vec<f64>]) -> Result<f64> {
    Ok(0.5 * d_nn_cross(z_s2s, z_ae_s)? + 0.5 * d_nn_cross(z_ae_s, z_s2s)?)
}

pub fn d_nn_same(a: &[Vec<f64>]) -> Result<f64> {
    let l = check_set(a, "set")?;
    if a.len() < 2 {
        return Err(Error::input("nearest neighbour within a set needs at least 2 points"));
    }
    let sum: f64 = nearest(a, a, true).iter().map(|&(_, d)| d).sum();
    Ok(sum * norm_factor(a.len(), l))
}

/// Latents of one training batch. `z_ae_s` is empty when no style batch is
/// present.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchLatents {
    pub z_s2s: Vec<Vec<f64>>,
    pub z_ae_y: Vec<Vec<f64>>,
    pub z_ae_s: Vec<Vec<f64>>,
}

impl BatchLatents {
    pub fn from_model(model: &ModelParams, pairs: &[ConversationPair], style: &[Vec<usize>]) -> Result<Self> {
        Ok(BatchLatents {
            z_s2s: pairs
                .iter()
                .map(|p| model.encode_context(&p.context).map(|z| z.values))
                .collect::<Result<_>>()?,
            z_ae_y: pairs
                .iter()
                .map(|p| model.encode_sentence(&p.response).map(|z| z.values))
                .collect::<Result<_>>()?,
            z_ae_s: style
                .iter()
                .map(|s| model.encode_sentence(s).map(|z| z.values))
                .collect::<Result<_>>()?,
        })
    }

    fn spread_sets(&self) -> Vec<&[Vec<f64>]> {
        let mut sets: Vec<&[Vec<f64>]> = vec![&self.z_ae_y];
        if !self.z_ae_s.is_empty() {
            sets.push(&self.z_ae_s);
        }
        sets.push(&self.z_s2s);
        sets
    }
}

/// Smallest same-set nearest-neighbour distance over the response, style and
/// prediction latents. An empty style set is left out.
pub fn d_spread_out(batch: &BatchLatents) -> Result<f64> {
    let mut best = f64::INFINITY;
    for set in batch.spread_sets() {
        best = best.min(d_nn_same(set)?);
    }
    Ok(best)
}

/// `(L_fuse_conv, L_fuse_style)`. Both may be negative.
pub fn fusion_losses(batch: &BatchLatents) -> Result<(f64, f64)> {
    let spread = d_spread_out(batch)?;
    let conv = d_pairwise_conv(&batch.z_s2s, &batch.z_ae_y)? - spread;
    let style = d_style(&batch.z_s2s, &batch.z_ae_s)? - spread;
    Ok((conv, style))
}

/// Interpolation weight and additive noise for one interpolated latent.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub u: f64,
    pub eps: Vec<f64>,
}

impl Perturbation {
    pub fn draw(l: usize, noise: NoiseSpec, rng: &mut Rng) -> Self {
        let u = rng.random::<f64>();
        let eps = (0..l)
            .map(|_| {
                let x: f64 = StandardNormal.sample(rng);
                noise.sigma() * x
            })
            .collect::<Vec<f64>>();
        Perturbation { u, eps }
    }

    /// Fixed `u` and no noise.
    pub fn exact(u: f64, l: usize) -> Self {
        Perturbation { u, eps: vec![0.0; l] }
    }

    pub fn apply(&self, za: &[f64], zb: &[f64]) -> Vec<f64> {
        za.iter()
            .zip(zb)
            .zip(&self.eps)
            .map(|((a, b), e)| (1.0 - self.u) * a + self.u * b + e)
            .collect()
    }
}

/// `(1 - u) zA + u zB + eps` with `eps ~ N(0, sigma^2 I)` drawn from `seed`.
pub fn interpolate(za: &[f64], zb: &[f64], u: f64, noise: NoiseSpec, seed: u64) -> Result<Vec<f64>> {
    if za.len() != zb.len() {
        return Err(Error::input("interpolated latents have different dimensions"));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::input(format!("interpolation weight {u} outside [0, 1]")));
    }
    let mut rng = crate::rng::rng(seed);
    let mut p = Perturbation::draw(za.len(), noise, &mut rng);
    p.u = u;
    Ok(p.apply(za, zb))
}

/// Per-example perturbations for one batch: one per conversation pair and one
/// per style sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbations {
    pub conv: Vec<Perturbation>,
    pub style: Vec<Perturbation>,
}

impl Perturbations {
    pub fn draw(n: usize, m: usize, l: usize, noise: NoiseSpec, seed: u64) -> Self {
        let mut rng = derived_rng(seed, 0x5eed);
        let conv = (0..n).map(|_| Perturbation::draw(l, noise, &mut rng)).collect();
        let style = (0..m).map(|_| Perturbation::draw(l, noise, &mut rng)).collect();
        Perturbations { conv, style }
    }
}

/// Style sentences as fed to the model: encoder input (possibly masked) and
/// the clean reconstruction target.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StyleBatch {
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
}

impl StyleBatch {
    pub fn clean(sentences: Vec<Vec<usize>>) -> Self {
        StyleBatch {
            inputs: sentences.clone(),
            targets: sentences,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Which groups of terms are optimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossTerms {
    pub conv: bool,
    pub style: bool,
}

impl LossTerms {
    pub const FULL: LossTerms = LossTerms {
        conv: true,
        style: true,
    };
    pub const CONV_ONLY: LossTerms = LossTerms {
        conv: true,
        style: false,
    };
    pub const NLL_ONLY: LossTerms = LossTerms {
        conv: false,
        style: false,
    };
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub nll: f64,
    pub d_conv: f64,
    pub d_style: f64,
    pub d_spread_out: f64,
    pub l_fuse_conv: f64,
    pub l_fuse_style: f64,
    pub l_smooth_conv: f64,
    pub l_smooth_style: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [
            self.nll,
            self.d_conv,
            self.d_style,
            self.d_spread_out,
            self.l_fuse_conv,
            self.l_fuse_style,
            self.l_smooth_conv,
            self.l_smooth_style,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossOptions {
    /// Optional ceiling on the spread-out distance, for divergence debugging.
    #[serde(default)]
    pub spread_cap: Option<f64>,
}

// -- graph builders ----------------------------------------------------------

fn nn_vars(g: &mut Graph<'_>, a: &[Var], b: &[Var], skip_self: bool) -> Var {
    let av: Vec<Vec<f64>> = a.iter().map(|&v| g.value(v).to_vec()).collect();
    let bv: Vec<Vec<f64>> = b.iter().map(|&v| g.value(v).to_vec()).collect();
    let l = av[0].len();
    let dists: Vec<Var> = nearest(&av, &bv, skip_self)
        .into_iter()
        .enumerate()
        .map(|(i, (j, _))| g.dist(a[i], b[j]))
        .collect();
    g.sum_scaled(&dists, norm_factor(a.len(), l))
}

pub fn d_pairwise_conv_graph(g: &mut Graph<'_>, a: &[Var], b: &[Var]) -> Var {
    let l = g.value(a[0]).len();
    let dists: Vec<Var> = a.iter().zip(b).map(|(&x, &y)| g.dist(x, y)).collect();
    g.sum_scaled(&dists, norm_factor(a.len(), l))
}

pub fn d_nn_cross_graph(g: &mut Graph<'_>, a: &[Var], b: &[Var]) -> Var {
    nn_vars(g, a, b, false)
}

pub fn d_nn_same_graph(g: &mut Graph<'_>, a: &[Var]) -> Var {
    nn_vars(g, a, a, true)
}

pub fn d_style_graph(g: &mut Graph<'_>, a: &[Var], b: &[Var]) -> Var {
    let ab = d_nn_cross_graph(g, a, b);
    let ba = d_nn_cross_graph(g, b, a);
    g.combine(vec![(ab, 0.5), (ba, 0.5)])
}

fn interpolate_graph(g: &mut Graph<'_>, za: Var, zb: Var, p: &Perturbation) -> Var {
    let eps = g.input(p.eps.clone());
    g.combine(vec![(za, 1.0 - p.u), (zb, p.u), (eps, 1.0)])
}

/// `-(1/T) log p(t | z)` with `T` the number of predicted positions
/// (tokens plus end-of-sentence).
fn normalized_nll(g: &mut Graph<'_>, model: &ModelParams, z: Var, t: &[usize]) -> Var {
    let nll = model.decode_nll_graph(g, z, t);
    g.scale(nll, 1.0 / (t.len() + 1) as f64)
}

struct LossVars {
    nll: Var,
    d_conv: Option<Var>,
    d_style: Option<Var>,
    spread: Option<Var>,
    fuse_conv: Option<Var>,
    fuse_style: Option<Var>,
    smooth_conv: Option<Var>,
    smooth_style: Option<Var>,
    total: Var,
}

fn validate_batch(
    model: &ModelParams,
    pairs: &[ConversationPair],
    style: Option<&StyleBatch>,
    terms: LossTerms,
) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::input("empty conversation batch"));
    }
    for p in pairs {
        if p.context.is_empty() || p.context.iter().any(Vec::is_empty) || p.response.is_empty() {
            return Err(Error::input("conversation pair with empty context or response"));
        }
        p.context.iter().try_for_each(|u| model.check_tokens(u))?;
        model.check_tokens(&p.response)?;
    }
    if terms.conv && pairs.len() < 2 {
        return Err(Error::input(
            "fusion terms need at least 2 conversation pairs per batch",
        ));
    }
    if let Some(s) = style {
        if s.inputs.len() != s.targets.len() {
            return Err(Error::input("style batch inputs and targets differ in length"));
        }
        if terms.conv && s.len() == 1 {
            return Err(Error::input("style batch needs at least 2 sentences"));
        }
        for (i, t) in s.inputs.iter().zip(&s.targets) {
            if i.is_empty() || t.is_empty() {
                return Err(Error::input("empty style sentence"));
            }
            model.check_tokens(i)?;
            model.check_tokens(t)?;
        }
    }
    if terms.style && style.is_none_or(StyleBatch::is_empty) {
        return Err(Error::input("style terms requested without a style batch"));
    }
    Ok(())
}

fn build_loss(
    g: &mut Graph<'_>,
    model: &ModelParams,
    pairs: &[ConversationPair],
    style: Option<&StyleBatch>,
    perturb: &Perturbations,
    terms: LossTerms,
    opts: LossOptions,
) -> LossVars {
    let n = pairs.len();
    let z_s2s: Vec<Var> = pairs
        .iter()
        .map(|p| model.encode_context_graph(g, &p.context))
        .collect();
    let nll_terms: Vec<Var> = pairs
        .iter()
        .zip(&z_s2s)
        .map(|(p, &z)| normalized_nll(g, model, z, &p.response))
        .collect();
    let nll = g.sum_scaled(&nll_terms, 1.0 / n as f64);

    let mut out = LossVars {
        nll,
        d_conv: None,
        d_style: None,
        spread: None,
        fuse_conv: None,
        fuse_style: None,
        smooth_conv: None,
        smooth_style: None,
        total: nll,
    };
    if !terms.conv && !terms.style {
        return out;
    }

    let z_ae_y: Vec<Var> = pairs
        .iter()
        .map(|p| model.encode_sentence_graph(g, &p.response))
        .collect();
    let style = style.filter(|s| !s.is_empty());
    let z_ae_s: Vec<Var> = style
        .map(|s| s.inputs.iter().map(|t| model.encode_sentence_graph(g, t)).collect())
        .unwrap_or_default();

    let mut comps = vec![d_nn_same_graph(g, &z_ae_y)];
    if !z_ae_s.is_empty() {
        comps.push(d_nn_same_graph(g, &z_ae_s));
    }
    comps.push(d_nn_same_graph(g, &z_s2s));
    let mut spread = g.min(comps);
    if let Some(cap) = opts.spread_cap {
        if g.scalar(spread) > cap {
            spread = g.constant(cap);
        }
    }
    out.spread = Some(spread);

    let mut total_terms = vec![(nll, 1.0)];
    if terms.conv {
        let d_conv = d_pairwise_conv_graph(g, &z_s2s, &z_ae_y);
        let fuse = g.sub(d_conv, spread);
        let smooth: Vec<Var> = pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let z = interpolate_graph(g, z_ae_y[i], z_s2s[i], &perturb.conv[i]);
                normalized_nll(g, model, z, &p.response)
            })
            .collect();
        let smooth = g.sum_scaled(&smooth, 1.0 / n as f64);
        out.d_conv = Some(d_conv);
        out.fuse_conv = Some(fuse);
        out.smooth_conv = Some(smooth);
        total_terms.push((fuse, 1.0));
        total_terms.push((smooth, 1.0));
    }
    if terms.style {
        let s = style.expect("validated");
        let m = s.len();
        let d_style = d_style_graph(g, &z_s2s, &z_ae_s);
        let fuse = g.sub(d_style, spread);
        let smooth: Vec<Var> = (0..m)
            .map(|j| {
                let x = pairs[j % n].last_utterance();
                let zx = model.encode_sentence_graph(g, x);
                let p = &perturb.style[j];
                let z = interpolate_graph(g, zx, z_ae_s[j], p);
                let lx = normalized_nll(g, model, z, x);
                let ls = normalized_nll(g, model, z, &s.targets[j]);
                g.combine(vec![(lx, 1.0 - p.u), (ls, p.u)])
            })
            .collect();
        let smooth = g.sum_scaled(&smooth, 1.0 / m as f64);
        out.d_style = Some(d_style);
        out.fuse_style = Some(fuse);
        out.smooth_style = Some(smooth);
        total_terms.push((fuse, 1.0));
        total_terms.push((smooth, 1.0));
    }
    out.total = g.combine(total_terms);
    out
}

fn breakdown(g: &Graph<'_>, v: &LossVars) -> LossBreakdown {
    let s = |x: Option<Var>| x.map_or(0.0, |x| g.scalar(x));
    let mut b = LossBreakdown {
        nll: g.scalar(v.nll),
        d_conv: s(v.d_conv),
        d_style: s(v.d_style),
        d_spread_out: s(v.spread),
        l_fuse_conv: s(v.fuse_conv),
        l_fuse_style: s(v.fuse_style),
        l_smooth_conv: s(v.smooth_conv),
        l_smooth_style: s(v.smooth_style),
        total: 0.0,
    };
    b.total = b.nll + b.l_fuse_conv + b.l_smooth_conv + b.l_fuse_style + b.l_smooth_style;
    b
}

/// Loss components for one batch. With `style` absent (or `terms.style`
/// off) the style terms are zero.
pub fn total_loss(
    model: &ModelParams,
    pairs: &[ConversationPair],
    style: Option<&StyleBatch>,
    perturb: &Perturbations,
    terms: LossTerms,
    opts: LossOptions,
) -> Result<LossBreakdown> {
    validate_batch(model, pairs, style, terms)?;
    let mut g = Graph::new(&model.store);
    let vars = build_loss(&mut g, model, pairs, style, perturb, terms, opts);
    Ok(breakdown(&g, &vars))
}

/// Loss components and the gradient of `total` with respect to every
/// parameter.
pub fn loss_and_grads(
    model: &ModelParams,
    pairs: &[ConversationPair],
    style: Option<&StyleBatch>,
    perturb: &Perturbations,
    terms: LossTerms,
    opts: LossOptions,
) -> Result<(LossBreakdown, Grads)> {
    validate_batch(model, pairs, style, terms)?;
    let mut g = Graph::new(&model.store);
    let vars = build_loss(&mut g, model, pairs, style, perturb, terms, opts);
    let b = breakdown(&g, &vars);
    let grads = g.backward(vars.total).params;
    Ok((b, grads))
}

/// Mean length-normalized reconstruction loss `-(1/T) log p(s | z_AE(s))`.
/// Used by the multi-task baseline's style batches.
pub fn reconstruction_loss_and_grads(model: &ModelParams, batch: &StyleBatch) -> Result<(f64, Grads)> {
    if batch.is_empty() {
        return Err(Error::input("empty reconstruction batch"));
    }
    let mut g = Graph::new(&model.store);
    let mut terms = Vec::with_capacity(batch.len());
    for (inp, tgt) in batch.inputs.iter().zip(&batch.targets) {
        if inp.is_empty() || tgt.is_empty() {
            return Err(Error::input("empty style sentence"));
        }
        model.check_tokens(inp)?;
        model.check_tokens(tgt)?;
        let z = model.encode_sentence_graph(&mut g, inp);
        terms.push(normalized_nll(&mut g, model, z, tgt));
    }
    let loss = g.sum_scaled(&terms, 1.0 / batch.len() as f64);
    let value = g.scalar(loss);
    Ok((value, g.backward(loss).params))
}

/// Mean length-normalized NLL of sentences decoded from the zero latent: an
/// unconditional language model on the decoder.
pub fn lm_loss_and_grads(model: &ModelParams, sentences: &[Vec<usize>]) -> Result<(f64, Grads)> {
    if sentences.is_empty() {
        return Err(Error::input("empty language-model batch"));
    }
    let mut g = Graph::new(&model.store);
    let mut terms = Vec::with_capacity(sentences.len());
    for s in sentences {
        if s.is_empty() {
            return Err(Error::input("empty sentence"));
        }
        model.check_tokens(s)?;
        let z = g.input(vec![0.0; model.latent_dim()]);
        terms.push(normalized_nll(&mut g, model, z, s));
    }
    let loss = g.sum_scaled(&terms, 1.0 / sentences.len() as f64);
    let value = g.scalar(loss);
    Ok((value, g.backward(loss).params))
}

/// `-(1/T) log p(y | interpolate(z_AE(y), z_S2S(x)))`.
pub fn loss_smooth_conv(model: &ModelParams, pair: &ConversationPair, p: &Perturbation) -> Result<f64> {
    let zy = model.encode_sentence(&pair.response)?;
    let zx = model.encode_context(&pair.context)?;
    let z = p.apply(&zy.values, &zx.values);
    Ok(-model.decode_logprob(&z, &pair.response)? / (pair.response.len() + 1) as f64)
}

/// `-(1-u)(1/|x|) log p(x|z) - u (1/|s|) log p(s|z)` at
/// `z = interpolate(z_AE(x), z_AE(s))`.
pub fn loss_smooth_style(model: &ModelParams, x_utt: &[usize], s: &[usize], p: &Perturbation) -> Result<f64> {
    let zx = model.encode_sentence(x_utt)?;
    let zs = model.encode_sentence(s)?;
    let z = p.apply(&zx.values, &zs.values);
    let lx = -model.decode_logprob(&z, x_utt)? / (x_utt.len() + 1) as f64;
    let ls = -model.decode_logprob(&z, s)? / (s.len() + 1) as f64;
    Ok((1.0 - p.u) * lx + p.u * ls)
}

#[cfg(test)]
mod tests;
