//! Sampling around a context's prediction point, candidate generation and
//! relevance/style ranking.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{LatentRole, LatentVector, ModelParams};
use crate::rng::{derive_seed, Rng};
use crate::style::StyleProbability;
use crate::tensor::norm;

/// `|r| = rho * sigma * sqrt(l)`.
pub fn radius_from_rho(rho: f64, sigma: f64, l: usize) -> f64 {
    rho * sigma * (l as f64).sqrt()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Uniformly random direction on the unit sphere.
    #[default]
    Random,
    /// Fixed direction towards the autoencoder latent of this sentence.
    Towards(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    pub rho: f64,
    pub sigma: f64,
    pub mode: SampleMode,
    pub n_candidates: usize,
    pub lambda: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            rho: 0.0,
            sigma: 0.1,
            mode: SampleMode::Random,
            n_candidates: 100,
            lambda: 0.5,
            max_len: 30,
            seed: 0,
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::input(format!(
                "rho must be a finite value >= 0, got {}",
                self.rho
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::input(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.n_candidates == 0 {
            return Err(Error::input("n_candidates must be at least 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::input(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.max_len == 0 {
            return Err(Error::input("max_len must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    /// Length-normalized probability `exp((1/T) log p(h | z_S2S(x)))`.
    pub relevance: f64,
    pub style_prob: f64,
    pub score: f64,
    /// How many latent samples decoded to this sequence.
    pub count: usize,
}

impl Hypothesis {
    pub fn new(tokens: Vec<usize>, relevance: f64, style_prob: f64, lambda: f64) -> Self {
        Hypothesis {
            tokens,
            relevance,
            style_prob,
            score: combined_score(relevance, style_prob, lambda),
            count: 1,
        }
    }
}

pub fn combined_score(relevance: f64, style_prob: f64, lambda: f64) -> f64 {
    (1.0 - lambda) * relevance + lambda * style_prob
}

/// Unit vector with a uniformly random direction (normalized Gaussian).
pub fn random_direction(l: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..l).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `z_S2S + radius * direction`. With a target the direction points at it;
/// otherwise it is drawn from `rng`.
pub fn sample_latent(z_s2s: &LatentVector, radius: f64, target: Option<&[f64]>, rng: &mut Rng) -> Result<LatentVector> {
    let l = z_s2s.dim();
    let dir = match target {
        Some(t) => {
            if t.len() != l {
                return Err(Error::input("target latent has the wrong dimension"));
            }
            let diff: Vec<f64> = t.iter().zip(&z_s2s.values).map(|(a, b)| a - b).collect();
            let n = norm(&diff);
            if n == 0.0 || !n.is_finite() {
                return Err(Error::DegenerateDirection);
            }
            diff.into_iter().map(|x| x / n).collect()
        }
        None => random_direction(l, rng),
    };
    if radius == 0.0 {
        return Ok(LatentVector::new(z_s2s.values.clone(), LatentRole::Prediction));
    }
    let values = z_s2s.values.iter().zip(&dir).map(|(z, d)| z + radius * d).collect();
    Ok(LatentVector::new(values, LatentRole::Prediction))
}

/// `log p(h, EOS | z)`, defined for the empty sequence too.
pub fn sequence_logprob(model: &ModelParams, z: &[f64], h: &[usize]) -> Result<f64> {
    if h.is_empty() {
        let mut st = model.decoder_start(z)?;
        return Ok(model.decoder_step(&mut st, Vocabulary::BOS_ID)[Vocabulary::EOS_ID]);
    }
    model.decode_logprob(z, h)
}

/// `exp` of the log-probability per predicted position (tokens plus
/// end-of-sentence).
pub fn relevance(model: &ModelParams, z_s2s: &[f64], h: &[usize]) -> Result<f64> {
    Ok((sequence_logprob(model, z_s2s, h)? / (h.len() + 1) as f64).exp())
}

/// Decodes `n_candidates` latent samples greedily, merges duplicates in
/// first-seen order and scores each unique sequence. The result is ranked.
pub fn generate_candidates(
    model: &ModelParams,
    scorer: &(dyn StyleProbability + Sync),
    context: &[Vec<usize>],
    spec: &SampleSpec,
) -> Result<Vec<Hypothesis>> {
    generate_with(model, scorer, context, spec, |z| model.decode_greedy(z, spec.max_len))
}

/// [`generate_candidates`] with a custom decoder from a sampled latent.
/// Relevance is always measured under `model` at the unperturbed point.
pub fn generate_with<F>(
    model: &ModelParams,
    scorer: &(dyn StyleProbability + Sync),
    context: &[Vec<usize>],
    spec: &SampleSpec,
    decode: F,
) -> Result<Vec<Hypothesis>>
where
    F: Fn(&[f64]) -> Result<Vec<usize>> + Sync,
{
    spec.validate()?;
    let z = model.encode_context(context)?;
    let target = match &spec.mode {
        SampleMode::Random => None,
        SampleMode::Towards(s) => Some(model.encode_sentence(s)?.values),
    };
    let radius = radius_from_rho(spec.rho, spec.sigma, model.latent_dim());
    let decoded: Vec<Vec<usize>> = (0..spec.n_candidates)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::rng(derive_seed(spec.seed, i as u64));
            let zi = sample_latent(&z, radius, target.as_deref(), &mut rng)?;
            decode(&zi.values)
        })
        .collect::<Result<_>>()?;

    let mut unique: Vec<(Vec<usize>, usize)> = Vec::new();
    for h in decoded {
        match unique.iter_mut().find(|(u, _)| *u == h) {
            Some(entry) => entry.1 += 1,
            None => unique.push((h, 1)),
        }
    }
    let hyps: Vec<Hypothesis> = unique
        .into_par_iter()
        .map(|(tokens, count)| {
            let rel = relevance(model, &z.values, &tokens)?;
            let style = scorer.p_style(&tokens);
            let mut h = Hypothesis::new(tokens, rel, style, spec.lambda);
            h.count = count;
            Ok(h)
        })
        .collect::<Result<_>>()?;
    Ok(rank(hyps, spec.lambda))
}

/// Recomputes scores for `lambda` and sorts descending; ties keep input
/// order.
pub fn rank(mut hyps: Vec<Hypothesis>, lambda: f64) -> Vec<Hypothesis> {
    for h in &mut hyps {
        h.score = combined_score(h.relevance, h.style_prob, lambda);
    }
    hyps.sort_by(|a, b| b.score.total_cmp(&a.score));
    hyps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::small_model;
    use proptest::prelude::*;

    struct Half;
    impl StyleProbability for Half {
        fn p_style(&self, _: &[usize]) -> f64 {
            0.5
        }
    }

    #[test]
    fn radius_examples() {
        assert_eq!(radius_from_rho(0.0, 0.1, 1000), 0.0);
        assert!((radius_from_rho(1.0, 0.1, 1000) - 3.16228).abs() < 1e-5);
        assert!((radius_from_rho(2.0, 0.1, 4) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_radius_returns_the_prediction_point() {
        let z = LatentVector::new(vec![0.3, -1.0, 2.0], LatentRole::Prediction);
        let mut rng = crate::rng::rng(1);
        assert_eq!(sample_latent(&z, 0.0, None, &mut rng).unwrap().values, z.values);
    }

    proptest! {
        #[test]
        fn norm_contract(seed in any::<u64>(), rho in 0.0f64..3.0, l in 1usize..40, towards in any::<bool>()) {
            let mut rng = crate::rng::rng(seed);
            let z = LatentVector::new(random_direction(l, &mut rng).iter().map(|x| 3.0 * x).collect(), LatentRole::Prediction);
            let t = random_direction(l, &mut rng);
            let r = radius_from_rho(rho, 0.1, l);
            let s = sample_latent(&z, r, towards.then_some(t.as_slice()), &mut rng).unwrap();
            let d: Vec<f64> = s.values.iter().zip(&z.values).map(|(a, b)| a - b).collect();
            prop_assert!((norm(&d) - r).abs() < 1e-9);
        }
    }

    #[test]
    fn towards_the_point_itself_is_degenerate() {
        let z = LatentVector::new(vec![1.0, 2.0], LatentRole::Prediction);
        let mut rng = crate::rng::rng(1);
        assert!(matches!(
            sample_latent(&z, 1.0, Some(&[1.0, 2.0]), &mut rng),
            Err(Error::DegenerateDirection)
        ));
    }

    #[test]
    fn towards_moves_along_the_target_direction() {
        let z = LatentVector::new(vec![0.0, 0.0], LatentRole::Prediction);
        let mut rng = crate::rng::rng(1);
        let s = sample_latent(&z, 0.5, Some(&[0.0, 4.0]), &mut rng).unwrap();
        assert_eq!(s.values, vec![0.0, 0.5]);
    }

    #[test]
    fn sphere_directions_have_zero_mean() {
        let mut rng = crate::rng::rng(77);
        let n = 100_000;
        let mut sum = [0.0f64; 3];
        for _ in 0..n {
            let d = random_direction(3, &mut rng);
            for k in 0..3 {
                sum[k] += d[k];
            }
        }
        // each coordinate of a uniform unit 3-vector has variance 1/3
        let bound = 3.0 * (1.0f64 / 3.0 / n as f64).sqrt();
        for s in sum {
            assert!((s / n as f64).abs() < bound);
        }
    }

    #[test]
    fn zero_rho_gives_one_candidate_and_seeds_are_reproducible() {
        let model = small_model(12, 6, 3);
        let ctx = vec![vec![5, 6, 7]];
        let spec = SampleSpec {
            rho: 0.0,
            n_candidates: 20,
            ..SampleSpec::default()
        };
        let hyps = generate_candidates(&model, &Half, &ctx, &spec).unwrap();
        assert_eq!(hyps.len(), 1);
        assert_eq!(hyps[0].count, 20);
        let spec = SampleSpec {
            rho: 3.0,
            n_candidates: 20,
            seed: 4,
            ..SampleSpec::default()
        };
        let a = generate_candidates(&model, &Half, &ctx, &spec).unwrap();
        assert_eq!(a, generate_candidates(&model, &Half, &ctx, &spec).unwrap());
        assert_eq!(a.iter().map(|h| h.count).sum::<usize>(), 20);
        for h in &a {
            assert!((h.score - combined_score(h.relevance, h.style_prob, 0.5)).abs() < 1e-12);
            assert!(h.relevance > 0.0 && h.relevance <= 1.0);
        }
    }

    #[test]
    fn invalid_specs_are_input_errors() {
        for spec in [
            SampleSpec {
                rho: -0.1,
                ..SampleSpec::default()
            },
            SampleSpec {
                lambda: 1.5,
                ..SampleSpec::default()
            },
            SampleSpec {
                n_candidates: 0,
                ..SampleSpec::default()
            },
        ] {
            assert!(matches!(spec.validate(), Err(Error::Input(_))));
        }
    }

    fn h(rel: f64, sty: f64) -> Hypothesis {
        Hypothesis::new(vec![], rel, sty, 0.5)
    }

    #[test]
    fn rank_examples() {
        assert_eq!(h(0.8, 0.2).score, 0.5);
        let ranked = rank(vec![h(0.9, 0.1), h(0.5, 0.5), h(0.1, 0.95)], 0.5);
        let order: Vec<(f64, f64)> = ranked.iter().map(|x| (x.relevance, x.style_prob)).collect();
        assert_eq!(order, vec![(0.1, 0.95), (0.9, 0.1), (0.5, 0.5)]);
        assert!((ranked[0].score - 0.525).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn rank_order_is_affine_invariant(
            items in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..30),
            lambda in 0.0f64..=1.0,
            a_exp in -3i32..4,
            b in -4i32..5,
        ) {
            let hyps: Vec<Hypothesis> = items.iter().enumerate().map(|(i, &(r, s))| {
                let mut x = Hypothesis::new(vec![i], r, s, lambda);
                x.count = i;
                x
            }).collect();
            let ranked = rank(hyps.clone(), lambda);
            let a = 2f64.powi(a_exp);
            let mut transformed: Vec<(f64, usize)> = hyps.iter().map(|x| (a * x.score + b as f64, x.count)).collect();
            transformed.sort_by(|p, q| q.0.total_cmp(&p.0));
            let lhs: Vec<usize> = ranked.iter().map(|x| x.count).collect();
            let rhs: Vec<usize> = transformed.iter().map(|x| x.1).collect();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
