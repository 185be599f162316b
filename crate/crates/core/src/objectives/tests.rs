use super::*;
use crate::model::ModelConfig;
use crate::nn::CellType;
use proptest::prelude::*;

/// Full distance matrix, then row minima: the O(n^2) reference.
fn brute_cross(a: &[Vec<f64>], b: &[Vec<f64>], exclude_diag: bool) -> f64 {
    let l = a[0].len() as f64;
    let mut total = 0.0;
    for (i, ai) in a.iter().enumerate() {
        let row: Vec<f64> = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !(exclude_diag && *j == i))
            .map(|(_, bj)| ai.iter().zip(bj).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
            .collect();
        total += row.iter().cloned().fold(f64::INFINITY, f64::min);
    }
    total / (a.len() as f64 * l.sqrt())
}

fn v(xs: &[f64]) -> Vec<f64> {
    xs.to_vec()
}

fn random_set(rng: &mut crate::rng::Rng, n: usize, l: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..l).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

#[test]
fn pairwise_examples() {
    let a = vec![v(&[1.0, 2.0, 3.0, 4.0]), v(&[0.0, 0.0, 1.0, 0.0])];
    assert_eq!(d_pairwise_conv(&a, &a).unwrap(), 0.0);
    assert_eq!(
        d_pairwise_conv(&[v(&[2.0, 0.0, 0.0, 0.0])], &[v(&[0.0; 4])]).unwrap(),
        1.0
    );
    let x = vec![v(&[2.0, 0.0, 0.0, 0.0]), v(&[1.0, 1.0, 1.0, 1.0])];
    let y = vec![v(&[0.0; 4]), v(&[1.0, 1.0, 1.0, 1.0])];
    assert_eq!(d_pairwise_conv(&x, &y).unwrap(), 0.5);
    assert!(matches!(d_pairwise_conv(&x, &y[..1]), Err(Error::Input(_))));
}

#[test]
fn nn_cross_examples() {
    let zero = vec![v(&[0.0; 4])];
    assert_eq!(d_nn_cross(&zero, &zero).unwrap(), 0.0);
    let a = vec![v(&[1.0, 0.0, 0.0, 0.0])];
    let b = vec![v(&[0.0; 4]), v(&[3.0, 0.0, 0.0, 0.0])];
    assert_eq!(d_nn_cross(&a, &b).unwrap(), 0.5);
    let a = vec![v(&[0.0; 4]), v(&[10.0, 0.0, 0.0, 0.0])];
    assert_eq!(d_nn_cross(&a, &zero).unwrap(), 2.5);
    assert_eq!(d_nn_cross(&zero, &a).unwrap(), 0.0);
    assert!(matches!(d_nn_cross(&[], &zero), Err(Error::Input(_))));
}

#[test]
fn d_style_examples() {
    let a = vec![v(&[0.0; 4]), v(&[10.0, 0.0, 0.0, 0.0])];
    let b = vec![v(&[0.0; 4])];
    assert_eq!(d_style(&a, &b).unwrap(), 1.25);
    assert_eq!(d_style(&b, &a).unwrap(), 1.25);
    assert_eq!(d_style(&a, &a).unwrap(), 0.0);
}

#[test]
fn nn_same_examples() {
    assert_eq!(d_nn_same(&[v(&[0.0; 4]), v(&[2.0, 0.0, 0.0, 0.0])]).unwrap(), 1.0);
    assert_eq!(d_nn_same(&[v(&[1.0; 4]), v(&[1.0; 4])]).unwrap(), 0.0);
    assert!(matches!(d_nn_same(&[v(&[1.0; 4])]), Err(Error::Input(_))));
}

fn worked_batch() -> BatchLatents {
    // d_nn_same components 1.0, 0.5, 2.0
    BatchLatents {
        z_ae_y: vec![v(&[0.0; 4]), v(&[2.0, 0.0, 0.0, 0.0])],
        z_ae_s: vec![v(&[0.0; 4]), v(&[1.0, 0.0, 0.0, 0.0])],
        z_s2s: vec![v(&[0.0; 4]), v(&[4.0, 0.0, 0.0, 0.0])],
    }
}

#[test]
fn spread_out_examples() {
    let b = worked_batch();
    assert_eq!(d_nn_same(&b.z_ae_y).unwrap(), 1.0);
    assert_eq!(d_nn_same(&b.z_ae_s).unwrap(), 0.5);
    assert_eq!(d_nn_same(&b.z_s2s).unwrap(), 2.0);
    assert_eq!(d_spread_out(&b).unwrap(), 0.5);

    let same = BatchLatents {
        z_ae_y: b.z_ae_y.clone(),
        z_ae_s: b.z_ae_y.clone(),
        z_s2s: b.z_ae_y.clone(),
    };
    assert_eq!(d_spread_out(&same).unwrap(), 1.0);

    // a two-point set collapsed onto one point
    let mut dup = b.clone();
    dup.z_s2s[1] = dup.z_s2s[0].clone();
    assert_eq!(d_spread_out(&dup).unwrap(), 0.0);
    // with more points, only the duplicated pair drops to zero
    let mut grown = b.clone();
    grown.z_s2s.push(grown.z_s2s[1].clone());
    assert_eq!(d_nn_same(&grown.z_s2s).unwrap(), 4.0 / (3.0 * 2.0));
}

#[test]
fn fusion_examples() {
    let b = worked_batch();
    let (conv, style) = fusion_losses(&b).unwrap();
    let spread = 0.5;
    assert_eq!(conv, d_pairwise_conv(&b.z_s2s, &b.z_ae_y).unwrap() - spread);
    assert_eq!(style, d_style(&b.z_s2s, &b.z_ae_s).unwrap() - spread);

    // all spaces identical, distinct points: both fusion losses are -spread
    let pts = vec![v(&[0.0; 4]), v(&[2.0, 0.0, 0.0, 0.0]), v(&[0.0, 3.0, 0.0, 0.0])];
    let same = BatchLatents {
        z_ae_y: pts.clone(),
        z_ae_s: pts.clone(),
        z_s2s: pts,
    };
    let spread = d_spread_out(&same).unwrap();
    assert!(spread > 0.0);
    assert_eq!(fusion_losses(&same).unwrap(), (-spread, -spread));
}

#[test]
fn distances_match_brute_force_on_random_batches() {
    let mut rng = crate::rng::rng(99);
    for _ in 0..100 {
        let l = rng.random_range(1..=16);
        let n = rng.random_range(2..=64);
        let m = rng.random_range(2..=64);
        let a = random_set(&mut rng, n, l);
        let y = random_set(&mut rng, n, l);
        let b = random_set(&mut rng, m, l);
        assert!((d_nn_cross(&a, &b).unwrap() - brute_cross(&a, &b, false)).abs() < 1e-9);
        assert!((d_nn_same(&a).unwrap() - brute_cross(&a, &a, true)).abs() < 1e-9);
        let pw: f64 = a
            .iter()
            .zip(&y)
            .map(|(p, q)| p.iter().zip(q).map(|(x, z)| (x - z).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / (n as f64 * (l as f64).sqrt());
        assert!((d_pairwise_conv(&a, &y).unwrap() - pw).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn style_distance_is_symmetric(seed in any::<u64>(), n in 1usize..10, m in 1usize..10, l in 1usize..8) {
        let mut rng = crate::rng::rng(seed);
        let a = random_set(&mut rng, n, l);
        let b = random_set(&mut rng, m, l);
        prop_assert_eq!(d_style(&a, &b).unwrap(), d_style(&b, &a).unwrap());
    }

    #[test]
    fn subset_has_zero_cross_distance(seed in any::<u64>(), n in 1usize..10, extra in 0usize..10, l in 1usize..8) {
        let mut rng = crate::rng::rng(seed);
        let a = random_set(&mut rng, n, l);
        let mut b = random_set(&mut rng, extra, l);
        b.extend(a.iter().cloned());
        prop_assert_eq!(d_nn_cross(&a, &b).unwrap(), 0.0);
        prop_assert_eq!(d_nn_cross(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn distances_are_positively_homogeneous(seed in any::<u64>(), c in 0.01f64..50.0, n in 2usize..12, l in 1usize..8) {
        let mut rng = crate::rng::rng(seed);
        let batch = BatchLatents {
            z_s2s: random_set(&mut rng, n, l),
            z_ae_y: random_set(&mut rng, n, l),
            z_ae_s: random_set(&mut rng, n + 1, l),
        };
        let scale = |s: &[Vec<f64>]| s.iter().map(|r| r.iter().map(|x| c * x).collect()).collect::<Vec<Vec<f64>>>();
        let scaled = BatchLatents {
            z_s2s: scale(&batch.z_s2s),
            z_ae_y: scale(&batch.z_ae_y),
            z_ae_s: scale(&batch.z_ae_s),
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        prop_assert!(close(d_pairwise_conv(&scaled.z_s2s, &scaled.z_ae_y).unwrap(), c * d_pairwise_conv(&batch.z_s2s, &batch.z_ae_y).unwrap()));
        prop_assert!(close(d_style(&scaled.z_s2s, &scaled.z_ae_s).unwrap(), c * d_style(&batch.z_s2s, &batch.z_ae_s).unwrap()));
        prop_assert!(close(d_spread_out(&scaled).unwrap(), c * d_spread_out(&batch).unwrap()));
    }

    #[test]
    fn nn_same_is_translation_invariant(seed in any::<u64>(), n in 2usize..12, l in 1usize..8, shift in -5.0f64..5.0) {
        let mut rng = crate::rng::rng(seed);
        let a = random_set(&mut rng, n, l);
        let moved: Vec<Vec<f64>> = a.iter().map(|r| r.iter().enumerate().map(|(k, x)| x + shift * (k as f64 + 1.0)).collect()).collect();
        prop_assert!((d_nn_same(&a).unwrap() - d_nn_same(&moved).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn interpolation_boundaries() {
    let za = v(&[0.0, 0.0]);
    let zb = v(&[2.0, 4.0]);
    assert_eq!(Perturbation::exact(0.0, 2).apply(&za, &zb), za);
    assert_eq!(Perturbation::exact(1.0, 2).apply(&za, &zb), zb);
    assert_eq!(Perturbation::exact(0.5, 2).apply(&za, &zb), v(&[1.0, 2.0]));
    let tiny = NoiseSpec::new(1e-12).unwrap();
    let mid = interpolate(&za, &zb, 0.5, tiny, 3).unwrap();
    assert!((mid[0] - 1.0).abs() < 1e-9 && (mid[1] - 2.0).abs() < 1e-9);
    let noisy = NoiseSpec::default();
    assert_eq!(
        interpolate(&za, &zb, 0.3, noisy, 8).unwrap(),
        interpolate(&za, &zb, 0.3, noisy, 8).unwrap()
    );
    assert_ne!(
        interpolate(&za, &zb, 0.3, noisy, 8).unwrap(),
        interpolate(&za, &zb, 0.3, noisy, 9).unwrap()
    );
}

fn fusion_graph_value(batch: &BatchLatents, which: usize) -> (f64, Vec<Vec<f64>>) {
    let store = crate::tensor::ParamStore::new();
    let mut g = Graph::new(&store);
    let s2s: Vec<Var> = batch.z_s2s.iter().map(|z| g.input(z.clone())).collect();
    let y: Vec<Var> = batch.z_ae_y.iter().map(|z| g.input(z.clone())).collect();
    let s: Vec<Var> = batch.z_ae_s.iter().map(|z| g.input(z.clone())).collect();
    let comps = vec![
        d_nn_same_graph(&mut g, &y),
        d_nn_same_graph(&mut g, &s),
        d_nn_same_graph(&mut g, &s2s),
    ];
    let spread = g.min(comps);
    let d = if which == 0 {
        d_pairwise_conv_graph(&mut g, &s2s, &y)
    } else {
        d_style_graph(&mut g, &s2s, &s)
    };
    let root = g.sub(d, spread);
    let bw = g.backward(root);
    let grads = s2s
        .iter()
        .chain(&y)
        .chain(&s)
        .map(|&var| {
            bw.wrt(var)
                .map(|x| x.to_vec())
                .unwrap_or_else(|| vec![0.0; g.value(var).len()])
        })
        .collect();
    (g.scalar(root), grads)
}

#[test]
fn fusion_gradients_match_finite_differences() {
    let mut rng = crate::rng::rng(4);
    let l = 5;
    let batch = BatchLatents {
        z_s2s: random_set(&mut rng, 4, l),
        z_ae_y: random_set(&mut rng, 4, l),
        z_ae_s: random_set(&mut rng, 3, l),
    };
    for which in 0..2 {
        let (value, grads) = fusion_graph_value(&batch, which);
        let pure = fusion_losses(&batch).unwrap();
        assert!((value - if which == 0 { pure.0 } else { pure.1 }).abs() < 1e-12);
        let h = 1e-6;
        let mut k = 0;
        for set in 0..3 {
            let len = [4, 4, 3][set];
            for i in 0..len {
                for d in 0..l {
                    let bump = |delta: f64| {
                        let mut b = batch.clone();
                        let target = match set {
                            0 => &mut b.z_s2s,
                            1 => &mut b.z_ae_y,
                            _ => &mut b.z_ae_s,
                        };
                        target[i][d] += delta;
                        let f = fusion_losses(&b).unwrap();
                        if which == 0 {
                            f.0
                        } else {
                            f.1
                        }
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    let an = grads[k][d];
                    let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-8);
                    assert!(
                        rel < 1e-4 || (fd - an).abs() < 1e-9,
                        "set {set} row {i} dim {d}: {fd} vs {an}"
                    );
                }
                k += 1;
            }
        }
    }
}

pub(crate) fn tiny_model(l: usize, seed: u64) -> ModelParams {
    ModelParams::new(
        ModelConfig {
            vocab_size: 10,
            latent_dim: l,
            embed_dim: 4,
            layers: 2,
            cell: CellType::Gru,
        },
        seed,
    )
    .unwrap()
}

pub(crate) fn random_pairs(rng: &mut crate::rng::Rng, n: usize) -> Vec<ConversationPair> {
    (0..n)
        .map(|_| {
            let utts = rng.random_range(1..=2);
            let context = (0..utts)
                .map(|_| (0..rng.random_range(1..=3)).map(|_| rng.random_range(5..10)).collect())
                .collect();
            let response = (0..rng.random_range(1..=3)).map(|_| rng.random_range(5..10)).collect();
            ConversationPair::new(context, response).unwrap()
        })
        .collect()
}

pub(crate) fn random_style(rng: &mut crate::rng::Rng, m: usize) -> StyleBatch {
    StyleBatch::clean(
        (0..m)
            .map(|_| (0..rng.random_range(1..=4)).map(|_| rng.random_range(3..10)).collect())
            .collect(),
    )
}

#[test]
fn smoothness_terms() {
    let model = tiny_model(6, 1);
    let mut rng = crate::rng::rng(2);
    let pair = &random_pairs(&mut rng, 1)[0];
    let exact0 = Perturbation::exact(0.0, 6);
    // u = 0, no noise: plain reconstruction of y
    let zy = model.encode_sentence(&pair.response).unwrap();
    let recon = -model.decode_logprob(&zy.values, &pair.response).unwrap() / (pair.response.len() + 1) as f64;
    assert!((loss_smooth_conv(&model, pair, &exact0).unwrap() - recon).abs() < 1e-12);

    // recomposition with a drawn perturbation
    let p = Perturbation::draw(6, NoiseSpec::default(), &mut rng);
    let zx = model.encode_context(&pair.context).unwrap();
    let z = p.apply(&zy.values, &zx.values);
    let manual = -model.decode_logprob(&z, &pair.response).unwrap() / (pair.response.len() + 1) as f64;
    assert_eq!(loss_smooth_conv(&model, pair, &p).unwrap(), manual);
    assert!(manual >= 0.0);
    assert_eq!(
        loss_smooth_conv(&model, pair, &p).unwrap(),
        loss_smooth_conv(&model, pair, &p).unwrap()
    );

    let x = vec![5, 6, 7];
    let s = vec![8, 9];
    let rec = |t: &[usize], z: &[f64]| -model.decode_logprob(z, t).unwrap() / (t.len() + 1) as f64;
    let zx = model.encode_sentence(&x).unwrap().values;
    let zs = model.encode_sentence(&s).unwrap().values;
    assert!((loss_smooth_style(&model, &x, &s, &exact0).unwrap() - rec(&x, &zx)).abs() < 1e-12);
    let exact1 = Perturbation::exact(1.0, 6);
    assert!((loss_smooth_style(&model, &x, &s, &exact1).unwrap() - rec(&s, &zs)).abs() < 1e-12);
    let half = Perturbation::exact(0.5, 6);
    let zm = half.apply(&zx, &zs);
    let mean = 0.5 * (rec(&x, &zm) + rec(&s, &zm));
    assert!((loss_smooth_style(&model, &x, &s, &half).unwrap() - mean).abs() < 1e-12);
    assert!(matches!(
        loss_smooth_style(&model, &[], &s, &half),
        Err(Error::Input(_))
    ));
}

#[test]
fn total_loss_bookkeeping() {
    let model = tiny_model(6, 3);
    let mut rng = crate::rng::rng(5);
    let pairs = random_pairs(&mut rng, 4);
    let style = random_style(&mut rng, 3);
    let pert = Perturbations::draw(4, 3, 6, NoiseSpec::default(), 11);

    let pre = total_loss(&model, &pairs, None, &pert, LossTerms::FULL, LossOptions::default());
    assert!(pre.is_err(), "style terms need a style batch");
    let pre = total_loss(
        &model,
        &pairs,
        None,
        &pert,
        LossTerms::CONV_ONLY,
        LossOptions::default(),
    )
    .unwrap();
    assert_eq!(pre.l_fuse_style, 0.0);
    assert_eq!(pre.l_smooth_style, 0.0);
    assert_eq!(pre.total, pre.nll + pre.l_fuse_conv + pre.l_smooth_conv);

    let full = total_loss(
        &model,
        &pairs,
        Some(&style),
        &pert,
        LossTerms::FULL,
        LossOptions::default(),
    )
    .unwrap();
    assert!(full.l_fuse_style != 0.0 && full.l_smooth_style > 0.0);
    assert_eq!(
        full.total,
        full.nll + full.l_fuse_conv + full.l_smooth_conv + full.l_fuse_style + full.l_smooth_style
    );

    // independent recomputation from the plain-value functions
    let styles: Vec<Vec<usize>> = style.inputs.clone();
    let latents = BatchLatents::from_model(&model, &pairs, &styles).unwrap();
    let (fc, fs) = fusion_losses(&latents).unwrap();
    assert!((full.l_fuse_conv - fc).abs() < 1e-12);
    assert!((full.l_fuse_style - fs).abs() < 1e-12);
    assert!((full.d_spread_out - d_spread_out(&latents).unwrap()).abs() < 1e-12);
    let nll: f64 = pairs
        .iter()
        .map(|p| {
            let z = model.encode_context(&p.context).unwrap();
            -model.decode_logprob(&z.values, &p.response).unwrap() / (p.response.len() + 1) as f64
        })
        .sum::<f64>()
        / 4.0;
    assert!((full.nll - nll).abs() < 1e-12);
    let sc: f64 = pairs
        .iter()
        .zip(&pert.conv)
        .map(|(p, q)| loss_smooth_conv(&model, p, q).unwrap())
        .sum::<f64>()
        / 4.0;
    assert!((full.l_smooth_conv - sc).abs() < 1e-12);
    let ss: f64 = (0..3)
        .map(|j| loss_smooth_style(&model, pairs[j % 4].last_utterance(), &style.targets[j], &pert.style[j]).unwrap())
        .sum::<f64>()
        / 3.0;
    assert!((full.l_smooth_style - ss).abs() < 1e-12);

    // conv-only with a style batch present equals the full loss with the style terms dropped
    let conv_only = total_loss(
        &model,
        &pairs,
        Some(&style),
        &pert,
        LossTerms::CONV_ONLY,
        LossOptions::default(),
    )
    .unwrap();
    let mut zeroed = full.clone();
    zeroed.d_style = 0.0;
    zeroed.l_fuse_style = 0.0;
    zeroed.l_smooth_style = 0.0;
    zeroed.total = zeroed.nll + zeroed.l_fuse_conv + zeroed.l_smooth_conv + 0.0 + 0.0;
    assert_eq!(conv_only, zeroed);
}

#[test]
fn batch_preconditions() {
    let model = tiny_model(4, 3);
    let mut rng = crate::rng::rng(5);
    let pairs = random_pairs(&mut rng, 4);
    let pert = Perturbations::draw(4, 1, 4, NoiseSpec::default(), 1);
    let single = random_style(&mut rng, 1);
    assert!(matches!(
        total_loss(
            &model,
            &pairs,
            Some(&single),
            &pert,
            LossTerms::FULL,
            LossOptions::default()
        ),
        Err(Error::Input(_))
    ));
    assert!(matches!(
        total_loss(
            &model,
            &pairs[..1],
            None,
            &pert,
            LossTerms::CONV_ONLY,
            LossOptions::default()
        ),
        Err(Error::Input(_))
    ));
}

#[test]
fn spread_cap_limits_the_term() {
    let model = tiny_model(4, 3);
    let mut rng = crate::rng::rng(5);
    let pairs = random_pairs(&mut rng, 4);
    let pert = Perturbations::draw(4, 0, 4, NoiseSpec::default(), 1);
    let opts = LossOptions { spread_cap: Some(1e-6) };
    let b = total_loss(&model, &pairs, None, &pert, LossTerms::CONV_ONLY, opts).unwrap();
    assert_eq!(b.d_spread_out, 1e-6);
}

/// Central differences over every parameter of a small model.
pub(crate) fn assert_grads_match<F>(model: &ModelParams, grads: &Grads, mut f: F)
where
    F: FnMut(&ModelParams) -> f64,
{
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for id in model.store.ids() {
        for k in 0..model.store.get(id).data.len() {
            let orig = probe.store.get(id).data[k];
            probe.store.get_mut(id).data[k] = orig + h;
            let up = f(&probe);
            probe.store.get_mut(id).data[k] = orig - h;
            let down = f(&probe);
            probe.store.get_mut(id).data[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.get(id).data[k];
            let err = (fd - an).abs();
            if err > 1e-8 {
                let rel = err / (fd.abs() + an.abs());
                worst = worst.max(rel);
                assert!(rel < 1e-4, "{}[{k}]: fd {fd} vs analytic {an}", model.store.name(id));
            }
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn total_loss_gradient_matches_finite_differences() {
    let model = tiny_model(8, 21);
    let mut rng = crate::rng::rng(22);
    let pairs = random_pairs(&mut rng, 4);
    let style = random_style(&mut rng, 4);
    let pert = Perturbations::draw(4, 4, 8, NoiseSpec::default(), 23);
    let (b, grads) = loss_and_grads(
        &model,
        &pairs,
        Some(&style),
        &pert,
        LossTerms::FULL,
        LossOptions::default(),
    )
    .unwrap();
    assert!(b.is_finite());
    assert_grads_match(&model, &grads, |m| {
        total_loss(m, &pairs, Some(&style), &pert, LossTerms::FULL, LossOptions::default())
            .unwrap()
            .total
    });
}

#[test]
fn decode_logprob_gradient_wrt_latent() {
    let model = tiny_model(12, 8);
    let mut rng = crate::rng::rng(9);
    let z0: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = vec![5, 7, 9, 6];
    let mut g = Graph::new(&model.store);
    let z = g.input(z0.clone());
    let nll = model.decode_nll_graph(&mut g, z, &t);
    let bw = g.backward(nll);
    let grad = bw.wrt(z).unwrap();
    let h = 1e-6;
    for k in 0..12 {
        let mut up = z0.clone();
        up[k] += h;
        let mut down = z0.clone();
        down[k] -= h;
        let fd = -(model.decode_logprob(&up, &t).unwrap() - model.decode_logprob(&down, &t).unwrap()) / (2.0 * h);
        let rel = (fd - grad[k]).abs() / (fd.abs() + grad[k].abs()).max(1e-10);
        assert!(rel < 1e-4, "dim {k}: {fd} vs {}", grad[k]);
    }
}

#[test]
fn reconstruction_and_lm_gradients() {
    let model = tiny_model(5, 30);
    let mut rng = crate::rng::rng(31);
    let style = random_style(&mut rng, 3);
    let (_, grads) = reconstruction_loss_and_grads(&model, &style).unwrap();
    assert_grads_match(&model, &grads, |m| reconstruction_loss_and_grads(m, &style).unwrap().0);
    let (_, grads) = lm_loss_and_grads(&model, &style.targets).unwrap();
    assert_grads_match(&model, &grads, |m| lm_loss_and_grads(m, &style.targets).unwrap().0);
}

#[test]
fn shared_decoder_couples_the_branches() {
    let mut model = tiny_model(6, 40);
    let z = model.encode_context(&[vec![5, 6]]).unwrap();
    let before = model.step_log_probs(&z.values, &[7]).unwrap();
    // nudge the decoder through the reconstruction gradient
    let style = StyleBatch::clean(vec![vec![8, 8, 9]]);
    let (_, grads) = reconstruction_loss_and_grads(&model, &style).unwrap();
    for id in model.decoder_param_ids() {
        let g = grads.get(id).data.clone();
        for (w, d) in model.store.get_mut(id).data.iter_mut().zip(g) {
            *w -= 0.5 * d;
        }
    }
    let after = model.step_log_probs(&z.values, &[7]).unwrap();
    assert_ne!(before, after);
}
