use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use fusedstyle_bench::{batch, latent_set, model, sentence};
use fusedstyle_core::inference::{generate_candidates, SampleSpec};
use fusedstyle_core::metrics::{bleu_multi_ref, distinct_n, mds_project};
use fusedstyle_core::model::NoiseSpec;
use fusedstyle_core::objectives::{
    d_spread_out, d_style, loss_and_grads, BatchLatents, LossOptions, LossTerms, Perturbations,
};
use fusedstyle_core::style::StyleProbability;

struct Flat;
impl StyleProbability for Flat {
    fn p_style(&self, _: &[usize]) -> f64 {
        0.5
    }
}

fn distances(c: &mut Criterion) {
    let mut g = c.benchmark_group("distances");
    for n in [32, 128, 512] {
        let a = latent_set(n, 64, 1);
        let b = latent_set(n, 64, 2);
        let batch = BatchLatents {
            z_s2s: a.clone(),
            z_ae_y: b.clone(),
            z_ae_s: latent_set(n, 64, 3),
        };
        g.bench_with_input(BenchmarkId::new("d_style", n), &n, |bch, _| {
            bch.iter(|| d_style(black_box(&a), black_box(&b)))
        });
        g.bench_with_input(BenchmarkId::new("d_spread_out", n), &n, |bch, _| {
            bch.iter(|| d_spread_out(black_box(&batch)))
        });
    }
    g.finish();
}

fn model_passes(c: &mut Criterion) {
    let vocab = 2000;
    let m = model(vocab, 64);
    let ctx = vec![sentence(12, vocab, 1), sentence(10, vocab, 2)];
    let z = m.encode_context(&ctx).unwrap();
    c.bench_function("encode_context", |b| b.iter(|| m.encode_context(black_box(&ctx))));
    c.bench_function("decode_greedy_30", |b| {
        b.iter(|| m.decode_greedy(black_box(&z.values), 30))
    });

    let (pairs, style) = batch(8, vocab, 5);
    let pert = Perturbations::draw(8, 8, 64, NoiseSpec::default(), 6);
    c.bench_function("loss_and_grads_batch8", |b| {
        b.iter(|| {
            loss_and_grads(
                &m,
                black_box(&pairs),
                Some(&style),
                &pert,
                LossTerms::FULL,
                LossOptions::default(),
            )
        })
    });

    let spec = SampleSpec {
        rho: 1.0,
        n_candidates: 20,
        ..SampleSpec::default()
    };
    c.bench_function("generate_20_candidates", |b| {
        b.iter(|| generate_candidates(&m, &Flat, black_box(&ctx), &spec))
    });
}

fn metrics(c: &mut Criterion) {
    let hyp = sentence(20, 500, 1);
    let refs: Vec<Vec<usize>> = (0..8).map(|i| sentence(20, 500, 10 + i)).collect();
    c.bench_function("bleu4_8_refs", |b| {
        b.iter(|| bleu_multi_ref(black_box(&hyp), black_box(&refs), 4))
    });
    let corpus: Vec<Vec<usize>> = (0..1000).map(|i| sentence(15, 500, i)).collect();
    c.bench_function("distinct2_1000", |b| b.iter(|| distinct_n(black_box(&corpus), 2)));
    let points = latent_set(300, 32, 9);
    c.bench_function("mds_300", |b| b.iter(|| mds_project(black_box(&points), 2)));
}

criterion_group!(benches, distances, model_passes, metrics);
criterion_main!(benches);
