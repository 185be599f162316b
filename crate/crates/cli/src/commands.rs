use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use fusedstyle_core::baselines::{evaluate_system, train_variant, System, Variant, VariantSpec};
use fusedstyle_core::corpus::{
    build_stylized_test_set, load_conversations, load_style, read_conversations, read_style, synth_corpus,
    write_conversations, write_style, MaskConfig, StylizedTestSet, SynthSpec, Vocabulary,
};
use fusedstyle_core::inference::{SampleMode, SampleSpec};
use fusedstyle_core::metrics::{
    mds_project, sweep_rho, write_mds_csv, write_report_csv, EvalContext, MdsPoint, MetricReport,
};
use fusedstyle_core::model::{ModelConfig, ModelParams};
use fusedstyle_core::nn::CellType;
use fusedstyle_core::rng::{derive_seed, derived_rng};
use fusedstyle_core::style::{
    build_keyword_list, count_metric, train_classifiers, ClassifierConfig, NeuralTrainConfig, NgramTrainConfig,
    StyleKeywordList, StyleScorer,
};
use fusedstyle_core::train::{TrainConfig, TrainData};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::engine::{default_lm_path, Candidate, Engine, EnginePaths, Query};
use crate::error::{CliResult, Failure};
use crate::service::{self, AppState, ServiceOptions};

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn warn_rejected(path: &Path, n: usize) {
    if n > 0 {
        log::warn!("{}: skipped {n} record(s) with an empty utterance", path.display());
    }
}

pub fn synth_data(a: &SynthDataArgs) -> CliResult<()> {
    let base = match &a.grammar {
        Some(p) => serde_json::from_str::<SynthSpec>(&fs::read_to_string(p)?)
            .map_err(|e| Failure::input(format!("grammar {}: {e}", p.display())))?,
        None => SynthSpec::default(),
    };
    if !(0.0..=1.0).contains(&a.stylized_response_rate) {
        return Err(Failure::input("stylized-response-rate must lie in [0, 1]"));
    }
    let spec = SynthSpec {
        n_pairs: a.pairs,
        n_style: a.style,
        responses_per_context: a.responses_per_context,
        stylized_response_rate: a.stylized_response_rate,
        ..base
    };
    let train = synth_corpus(&spec, derive_seed(a.seed, 0))?;
    let test_spec = SynthSpec {
        n_pairs: a.test_contexts * a.test_responses,
        n_style: 0,
        responses_per_context: a.test_responses,
        stylized_response_rate: 1.0,
        ..spec.clone()
    };
    let test = synth_corpus(&test_spec, derive_seed(a.seed, 1))?;
    let vocab = Vocabulary::build(
        train
            .pairs
            .iter()
            .flat_map(|p| p.context.iter().chain(std::iter::once(&p.response)))
            .chain(&train.style)
            .map(Vec::as_slice),
        a.vocab_size,
    );
    fs::create_dir_all(&a.out_dir)?;
    write_conversations(&a.out_dir.join("conv.tsv"), &train.pairs)?;
    write_style(&a.out_dir.join("style.txt"), &train.style)?;
    write_conversations(&a.out_dir.join("test_conv.tsv"), &test.pairs)?;
    vocab.save(&a.out_dir.join("vocab.txt"))?;
    print_json(&json!({
        "pairs": train.pairs.len(),
        "style": train.style.len(),
        "test_pairs": test.pairs.len(),
        "vocab_size": vocab.len(),
    }))
}

fn train_config(o: &OptimArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: o.lr,
        batch_size_conv: o.batch_size_conv,
        batch_size_style: o.batch_size_style,
        pretrain_epochs: o.pretrain_epochs,
        max_joint_epochs: o.max_epochs,
        patience: o.patience,
        sigma: o.sigma,
        seed,
        validation_frac: o.validation_frac,
        clip_norm: (o.clip_norm > 0.0).then_some(o.clip_norm),
        spread_cap: o.spread_cap,
        mask: MaskConfig {
            c_mask: o.mask_c,
            p_cap: o.mask_cap,
        },
    }
}

fn load_or_build_vocab(path: &Path, conv: &Path, style: Option<&Path>, max_size: usize) -> CliResult<Vocabulary> {
    let raw_conv = read_conversations(conv)?.items;
    let raw_style = style.map(read_style).transpose()?.map(|l| l.items).unwrap_or_default();
    let sentences = || {
        raw_conv
            .iter()
            .flat_map(|p| p.context.iter().chain(std::iter::once(&p.response)))
            .chain(&raw_style)
            .map(Vec::as_slice)
    };
    if path.exists() {
        let mut v = Vocabulary::load(path)?;
        v.recount(sentences());
        Ok(v)
    } else {
        let v = Vocabulary::build(sentences(), max_size);
        v.save(path)?;
        log::info!("wrote vocabulary of {} tokens to {}", v.len(), path.display());
        Ok(v)
    }
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let variant: Variant = a.variant.parse()?;
    let vocab = load_or_build_vocab(&a.vocab, &a.conv, a.style.as_deref(), a.vocab_size)?;
    let conv = load_conversations(&a.conv, &vocab)?;
    warn_rejected(&a.conv, conv.rejected);
    let style = match &a.style {
        Some(p) => {
            let s = load_style(p, &vocab)?;
            warn_rejected(p, s.rejected);
            s.items
        }
        None => Vec::new(),
    };
    let needs_style = matches!(
        variant,
        Variant::MTask | Variant::StyleFusion | Variant::S2sLm | Variant::Retrieval
    );
    if needs_style && style.is_empty() {
        return Err(Failure::input(format!("variant {variant} needs --style")));
    }
    let config = ModelConfig {
        vocab_size: vocab.len(),
        latent_dim: a.arch.latent_dim,
        embed_dim: a.arch.embed_dim.unwrap_or(a.arch.latent_dim),
        layers: a.arch.layers,
        cell: CellType::Gru,
    };
    let init = ModelParams::new(config, derive_seed(a.seed, 100))?;
    let spec = VariantSpec {
        variant,
        train: train_config(&a.optim, a.seed),
        lm_weight: a.lm_weight,
    };
    let data = TrainData {
        conv: &conv.items,
        style: &style,
        vocab: &vocab,
    };
    let mut log_file = a.log.as_ref().map(fs::File::create).transpose()?.map(BufWriter::new);
    let trained = train_variant(&spec, init, &data, log_file.as_mut().map(|w| w as &mut dyn Write))?;
    if let Some(mut w) = log_file {
        w.flush()?;
    }
    trained.model.save(&a.out, Some(variant.name()))?;
    let mut lm_path = None;
    if let Some(lm) = &trained.lm {
        let p = a.lm_out.clone().unwrap_or_else(|| default_lm_path(&a.out));
        lm.save(&p, Some("style_lm"))?;
        lm_path = Some(p);
    }
    print_json(&json!({
        "variant": variant.name(),
        "checkpoint": a.out,
        "lm_checkpoint": lm_path,
        "steps": trained.report.steps,
        "validation": trained.report.validation,
        "best_validation": trained.report.best_validation,
    }))
}

pub fn train_classifiers_cmd(a: &TrainClassifiersArgs) -> CliResult<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let raw_conv = read_conversations(&a.conv)?;
    warn_rejected(&a.conv, raw_conv.rejected);
    let raw_style = read_style(&a.style)?;
    warn_rejected(&a.style, raw_style.rejected);
    let positives: Vec<Vec<usize>> = raw_style.items.iter().map(|s| vocab.encode(s)).collect();
    let negatives: Vec<Vec<usize>> = raw_conv.items.iter().map(|p| vocab.encode(&p.response)).collect();
    let cfg = ClassifierConfig {
        seed: a.seed,
        holdout_frac: a.holdout_frac,
        ngram: NgramTrainConfig {
            epochs: a.ngram_epochs,
            ..NgramTrainConfig::default()
        },
        neural: NeuralTrainConfig {
            epochs: a.neural_epochs,
            ..NeuralTrainConfig::default()
        },
        ..ClassifierConfig::default()
    };
    let (scorer, report) = train_classifiers(&positives, &negatives, vocab.len(), &cfg)?;
    scorer.save(&a.out)?;
    let mut n_keywords = None;
    if let Some(p) = &a.keywords_out {
        let responses: Vec<Vec<String>> = raw_conv.items.into_iter().map(|p| p.response).collect();
        let kw = build_keyword_list(&raw_style.items, &responses, a.keyword_threshold, a.keyword_top_k);
        kw.save(p)?;
        n_keywords = Some(kw.len());
    }
    print_json(&json!({"report": report, "keywords": n_keywords}))
}

pub fn build_testset(a: &BuildTestsetArgs) -> CliResult<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let scorer = StyleScorer::load(&a.scorer)?;
    let conv = load_conversations(&a.conv, &vocab)?;
    warn_rejected(&a.conv, conv.rejected);
    let mut ts = build_stylized_test_set(&conv.items, &scorer, a.threshold, a.min_refs);
    if let Some(k) = a.max_contexts {
        ts.entries.truncate(k);
    }
    ts.save(&a.out, &vocab)?;
    print_json(
        &json!({"contexts": ts.len(), "references": ts.entries.iter().map(|e| e.references.len()).sum::<usize>()}),
    )
}

/// Shared inputs of `eval` and `sweep-rho`.
struct Scoring {
    vocab: Vocabulary,
    scorer: StyleScorer,
    test_set: StylizedTestSet,
    keywords: Option<StyleKeywordList>,
    count_reference: Option<f64>,
    style: Vec<Vec<usize>>,
}

fn load_scoring(s: &ScoringArgs) -> CliResult<Scoring> {
    let vocab = Vocabulary::load(&s.vocab)?;
    let scorer = StyleScorer::load(&s.scorer)?;
    let test_set = StylizedTestSet::load(&s.testset, &vocab, s.threshold, s.min_refs)?;
    if test_set.is_empty() {
        return Err(Failure::input(format!("test set {} is empty", s.testset.display())));
    }
    let keywords = s.keywords.as_deref().map(StyleKeywordList::load).transpose()?;
    let raw_style = s
        .style
        .as_deref()
        .map(read_style)
        .transpose()?
        .map(|l| l.items)
        .unwrap_or_default();
    let count_reference = match (&keywords, raw_style.is_empty()) {
        (Some(kw), false) => Some(count_metric(&raw_style, kw)),
        _ => None,
    };
    let style = raw_style.iter().map(|t| vocab.encode(t)).collect();
    Ok(Scoring {
        vocab,
        scorer,
        test_set,
        keywords,
        count_reference,
        style,
    })
}

fn sample_spec(s: &SamplingArgs) -> SampleSpec {
    SampleSpec {
        rho: s.rho,
        sigma: s.sigma,
        mode: SampleMode::Random,
        n_candidates: s.n_candidates,
        lambda: s.lambda,
        max_len: s.max_len,
        seed: s.seed,
    }
}

fn load_model(path: &Path, vocab: &Vocabulary) -> CliResult<(ModelParams, Option<String>)> {
    let (m, v) = ModelParams::load(path)?;
    if m.config.vocab_size != vocab.len() {
        return Err(Failure::input(format!(
            "{} expects a vocabulary of {} tokens, got {}",
            path.display(),
            m.config.vocab_size,
            vocab.len()
        )));
    }
    Ok((m, v))
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    if a.models.is_empty() && a.baselines.is_empty() {
        return Err(Failure::input("nothing to evaluate: pass --model and/or --baseline"));
    }
    let sc = load_scoring(&a.scoring)?;
    let spec = sample_spec(&a.sampling);
    spec.validate()?;
    let mut rows: Vec<(String, MetricReport)> = Vec::new();
    let need_style = |what: &str| -> CliResult<()> {
        if sc.style.is_empty() {
            return Err(Failure::input(format!("{what} needs --style")));
        }
        Ok(())
    };
    for path in &a.models {
        let (model, variant) = load_model(path, &sc.vocab)?;
        let parsed = variant.as_deref().and_then(|v| v.parse::<Variant>().ok());
        let key = match &variant {
            Some(v) => v.clone(),
            None => path
                .file_stem()
                .map_or("model".into(), |s| s.to_string_lossy().into_owned()),
        };
        let lm;
        let system = match parsed {
            Some(Variant::Retrieval) => {
                need_style("retrieval")?;
                System::Retrieval {
                    model: &model,
                    style: &sc.style,
                }
            }
            Some(Variant::S2sLm) => {
                lm = load_model(&default_lm_path(path), &sc.vocab)?.0;
                System::S2sLm {
                    s2s: &model,
                    lm: &lm,
                    weight: a.lm_weight,
                }
            }
            _ => System::Generator(&model),
        };
        log::info!("evaluating {key}");
        let report = evaluate_system(
            &system,
            &sc.test_set,
            &sc.scorer,
            &sc.vocab,
            sc.keywords.as_ref(),
            sc.count_reference,
            &spec,
        )?;
        rows.push((key, report));
    }
    for b in &a.baselines {
        let system = match b.parse::<Variant>()? {
            Variant::Rand => {
                need_style("rand")?;
                System::Rand { style: &sc.style }
            }
            Variant::HumanRef => System::HumanRef,
            other => {
                return Err(Failure::input(format!(
                    "{other} is not a baseline; pass its checkpoint with --model"
                )))
            }
        };
        let report = evaluate_system(
            &system,
            &sc.test_set,
            &sc.scorer,
            &sc.vocab,
            sc.keywords.as_ref(),
            sc.count_reference,
            &spec,
        )?;
        rows.push((b.clone(), report));
    }
    let mut w = output(a.out.as_deref())?;
    write_report_csv(&mut w, "variant", &rows)?;
    w.flush()?;
    Ok(())
}

pub fn sweep(a: &SweepRhoArgs) -> CliResult<()> {
    if a.rhos.is_empty() {
        return Err(Failure::input("--rhos is empty"));
    }
    let sc = load_scoring(&a.scoring)?;
    let (model, _) = load_model(&a.model, &sc.vocab)?;
    let spec = SampleSpec {
        rho: 0.0,
        sigma: a.sigma,
        mode: SampleMode::Random,
        n_candidates: a.n_candidates,
        lambda: a.lambda,
        max_len: a.max_len,
        seed: a.seed,
    };
    for &rho in &a.rhos {
        SampleSpec { rho, ..spec.clone() }.validate()?;
    }
    let ctx = EvalContext {
        model: &model,
        scorer: &sc.scorer,
        vocab: &sc.vocab,
        keywords: sc.keywords.as_ref(),
        count_reference: sc.count_reference,
    };
    let rows = sweep_rho(&sc.test_set, &ctx, &a.rhos, &spec)?;
    let mut w = output(a.out.as_deref())?;
    write_report_csv(&mut w, "rho", &rows)?;
    w.flush()?;
    Ok(())
}

fn pick<T: Clone>(items: &[T], k: usize, seed: u64) -> Vec<T> {
    if items.len() <= k {
        return items.to_vec();
    }
    let mut idx = rand::seq::index::sample(&mut derived_rng(seed, 0), items.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

pub fn mds(a: &MdsArgs) -> CliResult<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let (model, _) = load_model(&a.model, &vocab)?;
    let conv = pick(
        &load_conversations(&a.conv, &vocab)?.items,
        a.per_group,
        derive_seed(a.seed, 0),
    );
    let style = pick(
        &load_style(&a.style, &vocab)?.items,
        a.per_group,
        derive_seed(a.seed, 1),
    );
    let mut vectors = Vec::new();
    let mut groups = Vec::new();
    for p in &conv {
        vectors.push(model.encode_context(&p.context)?.values);
        groups.push("s2s_context");
    }
    for p in &conv {
        vectors.push(model.encode_sentence(&p.response)?.values);
        groups.push("ae_response");
    }
    for s in &style {
        vectors.push(model.encode_sentence(&s.tokens)?.values);
        groups.push("ae_style");
    }
    let coords = mds_project(&vectors, 2)?;
    let points: Vec<MdsPoint> = coords
        .into_iter()
        .zip(groups)
        .map(|(c, g)| MdsPoint {
            x: c[0],
            y: c[1],
            group: g.to_string(),
        })
        .collect();
    let mut w = output(a.out.as_deref())?;
    write_mds_csv(&mut w, &points)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RankedCandidate {
    #[serde(flatten)]
    candidate: Candidate,
    count: usize,
}

#[derive(Serialize)]
struct GenerationRecord {
    context: String,
    candidates: Vec<RankedCandidate>,
    model_id: String,
}

fn engine_paths(model: PathBuf, e: &EngineArgs) -> EnginePaths {
    EnginePaths {
        model,
        scorer: e.scorer.clone(),
        vocab: e.vocab.clone(),
        lm: e.lm.clone(),
        lm_weight: e.lm_weight,
    }
}

pub fn generate(a: &GenerateArgs) -> CliResult<()> {
    let mut contexts = a.contexts.clone();
    if let Some(p) = &a.input {
        contexts.extend(
            fs::read_to_string(p)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(str::to_string),
        );
    }
    if contexts.is_empty() {
        return Err(Failure::input("no contexts: pass --context or --input"));
    }
    sample_spec(&a.sampling).validate()?;
    let engine = Engine::load(&engine_paths(a.model.clone(), &a.engine))?;
    let mut w = output(a.out.as_deref())?;
    for (i, context) in contexts.into_iter().enumerate() {
        let q = Query {
            context,
            rho: a.sampling.rho,
            lambda: a.sampling.lambda,
            direction_sentence: a.towards.clone(),
            n_candidates: a.sampling.n_candidates,
            seed: derive_seed(a.sampling.seed, i as u64),
            sigma: a.sampling.sigma,
            max_len: a.sampling.max_len,
        };
        let candidates = engine
            .generate(&q)?
            .into_iter()
            .map(|(candidate, count)| RankedCandidate { candidate, count })
            .collect();
        let rec = GenerationRecord {
            context: q.context,
            candidates,
            model_id: engine.model_id.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn serve(a: &ServeArgs) -> CliResult<()> {
    let engine = match &a.model {
        Some(m) => {
            let (Some(scorer), Some(vocab)) = (&a.scorer, &a.vocab) else {
                return Err(Failure::input("--model needs --scorer and --vocab"));
            };
            Some(Engine::load(&EnginePaths {
                model: m.clone(),
                scorer: scorer.clone(),
                vocab: vocab.clone(),
                lm: a.lm.clone(),
                lm_weight: a.lm_weight,
            })?)
        }
        None => {
            log::warn!("no --model given; /generate will answer 503");
            None
        }
    };
    let addr: std::net::SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Failure::input(format!("bad address {}:{}: {e}", a.host, a.port)))?;
    let state = AppState::new(
        engine,
        ServiceOptions {
            sigma: a.sigma,
            max_len: a.max_len,
        },
    );
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Internal(e.to_string()))?;
    rt.block_on(service::serve(state, addr))?;
    Ok(())
}
