mod common;

use std::fs;
use std::path::Path;

use vexp_core::bpe::Vocabulary;
use vexp_core::corpus::LangClass;
use vexp_core::desk::{synthetic_corpus, to_jsonl, DeskCorpusSpec};
use vexp_core::pipeline::{self, read_run, report, CorpusPaths, RunConfig};
use vexp_core::schedule::{exponential_schedule, MixtureParams, Strategy};
use vexp_core::Error;

fn desk_config(dir: &Path, arabic_words: usize) -> RunConfig {
    let docs = synthetic_corpus(DeskCorpusSpec {
        seed: 3,
        arabic_words,
        english_words: arabic_words / 2,
        math_code_words: arabic_words / 10,
        doc_words: 40,
    });
    let mut paths = CorpusPaths::default();
    for (class, list) in [
        (LangClass::Arabic, &mut paths.ar),
        (LangClass::English, &mut paths.en),
        (LangClass::MathCode, &mut paths.mc),
    ] {
        let p = dir.join(format!("{}.jsonl", class.code()));
        fs::write(&p, to_jsonl(docs.iter().filter(|d| d.lang == class))).unwrap();
        list.push(p);
    }
    let mut cfg = RunConfig {
        out_dir: dir.join("out"),
        seed: 5,
        corpus: paths,
        per_stage_tokens: 6_000,
        ..Default::default()
    };
    cfg.expansion.budget = 8;
    cfg.expansion.stages = 4;
    cfg
}

#[test]
fn default_config_with_desk_corpus_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk_config(dir.path(), 200);
    cfg.expansion = Default::default();
    cfg.per_stage_tokens = RunConfig::default().per_stage_tokens;
    cfg.validate().unwrap();
    assert_eq!((cfg.expansion.stages, cfg.expansion.budget), (16, 12_800));
    assert_eq!(
        cfg.mixture,
        MixtureParams {
            start_pct: 30.0,
            end_pct: 90.0,
            constant_pct: 5.0
        }
    );

    cfg.expansion.stages = 1;
    let Err(Error::Validation(errs)) = cfg.validate() else {
        panic!("stages = 1 accepted")
    };
    assert!(errs.iter().any(|e| e.contains("stages >= 2")));
}

#[test]
fn stages_follow_the_schedule_and_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path(), 3_000);
    let out = pipeline::run(&cfg).unwrap();

    let expected = exponential_schedule(8, 4).unwrap().cumulative_targets;
    assert_eq!(expected, [0, 1, 2, 8]);
    let got: Vec<u64> = out.artifacts.iter().map(|a| a.cumulative_new).collect();
    assert_eq!(got, expected);

    let mut prev = Vocabulary::load(&cfg.out_dir.join("base/vocab.json")).unwrap();
    for a in &out.artifacts {
        let v = Vocabulary::load(&cfg.out_dir.join(&a.vocab_path)).unwrap();
        assert!(prev.is_prefix_of(&v), "stage {} breaks the chain", a.stage);
        assert!(v.tokens()[prev.len()..]
            .iter()
            .all(|t| t.stage == a.stage as u32));
        let plan = fs::read_to_string(cfg.out_dir.join(&a.plan_path)).unwrap();
        assert_eq!(plan.lines().count(), v.len() - prev.len());
        prev = v;
    }
    assert_eq!(out.final_vocab, prev);
    for name in [
        "run.json",
        "schedule.csv",
        "stage_report.csv",
        "summary.json",
    ] {
        assert!(cfg.out_dir.join(name).is_file(), "{name} missing");
    }
}

#[test]
fn stage_slices_respect_the_token_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path(), 3_000);
    let out = pipeline::run(&cfg).unwrap();
    // Largest document under the base vocabulary bounds the overshoot.
    let base = Vocabulary::load(&cfg.out_dir.join("base/vocab.json")).unwrap();
    let mut largest = 0;
    for p in cfg
        .corpus
        .ar
        .iter()
        .chain(&cfg.corpus.en)
        .chain(&cfg.corpus.mc)
    {
        for d in vexp_core::corpus::read_documents(p).unwrap() {
            largest =
                largest.max(base.tokenize(&vexp_core::corpus::normalize(&d.text)).len() as u64);
        }
    }
    for a in &out.artifacts {
        assert!(!a.corpus_short);
        for (t, c) in [
            (a.token_targets.ar, a.tokens_consumed.ar),
            (a.token_targets.en, a.tokens_consumed.en),
            (a.token_targets.mc, a.tokens_consumed.mc),
        ] {
            assert!(c >= t && c - t < largest.max(1), "target {t}, consumed {c}");
        }
        let pct = a.mixture.arabic_pct.hundredths() as u64;
        assert_eq!(a.token_targets.ar, (a.token_budget * pct + 5_000) / 10_000);
    }
}

#[test]
fn rerun_is_byte_identical_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path(), 3_000);
    pipeline::run(&cfg).unwrap();
    let first = common::snapshot(&cfg.out_dir);
    let stamp = |p: &str| {
        fs::metadata(cfg.out_dir.join(p))
            .unwrap()
            .modified()
            .unwrap()
    };
    let before = stamp("stage_01/vocab.json");

    pipeline::run(&cfg).unwrap();
    assert_eq!(common::snapshot(&cfg.out_dir), first);
    assert_eq!(
        stamp("stage_01/vocab.json"),
        before,
        "up-to-date stage was rewritten"
    );

    fs::remove_dir_all(cfg.out_dir.join("stage_03")).unwrap();
    fs::write(cfg.out_dir.join("stage_04/stage.json"), "{}").unwrap();
    pipeline::run(&cfg).unwrap();
    assert_eq!(common::snapshot(&cfg.out_dir), first);

    let mut threaded = cfg.clone();
    threaded.out_dir = dir.path().join("threaded");
    threaded.threads = Some(4);
    pipeline::run(&threaded).unwrap();
    assert_eq!(common::snapshot(&threaded.out_dir), first);
}

#[test]
fn changed_inputs_invalidate_stages() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk_config(dir.path(), 3_000);
    let a = pipeline::run(&cfg).unwrap();
    cfg.seed += 1;
    let b = pipeline::run(&cfg).unwrap();
    assert_ne!(a.manifest.input_digest, b.manifest.input_digest);
    assert_ne!(a.artifacts[0].input_digest, b.artifacts[0].input_digest);
}

#[test]
fn comparison_mode_writes_both_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk_config(dir.path(), 3_000);
    cfg.expansion.budget = 40;
    let (u, e) = pipeline::run_comparison(&cfg).unwrap();
    assert_eq!(u.manifest.strategy, Strategy::Uniform);
    assert_eq!(e.manifest.strategy, Strategy::Exponential);
    let csv = fs::read_to_string(cfg.out_dir.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(cfg.out_dir.join("uniform/stage_report.csv").is_file());
    assert!(cfg.out_dir.join("exponential/stage_report.csv").is_file());
}

#[test]
fn report_summarizes_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path(), 3_000);
    pipeline::run(&cfg).unwrap();
    let (manifest, artifacts) = read_run(&cfg.out_dir).unwrap();

    let one = report(&artifacts[..1], &manifest.base_report).unwrap();
    assert_eq!(one.rows.len(), 1);
    let full = report(&artifacts, &manifest.base_report).unwrap();
    let last = &artifacts.last().unwrap().tokenizer_report;
    assert_eq!(full.base_tokens, manifest.base_report.total_tokens);
    assert_eq!(full.final_tokens, last.total_tokens);
    assert_eq!(
        full.sequence_length_reduction,
        manifest.base_report.total_tokens as f64 / last.total_tokens as f64
    );

    let err = report(&[], &manifest.base_report).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn mislabelled_documents_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk_config(dir.path(), 500);
    cfg.corpus.ar.push(cfg.corpus.en[0].clone());
    assert_eq!(pipeline::run(&cfg).unwrap_err().exit_code(), 2);
}
