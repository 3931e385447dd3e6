//! End-to-end staged expansion run.
//!
//! Layout of an output directory:
//!
//! ```text
//! run.json              input digest, schedule, base and final-pass reports
//! schedule.csv          per-stage targets and mixture
//! base/vocab.json
//! stage_NN/vocab.json   vocabulary after stage NN
//! stage_NN/plan.jsonl   embedding-init plan for tokens added in stage NN
//! stage_NN/stage.json   StageArtifact
//! stage_report.csv      compression / new-token ratio per stage
//! summary.json          RunSummary
//! ```
//!
//! All outputs are pure functions of the config (minus `out_dir` and
//! `threads`), the corpus bytes and the seed.

mod config;
mod report;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{BaseSource, CorpusPaths, ExpansionConfig, RunConfig};
pub use report::{read_run, report, write_report, RunSummary, SummaryRow};

use crate::bpe::{extend_vocab, train_from_alphabet, ExtendOptions, Vocabulary};
use crate::corpus::{corpus_stats, read_documents, CorpusStats, Document, LangClass, WordStream};
use crate::embed_init::make_plan;
use crate::error::{Error, Result};
use crate::metrics::{EvalOptions, StageReport, Tally, TokenizerReport};
use crate::schedule::{
    explicit_schedule, mixture_schedule, schedule_csv, stage_plans, ExpansionSchedule, MixtureRow,
    Pct, StagePlan, Strategy,
};

/// Per-class quantities for the three mixture classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTokens {
    pub ar: u64,
    pub en: u64,
    pub mc: u64,
}

impl ClassTokens {
    fn get_mut(&mut self, class: LangClass) -> Option<&mut u64> {
        match class {
            LangClass::Arabic => Some(&mut self.ar),
            LangClass::English => Some(&mut self.en),
            LangClass::MathCode => Some(&mut self.mc),
            LangClass::Other => None,
        }
    }

    pub fn total(&self) -> u64 {
        self.ar + self.en + self.mc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageArtifact {
    pub stage: usize,
    pub input_digest: String,
    /// Paths relative to the run directory.
    pub vocab_path: String,
    pub plan_path: String,
    pub vocab_size: usize,
    pub cumulative_new: u64,
    pub added_tokens: usize,
    /// The stage corpus ran out of eligible pairs before the target.
    pub exhausted: bool,
    pub mixture: MixtureRow,
    pub token_budget: u64,
    pub token_targets: ClassTokens,
    pub tokens_consumed: ClassTokens,
    pub documents: ClassTokens,
    /// A class pool had fewer tokens than its target.
    pub corpus_short: bool,
    pub stage_report: StageReport,
    /// Evaluation on the held-out Arabic slice.
    pub tokenizer_report: TokenizerReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub input_digest: String,
    pub strategy: Strategy,
    pub budget: u64,
    pub base_size: usize,
    pub schedule: Vec<StagePlan>,
    pub corpus: CorpusStats,
    pub heldout_documents: usize,
    /// Held-out Arabic evaluation under the base vocabulary.
    pub base_report: TokenizerReport,
    /// Every document of each class tokenized under the final vocabulary.
    pub final_pass: BTreeMap<LangClass, TokenizerReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub artifacts: Vec<StageArtifact>,
    pub summary: RunSummary,
    pub final_vocab: Vocabulary,
}

struct PreparedDoc {
    lang: LangClass,
    words: WordStream,
    base_tokens: u64,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Digest over everything that determines the outputs.
fn input_digest(cfg: &RunConfig) -> Result<String> {
    #[derive(Serialize)]
    struct View<'a> {
        seed: u64,
        extra_merges: u64,
        expansion: &'a ExpansionConfig,
        mixture: &'a crate::schedule::MixtureParams,
        per_stage_tokens: u64,
        alpha: f64,
        size_unit: crate::metrics::SizeUnit,
        entropy_support: crate::metrics::EntropySupport,
        heldout_fraction: f64,
        restrict_script: bool,
        decompose_basis: crate::embed_init::DecomposeBasis,
    }
    let view = serde_json::to_vec(&View {
        seed: cfg.seed,
        extra_merges: cfg.base.extra_merges,
        expansion: &cfg.expansion,
        mixture: &cfg.mixture,
        per_stage_tokens: cfg.per_stage_tokens,
        alpha: cfg.alpha,
        size_unit: cfg.size_unit,
        entropy_support: cfg.entropy_support,
        heldout_fraction: cfg.heldout_fraction,
        restrict_script: cfg.restrict_script,
        decompose_basis: cfg.decompose_basis,
    })
    .expect("config view serializes");
    let mut parts: Vec<Vec<u8>> = vec![view];
    for (class, paths) in cfg.corpus.by_class() {
        for p in paths {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            parts.push(format!("{class}:{}", sha256_hex(&[&bytes])).into_bytes());
        }
    }
    if let Some(v) = &cfg.base.vocab {
        let bytes = fs::read(v).map_err(|e| Error::io(v, e))?;
        parts.push(sha256_hex(&[&bytes]).into_bytes());
    }
    let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
    Ok(sha256_hex(&refs))
}

fn stage_rng(seed: u64, stage: usize, class: LangClass) -> ChaCha8Rng {
    let class_idx = LangClass::ALL
        .iter()
        .position(|&c| c == class)
        .expect("known class") as u64;
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((stage as u64) << 8 | class_idx),
    )
}

fn load_corpus(cfg: &RunConfig) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (class, paths) in cfg.corpus.by_class() {
        for path in paths {
            let file_docs = read_documents(path)?;
            if let Some(d) = file_docs.iter().find(|d| d.lang != class) {
                return Err(Error::data(format!(
                    "{}: document {:?} has lang {:?} but the file is listed under {class}",
                    path.display(),
                    d.id,
                    d.lang.code()
                )));
            }
            docs.extend(file_docs);
        }
    }
    Ok(docs)
}

fn concat<'a>(docs: impl IntoIterator<Item = &'a PreparedDoc>) -> WordStream {
    let mut out = WordStream::default();
    for d in docs {
        out.words.extend(d.words.words.iter().cloned());
    }
    out
}

fn class_target(budget: u64, pct: Pct) -> u64 {
    ((2 * budget as u128 * pct.hundredths() as u128 + 10_000) / 20_000) as u64
}

struct StageSlice {
    docs: Vec<usize>,
    targets: ClassTokens,
    consumed: ClassTokens,
    documents: ClassTokens,
    short: bool,
}

/// Samples whole documents per class, in a seeded shuffle order, until the
/// class's share of the stage budget is met.
fn compose_slice(
    plan: &StagePlan,
    pools: &BTreeMap<LangClass, Vec<usize>>,
    docs: &[PreparedDoc],
    seed: u64,
) -> StageSlice {
    let mut slice = StageSlice {
        docs: Vec::new(),
        targets: ClassTokens::default(),
        consumed: ClassTokens::default(),
        documents: ClassTokens::default(),
        short: false,
    };
    let shares = [
        (LangClass::Arabic, plan.mixture.arabic_pct),
        (LangClass::English, plan.mixture.english_pct),
        (LangClass::MathCode, plan.mixture.math_code_pct),
    ];
    for (class, pct) in shares {
        let target = class_target(plan.token_budget, pct);
        *slice.targets.get_mut(class).expect("mixture class") = target;
        let mut order = pools.get(&class).cloned().unwrap_or_default();
        order.shuffle(&mut stage_rng(seed, plan.stage, class));
        let mut consumed = 0;
        let mut count = 0;
        for idx in order {
            if consumed >= target {
                break;
            }
            consumed += docs[idx].base_tokens;
            count += 1;
            slice.docs.push(idx);
        }
        if consumed < target {
            warn!(
                "stage {}: {class} pool exhausted at {consumed} of {target} tokens",
                plan.stage
            );
            slice.short = true;
        }
        *slice.consumed.get_mut(class).expect("mixture class") = consumed;
        *slice.documents.get_mut(class).expect("mixture class") = count;
    }
    slice
}

fn try_resume(
    out_dir: &Path,
    stage_dir: &Path,
    digest: &str,
    prev: &Vocabulary,
) -> Option<(StageArtifact, Vocabulary)> {
    let text = fs::read_to_string(stage_dir.join("stage.json")).ok()?;
    let art: StageArtifact = serde_json::from_str(&text).ok()?;
    if art.input_digest != digest || !out_dir.join(&art.plan_path).is_file() {
        return None;
    }
    let vocab = Vocabulary::load(&out_dir.join(&art.vocab_path)).ok()?;
    prev.is_prefix_of(&vocab).then_some((art, vocab))
}

fn build_pool(threads: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    threads
        .map(|n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))
        })
        .transpose()
}

/// Validates the config and executes every stage.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    match build_pool(cfg.threads)? {
        Some(pool) => pool.install(|| run_validated(cfg)),
        None => run_validated(cfg),
    }
}

fn run_validated(cfg: &RunConfig) -> Result<RunOutput> {
    let out = &cfg.out_dir;
    let digest = input_digest(cfg)?;
    let raw_docs = load_corpus(cfg)?;
    let stats = corpus_stats(&raw_docs);
    let mut docs: Vec<PreparedDoc> = raw_docs
        .par_iter()
        .map(|d| PreparedDoc {
            lang: d.lang,
            words: crate::corpus::words_of(&d.text),
            base_tokens: 0,
        })
        .collect();
    drop(raw_docs);

    // Held-out Arabic evaluation slice.
    let mut arabic: Vec<usize> = (0..docs.len())
        .filter(|&i| docs[i].lang == LangClass::Arabic)
        .collect();
    if arabic.is_empty() {
        return Err(Error::data("the corpus has no Arabic documents"));
    }
    arabic.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut n_heldout = (cfg.heldout_fraction * arabic.len() as f64).round() as usize;
    if cfg.heldout_fraction > 0.0 && arabic.len() >= 2 {
        n_heldout = n_heldout.clamp(1, arabic.len() - 1);
    } else {
        n_heldout = 0;
    }
    let mut heldout: Vec<usize> = arabic[..n_heldout].to_vec();
    heldout.sort_unstable();
    let mut pools: BTreeMap<LangClass, Vec<usize>> = BTreeMap::new();
    let heldout_set: std::collections::HashSet<usize> = heldout.iter().copied().collect();
    for (i, d) in docs.iter().enumerate() {
        if !heldout_set.contains(&i) {
            pools.entry(d.lang).or_default().push(i);
        }
    }
    let eval_docs: &[usize] = if heldout.is_empty() {
        &pools[&LangClass::Arabic]
    } else {
        &heldout
    };
    let eval = concat(eval_docs.iter().map(|&i| &docs[i]));

    // Base vocabulary.
    let base = match &cfg.base.vocab {
        Some(path) => Vocabulary::load(path)?,
        None => {
            let all = concat(docs.iter());
            let alphabet = Vocabulary::alphabet_of(&all);
            let non_arabic = concat(docs.iter().filter(|d| d.lang != LangClass::Arabic));
            let target = alphabet.len() + cfg.base.extra_merges as usize;
            let trained = train_from_alphabet(alphabet, &non_arabic, target)?;
            if trained.exhausted {
                warn!(
                    "base training stopped early at {} tokens",
                    trained.vocab.len()
                );
            }
            trained.vocab
        }
    };
    write(&out.join("base/vocab.json"), base.to_json())?;

    // Per-document sizes under the base vocabulary drive slice budgets.
    {
        let all = concat(docs.iter());
        let lengths: HashMap<&str, u64> = base
            .encode_distinct(&all)
            .into_iter()
            .map(|(w, ids)| (w, ids.len() as u64))
            .collect();
        let sizes: Vec<u64> = docs
            .par_iter()
            .map(|d| d.words.texts().map(|w| lengths[w]).sum())
            .collect();
        for (d, n) in docs.iter_mut().zip(sizes) {
            d.base_tokens = n;
        }
    }

    let expansion = match cfg.expansion.strategy {
        Strategy::Explicit => explicit_schedule(cfg.expansion.targets.clone())?,
        s => ExpansionSchedule::new(s, cfg.expansion.budget, cfg.expansion.stages)?,
    };
    let mixture = mixture_schedule(expansion.stages(), cfg.mixture)?;
    let plans = stage_plans(
        &expansion,
        &mixture,
        base.len() as u64,
        cfg.per_stage_tokens,
    )?;
    write(&out.join("schedule.csv"), schedule_csv(&plans))?;

    let eval_opts = EvalOptions {
        alpha: cfg.alpha,
        size_unit: cfg.size_unit,
        support: cfg.entropy_support,
    };
    let base_report =
        TokenizerReport::from_tally(&Tally::collect(&eval, &base), base.len(), eval_opts)?;
    let extend_opts = ExtendOptions {
        only_script: cfg
            .restrict_script
            .then_some(crate::corpus::ScriptClass::ArabicScript),
    };

    let mut vocab = base.clone();
    let mut artifacts = Vec::with_capacity(plans.len());
    for plan in &plans {
        let stage = plan.stage;
        let dir_name = format!("stage_{stage:02}");
        let stage_dir = out.join(&dir_name);
        let stage_digest = sha256_hex(&[digest.as_bytes(), &(stage as u64).to_le_bytes()]);

        if let Some((art, next)) = try_resume(out, &stage_dir, &stage_digest, &vocab) {
            info!("stage {stage}: artifacts up to date, skipping");
            vocab = next;
            artifacts.push(art);
            continue;
        }

        let slice = compose_slice(plan, &pools, &docs, cfg.seed);
        let arabic_slice = concat(
            slice
                .docs
                .iter()
                .filter(|&&i| docs[i].lang == LangClass::Arabic)
                .map(|&i| &docs[i]),
        );
        let extension_corpus = if cfg.restrict_script {
            arabic_slice.clone()
        } else {
            concat(slice.docs.iter().map(|&i| &docs[i]))
        };
        let ext = extend_vocab(
            &vocab,
            &extension_corpus,
            plan.vocab_target as usize,
            stage as u32,
            extend_opts,
        )?;
        if ext.exhausted {
            warn!(
                "stage {stage}: reached {} of {} tokens before eligible pairs ran out",
                ext.vocab.len(),
                plan.vocab_target
            );
        }
        let next = ext.vocab;
        let init_plan = make_plan(&vocab, &next, cfg.decompose_basis)?;

        let prev_stage = stage as u32 - 1;
        let eval_tally = Tally::collect(&eval, &next);
        let slice_ratio = if arabic_slice.is_empty() {
            0.0
        } else {
            let t = Tally::collect(&arabic_slice, &next);
            t.new_token_occurrences(&next, prev_stage) as f64 / t.tokens.max(1) as f64
        };
        let tokenizer_report = TokenizerReport::from_tally(&eval_tally, next.len(), eval_opts)?;
        let stage_report = StageReport {
            stage,
            vocab_size: next.len(),
            cumulative_new: (next.len() - base.len()) as u64,
            compression_ratio: tokenizer_report.compression_ratio,
            new_token_occurrence_ratio: slice_ratio,
            heldout_new_token_occurrence_ratio: eval_tally.new_token_occurrences(&next, prev_stage)
                as f64
                / eval_tally.tokens.max(1) as f64,
        };
        let art = StageArtifact {
            stage,
            input_digest: stage_digest,
            vocab_path: format!("{dir_name}/vocab.json"),
            plan_path: format!("{dir_name}/plan.jsonl"),
            vocab_size: next.len(),
            cumulative_new: (next.len() - base.len()) as u64,
            added_tokens: next.len() - vocab.len(),
            exhausted: ext.exhausted,
            mixture: plan.mixture,
            token_budget: plan.token_budget,
            token_targets: slice.targets,
            tokens_consumed: slice.consumed,
            documents: slice.documents,
            corpus_short: slice.short,
            stage_report,
            tokenizer_report,
        };
        write(&out.join(&art.vocab_path), next.to_json())?;
        write(&out.join(&art.plan_path), init_plan.to_jsonl())?;
        write(&stage_dir.join("stage.json"), to_json_pretty(&art))?;
        info!(
            "stage {stage}: vocab {} (+{}), compression {:.4}, new-token ratio {:.4}",
            art.vocab_size,
            art.added_tokens,
            art.stage_report.compression_ratio,
            art.stage_report.new_token_occurrence_ratio
        );
        vocab = next;
        artifacts.push(art);
    }

    // Final pass: every document under the final vocabulary.
    let mut final_pass = BTreeMap::new();
    for class in LangClass::ALL {
        let ws = concat(docs.iter().filter(|d| d.lang == class));
        if !ws.is_empty() {
            let tally = Tally::collect(&ws, &vocab);
            final_pass.insert(
                class,
                TokenizerReport::from_tally(&tally, vocab.len(), eval_opts)?,
            );
        }
    }

    let manifest = RunManifest {
        input_digest: digest,
        strategy: expansion.strategy,
        budget: expansion.budget,
        base_size: base.len(),
        schedule: plans,
        corpus: stats,
        heldout_documents: heldout.len(),
        base_report,
        final_pass,
    };
    write(&out.join("run.json"), to_json_pretty(&manifest))?;
    let summary = write_report(out)?;
    Ok(RunOutput {
        manifest,
        artifacts,
        summary,
        final_vocab: vocab,
    })
}

/// Runs the uniform and exponential strategies on the same inputs, into
/// `out_dir/uniform` and `out_dir/exponential`, and writes a side-by-side
/// `comparison.csv`.
pub fn run_comparison(cfg: &RunConfig) -> Result<(RunOutput, RunOutput)> {
    let mut uni = cfg.clone();
    uni.expansion.strategy = Strategy::Uniform;
    uni.expansion.targets.clear();
    uni.out_dir = cfg.out_dir.join("uniform");
    let mut exp = cfg.clone();
    exp.expansion.strategy = Strategy::Exponential;
    exp.expansion.targets.clear();
    exp.out_dir = cfg.out_dir.join("exponential");
    let u = run(&uni)?;
    let e = run(&exp)?;
    let mut csv = String::from(
        "stage,uniform_cumulative_new,uniform_compress_ratio,uniform_oov_ratio,\
         exponential_cumulative_new,exponential_compress_ratio,exponential_oov_ratio\n",
    );
    for (a, b) in u.artifacts.iter().zip(&e.artifacts) {
        csv.push_str(&format!(
            "{},{},{:.4},{:.4},{},{:.4},{:.4}\n",
            a.stage,
            a.cumulative_new,
            a.stage_report.compression_ratio,
            a.stage_report.new_token_occurrence_ratio,
            b.cumulative_new,
            b.stage_report.compression_ratio,
            b.stage_report.new_token_occurrence_ratio
        ));
    }
    write(&cfg.out_dir.join("comparison.csv"), csv)?;
    Ok((u, e))
}

/// Path of a stage's vocabulary inside a run directory.
pub fn stage_vocab_path(run_dir: &Path, stage: usize) -> PathBuf {
    run_dir.join(format!("stage_{stage:02}")).join("vocab.json")
}
