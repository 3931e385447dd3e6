use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use vexp_core::bpe::{extend_vocab, train_base, ExtendOptions, Vocabulary};
use vexp_core::corpus::{normalize, read_documents, ScriptClass, WordStream};
use vexp_core::desk::{synthetic_corpus, to_jsonl, DeskCorpusSpec};
use vexp_core::embed_init::{apply_plan, make_plan, DecomposeBasis, EmbeddingMatrix};
use vexp_core::metrics::{
    evaluate_with, stage_report_csv, EntropySupport, EvalOptions, SizeUnit, StageReport,
};
use vexp_core::pipeline::{self, read_run, write_report, RunConfig};
use vexp_core::schedule::{
    explicit_schedule, mixture_schedule, schedule_csv, stage_plans, ExpansionSchedule,
    MixtureParams, Strategy,
};
use vexp_core::{Error, Result};

#[derive(Parser)]
#[command(name = "vexp", version, about = "Staged subword vocabulary expansion")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for corpus subsampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a base vocabulary from scratch.
    TrainBase {
        #[arg(long)]
        vocab_size: usize,
        #[arg(required = true)]
        corpus: Vec<PathBuf>,
    },
    /// Extend a vocabulary to a larger target size.
    Expand {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        target: usize,
        /// Stage tag for the new tokens.
        #[arg(long)]
        stage: u32,
        /// Count pairs in every word, not only Arabic-script ones.
        #[arg(long)]
        all_scripts: bool,
        #[arg(required = true)]
        corpus: Vec<PathBuf>,
    },
    /// Print token ids, one JSON line per document (or per stdin line).
    Tokenize {
        #[arg(long)]
        vocab: PathBuf,
        corpus: Vec<PathBuf>,
    },
    /// One JSON line of tokenizer metrics per (vocabulary, corpus) pair.
    Evaluate {
        #[arg(long = "vocab", required = true)]
        vocabs: Vec<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(required = true)]
        corpus: Vec<PathBuf>,
    },
    /// Print the per-stage expansion and mixture schedule as CSV.
    Schedule(ScheduleArgs),
    /// Print the per-stage compression / new-token ratio CSV of a run.
    StageReport {
        run_dir: PathBuf,
        /// Report the new-token ratio on the held-out slice instead.
        #[arg(long)]
        heldout: bool,
    },
    /// Build an embedding-init plan and optionally apply it to a matrix.
    InitEmbeddings {
        #[arg(long)]
        old: PathBuf,
        #[arg(long)]
        new: PathBuf,
        /// Embedding exchange file with at least `old`'s rows.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, value_parser = parse_basis, default_value = "base")]
        basis: DecomposeBasis,
    },
    /// Execute a staged run from `--config`.
    Run {
        /// Run uniform and exponential side by side.
        #[arg(long)]
        compare: bool,
    },
    /// Rebuild summary.json and stage_report.csv of a run directory.
    Report { run_dir: PathBuf },
    /// Write a seeded synthetic corpus (ar/en/mc JSONL files).
    Synth {
        #[arg(long, default_value_t = 120_000)]
        arabic_words: usize,
        #[arg(long, default_value_t = 60_000)]
        english_words: usize,
        #[arg(long, default_value_t = 10_000)]
        math_code_words: usize,
        #[arg(long, default_value_t = 80)]
        doc_words: usize,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, default_value_t = vexp_core::metrics::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, value_parser = parse_size_unit, default_value = "bytes")]
    size_unit: SizeUnit,
    /// Normalize entropy by the full vocabulary or the observed tokens.
    #[arg(long, value_parser = parse_support, default_value = "full")]
    support: EntropySupport,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    stages: Option<usize>,
    /// Comma-separated cumulative targets for the explicit strategy.
    #[arg(long, value_delimiter = ',')]
    targets: Vec<u64>,
    #[arg(long)]
    start_pct: Option<f64>,
    #[arg(long)]
    end_pct: Option<f64>,
    #[arg(long)]
    constant_pct: Option<f64>,
    /// Size of the vocabulary being expanded.
    #[arg(long, default_value_t = 0)]
    base_size: u64,
    /// Tokens per stage.
    #[arg(long)]
    tokens: Option<u64>,
}

fn parse_basis(s: &str) -> std::result::Result<DecomposeBasis, String> {
    match s {
        "base" => Ok(DecomposeBasis::Base),
        "previous" => Ok(DecomposeBasis::Previous),
        _ => Err(format!("expected base or previous, got {s:?}")),
    }
}

fn parse_size_unit(s: &str) -> std::result::Result<SizeUnit, String> {
    match s {
        "bytes" => Ok(SizeUnit::Bytes),
        "chars" => Ok(SizeUnit::Chars),
        _ => Err(format!("expected bytes or chars, got {s:?}")),
    }
}

fn parse_support(s: &str) -> std::result::Result<EntropySupport, String> {
    match s {
        "full" => Ok(EntropySupport::FullVocab),
        "observed" => Ok(EntropySupport::Observed),
        _ => Err(format!("expected full or observed, got {s:?}")),
    }
}

fn load_words(paths: &[PathBuf]) -> Result<WordStream> {
    let mut ws = WordStream::default();
    for p in paths {
        ws.extend(WordStream::from_documents(&read_documents(p)?));
    }
    Ok(ws)
}

/// Writes `name` under `--out`, or to stdout without one.
fn emit(out: Option<&Path>, name: &str, contents: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(name);
            fs::write(&path, contents).map_err(|e| Error::io(&path, e))
        }
        None => io::stdout()
            .lock()
            .write_all(contents.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn load_config(cli: &Cli) -> Result<Option<RunConfig>> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(Some(cfg))
}

fn schedule(cli: &Cli, args: &ScheduleArgs) -> Result<String> {
    let cfg = load_config(cli)?.unwrap_or_default();
    let mut exp = cfg.expansion;
    exp.strategy = args.strategy.unwrap_or(exp.strategy);
    exp.budget = args.budget.unwrap_or(exp.budget);
    exp.stages = args.stages.unwrap_or(exp.stages);
    if !args.targets.is_empty() {
        exp.targets = args.targets.clone();
        if args.strategy.is_none() {
            exp.strategy = Strategy::Explicit;
        }
    }
    let mix = MixtureParams {
        start_pct: args.start_pct.unwrap_or(cfg.mixture.start_pct),
        end_pct: args.end_pct.unwrap_or(cfg.mixture.end_pct),
        constant_pct: args.constant_pct.unwrap_or(cfg.mixture.constant_pct),
    };
    let expansion = match exp.strategy {
        Strategy::Explicit => explicit_schedule(exp.targets)?,
        s => ExpansionSchedule::new(s, exp.budget, exp.stages)?,
    };
    let mixture = mixture_schedule(expansion.stages(), mix)?;
    let plans = stage_plans(
        &expansion,
        &mixture,
        args.base_size,
        args.tokens.unwrap_or(cfg.per_stage_tokens),
    )?;
    Ok(schedule_csv(&plans))
}

fn execute(cli: &Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::TrainBase { vocab_size, corpus } => {
            let ext = train_base(&load_words(corpus)?, *vocab_size)?;
            if ext.exhausted {
                warn!(
                    "stopped at {} tokens: no pair occurs twice",
                    ext.vocab.len()
                );
            }
            emit(out, "vocab.json", &ext.vocab.to_json())
        }
        Command::Expand {
            vocab,
            target,
            stage,
            all_scripts,
            corpus,
        } => {
            let v = Vocabulary::load(vocab)?;
            let opts = ExtendOptions {
                only_script: (!all_scripts).then_some(ScriptClass::ArabicScript),
            };
            let ext = extend_vocab(&v, &load_words(corpus)?, *target, *stage, opts)?;
            if ext.exhausted {
                warn!(
                    "stopped at {} tokens: no eligible pair occurs twice",
                    ext.vocab.len()
                );
            }
            emit(out, "vocab.json", &ext.vocab.to_json())
        }
        Command::Tokenize { vocab, corpus } => {
            let v = Vocabulary::load(vocab)?;
            let mut text = String::new();
            if corpus.is_empty() {
                for line in io::stdin().lock().lines() {
                    let line = line.map_err(|e| Error::io("<stdin>", e))?;
                    let ids = v.tokenize(&normalize(&line));
                    text.push_str(&serde_json::json!({ "tokens": ids }).to_string());
                    text.push('\n');
                }
            } else {
                for p in corpus {
                    for d in read_documents(p)? {
                        let ids = v.tokenize(&normalize(&d.text));
                        text.push_str(
                            &serde_json::json!({ "id": d.id, "tokens": ids }).to_string(),
                        );
                        text.push('\n');
                    }
                }
            }
            emit(out, "tokens.jsonl", &text)
        }
        Command::Evaluate {
            vocabs,
            eval,
            corpus,
        } => {
            let opts = EvalOptions {
                alpha: eval.alpha,
                size_unit: eval.size_unit,
                support: eval.support,
            };
            let streams = corpus
                .iter()
                .map(|p| load_words(std::slice::from_ref(p)))
                .collect::<Result<Vec<_>>>()?;
            let mut text = String::new();
            for vp in vocabs {
                let v = Vocabulary::load(vp)?;
                for ws in &streams {
                    let report = evaluate_with(ws, &v, opts)?;
                    text.push_str(&report.to_json_line(&vp.display().to_string()));
                    text.push('\n');
                }
            }
            emit(out, "evaluation.jsonl", &text)
        }
        Command::Schedule(args) => emit(out, "schedule.csv", &schedule(cli, args)?),
        Command::StageReport { run_dir, heldout } => {
            let (_, artifacts) = read_run(run_dir)?;
            let reports: Vec<StageReport> = artifacts
                .into_iter()
                .map(|a| {
                    let mut r = a.stage_report;
                    if *heldout {
                        r.new_token_occurrence_ratio = r.heldout_new_token_occurrence_ratio;
                    }
                    r
                })
                .collect();
            emit(out, "stage_report.csv", &stage_report_csv(&reports))
        }
        Command::InitEmbeddings {
            old,
            new,
            matrix,
            basis,
        } => {
            let old = Vocabulary::load(old)?;
            let new = Vocabulary::load(new)?;
            let plan = make_plan(&old, &new, *basis)?;
            match matrix {
                Some(m) => {
                    let dir = out.ok_or_else(|| {
                        Error::invalid("--out is required when --matrix is given")
                    })?;
                    let m = EmbeddingMatrix::load(m)?;
                    emit(Some(dir), "plan.jsonl", &plan.to_jsonl())?;
                    apply_plan(&m, &plan)?.save(&dir.join("embeddings.bin"))
                }
                None => emit(out, "plan.jsonl", &plan.to_jsonl()),
            }
        }
        Command::Run { compare } => {
            let cfg =
                load_config(cli)?.ok_or_else(|| Error::invalid("run needs --config <path>"))?;
            if *compare {
                let (u, e) = pipeline::run_comparison(&cfg)?;
                eprintln!(
                    "uniform: max new-token ratio {:.4}, max compression drop {:.4}",
                    u.summary.max_new_token_occurrence_ratio, u.summary.max_compression_drop
                );
                eprintln!(
                    "exponential: max new-token ratio {:.4}, max compression drop {:.4}",
                    e.summary.max_new_token_occurrence_ratio, e.summary.max_compression_drop
                );
            } else {
                let r = pipeline::run(&cfg)?;
                eprintln!(
                    "{} stages, final vocabulary {} tokens, sequence length reduction {:.4}",
                    r.summary.stages,
                    r.summary.final_vocab_size,
                    r.summary.sequence_length_reduction
                );
            }
            Ok(())
        }
        Command::Report { run_dir } => {
            let summary = write_report(run_dir)?;
            let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            text.push('\n');
            emit(None, "", &text)
        }
        Command::Synth {
            arabic_words,
            english_words,
            math_code_words,
            doc_words,
        } => {
            let dir = out.ok_or_else(|| Error::invalid("synth needs --out <dir>"))?;
            let docs = synthetic_corpus(DeskCorpusSpec {
                seed: cli.seed.unwrap_or(DeskCorpusSpec::default().seed),
                arabic_words: *arabic_words,
                english_words: *english_words,
                math_code_words: *math_code_words,
                doc_words: *doc_words,
            });
            for class in ["ar", "en", "mc"] {
                let text = to_jsonl(docs.iter().filter(|d| d.lang.code() == class));
                emit(Some(dir), &format!("{class}.jsonl"), &text)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.threads {
        Some(0) => Err(Error::invalid("--threads must be >= 1")),
        Some(n) if !matches!(cli.command, Command::Run { .. }) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))
            .and_then(|()| execute(&cli)),
        _ => execute(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vexp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
