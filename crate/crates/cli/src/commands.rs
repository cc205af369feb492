use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use docmix_core::corpus::{corpus_stats, select, subset_ids, Subset};
use docmix_core::evaluate::{evaluate_coverage, evaluate_dbleu, evaluate_sbleu};
use docmix_core::io::{read_json, read_jsonl, write_json, write_jsonl_to};
use docmix_core::report::{MetricResult, Report};
use docmix_core::scorer::ExternalScores;
use docmix_core::{
    assemble_mixed, build_length_schedule, parse_parallel_corpus, render_prompt, score_external, simulate_outputs,
    split_dataset, tcp, Corpus, CostMode, DatasetSplit, Endpoint, HypothesisRecord, InstructionRecord, LangPair,
    MixOptions, MixStrategy, PromptTemplate, ScorerRequest, SegmentationPlan, Segmenter, SimulatorConfig, Smoothing,
    SplitConfig, Tokenizer, TokenizerSpec, DEFAULT_LENGTHS,
};

#[derive(Debug, Parser)]
#[command(name = "docmix", version, about = "Mixed sentence/document translation instructions and document-level MT evaluation")]
pub struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Seed for every shuffle.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// whitespace, intl, char-cjk or external:<command>.
    #[arg(long, global = true, default_value = "whitespace")]
    tokenizer: TokenizerSpec,
    /// Comma-separated sub-document token budgets.
    #[arg(long, global = true, value_delimiter = ',', default_values_t = DEFAULT_LENGTHS)]
    lengths: Vec<usize>,
    /// How budgets are assigned to documents: replicate or partition.
    #[arg(long, global = true, default_value = "partition")]
    strategy: MixStrategy,
    /// Write data here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a source/target file pair into corpus JSONL.
    Ingest {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        /// Language pair such as zh-en.
        #[arg(long)]
        lang_pair: LangPair,
    },
    /// Split a corpus into train/dev/test document sets.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        train_frac: f64,
        #[arg(long, default_value_t = 0.1)]
        pool_frac: f64,
        #[arg(long, default_value_t = 150)]
        dev_docs: usize,
        #[arg(long, default_value_t = 150)]
        test_docs: usize,
    },
    /// Document and sentence counts per split.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Dataset label for the table, e.g. Zh-En.
        #[arg(long)]
        dataset: Option<String>,
        /// Also write the counts as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Segment documents into sub-documents for every scheduled budget.
    Segment {
        #[command(flatten)]
        docs: DocSelection,
        #[arg(long, default_value = "source")]
        cost: CostMode,
    },
    /// Build the shuffled mixed instruction set from the training split.
    BuildInstructions {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Segmentation plans; computed from --lengths/--strategy when absent.
        #[arg(long)]
        plans: Option<PathBuf>,
        #[arg(long, default_value = "source")]
        cost: CostMode,
        /// Leave out sentence-level records.
        #[arg(long)]
        no_sentence_level: bool,
        /// Cap on sentence-level records.
        #[arg(long)]
        sentence_budget: Option<usize>,
        /// Prompt template JSON.
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Render instruction records as training prompts.
    RenderPrompts {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Produce synthetic document-level outputs with tail sentence drops.
    Simulate {
        #[command(flatten)]
        docs: DocSelection,
        /// Segment per these plans instead of whole documents.
        #[arg(long)]
        plans: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        drop_prob: f64,
        /// Distribution over dropped sentence counts, as count:weight pairs.
        #[arg(long, value_delimiter = ',', default_value = "1:0.5,2:0.5")]
        drop_counts: Vec<String>,
        /// Token substitution rate.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        drop_anywhere: bool,
    },
    /// Evaluate outputs.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Score (src, mt, ref) triples with an external scorer.
    ScoreExternal {
        /// JSONL of {"src", "mt", "ref"} objects.
        #[arg(long)]
        pairs: PathBuf,
        /// http(s):// URL, or a shell command (optionally prefixed cmd:).
        #[arg(long)]
        endpoint: String,
        /// Metric name in the result.
        #[arg(long, default_value = "COMET")]
        name: String,
    },
    /// Combine evaluation results into a table.
    Report {
        /// LABEL=result.json[,result.json...]; one per row.
        #[arg(long = "row", required = true)]
        rows: Vec<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Line-protocol tokenizer: one escaped text per input line, one line of
    /// space-separated tokens per output line.
    Tokenize,
    /// Reference scorer for testing score-external.
    #[command(hide = true)]
    StubScorer {
        #[arg(long, default_value_t = 0.5)]
        constant: f64,
        /// ok, short (one response fewer) or malformed (second line invalid).
        #[arg(long, default_value = "ok")]
        mode: String,
    },
}

#[derive(Debug, Args)]
struct DocSelection {
    #[arg(long)]
    corpus: PathBuf,
    /// Restrict to one subset of this split.
    #[arg(long, requires = "subset")]
    split: Option<PathBuf>,
    /// train, dev or test.
    #[arg(long, requires = "split")]
    subset: Option<Subset>,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Sentence-level BLEU of separator-recovered sentences.
    Sbleu(BleuArgs),
    /// Document-level BLEU with separators removed.
    Dbleu(BleuArgs),
    /// Share of outputs whose sentences are all recoverable.
    Coverage(HypArgs),
    /// Geometric mean of TC, CP and PT.
    Tcp {
        #[arg(long)]
        tc: f64,
        #[arg(long)]
        cp: f64,
        #[arg(long)]
        pt: f64,
    },
}

#[derive(Debug, Args)]
struct HypArgs {
    /// Hypothesis JSONL: {"doc_id", "generated"} with optional start/end/L.
    #[arg(long)]
    hyps: PathBuf,
    /// Reference corpus JSONL.
    #[arg(long)]
    corpus: PathBuf,
    /// Only evaluate hypotheses with this budget.
    #[arg(long)]
    length: Option<usize>,
}

#[derive(Debug, Args)]
struct BleuArgs {
    #[command(flatten)]
    hyps: HypArgs,
    /// none, add-k or add-k:<k>.
    #[arg(long, default_value = "none")]
    smoothing: Smoothing,
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| docmix_core::Error::io(path, e))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_jsonl<T: Serialize>(out: &Option<PathBuf>, items: &[T]) -> Result<()> {
    write_jsonl_to(output(out)?, items).context("writing output")?;
    Ok(())
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    match out {
        Some(path) => write_json(path, value)?,
        None => {
            let mut w = output(out)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::from_records(read_jsonl(path)?).with_context(|| format!("invalid corpus {}", path.display()))
}

fn load_template(path: &Option<PathBuf>) -> Result<PromptTemplate> {
    let template = match path {
        Some(p) => read_json(p)?,
        None => PromptTemplate::default(),
    };
    template.validate()?;
    Ok(template)
}

fn load_plans(path: &Path) -> Result<Vec<SegmentationPlan>> {
    Ok(read_jsonl::<SegmentationPlan>(path)?.into_iter().map(SegmentationPlan::normalize).collect())
}

impl DocSelection {
    fn load(&self) -> Result<Corpus> {
        let corpus = load_corpus(&self.corpus)?;
        match (&self.split, self.subset) {
            (Some(split), Some(subset)) => {
                let split: DatasetSplit = read_json(split)?;
                Ok(select(&corpus, subset_ids(&split, subset))?)
            }
            _ => Ok(corpus),
        }
    }
}

fn load_hyps(args: &HypArgs) -> Result<(Corpus, Vec<HypothesisRecord>)> {
    let corpus = load_corpus(&args.corpus)?;
    let mut hyps: Vec<HypothesisRecord> = read_jsonl(&args.hyps)?;
    if let Some(l) = args.length {
        hyps.retain(|h| h.budget == Some(l));
    }
    if hyps.is_empty() {
        bail!("no hypotheses to evaluate in {}", args.hyps.display());
    }
    Ok((corpus, hyps))
}

fn parse_drop_counts(items: &[String]) -> Result<Vec<(usize, f64)>> {
    items
        .iter()
        .map(|item| {
            let (count, weight) = item
                .split_once(':')
                .with_context(|| format!("--drop-counts entry {item:?} is not count:weight"))?;
            Ok((
                count.trim().parse().with_context(|| format!("bad count in {item:?}"))?,
                weight.trim().parse().with_context(|| format!("bad weight in {item:?}"))?,
            ))
        })
        .collect()
}

fn metric(metric: &str, value: f64, detail: impl Serialize) -> MetricResult {
    MetricResult {
        metric: metric.to_string(),
        value,
        detail: serde_json::to_value(detail).expect("detail serializes"),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    match cli.command {
        Command::Ingest { src, tgt, lang_pair } => {
            let corpus = parse_parallel_corpus(&src, &tgt, &lang_pair)?;
            eprintln!(
                "ingested {} documents, {} sentence pairs",
                corpus.documents.len(),
                corpus.sentence_count()
            );
            emit_jsonl(&g.out, &corpus.to_records())
        }
        Command::Split {
            corpus,
            train_frac,
            pool_frac,
            dev_docs,
            test_docs,
        } => {
            let corpus = load_corpus(&corpus)?;
            let config = SplitConfig {
                train_frac,
                pool_frac,
                dev_docs,
                test_docs,
            };
            let split = split_dataset(&corpus, g.seed, &config)?;
            eprintln!(
                "train {} / dev {} / test {} / discarded {}",
                split.train.len(),
                split.dev.len(),
                split.test.len(),
                split.discarded.len()
            );
            emit_json(&g.out, &split)
        }
        Command::Stats {
            corpus,
            split,
            dataset,
            csv,
        } => {
            let corpus = load_corpus(&corpus)?;
            let split: DatasetSplit = read_json(&split)?;
            let name = dataset.unwrap_or_else(|| {
                let cap = |s: &str| {
                    let mut c = s.chars();
                    c.next().map(|f| f.to_uppercase().chain(c).collect::<String>()).unwrap_or_default()
                };
                format!("{}-{}", cap(&corpus.lang_pair.source), cap(&corpus.lang_pair.target))
            });
            let stats = corpus_stats(&corpus, &split, &name)?;
            if let Some(path) = csv {
                std::fs::write(&path, stats.to_csv()).map_err(|e| docmix_core::Error::io(&path, e))?;
            }
            let mut w = output(&g.out)?;
            w.write_all(stats.to_table().as_bytes())?;
            w.flush()?;
            Ok(())
        }
        Command::Segment { docs, cost } => {
            let corpus = docs.load()?;
            let tokenizer = Tokenizer::new(g.tokenizer)?;
            let schedule = build_length_schedule(&corpus.doc_ids(), &g.lengths, g.strategy, g.seed)?;
            let plans = Segmenter {
                tokenizer: &tokenizer,
                cost_mode: cost,
            }
            .plan_schedule(&corpus, &schedule)?;
            let segments: usize = plans.iter().map(|p| p.segments.len()).sum();
            let oversized = plans.iter().flat_map(|p| &p.segments).filter(|s| s.oversized).count();
            eprintln!("{} plans, {segments} segments ({oversized} oversized)", plans.len());
            emit_jsonl(&g.out, &plans)
        }
        Command::BuildInstructions {
            corpus,
            split,
            plans,
            cost,
            no_sentence_level,
            sentence_budget,
            template,
        } => {
            let corpus = load_corpus(&corpus)?;
            let split: DatasetSplit = read_json(&split)?;
            let template = load_template(&template)?;
            let plans = match plans {
                Some(path) => load_plans(&path)?,
                None => {
                    let tokenizer = Tokenizer::new(g.tokenizer)?;
                    let schedule = build_length_schedule(&split.train, &g.lengths, g.strategy, g.seed)?;
                    Segmenter {
                        tokenizer: &tokenizer,
                        cost_mode: cost,
                    }
                    .plan_schedule(&corpus, &schedule)?
                }
            };
            let opts = MixOptions {
                include_sentence_level: !no_sentence_level,
                sentence_budget,
                seed: g.seed,
            };
            let records = assemble_mixed(&corpus, &split, &plans, &template, &opts)?;
            let sentence_level = records
                .iter()
                .filter(|r| r.meta.level == docmix_core::Level::Sentence)
                .count();
            eprintln!(
                "{} records ({} document-level, {sentence_level} sentence-level)",
                records.len(),
                records.len() - sentence_level
            );
            emit_jsonl(&g.out, &records)
        }
        Command::RenderPrompts { records, template } => {
            let template = load_template(&template)?;
            let records: Vec<InstructionRecord> = read_jsonl(&records)?;
            #[derive(Serialize)]
            struct Prompt<'a> {
                prompt: String,
                completion: &'a str,
            }
            let prompts: Vec<Prompt> = records
                .iter()
                .map(|r| Prompt {
                    prompt: render_prompt(r, &template),
                    completion: &r.output,
                })
                .collect();
            emit_jsonl(&g.out, &prompts)
        }
        Command::Simulate {
            docs,
            plans,
            drop_prob,
            drop_counts,
            noise,
            drop_anywhere,
        } => {
            let corpus = docs.load()?;
            let plans = plans.as_deref().map(load_plans).transpose()?;
            let cfg = SimulatorConfig {
                tail_drop_prob: drop_prob,
                drop_counts: parse_drop_counts(&drop_counts)?,
                noise,
                drop_anywhere,
                seed: g.seed,
            };
            let units = simulate_outputs(&corpus, plans.as_deref(), &cfg)?;
            let dropped = units.iter().filter(|u| !u.dropped.is_empty()).count();
            eprintln!("{} outputs, {dropped} with dropped sentences", units.len());
            let records: Vec<HypothesisRecord> = units.into_iter().map(|u| u.record).collect();
            emit_jsonl(&g.out, &records)
        }
        Command::Eval(cmd) => run_eval(cmd, g),
        Command::ScoreExternal { pairs, endpoint, name } => {
            let pairs: Vec<ScorerRequest> = read_jsonl(&pairs)?;
            let endpoint: Endpoint = endpoint.parse()?;
            let scores: ExternalScores = score_external(&pairs, &endpoint)?;
            eprintln!("{name}: {:.4} over {} segments", scores.system, scores.scores.len());
            emit_json(&g.out, &metric(&name, scores.system, &scores))
        }
        Command::Report { rows, csv, json } => {
            let mut table = Vec::new();
            for row in &rows {
                let (label, files) = row
                    .split_once('=')
                    .with_context(|| format!("--row {row:?} is not LABEL=file[,file...]"))?;
                let results = files
                    .split(',')
                    .map(|f| read_json::<MetricResult>(Path::new(f)))
                    .collect::<docmix_core::Result<Vec<_>>>()?;
                table.push((label.to_string(), results));
            }
            let report = Report::from_results(table);
            if let Some(path) = csv {
                std::fs::write(&path, report.to_csv()).map_err(|e| docmix_core::Error::io(&path, e))?;
            }
            if let Some(path) = json {
                write_json(&path, &report)?;
            }
            let mut w = output(&g.out)?;
            w.write_all(report.to_table().as_bytes())?;
            w.flush()?;
            Ok(())
        }
        Command::Tokenize => {
            let tokenizer = Tokenizer::new(g.tokenizer)?;
            let mut w = output(&g.out)?;
            for line in io::stdin().lock().lines() {
                let text = line?.replace("\\n", "\n");
                writeln!(w, "{}", tokenizer.tokenize(&text)?)?;
                w.flush()?;
            }
            Ok(())
        }
        Command::StubScorer { constant, mode } => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            let lines: Vec<String> = io::stdin().lock().lines().collect::<io::Result<_>>()?;
            let n = match mode.as_str() {
                "short" => lines.len().saturating_sub(1),
                "ok" | "malformed" => lines.len(),
                other => bail!("unknown stub mode {other:?}"),
            };
            for i in 0..n {
                if mode == "malformed" && i == 1 {
                    writeln!(w, "not json")?;
                    break;
                } else {
                    writeln!(w, "{}", serde_json::json!({ "score": constant }))?;
                }
            }
            Ok(())
        }
    }
}

fn run_eval(cmd: EvalCommand, g: Global) -> Result<()> {
    match cmd {
        EvalCommand::Tcp { tc, cp, pt } => {
            let scores = tcp(tc, cp, pt)?;
            println!("{scores}");
            if g.out.is_some() {
                emit_json(&g.out, &metric("TCP", scores.tcp_rounded(), scores))?;
            }
            Ok(())
        }
        EvalCommand::Coverage(args) => {
            let (corpus, hyps) = load_hyps(&args)?;
            let report = evaluate_coverage(&corpus, &hyps)?;
            eprintln!(
                "coverage: {:.2}% ({} of {} outputs fully recovered)",
                report.corpus_accuracy,
                report.full_count(),
                report.per_doc.len()
            );
            emit_json(&g.out, &metric("coverage", report.corpus_accuracy, &report))
        }
        EvalCommand::Sbleu(BleuArgs { hyps, smoothing }) => {
            let (corpus, hyps) = load_hyps(&hyps)?;
            let tokenizer = Tokenizer::new(g.tokenizer)?;
            let score = evaluate_sbleu(&corpus, &hyps, &tokenizer, smoothing)?;
            eprintln!("s-{score}");
            emit_json(&g.out, &metric("s-BLEU", score.score, &score))
        }
        EvalCommand::Dbleu(BleuArgs { hyps, smoothing }) => {
            let (corpus, hyps) = load_hyps(&hyps)?;
            let tokenizer = Tokenizer::new(g.tokenizer)?;
            let score = evaluate_dbleu(&corpus, &hyps, &tokenizer, smoothing)?;
            eprintln!("d-{score}");
            emit_json(&g.out, &metric("d-BLEU", score.score, &score))
        }
    }
}
