//! `amr-transit`: oracle, replay, decoding, evaluation and data export for
//! the pointer-based AMR transition system.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use amr_transit::alignments::alignment_stats;
use amr_transit::corpus::{read_corpus, write_entry, Corpus, ReadOptions};
use amr_transit::decoder::{beam_decode, train_baseline, BaselineScorer, DecodeOptions};
use amr_transit::features::{export_features, word_piece_pooling_map, write_jsonl};
use amr_transit::metrics::{breakdown, MatchCounts, SmatchOptions};
use amr_transit::oracle::{run_oracle, CoverageReport};
use amr_transit::segment::{BpeSegmenter, Segmenter};
use amr_transit::transition::{format_actions, parse_actions, replay, Action};
use amr_transit::vocab::{build_joint_vocab, build_sep_vocab, Vocabulary};

#[derive(Parser)]
#[command(name = "amr-transit", version, about)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "AMR_TRANSIT_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads for per-sentence work (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive gold action sequences from an aligned AMR corpus.
    Oracle(OracleArgs),
    /// Replay action sequences and print the resulting AMR blocks.
    Play(PlayArgs),
    /// Parse tokenized sentences with a trained baseline model.
    Parse(ParseArgs),
    /// Train the count-based baseline scorer.
    TrainBaseline(TrainArgs),
    /// Compare two AMR files: Smatch, Unlabeled and Concepts.
    Eval(EvalArgs),
    /// Alignment and oracle statistics for a corpus.
    Stats(StatsArgs),
    /// Build a target vocabulary from action sequences.
    Vocab(VocabArgs),
    /// Write per-step masks and targets as JSON lines.
    ExportFeatures(ExportArgs),
}

#[derive(Args)]
struct CorpusInput {
    /// AMR corpus (`# ::id`, `# ::tok`, `# ::alignments`, Penman graph).
    corpus: PathBuf,
    /// Accept `var=start-end` alignments, keeping the first token.
    #[arg(long)]
    collapse_spans: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: CorpusInput,
    /// Output file with one action sequence per line.
    #[arg(long)]
    actions: PathBuf,
    /// Output file with the matching tokenized sentences.
    #[arg(long)]
    tokens: PathBuf,
}

#[derive(Args)]
struct Parallel {
    /// One tokenized sentence per line.
    #[arg(long)]
    tokens: PathBuf,
    /// One action sequence per line, parallel to `--tokens`.
    #[arg(long)]
    actions: PathBuf,
}

#[derive(Args)]
struct VocabInput {
    /// Vocabulary file written by `vocab`.
    #[arg(long)]
    vocab: PathBuf,
    /// Merge file for joint vocabularies.
    #[arg(long)]
    merges: Option<PathBuf>,
}

#[derive(Args)]
struct PlayArgs {
    #[command(flatten)]
    data: Parallel,
    /// Output file (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ParseArgs {
    /// One tokenized sentence per line.
    #[arg(long)]
    tokens: PathBuf,
    #[command(flatten)]
    vocab: VocabInput,
    /// Model file written by `train-baseline`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    beam: usize,
    /// Symbol budget per sentence (default: 4 * tokens + 10).
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: Parallel,
    #[command(flatten)]
    vocab: VocabInput,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted AMR file.
    test: PathBuf,
    /// Gold AMR file.
    gold: PathBuf,
    /// Random restarts for the Smatch hill climber.
    #[arg(long, default_value_t = 4)]
    restarts: usize,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    input: CorpusInput,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sep,
    Joint,
}

#[derive(Args)]
struct VocabArgs {
    /// One action sequence per line.
    #[arg(long)]
    actions: PathBuf,
    #[arg(long, value_enum, default_value = "sep")]
    mode: Mode,
    /// Joint mode: names seen this often stay whole (`inf` keeps none).
    #[arg(long, default_value = "5", value_parser = parse_threshold)]
    min_node_freq: u64,
    /// Joint mode: where to write the learned merges.
    #[arg(long)]
    merges: Option<PathBuf>,
    /// Joint mode: maximum number of merges to learn.
    #[arg(long, default_value_t = 1000)]
    num_merges: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    data: Parallel,
    #[command(flatten)]
    vocab: VocabInput,
    /// Also write word-piece pooling ranges, segmenting tokens with these
    /// merges.
    #[arg(long)]
    pooling_merges: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_threshold(s: &str) -> Result<u64, String> {
    match s {
        "inf" | "∞" => Ok(u64::MAX),
        n => n
            .parse()
            .map_err(|_| format!("expected a count or `inf`, got {n:?}")),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("cannot open {}", path.display())
    })?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_amr(input: &Path, collapse_spans: bool, strict: bool) -> Result<Corpus> {
    let corpus = read_corpus(open(input)?, ReadOptions { collapse_spans })
        .with_context(|| format!("reading {}", input.display()))?;
    if strict {
        if let Some(w) = corpus.warnings.first() {
            bail!(
                "{} line {}: block {}: {}",
                input.display(),
                w.line,
                w.block,
                w.error
            );
        }
    }
    Ok(corpus)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    open(path)?
        .lines()
        .collect::<io::Result<_>>()
        .with_context(|| format!("reading {}", path.display()))
}

fn read_tokens(path: &Path) -> Result<Vec<Vec<String>>> {
    read_lines(path)?
        .into_iter()
        .enumerate()
        .map(|(i, line)| {
            let tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if tokens.is_empty() {
                bail!("{} line {}: empty sentence", path.display(), i + 1);
            }
            Ok(tokens)
        })
        .collect()
}

fn read_actions(path: &Path) -> Result<Vec<Vec<Action>>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, line)| {
            parse_actions(line).with_context(|| format!("{} line {}", path.display(), i + 1))
        })
        .collect()
}

fn read_parallel(data: &Parallel) -> Result<Vec<(Vec<String>, Vec<Action>)>> {
    let tokens = read_tokens(&data.tokens)?;
    let actions = read_actions(&data.actions)?;
    if tokens.len() != actions.len() {
        bail!(
            "{} has {} lines but {} has {}",
            data.tokens.display(),
            tokens.len(),
            data.actions.display(),
            actions.len()
        );
    }
    Ok(tokens.into_iter().zip(actions).collect())
}

fn read_merges(path: &Path) -> Result<Arc<dyn Segmenter>> {
    let seg =
        BpeSegmenter::read(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    Ok(Arc::new(seg))
}

fn read_vocab(input: &VocabInput) -> Result<Vocabulary> {
    let segmenter = input.merges.as_deref().map(read_merges).transpose()?;
    Vocabulary::read(open(&input.vocab)?, segmenter)
        .with_context(|| format!("reading {}", input.vocab.display()))
}

fn oracle(args: &OracleArgs) -> Result<()> {
    let corpus = read_amr(&args.input.corpus, args.input.collapse_spans, false)?;
    let outcomes: Vec<_> = corpus.entries.par_iter().map(run_oracle).collect();
    let mut report = CoverageReport::default();
    let mut actions = create(&args.actions)?;
    let mut tokens = create(&args.tokens)?;
    for (entry, outcome) in corpus.entries.iter().zip(&outcomes) {
        report.add(entry, outcome.as_ref());
        match outcome {
            Ok(o) => {
                writeln!(actions, "{}", format_actions(&o.actions))?;
                writeln!(tokens, "{}", entry.tokens.join(" "))?;
            }
            Err(e) => log::warn!("{}: no oracle sequence: {e}", entry.id),
        }
    }
    actions.flush()?;
    tokens.flush()?;
    print_coverage(&report, corpus.warnings.len());
    Ok(())
}

fn print_coverage(report: &CoverageReport, skipped_blocks: usize) {
    println!("sentences\t{}", report.sentences);
    println!("skipped blocks\t{skipped_blocks}");
    println!("oracle failures\t{}", report.failures);
    println!("avg tokens\t{:.2}", report.avg_tokens());
    println!("avg actions\t{:.2}", report.avg_actions());
    println!("actions per token\t{:.2}", report.actions_per_token());
    println!("oracle smatch\t{:.4}", report.oracle_smatch());
}

fn play(args: &PlayArgs) -> Result<()> {
    let pairs = read_parallel(&args.data)?;
    let mut out = output(args.output.as_deref())?;
    for (i, (tokens, actions)) in pairs.iter().enumerate() {
        let state = replay(tokens, actions)
            .with_context(|| format!("{} line {}", args.data.actions.display(), i + 1))?;
        let (graph, alignment) = state
            .extract_graph()
            .with_context(|| format!("{} line {}", args.data.actions.display(), i + 1))?;
        write_entry(&mut out, &(i + 1).to_string(), tokens, &graph, &alignment)?;
    }
    out.flush()?;
    Ok(())
}

fn parse(args: &ParseArgs) -> Result<()> {
    let vocab = read_vocab(&args.vocab)?;
    let model = BaselineScorer::read(open(&args.model)?, &vocab)
        .with_context(|| format!("reading {}", args.model.display()))?;
    let sentences = read_tokens(&args.tokens)?;
    let options = DecodeOptions {
        beam: args.beam,
        max_len: args.max_len,
    };
    let decoded: Vec<_> = sentences
        .par_iter()
        .map(|tokens| beam_decode(tokens, &vocab, &model, &options))
        .collect();
    let mut out = output(args.output.as_deref())?;
    for (i, (tokens, d)) in sentences.iter().zip(decoded).enumerate() {
        let d = d.with_context(|| format!("{} line {}", args.tokens.display(), i + 1))?;
        write_entry(
            &mut out,
            &(i + 1).to_string(),
            tokens,
            &d.graph,
            &d.alignment,
        )?;
    }
    out.flush()?;
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let pairs = read_parallel(&args.data)?;
    let vocab = read_vocab(&args.vocab)?;
    let model = train_baseline(
        pairs.iter().map(|(t, a)| (t.as_slice(), a.as_slice())),
        &vocab,
    )?;
    let mut out = create(&args.output)?;
    model.write(&mut out)?;
    out.flush()?;
    Ok(())
}

fn eval(args: &EvalArgs, seed: u64) -> Result<()> {
    let test = read_amr(&args.test, false, true)?;
    let gold = read_amr(&args.gold, false, true)?;
    if test.entries.len() != gold.entries.len() {
        bail!(
            "{} has {} graphs but {} has {}",
            args.test.display(),
            test.entries.len(),
            args.gold.display(),
            gold.entries.len()
        );
    }
    let options = SmatchOptions {
        restarts: args.restarts,
        seed,
    };
    let results: Vec<_> = test
        .entries
        .par_iter()
        .zip(&gold.entries)
        .map(|(t, g)| breakdown(&t.graph, &g.graph, &options))
        .collect();
    let mut totals = [MatchCounts::default(); 3];
    for b in &results {
        totals[0] += b.smatch.counts;
        totals[1] += b.unlabeled.counts;
        totals[2] += b.concepts.counts;
    }
    println!("metric\tprecision\trecall\tf1");
    for (name, c) in ["smatch", "unlabeled", "concepts"].iter().zip(totals) {
        println!(
            "{name}\t{:.4}\t{:.4}\t{:.4}",
            c.precision(),
            c.recall(),
            c.f1()
        );
    }
    Ok(())
}

fn stats(args: &StatsArgs) -> Result<()> {
    let corpus = read_amr(&args.input.corpus, args.input.collapse_spans, false)?;
    let alignments = alignment_stats(&corpus.entries);
    let outcomes: Vec<_> = corpus.entries.par_iter().map(run_oracle).collect();
    let mut report = CoverageReport::default();
    for (entry, outcome) in corpus.entries.iter().zip(&outcomes) {
        report.add(entry, outcome.as_ref());
    }
    println!("graphs\t{}", alignments.graphs);
    println!(
        "graphs with unaligned nodes\t{:.2}%",
        100.0 * alignments.unaligned_graph_rate()
    );
    println!(
        "alignment completion rate\t{:.2}%",
        100.0 * alignments.completion_rate()
    );
    for (k, n) in alignments
        .histogram
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
    {
        println!("graphs with {k} unaligned\t{n}");
    }
    print_coverage(&report, corpus.warnings.len());
    Ok(())
}

fn vocab(args: &VocabArgs) -> Result<()> {
    let corpus = read_actions(&args.actions)?;
    let vocab = match args.mode {
        Mode::Sep => build_sep_vocab(&corpus),
        Mode::Joint => {
            let Some(merges_path) = &args.merges else {
                bail!("--mode joint needs --merges to store the learned merges");
            };
            let names = corpus.iter().flatten().filter_map(|a| match a {
                Action::Node(n) => Some(n.as_str()),
                _ => None,
            });
            let seg = BpeSegmenter::train(names, args.num_merges);
            let mut out = create(merges_path)?;
            seg.write(&mut out)?;
            out.flush()?;
            build_joint_vocab(&corpus, Arc::new(seg), args.min_node_freq)?
        }
    };
    let mut out = create(&args.output)?;
    vocab.write(&mut out)?;
    out.flush()?;
    eprintln!(
        "{} symbols ({} whole node names)",
        vocab.len(),
        vocab.whole_nodes()
    );
    Ok(())
}

fn export(args: &ExportArgs) -> Result<()> {
    let pairs = read_parallel(&args.data)?;
    let vocab = read_vocab(&args.vocab)?;
    let pooling = args
        .pooling_merges
        .as_deref()
        .map(read_merges)
        .transpose()?;
    let records: Vec<_> = pairs
        .par_iter()
        .map(|(tokens, actions)| {
            let steps = export_features(tokens, actions, &vocab)?;
            let ranges = pooling
                .as_ref()
                .map(|seg| word_piece_pooling_map(tokens, seg.as_ref()))
                .transpose()?;
            Ok::<_, amr_transit::features::FeatureError>((steps, ranges))
        })
        .collect();
    let mut out = output(args.output.as_deref())?;
    for (i, ((tokens, _), record)) in pairs.iter().zip(records).enumerate() {
        let (steps, ranges) =
            record.with_context(|| format!("{} line {}", args.data.actions.display(), i + 1))?;
        write_jsonl(
            &mut out,
            &(i + 1).to_string(),
            tokens,
            ranges.as_deref(),
            &steps,
        )?;
    }
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .context("starting worker threads")?;
    match &cli.command {
        Command::Oracle(a) => oracle(a),
        Command::Play(a) => play(a),
        Command::Parse(a) => parse(a),
        Command::TrainBaseline(a) => train(a),
        Command::Eval(a) => eval(a, cli.seed),
        Command::Stats(a) => stats(a),
        Command::Vocab(a) => vocab(a),
        Command::ExportFeatures(a) => export(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
