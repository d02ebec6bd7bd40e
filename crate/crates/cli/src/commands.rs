use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::json;

use fincorpus::concat::{self, ConcatBuild, ConcatConfig, RejectReason};
use fincorpus::corpus::{self, AgreementLevel, CorpusStats, SplitRatios, TextEncoding};
use fincorpus::eval::{self, ConfusionMatrix, MetricsReport, Prediction};
use fincorpus::freeze::{self, EncoderConfig};
use fincorpus::nsp::{self, NspLabel};
use fincorpus::scoring::{score_batch, Backend, BackendKind, NspScorer, SentimentScorer};
use fincorpus::tokenization::{self, Vocabulary, WordPiece};
use fincorpus::{LabeledSentence, SentimentLabel};

use crate::artifacts::{self, Run, MANIFEST_NAME};
use crate::config::{self, FileConfig};
use crate::*;

const SENTIMENT_CLASSES: [&str; 3] = ["negative", "neutral", "positive"];
const NSP_CLASSES: [&str; 2] = ["notNext", "isNext"];
const DEFAULT_OUT_DIR: &str = "out";

/// Replayed outputs differ from the recorded digests.
#[derive(Debug)]
pub struct ReplayMismatch(pub Vec<String>);

impl std::fmt::Display for ReplayMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "replay differs from manifest: {}", self.0.join(", "))
    }
}

impl std::error::Error for ReplayMismatch {}

struct Context_ {
    seed: u64,
    jobs: usize,
    config: FileConfig,
}

pub fn dispatch(cli: Cli, argv: &[OsString]) -> Result<()> {
    let config = match &cli.config {
        Some(path) => config::load(path)?,
        None => FileConfig::default(),
    };
    let ctx = Context_ {
        seed: cli.seed,
        jobs: cli.jobs as usize,
        config,
    };
    if let Command::Replay(args) = &cli.command {
        return replay(args, cli.out_dir.as_deref(), cli.quiet);
    }
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let name = subcommand_name(&cli.command);
    let mut run = Run::new(&out_dir, name, recorded_argv(argv), ctx.seed, ctx.jobs)?.quiet(cli.quiet);
    match &cli.command {
        Command::Ingest(a) => ingest(&mut run, a)?,
        Command::Stats(a) => stats(&mut run, a)?,
        Command::Split(a) => split(&mut run, &ctx, a)?,
        Command::NspPairs(a) => nsp_pairs(&mut run, &ctx, a)?,
        Command::Concat(a) => concat_cmd(&mut run, &ctx, a)?,
        Command::TokenizeStats(a) => tokenize_stats(&mut run, a)?,
        Command::Evaluate(a) => evaluate(&mut run, &ctx, a)?,
        Command::Sweep(a) => sweep(&mut run, &ctx, a)?,
        Command::FreezeTable(a) => freeze_table(&mut run, &ctx, a)?,
        Command::Merge(a) => merge(&mut run, a)?,
        Command::SynthIngest(a) => synth_ingest(&mut run, a, cli.quiet)?,
        Command::Replay(_) => unreachable!("handled above"),
    }
    run.finish()?;
    Ok(())
}

fn subcommand_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Ingest(_) => "ingest",
        Command::Stats(_) => "stats",
        Command::Split(_) => "split",
        Command::NspPairs(_) => "nsp-pairs",
        Command::Concat(_) => "concat",
        Command::TokenizeStats(_) => "tokenize-stats",
        Command::Evaluate(_) => "evaluate",
        Command::Sweep(_) => "sweep",
        Command::FreezeTable(_) => "freeze-table",
        Command::Merge(_) => "merge",
        Command::SynthIngest(_) => "synth-ingest",
        Command::Replay(_) => "replay",
    }
}

/// Arguments after the program name without `--out-dir` and `--quiet`, so a
/// replay into another directory records the same manifest.
fn recorded_argv(argv: &[OsString]) -> Vec<String> {
    let mut out = Vec::new();
    let mut iter = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned());
    while let Some(arg) = iter.next() {
        if arg == "--out-dir" {
            iter.next();
        } else if !arg.starts_with("--out-dir=") && arg != "--quiet" && arg != "-q" {
            out.push(arg);
        }
    }
    out
}

fn read_dataset(run: &mut Run, path: &Path) -> Result<Vec<LabeledSentence>> {
    let bytes = run.read_input(path)?;
    let records = corpus::read_dataset(&bytes[..]).with_context(|| format!("in {}", path.display()))?;
    corpus::validate_dataset(&records).with_context(|| format!("in {}", path.display()))?;
    Ok(records)
}

fn dataset_bytes(records: &[LabeledSentence]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    corpus::write_dataset(&mut buf, records)?;
    Ok(buf)
}

fn load_tokenizer(run: &mut Run, args: &TokenizerArgs) -> Result<WordPiece> {
    let vocab = match &args.vocab {
        Some(path) => {
            let bytes = run.read_input(path)?;
            Vocabulary::load(&bytes).with_context(|| format!("in vocabulary {}", path.display()))?
        }
        None => Vocabulary::bundled_uncased(),
    };
    Ok(WordPiece::new(vocab).with_lowercase(!args.cased))
}

fn make_backend(ctx: &Context_, args: &BackendArgs) -> Result<Backend> {
    let mut cfg = ctx.config.backend.clone();
    if let Some(kind) = args.backend {
        cfg.kind = match kind {
            BackendChoice::Mock => BackendKind::Mock,
            BackendChoice::Remote => BackendKind::Remote,
        };
    }
    if let Some(endpoint) = &args.endpoint {
        cfg.endpoint = Some(endpoint.clone());
    }
    cfg.max_in_flight = cfg.max_in_flight.min(ctx.jobs).max(1);
    let cfg = cfg.with_env_override();
    let backend = Backend::from_config(&cfg)?;
    if let Backend::Remote(r) = &backend {
        let health = r.health().context("scoring backend health check")?;
        tracing::info!(endpoint = ?cfg.endpoint, status = %health.status, model = %health.model, "scoring backend ready");
    }
    Ok(backend)
}

fn stats_table(rows: &[(String, CorpusStats)], first_column: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>10} {:>10} {:>10} {:>8}",
        first_column, "negative %", "neutral %", "positive %", "count"
    );
    for (name, s) in rows {
        let r = s.rounded();
        let _ = writeln!(
            out,
            "{:<28} {:>10.1} {:>10.1} {:>10.1} {:>8}",
            name, r.pct_negative, r.pct_neutral, r.pct_positive, r.count
        );
    }
    out
}

fn stats_csv(rows: &[(String, CorpusStats)], first_column: &str) -> String {
    let mut out = format!("{first_column},count,pct_negative,pct_neutral,pct_positive\n");
    for (name, s) in rows {
        let r = s.rounded();
        let _ = writeln!(out, "{name},{},{:.1},{:.1},{:.1}", r.count, r.pct_negative, r.pct_neutral, r.pct_positive);
    }
    out
}

fn write_stats(run: &mut Run, rows: &[(String, CorpusStats)], first_column: &str) -> Result<()> {
    run.write("stats.csv", stats_csv(rows, first_column))?;
    let json: Vec<_> = rows.iter().map(|(name, s)| json!({ first_column: name, "stats": s })).collect();
    run.write_json("stats.json", &json)?;
    run.write_table("stats.txt", &stats_table(rows, first_column))
}

fn ingest(run: &mut Run, a: &IngestArgs) -> Result<()> {
    let encoding = TextEncoding::from_str(&a.encoding)?;
    let path = match (&a.input, &a.phrasebank_dir, a.agreement) {
        (Some(p), _, _) => p.clone(),
        (None, Some(dir), Some(level)) => dir.join(AgreementLevel::try_from(level)?.phrasebank_file_name()),
        _ => bail!("either --input or --phrasebank-dir with --agreement is required"),
    };
    let raw = run.read_input(&path)?;
    let records = corpus::parse_phrasebank(&raw, encoding).with_context(|| format!("in {}", path.display()))?;
    run.write("dataset.jsonl", dataset_bytes(&records)?)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    write_stats(run, &[(name, corpus::label_distribution(&records))], "dataset")
}

fn stats(run: &mut Run, a: &StatsArgs) -> Result<()> {
    let mut rows = Vec::new();
    if let Some(dir) = &a.phrasebank_dir {
        let encoding = TextEncoding::from_str(&a.encoding)?;
        for level in [100u8, 75, 66, 50] {
            let file = dir.join(AgreementLevel::try_from(level)?.phrasebank_file_name());
            let raw = run.read_input(&file)?;
            let records = corpus::parse_phrasebank(&raw, encoding).with_context(|| format!("in {}", file.display()))?;
            rows.push((format!("{level}%"), corpus::label_distribution(&records)));
        }
        return write_stats(run, &rows, "agreement");
    }
    for path in &a.dataset {
        let records = read_dataset(run, path)?;
        rows.push((path.display().to_string(), corpus::label_distribution(&records)));
    }
    write_stats(run, &rows, "dataset")
}

fn parse_ratios(s: &str) -> Result<SplitRatios> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("ratios {s:?} are not numbers"))?;
    let [train, val, test] = parts[..] else {
        bail!("--ratios needs three comma-separated values, got {s:?}");
    };
    Ok(SplitRatios::new(train, val, test)?)
}

fn split(run: &mut Run, ctx: &Context_, a: &SplitArgs) -> Result<()> {
    let ratios = parse_ratios(&a.ratios)?;
    let records = read_dataset(run, &a.dataset)?;
    let split = corpus::split_dataset(&records, ratios, ctx.seed)?;
    let parts = [("train", &split.train), ("validation", &split.validation), ("test", &split.test)];
    let mut csv = String::from("split,count,negative,neutral,positive\n");
    let mut table = format!(
        "stratified split, ratios {}/{}/{} ({}), seed {}\n{:<12} {:>8} {:>9} {:>9} {:>9}\n",
        ratios.train,
        ratios.validation,
        ratios.test,
        if a.ratios == "0.8,0.1,0.1" { "default" } else { "user supplied" },
        ctx.seed,
        "split",
        "count",
        "negative",
        "neutral",
        "positive"
    );
    for (name, part) in parts {
        run.write(&format!("{name}.jsonl"), dataset_bytes(part)?)?;
        let mut counts = [0usize; 3];
        for r in part.iter() {
            counts[r.label.index()] += 1;
        }
        let _ = writeln!(csv, "{name},{},{},{},{}", part.len(), counts[0], counts[1], counts[2]);
        let _ = writeln!(table, "{name:<12} {:>8} {:>9} {:>9} {:>9}", part.len(), counts[0], counts[1], counts[2]);
    }
    run.write("split_summary.csv", csv)?;
    run.write_table("split_summary.txt", &table)
}

fn pairs_bytes(pairs: &[nsp::SentencePair]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    nsp::write_pairs(&mut buf, pairs)?;
    Ok(buf)
}

fn nsp_pairs(run: &mut Run, ctx: &Context_, a: &NspPairsArgs) -> Result<()> {
    let mut shards = Vec::new();
    for path in &a.corpus {
        let text = run.read_input_string(path)?;
        shards.push(nsp::segment_corpus(&text));
    }
    let pairs = nsp::generate_pairs_sharded(&shards, a.target, ctx.seed)?;
    run.write("pairs.jsonl", pairs_bytes(&pairs)?)?;
    let count = |v: &[nsp::SentencePair], l: NspLabel| v.iter().filter(|p| p.label == l).count();
    let mut csv = String::from("set,count,is_next,not_next\n");
    let mut rows = vec![("all", pairs.clone())];
    if a.test_size > 0 {
        let (train, test) = nsp::hold_out_pairs(&pairs, a.test_size, ctx.seed)?;
        run.write("train_pairs.jsonl", pairs_bytes(&train)?)?;
        run.write("test_pairs.jsonl", pairs_bytes(&test)?)?;
        rows.push(("train", train));
        rows.push(("test", test));
    }
    let docs: usize = shards.iter().map(Vec::len).sum();
    let sentences: usize = shards.iter().flatten().map(|d| d.sentences.len()).sum();
    let mut table = format!(
        "{} shard(s), {docs} documents, {sentences} sentences, seed {}\n{:<8} {:>8} {:>8} {:>9}\n",
        shards.len(),
        ctx.seed,
        "set",
        "count",
        "isNext",
        "notNext"
    );
    for (name, set) in &rows {
        let (p, n) = (count(set, NspLabel::IsNext), count(set, NspLabel::NotNext));
        let _ = writeln!(csv, "{name},{},{p},{n}", set.len());
        let _ = writeln!(table, "{name:<8} {:>8} {p:>8} {n:>9}", set.len());
    }
    run.write("pairs_summary.csv", csv)?;
    run.write_table("pairs_summary.txt", &table)
}

fn parse_run_length(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let (lo, hi) = s.split_once('-').unwrap_or((s, s));
    let lo: usize = lo.trim().parse().with_context(|| format!("bad run length {s:?}"))?;
    let hi: usize = hi.trim().parse().with_context(|| format!("bad run length {s:?}"))?;
    Ok(lo..=hi)
}

fn concat_summary(build: &ConcatBuild, method: &str, cfg: &ConcatConfig) -> String {
    let mut out = format!(
        "{method} concatenation, runs {}-{}, cap {} tokens, seed {}\n",
        cfg.run_length.start(),
        cfg.run_length.end(),
        cfg.max_tokens,
        cfg.seed
    );
    let _ = writeln!(out, "{:<10} {:>8} {:>10} {:>10} {:>10}", "label", "samples", "min tok", "max tok", "mean tok");
    for label in SentimentLabel::ALL {
        let n: Vec<usize> = build.samples.iter().filter(|s| s.label == label).map(|s| s.n_tokens).collect();
        let (min, max, mean) = if n.is_empty() {
            (0, 0, 0.0)
        } else {
            (
                *n.iter().min().unwrap(),
                *n.iter().max().unwrap(),
                n.iter().sum::<usize>() as f64 / n.len() as f64,
            )
        };
        let _ = writeln!(out, "{:<10} {:>8} {min:>10} {max:>10} {mean:>10.1}", label.as_str(), n.len());
    }
    let cap = build.rejected.iter().filter(|r| matches!(r.reason, RejectReason::TokenCap { .. })).count();
    let gate = build.rejected.len() - cap;
    let _ = writeln!(out, "rejected runs: {cap} over token cap, {gate} failed NSP gate");
    out
}

fn concat_cmd(run: &mut Run, ctx: &Context_, a: &ConcatArgs) -> Result<()> {
    let records = read_dataset(run, &a.dataset)?;
    let tokenizer = load_tokenizer(run, &a.tokenizer)?;
    let cfg = ConcatConfig {
        max_tokens: a.max_tokens,
        run_length: parse_run_length(&a.run_length)?,
        seed: ctx.seed,
        jobs: ctx.jobs,
    };
    let (build, method) = match a.method {
        MethodChoice::Random => (concat::build_random_concat(&records, &tokenizer, &cfg)?, "random"),
        MethodChoice::Sequential => {
            let backend = make_backend(ctx, &a.backend)?;
            (concat::build_sequential_concat(&records, &backend, &tokenizer, &cfg)?, "sequential")
        }
    };
    run.write("concat.jsonl", dataset_bytes(&build.records())?)?;
    run.write("rejected_runs.csv", build.rejected_csv())?;
    run.write("concat_parts.csv", build.parts_csv())?;
    run.write_table("concat_summary.txt", &concat_summary(&build, method, &cfg))
}

fn tokenize_stats(run: &mut Run, a: &TokenizeStatsArgs) -> Result<()> {
    let records = read_dataset(run, &a.dataset)?;
    let tokenizer = load_tokenizer(run, &a.tokenizer)?;
    let h = tokenization::length_histogram(&records, &tokenizer, a.bin_width)?;
    run.write("histogram.csv", h.to_csv())?;
    run.write_json("histogram.json", &h)?;
    let mut table = format!(
        "{} records, tokens without [CLS]/[SEP]: min {} max {} mean {:.2}\n{:>9} {:>9} {:>8}\n",
        h.n, h.min_tokens, h.max_tokens, h.mean_tokens, "bin_start", "bin_end", "count"
    );
    for (i, c) in h.bin_counts.iter().enumerate() {
        let _ = writeln!(table, "{:>9} {:>9} {c:>8}", h.bin_edges[i], h.bin_edges[i + 1]);
    }
    run.write_table("histogram.txt", &table)
}

#[derive(Deserialize)]
struct PairRecord {
    sentence_a: String,
    sentence_b: String,
    label: u8,
}

#[derive(Serialize)]
struct PredictionOut<'a> {
    id: &'a str,
    actual: &'a str,
    predicted: &'a str,
    probs: &'a [f64],
}

fn classes(task: TaskChoice) -> &'static [&'static str] {
    match task {
        TaskChoice::Sentiment => &SENTIMENT_CLASSES,
        TaskChoice::Nsp => &NSP_CLASSES,
    }
}

fn parse_filter(spec: &str, class_names: &[&str]) -> Result<(usize, usize)> {
    let (a, p) = spec
        .split_once(':')
        .ok_or_else(|| anyhow!("--misclassified expects actual:predicted, got {spec:?}"))?;
    let find = |s: &str| {
        class_names
            .iter()
            .position(|c| c.eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| anyhow!("unknown class {s:?} in --misclassified"))
    };
    Ok((find(a)?, find(p)?))
}

fn evaluate(run: &mut Run, ctx: &Context_, a: &EvaluateArgs) -> Result<()> {
    let task = if a.pairs.is_some() { TaskChoice::Nsp } else { a.task };
    let class_names = classes(task);
    let mut texts: HashMap<String, String> = HashMap::new();

    let predictions: Vec<Prediction> = if let Some(path) = &a.predictions {
        let raw = run.read_input_string(path)?;
        if let Some(ds) = &a.dataset {
            for r in read_dataset(run, ds)? {
                texts.insert(r.id, r.text);
            }
        }
        eval::read_predictions(&raw, class_names)?
    } else if let Some(ds) = &a.dataset {
        let records = read_dataset(run, ds)?;
        let backend = make_backend(ctx, &a.backend)?;
        let scored = score_batch(&records, ctx.jobs, |r| backend.classify_sentiment(&r.text))?;
        let mut out = Vec::with_capacity(records.len());
        for (r, probs) in records.iter().zip(scored) {
            let probs = probs.with_context(|| format!("scoring {}", r.id))?;
            texts.insert(r.id.clone(), r.text.clone());
            out.push(Prediction {
                id: r.id.clone(),
                actual: r.label.index(),
                predicted: probs.argmax().index(),
                probs: Some(probs.to_array().to_vec()),
            });
        }
        out
    } else {
        let path = a.pairs.as_ref().expect("clap requires one input");
        let raw = run.read_input_string(path)?;
        let pairs: Vec<PairRecord> = raw
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("pairs line {}", i + 1)))
            .collect::<Result<_>>()?;
        if let Some(bad) = pairs.iter().position(|p| p.label > 1) {
            bail!("pairs line {}: label must be 0 or 1", bad + 1);
        }
        let backend = make_backend(ctx, &a.backend)?;
        let scored = score_batch(&pairs, ctx.jobs, |p| backend.predict_nsp(&p.sentence_a, &p.sentence_b))?;
        let mut out = Vec::with_capacity(pairs.len());
        for (i, (p, score)) in pairs.iter().zip(scored).enumerate() {
            let score = score.with_context(|| format!("scoring pair {}", i + 1))?;
            let id = format!("pair-{}", i + 1);
            texts.insert(id.clone(), format!("{} || {}", p.sentence_a, p.sentence_b));
            out.push(Prediction {
                id,
                actual: p.label as usize,
                predicted: usize::from(score > concat::NSP_THRESHOLD),
                probs: Some(vec![1.0 - score, score]),
            });
        }
        out
    };

    if a.predictions.is_none() {
        let mut buf = String::new();
        for p in &predictions {
            let line = PredictionOut {
                id: &p.id,
                actual: class_names[p.actual],
                predicted: class_names[p.predicted],
                probs: p.probs.as_deref().unwrap_or(&[]),
            };
            buf.push_str(&serde_json::to_string(&line)?);
            buf.push('\n');
        }
        run.write("predictions.jsonl", buf)?;
    }

    let actual: Vec<usize> = predictions.iter().map(|p| p.actual).collect();
    let predicted: Vec<usize> = predictions.iter().map(|p| p.predicted).collect();
    let cm = ConfusionMatrix::from_indices(class_names, &actual, &predicted)?;
    let report = eval::evaluate(&predictions, class_names)?;
    run.write_json("metrics.json", &json!({ "model": a.model_name, "report": report, "confusion_matrix": cm }))?;
    run.write(
        "metrics.csv",
        format!("model,{}\n{},{}\n", MetricsReport::csv_header(), a.model_name, report.csv_row()),
    )?;
    run.write("confusion.csv", cm.to_csv())?;
    let mut table = report.to_table(&a.model_name);
    table.push('\n');
    table.push_str(&cm.to_table());

    if !a.misclassified.is_empty() {
        let mut buf = String::new();
        for spec in &a.misclassified {
            let filter = parse_filter(spec, class_names)?;
            let hits = eval::list_misclassified(&predictions, &actual, &predicted, filter)?;
            let _ = writeln!(
                table,
                "\n{} predicted as {}: {} record(s)",
                class_names[filter.0],
                class_names[filter.1],
                hits.len()
            );
            for p in hits {
                let text = texts.get(&p.id).map(String::as_str);
                let _ = writeln!(table, "  {} {}", p.id, text.unwrap_or(""));
                let line = json!({
                    "id": p.id,
                    "text": text,
                    "actual": class_names[p.actual],
                    "predicted": class_names[p.predicted],
                });
                buf.push_str(&line.to_string());
                buf.push('\n');
            }
        }
        run.write("misclassified.jsonl", buf)?;
    }
    run.write_table("metrics.txt", &table)
}

fn sweep(run: &mut Run, ctx: &Context_, a: &SweepArgs) -> Result<()> {
    let class_names = classes(a.task);
    let raw = run.read_input_string(&a.predictions)?;
    let predictions = eval::read_predictions(&raw, class_names)?;
    let points = eval::evaluate_by_test_size(&predictions, class_names, &a.sizes, ctx.seed)?;
    run.write("sweep.csv", eval::sweep_csv(&points))?;
    run.write_json("sweep.json", &points)?;
    let mut table = format!(
        "{:>8} {:>8} {:>9} {:>9}\n",
        "size", "loss", "accuracy", "macro f1"
    );
    for p in &points {
        let loss = p.report.loss.map_or("-".to_string(), |l| format!("{l:.4}"));
        let _ = writeln!(table, "{:>8} {loss:>8} {:>9.4} {:>9.4}", p.size, p.report.accuracy, p.report.macro_f1);
    }
    run.write_table("sweep.txt", &table)
}

fn freeze_table(run: &mut Run, ctx: &Context_, a: &FreezeTableArgs) -> Result<()> {
    let mut encoder: EncoderConfig = ctx.config.encoder;
    if let Some(l) = a.layers {
        encoder.layers = l;
    }
    if let Some(c) = a.num_labels {
        encoder.num_labels = c;
    }
    if a.no_pooler {
        encoder.include_pooler = false;
    }
    let table = freeze::freeze_table(&encoder)?;
    run.write("freeze_table.csv", table.to_csv())?;
    run.write_json("freeze_table.json", &table)?;
    let mut finetune = ctx.config.finetune.clone();
    if ctx.config.finetune == Default::default() {
        finetune.seed = ctx.seed;
    }
    finetune.validate()?;
    run.write("finetune_config.json", finetune.to_json() + "\n")?;
    run.write_table("freeze_table.txt", &table.to_table())
}

fn merge(run: &mut Run, a: &MergeArgs) -> Result<()> {
    let mut parts = Vec::new();
    for path in &a.dataset {
        parts.push(read_dataset(run, path)?);
    }
    let merged = corpus::merge_corpora(&parts);
    run.write("merged.jsonl", dataset_bytes(&merged.records)?)?;
    let mut csv = String::from("source,count\n");
    let mut table = format!("{} records\n{:<20} {:>8}\n", merged.records.len(), "source", "count");
    for (source, n) in &merged.source_counts {
        let _ = writeln!(csv, "{source},{n}");
        let _ = writeln!(table, "{:<20} {n:>8}", source.as_str());
    }
    run.write("merge_summary.csv", csv)?;
    run.write_table("merge_summary.txt", &table)
}

fn synth_ingest(run: &mut Run, a: &SynthIngestArgs, quiet: bool) -> Result<()> {
    let raw = run.read_input_string(&a.input)?;
    let input_lines = raw.lines().filter(|l| !l.trim().is_empty()).count();
    let records = corpus::ingest_synthetic(&raw).with_context(|| format!("in {}", a.input.display()))?;
    run.write("synthetic.jsonl", dataset_bytes(&records)?)?;
    let dropped = input_lines - records.len();
    let name = a.input.display().to_string();
    write_stats(run, &[(name, corpus::label_distribution(&records))], "dataset")?;
    if !quiet {
        println!("{} records kept, {dropped} duplicate(s) dropped", records.len());
    }
    Ok(())
}

fn replay(a: &ReplayArgs, out_dir: Option<&Path>, quiet: bool) -> Result<()> {
    let recorded = artifacts::read_manifest(&a.manifest)?;
    if recorded.subcommand == "replay" {
        bail!("cannot replay a replay");
    }
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => a.manifest.parent().unwrap_or(Path::new(".")).join("replay"),
    };
    let mut argv: Vec<OsString> = vec!["fincorpus".into()];
    argv.extend(recorded.argv.iter().map(OsString::from));
    argv.push("--out-dir".into());
    argv.push(dir.clone().into_os_string());
    if quiet {
        argv.push("--quiet".into());
    }
    let cli = Cli::try_parse_from(&argv).context("recorded arguments no longer parse")?;
    dispatch(cli, &argv)?;

    let fresh = artifacts::read_manifest(&dir.join(MANIFEST_NAME))?;
    let mut mismatched = Vec::new();
    for (old, new) in recorded.inputs.iter().zip(&fresh.inputs) {
        if old != new {
            mismatched.push(format!("input {}", old.path));
        }
    }
    let fresh_outputs: HashMap<&str, &str> = fresh.outputs.iter().map(|o| (o.path.as_str(), o.sha256.as_str())).collect();
    for out in &recorded.outputs {
        let status = match fresh_outputs.get(out.path.as_str()) {
            Some(d) if *d == out.sha256 => "identical",
            Some(_) => {
                mismatched.push(out.path.clone());
                "DIFFERS"
            }
            None => {
                mismatched.push(out.path.clone());
                "MISSING"
            }
        };
        if !quiet {
            eprintln!("{:<24} {status}", out.path);
        }
    }
    if recorded.outputs.len() != fresh.outputs.len() {
        mismatched.push("output set".into());
    }
    if recorded.toolkit_version != fresh.toolkit_version {
        eprintln!(
            "note: recorded with toolkit {}, replayed with {}",
            recorded.toolkit_version, fresh.toolkit_version
        );
    }
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(ReplayMismatch(mismatched).into())
    }
}
