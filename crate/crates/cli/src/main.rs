//! Command-line front end for the receptor masked-language-model pipeline:
//! dataset preparation, training, evaluation, prediction, attention and
//! embedding analyses, the SVM baseline, and gradient checking.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gpcrlm::checkpoint::{read_checkpoint, write_checkpoint};
use gpcrlm::corpus::{
    self, build_motif_dataset, build_span_dataset, corpus_stats, filter_corpus, CorpusFormat,
    MotifKind, ProteinRecord, RawMaskedPair,
};
use gpcrlm::interpret;
use gpcrlm::model::{grad_check_model, ModelConfig};
use gpcrlm::svm;
use gpcrlm::tokenizer::{self, Vocab};
use gpcrlm::train::{self, TrainConfig};
use gpcrlm::tsne::{tsne, TsneConfig};

#[derive(Parser)]
#[command(
    name = "gpcrlm",
    about = "Masked-language modeling of GPCR sequences: datasets, training, analysis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a motif-masked pair dataset from a corpus file.
    Prepare {
        /// Corpus file (`.csv` with `id,receptor_class,sequence`, or FASTA).
        #[arg(long)]
        input: PathBuf,
        /// Conserved motif: npxxy, cwxp, or edry.
        #[arg(long)]
        motif: String,
        /// Output directory for `pairs.csv`.
        #[arg(long)]
        out: PathBuf,
        /// Length filter applied before motif search.
        #[arg(long, default_value_t = 370)]
        max_len: usize,
        /// Input format override (csv or fasta).
        #[arg(long)]
        format: Option<String>,
    },
    /// Build a contiguous-span masked dataset from a corpus file.
    PrepareSpan {
        #[arg(long)]
        input: PathBuf,
        /// First masked sequence index.
        #[arg(long, default_value_t = 100)]
        start: usize,
        /// Number of contiguous masked positions.
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 370)]
        max_len: usize,
        #[arg(long)]
        format: Option<String>,
    },
    /// Sequence-length histogram and per-class counts of a corpus file.
    Stats {
        #[arg(long)]
        input: PathBuf,
        /// Write `length_histogram.csv` and `class_counts.csv` here instead
        /// of printing.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Apply the length filter before computing statistics.
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        format: Option<String>,
    },
    /// Train on a prepared pair dataset and write a checkpoint.
    Train {
        /// Dataset directory produced by `prepare`/`prepare-span`.
        #[arg(long)]
        data: PathBuf,
        /// Model hyperparameter file (`key = value`); desk scale if omitted.
        #[arg(long)]
        model_config: Option<PathBuf>,
        /// Training hyperparameter file (`key = value`).
        #[arg(long)]
        train_config: Option<PathBuf>,
        /// Number of replicate runs (seeds seed, seed+1, ...).
        #[arg(long)]
        runs: Option<usize>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a checkpoint on a prepared pair dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Predict masked residues: `'J'` characters in the sequence are masked
    /// and the top-5 residues are printed per mask.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        sequence: String,
    },
    /// Attention, embedding, and mutagenesis analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Reference baselines.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Finite-difference check of the full model gradient.
    Gradcheck {
        /// Model hyperparameter file; the tiny check configuration if
        /// omitted.
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
        #[arg(long, default_value_t = 1e-2)]
        tolerance: f64,
        #[arg(long, default_value_t = 12)]
        seed: u64,
    },
    /// Vocabulary inspection.
    #[command(subcommand)]
    Vocab(VocabCommand),
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Top-k attended residues per head for every masked position, plus the
    /// per-class repetition table.
    Attention(AttentionArgs),
    /// `[CLS]`-embedding extraction and 2-D t-SNE projection.
    Tsne(TsneArgs),
    /// Cross-reference an attention report against mutagenesis data.
    Mutagenesis(MutagenesisArgs),
}

#[derive(Args)]
struct AttentionArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory with `pairs.csv`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Output directory (report.csv, repetition.csv).
    #[arg(long, default_value = "analysis")]
    out: PathBuf,
    /// Optional `id,seq_index,bw_label` annotation file.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Encoder layer to analyze (default: last).
    #[arg(long)]
    layer: Option<usize>,
    /// Also render a per-head heatmap SVG of one example (padded to the
    /// model maximum so the padding region is visible).
    #[arg(long)]
    heatmap_svg: Option<PathBuf>,
    /// Sequence id for the heatmap (default: first pair in the dataset).
    #[arg(long)]
    id: Option<String>,
}

#[derive(Args)]
struct TsneArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Corpus file with the sequences to embed.
    #[arg(long)]
    input: PathBuf,
    /// Coordinates CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Optional scatter plot.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, default_value_t = 15.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 200.0)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct MutagenesisArgs {
    /// `report.csv` from `analyze attention`.
    #[arg(long)]
    report: PathBuf,
    /// `id,seq_index,bw_label` annotation file.
    #[arg(long)]
    annotations: PathBuf,
    /// `class,bw,effect` mutagenesis file.
    #[arg(long)]
    mutagenesis: PathBuf,
    /// Neighborhood radius (sequence positions) for near matches.
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Optional corpus file to resolve neighboring residue letters.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum BaselineCommand {
    /// One-vs-rest linear SVM over one-hot features of the masked inputs.
    Svm {
        /// Dataset directory with `pairs.csv`.
        #[arg(long)]
        data: PathBuf,
        /// Fixed encoding length for the one-hot features.
        #[arg(long, default_value_t = 372)]
        max_len: usize,
        #[arg(long, default_value_t = 1e-4)]
        lambda: f64,
        #[arg(long, default_value_t = 20000)]
        steps: usize,
        #[arg(long, default_value_t = 0.75)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Persist the trained model in the binary tensor container.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum VocabCommand {
    /// Emit the vocabulary as `index,token` CSV.
    Dump,
}

fn main() -> ExitCode {
    // Default SIGPIPE disposition so `gpcrlm ... | head` exits quietly
    // instead of panicking on a closed pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn detect_format(path: &Path, explicit: &Option<String>) -> Result<CorpusFormat> {
    if let Some(f) = explicit {
        return match f.to_ascii_lowercase().as_str() {
            "csv" => Ok(CorpusFormat::Csv),
            "fasta" | "fa" => Ok(CorpusFormat::Fasta),
            other => bail!("unknown format `{other}` (expected csv or fasta)"),
        };
    }
    CorpusFormat::from_path(path)
        .with_context(|| format!("cannot infer format of {} (use --format)", path.display()))
}

fn read_corpus(path: &Path, format: &Option<String>) -> Result<Vec<ProteinRecord>> {
    let format = detect_format(path, format)?;
    Ok(corpus::parse_corpus(path, format)?)
}

fn load_pairs(data: &Path) -> Result<Vec<(String, RawMaskedPair)>> {
    let path = if data.is_dir() {
        data.join("pairs.csv")
    } else {
        data.to_path_buf()
    };
    Ok(corpus::pairs_from_csv(&path)?)
}

fn write_pairs(out: &Path, records: &[ProteinRecord], pairs: Vec<RawMaskedPair>) -> Result<PathBuf> {
    let class_of: BTreeMap<&str, &str> = records
        .iter()
        .map(|r| (r.id.as_str(), r.receptor_class.as_str()))
        .collect();
    let rows: Vec<(String, RawMaskedPair)> = pairs
        .into_iter()
        .map(|p| {
            let class = class_of.get(p.source_id.as_str()).unwrap_or(&"").to_string();
            (class, p)
        })
        .collect();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("pairs.csv");
    fs::write(&path, corpus::pairs_to_csv(&rows))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Prepare {
            input,
            motif,
            out,
            max_len,
            format,
        } => {
            let kind = MotifKind::parse(&motif)
                .with_context(|| format!("unknown motif `{motif}` (npxxy, cwxp, edry)"))?;
            let records = read_corpus(&input, &format)?;
            let kept = filter_corpus(&records, max_len);
            let pairs = build_motif_dataset(&kept, kind)?;
            let path = write_pairs(&out, &kept, pairs)?;
            let n = corpus::pairs_from_csv(&path)?.len();
            println!(
                "{} records read, {} kept after length filter ({max_len}), {} {} pairs -> {}",
                records.len(),
                kept.len(),
                n,
                kind.name(),
                path.display()
            );
        }
        Command::PrepareSpan {
            input,
            start,
            count,
            out,
            max_len,
            format,
        } => {
            let records = read_corpus(&input, &format)?;
            let kept = filter_corpus(&records, max_len);
            let pairs = build_span_dataset(&kept, start, count)?;
            let path = write_pairs(&out, &kept, pairs)?;
            let n = corpus::pairs_from_csv(&path)?.len();
            println!(
                "{} records read, {} kept, {} span pairs (mask [{start}, {})) -> {}",
                records.len(),
                kept.len(),
                n,
                start + count,
                path.display()
            );
        }
        Command::Stats {
            input,
            out,
            max_len,
            format,
        } => {
            let mut records = read_corpus(&input, &format)?;
            if let Some(max_len) = max_len {
                records = filter_corpus(&records, max_len);
            }
            let stats = corpus_stats(&records);
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    fs::write(dir.join("length_histogram.csv"), stats.histogram_csv())?;
                    fs::write(dir.join("class_counts.csv"), stats.class_counts_csv())?;
                    println!(
                        "{} records; wrote length_histogram.csv and class_counts.csv to {}",
                        records.len(),
                        dir.display()
                    );
                }
                None => {
                    print!("{}", stats.histogram_csv());
                    println!();
                    print!("{}", stats.class_counts_csv());
                }
            }
        }
        Command::Train {
            data,
            model_config,
            train_config,
            runs,
            out,
            seed,
        } => {
            let pairs: Vec<RawMaskedPair> =
                load_pairs(&data)?.into_iter().map(|(_, p)| p).collect();
            let model_cfg = match model_config {
                Some(path) => config::model_config_from_file(&path)?,
                None => ModelConfig::desk(),
            };
            let mut train_cfg = match train_config {
                Some(path) => config::train_config_from_file(&path)?,
                None => TrainConfig::default(),
            };
            train_cfg.seed = seed;
            if let Some(runs) = runs {
                train_cfg.n_runs = runs;
            }
            let (model, metrics) = train::train(&model_cfg, &train_cfg, &pairs)?;
            write_checkpoint(&model, &out)?;
            let metrics_path = out.with_extension("metrics.csv");
            let summary_path = out.with_extension("summary.json");
            fs::write(&metrics_path, metrics.epochs_csv())?;
            fs::write(&summary_path, metrics.summary_text())?;
            for f in &metrics.runs {
                println!(
                    "run {}: train_loss {:.4} train_acc {:.4} test_loss {:.4} test_acc {:.4}",
                    f.run, f.train_loss, f.train_acc, f.test_loss, f.test_acc
                );
            }
            let s = &metrics.summary;
            println!(
                "summary: test_loss {:.4} ± {:.4}, test_acc {:.4} ± {:.4}",
                s.test_loss.mean, s.test_loss.std, s.test_acc.mean, s.test_acc.std
            );
            println!(
                "checkpoint -> {}; metrics -> {}; summary -> {}",
                out.display(),
                metrics_path.display(),
                summary_path.display()
            );
        }
        Command::Eval { ckpt, data } => {
            let model = read_checkpoint(&ckpt)?;
            let pairs: Vec<RawMaskedPair> =
                load_pairs(&data)?.into_iter().map(|(_, p)| p).collect();
            let (loss, acc) = train::evaluate(&model, &pairs)?;
            println!("examples {}", pairs.len());
            println!("loss {loss:.6}");
            println!("accuracy {acc:.6}");
        }
        Command::Predict { ckpt, sequence } => {
            let model = read_checkpoint(&ckpt)?;
            let vocab = Vocab::new();
            let sequence = sequence.trim().to_ascii_uppercase();
            let example = tokenizer::encode_query(
                &vocab,
                "query",
                &sequence,
                sequence.len() + 1,
            )?;
            if example.mask_positions.is_empty() {
                bail!("sequence contains no 'J' mask characters");
            }
            if example.input_ids.len() > model.config().max_len {
                bail!(
                    "sequence needs {} tokens but the checkpoint allows {}",
                    example.input_ids.len(),
                    model.config().max_len
                );
            }
            let out = model.infer(&example, false)?;
            for &pos in &example.mask_positions {
                let row = out.logits.row(pos);
                let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let exps: Vec<f64> = row.iter().map(|&v| ((v - max) as f64).exp()).collect();
                let denom: f64 = exps.iter().sum();
                let mut residues: Vec<(u32, f64)> = (5u32..30)
                    .map(|id| (id, exps[id as usize] / denom))
                    .collect();
                residues.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                println!("mask at sequence index {} (token {pos}):", pos - 1);
                for (rank, (id, p)) in residues.iter().take(5).enumerate() {
                    println!("  {}. {}  {:.4}", rank + 1, vocab.token(*id)?, p);
                }
            }
        }
        Command::Analyze(cmd) => run_analyze(cmd)?,
        Command::Baseline(BaselineCommand::Svm {
            data,
            max_len,
            lambda,
            steps,
            ratio,
            seed,
            out,
        }) => run_svm(&data, max_len, lambda, steps, ratio, seed, out.as_deref())?,
        Command::Gradcheck {
            model_config,
            h,
            tolerance,
            seed,
        } => {
            let cfg = match model_config {
                Some(path) => config::model_config_from_file(&path)?,
                None => ModelConfig::tiny(),
            };
            let report = grad_check_model::<f32>(&cfg, seed, h)?;
            for e in &report.entries {
                if e.resolvable {
                    println!("{:30} rel_err {:.3e}", e.name, e.rel_err);
                } else {
                    println!(
                        "{:30} below FD resolution (gradient ≈ 0, |Δ| {:.1e})",
                        e.name, e.max_abs_diff
                    );
                }
            }
            if report.passes(tolerance) {
                println!(
                    "PASS, max rel err {:.3e} < tol {tolerance:.1e}",
                    report.max_rel_err
                );
            } else {
                println!(
                    "FAIL, max rel err {:.3e} >= tol {tolerance:.1e}",
                    report.max_rel_err
                );
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Vocab(VocabCommand::Dump) => {
            println!("index,token");
            for (i, t) in Vocab::new().dump() {
                println!("{i},{t}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_analyze(cmd: AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::Attention(args) => {
            let model = read_checkpoint(&args.ckpt)?;
            let rows = load_pairs(&args.data)?;
            let annotations = match &args.annotations {
                Some(path) => interpret::parse_annotations_csv(path)?,
                None => BTreeMap::new(),
            };
            let vocab = Vocab::new();
            let mut all_entries = Vec::new();
            let mut per_example = Vec::new();
            for (class, pair) in &rows {
                let example = tokenizer::encode(&vocab, pair, pair.input_seq.len() + 1)?;
                let mut entries =
                    interpret::top_k_attention(&model, &example, args.k, args.layer)?;
                if let Some(ann) = annotations.get(&pair.source_id) {
                    interpret::apply_annotations(&mut entries, ann);
                }
                per_example.push((class.clone(), pair.restored(), entries.clone()));
                all_entries.extend(entries);
            }
            fs::create_dir_all(&args.out)?;
            let report_path = args.out.join("report.csv");
            fs::write(&report_path, interpret::report_csv(&all_entries))?;
            let repetition = interpret::repetition_table(&per_example, 6);
            let repetition_path = args.out.join("repetition.csv");
            fs::write(&repetition_path, interpret::repetition_csv(&repetition))?;
            println!(
                "{} entries over {} examples -> {} and {}",
                all_entries.len(),
                rows.len(),
                report_path.display(),
                repetition_path.display()
            );
            if let Some(svg_path) = &args.heatmap_svg {
                let (_, pair) = match &args.id {
                    Some(id) => rows
                        .iter()
                        .find(|(_, p)| &p.source_id == id)
                        .with_context(|| format!("id {id} not found in dataset"))?,
                    None => rows.first().context("dataset is empty")?,
                };
                let example = tokenizer::encode(&vocab, pair, model.config().max_len)?;
                let heatmap = interpret::attention_heatmap(&model, &example)?;
                fs::write(svg_path, &heatmap.svg)?;
                println!(
                    "heatmap of {} ({} heads) -> {}",
                    pair.source_id,
                    heatmap.matrices.len(),
                    svg_path.display()
                );
            }
        }
        AnalyzeCommand::Tsne(args) => {
            let model = read_checkpoint(&args.ckpt)?;
            let records = read_corpus(&args.input, &args.format)?;
            let cls = interpret::extract_cls(&model, &records)?;
            for id in &cls.skipped {
                eprintln!("warning: skipped {id} (cannot encode under model max_len)");
            }
            let cfg = TsneConfig {
                perplexity: args.perplexity,
                iterations: args.iterations,
                learning_rate: args.learning_rate,
                seed: args.seed,
                ..TsneConfig::default()
            };
            let result = tsne(&cls.rows, &cfg)?;
            fs::write(
                &args.out,
                interpret::coords_csv(&cls.ids, &cls.classes, &result.coords),
            )?;
            println!(
                "{} points embedded; KL {:.4} -> {:.4}; coords -> {}",
                cls.ids.len(),
                result.kl_trace.first().unwrap_or(&0.0),
                result.kl_trace.last().unwrap_or(&0.0),
                args.out.display()
            );
            if let Some(svg_path) = &args.svg {
                fs::write(svg_path, interpret::scatter_svg(&cls.classes, &result.coords))?;
                println!("scatter -> {}", svg_path.display());
            }
        }
        AnalyzeCommand::Mutagenesis(args) => {
            let entries = interpret::parse_report_csv(&args.report)?;
            let annotations = interpret::parse_annotations_csv(&args.annotations)?;
            let records = interpret::parse_mutagenesis_csv(&args.mutagenesis)?;
            let sequences: BTreeMap<String, String> = match &args.input {
                Some(path) => read_corpus(path, &args.format)?
                    .into_iter()
                    .map(|r| (r.id, r.sequence))
                    .collect(),
                None => BTreeMap::new(),
            };
            let rows = interpret::mutagenesis_match(
                &entries,
                &sequences,
                &annotations,
                &records,
                args.window,
            );
            let csv = interpret::match_csv(&rows);
            match &args.out {
                Some(path) => {
                    fs::write(path, csv)?;
                    println!("{} rows -> {}", rows.len(), path.display());
                }
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn run_svm(
    data: &Path,
    max_len: usize,
    lambda: f64,
    steps: usize,
    ratio: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let pairs: Vec<RawMaskedPair> = load_pairs(data)?.into_iter().map(|(_, p)| p).collect();
    let (train_pairs, test_pairs) = corpus::split_dataset(&pairs, ratio, seed)?;
    let vocab = Vocab::new();
    let instances = |pairs: &[RawMaskedPair]| -> Result<(Vec<Vec<f32>>, Vec<u32>)> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for pair in pairs {
            let example = tokenizer::encode(&vocab, pair, max_len)?;
            let f = svm::featurize(&example);
            for &pos in &example.mask_positions {
                let label = example.label_ids[pos];
                features.push(f.clone());
                labels.push(label as u32);
            }
        }
        Ok((features, labels))
    };
    let (train_f, train_l) = instances(&train_pairs)?;
    let (test_f, test_l) = instances(&test_pairs)?;
    let cfg = svm::SvmConfig {
        lambda,
        steps,
        seed,
        ..svm::SvmConfig::default()
    };
    let model = svm::svm_train(&train_f, &train_l, &cfg)?;
    let accuracy = |features: &[Vec<f32>], labels: &[u32]| -> Result<f64> {
        let mut correct = 0usize;
        for (f, &l) in features.iter().zip(labels) {
            if svm::svm_predict(&model, f)? == l {
                correct += 1;
            }
        }
        Ok(correct as f64 / labels.len() as f64)
    };
    // Majority baseline: most frequent training label, scored on test.
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &l in &train_l {
        *counts.entry(l).or_insert(0) += 1;
    }
    let majority = counts
        .iter()
        .max_by_key(|(_, &c)| c)
        .map(|(&l, _)| l)
        .context("no training labels")?;
    let majority_acc =
        test_l.iter().filter(|&&l| l == majority).count() as f64 / test_l.len() as f64;
    println!(
        "classes {:?}",
        model
            .classes
            .iter()
            .map(|&c| vocab.token(c).unwrap_or("?"))
            .collect::<Vec<_>>()
    );
    println!("train instances {}", train_l.len());
    println!("train_accuracy {:.6}", accuracy(&train_f, &train_l)?);
    println!("test_accuracy {:.6}", accuracy(&test_f, &test_l)?);
    println!(
        "majority_baseline {:.6} (class {})",
        majority_acc,
        vocab.token(majority)?
    );
    if let Some(path) = out {
        let container = gpcrlm::checkpoint::Container {
            meta: vec![
                ("kind".into(), "svm".into()),
                ("lambda".into(), lambda.to_string()),
                ("feature_dim".into(), model.feature_dim.to_string()),
                (
                    "classes".into(),
                    model
                        .classes
                        .iter()
                        .map(|c| c.to_string())
                        .collect::<Vec<_>>()
                        .join(";"),
                ),
            ],
            tensors: model
                .classes
                .iter()
                .zip(&model.weights)
                .map(|(c, w)| {
                    (
                        format!("weight.{c}"),
                        gpcrlm::tensor::Tensor::new(vec![w.len()], w.clone()).unwrap(),
                    )
                })
                .chain(std::iter::once((
                    "bias".to_string(),
                    gpcrlm::tensor::Tensor::new(vec![model.biases.len()], model.biases.clone())
                        .unwrap(),
                )))
                .collect(),
        };
        gpcrlm::checkpoint::write_container(path, &container)?;
        println!("model -> {}", path.display());
    }
    Ok(())
}
