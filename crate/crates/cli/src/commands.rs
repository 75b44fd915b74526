use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use vcg_core::contrastive::{
    gradcheck_seed, synthetic_clusters, train_toy, write_trace_csv, ItemSource, SyntheticConfig, ToyDataset,
    TrainConfig, GRADCHECK_TOLERANCE,
};
use vcg_core::filtering::{apply_filter, threshold_sweep, DEFAULT_THRESHOLD};
use vcg_core::graph::{graph_stats, ingest_jsonl, load_embeddings, read_edge_texts_jsonl, EmbeddingMatrix, VisualCommonsenseGraph};
use vcg_core::metrics::{
    entropy_histogram, evaluate, load_corpus, recall_at_ks, truth_by_id, EvalInputs, References, UnigramModel,
};
use vcg_core::subsets::{build_novel_subset_from_texts, build_unique_subset, SubsetKind, SubsetSpec, DEFAULT_MIN_DESCRIPTIONS};

use crate::config::{parse_list, Settings};
use crate::{CliError, Command, GraphInput};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cmd: Command, s: &Settings) -> Result<()> {
    match cmd {
        Command::Ingest(a) => {
            let (g, _) = load_graph(s, a.input)?;
            let out: PathBuf = s.req(a.out, "out")?;
            g.save_jsonl(&out)?;
            eprintln!(
                "ingest: {} images, {} edges, {} descriptions -> {}",
                g.num_images(),
                g.num_edges(),
                g.num_descriptions(),
                out.display()
            );
        }
        Command::Stats(a) => {
            let (g, _) = load_graph(s, a.input)?;
            let report = graph_stats(&g, s.or(a.top_k, "top-k", 10)?);
            emit_json(s.opt(a.report, "report")?.as_deref(), &report)?;
            eprintln!("stats: {} images, {} edges, {} descriptions", report.images, report.edges, report.descriptions);
        }
        Command::Filter(a) => {
            let t = s.or(a.t, "t", DEFAULT_THRESHOLD)?;
            let out: PathBuf = s.req(a.out, "out")?;
            let report_path: Option<PathBuf> = s.opt(a.report, "report")?;
            let removed_path: Option<PathBuf> = s.opt(a.removed, "removed")?;
            let (g, emb) = load_graph(s, a.input)?;
            let (filtered, report) = apply_filter(&g, &emb, t)?;
            filtered.save_jsonl(&out)?;
            if let Some(p) = report_path.as_deref() {
                emit_json(Some(p), &report)?;
            }
            if let Some(p) = removed_path.as_deref() {
                write_with(p, |w| {
                    for e in &report.removed_edges {
                        serde_json::to_writer(&mut *w, e)?;
                        w.write_all(b"\n")?;
                    }
                    Ok(())
                })?;
            }
            eprintln!(
                "filter t={t}: {} -> {} edges, {} -> {} descriptions",
                report.edges_before,
                report.edges_after,
                g.num_descriptions(),
                filtered.num_descriptions()
            );
        }
        Command::Sweep(a) => {
            let raw = s.or(a.thresholds, "thresholds", "1,5,10,20,50".to_string())?;
            let ts: Vec<f64> = parse_list(&raw, "threshold")?;
            let report_path: Option<PathBuf> = s.opt(a.report, "report")?;
            let (g, emb) = load_graph(s, a.input)?;
            let rows = threshold_sweep(&g, &emb, &ts)?;
            emit_json(report_path.as_deref(), &rows)?;
            for r in &rows {
                eprintln!("sweep t={}: {} edges", r.threshold, r.edges_after);
            }
        }
        Command::Subset(a) => {
            let kind: SubsetKind = s.req::<String>(a.kind, "kind")?.parse().map_err(usage)?;
            let spec = SubsetSpec::new(kind, s.or(a.min_desc, "min-desc", DEFAULT_MIN_DESCRIPTIONS)?).map_err(usage)?;
            let out: PathBuf = s.req(a.out, "out")?;
            let report_path: Option<PathBuf> = s.opt(a.report, "report")?;
            let train: Option<PathBuf> = s.opt(a.train, "train")?;
            let (val, _) = load_graph(s, a.input)?;
            let (subset, report) = match kind {
                SubsetKind::Unique => build_unique_subset(&val, spec),
                SubsetKind::Novel => {
                    let train = train.ok_or_else(|| CliError::Usage("novel subsets need --train".into()))?;
                    let texts = read_edge_texts_jsonl(&train)?;
                    let seen: HashSet<&str> = texts.iter().map(String::as_str).collect();
                    build_novel_subset_from_texts(&val, &seen, spec)
                }
            };
            subset.save_jsonl(&out)?;
            emit_json(report_path.as_deref(), &report)?;
            eprintln!(
                "subset {kind}: {} images, {} edges ({} images below {} descriptions)",
                report.images_kept, report.edges_kept, report.images_dropped_by_threshold, spec.min_descriptions_per_image
            );
        }
        Command::Evaluate(a) => {
            let corpus_path: PathBuf = s.req(a.corpus, "corpus")?;
            let train: Option<PathBuf> = s.opt(a.train, "train")?;
            let refs_path: Option<PathBuf> = s.opt(a.references, "references")?;
            let text_emb: Option<PathBuf> = s.opt(a.text_emb, "text-emb")?;
            let image_emb: Option<PathBuf> = s.opt(a.image_emb, "image-emb")?;
            let ks: Vec<usize> = parse_list(&s.or(a.k, "k", "1,5,10".to_string())?, "k")?;
            let report_path: Option<PathBuf> = s.opt(a.report, "report")?;

            let corpus = load_corpus(&corpus_path)?;
            let train_texts = train.as_deref().map(read_edge_texts_jsonl).transpose()?;
            let unigram = train_texts.as_deref().map(UnigramModel::from_texts);
            let seen: Option<HashSet<&str>> = train_texts.as_ref().map(|t| t.iter().map(String::as_str).collect());
            let refs = refs_path.as_deref().map(References::load).transpose()?;
            let recall = match (text_emb, image_emb) {
                (Some(t), Some(i)) => Some(recall_map(&load_embeddings(t)?, &load_embeddings(i)?, &ks)?),
                (None, None) => None,
                _ => return Err(CliError::Usage("--text-emb and --image-emb go together".into())),
            };
            let report = evaluate(
                &corpus,
                EvalInputs {
                    unigram: unigram.as_ref(),
                    train_texts: seen.as_ref(),
                    references: refs.as_ref(),
                    recall_at: recall.as_ref(),
                },
            )?;
            emit_json(report_path.as_deref(), &report)?;
            eprintln!(
                "evaluate: {} inferences, length {:.3}, dist-2 {}, unique {:.2}%",
                report.count, report.length_mean, report.dist2, report.unique_pct
            );
        }
        Command::RetrievalEval(a) => {
            let texts = load_embeddings(s.req::<PathBuf>(a.text_emb, "text-emb")?)?;
            let images = load_embeddings(s.req::<PathBuf>(a.image_emb, "image-emb")?)?;
            let ks: Vec<usize> = parse_list(&s.or(a.k, "k", "1,5,10".to_string())?, "k")?;
            let map = recall_map(&texts, &images, &ks)?;
            emit_json(s.opt(a.report, "report")?.as_deref(), &map)?;
            let line: Vec<String> = ks.iter().map(|k| format!("R@{k} {:.2}", map[&format!("R@{k}")])).collect();
            eprintln!("retrieval-eval: {} texts, {} images: {}", texts.len(), images.len(), line.join(", "));
        }
        Command::Gradcheck(a) => {
            let seed = s.or(a.seed, "seed", 0)?;
            let count = s.or(a.seeds, "seeds", 1)?;
            if count == 0 {
                return Err(CliError::Usage("--seeds must be at least 1".into()));
            }
            let reports = (seed..seed + count).map(gradcheck_seed).collect::<vcg_core::Result<Vec<_>>>()?;
            let max = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
            let passed = max < GRADCHECK_TOLERANCE;
            emit_json(
                s.opt(a.report, "report")?.as_deref(),
                &json!({ "max_rel_error": max, "tolerance": GRADCHECK_TOLERANCE, "passed": passed, "cases": reports }),
            )?;
            eprintln!("gradcheck: max relative error {max:e} over {count} seed(s)");
            if !passed {
                return Err(CliError::Numerical(format!(
                    "max relative error {max:e} is not below {GRADCHECK_TOLERANCE:e}"
                )));
            }
        }
        Command::TrainToy(a) => train(a, s)?,
        Command::ReportEntropy(a) => {
            let corpus = load_corpus(s.req::<PathBuf>(a.corpus, "corpus")?)?;
            let texts = read_edge_texts_jsonl(s.req::<PathBuf>(a.train, "train")?)?;
            let width = s.or(a.bin_width, "bin-width", 2.0)?;
            let hist = entropy_histogram(&corpus, &UnigramModel::from_texts(&texts), width)?;
            let bins: Vec<_> = hist.iter().map(|&(c, f)| json!({ "bin_center": c, "ratio": f })).collect();
            emit_json(
                s.opt(a.report, "report")?.as_deref(),
                &json!({ "bin_width": width, "count": corpus.len(), "bins": bins }),
            )?;
            eprintln!("report-entropy: {} inferences in {} bins", corpus.len(), hist.len());
        }
    }
    Ok(())
}

fn train(a: crate::TrainArgs, s: &Settings) -> Result<()> {
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        lambda: s.or(a.lambda, "lambda", defaults.lambda)?,
        lr: s.or(a.lr, "lr", defaults.lr)?,
        weight_decay: s.or(a.weight_decay, "weight-decay", defaults.weight_decay)?,
        epochs: s.or(a.epochs, "epochs", defaults.epochs)?,
        batch: s.or(a.batch, "batch", defaults.batch)?,
        seed: s.or(a.seed, "seed", defaults.seed)?,
        d_e: s.or(a.d_e, "d-e", defaults.d_e)?,
        d_h: s.or(a.d_h, "d-h", defaults.d_h)?,
        d_r: s.or(a.d_r, "d-r", defaults.d_r)?,
    };
    let h_size = s.or(a.h_size, "h-size", 2usize)?;
    if h_size < 2 {
        return Err(CliError::Usage("--h-size must be at least 2".into()));
    }
    let data: Option<PathBuf> = s.opt(a.data, "data")?;
    let eval: Option<PathBuf> = s.opt(a.eval, "eval")?;
    let trace_path: Option<PathBuf> = s.opt(a.trace, "trace")?;
    let checkpoint: Option<PathBuf> = s.opt(a.checkpoint, "checkpoint")?;
    let report_path: Option<PathBuf> = s.opt(a.report, "report")?;

    let (train_set, held_out) = match data {
        Some(p) => {
            let train = ToyDataset::load(&p)?;
            let held = eval.as_deref().map(ToyDataset::load).transpose()?;
            (train, held)
        }
        None => {
            let (train, held) = synthetic_clusters(SyntheticConfig {
                seed: cfg.seed,
                ..Default::default()
            })?;
            let held = match eval.as_deref() {
                Some(p) => ToyDataset::load(p)?,
                None => held,
            };
            (train, Some(held))
        }
    };
    let train_set = train_set.with_h_size(h_size);
    let eval_set = held_out.as_ref().unwrap_or(&train_set);
    let eval_items = eval_set.retrieval_items(train_set.vocab(), h_size, cfg.seed)?;
    let outcome = train_toy(&train_set, &eval_items, &cfg)?;

    if let Some(p) = trace_path.as_deref() {
        write_with(p, |w| write_trace_csv(&outcome.trace, w))?;
    }
    if let Some(p) = checkpoint.as_deref() {
        outcome.params.save(p)?;
    }
    let last = outcome.trace.last();
    emit_json(
        report_path.as_deref(),
        &json!({
            "config": cfg,
            "h_size": h_size,
            "train_images": train_set.len(),
            "eval_items": eval_items.len(),
            "final": last,
        }),
    )?;
    match last {
        Some(t) => eprintln!(
            "train-toy: {} epochs, l_org {:.4}, l_crl {:.4}, retrieval accuracy {:.3}",
            t.epoch, t.mean_l_org, t.mean_l_crl, t.retrieval_acc
        ),
        None => eprintln!("train-toy: 0 epochs, parameters left at initialisation"),
    }
    Ok(())
}

fn usage(e: vcg_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn load_graph(s: &Settings, input: GraphInput) -> Result<(VisualCommonsenseGraph, EmbeddingMatrix)> {
    let graph: PathBuf = s.req(input.graph, "graph")?;
    let emb: PathBuf = s.req(input.emb, "emb")?;
    let emb = load_embeddings(&emb)?;
    let g = ingest_jsonl(&graph, &emb)?;
    Ok((g, emb))
}

fn recall_map(texts: &EmbeddingMatrix, images: &EmbeddingMatrix, ks: &[usize]) -> Result<BTreeMap<String, f64>> {
    let truth = truth_by_id(texts, images)?;
    let values = recall_at_ks(texts, images, &truth, ks)?;
    Ok(ks.iter().zip(values).map(|(k, v)| (format!("R@{k}"), v)).collect())
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    f(&mut w).and_then(|()| w.flush()).map_err(io_err)
}

/// Pretty JSON to `path`, or to standard output.
fn emit_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    match path {
        Some(p) => write_with(p, |w| w.write_all(text.as_bytes())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}
