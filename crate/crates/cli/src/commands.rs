use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use xmodal::corpus::{build_corpus, load_embeddings, parse_manifest, split_corpus, Cardinality, Relation, SplitSpec};
use xmodal::geometry::gap_report;
use xmodal::metrics::{score_matrix, Metric, ScoreMatrix};
use xmodal::retrieval::{evaluate_with_rankings, rankings_to_tsv, Direction, RetrievalReport, Scorer};
use xmodal::scorer::{load_model, save_model, search_architectures, ArchSearch, SearchSpace, TrainConfig};
use xmodal::stats::{holm_adjust, two_proportion_chisq, ProportionSample};
use xmodal::{PairedCorpus, ScorerModel};

use crate::args::{CompareArgs, CorpusArgs, GapArgs, HeatmapArgs, IngestArgs, OutputFormat, RetrieveArgs, TrainArgs};
use crate::error::{CliError, CliResult};
use crate::output::{emit, write_file, RunManifest};

/// Global flags every command sees.
pub struct Ctx {
    pub seed: u64,
    pub output: OutputFormat,
    pub quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("note: {}", msg.as_ref());
        }
    }
}

fn cardinality(captions_per_item: Option<usize>) -> Cardinality {
    match captions_per_item {
        Some(n) => Cardinality::OneToMany { captions_per_item: n },
        None => Cardinality::OneToOne,
    }
}

fn load_corpus(args: &CorpusArgs) -> CliResult<PairedCorpus> {
    let text = load_embeddings(&args.text)?;
    let image = load_embeddings(&args.image)?;
    let card = cardinality(args.captions_per_item);
    let Some(manifest) = &args.manifest else {
        return Ok(PairedCorpus::aligned(text, image)?);
    };
    if !args.first_caption {
        return Ok(build_corpus(text, image, manifest, card)?);
    }
    let source = fs::read_to_string(manifest).map_err(|source| CliError::Io {
        path: manifest.clone(),
        source,
    })?;
    let mut seen = HashSet::new();
    let relations: Vec<Relation> = parse_manifest(&source)?
        .into_iter()
        .filter(|r| seen.insert(r.image_id.clone()))
        .collect();
    // captions that lost their relation are dropped from the text side
    let mut rows: Vec<usize> = relations.iter().filter_map(|r| text.index_of(&r.text_id)).collect();
    rows.sort_unstable();
    rows.dedup();
    let text = if relations.iter().all(|r| text.index_of(&r.text_id).is_some()) {
        text.select(&rows)
    } else {
        text
    };
    Ok(PairedCorpus::from_relations(text, image, &relations, card)?)
}

fn corpus_inputs(args: &CorpusArgs) -> Vec<&Path> {
    let mut v = vec![args.text.as_path(), args.image.as_path()];
    v.extend(args.manifest.as_deref());
    v
}

fn corpus_params(args: &CorpusArgs) -> Value {
    json!({
        "captions_per_item": args.captions_per_item,
        "first_caption": args.first_caption,
    })
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Value::Object(a), Value::Object(b)) = (&mut a, b) {
        a.extend(b);
    }
    a
}

pub fn gap(ctx: &Ctx, args: &GapArgs) -> CliResult<()> {
    let a = load_embeddings(&args.a)?;
    let b = load_embeddings(&args.b)?;
    let mut batch_size = args.batch_size;
    if batch_size > a.count() && a.count() > 0 {
        ctx.note(format!(
            "batch size {batch_size} clamped to the {} available rows",
            a.count()
        ));
        batch_size = a.count();
    }
    let report = gap_report(&a, &b, batch_size, ctx.seed)?;
    let manifest = RunManifest::new(
        "gap",
        &[&args.a, &args.b],
        json!({ "seed": ctx.seed, "batch_size": batch_size, "requested_batch_size": args.batch_size }),
    );
    emit(ctx.output, &manifest, json!({ "gap": report }), || {
        format!(
            "centroid_gap,w2_mean,w2_batches,batch_size,dropped,seed\n{},{},{},{},{},{}\n",
            report.centroid_gap, report.w2_mean, report.w2_batches, report.batch_size, report.dropped, report.seed
        )
    });
    Ok(())
}

fn load_scorer_model(path: &Option<PathBuf>) -> CliResult<Option<ScorerModel>> {
    Ok(path.as_ref().map(load_model).transpose()?)
}

fn scorer<'a>(metric: Option<Metric>, model: &'a Option<ScorerModel>) -> Scorer<'a> {
    match (metric, model) {
        (_, Some(m)) => Scorer::Model(m),
        (Some(m), None) => Scorer::Metric(m),
        (None, None) => Scorer::Metric(Metric::Cosine),
    }
}

fn rankings_path(base: &Path, direction: Direction, several: bool) -> PathBuf {
    if !several {
        return base.to_owned();
    }
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = base
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "tsv".into());
    base.with_file_name(format!("{stem}.{direction}.{ext}"))
}

pub fn retrieve(ctx: &Ctx, args: &RetrieveArgs) -> CliResult<()> {
    let mut corpus = load_corpus(&args.corpus)?;
    if let Some(n) = args.subset {
        corpus = corpus.sample(n, ctx.seed)?;
    }
    if args.normalize {
        corpus.text = corpus.text.l2_normalized()?;
        corpus.image = corpus.image.l2_normalized()?;
    }
    let model = load_scorer_model(&args.model)?;
    let scorer = scorer(args.metric, &model);
    let directions = args.direction.directions();
    let mut reports = Vec::new();
    for &d in &directions {
        let (report, rankings) = evaluate_with_rankings(&corpus, scorer, d, &args.ks)?;
        if let Some(base) = &args.rankings {
            let path = rankings_path(base, d, directions.len() > 1);
            write_file(&path, &rankings_to_tsv(&rankings))?;
            ctx.note(format!("wrote {} rankings to {}", d, path.display()));
        }
        reports.push(report);
    }
    let mut inputs = corpus_inputs(&args.corpus);
    inputs.extend(args.model.as_deref());
    let params = merge(
        json!({
            "seed": ctx.seed,
            "scorer": scorer.name(),
            "metric": args.metric.map(|m| m.name()),
            "model": args.model,
            "directions": directions,
            "k": args.ks,
            "subset": args.subset,
            "normalize": args.normalize,
        }),
        corpus_params(&args.corpus),
    );
    let manifest = RunManifest::new("retrieve", &inputs, params);
    emit(ctx.output, &manifest, json!({ "reports": reports }), || {
        let mut out = format!("{}\n", RetrievalReport::CSV_HEADER);
        for r in &reports {
            out.push_str(&r.csv_rows());
        }
        out
    });
    Ok(())
}

pub fn train(ctx: &Ctx, args: &TrainArgs) -> CliResult<()> {
    let corpus = load_corpus(&args.corpus)?;
    let mut inputs = corpus_inputs(&args.corpus);
    let (train_split, val_split, ratios) = match (&args.val_text, &args.val_image) {
        (Some(text), Some(image)) => {
            inputs.extend([text.as_path(), image.as_path()]);
            inputs.extend(args.val_manifest.as_deref());
            let val = load_corpus(&CorpusArgs {
                text: text.clone(),
                image: image.clone(),
                manifest: args.val_manifest.clone(),
                captions_per_item: args.corpus.captions_per_item,
                first_caption: false,
            })?;
            (corpus, val, None)
        }
        _ => {
            let r = args.split.clone().unwrap_or_else(|| vec![0.8, 0.1, 0.1]);
            if r.len() != 3 {
                return Err(CliError::Usage(format!("--split takes three ratios, got {}", r.len())));
            }
            let spec = SplitSpec::new(r[0], r[1], r[2], ctx.seed);
            let (train, val, _test) = split_corpus(&corpus, &spec)?;
            (train, val, Some(r))
        }
    };
    let config = TrainConfig {
        base_lr: args.lr,
        batch_size: args.batch_size,
        max_epochs: args.epochs,
        early_stop_patience: args.patience,
        early_stop_min_improvement: args.min_improvement,
        loss: args.loss,
        negative_mode: args.negatives,
        seed: ctx.seed,
        ..TrainConfig::default()
    };
    let search = if args.search {
        ArchSearch::Random(SearchSpace {
            min_depth: args.min_depth,
            max_depth: args.max_depth,
            widths: args.widths.clone(),
        })
    } else {
        ArchSearch::Fixed(args.arch.clone())
    };
    let outcome = search_architectures(&search, args.budget, &train_split, &val_split, &config)?;
    save_model(&outcome.model, &args.model_out)?;
    let history_path = args
        .history_out
        .clone()
        .unwrap_or_else(|| args.model_out.with_extension("history.csv"));
    let history_csv = outcome.history.to_csv();
    write_file(&history_path, &history_csv)?;
    ctx.note(format!(
        "wrote model {} and history {}",
        args.model_out.display(),
        history_path.display()
    ));

    let params = merge(
        json!({
            "seed": ctx.seed,
            "config": config,
            "search": search,
            "budget": args.budget,
            "split": ratios,
            "train_pairs": train_split.pairs().len(),
            "val_pairs": val_split.pairs().len(),
            "model_out": args.model_out,
            "history_out": history_path,
        }),
        corpus_params(&args.corpus),
    );
    let manifest = RunManifest::new("train", &inputs, params);
    let best = outcome.best();
    emit(
        ctx.output,
        &manifest,
        json!({
            "model": args.model_out,
            "history_file": history_path,
            "hidden_sizes": best.hidden_sizes,
            "best_trial": outcome.best_trial,
            "trials": outcome.trials,
            "history": outcome.history,
        }),
        || history_csv.clone(),
    );
    Ok(())
}

#[derive(Serialize)]
struct MatrixView<'a> {
    scorer: &'a str,
    orientation: xmodal::metrics::Orientation,
    row_ids: &'a [String],
    col_ids: &'a [String],
    values: Vec<&'a [f64]>,
}

fn matrix_view(m: &ScoreMatrix) -> MatrixView<'_> {
    MatrixView {
        scorer: &m.scorer,
        orientation: m.orientation,
        row_ids: &m.row_ids,
        col_ids: &m.col_ids,
        values: (0..m.rows()).map(|r| m.row(r)).collect(),
    }
}

pub fn heatmap(ctx: &Ctx, args: &HeatmapArgs) -> CliResult<()> {
    let corpus = load_corpus(&args.corpus)?;
    let sample = corpus.sample(args.samples, ctx.seed)?;
    let model = load_scorer_model(&args.model)?;
    let matrix = match &model {
        Some(m) => m.score_matrix(&sample.text, &sample.image)?,
        None => score_matrix(args.metric, &sample.text, &sample.image)?,
    };
    let mut inputs = corpus_inputs(&args.corpus);
    inputs.extend(args.model.as_deref());
    let params = merge(
        json!({
            "seed": ctx.seed,
            "samples": args.samples,
            "scorer": matrix.scorer,
            "model": args.model,
        }),
        corpus_params(&args.corpus),
    );
    let manifest = RunManifest::new("heatmap", &inputs, params);
    emit(ctx.output, &manifest, json!({ "matrix": matrix_view(&matrix) }), || {
        matrix.to_csv()
    });
    Ok(())
}

#[derive(Serialize)]
struct Member {
    label: String,
    hits: usize,
    trials: usize,
}

#[derive(Serialize)]
struct Comparison {
    a: String,
    b: String,
    statistic: f64,
    p_value: f64,
    adjusted_p: f64,
}

#[derive(Serialize)]
struct Family {
    direction: Direction,
    scorer: Option<String>,
    k: usize,
    members: Vec<Member>,
    comparisons: Vec<Comparison>,
    /// Holm-adjusted p-values, members × members; the diagonal is empty.
    adjusted: Vec<Vec<Option<f64>>>,
}

fn read_reports(path: &Path) -> CliResult<Vec<RetrievalReport>> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })?;
    let reports = value
        .get("reports")
        .cloned()
        .ok_or_else(|| CliError::Incompatible(format!("{} is not a retrieval report", path.display())))?;
    serde_json::from_value(reports).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })
}

fn labels(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
        .collect();
    let unique = stems.iter().collect::<HashSet<_>>().len() == stems.len();
    if unique {
        stems
    } else {
        paths.iter().map(|p| p.display().to_string()).collect()
    }
}

pub fn compare(ctx: &Ctx, args: &CompareArgs) -> CliResult<()> {
    let files = args
        .reports
        .iter()
        .map(|p| read_reports(p))
        .collect::<CliResult<Vec<_>>>()?;
    let names = labels(&args.reports);

    // every file must cover the same directions with the same query counts and K lists
    let mut shape: BTreeMap<Direction, (usize, Vec<usize>, String)> = BTreeMap::new();
    for (name, reports) in names.iter().zip(&files) {
        for r in reports {
            let entry = shape
                .entry(r.direction)
                .or_insert((r.query_count, r.ks(), name.clone()));
            if entry.0 != r.query_count || entry.1 != r.ks() {
                return Err(CliError::Incompatible(format!(
                    "{name} ({}, {} queries, K {:?}) does not match {} ({} queries, K {:?})",
                    r.direction,
                    r.query_count,
                    r.ks(),
                    entry.2,
                    entry.0,
                    entry.1
                )));
            }
        }
    }

    type Key = (Direction, Option<String>, usize);
    let mut groups: BTreeMap<Key, Vec<Member>> = BTreeMap::new();
    for (name, reports) in names.iter().zip(&files) {
        for r in reports {
            for a in &r.at_k {
                let (scorer, label) = if args.across_metrics {
                    (None, format!("{name}:{}", r.scorer))
                } else {
                    (Some(r.scorer.clone()), name.clone())
                };
                groups.entry((r.direction, scorer, a.k)).or_default().push(Member {
                    label,
                    hits: a.hits,
                    trials: r.query_count,
                });
            }
        }
    }

    let mut families = Vec::new();
    for ((direction, scorer, k), members) in groups {
        if members.len() < 2 {
            continue;
        }
        let mut raw = Vec::new();
        let mut pairs = Vec::new();
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let a = ProportionSample::new(members[i].hits as u64, members[i].trials as u64, &members[i].label)?;
                let b = ProportionSample::new(members[j].hits as u64, members[j].trials as u64, &members[j].label)?;
                raw.push(two_proportion_chisq(&a, &b)?);
                pairs.push((i, j));
            }
        }
        let adjusted = holm_adjust(&raw.iter().map(|r| r.p_value).collect::<Vec<_>>())?;
        let mut matrix = vec![vec![None; members.len()]; members.len()];
        let comparisons = pairs
            .iter()
            .zip(raw.iter().zip(&adjusted))
            .map(|(&(i, j), (r, &adj))| {
                matrix[i][j] = Some(adj);
                matrix[j][i] = Some(adj);
                Comparison {
                    a: members[i].label.clone(),
                    b: members[j].label.clone(),
                    statistic: r.statistic,
                    p_value: r.p_value,
                    adjusted_p: adj,
                }
            })
            .collect();
        families.push(Family {
            direction,
            scorer,
            k,
            members,
            comparisons,
            adjusted: matrix,
        });
    }
    if families.is_empty() {
        return Err(CliError::Incompatible(
            "no scorer appears in two reports; use --across-metrics to compare different scorers".into(),
        ));
    }

    let inputs: Vec<&Path> = args.reports.iter().map(PathBuf::as_path).collect();
    let manifest = RunManifest::new("compare", &inputs, json!({ "across_metrics": args.across_metrics }));
    emit(ctx.output, &manifest, json!({ "families": families }), || {
        let mut out = String::from("direction,scorer,k,a,b,statistic,p_value,adjusted_p\n");
        for f in &families {
            for c in &f.comparisons {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    f.direction,
                    f.scorer.as_deref().unwrap_or(""),
                    f.k,
                    c.a,
                    c.b,
                    c.statistic,
                    c.p_value,
                    c.adjusted_p
                );
            }
        }
        out
    });
    Ok(())
}

#[derive(Serialize)]
struct FileCheck {
    path: String,
    modality: xmodal::Modality,
    count: usize,
    dim: usize,
}

pub fn ingest_check(ctx: &Ctx, args: &IngestArgs) -> CliResult<()> {
    if args.files.is_empty() && args.manifest.is_none() {
        return Err(CliError::Usage(
            "nothing to check: give embedding files or --text/--image/--manifest".into(),
        ));
    }
    let mut checks = Vec::new();
    for path in &args.files {
        let set = load_embeddings(path)?;
        checks.push(FileCheck {
            path: path.display().to_string(),
            modality: set.modality(),
            count: set.count(),
            dim: set.dim(),
        });
    }
    let mut inputs: Vec<&Path> = args.files.iter().map(PathBuf::as_path).collect();
    let corpus = match (&args.text, &args.image, &args.manifest) {
        (Some(text), Some(image), Some(manifest)) => {
            inputs.extend([text.as_path(), image.as_path(), manifest.as_path()]);
            let corpus = load_corpus(&CorpusArgs {
                text: text.clone(),
                image: image.clone(),
                manifest: Some(manifest.clone()),
                captions_per_item: args.captions_per_item,
                first_caption: false,
            })?;
            Some(json!({
                "texts": corpus.text.count(),
                "images": corpus.image.count(),
                "relations": corpus.pairs().len(),
                "one_to_one": corpus.is_one_to_one(),
            }))
        }
        _ => None,
    };
    let manifest = RunManifest::new(
        "ingest-check",
        &inputs,
        json!({ "captions_per_item": args.captions_per_item }),
    );
    emit(
        ctx.output,
        &manifest,
        json!({ "ok": true, "files": checks, "corpus": corpus }),
        || {
            let mut out = String::from("path,modality,count,dim\n");
            for c in &checks {
                let _ = writeln!(out, "{},{},{},{}", c.path, c.modality, c.count, c.dim);
            }
            out
        },
    );
    Ok(())
}
