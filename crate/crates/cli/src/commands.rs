use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use taxo_expand::baselines::{closest_neighbor, closest_parent};
use taxo_expand::checkpoint::Checkpoint;
use taxo_expand::clean::self_clean;
use taxo_expand::diff::gradcheck::primitive_suite;
use taxo_expand::egonet::EgonetOptions;
use taxo_expand::embedding::EmbeddingTable;
use taxo_expand::infer::{expand as expand_taxonomy, rank_queries, AnchorCache, RankResult};
use taxo_expand::io::{load_taxonomy, read_split, write_edges, write_split};
use taxo_expand::metrics::MetricsReport;
use taxo_expand::model::{all_variants, model_gradcheck, ModelConfig};
use taxo_expand::split::{mask_leaf_counts, mask_leaves, TaxonomySplit};
use taxo_expand::train::{fit_with, TrainingState};
use taxo_expand::{Concept, SeedStream, Taxonomy};

use crate::config::ConfigArgs;
use crate::output::{self, Manifest};
use crate::Failure;

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_split(split: &Path, embeddings: &Path) -> Result<TaxonomySplit, Failure> {
    let table = EmbeddingTable::read(embeddings)?;
    Ok(read_split(split, &table)?)
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Edge file: `parent<TAB>child` per line.
    #[arg(long)]
    taxonomy: PathBuf,
    /// word2vec text embeddings for every concept.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    val_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    test_ratio: f64,
    /// Exact number of validation queries; overrides --val-ratio.
    #[arg(long, requires = "test_count")]
    val_count: Option<usize>,
    /// Exact number of test queries; overrides --test-ratio.
    #[arg(long, requires = "val_count")]
    test_count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn split(a: SplitArgs) -> Result<(), Failure> {
    let t = load_taxonomy(&a.taxonomy, &a.embeddings)?;
    let s = match (a.val_count, a.test_count) {
        (Some(v), Some(te)) => mask_leaf_counts(&t, v, te, a.seed),
        _ => mask_leaves(&t, a.val_ratio, a.test_ratio, a.seed),
    }
    .map_err(|e| Failure::Usage(e.to_string()))?;
    write_split(&a.out, &s)?;
    Manifest::new("split", a.seed)
        .input("taxonomy", Some(&a.taxonomy))
        .input("embeddings", Some(&a.embeddings))
        .output(&a.out)
        .option("val_ratio", a.val_ratio)
        .option("test_ratio", a.test_ratio)
        .option("val_count", a.val_count)
        .option("test_count", a.test_count)
        .write_next_to(&a.out)?;
    eprintln!(
        "{} existing concepts, {} validation and {} test queries",
        s.existing.len(),
        s.validation.len(),
        s.test.len()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Split file; validation queries drive model selection.
    #[arg(long, required_unless_present = "taxonomy", conflicts_with = "taxonomy")]
    split: Option<PathBuf>,
    /// Edge file; trains on all of it without validation.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    embeddings: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines training log (default: `<out>.log.jsonl`).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Continue from a checkpoint's training state; the model configuration
    /// comes from the checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

pub fn train(a: TrainArgs) -> Result<(), Failure> {
    let mut run = a.cfg.resolve()?;
    let split = match (&a.split, &a.taxonomy) {
        (Some(s), _) => load_split(s, &a.embeddings)?,
        (None, Some(t)) => TaxonomySplit::unmasked(load_taxonomy(t, &a.embeddings)?),
        (None, None) => unreachable!("clap requires one of --split and --taxonomy"),
    };
    let dim = split.existing.dimension();
    let state = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let state = ck
                .training
                .ok_or_else(|| Failure::Data(format!("{} holds no training state to resume", p.display())))?;
            if state.params.input_dim != dim {
                return Err(Failure::Data(format!(
                    "checkpoint expects {}-d embeddings, data has {dim}",
                    state.params.input_dim
                )));
            }
            run.model = state.params.config.clone();
            state
        }
        None => TrainingState::new(&run.model, dim, &run.train)?,
    };
    let start = state.epoch;
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log.jsonl"));
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(a.resume.is_some())
        .truncate(a.resume.is_none())
        .open(&log_path)
        .map_err(|e| Failure::io(&log_path, e))?;

    let fit = fit_with(&split, &run.train, state, |e| {
        let line = serde_json::to_string(e).expect("serializable log");
        writeln!(log, "{line}").map_err(|err| taxo_expand::Error::Checkpoint(format!("{}: {err}", log_path.display())))?;
        match e.val_mrr {
            Some(m) => eprintln!("epoch {} loss {:.6} val_MRR {:.4} lr {}", e.epoch, e.train_loss, m, e.lr),
            None => eprintln!("epoch {} loss {:.6} lr {}", e.epoch, e.train_loss, e.lr),
        }
        Ok(())
    })?;
    log.flush().map_err(|e| Failure::io(&log_path, e))?;
    Checkpoint::new(fit.best)
        .with_training(run.train.clone(), fit.state)
        .save(&a.out)?;
    Manifest::new("train", run.train.seed)
        .input("split", a.split.as_deref())
        .input("taxonomy", a.taxonomy.as_deref())
        .input("embeddings", Some(&a.embeddings))
        .input("resume", a.resume.as_deref())
        .output(&a.out)
        .output(&log_path)
        .option("start_epoch", start)
        .config(&run)
        .write_next_to(&a.out)?;
    Ok(())
}

fn egonet_options(ck: &Checkpoint) -> EgonetOptions {
    ck.train_config.as_ref().map(|c| c.egonet_options()).unwrap_or_default()
}

fn check_dim(ck: &Checkpoint, t: &Taxonomy) -> Result<(), Failure> {
    if ck.params.input_dim != t.dimension() {
        return Err(Failure::Data(format!(
            "checkpoint expects {}-d embeddings, data has {}",
            ck.params.input_dim,
            t.dimension()
        )));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExpandArgs {
    #[arg(long)]
    taxonomy: PathBuf,
    /// Embeddings for existing and new concepts.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// New concept names, one per line.
    #[arg(long)]
    queries: PathBuf,
    /// Expanded edge file.
    #[arg(long)]
    out: PathBuf,
    /// Candidate parents listed per query; only the best is attached.
    #[arg(long, default_value_t = 1)]
    top_k: usize,
    /// Candidate TSV (default: `<out>.placements.tsv`).
    #[arg(long)]
    placements: Option<PathBuf>,
}

fn read_names(path: &Path) -> Result<Vec<String>, Failure> {
    let f = std::fs::File::open(path).map_err(|e| Failure::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Failure::io(path, e))?;
        let name = line.trim_end_matches('\r');
        if name.trim().is_empty() {
            continue;
        }
        if !seen.insert(name.to_string()) {
            return Err(Failure::Data(format!("query {name:?} listed twice in {}", path.display())));
        }
        out.push(name.to_string());
    }
    Ok(out)
}

pub fn expand(a: ExpandArgs) -> Result<(), Failure> {
    if a.top_k == 0 {
        return Err(Failure::Usage("--top-k must be at least 1".into()));
    }
    let table = EmbeddingTable::read(&a.embeddings)?;
    let lines = taxo_expand::io::read_edges(&a.taxonomy)?;
    let t = taxo_expand::io::taxonomy_from_lines(&lines, &table)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    check_dim(&ck, &t)?;
    let names = read_names(&a.queries)?;
    let first = t.next_id().0;
    let queries = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            if t.id_of(n).is_some() {
                return Err(Failure::Data(format!("query {n:?} already exists in the taxonomy")));
            }
            Ok(Concept::new(
                taxo_expand::ConceptId(first + i as u32),
                n.clone(),
                table.require(n)?.to_vec(),
            ))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let ex = expand_taxonomy(&t, &queries, &ck.params, &egonet_options(&ck), a.top_k)?;
    write_edges(&a.out, &ex.taxonomy)?;
    let placements = a.placements.clone().unwrap_or_else(|| with_suffix(&a.out, ".placements.tsv"));
    output::write_placements(&placements, &ex.taxonomy, &ex.placements)?;
    Manifest::new("expand", 0)
        .input("taxonomy", Some(&a.taxonomy))
        .input("embeddings", Some(&a.embeddings))
        .input("checkpoint", Some(&a.checkpoint))
        .input("queries", Some(&a.queries))
        .output(&a.out)
        .output(&placements)
        .option("top_k", a.top_k)
        .write_next_to(&a.out)?;
    eprintln!(
        "attached {} concepts; {} edges",
        ex.placements.len(),
        ex.taxonomy.edge_count()
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum QuerySet {
    Test,
    Validation,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Trained model; optional when only baselines are wanted.
    #[arg(long, required_unless_present = "baselines")]
    checkpoint: Option<PathBuf>,
    /// Also rank with Closest-Parent and Closest-Neighbor.
    #[arg(long)]
    baselines: bool,
    #[arg(long, value_enum, default_value_t = QuerySet::Test)]
    set: QuerySet,
    /// Metrics JSON.
    #[arg(long)]
    out: PathBuf,
    /// Directory for `<method>.ranks.tsv` files.
    #[arg(long)]
    ranks_dir: Option<PathBuf>,
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    let split = load_split(&a.split, &a.embeddings)?;
    let t = &split.existing;
    let queries = match a.set {
        QuerySet::Test => &split.test,
        QuerySet::Validation => &split.validation,
    };
    if queries.is_empty() {
        return Err(Failure::Data(format!("the {:?} set of {} is empty", a.set, a.split.display())));
    }
    let mut methods: Vec<(&str, Vec<RankResult>)> = Vec::new();
    if let Some(p) = &a.checkpoint {
        let ck = Checkpoint::load(p)?;
        check_dim(&ck, t)?;
        let cache = AnchorCache::build(t, &ck.params, &egonet_options(&ck))?;
        methods.push(("model", rank_queries(queries, &cache, &ck.params)?));
    }
    if a.baselines {
        for (name, f) in [
            ("closest_parent", closest_parent as fn(&Taxonomy, _, &[f64]) -> _),
            ("closest_neighbor", closest_neighbor),
        ] {
            let rs = queries
                .iter()
                .map(|q| f(t, q.concept.id, &q.concept.embedding)?.with_gold(&q.gold))
                .collect::<taxo_expand::Result<Vec<_>>>()?;
            methods.push((name, rs));
        }
    }
    let gold: Vec<_> = queries.iter().map(|q| q.gold.clone()).collect();
    let names: Vec<&str> = queries.iter().map(|q| q.concept.name.as_str()).collect();
    let mut report = BTreeMap::new();
    let mut outputs = vec![a.out.clone()];
    if let Some(d) = &a.ranks_dir {
        std::fs::create_dir_all(d).map_err(|e| Failure::io(d, e))?;
    }
    for (name, rs) in &methods {
        let m = MetricsReport::from_results(rs)?.with_wup(t, rs, &gold)?;
        eprintln!(
            "{name}: MR {:.2} Hit@1 {:.4} Hit@3 {:.4} MRR {:.4}",
            m.mr, m.hit_at_1, m.hit_at_3, m.mrr
        );
        report.insert(*name, m);
        if let Some(d) = &a.ranks_dir {
            let p = d.join(format!("{name}.ranks.tsv"));
            output::write_ranks(&p, t, &names, rs)?;
            outputs.push(p);
        }
    }
    let mut text = serde_json::to_string_pretty(&report).expect("serializable metrics");
    text.push('\n');
    std::fs::write(&a.out, text).map_err(|e| Failure::io(&a.out, e))?;
    let mut m = Manifest::new("eval", 0)
        .input("split", Some(&a.split))
        .input("embeddings", Some(&a.embeddings))
        .input("checkpoint", a.checkpoint.as_deref())
        .option("set", a.set)
        .option("baselines", a.baselines);
    for p in &outputs {
        m = m.output(p);
    }
    m.write_next_to(&a.out)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct CleanArgs {
    #[arg(long)]
    taxonomy: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Report TSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    folds: Option<usize>,
    /// Flag edges whose parent ranks worse than this.
    #[arg(long)]
    threshold: Option<usize>,
    /// Suggested parents per flagged edge.
    #[arg(long)]
    suggestions: Option<usize>,
    /// Report the N most suspicious edges instead of those past the threshold.
    #[arg(long)]
    top: Option<usize>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

pub fn clean(a: CleanArgs) -> Result<(), Failure> {
    let mut run = a.cfg.resolve()?;
    if let Some(f) = a.folds {
        run.clean.folds = f;
    }
    if let Some(t) = a.threshold {
        run.clean.threshold = t;
    }
    if let Some(s) = a.suggestions {
        run.clean.suggestions = s;
    }
    run.validate()?;
    let t = load_taxonomy(&a.taxonomy, &a.embeddings)?;
    let report = self_clean(&t, &run.clean, &run.model, &run.train, |f| {
        eprintln!("fold {} of {} done", f + 1, run.clean.folds);
        Ok(())
    })?;
    let rows = output::write_clean(&a.out, &t, &report, a.top)?;
    Manifest::new("clean", run.clean.seed)
        .input("taxonomy", Some(&a.taxonomy))
        .input("embeddings", Some(&a.embeddings))
        .output(&a.out)
        .option("top", a.top)
        .config(&run)
        .write_next_to(&a.out)?;
    eprintln!("{rows} of {} evaluated edges reported", report.entries.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Independent random fixtures per check.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON report of every check.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct CheckLine {
    seed: u64,
    check: String,
    max_relative_error: f64,
    passed: bool,
}

pub fn gradcheck(a: GradcheckArgs) -> Result<(), Failure> {
    let base = ModelConfig {
        heads: vec![2, 1],
        hidden: vec![3, 3],
        position_dim: 2,
        matcher_hidden: 4,
        ..ModelConfig::default()
    };
    let root = SeedStream::new(a.seed);
    let mut lines = Vec::new();
    for s in 0..a.seeds {
        let stream = root.split(s);
        for c in primitive_suite(stream.split_str("primitives"))? {
            lines.push((s, c));
        }
        for (i, cfg) in all_variants(&base).iter().enumerate() {
            let label = format!("{}+{}+{}", cfg.arch, cfg.readout, cfg.matcher);
            for mut c in model_gradcheck(cfg, 4, stream.split_str("model").split(i as u64))? {
                c.name = format!("{label}/{}", c.name);
                lines.push((s, c));
            }
        }
    }
    let report: Vec<CheckLine> = lines
        .into_iter()
        .map(|(seed, c)| CheckLine {
            seed,
            passed: c.passed(a.tolerance),
            max_relative_error: c.max_relative_error,
            check: c.name,
        })
        .collect();
    let failed: Vec<&CheckLine> = report.iter().filter(|l| !l.passed).collect();
    for l in &failed {
        eprintln!("FAIL seed {} {}: {:.3e}", l.seed, l.check, l.max_relative_error);
    }
    let worst = report.iter().map(|l| l.max_relative_error).fold(0.0, f64::max);
    eprintln!("{} checks, {} failed, worst relative error {worst:.3e}", report.len(), failed.len());
    if let Some(p) = &a.out {
        let mut text = serde_json::to_string_pretty(&report).expect("serializable report");
        text.push('\n');
        std::fs::write(p, text).map_err(|e| Failure::io(p, e))?;
        Manifest::new("gradcheck", a.seed)
            .output(p)
            .option("seeds", a.seeds)
            .option("tolerance", a.tolerance)
            .write_next_to(p)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("{} gradient checks failed", failed.len())))
    }
}
