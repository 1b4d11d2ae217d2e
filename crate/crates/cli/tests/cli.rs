use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use taxo_expand::embedding::EmbeddingTable;
use taxo_expand::io::write_edges;
use taxo_expand::synthetic::{benchmark, SyntheticConfig};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_taxo-expand"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let cfg = SyntheticConfig {
            groups: 2,
            categories_per_group: 3,
            leaves_per_category: 5,
            dim: 8,
            signal_dims: 4,
            ..SyntheticConfig::default()
        };
        let taxonomy = benchmark(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_edges(dir.path().join("edges.tsv"), &taxonomy).unwrap();
        let mut table = EmbeddingTable::new(taxonomy.dimension());
        for c in taxonomy.concepts() {
            table.insert(c.name.clone(), c.embedding.clone()).unwrap();
        }
        table.write(dir.path().join("emb.txt")).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

const TINY: &[&str] = &[
    "--heads", "2,1", "--hidden", "6,6", "--position-dim", "3", "--matcher-hidden", "4", "--negatives", "4",
    "--batch-size", "16",
];

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn split(f: &Fixture, out: &str) {
    ok(&[
        "split", "--taxonomy", &f.p("edges.tsv"), "--embeddings", &f.p("emb.txt"), "--out", &f.p(out),
        "--val-count", "4", "--test-count", "6", "--seed", "5",
    ]);
}

fn train(f: &Fixture, out: &str, epochs: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "train", "--split", &f.p("split.tsv"), "--embeddings", &f.p("emb.txt"), "--out", &f.p(out),
        "--epochs", epochs, "--seed", "1",
    ]
    .into_iter()
    .map(str::to_string)
    .collect::<Vec<_>>();
    args.extend(TINY.iter().map(|s| s.to_string()));
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&refs)
}

#[test]
fn split_is_byte_identical_and_has_manifest() {
    let f = Fixture::new();
    split(&f, "split.tsv");
    split(&f, "again.tsv");
    assert_eq!(read(&f.path("split.tsv")), read(&f.path("again.tsv")));
    let manifest: serde_json::Value = serde_json::from_str(&read(&f.path("split.tsv.manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["command"], "split");
}

#[test]
fn train_resume_eval_expand() {
    let f = Fixture::new();
    split(&f, "split.tsv");
    train(&f, "a.json", "3", &[]);
    let log = read(&f.path("a.json.log.jsonl"));
    assert_eq!(log.lines().count(), 3);

    // Resuming continues the epoch numbering and the log.
    ok(&[
        "train", "--split", &f.p("split.tsv"), "--embeddings", &f.p("emb.txt"), "--out", &f.p("a.json"),
        "--resume", &f.p("a.json"), "--epochs", "5", "--seed", "1", "--negatives", "4", "--batch-size", "16",
    ]);
    let epochs: Vec<u64> = read(&f.path("a.json.log.jsonl"))
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["epoch"].as_u64().unwrap())
        .collect();
    assert_eq!(epochs, [1, 2, 3, 4, 5]);

    // The same run from scratch reproduces the uninterrupted log exactly.
    train(&f, "b.json", "5", &["--log", &f.p("b.log")]);
    assert_eq!(read(&f.path("b.log")), read(&f.path("a.json.log.jsonl")));

    ok(&[
        "eval", "--split", &f.p("split.tsv"), "--embeddings", &f.p("emb.txt"), "--checkpoint", &f.p("b.json"),
        "--baselines", "--out", &f.p("metrics.json"), "--ranks-dir", &f.p("ranks"),
    ]);
    let m: serde_json::Value = serde_json::from_str(&read(&f.path("metrics.json"))).unwrap();
    for method in ["model", "closest_parent", "closest_neighbor"] {
        for key in ["MR", "Hit@1", "Hit@3", "MRR"] {
            assert!(m[method][key].is_number(), "{method} {key}");
        }
    }
    let ranks = read(&f.path("ranks/model.ranks.tsv"));
    assert_eq!(ranks.lines().count(), 7);
    assert_eq!(ranks.lines().nth(1).unwrap().split('\t').nth(2).unwrap().split('|').count(), 10);

    // Expand the pre-split taxonomy with the test queries' names.
    let split_text = read(&f.path("split.tsv"));
    let existing: String = split_text
        .lines()
        .skip(1)
        .take_while(|l| !l.starts_with("## "))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(f.path("existing.tsv"), &existing).unwrap();
    let queries: Vec<&str> = split_text
        .split("## test\n")
        .nth(1)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    std::fs::write(f.path("queries.txt"), queries.join("\n")).unwrap();
    ok(&[
        "expand", "--taxonomy", &f.p("existing.tsv"), "--embeddings", &f.p("emb.txt"), "--checkpoint",
        &f.p("b.json"), "--queries", &f.p("queries.txt"), "--out", &f.p("expanded.tsv"), "--top-k", "3",
    ]);
    let before = existing.lines().count();
    assert_eq!(read(&f.path("expanded.tsv")).lines().count(), before + queries.len());
    for line in existing.lines() {
        assert!(read(&f.path("expanded.tsv")).lines().any(|l| l == line));
    }
    assert_eq!(read(&f.path("expanded.tsv.placements.tsv")).lines().count(), 1 + 3 * queries.len());
}

#[test]
fn bce_flag_switches_the_objective() {
    let f = Fixture::new();
    split(&f, "split.tsv");
    train(&f, "n.json", "1", &["--log", &f.p("n.log")]);
    train(&f, "b.json", "1", &["--loss", "bce", "--log", &f.p("b.log")]);
    let loss = |p: &str| serde_json::from_str::<serde_json::Value>(read(&f.path(p)).trim()).unwrap()["train_loss"]
        .as_f64()
        .unwrap();
    // InfoNCE over 5 candidates starts near ln 5; BCE near ln 2.
    assert!((loss("n.log") - 5f64.ln()).abs() < 0.3);
    assert!((loss("b.log") - 2f64.ln()).abs() < 0.3);
}

#[test]
fn clean_reports_suspicious_edges() {
    let f = Fixture::new();
    let mut args = vec![
        "clean", "--taxonomy", &f.p("edges.tsv"), "--embeddings", &f.p("emb.txt"), "--out", &f.p("clean.tsv"),
        "--folds", "3", "--top", "5", "--epochs", "2",
    ]
    .into_iter()
    .map(str::to_string)
    .collect::<Vec<_>>();
    args.extend(TINY.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&refs);
    let text = read(&f.path("clean.tsv"));
    assert_eq!(text.lines().next().unwrap(), "leaf\tparent\trank\tfold\tsuggestions");
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn gradcheck_passes() {
    ok(&["gradcheck", "--seeds", "1"]);
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["gradcheck", "--seeds", "1", "--tolerance", "0"]).status.code(), Some(3));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    std::fs::write(f.path("bad.tsv"), "root\tghost\n").unwrap();
    let out = run(&[
        "split", "--taxonomy", &f.p("bad.tsv"), "--embeddings", &f.p("emb.txt"), "--out", &f.p("s.tsv"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ghost"));

    // Nonsense configuration is a usage error.
    split(&f, "split.tsv");
    let out = run(&[
        "train", "--split", &f.p("split.tsv"), "--embeddings", &f.p("emb.txt"), "--out", &f.p("x.json"),
        "--dropout", "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergence_exits_with_numerical_code() {
    let f = Fixture::new();
    split(&f, "split.tsv");
    let out = run(&[
        "train", "--split", &f.p("split.tsv"), "--embeddings", &f.p("emb.txt"), "--out", &f.p("x.json"),
        "--lr", "1e300", "--epochs", "3", "--negatives", "4", "--heads", "1,1", "--hidden", "4,4", "--position-dim", "2",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
