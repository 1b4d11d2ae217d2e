//! Manifests and TSV writers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use taxo_expand::clean::CleanReport;
use taxo_expand::infer::{Placement, RankResult};
use taxo_expand::Taxonomy;

use crate::config::RunConfig;
use crate::Failure;

/// Written next to every output so the run can be repeated exactly. Holds
/// no timestamps or host details, so identical runs give identical files.
#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub inputs: BTreeMap<&'static str, String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<&'a RunConfig>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub options: BTreeMap<&'static str, serde_json::Value>,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, seed: u64) -> Self {
        Manifest {
            tool: "taxo-expand",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            config: None,
            options: BTreeMap::new(),
        }
    }

    pub fn input(mut self, key: &'static str, path: Option<&Path>) -> Self {
        if let Some(p) = path {
            self.inputs.insert(key, p.display().to_string());
        }
        self
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.display().to_string());
        self
    }

    pub fn option(mut self, key: &'static str, value: impl Serialize) -> Self {
        self.options.insert(key, serde_json::to_value(value).expect("serializable option"));
        self
    }

    pub fn config(mut self, c: &'a RunConfig) -> Self {
        self.config = Some(c);
        self
    }

    /// Writes `<primary>.manifest.json`.
    pub fn write_next_to(&self, primary: &Path) -> Result<PathBuf, Failure> {
        let mut name = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        let mut text = serde_json::to_string_pretty(self).expect("serializable manifest");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
        Ok(path)
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn finish(path: &Path, w: BufWriter<File>) -> Result<(), Failure> {
    w.into_inner()
        .map_err(|e| Failure::io(path, e.into_error()))?
        .sync_all()
        .map_err(|e| Failure::io(path, e))
}

/// `query<TAB>gold ranks<TAB>top-10 anchors`, lists joined by `|`.
pub fn write_ranks(path: &Path, t: &Taxonomy, names: &[&str], results: &[RankResult]) -> Result<(), Failure> {
    let mut w = create(path)?;
    let io = |e| Failure::io(path, e);
    writeln!(w, "query\trank_of_gold\ttop10").map_err(io)?;
    for (name, r) in names.iter().zip(results) {
        let ranks: Vec<String> = r.gold_ranks.iter().map(usize::to_string).collect();
        let top = r
            .top_k(10)
            .iter()
            .map(|e| t.name(e.anchor).map(str::to_string))
            .collect::<taxo_expand::Result<Vec<_>>>()?;
        writeln!(w, "{name}\t{}\t{}", ranks.join("|"), top.join("|")).map_err(io)?;
    }
    finish(path, w)
}

/// `query<TAB>rank<TAB>anchor<TAB>score`, one row per kept candidate.
pub fn write_placements(path: &Path, t: &Taxonomy, placements: &[Placement]) -> Result<(), Failure> {
    let mut w = create(path)?;
    let io = |e| Failure::io(path, e);
    writeln!(w, "query\trank\tanchor\tscore").map_err(io)?;
    for p in placements {
        let q = t.name(p.query)?;
        for (i, c) in p.candidates.iter().enumerate() {
            writeln!(w, "{q}\t{}\t{}\t{}", i + 1, t.name(c.anchor)?, c.score).map_err(io)?;
        }
    }
    finish(path, w)
}

/// `leaf<TAB>parent<TAB>rank<TAB>fold<TAB>suggestions`.
pub fn write_clean(path: &Path, t: &Taxonomy, report: &CleanReport, top: Option<usize>) -> Result<usize, Failure> {
    let rows: Vec<_> = match top {
        Some(n) => report.most_suspicious(n).iter().collect(),
        None => report.flagged().collect(),
    };
    let mut w = create(path)?;
    let io = |e| Failure::io(path, e);
    writeln!(w, "leaf\tparent\trank\tfold\tsuggestions").map_err(io)?;
    for e in &rows {
        let s = e
            .suggestions
            .iter()
            .map(|&a| t.name(a).map(str::to_string))
            .collect::<taxo_expand::Result<Vec<_>>>()?;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            t.name(e.leaf)?,
            t.name(e.parent)?,
            e.rank,
            e.fold,
            s.join("|")
        )
        .map_err(io)?;
    }
    finish(path, w)?;
    Ok(rows.len())
}
