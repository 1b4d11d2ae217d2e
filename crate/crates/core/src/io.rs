//! Edge lists, taxonomy loading and split files.
//!
//! * Edge file: UTF-8, one `parent<TAB>child` per line, no header. A line
//!   with a single field declares an isolated concept.
//! * Split file: three sections introduced by `## existing`,
//!   `## validation` and `## test`. The existing section is an edge file;
//!   the query sections hold `query<TAB>gold1|gold2|...`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::split::{Query, TaxonomySplit};
use crate::taxonomy::{Concept, ConceptId, Taxonomy};

/// One line of an edge file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EdgeLine {
    Edge(String, String),
    Isolated(String),
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn parse_edge_line(line: &str, path: &Path, lineno: usize) -> Result<Option<EdgeLine>> {
    let line = line.trim_end_matches(['\r', '\n']);
    if line.trim().is_empty() {
        return Ok(None);
    }
    let fields: Vec<&str> = line.split('\t').collect();
    match fields.as_slice() {
        [n] => Ok(Some(EdgeLine::Isolated(n.to_string()))),
        [p, c] if !p.is_empty() && !c.is_empty() => Ok(Some(EdgeLine::Edge(p.to_string(), c.to_string()))),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: format!("expected \"parent<TAB>child\", got {line:?}"),
        }),
    }
}

pub fn read_edges(path: impl AsRef<Path>) -> Result<Vec<EdgeLine>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(e) = parse_edge_line(&line, path, i + 1)? {
            out.push(e);
        }
    }
    Ok(out)
}

/// Assigns ids in order of first appearance and attaches embeddings by name.
pub fn taxonomy_from_lines(lines: &[EdgeLine], embeddings: &EmbeddingTable) -> Result<Taxonomy> {
    let mut ids: HashMap<String, ConceptId> = HashMap::new();
    let mut concepts = Vec::new();
    let mut intern = |name: &str, concepts: &mut Vec<Concept>| -> Result<ConceptId> {
        if let Some(&id) = ids.get(name) {
            return Ok(id);
        }
        let id = ConceptId(ids.len() as u32);
        let vector = embeddings.require(name)?.to_vec();
        concepts.push(Concept::new(id, name, vector));
        ids.insert(name.to_string(), id);
        Ok(id)
    };
    let mut edges = Vec::new();
    for line in lines {
        match line {
            EdgeLine::Edge(p, c) => {
                let p = intern(p, &mut concepts)?;
                let c = intern(c, &mut concepts)?;
                edges.push((p, c));
            }
            EdgeLine::Isolated(n) => {
                intern(n, &mut concepts)?;
            }
        }
    }
    Taxonomy::new(embeddings.dimension(), concepts, edges)
}

/// Loads an edge TSV and a word2vec text embedding file.
pub fn load_taxonomy(edge_file: impl AsRef<Path>, embedding_file: impl AsRef<Path>) -> Result<Taxonomy> {
    let embeddings = EmbeddingTable::read(embedding_file)?;
    let lines = read_edges(edge_file)?;
    taxonomy_from_lines(&lines, &embeddings)
}

fn check_name(name: &str, forbid_pipe: bool) -> Result<()> {
    if name.contains(['\t', '\n', '\r']) || (forbid_pipe && name.contains('|')) {
        return Err(Error::InvalidArgument(format!(
            "concept name {name:?} contains a reserved separator"
        )));
    }
    Ok(())
}

/// Writes edges (sorted by parent then child id), then isolated concepts.
pub fn write_edges_to(w: &mut impl Write, t: &Taxonomy) -> Result<()> {
    let io = |e| Error::io("<edges>", e);
    for (p, c) in t.edges() {
        let (p, c) = (t.name(p)?, t.name(c)?);
        check_name(p, false)?;
        check_name(c, false)?;
        writeln!(w, "{p}\t{c}").map_err(io)?;
    }
    for c in t.concepts() {
        if t.parents(c.id)?.is_empty() && t.children(c.id)?.is_empty() {
            check_name(&c.name, false)?;
            writeln!(w, "{}", c.name).map_err(io)?;
        }
    }
    Ok(())
}

pub fn write_edges(path: impl AsRef<Path>, t: &Taxonomy) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_edges_to(&mut w, t)?;
    w.flush().map_err(|e| Error::io(path, e))
}

const EXISTING: &str = "## existing";
const VALIDATION: &str = "## validation";
const TEST: &str = "## test";

pub fn write_split_to(w: &mut impl Write, split: &TaxonomySplit) -> Result<()> {
    let io = |e| Error::io("<split>", e);
    writeln!(w, "{EXISTING}").map_err(io)?;
    write_edges_to(w, &split.existing)?;
    for (header, queries) in [(VALIDATION, &split.validation), (TEST, &split.test)] {
        writeln!(w, "{header}").map_err(io)?;
        for q in queries {
            check_name(&q.concept.name, false)?;
            let gold = q
                .gold
                .iter()
                .map(|&g| {
                    let n = split.existing.name(g)?;
                    check_name(n, true)?;
                    Ok(n)
                })
                .collect::<Result<Vec<_>>>()?;
            writeln!(w, "{}\t{}", q.concept.name, gold.join("|")).map_err(io)?;
        }
    }
    Ok(())
}

pub fn write_split(path: impl AsRef<Path>, split: &TaxonomySplit) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_split_to(&mut w, split)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a split file. Existing concepts are numbered by first appearance;
/// queries get the ids that follow, in file order.
pub fn read_split(path: impl AsRef<Path>, embeddings: &EmbeddingTable) -> Result<TaxonomySplit> {
    let path = path.as_ref();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut section = None;
    let mut existing_lines = Vec::new();
    let mut query_lines: [Vec<(usize, String, String)>; 2] = [Vec::new(), Vec::new()];
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches('\r');
        match trimmed {
            EXISTING => section = Some(0),
            VALIDATION => section = Some(1),
            TEST => section = Some(2),
            _ if trimmed.trim().is_empty() => {}
            _ => match section {
                None => return Err(parse_err(i + 1, "content before \"## existing\"".into())),
                Some(0) => {
                    if let Some(e) = parse_edge_line(trimmed, path, i + 1)? {
                        existing_lines.push(e);
                    }
                }
                Some(s) => {
                    let (q, gold) = trimmed
                        .split_once('\t')
                        .ok_or_else(|| parse_err(i + 1, format!("expected \"query<TAB>gold\", got {trimmed:?}")))?;
                    query_lines[s - 1].push((i + 1, q.to_string(), gold.to_string()));
                }
            },
        }
    }
    let existing = taxonomy_from_lines(&existing_lines, embeddings)?;
    let mut next = existing.next_id().0;
    let mut sections = Vec::new();
    for lines in &query_lines {
        let mut queries = Vec::new();
        for (lineno, name, gold) in lines {
            let gold = gold
                .split('|')
                .map(|g| {
                    existing
                        .id_of(g)
                        .ok_or_else(|| parse_err(*lineno, format!("gold parent {g:?} not in existing taxonomy")))
                })
                .collect::<Result<Vec<_>>>()?;
            if existing.id_of(name).is_some() {
                return Err(parse_err(*lineno, format!("query {name:?} is also an existing concept")));
            }
            let vector = embeddings.require(name)?.to_vec();
            queries.push(Query {
                concept: Concept::new(ConceptId(next), name.as_str(), vector),
                gold,
            });
            next += 1;
        }
        sections.push(queries);
    }
    let test = sections.pop().unwrap_or_default();
    let validation = sections.pop().unwrap_or_default();
    Ok(TaxonomySplit {
        existing,
        validation,
        test,
    })
}
