//! Word2vec text-format embedding tables.
//!
//! The format is a header line `count dim` followed by one line per entry:
//! the name, then `dim` whitespace-separated reals. Names may contain spaces;
//! the last `dim` fields of a line are always the vector.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct EmbeddingTable {
    dimension: usize,
    names: Vec<String>,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            ..Default::default()
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.vectors.get(name).map(Vec::as_slice)
    }

    /// Looks up `name`, failing with [`Error::MissingEmbedding`].
    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.get(name).ok_or_else(|| Error::MissingEmbedding(name.to_string()))
    }

    /// Names in insertion (file) order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn insert(&mut self, name: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let name = name.into();
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                name,
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if self.vectors.insert(name.clone(), vector).is_some() {
            return Err(Error::DuplicateName(name));
        }
        self.names.push(name);
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file), path)
    }

    /// Parses word2vec text from `reader`; `origin` only labels errors.
    pub fn parse(reader: impl BufRead, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = reader.lines().enumerate();
        let (count, dimension) = loop {
            let Some((i, line)) = lines.next() else {
                return Err(parse_err(1, "missing header line".into()));
            };
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                [c, d] => c.parse::<usize>().ok().zip(d.parse::<usize>().ok()),
                _ => None,
            };
            break parsed.ok_or_else(|| parse_err(i + 1, format!("expected header \"count dim\", got {line:?}")))?;
        };
        let mut table = EmbeddingTable::new(dimension);
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(origin, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() <= dimension {
                return Err(Error::DimensionMismatch {
                    name: fields[0].to_string(),
                    expected: dimension,
                    found: fields.len() - 1,
                });
            }
            let split = fields.len() - dimension;
            let name = fields[..split].join(" ");
            let vector = fields[split..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(i + 1, format!("bad number for {name:?}: {e}")))?;
            table.insert(name, vector).map_err(|e| match e {
                Error::DuplicateName(n) => parse_err(i + 1, format!("duplicate name {n:?}")),
                other => other,
            })?;
        }
        if table.len() != count {
            return Err(parse_err(1, format!("header declares {count} vectors, found {}", table.len())));
        }
        Ok(table)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dimension)?;
        for name in &self.names {
            write!(w, "{name}")?;
            for x in &self.vectors[name] {
                // `{}` on f64 prints the shortest round-tripping form.
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
