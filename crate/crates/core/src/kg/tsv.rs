use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Graph, GraphBuilder};
use crate::{Error, Result};

/// Comment-prefixed line that declares an isolated node on serialization, so
/// that `ingest(serialize(g)) == g` also holds for graphs with isolated
/// nodes. Readers that treat `#` lines as comments skip it.
pub const NODE_DIRECTIVE: &str = "#@node";

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Keep only rows whose language column equals this tag. Rows without a
    /// language column never match a filter.
    pub lang_filter: Option<String>,
    pub bidirectional: bool,
}

impl Graph {
    /// Reads an assertion file: `relation \t head \t tail [\t language]`.
    pub fn ingest(path: impl AsRef<Path>, lang_filter: Option<&str>, bidirectional: bool) -> Result<Graph> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let opts = IngestOptions {
            lang_filter: lang_filter.map(str::to_string),
            bidirectional,
        };
        Self::read_tsv(BufReader::new(file), &path.display().to_string(), &opts)
    }

    pub fn read_tsv(reader: impl BufRead, source_name: &str, opts: &IngestOptions) -> Result<Graph> {
        let mut b = GraphBuilder::default();
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::Parse {
                source_name: source_name.to_string(),
                line: lineno,
                msg: e.to_string(),
            })?;
            let line = line.trim_end_matches(['\r', '\n']);
            if let Some(rest) = line.strip_prefix(NODE_DIRECTIVE) {
                let id = rest.trim_start_matches('\t');
                if !id.is_empty() {
                    b.add_node(id);
                }
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let (rel, head, tail, lang) = match cols.as_slice() {
                [r, h, t] => (*r, *h, *t, None),
                [r, h, t, l] => (*r, *h, *t, Some(*l)),
                _ => {
                    return Err(Error::Parse {
                        source_name: source_name.to_string(),
                        line: lineno,
                        msg: format!("expected 3 or 4 tab-separated columns, found {}", cols.len()),
                    })
                }
            };
            if [rel, head, tail].iter().any(|c| c.is_empty()) {
                return Err(Error::Parse {
                    source_name: source_name.to_string(),
                    line: lineno,
                    msg: "empty relation, head or tail".to_string(),
                });
            }
            if let Some(filter) = &opts.lang_filter {
                if lang != Some(filter.as_str()) {
                    continue;
                }
            }
            b.add_edge(head, rel, tail);
            if opts.bidirectional {
                b.add_edge(tail, rel, head);
            }
        }
        Ok(b.build())
    }

    /// Writes the graph in the assertion format, without a language column.
    pub fn write_tsv(&self, mut out: impl Write) -> std::io::Result<()> {
        for ix in 0..self.node_count() {
            if self.degree(ix) == 0 && !self.edge_indices().iter().any(|&(h, _, t)| h == ix || t == ix) {
                writeln!(out, "{NODE_DIRECTIVE}\t{}", self.node_id(ix))?;
            }
        }
        for (h, r, t) in self.edges() {
            writeln!(out, "{r}\t{h}\t{t}")?;
        }
        Ok(())
    }

    pub fn to_tsv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("node ids are UTF-8")
    }

    pub fn save_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_tsv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}
