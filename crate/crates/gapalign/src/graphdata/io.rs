//! Dataset directory reader/writer.
//!
//! Layout (all text, UTF-8, lines starting with '#' ignored):
//!   edges.tsv       one edge per line, tab-separated "u v", 0-indexed
//!   features.csv    N lines, d comma-separated floats
//!   labels.csv      N lines, "node_id,class_id"
//!   text_protos.csv C lines, d comma-separated floats
//!   meta.json       { n_nodes, dim, n_classes, class_names? }

use super::{DataError, TagGraph};
use crate::linalg::Mat;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    n_nodes: usize,
    dim: usize,
    n_classes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    class_names: Option<Vec<String>>,
}

fn read_to_string(dir: &Path, name: &str) -> Result<String, DataError> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(DataError::MissingFile(path.display().to_string()));
    }
    fs::read_to_string(&path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Yields (1-based line number, trimmed content) for data lines.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_float(file: &str, line: usize, tok: &str) -> Result<f64, DataError> {
    let v: f64 = tok.trim().parse().map_err(|_| DataError::Parse {
        file: file.into(),
        line,
        msg: format!("invalid float {tok:?}"),
    })?;
    if !v.is_finite() {
        return Err(DataError::NonFinite {
            file: file.into(),
            line,
        });
    }
    Ok(v)
}

fn parse_usize(file: &str, line: usize, tok: &str) -> Result<usize, DataError> {
    tok.trim().parse().map_err(|_| DataError::Parse {
        file: file.into(),
        line,
        msg: format!("invalid integer {tok:?}"),
    })
}

fn parse_float_table(
    file: &str,
    text: &str,
    n_rows: usize,
    n_cols: usize,
) -> Result<Mat, DataError> {
    let mut out = Mat::zeros((n_rows, n_cols));
    let mut count = 0usize;
    for (line, content) in data_lines(text) {
        if count >= n_rows {
            return Err(DataError::RowCountMismatch {
                file: file.into(),
                expected: n_rows,
                found: count + 1,
            });
        }
        let toks: Vec<&str> = content.split(',').collect();
        if toks.len() != n_cols {
            return Err(DataError::DimensionMismatch {
                file: file.into(),
                line,
                expected: n_cols,
                found: toks.len(),
            });
        }
        for (k, tok) in toks.iter().enumerate() {
            out[[count, k]] = parse_float(file, line, tok)?;
        }
        count += 1;
    }
    if count != n_rows {
        return Err(DataError::RowCountMismatch {
            file: file.into(),
            expected: n_rows,
            found: count,
        });
    }
    Ok(out)
}

/// Loads and validates a dataset directory. Directed edge files are accepted:
/// each pair is canonicalized to `(min, max)`; listing the same undirected
/// edge twice (in either orientation) is a duplicate.
pub fn load_graph(dir: &Path) -> Result<TagGraph, DataError> {
    let meta_text = read_to_string(dir, "meta.json")?;
    let meta: Meta = serde_json::from_str(&meta_text).map_err(|e| DataError::Parse {
        file: "meta.json".into(),
        line: e.line(),
        msg: e.to_string(),
    })?;

    let features = parse_float_table("features.csv", &read_to_string(dir, "features.csv")?, meta.n_nodes, meta.dim)?;
    let text_protos = parse_float_table(
        "text_protos.csv",
        &read_to_string(dir, "text_protos.csv")?,
        meta.n_classes,
        meta.dim,
    )?;

    // labels.csv: "node_id,class_id", every node exactly once, any order
    let labels_text = read_to_string(dir, "labels.csv")?;
    let file = "labels.csv";
    let mut labels = vec![usize::MAX; meta.n_nodes];
    let mut n_labeled = 0usize;
    for (line, content) in data_lines(&labels_text) {
        let toks: Vec<&str> = content.split(',').collect();
        if toks.len() != 2 {
            return Err(DataError::DimensionMismatch {
                file: file.into(),
                line,
                expected: 2,
                found: toks.len(),
            });
        }
        let node = parse_usize(file, line, toks[0])?;
        let class = parse_usize(file, line, toks[1])?;
        if node >= meta.n_nodes {
            return Err(DataError::NodeOutOfRange {
                file: file.into(),
                line,
                node,
                n_nodes: meta.n_nodes,
            });
        }
        if class >= meta.n_classes {
            return Err(DataError::LabelOutOfRange {
                file: file.into(),
                line,
                label: class,
                n_classes: meta.n_classes,
            });
        }
        if labels[node] != usize::MAX {
            return Err(DataError::Parse {
                file: file.into(),
                line,
                msg: format!("node {node} labeled twice"),
            });
        }
        labels[node] = class;
        n_labeled += 1;
    }
    if n_labeled != meta.n_nodes {
        return Err(DataError::RowCountMismatch {
            file: file.into(),
            expected: meta.n_nodes,
            found: n_labeled,
        });
    }

    // edges.tsv
    let edges_text = read_to_string(dir, "edges.tsv")?;
    let file = "edges.tsv";
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for (line, content) in data_lines(&edges_text) {
        let toks: Vec<&str> = content.split('\t').collect();
        if toks.len() != 2 {
            return Err(DataError::DimensionMismatch {
                file: file.into(),
                line,
                expected: 2,
                found: toks.len(),
            });
        }
        let u = parse_usize(file, line, toks[0])?;
        let v = parse_usize(file, line, toks[1])?;
        for node in [u, v] {
            if node >= meta.n_nodes {
                return Err(DataError::NodeOutOfRange {
                    file: file.into(),
                    line,
                    node,
                    n_nodes: meta.n_nodes,
                });
            }
        }
        if u == v {
            return Err(DataError::SelfLoop {
                file: file.into(),
                line,
                node: u,
            });
        }
        let e = (u.min(v), u.max(v));
        if !seen.insert(e) {
            return Err(DataError::DuplicateEdge {
                file: file.into(),
                line,
                u: e.0,
                v: e.1,
            });
        }
        edges.push(e);
    }
    edges.sort_unstable();

    let g = TagGraph {
        n_nodes: meta.n_nodes,
        dim: meta.dim,
        edges,
        features,
        labels,
        n_classes: meta.n_classes,
        text_protos,
        class_names: meta.class_names,
    };
    g.validate(true)?;
    Ok(g)
}

fn fmt_row(row: &[f64]) -> String {
    row.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), DataError> {
    let path = dir.join(name);
    let mut f = fs::File::create(&path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(contents.as_bytes()).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the five dataset files. Floats use the shortest representation that
/// round-trips, so `load_graph(save_graph(g))` reproduces `g` exactly and the
/// output bytes are deterministic.
pub fn save_graph(g: &TagGraph, dir: &Path) -> Result<(), DataError> {
    g.validate(true)?;
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.display().to_string(),
        source,
    })?;

    let mut edges = String::new();
    for &(u, v) in &g.edges {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write_file(dir, "edges.tsv", &edges)?;

    let mut feat = String::new();
    for row in g.features.rows() {
        feat.push_str(&fmt_row(row.as_slice().expect("contiguous row")));
        feat.push('\n');
    }
    write_file(dir, "features.csv", &feat)?;

    let mut labels = String::new();
    for (i, &y) in g.labels.iter().enumerate() {
        labels.push_str(&format!("{i},{y}\n"));
    }
    write_file(dir, "labels.csv", &labels)?;

    let mut protos = String::new();
    for row in g.text_protos.rows() {
        protos.push_str(&fmt_row(row.as_slice().expect("contiguous row")));
        protos.push('\n');
    }
    write_file(dir, "text_protos.csv", &protos)?;

    let meta = Meta {
        n_nodes: g.n_nodes,
        dim: g.dim,
        n_classes: g.n_classes,
        class_names: g.class_names.clone(),
    };
    let mut meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    meta_json.push('\n');
    write_file(dir, "meta.json", &meta_json)
}
