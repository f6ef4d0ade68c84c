//! Plain-text dataset layout.
//!
//! ```text
//! DIR/edges.txt      "u v" per line, whitespace separated
//! DIR/features.csv   node_id,f0,...,f{d-1}
//! DIR/labels.csv     node_id,label   (absent node ids are unlabeled)
//! DIR/splits.json    [{"train": [...], "val": [...], "test": [...]}, ...]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{symmetrize_dedup, Graph, SplitSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            edges: dir.join("edges.txt"),
            features: dir.join("features.csv"),
            labels: dir.join("labels.csv"),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        kind => Error::format(path, line, format!("{kind:?}")),
    }
}

fn parse_node_id(path: &Path, line: u64, field: &str) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::format(path, line, format!("invalid node id {field:?}")))
}

fn read_features(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0) != Some("node_id") {
        return Err(Error::format(path, 1, "header must start with node_id"));
    }
    let dim = header.len() - 1;
    let mut rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != dim + 1 {
            return Err(Error::format(
                path,
                line,
                format!("expected {} fields, found {}", dim + 1, record.len()),
            ));
        }
        let id = parse_node_id(path, line, &record[0])?;
        let values = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::format(path, line, format!("invalid feature value {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.insert(id, values).is_some() {
            return Err(Error::format(path, line, format!("duplicate node id {id}")));
        }
    }
    let n = rows.len();
    if let Some((&last, _)) = rows.last_key_value() {
        if last != n - 1 {
            return Err(Error::format(
                path,
                0,
                format!("node ids must be 0..{n} without gaps (max id {last})"),
            ));
        }
    }
    let flat: Vec<f64> = rows.into_values().flatten().collect();
    Array2::from_shape_vec((n, dim), flat)
        .map_err(|e| Error::format(path, 0, format!("inconsistent dimensions: {e}")))
}

/// Reads labels and remaps the distinct values present onto `0..C` in
/// increasing order.
fn read_labels(path: &Path, n: usize) -> Result<(Vec<Option<usize>>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut raw = vec![None; n];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::format(path, line, "expected node_id,label"));
        }
        let id = parse_node_id(path, line, &record[0])?;
        if id >= n {
            return Err(Error::format(
                path,
                line,
                format!("node id {id} outside [0, {n})"),
            ));
        }
        let label = record[1]
            .parse::<u64>()
            .map_err(|_| Error::format(path, line, format!("invalid label {:?}", &record[1])))?;
        raw[id] = Some(label);
    }
    let distinct: Vec<u64> = {
        let mut v: Vec<u64> = raw.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let labels = raw
        .into_iter()
        .map(|l| l.map(|x| distinct.binary_search(&x).unwrap()))
        .collect();
    Ok((labels, distinct.len()))
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = read_to_string(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::format(path, lineno, "expected two node ids"));
        };
        let u = parse_node_id(path, lineno, a)?;
        let v = parse_node_id(path, lineno, b)?;
        for x in [u, v] {
            if x >= n {
                return Err(Error::format(
                    path,
                    lineno,
                    format!("node id {x} outside [0, {n})"),
                ));
            }
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Loads and validates a graph. The node count is the number of feature rows;
/// the class count is the number of distinct labels present.
pub fn load_dataset(paths: &DatasetPaths) -> Result<Graph> {
    let features = read_features(&paths.features)?;
    let n = features.nrows();
    let (labels, num_classes) = read_labels(&paths.labels, n)?;
    if num_classes == 0 {
        return Err(Error::format(&paths.labels, 0, "no labels present"));
    }
    let edges = read_edges(&paths.edges, n)?;
    let adjacency = symmetrize_dedup(&edges, n)?;
    Graph::new(adjacency, features, labels, num_classes)
}

#[derive(serde::Deserialize)]
struct RawSplit {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

pub fn load_splits(path: &Path, n: usize) -> Result<Vec<SplitSpec>> {
    let text = read_to_string(path)?;
    let raw: Vec<RawSplit> = serde_json::from_str(&text)
        .map_err(|e| Error::format(path, e.line() as u64, e.to_string()))?;
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let split = SplitSpec {
                train: r.train,
                val: r.val,
                test: r.test,
            };
            split
                .validate(n)
                .map_err(|e| Error::Invalid(format!("split {i}: {e}")))?;
            Ok(split)
        })
        .collect()
}

pub fn write_splits(path: &Path, splits: &[SplitSpec]) -> Result<()> {
    let text = serde_json::to_string(splits).expect("splits serialize");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `graph` (and optionally its splits) in the layout [`load_dataset`]
/// reads. Unlabeled nodes are omitted from `labels.csv`.
pub fn write_dataset(dir: &Path, graph: &Graph, splits: &[SplitSpec]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DatasetPaths::in_dir(dir);

    let write = |path: &Path, body: &dyn Fn(&mut BufWriter<fs::File>) -> std::io::Result<()>| {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    };

    write(&paths.edges, &|w| {
        for (u, v) in graph.adjacency().edges() {
            writeln!(w, "{u} {v}")?;
        }
        Ok(())
    })?;
    write(&paths.features, &|w| {
        write!(w, "node_id")?;
        for j in 0..graph.feature_dim() {
            write!(w, ",f{j}")?;
        }
        writeln!(w)?;
        for (u, row) in graph.features().rows().into_iter().enumerate() {
            write!(w, "{u}")?;
            for x in row {
                // `{:?}` on f64 prints the shortest round-trip representation.
                write!(w, ",{x:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write(&paths.labels, &|w| {
        writeln!(w, "node_id,label")?;
        for (u, l) in graph.labels().iter().enumerate() {
            if let Some(c) = l {
                writeln!(w, "{u},{c}")?;
            }
        }
        Ok(())
    })?;
    if !splits.is_empty() {
        write_splits(&dir.join("splits.json"), splits)?;
    }
    Ok(())
}
