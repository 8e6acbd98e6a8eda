//! Dataset directories.
//!
//! ```text
//! meta.json      {"num_nodes", "num_classes", "feature_dim", "name"}
//! edges.csv      header src,dst; one undirected edge per line
//! features.csv   no header; num_nodes rows of feature_dim reals
//! labels.csv     header node,label; every node exactly once
//! masks.json     optional {"train": [...], "val": [...], "test": [...]}
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, UplError};
use crate::graph::SparseGraph;
use crate::nn::DenseMatrix;

pub const META_FILE: &str = "meta.json";
pub const EDGES_FILE: &str = "edges.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const MASKS_FILE: &str = "masks.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub name: String,
}

/// Train/validation/test membership, one flag per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskIndices {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

impl Masks {
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            train: vec![false; num_nodes],
            val: vec![false; num_nodes],
            test: vec![false; num_nodes],
        }
    }

    pub fn from_indices(num_nodes: usize, train: &[usize], val: &[usize], test: &[usize]) -> Result<Self> {
        let to_mask = |indices: &[usize]| -> Result<Vec<bool>> {
            let mut mask = vec![false; num_nodes];
            for &i in indices {
                if i >= num_nodes {
                    return Err(UplError::NodeOutOfRange { index: i, num_nodes });
                }
                mask[i] = true;
            }
            Ok(mask)
        };
        let masks = Self {
            train: to_mask(train)?,
            val: to_mask(val)?,
            test: to_mask(test)?,
        };
        masks.validate(num_nodes)?;
        Ok(masks)
    }

    pub fn num_nodes(&self) -> usize {
        self.train.len()
    }

    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        for (name, mask) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if mask.len() != num_nodes {
                return Err(UplError::DimensionMismatch {
                    context: "masks",
                    expected: format!("{name} mask of length {num_nodes}"),
                    actual: mask.len().to_string(),
                });
            }
        }
        if let Some(node) = (0..num_nodes)
            .find(|&i| u8::from(self.train[i]) + u8::from(self.val[i]) + u8::from(self.test[i]) > 1)
        {
            return Err(UplError::invalid(format!("node {node} is in more than one mask")));
        }
        Ok(())
    }

    /// Nodes carrying any of the three labels.
    pub fn labeled(&self) -> Vec<bool> {
        (0..self.num_nodes())
            .map(|i| self.train[i] || self.val[i] || self.test[i])
            .collect()
    }

    fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    pub fn to_json(&self) -> String {
        let doc = MaskIndices {
            train: Self::indices(&self.train),
            val: Self::indices(&self.val),
            test: Self::indices(&self.test),
        };
        let mut out = serde_json::to_string(&doc).expect("index lists always serialize");
        out.push('\n');
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| UplError::io(path, e))
    }

    pub fn read(path: &Path, num_nodes: usize) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| UplError::io(path, e))?;
        let doc: MaskIndices = serde_json::from_str(&text).map_err(|source| UplError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_indices(num_nodes, &doc.train, &doc.val, &doc.test)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: SparseGraph,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub masks: Option<Masks>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        graph: SparseGraph,
        features: DenseMatrix,
        labels: Vec<usize>,
        num_classes: usize,
        masks: Option<Masks>,
    ) -> Result<Self> {
        let dataset = Self {
            name: name.into(),
            graph,
            features,
            labels,
            num_classes,
            masks,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.num_classes == 0 {
            return Err(UplError::invalid("dataset needs at least one class"));
        }
        if self.features.rows() != n {
            return Err(UplError::DimensionMismatch {
                context: "dataset features",
                expected: format!("{n} rows"),
                actual: self.features.rows().to_string(),
            });
        }
        if self.labels.len() != n {
            return Err(UplError::DimensionMismatch {
                context: "dataset labels",
                expected: format!("{n} labels"),
                actual: self.labels.len().to_string(),
            });
        }
        if let Some((node, &label)) = self.labels.iter().enumerate().find(|(_, &l)| l >= self.num_classes) {
            return Err(UplError::invalid(format!(
                "label {label} of node {node} outside [0, {})",
                self.num_classes
            )));
        }
        if !self.features.is_finite() {
            return Err(UplError::NonFinite("dataset features".into()));
        }
        if let Some(masks) = &self.masks {
            masks.validate(n)?;
        }
        Ok(())
    }

    pub fn masks(&self) -> Result<&Masks> {
        self.masks
            .as_ref()
            .ok_or_else(|| UplError::invalid(format!("dataset {} has no train/val/test masks", self.name)))
    }

    pub fn with_masks(mut self, masks: Masks) -> Result<Self> {
        masks.validate(self.num_nodes())?;
        self.masks = Some(masks);
        Ok(self)
    }

    /// Scales every feature row to unit sum; all-zero rows are left alone.
    pub fn row_normalized(mut self) -> Self {
        for i in 0..self.features.rows() {
            let row = self.features.row_mut(i);
            let sum: f64 = row.iter().sum();
            if sum != 0.0 {
                row.iter_mut().for_each(|x| *x /= sum);
            }
        }
        self
    }

    /// Count of nodes per class within `mask`.
    pub fn class_counts(&self, mask: &[bool]) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for (&label, _) in self.labels.iter().zip(mask).filter(|(_, &m)| m) {
            counts[label] += 1;
        }
        counts
    }

    pub fn meta(&self) -> Meta {
        Meta {
            num_nodes: self.num_nodes(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim(),
            name: self.name.clone(),
        }
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> UplError {
    UplError::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| UplError::io(path, e))
}

fn csv_error(path: &Path, err: csv::Error) -> UplError {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => UplError::io(path, e),
        other => parse_error(path, line, format!("{other:?}")),
    }
}

fn expect_header(path: &Path, reader: &mut csv::Reader<File>, expected: [&str; 2]) -> Result<()> {
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != expected {
        return Err(parse_error(
            path,
            1,
            format!("expected header {}, found {}", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_error(path, line, format!("invalid {what} {field:?}")))
}

fn pair_rows(path: &Path, header: [&str; 2]) -> Result<Vec<(u64, usize, usize)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(open(path)?);
    expect_header(path, &mut reader, header)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(parse_error(path, line, format!("expected 2 fields, found {}", record.len())));
        }
        let a = parse_field(path, line, &record[0], header[0])?;
        let b = parse_field(path, line, &record[1], header[1])?;
        rows.push((line, a, b));
    }
    Ok(rows)
}

fn read_meta(dir: &Path) -> Result<Meta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| UplError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| UplError::Json { path, source })
}

fn read_edges(dir: &Path, num_nodes: usize) -> Result<SparseGraph> {
    let path = dir.join(EDGES_FILE);
    let mut edges = Vec::new();
    for (line, u, v) in pair_rows(&path, ["src", "dst"])? {
        if let Some(bad) = [u, v].into_iter().find(|&x| x >= num_nodes) {
            return Err(parse_error(&path, line, format!("node {bad} outside [0, {num_nodes})")));
        }
        edges.push((u, v));
    }
    SparseGraph::from_edges(num_nodes, &edges)
}

fn read_features(dir: &Path, meta: &Meta) -> Result<DenseMatrix> {
    let path = dir.join(FEATURES_FILE);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(open(&path)?);
    let mut values = Vec::with_capacity(meta.num_nodes * meta.feature_dim);
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != meta.feature_dim {
            return Err(parse_error(
                &path,
                line,
                format!("expected {} values, found {}", meta.feature_dim, record.len()),
            ));
        }
        for field in record.iter() {
            let x: f64 = parse_field(&path, line, field, "feature value")?;
            if !x.is_finite() {
                return Err(parse_error(&path, line, format!("non-finite feature value {field:?}")));
            }
            values.push(x);
        }
        rows += 1;
    }
    if rows != meta.num_nodes {
        return Err(parse_error(
            &path,
            rows as u64,
            format!("found {rows} feature rows, meta declares {} nodes", meta.num_nodes),
        ));
    }
    DenseMatrix::from_vec(meta.num_nodes, meta.feature_dim, values)
}

fn read_labels(dir: &Path, meta: &Meta) -> Result<Vec<usize>> {
    let path = dir.join(LABELS_FILE);
    let mut labels: Vec<Option<usize>> = vec![None; meta.num_nodes];
    for (line, node, label) in pair_rows(&path, ["node", "label"])? {
        if node >= meta.num_nodes {
            return Err(parse_error(&path, line, format!("node {node} outside [0, {})", meta.num_nodes)));
        }
        if label >= meta.num_classes {
            return Err(parse_error(
                &path,
                line,
                format!("label {label} outside [0, {})", meta.num_classes),
            ));
        }
        if labels[node].replace(label).is_some() {
            return Err(parse_error(&path, line, format!("node {node} labelled twice")));
        }
    }
    labels
        .iter()
        .enumerate()
        .map(|(node, label)| {
            label.ok_or_else(|| parse_error(&path, 0, format!("node {node} has no label")))
        })
        .collect()
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;
    if meta.num_nodes == 0 {
        return Err(UplError::invalid(format!("{}: num_nodes must be positive", dir.display())));
    }
    let graph = read_edges(dir, meta.num_nodes)?;
    let features = read_features(dir, &meta)?;
    let labels = read_labels(dir, &meta)?;
    let masks_path = dir.join(MASKS_FILE);
    let masks = if masks_path.exists() {
        Some(Masks::read(&masks_path, meta.num_nodes)?)
    } else {
        None
    };
    Dataset::new(meta.name, graph, features, labels, meta.num_classes, masks)
}

fn write_file(path: PathBuf, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(&path).map_err(|e| UplError::io(&path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| UplError::io(&path, e))
}

/// Writes `dataset` in the directory format. Reals use the shortest
/// representation that parses back to the same `f64`.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| UplError::io(dir, e))?;

    let meta = serde_json::to_string_pretty(&dataset.meta()).expect("meta always serializes");
    fs::write(dir.join(META_FILE), meta + "\n").map_err(|e| UplError::io(dir.join(META_FILE), e))?;

    write_file(dir.join(EDGES_FILE), |out| {
        writeln!(out, "src,dst")?;
        for (u, v) in dataset.graph.edges() {
            writeln!(out, "{u},{v}")?;
        }
        Ok(())
    })?;
    write_file(dir.join(FEATURES_FILE), |out| {
        for i in 0..dataset.num_nodes() {
            let row: Vec<String> = dataset.features.row(i).iter().map(f64::to_string).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    })?;
    write_file(dir.join(LABELS_FILE), |out| {
        writeln!(out, "node,label")?;
        for (node, label) in dataset.labels.iter().enumerate() {
            writeln!(out, "{node},{label}")?;
        }
        Ok(())
    })?;
    if let Some(masks) = &dataset.masks {
        masks.write(&dir.join(MASKS_FILE))?;
    }
    Ok(())
}
