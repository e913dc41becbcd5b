//! Dataset files, manifests, and synthetic graph generators.
//!
//! On-disk layout:
//! - edge file: one `i j w` triple per line, whitespace separated; blank
//!   lines and lines starting with `#` are skipped;
//! - node file: CSV with a header row, one row per node in index order,
//!   holding the feature columns plus a label and a sensitive column.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, WeightedGraph};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: column `{column}` not found in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{what}: manifest expects {expected}, loaded {got}")]
    CountMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

fn default_true() -> bool {
    true
}

/// Describes one dataset on disk. Relative paths resolve against the
/// directory passed to [`load_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub edge_file: PathBuf,
    pub node_file: PathBuf,
    pub label_column: String,
    pub sensitive_column: String,
    /// Feature columns in order; all remaining columns when absent.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    /// Raw label values strictly above this become 1.
    #[serde(default)]
    pub label_threshold: Option<f64>,
    /// Raw sensitive values strictly above this become 1.
    #[serde(default)]
    pub sensitive_threshold: Option<f64>,
    /// Min-max scale every feature column to [0, 1].
    #[serde(default = "default_true")]
    pub normalize_features: bool,
    #[serde(default)]
    pub expected_nodes: Option<usize>,
    #[serde(default)]
    pub expected_edges: Option<usize>,
    #[serde(default)]
    pub expected_feature_dim: Option<usize>,
}

impl DatasetManifest {
    /// Manifest for files written by [`write_dataset`].
    pub fn for_files(name: &str, edge_file: &str, node_file: &str) -> Self {
        DatasetManifest {
            name: name.to_string(),
            edge_file: edge_file.into(),
            node_file: node_file.into(),
            label_column: "label".into(),
            sensitive_column: "sensitive".into(),
            feature_columns: None,
            label_threshold: None,
            sensitive_threshold: None,
            normalize_features: false,
            expected_nodes: None,
            expected_edges: None,
            expected_feature_dim: None,
        }
    }
}

fn binarize(path: &Path, line: usize, raw: f64, threshold: Option<f64>) -> Result<u8, DataError> {
    match threshold {
        Some(t) => Ok(u8::from(raw > t)),
        None if raw == 0.0 || raw == 1.0 => Ok(raw as u8),
        None => Err(DataError::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("value {raw} is not 0/1 and no threshold is configured"),
        }),
    }
}

pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize, f64)>, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut edges = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let bad = |msg: String| DataError::Parse { path: path.to_path_buf(), line: k + 1, msg };
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad(format!("expected `i j w`, found {} fields", parts.len())));
        }
        let i = parts[0].parse().map_err(|e| bad(format!("node index: {e}")))?;
        let j = parts[1].parse().map_err(|e| bad(format!("node index: {e}")))?;
        let w = parts[2].parse().map_err(|e| bad(format!("weight: {e}")))?;
        edges.push((i, j, w));
    }
    Ok(edges)
}

struct NodeTable {
    features: Array2<f64>,
    labels: Vec<u8>,
    sensitive: Vec<u8>,
}

fn read_node_table(path: &Path, m: &DatasetManifest) -> Result<NodeTable, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn { path: path.to_path_buf(), column: name.to_string() })
    };
    let label_col = col(&m.label_column)?;
    let sens_col = col(&m.sensitive_column)?;
    let feature_cols: Vec<usize> = match &m.feature_columns {
        Some(names) => names.iter().map(|c| col(c)).collect::<Result<_, _>>()?,
        None => (0..header.len()).filter(|&c| c != label_col && c != sens_col).collect(),
    };

    let mut flat = Vec::new();
    let mut labels = Vec::new();
    let mut sensitive = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let num = |c: usize| -> Result<f64, DataError> {
            let field = rec.get(c).unwrap_or("");
            field.trim().parse::<f64>().map_err(|e| DataError::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("column `{}` value `{field}`: {e}", &header[c]),
            })
        };
        for &c in &feature_cols {
            flat.push(num(c)?);
        }
        labels.push(binarize(path, line, num(label_col)?, m.label_threshold)?);
        sensitive.push(binarize(path, line, num(sens_col)?, m.sensitive_threshold)?);
    }
    let n = labels.len();
    let mut features = Array2::from_shape_vec((n, feature_cols.len()), flat).expect("row-major fill");
    if m.normalize_features {
        min_max_normalize(&mut features);
    }
    Ok(NodeTable { features, labels, sensitive })
}

/// Scale each column to [0, 1]; constant columns become 0.
pub fn min_max_normalize(x: &mut Array2<f64>) {
    for mut col in x.columns_mut() {
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        col.mapv_inplace(|v| if span > 0.0 { (v - lo) / span } else { 0.0 });
    }
}

/// Load and validate a dataset; relative manifest paths resolve against `base`.
pub fn load_dataset(m: &DatasetManifest, base: &Path) -> Result<WeightedGraph, DataError> {
    let edge_path = base.join(&m.edge_file);
    let node_path = base.join(&m.node_file);
    let nodes = read_node_table(&node_path, m)?;
    let edges = read_edge_list(&edge_path)?;
    let n = nodes.labels.len();
    let checks = [
        ("nodes", m.expected_nodes, n),
        ("edges", m.expected_edges, edges.len()),
        ("feature dim", m.expected_feature_dim, nodes.features.ncols()),
    ];
    for (what, expected, got) in checks {
        if let Some(expected) = expected {
            if expected != got {
                return Err(DataError::CountMismatch { what, expected, got });
            }
        }
    }
    Ok(WeightedGraph::new(n, &edges, nodes.features, nodes.labels, nodes.sensitive)?)
}

/// Only the structure and the sensitive attribute (plus labels when
/// `label_column` is given); the graph gets no feature columns.
pub fn load_structure(
    edge_path: &Path,
    node_path: &Path,
    sensitive_column: &str,
    sensitive_threshold: Option<f64>,
    label_column: Option<&str>,
) -> Result<WeightedGraph, DataError> {
    let file = File::open(node_path).map_err(io_err(node_path))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn { path: node_path.to_path_buf(), column: name.to_string() })
    };
    let sens_col = col(sensitive_column)?;
    let label_col = label_column.map(col).transpose()?;
    let mut sensitive = Vec::new();
    let mut labels = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let num = |c: usize| -> Result<f64, DataError> {
            let field = rec.get(c).unwrap_or("");
            field.trim().parse::<f64>().map_err(|e| DataError::Parse {
                path: node_path.to_path_buf(),
                line,
                msg: format!("column `{}` value `{field}`: {e}", &header[c]),
            })
        };
        sensitive.push(binarize(node_path, line, num(sens_col)?, sensitive_threshold)?);
        labels.push(match label_col {
            Some(c) => binarize(node_path, line, num(c)?, None)?,
            None => 0,
        });
    }
    let n = sensitive.len();
    let edges = read_edge_list(edge_path)?;
    Ok(WeightedGraph::new(n, &edges, Array2::zeros((n, 0)), labels, sensitive)?)
}

/// Read a manifest JSON file and load the dataset it describes.
pub fn load_manifest_file(path: &Path) -> Result<WeightedGraph, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    load_dataset(&m, path.parent().unwrap_or(Path::new(".")))
}

/// Write `g` as `<name>.edges`, `<name>.nodes.csv` and `<name>.json` under
/// `dir`, returning the manifest path. Floats use Rust's shortest
/// round-trip formatting, so loading the files back is exact.
pub fn write_dataset(g: &WeightedGraph, dir: &Path, name: &str) -> Result<PathBuf, DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let edge_name = format!("{name}.edges");
    let node_name = format!("{name}.nodes.csv");

    let edge_path = dir.join(&edge_name);
    let mut out = BufWriter::new(File::create(&edge_path).map_err(io_err(&edge_path))?);
    for (e, w) in g.edges().iter().zip(g.weights()) {
        writeln!(out, "{} {} {}", e.i, e.j, w).map_err(io_err(&edge_path))?;
    }
    out.flush().map_err(io_err(&edge_path))?;

    let node_path = dir.join(&node_name);
    let mut wtr = csv::Writer::from_path(&node_path)?;
    let mut header: Vec<String> = (0..g.feature_dim()).map(|k| format!("x{k}")).collect();
    header.push("label".into());
    header.push("sensitive".into());
    wtr.write_record(&header)?;
    for v in 0..g.n() {
        let mut row: Vec<String> = g.features().row(v).iter().map(|x| x.to_string()).collect();
        row.push(g.labels()[v].to_string());
        row.push(g.sensitive()[v].to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(io_err(&node_path))?;

    let mut m = DatasetManifest::for_files(name, &edge_name, &node_name);
    m.expected_nodes = Some(g.n());
    m.expected_edges = Some(g.num_edges());
    m.expected_feature_dim = Some(g.feature_dim());
    let manifest_path = dir.join(format!("{name}.json"));
    let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(io_err(&manifest_path))?;
    Ok(manifest_path)
}

/// Two-group stochastic block model with label-correlated Gaussian features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    /// Fraction of nodes in sensitive group 0.
    pub group_split: f64,
    /// Probability that a node's label equals its group id.
    pub label_group_correlation: f64,
    /// Edge probability between nodes of the same group.
    pub homophily: f64,
    /// Edge probability between nodes of different groups.
    pub heterophily: f64,
    pub feature_dim: usize,
    /// Mean of every feature is `feature_signal * y` (unit variance).
    pub feature_signal: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n: 400,
            group_split: 0.5,
            label_group_correlation: 0.8,
            homophily: 0.05,
            heterophily: 0.005,
            feature_dim: 8,
            feature_signal: 0.5,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let probs = [
            ("group_split", self.group_split),
            ("label_group_correlation", self.label_group_correlation),
            ("homophily", self.homophily),
            ("heterophily", self.heterophily),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(DataError::InvalidSpec(format!("{name} = {p} is not a probability")));
            }
        }
        if self.n < 2 {
            return Err(DataError::InvalidSpec(format!("n = {} is too small", self.n)));
        }
        if !self.feature_signal.is_finite() {
            return Err(DataError::InvalidSpec("feature_signal must be finite".into()));
        }
        Ok(())
    }
}

/// Sample a graph from `s`; identical specs give identical graphs.
pub fn generate_synthetic(s: &SynthSpec) -> Result<WeightedGraph, DataError> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let n0 = (s.n as f64 * s.group_split).round() as usize;
    let mut sensitive: Vec<u8> = (0..s.n).map(|v| u8::from(v >= n0)).collect();
    sensitive.shuffle(&mut rng);

    let labels: Vec<u8> =
        sensitive.iter().map(|&g| if rng.random_bool(s.label_group_correlation) { g } else { 1 - g }).collect();

    let mut edges = Vec::new();
    for i in 0..s.n {
        for j in i + 1..s.n {
            let p = if sensitive[i] == sensitive[j] { s.homophily } else { s.heterophily };
            if rng.random_bool(p) {
                edges.push((i, j, 1.0));
            }
        }
    }

    let features = Array2::from_shape_fn((s.n, s.feature_dim), |(v, _)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z + s.feature_signal * f64::from(labels[v])
    });
    Ok(WeightedGraph::new(s.n, &edges, features, labels, sensitive)?)
}

/// Erdős–Rényi graph with weights uniform in `weight_range`, random binary
/// labels and sensitive attribute, and four standard-normal features.
/// Resamples until both sensitive groups have positive volume.
pub fn random_graph(n: usize, p: f64, weight_range: (f64, f64), seed: u64) -> WeightedGraph {
    assert!(n >= 2, "need at least two nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let sensitive: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p) {
                    edges.push((i, j, rng.random_range(weight_range.0..weight_range.1)));
                }
            }
        }
        let features = Array2::from_shape_fn((n, 4), |_| StandardNormal.sample(&mut rng));
        let g = WeightedGraph::new(n, &edges, features, labels, sensitive).expect("valid by construction");
        let p = crate::graph::SensitivePartition::of(&g);
        if p.volumes[0] > 0.0 && p.volumes[1] > 0.0 {
            return g;
        }
    }
}
