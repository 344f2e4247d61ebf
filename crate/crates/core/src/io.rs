//! JSON and CSV file formats.
//!
//! Every float is written with 17 significant digits (`{:.16e}`), which
//! round-trips `f64` exactly. Every output file carries `schema_version`.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::graph::{uniform_histogram, Graph};

pub const SCHEMA_VERSION: u32 = 1;

/// Compact JSON formatter writing floats with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactFloatFormatter;

impl serde_json::ser::Formatter for ExactFloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{value:.8e}")
    }
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn format_err(path: &Path, pointer: impl Into<String>, message: impl Into<String>) -> Error {
    let pointer = pointer.into();
    Error::Format {
        path: path.display().to_string(),
        pointer: if pointer.is_empty() { "/".into() } else { pointer },
        message: message.into(),
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloatFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::InvalidParameter(format!("cannot serialize: {e}")))?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json_string(value)?).map_err(|e| io_err(path, e))
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    out
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| format_err(path, json_pointer(e.path()), e.inner().to_string()))
}

/// Reads and deserializes a JSON file; errors name the file and the JSON
/// pointer of the offending value.
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_json(path, &text)
}

/// Edge tensor of a graph file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeRecord {
    /// `n × n × T` nested arrays.
    Dense(Vec<Vec<Vec<f64>>>),
    Sparse(SparseEdges),
}

/// Edge tensor equal to `default` on every pair except the listed
/// `[i, j, t, value]` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseEdges {
    pub shape_t: usize,
    pub triplets: Vec<(usize, usize, usize, f64)>,
    pub default: Vec<f64>,
}

/// Graph file. Absent weights mean uniform `1/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub n: usize,
    pub node_features: Vec<Vec<f64>>,
    pub structure: Vec<Vec<f64>>,
    pub edge_features: EdgeRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl GraphRecord {
    /// Dense record of `g`; `top_level` adds the schema version.
    pub fn from_graph(g: &Graph, top_level: bool) -> Self {
        let n = g.n();
        GraphRecord {
            schema_version: top_level.then_some(SCHEMA_VERSION),
            n,
            node_features: g.node_features().rows().into_iter().map(|r| r.to_vec()).collect(),
            structure: g.structure().rows().into_iter().map(|r| r.to_vec()).collect(),
            edge_features: EdgeRecord::Dense(
                (0..n)
                    .map(|i| (0..n).map(|j| g.edge_features().slice(ndarray::s![i, j, ..]).to_vec()).collect())
                    .collect(),
            ),
            weights: Some(g.weights().to_vec()),
        }
    }

    /// Validated graph; `pointer` locates this record inside its file.
    pub fn to_graph(&self, path: &Path, pointer: &str) -> Result<Graph> {
        let n = self.n;
        let here = |field: &str, msg: String| format_err(path, format!("{pointer}/{field}"), msg);
        if self.node_features.len() != n {
            return Err(here("node_features", format!("expected {n} rows, found {}", self.node_features.len())));
        }
        let s = self.node_features.first().map_or(0, Vec::len);
        for (i, row) in self.node_features.iter().enumerate() {
            if row.len() != s {
                return Err(here(&format!("node_features/{i}"), format!("expected {s} entries, found {}", row.len())));
            }
        }
        if self.structure.len() != n {
            return Err(here("structure", format!("expected {n} rows, found {}", self.structure.len())));
        }
        for (i, row) in self.structure.iter().enumerate() {
            if row.len() != n {
                return Err(here(&format!("structure/{i}"), format!("expected {n} entries, found {}", row.len())));
            }
        }
        let edges = match &self.edge_features {
            EdgeRecord::Dense(rows) => {
                if rows.len() != n {
                    return Err(here("edge_features/dense", format!("expected {n} rows, found {}", rows.len())));
                }
                let t = rows.first().and_then(|r| r.first()).map_or(0, Vec::len);
                let mut e = Array3::zeros((n, n, t));
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != n {
                        return Err(here(
                            &format!("edge_features/dense/{i}"),
                            format!("expected {n} entries, found {}", row.len()),
                        ));
                    }
                    for (j, v) in row.iter().enumerate() {
                        if v.len() != t {
                            return Err(here(
                                &format!("edge_features/dense/{i}/{j}"),
                                format!("expected {t} channels, found {}", v.len()),
                            ));
                        }
                        for (k, &x) in v.iter().enumerate() {
                            e[[i, j, k]] = x;
                        }
                    }
                }
                e
            }
            EdgeRecord::Sparse(sp) => {
                let t = sp.shape_t;
                if sp.default.len() != t {
                    return Err(here(
                        "edge_features/sparse/default",
                        format!("expected {t} channels, found {}", sp.default.len()),
                    ));
                }
                let mut e = Array3::zeros((n, n, t));
                for i in 0..n {
                    for j in 0..n {
                        for (k, &d) in sp.default.iter().enumerate() {
                            e[[i, j, k]] = d;
                        }
                    }
                }
                let mut seen = std::collections::HashSet::new();
                for (idx, &(i, j, k, v)) in sp.triplets.iter().enumerate() {
                    let at = format!("edge_features/sparse/triplets/{idx}");
                    if i >= n || j >= n || k >= t {
                        return Err(here(&at, format!("index ({i}, {j}, {k}) outside {n}x{n}x{t}")));
                    }
                    if !seen.insert((i, j, k)) {
                        return Err(here(&at, format!("duplicate entry ({i}, {j}, {k})")));
                    }
                    e[[i, j, k]] = v;
                }
                e
            }
        };
        let f = Array2::from_shape_fn((n, s), |(i, k)| self.node_features[i][k]);
        let a = Array2::from_shape_fn((n, n), |(i, j)| self.structure[i][j]);
        let w = match &self.weights {
            Some(w) => Array1::from(w.clone()),
            None => uniform_histogram(n),
        };
        Graph::new(f, a, edges, w).map_err(|e| format_err(path, pointer.to_string(), e.to_string()))
    }
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let record: GraphRecord = read_json(path)?;
    record.to_graph(path, "")
}

pub fn write_graph(path: impl AsRef<Path>, g: &Graph) -> Result<()> {
    write_json(path, &GraphRecord::from_graph(g, true))
}

/// Graphs with optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graphs: Vec<Graph>,
    pub labels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub graphs: Vec<GraphRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

fn graphs_from_records(path: &Path, records: &[GraphRecord], prefix: &str) -> Result<Vec<Graph>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_graph(path, &format!("{prefix}/{i}")))
        .collect()
}

/// Reads a dataset: either a bare array of graphs or an object with
/// `graphs` and optional `labels`.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    if text.trim_start().starts_with('[') {
        let records: Vec<GraphRecord> = parse_json(path, &text)?;
        return Ok(Dataset {
            graphs: graphs_from_records(path, &records, "")?,
            labels: None,
        });
    }
    let record: DatasetRecord = parse_json(path, &text)?;
    if let Some(labels) = &record.labels {
        if labels.len() != record.graphs.len() {
            return Err(format_err(
                path,
                "/labels",
                format!("expected {} labels, found {}", record.graphs.len(), labels.len()),
            ));
        }
    }
    Ok(Dataset {
        graphs: graphs_from_records(path, &record.graphs, "/graphs")?,
        labels: record.labels,
    })
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    write_json(
        path,
        &DatasetRecord {
            schema_version: Some(SCHEMA_VERSION),
            graphs: dataset.graphs.iter().map(|g| GraphRecord::from_graph(g, false)).collect(),
            labels: dataset.labels.clone(),
        },
    )
}

/// Dictionary file: atoms plus the metadata of the run that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryRecord {
    pub schema_version: u32,
    pub atom_sizes: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub config: serde_json::Value,
    pub atoms: Vec<GraphRecord>,
}

pub fn write_dictionary(path: impl AsRef<Path>, dict: &Dictionary, seed: u64, config: serde_json::Value) -> Result<()> {
    write_json(
        path,
        &DictionaryRecord {
            schema_version: SCHEMA_VERSION,
            atom_sizes: dict.atom_sizes(),
            seed,
            config,
            atoms: dict.atoms().iter().map(|g| GraphRecord::from_graph(g, false)).collect(),
        },
    )
}

pub fn read_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    let path = path.as_ref();
    let record: DictionaryRecord = read_json(path)?;
    let atoms = graphs_from_records(path, &record.atoms, "/atoms")?;
    Dictionary::new(atoms).map_err(|e| format_err(path, "/atoms", e.to_string()))
}

/// Loss trace written next to a barycenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema_version: u32,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub schema_version: u32,
    pub value: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringRecord {
    pub schema_version: u32,
    pub k: usize,
    pub assignments: Vec<usize>,
    pub inertia_trace: Vec<f64>,
    /// Centroid graph files, relative to the clustering file.
    pub centroids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjusted_rand_index: Option<f64>,
}

/// Candidate lists of the test points, with optional true indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSetRecord {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub candidates: Vec<Vec<GraphRecord>>,
    #[serde(default)]
    pub truths: Option<Vec<usize>>,
}

/// Candidate lists read from a candidate-set file.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSets {
    pub candidates: Vec<Vec<Graph>>,
    pub truths: Option<Vec<usize>>,
}

pub fn read_candidates(path: impl AsRef<Path>) -> Result<CandidateSets> {
    let path = path.as_ref();
    let record: CandidateSetRecord = read_json(path)?;
    let candidates = record
        .candidates
        .iter()
        .enumerate()
        .map(|(t, list)| graphs_from_records(path, list, &format!("/candidates/{t}")))
        .collect::<Result<Vec<_>>>()?;
    if let Some(truths) = &record.truths {
        if truths.len() != candidates.len() {
            return Err(format_err(
                path,
                "/truths",
                format!("expected {} truths, found {}", candidates.len(), truths.len()),
            ));
        }
        for (t, (&truth, list)) in truths.iter().zip(&candidates).enumerate() {
            if truth >= list.len() {
                return Err(format_err(
                    path,
                    format!("/truths/{t}"),
                    format!("index {truth} outside a list of {} candidates", list.len()),
                ));
            }
        }
    }
    Ok(CandidateSets {
        candidates,
        truths: record.truths,
    })
}

pub fn write_candidates(path: impl AsRef<Path>, sets: &CandidateSets) -> Result<()> {
    write_json(
        path,
        &CandidateSetRecord {
            schema_version: Some(SCHEMA_VERSION),
            candidates: sets
                .candidates
                .iter()
                .map(|list| list.iter().map(|g| GraphRecord::from_graph(g, false)).collect())
                .collect(),
            truths: sets.truths.clone(),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRecord {
    pub index: usize,
    /// `None` when the solve for this candidate failed.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub schema_version: u32,
    pub rankings: Vec<Vec<RankedRecord>>,
    /// Top-k accuracy for k = 1, 2, ...; present when truths are known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<Vec<f64>>,
}

/// Writes a matrix as CSV with the given header row.
pub fn write_matrix_csv(path: impl AsRef<Path>, header: &[String], m: ArrayView2<f64>) -> Result<()> {
    let rows: Vec<Vec<String>> = m.rows().into_iter().map(|r| r.iter().map(|&v| format_f64(v)).collect()).collect();
    write_csv(path, header, &rows)
}

pub fn write_csv(path: impl AsRef<Path>, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a numeric CSV with a header row; returns the header and the matrix.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Array2<f64>)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| io_err(path, e))?.iter().map(str::to_string).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| io_err(path, e))?;
        if record.len() != header.len() {
            return Err(format_err(
                path,
                format!("row {}", i + 1),
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| format_err(path, format!("row {}, column {}", i + 1, j + 1), format!("{e}: {field:?}")))?;
            values.push(v);
        }
        rows += 1;
    }
    let m = Array2::from_shape_vec((rows, header.len()), values).expect("row lengths checked");
    Ok((header, m))
}
