//! TU-collection bundles and the kernel-matrix file format.
//!
//! A bundle `<name>` in a directory holds
//! `<name>_A.txt` (one `i, j` edge per line, 1-based global vertex ids),
//! `<name>_graph_indicator.txt` (graph id of vertex `v` on line `v`) and
//! `<name>_graph_labels.txt` (one integer class per graph).
//!
//! Kernel files are a `HAQJSK-KM v1` header, a JSON metadata line, the size
//! `N`, then `N` rows of space-separated values with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset};
use crate::kernels::{KernelConfig, KernelMatrix};

pub const KERNEL_FILE_HEADER: &str = "HAQJSK-KM v1";

/// Location of a TU bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TudBundle {
    pub dir: PathBuf,
    pub name: String,
}

impl TudBundle {
    pub fn new(dir: impl Into<PathBuf>, name: impl Into<String>) -> Self {
        TudBundle {
            dir: dir.into(),
            name: name.into(),
        }
    }

    pub fn file(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}.txt", self.name))
    }

    /// Files read by [`load_tud`], in a fixed order.
    pub fn required_files(&self) -> [PathBuf; 3] {
        [
            self.file("A"),
            self.file("graph_indicator"),
            self.file("graph_labels"),
        ]
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn int<T: std::str::FromStr>(path: &Path, line: usize, token: &str) -> Result<T> {
    token.trim().parse().map_err(|_| {
        Error::parse(
            path,
            line,
            format!("expected an integer, found '{}'", token.trim()),
        )
    })
}

/// Loads a bundle. Graphs come in ascending graph id, vertices in ascending
/// global id; class labels are remapped to `0..class_count` in sorted order.
pub fn load_tud(bundle: &TudBundle) -> Result<GraphDataset> {
    let [a_path, ind_path, lab_path] = bundle.required_files();

    let lab_text = read(&lab_path)?;
    let raw_labels = lines(&lab_text)
        .map(|(ln, l)| int::<i64>(&lab_path, ln, l))
        .collect::<Result<Vec<_>>>()?;
    let graph_count = raw_labels.len();
    if graph_count == 0 {
        return Err(Error::parse(&lab_path, 1, "no graph labels"));
    }
    let mut classes = raw_labels.clone();
    classes.sort_unstable();
    classes.dedup();

    let ind_text = read(&ind_path)?;
    let mut graph_of = Vec::new();
    for (ln, l) in lines(&ind_text) {
        let g: usize = int(&ind_path, ln, l)?;
        if g == 0 || g > graph_count {
            return Err(Error::parse(
                &ind_path,
                ln,
                format!("graph id {g} outside 1..={graph_count} (label count)"),
            ));
        }
        graph_of.push(g - 1);
    }
    let mut local = vec![0usize; graph_of.len()];
    let mut sizes = vec![0usize; graph_count];
    for (v, &g) in graph_of.iter().enumerate() {
        local[v] = sizes[g];
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::parse(
            &ind_path,
            graph_of.len(),
            format!("graph {} has no vertices", g + 1),
        ));
    }

    let a_text = read(&a_path)?;
    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); graph_count];
    let mut self_loops = 0;
    for (ln, l) in lines(&a_text) {
        let mut parts = l.split(',');
        let (Some(i), Some(j), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(
                &a_path,
                ln,
                format!("expected 'i, j', found '{l}'"),
            ));
        };
        let (i, j): (usize, usize) = (int(&a_path, ln, i)?, int(&a_path, ln, j)?);
        for v in [i, j] {
            if v == 0 || v > graph_of.len() {
                return Err(Error::parse(
                    &a_path,
                    ln,
                    format!(
                        "dangling vertex id {v}; indicator lists {} vertices",
                        graph_of.len()
                    ),
                ));
            }
        }
        let (i, j) = (i - 1, j - 1);
        if graph_of[i] != graph_of[j] {
            return Err(Error::parse(&a_path, ln, "edge joins two different graphs"));
        }
        if i == j {
            self_loops += 1;
            continue;
        }
        edges[graph_of[i]].push((local[i], local[j]));
    }
    if self_loops > 0 {
        warn!(
            "{}: ignored {self_loops} self-loop line(s)",
            a_path.display()
        );
    }

    let node_labels = bundle.file("node_labels");
    if let Ok(text) = fs::read_to_string(&node_labels) {
        let count = lines(&text).count();
        if count != graph_of.len() {
            warn!(
                "{}: {count} lines for {} vertices",
                node_labels.display(),
                graph_of.len()
            );
        }
        debug!("vertex labels present but unused");
    }

    let graphs = (0..graph_count)
        .map(|g| {
            let label = classes.binary_search(&raw_labels[g]).unwrap();
            Ok(Graph::from_edges(sizes[g], &edges[g])?.with_label(Some(label)))
        })
        .collect::<Result<Vec<_>>>()?;
    GraphDataset::new(bundle.name.clone(), graphs, classes.len())
}

/// Writes `ds` as a bundle; the inverse of [`load_tud`] up to label
/// remapping. Unlabeled graphs get class 0.
pub fn write_tud(ds: &GraphDataset, bundle: &TudBundle) -> Result<()> {
    fs::create_dir_all(&bundle.dir).map_err(|e| Error::io(&bundle.dir, e))?;
    let (mut a, mut ind, mut lab) = (String::new(), String::new(), String::new());
    let mut offset = 0;
    for (gi, g) in ds.graphs().iter().enumerate() {
        let n = g.vertex_count();
        for u in 0..n {
            writeln!(ind, "{}", gi + 1).unwrap();
            for v in g.neighbors(u) {
                writeln!(a, "{}, {}", offset + u + 1, offset + v + 1).unwrap();
            }
        }
        writeln!(lab, "{}", g.label().unwrap_or(0)).unwrap();
        offset += n;
    }
    let [a_path, ind_path, lab_path] = bundle.required_files();
    write(&a_path, &a)?;
    write(&ind_path, &ind)?;
    write(&lab_path, &lab)
}

/// Two graphs: `K2` (class 0) and the path `P3` (class 1).
pub fn toy_dataset() -> GraphDataset {
    let graphs = vec![
        Graph::from_edges(2, &[(0, 1)]).unwrap().with_label(Some(0)),
        Graph::from_edges(3, &[(0, 1), (1, 2)])
            .unwrap()
            .with_label(Some(1)),
    ];
    GraphDataset::new("TOY", graphs, 2).unwrap()
}

/// Four small graphs, two per class: paths in class 0, cycles in class 1.
pub fn four_graph_dataset() -> GraphDataset {
    let graphs = vec![
        Graph::from_edges(3, &[(0, 1), (1, 2)])
            .unwrap()
            .with_label(Some(0)),
        Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)])
            .unwrap()
            .with_label(Some(0)),
        Graph::from_edges(3, &[(0, 1), (1, 2), (2, 0)])
            .unwrap()
            .with_label(Some(1)),
        Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)])
            .unwrap()
            .with_label(Some(1)),
    ];
    GraphDataset::new("FOUR", graphs, 2).unwrap()
}

#[derive(Serialize, Deserialize)]
struct KernelFileMeta {
    dataset: String,
    #[serde(flatten)]
    config: KernelConfig,
    labels: Option<Vec<usize>>,
    min_eigenvalue: Option<f64>,
    diagonal_shift: Option<f64>,
    manifest: Option<String>,
}

/// Serializes a kernel matrix to the text format.
pub fn kernel_matrix_to_string(km: &KernelMatrix) -> Result<String> {
    if km.values.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "kernel matrix has non-finite entries".into(),
        ));
    }
    let meta = KernelFileMeta {
        dataset: km.dataset_name.clone(),
        config: km.config.clone(),
        labels: km.labels.clone(),
        min_eigenvalue: km.min_eigenvalue,
        diagonal_shift: km.diagonal_shift,
        manifest: km.manifest.clone(),
    };
    let n = km.size();
    let mut out = String::with_capacity(n * n * 24 + 256);
    out.push_str(KERNEL_FILE_HEADER);
    out.push('\n');
    out.push_str(&serde_json::to_string(&meta).expect("metadata serializes"));
    writeln!(out, "\n{n}").unwrap();
    for i in 0..n {
        for j in 0..n {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{:.16e}", km.values[(i, j)]).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_kernel_matrix(km: &KernelMatrix, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &kernel_matrix_to_string(km)?)
}

/// Parses the text format; `path` only labels errors.
pub fn parse_kernel_matrix(text: &str, path: &Path) -> Result<KernelMatrix> {
    let mut it = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        it.next().ok_or_else(|| {
            Error::parse(
                path,
                text.lines().count() + 1,
                format!("truncated: missing {what}"),
            )
        })
    };
    let (ln, header) = next("header")?;
    if header != KERNEL_FILE_HEADER {
        return Err(Error::parse(
            path,
            ln,
            format!("expected '{KERNEL_FILE_HEADER}'"),
        ));
    }
    let (ln, meta_line) = next("metadata")?;
    let meta: KernelFileMeta = serde_json::from_str(meta_line)
        .map_err(|e| Error::parse(path, ln, format!("metadata: {e}")))?;
    let (ln, size) = next("size")?;
    let n: usize = int(path, ln, size)?;
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        let (ln, row) = next("matrix row")?;
        let mut count = 0;
        for (j, tok) in row.split_ascii_whitespace().enumerate() {
            if j >= n {
                return Err(Error::parse(path, ln, format!("more than {n} values")));
            }
            values[(i, j)] = tok
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(path, ln, format!("bad value '{tok}'")))?;
            count += 1;
        }
        if count != n {
            return Err(Error::parse(
                path,
                ln,
                format!("expected {n} values, found {count}"),
            ));
        }
    }
    if let Some((ln, _)) = it.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse(path, ln, "trailing content after matrix"));
    }
    Ok(KernelMatrix {
        values,
        config: meta.config,
        dataset_name: meta.dataset,
        labels: meta.labels,
        min_eigenvalue: meta.min_eigenvalue,
        diagonal_shift: meta.diagonal_shift,
        manifest: meta.manifest,
    })
}

pub fn read_kernel_matrix(path: impl AsRef<Path>) -> Result<KernelMatrix> {
    let path = path.as_ref();
    parse_kernel_matrix(&read(path)?, path)
}
