//! Reader, writer and downloader for the TUDataset flat-file corpus layout.
//!
//! A corpus `NAME` is a directory holding
//!
//! - `NAME_A.txt`: one `i, j` edge per line, 1-based global node ids
//! - `NAME_graph_indicator.txt`: the 1-based graph id of each node
//! - `NAME_graph_labels.txt`: one label per graph
//! - optional `NAME_node_labels.txt` and `NAME_node_attributes.txt`

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph};
use crate::tensor::Tensor;

pub const DEFAULT_BASE_URL: &str = "https://www.chrsmrrs.com/graphkerneldatasets";
pub const BASE_URL_ENV: &str = "GRAPHSSL_TU_URL";

const MANDATORY: [&str; 3] = ["A", "graph_indicator", "graph_labels"];

#[derive(Clone, Debug, PartialEq)]
pub struct TuSourceConfig {
    pub root_dir: PathBuf,
    /// Either a directory URL (`{name}.zip` is appended) or a template
    /// containing `{name}`.
    pub base_url: String,
    pub dataset_name: String,
}

impl TuSourceConfig {
    /// Uses `GRAPHSSL_TU_URL` when set, else the public mirror.
    pub fn new(root_dir: impl Into<PathBuf>, dataset_name: impl Into<String>) -> Self {
        let base_url = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_owned());
        Self {
            root_dir: root_dir.into(),
            base_url,
            dataset_name: dataset_name.into(),
        }
    }

    pub fn with_base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into();
        self
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root_dir.join(&self.dataset_name)
    }

    pub fn archive_url(&self) -> String {
        if self.base_url.contains("{name}") {
            self.base_url.replace("{name}", &self.dataset_name)
        } else {
            format!(
                "{}/{}.zip",
                self.base_url.trim_end_matches('/'),
                self.dataset_name
            )
        }
    }

    fn check_name(&self) -> Result<()> {
        let ok = !self.dataset_name.is_empty()
            && self
                .dataset_name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "dataset name '{}' is not a valid corpus prefix",
                self.dataset_name
            )))
        }
    }
}

fn corpus_file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Nonblank lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_owned()))
        .collect())
}

fn read_optional(path: &Path) -> Result<Option<Vec<(usize, String)>>> {
    if path.exists() {
        read_lines(path).map(Some)
    } else {
        Ok(None)
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: format!("cannot parse '{}'", raw.trim()),
    })
}

fn parse_error(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

/// Loads `root_dir/dataset_name` into a [`Dataset`].
///
/// Node features are the one-hot node label (over the labels present in
/// the corpus) followed by node attributes. Without either file, features
/// are a one-hot of node degree up to the corpus maximum. Graph labels are
/// remapped to `0..C` by ascending original value. Self-loops are dropped
/// and both orientations of an edge collapse to one.
pub fn load_tudataset(cfg: &TuSourceConfig) -> Result<Dataset> {
    cfg.check_name()?;
    load_dir(&cfg.dataset_dir(), &cfg.dataset_name)
}

pub fn load_dir(dir: &Path, name: &str) -> Result<Dataset> {
    let indicator_path = corpus_file(dir, name, "graph_indicator");
    let labels_path = corpus_file(dir, name, "graph_labels");
    let edges_path = corpus_file(dir, name, "A");

    let label_lines = read_lines(&labels_path)?;
    let raw_labels: Vec<i64> = label_lines
        .iter()
        .map(|(ln, l)| parse_field(&labels_path, *ln, l))
        .collect::<Result<_>>()?;
    let num_graphs = raw_labels.len();

    let indicator_lines = read_lines(&indicator_path)?;
    let mut node_graph = Vec::with_capacity(indicator_lines.len());
    for (ln, l) in &indicator_lines {
        let gid: usize = parse_field(&indicator_path, *ln, l)?;
        if gid == 0 || gid > num_graphs {
            return Err(parse_error(
                &indicator_path,
                *ln,
                format!("graph id {gid} outside 1..={num_graphs}"),
            ));
        }
        if let Some(&prev) = node_graph.last() {
            if gid - 1 < prev {
                return Err(parse_error(
                    &indicator_path,
                    *ln,
                    format!("graph ids must be non-decreasing, {gid} follows {}", prev + 1),
                ));
            }
        }
        node_graph.push(gid - 1);
    }
    let num_nodes = node_graph.len();

    let mut offsets = vec![0usize; num_graphs + 1];
    for &g in &node_graph {
        offsets[g + 1] += 1;
    }
    if let Some(empty) = (0..num_graphs).find(|&g| offsets[g + 1] == 0) {
        return Err(parse_error(
            &indicator_path,
            0,
            format!("graph {} has no nodes", empty + 1),
        ));
    }
    for g in 0..num_graphs {
        offsets[g + 1] += offsets[g];
    }

    let mut graph_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    let mut seen = HashSet::new();
    for (ln, l) in read_lines(&edges_path)? {
        let mut parts = l.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_error(&edges_path, ln, "expected 'i, j'"));
        };
        let (i, j): (usize, usize) = (
            parse_field(&edges_path, ln, a)?,
            parse_field(&edges_path, ln, b)?,
        );
        for id in [i, j] {
            if id == 0 || id > num_nodes {
                return Err(parse_error(
                    &edges_path,
                    ln,
                    format!("node id {id} outside 1..={num_nodes}"),
                ));
            }
        }
        let (i, j) = (i - 1, j - 1);
        let g = node_graph[i];
        if node_graph[j] != g {
            return Err(parse_error(
                &edges_path,
                ln,
                format!("edge ({}, {}) joins two graphs", i + 1, j + 1),
            ));
        }
        if i == j || !seen.insert((i.min(j), i.max(j))) {
            continue;
        }
        let base = offsets[g];
        graph_edges[g].push((i.min(j) - base, i.max(j) - base));
    }

    let node_labels_path = corpus_file(dir, name, "node_labels");
    let node_labels: Option<Vec<i64>> = read_optional(&node_labels_path)?
        .map(|lines| {
            lines
                .iter()
                .map(|(ln, l)| {
                    let first = l.split(',').next().unwrap_or_default();
                    parse_field(&node_labels_path, *ln, first)
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    if let Some(labels) = &node_labels {
        if labels.len() != num_nodes {
            return Err(parse_error(
                &node_labels_path,
                labels.len(),
                format!("{} node labels for {num_nodes} nodes", labels.len()),
            ));
        }
    }

    let attributes_path = corpus_file(dir, name, "node_attributes");
    let attributes: Option<Vec<Vec<f64>>> = read_optional(&attributes_path)?
        .map(|lines| {
            let mut width = None;
            lines
                .iter()
                .map(|(ln, l)| {
                    let row: Vec<f64> = l
                        .split(',')
                        .map(|f| parse_field(&attributes_path, *ln, f))
                        .collect::<Result<_>>()?;
                    match width {
                        None => width = Some(row.len()),
                        Some(w) if w != row.len() => {
                            return Err(parse_error(
                                &attributes_path,
                                *ln,
                                format!("ragged row: {} values, expected {w}", row.len()),
                            ))
                        }
                        Some(_) => {}
                    }
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    if let Some(rows) = &attributes {
        if rows.len() != num_nodes {
            return Err(parse_error(
                &attributes_path,
                rows.len(),
                format!("{} attribute rows for {num_nodes} nodes", rows.len()),
            ));
        }
    }

    let features = build_features(num_nodes, &node_labels, &attributes, &graph_edges, &offsets);

    let classes: BTreeSet<i64> = raw_labels.iter().copied().collect();
    let class_index: BTreeMap<i64, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let dim = features.first().map_or(0, Vec::len);
    let mut graphs = Vec::with_capacity(num_graphs);
    for (g, edges) in graph_edges.into_iter().enumerate() {
        let (start, end) = (offsets[g], offsets[g + 1]);
        let data = features[start..end].iter().flatten().copied().collect();
        let x = Tensor::matrix(end - start, dim, data)?;
        graphs.push(Graph::new(end - start, edges, x, class_index[&raw_labels[g]])?);
    }
    Dataset::new(name, graphs, classes.len())
}

fn build_features(
    num_nodes: usize,
    node_labels: &Option<Vec<i64>>,
    attributes: &Option<Vec<Vec<f64>>>,
    graph_edges: &[Vec<(usize, usize)>],
    offsets: &[usize],
) -> Vec<Vec<f64>> {
    let mut rows = vec![Vec::new(); num_nodes];
    if let Some(labels) = node_labels {
        let distinct: BTreeSet<i64> = labels.iter().copied().collect();
        let index: BTreeMap<i64, usize> =
            distinct.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        for (row, l) in rows.iter_mut().zip(labels) {
            let mut one_hot = vec![0.0; distinct.len()];
            one_hot[index[l]] = 1.0;
            row.extend(one_hot);
        }
    }
    if let Some(attrs) = attributes {
        for (row, a) in rows.iter_mut().zip(attrs) {
            row.extend_from_slice(a);
        }
    }
    if node_labels.is_none() && attributes.is_none() {
        let mut degree = vec![0usize; num_nodes];
        for (g, edges) in graph_edges.iter().enumerate() {
            for &(u, v) in edges {
                degree[offsets[g] + u] += 1;
                degree[offsets[g] + v] += 1;
            }
        }
        let max_degree = degree.iter().copied().max().unwrap_or(0);
        for (row, &d) in rows.iter_mut().zip(&degree) {
            let mut one_hot = vec![0.0; max_degree + 1];
            one_hot[d] = 1.0;
            row.extend(one_hot);
        }
    }
    rows
}

/// Writes `ds` as a flat-file corpus under `dir`; features go to
/// `NAME_node_attributes.txt`. Loading the result yields `ds` again.
pub fn write_tudataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let name = ds.name();
    let mut edges = String::new();
    let mut indicator = String::new();
    let mut labels = String::new();
    let mut attrs = String::new();
    let mut offset = 0;
    for (gi, g) in ds.graphs().iter().enumerate() {
        for &(u, v) in g.edges() {
            let (a, b) = (u.min(v) + offset + 1, u.max(v) + offset + 1);
            edges.push_str(&format!("{a}, {b}\n{b}, {a}\n"));
        }
        for v in 0..g.num_nodes() {
            indicator.push_str(&format!("{}\n", gi + 1));
            let row: Vec<String> = g.features().row(v).iter().map(|x| x.to_string()).collect();
            attrs.push_str(&row.join(", "));
            attrs.push('\n');
        }
        labels.push_str(&format!("{}\n", g.label()));
        offset += g.num_nodes();
    }
    fs::write(corpus_file(dir, name, "A"), edges)?;
    fs::write(corpus_file(dir, name, "graph_indicator"), indicator)?;
    fs::write(corpus_file(dir, name, "graph_labels"), labels)?;
    fs::write(corpus_file(dir, name, "node_attributes"), attrs)?;
    Ok(())
}

fn is_unpacked(dir: &Path, name: &str) -> bool {
    MANDATORY
        .iter()
        .all(|s| corpus_file(dir, name, s).is_file())
}

/// Removes the lock file when dropped.
struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn acquire_lock(path: &Path, timeout: Duration) -> Result<LockGuard> {
    let start = Instant::now();
    loop {
        match fs::OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                return Ok(LockGuard(path.to_path_buf()));
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                if start.elapsed() > timeout {
                    return Err(Error::invalid(format!(
                        "timed out waiting for lock {}",
                        path.display()
                    )));
                }
                std::thread::sleep(Duration::from_millis(100));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Downloads and unpacks `NAME.zip` into `root_dir/NAME`, unless the
/// corpus is already there. Returns the corpus directory.
pub fn fetch_dataset(cfg: &TuSourceConfig) -> Result<PathBuf> {
    cfg.check_name()?;
    let dir = cfg.dataset_dir();
    let name = &cfg.dataset_name;
    if is_unpacked(&dir, name) {
        return Ok(dir);
    }
    fs::create_dir_all(&cfg.root_dir)?;
    let _lock = acquire_lock(
        &cfg.root_dir.join(format!("{name}.lock")),
        Duration::from_secs(600),
    )?;
    // Another process may have finished while we waited.
    if is_unpacked(&dir, name) {
        return Ok(dir);
    }

    let url = cfg.archive_url();
    let bytes = download(&url)?;
    let archive_path = cfg.root_dir.join(format!("{name}.zip"));
    fs::write(&archive_path, &bytes)?;
    let result = unpack(&archive_path, &bytes, &dir, name);
    let _ = fs::remove_file(&archive_path);
    result?;
    Ok(dir)
}

fn download(url: &str) -> Result<Vec<u8>> {
    let fetch_err = |detail: String| Error::Fetch {
        url: url.to_owned(),
        detail,
    };
    let mut response = ureq::get(url).call().map_err(|e| fetch_err(e.to_string()))?;
    let mut bytes = Vec::new();
    response
        .body_mut()
        .with_config()
        .limit(1 << 30)
        .reader()
        .read_to_end(&mut bytes)
        .map_err(|e| fetch_err(e.to_string()))?;
    Ok(bytes)
}

fn unpack(archive_path: &Path, bytes: &[u8], dir: &Path, name: &str) -> Result<()> {
    let malformed = |detail: String| Error::MalformedArchive {
        path: archive_path.to_path_buf(),
        detail,
    };
    let mut zip = zip::ZipArchive::new(std::io::Cursor::new(bytes))
        .map_err(|e| malformed(e.to_string()))?;

    let prefix = format!("{name}_");
    let mut members = Vec::new();
    for i in 0..zip.len() {
        let entry = zip.by_index(i).map_err(|e| malformed(e.to_string()))?;
        if entry.is_dir() {
            continue;
        }
        let Some(file_name) = Path::new(entry.name())
            .file_name()
            .and_then(|f| f.to_str())
            .map(str::to_owned)
        else {
            continue;
        };
        if file_name.starts_with(&prefix) || file_name == "README.txt" {
            members.push((i, file_name));
        }
    }
    for required in MANDATORY {
        let want = format!("{name}_{required}.txt");
        if !members.iter().any(|(_, f)| *f == want) {
            return Err(malformed(format!("archive lacks {want}")));
        }
    }

    fs::create_dir_all(dir)?;
    for (i, file_name) in members {
        let mut entry = zip.by_index(i).map_err(|e| malformed(e.to_string()))?;
        let mut out = Vec::new();
        entry.read_to_end(&mut out).map_err(|e| malformed(e.to_string()))?;
        fs::write(dir.join(file_name), out)?;
    }
    Ok(())
}
