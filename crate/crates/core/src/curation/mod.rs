//! Local dataset catalog for run outputs.
//!
//! Layout: `<root>/<experiment>/iter_NNNN/{files..., manifest.json}` with
//! an `index.json` at the root. The index is a cache; the catalog can be
//! rebuilt from manifest files alone.

mod filters;
pub mod plots;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use filters::{hrmc_metrics_filter, MetaValue, Metadata, MetadataFilter, HRMC_METRICS};

use crate::model::is_safe_name;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_FILE: &str = "index.json";
pub const PLOTS_DIR: &str = "plots";
pub const COST_CSV: &str = "cost_vs_iteration.csv";
pub const COST_SVG: &str = "cost_vs_iteration.svg";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn dataset_id(experiment: &str, iteration: u32) -> String {
    format!("{experiment}/iter_{iteration:04}")
}

#[derive(Debug, thiserror::Error)]
pub enum CurationError {
    #[error("dataset {0} already exists")]
    Duplicate(String),
    #[error("invalid experiment name {0:?}")]
    BadExperiment(String),
    #[error("experiment {0} has no datasets")]
    NoDatasets(String),
    #[error("unknown dataset {0}")]
    UnknownDataset(String),
    #[error("unknown search operator {0:?} (expected =, < or >)")]
    UnknownOperator(String),
    #[error("malformed predicate {0:?} (expected <key><op><value>)")]
    BadPredicate(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CurationError + '_ {
    move |source| CurationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub size: u64,
    pub sha256: String,
}

/// Curated record of one iteration's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub experiment: String,
    pub iteration: u32,
    pub files: Vec<FileEntry>,
    pub metadata: Metadata,
    pub created_tick: u64,
}

/// Result of an ingest: the stored manifest plus non-fatal problems.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub manifest: DatasetManifest,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchOp {
    Eq,
    Lt,
    Gt,
}

impl SearchOp {
    pub fn parse(s: &str) -> Result<Self, CurationError> {
        match s {
            "=" => Ok(SearchOp::Eq),
            "<" => Ok(SearchOp::Lt),
            ">" => Ok(SearchOp::Gt),
            other => Err(CurationError::UnknownOperator(other.to_string())),
        }
    }
}

impl fmt::Display for SearchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchOp::Eq => "=",
            SearchOp::Lt => "<",
            SearchOp::Gt => ">",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub key: String,
    pub op: SearchOp,
    pub value: String,
}

impl Predicate {
    pub fn new(key: &str, op: &str, value: &str) -> Result<Self, CurationError> {
        Ok(Self {
            key: key.to_string(),
            op: SearchOp::parse(op)?,
            value: value.to_string(),
        })
    }

    /// Parses `key<op>value`, e.g. `best_cost<0.05`.
    pub fn parse(s: &str) -> Result<Self, CurationError> {
        let is_op = |c: char| matches!(c, '<' | '>' | '=' | '!' | '~');
        let start = s.find(is_op).ok_or_else(|| CurationError::BadPredicate(s.to_string()))?;
        let rest = &s[start..];
        let end = rest.find(|c: char| !is_op(c)).unwrap_or(rest.len());
        let (key, op, value) = (s[..start].trim(), &rest[..end], rest[end..].trim());
        if key.is_empty() || value.is_empty() {
            return Err(CurationError::BadPredicate(s.to_string()));
        }
        Self::new(key, op, value)
    }

    pub fn matches(&self, metadata: &Metadata) -> bool {
        let Some(actual) = metadata.get(&self.key) else {
            return false;
        };
        let wanted = self.value.parse::<f64>().ok();
        match (actual.as_f64(), wanted) {
            (Some(a), Some(w)) => match self.op {
                SearchOp::Eq => a == w,
                SearchOp::Lt => a < w,
                SearchOp::Gt => a > w,
            },
            _ => self.op == SearchOp::Eq && actual.to_string() == self.value,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    dataset_id: String,
    manifest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    datasets: Vec<IndexEntry>,
}

/// Files written by [`Catalog::emit_plots`], with skipped datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotReport {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Single-writer catalog rooted at a directory.
#[derive(Debug, Clone)]
pub struct Catalog {
    root: PathBuf,
    manifests: BTreeMap<String, DatasetManifest>,
    filters: Vec<MetadataFilter>,
}

impl Catalog {
    /// Opens (creating if needed) the catalog at `root`, loading the index
    /// when present and rescanning manifests otherwise. The built-in
    /// `hrmc-metrics` filter is registered.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CurationError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let mut catalog = Self {
            root,
            manifests: BTreeMap::new(),
            filters: vec![hrmc_metrics_filter()],
        };
        let index_path = catalog.root.join(INDEX_FILE);
        if index_path.is_file() {
            let bytes = fs::read(&index_path).map_err(io_err(&index_path))?;
            let index: Index = serde_json::from_slice(&bytes).map_err(|source| CurationError::Json {
                path: index_path.clone(),
                source,
            })?;
            for entry in index.datasets {
                let m = read_manifest(&catalog.root.join(&entry.manifest))?;
                catalog.manifests.insert(m.dataset_id.clone(), m);
            }
        } else {
            catalog.rescan()?;
        }
        Ok(catalog)
    }

    /// Rebuilds the in-memory state and the index from manifest files.
    pub fn rebuild(root: impl Into<PathBuf>) -> Result<Self, CurationError> {
        let root = root.into();
        let index = root.join(INDEX_FILE);
        if index.exists() {
            fs::remove_file(&index).map_err(io_err(&index))?;
        }
        let catalog = Self::open(root)?;
        catalog.write_index()?;
        Ok(catalog)
    }

    fn rescan(&mut self) -> Result<(), CurationError> {
        self.manifests.clear();
        for entry in walkdir::WalkDir::new(&self.root)
            .min_depth(3)
            .max_depth(3)
            .sort_by_file_name()
        {
            let entry = entry.map_err(|e| CurationError::Io {
                path: self.root.clone(),
                source: e.into(),
            })?;
            if entry.file_type().is_file() && entry.file_name() == MANIFEST_FILE {
                let m = read_manifest(entry.path())?;
                self.manifests.insert(m.dataset_id.clone(), m);
            }
        }
        Ok(())
    }

    fn write_index(&self) -> Result<(), CurationError> {
        let index = Index {
            datasets: self
                .manifests
                .keys()
                .map(|id| IndexEntry {
                    dataset_id: id.clone(),
                    manifest: format!("{id}/{MANIFEST_FILE}"),
                })
                .collect(),
        };
        let path = self.root.join(INDEX_FILE);
        let mut s = serde_json::to_string_pretty(&index).expect("index serializes");
        s.push('\n');
        fs::write(&path, s).map_err(io_err(&path))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn register_filter(&mut self, filter: MetadataFilter) {
        self.filters.push(filter);
    }

    pub fn filters(&self) -> &[MetadataFilter] {
        &self.filters
    }

    pub fn manifests(&self) -> impl Iterator<Item = &DatasetManifest> {
        self.manifests.values()
    }

    pub fn get(&self, dataset_id: &str) -> Option<&DatasetManifest> {
        self.manifests.get(dataset_id)
    }

    pub fn dataset_ids(&self) -> Vec<String> {
        self.manifests.keys().cloned().collect()
    }

    pub fn dataset_dir(&self, dataset_id: &str) -> PathBuf {
        self.root.join(dataset_id)
    }

    /// Ingests with the registered filters.
    pub fn ingest_with_registered(&mut self, source: &Path, experiment: &str, iteration: u32) -> Result<IngestReport, CurationError> {
        let filters = self.filters.clone();
        self.ingest(source, experiment, iteration, &filters)
    }

    /// Copies the files of `source` into the catalog as dataset
    /// `experiment/iter_NNNN`, checksums them and extracts metadata with
    /// every filter whose pattern matches. Files are visited in sorted
    /// order and filters in the given order; later values win on key
    /// conflicts. `experiment` and `iteration` are always recorded.
    pub fn ingest(
        &mut self,
        source: &Path,
        experiment: &str,
        iteration: u32,
        filters: &[MetadataFilter],
    ) -> Result<IngestReport, CurationError> {
        if !is_safe_name(experiment) {
            return Err(CurationError::BadExperiment(experiment.to_string()));
        }
        let id = dataset_id(experiment, iteration);
        let target = self.dataset_dir(&id);
        if self.manifests.contains_key(&id) || target.exists() {
            return Err(CurationError::Duplicate(id));
        }
        if !source.is_dir() {
            return Err(CurationError::Io {
                path: source.to_path_buf(),
                source: io::Error::new(io::ErrorKind::NotFound, "not a directory"),
            });
        }

        let mut warnings = Vec::new();
        let mut contents: Vec<(String, Vec<u8>)> = Vec::new();
        for entry in walkdir::WalkDir::new(source).sort_by_file_name() {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    warnings.push(format!("unreadable entry: {e}"));
                    continue;
                }
            };
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(source)
                .expect("walk stays under source")
                .to_string_lossy()
                .replace('\\', "/");
            if rel == MANIFEST_FILE {
                warnings.push(format!("{rel}: reserved name, skipped"));
                continue;
            }
            match fs::read(entry.path()) {
                Ok(bytes) => contents.push((rel, bytes)),
                Err(e) => warnings.push(format!("{rel}: {e}")),
            }
        }

        let mut metadata = Metadata::new();
        for filter in filters {
            for (rel, bytes) in contents.iter().filter(|(rel, _)| filter.matches(rel)) {
                match filter.extract(bytes) {
                    Ok(found) => {
                        for (k, v) in found {
                            if let Some(old) = metadata.get(&k) {
                                if *old != v {
                                    log::debug!("{id}: filter {} overrides {k} ({old} -> {v}) from {rel}", filter.name);
                                }
                            }
                            metadata.insert(k, v);
                        }
                    }
                    Err(e) => {
                        log::warn!("{id}: filter {} failed on {rel}: {e}", filter.name);
                        warnings.push(format!("{rel}: filter {}: {e}", filter.name));
                    }
                }
            }
        }
        metadata.insert("experiment".into(), MetaValue::Text(experiment.to_string()));
        metadata.insert("iteration".into(), MetaValue::Number(f64::from(iteration)));

        fs::create_dir_all(&target).map_err(io_err(&target))?;
        let mut files = Vec::with_capacity(contents.len());
        for (rel, bytes) in &contents {
            let dest = target.join(rel);
            if let Some(dir) = dest.parent() {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            fs::write(&dest, bytes).map_err(io_err(&dest))?;
            files.push(FileEntry {
                path: rel.clone(),
                size: bytes.len() as u64,
                sha256: sha256_hex(bytes),
            });
        }

        let created_tick = self.manifests.values().map(|m| m.created_tick + 1).max().unwrap_or(0);
        let manifest = DatasetManifest {
            dataset_id: id.clone(),
            experiment: experiment.to_string(),
            iteration,
            files,
            metadata,
            created_tick,
        };
        let path = target.join(MANIFEST_FILE);
        let mut s = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        s.push('\n');
        fs::write(&path, s).map_err(io_err(&path))?;
        self.manifests.insert(id, manifest.clone());
        self.write_index()?;
        Ok(IngestReport { manifest, warnings })
    }

    /// Re-checks every stored file of a dataset against its manifest.
    /// Returns the paths that are missing or differ.
    pub fn verify(&self, dataset_id: &str) -> Result<Vec<String>, CurationError> {
        let m = self
            .manifests
            .get(dataset_id)
            .ok_or_else(|| CurationError::UnknownDataset(dataset_id.to_string()))?;
        let dir = self.dataset_dir(dataset_id);
        Ok(m.files
            .iter()
            .filter(|f| match fs::read(dir.join(&f.path)) {
                Ok(bytes) => bytes.len() as u64 != f.size || sha256_hex(&bytes) != f.sha256,
                Err(_) => true,
            })
            .map(|f| f.path.clone())
            .collect())
    }

    /// Ids of datasets satisfying every predicate, sorted.
    pub fn search(&self, query: &[Predicate]) -> Vec<String> {
        self.manifests
            .values()
            .filter(|m| query.iter().all(|p| p.matches(&m.metadata)))
            .map(|m| m.dataset_id.clone())
            .collect()
    }

    /// Writes `cost_vs_iteration.csv`, `cost_vs_iteration.svg` and one
    /// `points_iter_NNNN.csv` per dataset into `<root>/<experiment>/plots`.
    /// Datasets without a numeric `best_cost` are skipped with a warning.
    pub fn emit_plots(&self, experiment: &str) -> Result<PlotReport, CurationError> {
        let mut datasets: Vec<&DatasetManifest> = self.manifests.values().filter(|m| m.experiment == experiment).collect();
        if datasets.is_empty() {
            return Err(CurationError::NoDatasets(experiment.to_string()));
        }
        datasets.sort_by_key(|m| m.iteration);

        let out_dir = self.root.join(experiment).join(PLOTS_DIR);
        fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
        let mut warnings = Vec::new();
        let mut files = Vec::new();
        let mut series = Vec::new();

        for m in &datasets {
            let Some(cost) = m.metadata.get("best_cost").and_then(MetaValue::as_f64) else {
                log::warn!("{}: no best_cost metadata, skipped", m.dataset_id);
                warnings.push(format!("{}: missing best_cost metadata", m.dataset_id));
                continue;
            };
            series.push((m.iteration, cost));

            let mut rows = Vec::new();
            let dir = self.dataset_dir(&m.dataset_id);
            for f in &m.files {
                let Ok(bytes) = fs::read(dir.join(&f.path)) else {
                    warnings.push(format!("{}: cannot read {}", m.dataset_id, f.path));
                    continue;
                };
                let Ok(doc) = serde_json::from_slice::<serde_json::Value>(&bytes) else {
                    continue;
                };
                let (Some(points), Some(task_cost)) = (
                    doc.get("best_points").and_then(|p| p.as_array()),
                    doc.get("best_cost").and_then(|c| c.as_f64()),
                ) else {
                    continue;
                };
                for p in points {
                    if let (Some(x), Some(y)) = (p.get(0).and_then(|v| v.as_f64()), p.get(1).and_then(|v| v.as_f64())) {
                        rows.push([x.to_string(), y.to_string(), task_cost.to_string()]);
                    }
                }
            }
            let path = out_dir.join(format!("points_iter_{:04}.csv", m.iteration));
            plots::write_csv(&path, &["x", "y", "cost"], rows).map_err(io_err(&path))?;
            files.push(path);
        }

        let csv_path = out_dir.join(COST_CSV);
        plots::write_csv(
            &csv_path,
            &["iteration", "best_cost"],
            series.iter().map(|(i, c)| [i.to_string(), c.to_string()]),
        )
        .map_err(io_err(&csv_path))?;
        let points: Vec<(f64, f64)> = series.iter().map(|&(i, c)| (f64::from(i), c)).collect();
        let svg = plots::line_plot_svg(&format!("{experiment}: best cost per iteration"), "iteration", "best cost", &points);
        let svg_path = out_dir.join(COST_SVG);
        fs::write(&svg_path, svg).map_err(io_err(&svg_path))?;

        let mut all = vec![csv_path, svg_path];
        all.extend(files);
        Ok(PlotReport { files: all, warnings })
    }
}

fn read_manifest(path: &Path) -> Result<DatasetManifest, CurationError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| CurationError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task_doc(cost: f64) -> String {
        format!(
            r#"{{"task_index":0,"seed":1,"temperature":1.0,"best_cost":{cost},"chi2":{cost},"energy":0.5,"best_points":[[0.25,0.5],[0.75,0.125]],"trace":[[0,{cost}]]}}"#
        )
    }

    fn source_with(files: &[(&str, &str)]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (name, body) in files {
            let p = dir.path().join(name);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, body).unwrap();
        }
        dir
    }

    #[test]
    fn ingest_extracts_metrics() {
        let root = tempfile::tempdir().unwrap();
        let mut cat = Catalog::open(root.path()).unwrap();
        let body = task_doc(1.5);
        let src = source_with(&[("map_0000.json", &body)]);
        let r = cat.ingest_with_registered(src.path(), "demo", 3).unwrap();
        let oracle: serde_json::Value = serde_json::from_str(&body).unwrap();
        for key in ["best_cost", "chi2", "energy"] {
            assert_eq!(r.manifest.metadata[key], MetaValue::Number(oracle[key].as_f64().unwrap()));
        }
        assert_eq!(r.manifest.dataset_id, "demo/iter_0003");
        assert_eq!(r.manifest.metadata["experiment"], MetaValue::Text("demo".into()));
        assert!(cat.verify("demo/iter_0003").unwrap().is_empty());
        assert!(root.path().join("demo/iter_0003/manifest.json").is_file());
    }

    #[test]
    fn empty_directory() {
        let root = tempfile::tempdir().unwrap();
        let mut cat = Catalog::open(root.path()).unwrap();
        let src = tempfile::tempdir().unwrap();
        let r = cat.ingest(src.path(), "e", 0, &[hrmc_metrics_filter()]).unwrap();
        assert!(r.manifest.files.is_empty());
        let domain: Vec<_> = r
            .manifest
            .metadata
            .keys()
            .filter(|k| *k != "experiment" && *k != "iteration")
            .collect();
        assert!(domain.is_empty());
    }

    #[test]
    fn duplicate_rejected_without_changes() {
        let root = tempfile::tempdir().unwrap();
        let mut cat = Catalog::open(root.path()).unwrap();
        let src = source_with(&[("map_0000.json", &task_doc(1.0))]);
        cat.ingest_with_registered(src.path(), "demo", 0).unwrap();
        let before = fs::read(root.path().join("demo/iter_0000/manifest.json")).unwrap();
        let other = source_with(&[("map_0000.json", &task_doc(9.0))]);
        assert!(matches!(
            cat.ingest_with_registered(other.path(), "demo", 0),
            Err(CurationError::Duplicate(_))
        ));
        assert_eq!(fs::read(root.path().join("demo/iter_0000/manifest.json")).unwrap(), before);
        assert_eq!(cat.dataset_ids().len(), 1);
    }

    #[test]
    fn failing_filter_warns_and_continues() {
        let root = tempfile::tempdir().unwrap();
        let mut cat = Catalog::open(root.path()).unwrap();
        let src = source_with(&[("notes.json", "not json"), ("map_0000.json", &task_doc(2.0))]);
        let r = cat.ingest_with_registered(src.path(), "demo", 0).unwrap();
        assert_eq!(r.manifest.files.len(), 2);
        assert_eq!(r.manifest.metadata["best_cost"], MetaValue::Number(2.0));
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn later_filters_win() {
        let root = tempfile::tempdir().unwrap();
        let mut cat = Catalog::open(root.path()).unwrap();
        let override_filter = MetadataFilter::new("fixed", "*.json", |_| {
            Ok(Metadata::from([("best_cost".to_string(), MetaValue::Number(-1.0))]))
        })
        .unwrap();
        let src = source_with(&[("map_0000.json", &task_doc(2.0))]);
        let r = cat
            .ingest(src.path(), "demo", 0, &[hrmc_metrics_filter(), override_filter])
            .unwrap();
        assert_eq!(r.manifest.metadata["best_cost"], MetaValue::Number(-1.0));
    }

    #[test]
    fn predicates() {
        assert_eq!(Predicate::parse("best_cost<0.05").unwrap(), Predicate::new("best_cost", "<", "0.05").unwrap());
        assert_eq!(Predicate::parse("experiment=demo").unwrap().op, SearchOp::Eq);
        assert!(matches!(Predicate::parse("a<=1"), Err(CurationError::UnknownOperator(_))));
        assert!(matches!(Predicate::parse("a~1"), Err(CurationError::UnknownOperator(_))));
        assert!(matches!(Predicate::parse("nothing"), Err(CurationError::BadPredicate(_))));
        assert!(matches!(Predicate::parse("<3"), Err(CurationError::BadPredicate(_))));
        let meta = Metadata::from([
            ("n".to_string(), MetaValue::Number(2.0)),
            ("s".to_string(), MetaValue::Text("abc".into())),
        ]);
        assert!(Predicate::parse("n>1").unwrap().matches(&meta));
        assert!(Predicate::parse("n=2.0").unwrap().matches(&meta));
        assert!(!Predicate::parse("s<zzz").unwrap().matches(&meta));
        assert!(Predicate::parse("s=abc").unwrap().matches(&meta));
        assert!(!Predicate::parse("missing=1").unwrap().matches(&meta));
    }

    #[test]
    fn search_and_rebuild() {
        let root = tempfile::tempdir().unwrap();
        let mut cat = Catalog::open(root.path()).unwrap();
        for (exp, it, cost) in [("demo", 0, 2.0), ("demo", 1, 1.0), ("demo", 2, 0.01), ("other", 0, 0.02), ("other", 1, 5.0)] {
            let src = source_with(&[("map_0000.json", &task_doc(cost))]);
            cat.ingest_with_registered(src.path(), exp, it).unwrap();
        }
        let demo = cat.search(&[Predicate::parse("experiment=demo").unwrap()]);
        assert_eq!(demo, vec!["demo/iter_0000", "demo/iter_0001", "demo/iter_0002"]);
        assert_eq!(cat.search(&[]).len(), 5);
        let low = cat.search(&[Predicate::parse("best_cost<0.05").unwrap()]);
        assert_eq!(low, vec!["demo/iter_0002", "other/iter_0000"]);

        let reopened = Catalog::open(root.path()).unwrap();
        assert_eq!(reopened.search(&[]), cat.search(&[]));
        fs::remove_file(root.path().join(INDEX_FILE)).unwrap();
        let rebuilt = Catalog::rebuild(root.path()).unwrap();
        assert_eq!(rebuilt.search(&[Predicate::parse("best_cost<0.05").unwrap()]), low);
        assert!(root.path().join(INDEX_FILE).is_file());
    }

    #[test]
    fn verify_detects_tampering() {
        let root = tempfile::tempdir().unwrap();
        let mut cat = Catalog::open(root.path()).unwrap();
        let src = source_with(&[("map_0000.json", &task_doc(1.0)), ("x/y.txt", "hello")]);
        cat.ingest_with_registered(src.path(), "demo", 0).unwrap();
        assert!(cat.verify("demo/iter_0000").unwrap().is_empty());
        fs::write(root.path().join("demo/iter_0000/x/y.txt"), "HELLO").unwrap();
        assert_eq!(cat.verify("demo/iter_0000").unwrap(), vec!["x/y.txt"]);
    }

    #[test]
    fn plots_for_three_iterations() {
        let root = tempfile::tempdir().unwrap();
        let mut cat = Catalog::open(root.path()).unwrap();
        for (it, cost) in [(0, 2.0), (1, 1.0), (2, 0.5)] {
            let src = source_with(&[("map_0000.json", &task_doc(cost))]);
            cat.ingest_with_registered(src.path(), "demo", it).unwrap();
        }
        let report = cat.emit_plots("demo").unwrap();
        assert!(report.warnings.is_empty());
        let plots = root.path().join("demo/plots");
        let csv = fs::read_to_string(plots.join(COST_CSV)).unwrap();
        assert_eq!(csv, "iteration,best_cost\n0,2\n1,1\n2,0.5\n");
        let pts = fs::read_to_string(plots.join("points_iter_0001.csv")).unwrap();
        assert_eq!(pts, "x,y,cost\n0.25,0.5,1\n0.75,0.125,1\n");
        let svg = fs::read_to_string(plots.join(COST_SVG)).unwrap();
        roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(report.files.len(), 5);

        let again = cat.emit_plots("demo").unwrap();
        assert_eq!(again.files, report.files);
        assert_eq!(fs::read_to_string(plots.join(COST_CSV)).unwrap(), csv);
        assert_eq!(fs::read_to_string(plots.join(COST_SVG)).unwrap(), svg);
    }

    #[test]
    fn plots_skip_datasets_without_metrics() {
        let root = tempfile::tempdir().unwrap();
        let mut cat = Catalog::open(root.path()).unwrap();
        let src = source_with(&[("readme.txt", "no metrics")]);
        cat.ingest_with_registered(src.path(), "demo", 0).unwrap();
        let src = source_with(&[("map_0000.json", &task_doc(0.5))]);
        cat.ingest_with_registered(src.path(), "demo", 1).unwrap();
        let report = cat.emit_plots("demo").unwrap();
        assert_eq!(report.warnings.len(), 1);
        let csv = fs::read_to_string(root.path().join("demo/plots").join(COST_CSV)).unwrap();
        assert_eq!(csv, "iteration,best_cost\n1,0.5\n");
        assert!(matches!(cat.emit_plots("nope"), Err(CurationError::NoDatasets(_))));
    }
}
