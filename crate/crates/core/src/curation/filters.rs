use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A metadata value: numbers compare numerically, text by equality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Number(f64),
    Text(String),
}

impl MetaValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            MetaValue::Number(n) => Some(*n),
            MetaValue::Text(_) => None,
        }
    }
}

impl fmt::Display for MetaValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetaValue::Number(n) => write!(f, "{n}"),
            MetaValue::Text(s) => f.write_str(s),
        }
    }
}

pub type Metadata = BTreeMap<String, MetaValue>;

type Extractor = dyn Fn(&[u8]) -> Result<Metadata, String> + Send + Sync;

/// Pulls domain metadata out of files whose name matches a glob.
#[derive(Clone)]
pub struct MetadataFilter {
    pub name: String,
    pub pattern: glob::Pattern,
    extractor: Arc<Extractor>,
}

impl fmt::Debug for MetadataFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetadataFilter")
            .field("name", &self.name)
            .field("pattern", &self.pattern.as_str())
            .finish_non_exhaustive()
    }
}

impl MetadataFilter {
    pub fn new<F>(name: &str, pattern: &str, extractor: F) -> Result<Self, glob::PatternError>
    where
        F: Fn(&[u8]) -> Result<Metadata, String> + Send + Sync + 'static,
    {
        Ok(Self {
            name: name.to_string(),
            pattern: glob::Pattern::new(pattern)?,
            extractor: Arc::new(extractor),
        })
    }

    /// Matches either the relative path or the bare file name.
    pub fn matches(&self, relative_path: &str) -> bool {
        let file_name = relative_path.rsplit('/').next().unwrap_or(relative_path);
        self.pattern.matches(relative_path) || self.pattern.matches(file_name)
    }

    pub fn extract(&self, bytes: &[u8]) -> Result<Metadata, String> {
        (self.extractor)(bytes)
    }
}

/// Name of the built-in payload metrics filter.
pub const HRMC_METRICS: &str = "hrmc-metrics";

const METRIC_KEYS: [&str; 3] = ["best_cost", "chi2", "energy"];

/// Reads `best_cost`, `chi2` and `energy` from a payload output (or
/// reduced result) JSON document.
pub fn hrmc_metrics_filter() -> MetadataFilter {
    MetadataFilter::new(HRMC_METRICS, "*.json", |bytes| {
        let doc: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| format!("not JSON: {e}"))?;
        let obj = doc.as_object().ok_or("not a JSON object")?;
        let mut meta = Metadata::new();
        for key in METRIC_KEYS {
            if let Some(v) = obj.get(key).and_then(serde_json::Value::as_f64) {
                meta.insert(key.to_string(), MetaValue::Number(v));
            }
        }
        if !meta.contains_key("best_cost") {
            return Err("no best_cost field".into());
        }
        Ok(meta)
    })
    .expect("static pattern is valid")
}
