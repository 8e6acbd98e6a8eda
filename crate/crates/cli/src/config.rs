use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use upl_core::data::{load_dataset, Dataset};
use upl_core::pipeline::{Method, UplConfig};
use upl_core::split::SplitSpec;
use upl_core::{Result, UplError};

/// One experiment: which data, which method, which hyperparameters, where
/// results go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory, or a name resolved against `UPL_DATA_DIR`.
    pub dataset: String,
    pub method: Method,
    #[serde(default)]
    pub upl: UplConfig,
    /// Re-split per seed; when absent the dataset's masks.json is used.
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default = "default_true")]
    pub normalize_features: bool,
    #[serde(default = "default_results")]
    pub results: PathBuf,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

fn default_results() -> PathBuf {
    PathBuf::from("results.csv")
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| UplError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| UplError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.upl.validate()
    }
}

/// A path that exists is used as is; anything else is looked up under
/// `data_root`.
pub fn resolve_dataset(name: &str, data_root: Option<&Path>) -> PathBuf {
    let direct = PathBuf::from(name);
    match data_root {
        Some(root) if !direct.exists() => root.join(name),
        _ => direct,
    }
}

pub fn open_dataset(name: &str, data_root: Option<&Path>, normalize: bool) -> Result<Dataset> {
    let dataset = load_dataset(resolve_dataset(name, data_root))?;
    Ok(if normalize { dataset.row_normalized() } else { dataset })
}

/// Parses `0..9` (inclusive) or `0,3,7`.
pub fn parse_seeds(spec: &str) -> std::result::Result<Vec<u64>, String> {
    let spec = spec.trim();
    let seeds = if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| format!("bad seed range {spec:?}"))?;
        let hi: u64 = hi.trim().parse().map_err(|_| format!("bad seed range {spec:?}"))?;
        if hi < lo {
            return Err(format!("empty seed range {spec:?}"));
        }
        (lo..=hi).collect()
    } else {
        parse_list(spec)?
    };
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}

pub fn parse_list<T: std::str::FromStr>(spec: &str) -> std::result::Result<Vec<T>, String> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| format!("cannot parse {s:?}")))
        .collect()
}
