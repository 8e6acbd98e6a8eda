use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use upl_core::data::Dataset;
use upl_core::metrics::imbalance_ratio;
use upl_core::pipeline::{evaluate, run_baseline, run_upl, Method, Model, UplConfig};
use upl_core::rng::{child, stream};
use upl_core::split::{make_imbalanced_split, SplitSpec};
use upl_core::{Result, UplError};

pub const RESULT_COLUMNS: [&str; 14] = [
    "dataset",
    "method",
    "seed",
    "rho",
    "eta_l",
    "eta_u",
    "alpha_q",
    "t",
    "s_k",
    "test_bacc",
    "test_macro_f1",
    "val_bacc",
    "pseudo_label_count",
    "wall_seconds",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub method: Method,
    pub seed: u64,
    pub rho: f64,
    pub upl: UplConfig,
    pub test_bacc: f64,
    pub test_macro_f1: f64,
    pub val_bacc: f64,
    pub val_macro_f1: f64,
    pub pseudo_label_count: usize,
    pub wall_seconds: f64,
}

impl ResultRow {
    pub fn record(&self) -> Vec<String> {
        let u = &self.upl;
        vec![
            self.dataset.clone(),
            self.method.name().to_string(),
            self.seed.to_string(),
            self.rho.to_string(),
            u.eta_l.to_string(),
            u.eta_u.to_string(),
            u.alpha_q.to_string(),
            u.perturbation.t.to_string(),
            u.perturbation.s_k.to_string(),
            self.test_bacc.to_string(),
            self.test_macro_f1.to_string(),
            self.val_bacc.to_string(),
            self.pseudo_label_count.to_string(),
            format!("{:.3}", self.wall_seconds),
        ]
    }
}

/// The dataset of one seed: re-split when `split` is given, otherwise the
/// masks shipped with the data.
pub fn prepare_split(base: &Dataset, split: Option<&SplitSpec>, seed: u64) -> Result<(Dataset, f64)> {
    match split {
        Some(spec) => {
            let mut rng = child(spec.seed.wrapping_add(seed), stream::SPLIT);
            let split = make_imbalanced_split(base, spec, &mut rng)?;
            Ok((base.clone().with_masks(split.masks)?, split.rho))
        }
        None => {
            let masks = base.masks()?;
            let rho = imbalance_ratio(&base.class_counts(&masks.train))?;
            Ok((base.clone(), rho))
        }
    }
}

/// Trains and evaluates one seed.
pub fn run_seed(
    base: &Dataset,
    method: Method,
    upl: &UplConfig,
    split: Option<&SplitSpec>,
    seed: u64,
) -> Result<(ResultRow, Model)> {
    let start = Instant::now();
    let (dataset, rho) = prepare_split(base, split, seed)?;
    let mut upl = upl.clone();
    upl.training.seed = seed;
    let result = match method {
        Method::Upl => run_upl(&dataset, &upl)?,
        baseline => run_baseline(&dataset, baseline, &upl.training)?,
    };
    let masks = dataset.masks()?;
    let test = evaluate(&result.model, &dataset, &masks.test)?;
    let val = evaluate(&result.model, &dataset, &masks.val)?;
    let pseudo_label_count = result
        .history
        .best()
        .map_or(0, |r| r.pseudo_label_counts.iter().sum());
    let row = ResultRow {
        dataset: dataset.name.clone(),
        method,
        seed,
        rho,
        upl,
        test_bacc: test.balanced_accuracy,
        test_macro_f1: test.macro_f1,
        val_bacc: val.balanced_accuracy,
        val_macro_f1: val.macro_f1,
        pseudo_label_count,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((row, result.model))
}

/// Runs `jobs` in parallel, returning results in job order.
pub fn run_all<J, T>(jobs: &[J], work: impl Fn(&J) -> Result<T> + Sync + Send) -> Vec<Result<T>>
where
    J: Sync,
    T: Send,
{
    jobs.par_iter().map(work).collect()
}

/// Appends records to a CSV file, writing the header when the file is new
/// or empty. Rows are written in the order given.
pub struct Appender {
    writer: Mutex<csv::Writer<std::fs::File>>,
}

impl Appender {
    pub fn open(path: &Path, header: &[&str]) -> Result<Self> {
        let io = |source| UplError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let empty = file.metadata().map_err(io)?.len() == 0;
        let mut writer = csv::Writer::from_writer(file);
        if empty {
            writer.write_record(header).map_err(|e| csv_io(path, e))?;
            writer.flush().map_err(io)?;
        }
        Ok(Self {
            writer: Mutex::new(writer),
        })
    }

    pub fn append(&self, path: &Path, record: &[String]) -> Result<()> {
        let mut writer = self.writer.lock().expect("appender lock poisoned");
        writer.write_record(record).map_err(|e| csv_io(path, e))?;
        writer.flush().map_err(|source| UplError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn csv_io(path: &Path, err: csv::Error) -> UplError {
    UplError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(err),
    }
}
