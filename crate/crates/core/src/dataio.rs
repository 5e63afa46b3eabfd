//! Dataset loading, qubit assignment, amplitude vectors, sub-sampling and a
//! synthetic classification generator.
//!
//! CSV files carry a header row (lines starting with `#` are skipped) and a label column (default `label`); every
//! other column must be numeric. Labels are factorized to `0..classes` in
//! sorted order (numeric order when every label parses as a number).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensornet::DataVector;

/// Environment variable naming the directory searched for `<name>.csv`.
pub const DATA_DIR_ENV: &str = "SC_DATA_DIR";

pub const DEFAULT_LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Classes { labels: Vec<usize>, names: Vec<String> },
    Real(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    /// One row per sample.
    pub features: Vec<Vec<f64>>,
    pub targets: Targets,
    /// Qubit count; every row fits in `2^n` amplitudes.
    pub n: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Integer labels, or an error for regression data.
    pub fn labels(&self) -> Result<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Ok(labels),
            Targets::Real(_) => Err(Error::NotClassification(self.name.clone())),
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes { names, .. } => Some(names.len()),
            Targets::Real(_) => None,
        }
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let targets = match &self.targets {
            Targets::Classes { labels, names } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                names: names.clone(),
            },
            Targets::Real(t) => Targets::Real(idx.iter().map(|&i| t[i]).collect()),
        };
        Dataset {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            targets,
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Classification,
    Regression,
}

/// Built-in dataset with its qubit assignment and default term count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetInfo {
    pub name: &'static str,
    pub qubits: usize,
    /// Default `k`; `None` means derive it from the data.
    pub default_k: Option<usize>,
    pub kind: TaskKind,
    /// Keep only the first this-many feature columns.
    pub keep_columns: Option<usize>,
    pub synthetic: bool,
}

const fn info(name: &'static str, qubits: usize, k: Option<usize>, kind: TaskKind) -> DatasetInfo {
    DatasetInfo { name, qubits, default_k: k, kind, keep_columns: None, synthetic: false }
}

pub const REGISTRY: [DatasetInfo; 10] = [
    info("iris", 2, Some(1), TaskKind::Classification),
    info("california_housing", 3, Some(1), TaskKind::Regression),
    // Ten raw features cannot fit three qubits; the first eight are kept.
    DatasetInfo { keep_columns: Some(8), ..info("diabetes", 3, Some(3), TaskKind::Regression) },
    info("wine", 4, Some(1), TaskKind::Classification),
    info("breast_cancer", 5, Some(2), TaskKind::Classification),
    info("ionosphere", 6, Some(1), TaskKind::Classification),
    info("covtype", 6, Some(3), TaskKind::Classification),
    info("digits", 6, Some(2), TaskKind::Classification),
    DatasetInfo { synthetic: true, ..info("random5", 5, None, TaskKind::Classification) },
    DatasetInfo { synthetic: true, ..info("random10", 10, None, TaskKind::Classification) },
];

/// The six classification datasets with reference hybrid parameter counts.
pub const CLASSIFICATION_DATASETS: [&str; 6] =
    ["iris", "wine", "breast_cancer", "ionosphere", "covtype", "digits"];

pub fn lookup(name: &str) -> Result<&'static DatasetInfo> {
    REGISTRY.iter().find(|d| d.name == name).ok_or_else(|| Error::UnknownDataset {
        name: name.to_string(),
        known: known_names(),
    })
}

pub fn known_names() -> String {
    REGISTRY.iter().map(|d| d.name).collect::<Vec<_>>().join(", ")
}

fn bundled(name: &str) -> Option<&'static str> {
    Some(match name {
        "iris" => include_str!("../data/iris.csv"),
        "wine" => include_str!("../data/wine.csv"),
        "breast_cancer" => include_str!("../data/breast_cancer.csv"),
        "ionosphere" => include_str!("../data/ionosphere.csv"),
        "digits" => include_str!("../data/digits.csv"),
        "diabetes" => include_str!("../data/diabetes.csv"),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub label_column: String,
    /// Qubit count; `ceil(log2 d)` when absent.
    pub n: Option<usize>,
    pub keep_columns: Option<usize>,
    pub kind: TaskKind,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { label_column: DEFAULT_LABEL_COLUMN.into(), n: None, keep_columns: None, kind: TaskKind::Classification }
    }
}

/// Reads a classification CSV.
pub fn load_csv(path: &Path, label_column: &str, n_override: Option<usize>) -> Result<Dataset> {
    let opts = CsvOptions { label_column: label_column.into(), n: n_override, ..Default::default() };
    load_csv_with(path, &opts)
}

pub fn load_csv_with(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let file = std::fs::File::open(path)?;
    parse_csv(&name, file, opts)
}

/// Parses CSV text from any reader. Row numbers in errors are 1-based data rows.
pub fn parse_csv<R: std::io::Read>(name: &str, reader: R, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == opts.label_column)
        .ok_or_else(|| Error::MissingColumn(opts.label_column.clone()))?;
    let mut feature_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != label_idx).collect();
    if let Some(keep) = opts.keep_columns {
        if keep < feature_cols.len() {
            log::warn!(
                "{name}: keeping the first {keep} of {} feature columns to fit the qubit budget",
                feature_cols.len()
            );
            feature_cols.truncate(keep);
        }
    }
    let feature_names: Vec<String> = feature_cols.iter().map(|&i| headers[i].to_string()).collect();

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let mut values = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = record.get(c).unwrap_or("");
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::NonNumeric { row: row + 1, column: headers[c].to_string(), value: cell.to_string() }
            })?;
            values.push(v);
        }
        features.push(values);
        raw_labels.push(record.get(label_idx).unwrap_or("").to_string());
    }
    if features.is_empty() {
        return Err(Error::Empty("dataset has no rows"));
    }

    let d = feature_names.len();
    if d == 0 {
        return Err(Error::Empty("dataset has no feature columns"));
    }
    let n = opts.n.unwrap_or_else(|| qubits_for(d));
    if n >= usize::BITS as usize || d > 1usize << n {
        return Err(Error::TooLong { len: d, dim: 1usize.checked_shl(n as u32).unwrap_or(0), n });
    }

    let targets = match opts.kind {
        TaskKind::Classification => factorize(&raw_labels),
        TaskKind::Regression => Targets::Real(
            raw_labels
                .iter()
                .enumerate()
                .map(|(row, s)| {
                    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::NonNumeric {
                        row: row + 1,
                        column: opts.label_column.clone(),
                        value: s.clone(),
                    })
                })
                .collect::<Result<_>>()?,
        ),
    };
    Ok(Dataset { name: name.to_string(), feature_names, features, targets, n })
}

/// `ceil(log2 d)`, at least one.
pub fn qubits_for(d: usize) -> usize {
    (d.max(2).next_power_of_two().trailing_zeros()) as usize
}

/// Maps label strings to `0..classes` in sorted order.
fn factorize(raw: &[String]) -> Targets {
    let numeric: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
    let mut names: Vec<String> = raw.to_vec();
    match numeric {
        Some(_) => names.sort_by(|a, b| {
            let (x, y) = (a.parse::<f64>().unwrap_or(0.0), b.parse::<f64>().unwrap_or(0.0));
            x.total_cmp(&y).then_with(|| a.cmp(b))
        }),
        None => names.sort(),
    }
    names.dedup();
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels = raw.iter().map(|s| index[s.as_str()]).collect();
    Targets::Classes { labels, names }
}

/// Loads a registered dataset: `<data_dir>/<name>.csv` first, then the copy
/// bundled with the library. Synthetic names are generated with seed 0.
pub fn load_named(name: &str, data_dir: Option<&Path>) -> Result<Dataset> {
    let info = lookup(name)?;
    if info.synthetic {
        return make_classification(&SyntheticSpec::new(info.qubits));
    }
    let opts = CsvOptions {
        label_column: DEFAULT_LABEL_COLUMN.into(),
        n: Some(info.qubits),
        keep_columns: info.keep_columns,
        kind: info.kind,
    };
    let mut looked = Vec::new();
    if let Some(dir) = data_dir {
        let path: PathBuf = dir.join(format!("{name}.csv"));
        if path.is_file() {
            let mut ds = load_csv_with(&path, &opts)?;
            ds.name = name.to_string();
            return Ok(ds);
        }
        looked.push(path.display().to_string());
    }
    if let Some(text) = bundled(name) {
        return parse_csv(name, text.as_bytes(), &opts);
    }
    looked.push("bundled data".into());
    Err(Error::DatasetMissing {
        name: name.to_string(),
        looked: looked.join(", "),
        hint: format!(
            "run `python3 scripts/fetch_datasets.py <dir> {name}` and set {DATA_DIR_ENV}=<dir>"
        ),
    })
}

/// Directory named by `SC_DATA_DIR`, if set.
pub fn data_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Amplitude vectors of a dataset and which rows produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Vectorized {
    pub vectors: Vec<DataVector>,
    /// Source row of each vector.
    pub kept: Vec<usize>,
    /// Rows with zero norm.
    pub rejected: Vec<usize>,
}

/// Zero-pads each row to `2^n` and scales it to unit norm. With `zscore`,
/// every feature is first standardised over the dataset (constant features
/// become zero).
pub fn to_vectors(dataset: &Dataset, zscore: bool) -> Result<Vectorized> {
    let rows: Vec<Vec<f64>> = if zscore { standardize(&dataset.features) } else { dataset.features.clone() };
    let mut out = Vectorized { vectors: Vec::with_capacity(rows.len()), kept: Vec::new(), rejected: Vec::new() };
    for (i, row) in rows.iter().enumerate() {
        match DataVector::normalize(row, dataset.n) {
            Ok(v) => {
                out.vectors.push(v);
                out.kept.push(i);
            }
            Err(Error::ZeroVector) => out.rejected.push(i),
            Err(e) => return Err(e),
        }
    }
    if !out.rejected.is_empty() {
        log::warn!("{}: rejected zero-norm rows {:?}", dataset.name, out.rejected);
    }
    Ok(out)
}

fn standardize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    let m = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / m).sqrt())
        .collect();
    rows.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(j, &x)| if std[j] > 0.0 { (x - mean[j]) / std[j] } else { 0.0 })
                .collect()
        })
        .collect()
}

/// `count` distinct indices below `len` chosen uniformly under `seed`, in
/// increasing order; all of them when `count >= len`.
pub fn sample_indices(len: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    if count < len {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(count);
        idx.sort_unstable();
    }
    idx
}

/// Random subset of at most `max_count` rows without replacement, in
/// original row order. Stratification allocates rows to classes by largest
/// remainder; it is ignored for regression targets.
pub fn subsample(dataset: &Dataset, max_count: usize, seed: u64, stratify: bool) -> Result<Dataset> {
    if max_count == 0 {
        return Err(Error::InvalidArgument("subsample size must be at least 1".into()));
    }
    let total = dataset.len();
    if max_count >= total {
        return Ok(dataset.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = match (&dataset.targets, stratify) {
        (Targets::Classes { labels, names }, true) => {
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); names.len()];
            for (i, &l) in labels.iter().enumerate() {
                groups[l].push(i);
            }
            let quotas = largest_remainder(&groups.iter().map(Vec::len).collect::<Vec<_>>(), max_count);
            let mut chosen = Vec::with_capacity(max_count);
            for (group, quota) in groups.iter_mut().zip(quotas) {
                group.shuffle(&mut rng);
                chosen.extend_from_slice(&group[..quota]);
            }
            chosen
        }
        _ => {
            let mut all: Vec<usize> = (0..total).collect();
            all.shuffle(&mut rng);
            all.truncate(max_count);
            all
        }
    };
    idx.sort_unstable();
    Ok(dataset.select(&idx))
}

/// Splits `total` across groups in proportion to `sizes`; ties in the
/// remainder go to the earlier group.
fn largest_remainder(sizes: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = sizes.iter().sum();
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| s * total / sum).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(sizes[i] * total % sum));
    let mut left = total - quotas.iter().sum::<usize>();
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        if quotas[i] < sizes[i] {
            quotas[i] += 1;
            left -= 1;
        }
    }
    quotas
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Qubits; the generator emits `2^n` features.
    pub n: usize,
    pub classes: usize,
    pub informative: usize,
    /// Distance of every cluster centre coordinate from the origin.
    pub separation: f64,
    pub samples: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Two classes, two informative features, unit separation, 1000 samples.
    pub fn new(n: usize) -> Self {
        Self { n, classes: 2, informative: 2, separation: 1.0, samples: 1000, seed: 0 }
    }
}

/// Gaussian clusters centred on hypercube vertices `+-separation` of the
/// informative subspace; the other features are standard-normal noise.
/// Classes are assigned round robin so they are balanced within one sample.
pub fn make_classification(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.classes < 2 {
        return Err(Error::InvalidArgument("synthetic data needs at least two classes".into()));
    }
    if spec.n == 0 || spec.n > 20 {
        return Err(Error::InvalidArgument(format!("synthetic qubit count {} outside 1..=20", spec.n)));
    }
    let d = 1usize << spec.n;
    if spec.informative == 0 || spec.informative > d {
        return Err(Error::InvalidArgument(format!("informative features must be in 1..={d}")));
    }
    if spec.samples < spec.classes {
        return Err(Error::InvalidArgument("fewer samples than classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Distinct vertices while the cube has enough of them.
    let vertices = if spec.informative >= usize::BITS as usize - 1 { usize::MAX } else { 1usize << spec.informative };
    let mut picked: Vec<usize> = Vec::with_capacity(spec.classes);
    while picked.len() < spec.classes {
        let v = if spec.informative >= 63 { rng.random::<u64>() as usize } else { rng.random_range(0..vertices) };
        if picked.len() >= vertices || !picked.contains(&v) {
            picked.push(v);
        }
    }
    let centres: Vec<Vec<f64>> = picked
        .iter()
        .map(|&v| {
            (0..spec.informative)
                .map(|j| if j < 64 && (v >> j) & 1 == 1 { spec.separation } else { -spec.separation })
                .collect()
        })
        .collect();

    let mut features = Vec::with_capacity(spec.samples);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let class = i % spec.classes;
        let row: Vec<f64> = (0..d)
            .map(|j| {
                let noise: f64 = rng.sample(StandardNormal);
                if j < spec.informative { centres[class][j] + noise } else { noise }
            })
            .collect();
        features.push(row);
        labels.push(class);
    }
    Ok(Dataset {
        name: format!("random{}", spec.n),
        feature_names: (0..d).map(|j| format!("x{j}")).collect(),
        features,
        targets: Targets::Classes { labels, names: (0..spec.classes).map(|c| c.to_string()).collect() },
        n: spec.n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorize_sorts_numerically_when_possible() {
        let raw: Vec<String> = ["10", "2", "2", "1"].iter().map(|s| s.to_string()).collect();
        let Targets::Classes { labels, names } = factorize(&raw) else { panic!() };
        assert_eq!(names, ["1", "2", "10"]);
        assert_eq!(labels, [2, 1, 1, 0]);
    }

    #[test]
    fn factorize_sorts_strings_lexically() {
        let raw: Vec<String> = ["g", "b", "g"].iter().map(|s| s.to_string()).collect();
        let Targets::Classes { labels, names } = factorize(&raw) else { panic!() };
        assert_eq!(names, ["b", "g"]);
        assert_eq!(labels, [1, 0, 1]);
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        let text = "a,b,label\n1,2,x\n3,oops,y\n";
        let err = parse_csv("t", text.as_bytes(), &CsvOptions::default()).unwrap_err();
        match err {
            Error::NonNumeric { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "b", "oops"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_label_column() {
        let err = parse_csv("t", "a,b\n1,2\n".as_bytes(), &CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "label"));
    }

    #[test]
    fn too_many_features_for_override_is_an_error() {
        let opts = CsvOptions { n: Some(1), ..Default::default() };
        let err = parse_csv("t", "a,b,c,label\n1,2,3,x\n".as_bytes(), &opts).unwrap_err();
        assert!(matches!(err, Error::TooLong { len: 3, dim: 2, n: 1 }));
    }

    #[test]
    fn qubit_assignment_pads_to_power_of_two() {
        assert_eq!([1, 2, 3, 4, 13, 16, 17, 54].map(qubits_for), [1, 1, 2, 2, 4, 4, 5, 6]);
    }

    #[test]
    fn largest_remainder_fills_exactly() {
        assert_eq!(largest_remainder(&[50, 50], 11), vec![6, 5]);
        assert_eq!(largest_remainder(&[1, 9], 5), vec![1, 4]);
        assert_eq!(largest_remainder(&[3, 3, 3], 9), vec![3, 3, 3]);
    }

    #[test]
    fn zero_rows_are_rejected() {
        let ds = Dataset {
            name: "t".into(),
            feature_names: vec!["a".into(), "b".into()],
            features: vec![vec![3.0, 4.0], vec![0.0, 0.0], vec![1.0, 0.0]],
            targets: Targets::Classes { labels: vec![0, 1, 0], names: vec!["p".into(), "q".into()] },
            n: 1,
        };
        let v = to_vectors(&ds, false).unwrap();
        assert_eq!(v.kept, [0, 2]);
        assert_eq!(v.rejected, [1]);
        assert_eq!(v.vectors[0].amplitudes(), &[0.6, 0.8]);
    }

    #[test]
    fn zscore_zeroes_constant_columns() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        assert_eq!(standardize(&rows), vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn registry_rejects_unknown_names() {
        let err = lookup("mnist").unwrap_err();
        assert!(err.to_string().contains("iris"));
    }
}
