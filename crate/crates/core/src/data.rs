//! Datasets: noisy sine tuples, fraud transactions and IDX image files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, String>,
}

impl Provenance {
    fn new(source: impl Into<String>, seed: Option<u64>) -> Self {
        Self {
            source: source.into(),
            seed,
            params: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

/// Feature rows with either class labels or real regression targets.
///
/// `row_ids` identify each row within its source so splits can be checked
/// for overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub targets: Vec<f64>,
    pub row_ids: Vec<usize>,
    pub classes: usize,
    pub split: Split,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.len();
        let w = self.width();
        if self.features.iter().any(|r| r.len() != w) {
            return Err(Error::InvalidDataset("ragged feature rows".into()));
        }
        if (!self.labels.is_empty() && self.labels.len() != n)
            || (!self.targets.is_empty() && self.targets.len() != n)
            || self.row_ids.len() != n
        {
            return Err(Error::InvalidDataset(
                "labels, targets and row ids must align with features".into(),
            ));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::InvalidDataset(format!(
                "label {l} outside {} classes",
                self.classes
            )));
        }
        Ok(())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// SHA-256 over features, labels, targets and row ids.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for row in &self.features {
            for v in row {
                h.update(v.to_le_bytes());
            }
        }
        for l in &self.labels {
            h.update((*l as u64).to_le_bytes());
        }
        for t in &self.targets {
            h.update(t.to_le_bytes());
        }
        for r in &self.row_ids {
            h.update((*r as u64).to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn select(&self, idx: &[usize], split: Split) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: if self.labels.is_empty() {
                vec![]
            } else {
                idx.iter().map(|&i| self.labels[i]).collect()
            },
            targets: if self.targets.is_empty() {
                vec![]
            } else {
                idx.iter().map(|&i| self.targets[i]).collect()
            },
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
            classes: self.classes,
            split,
            provenance: self.provenance.clone(),
        }
    }
}

/// `f(x) = sin x + N(0, eps^2)` with `x` uniform on `range`.
pub fn gen_noisy_sine(n: usize, eps: f64, range: (f64, f64), seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidDataset("at least one sample is required".into()));
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise level must be finite and non-negative, got {eps}"
        )));
    }
    if !(range.0 < range.1) {
        return Err(Error::InvalidParameter(format!("empty range {range:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, eps).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut features = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random_range(range.0..range.1);
        let df = if eps == 0.0 { 0.0 } else { noise.sample(&mut rng) };
        features.push(vec![x]);
        targets.push(x.sin() + df);
    }
    Ok(Dataset {
        features,
        labels: vec![],
        targets,
        row_ids: (0..n).collect(),
        classes: 0,
        split: Split::Full,
        provenance: Provenance::new("noisy_sine", Some(seed))
            .with("n", n)
            .with("eps", eps)
            .with("range", format!("{:?}", range)),
    })
}

pub const FRAUD_FEATURES: usize = 28;
pub const GENUINE: usize = 0;
pub const FRAUD: usize = 1;

/// Two isotropic unit-variance Gaussian blobs whose centres are `separation`
/// apart along the diagonal direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticFraud {
    pub genuine: usize,
    pub fraud: usize,
    pub separation: f64,
}

impl Default for SyntheticFraud {
    fn default() -> Self {
        Self {
            genuine: 2000,
            fraud: 200,
            separation: 3.0,
        }
    }
}

impl SyntheticFraud {
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        if self.genuine == 0 || self.fraud == 0 {
            return Err(Error::InvalidDataset("both classes need at least one row".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = self.separation / (FRAUD_FEATURES as f64).sqrt();
        let n = self.genuine + self.fraud;
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = if i < self.genuine { GENUINE } else { FRAUD };
            let centre = if label == FRAUD { shift } else { 0.0 };
            features.push(
                (0..FRAUD_FEATURES)
                    .map(|_| centre + rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect(),
            );
            labels.push(label);
        }
        Ok(Dataset {
            features,
            labels,
            targets: vec![],
            row_ids: (0..n).collect(),
            classes: 2,
            split: Split::Full,
            provenance: Provenance::new("synthetic_fraud", Some(seed))
                .with("genuine", self.genuine)
                .with("fraud", self.fraud)
                .with("separation", self.separation),
        })
    }
}

/// Reads transactions with 28 feature columns and a 0/1 class column.
///
/// With a header row, columns named `V1`..`V28` and `Class` are used (other
/// columns such as `Time` and `Amount` are ignored). Without a header the
/// first 28 columns are features and the last is the class.
pub fn read_fraud_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_fraud_csv(&text, &path.display().to_string())
}

pub fn parse_fraud_csv(text: &str, source: &str) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let first = lines
        .peek()
        .map(|(_, l)| *l)
        .ok_or_else(|| Error::InvalidDataset("empty CSV".into()))?;
    let fields = split_fields(first);
    let has_header = fields.iter().any(|f| f.parse::<f64>().is_err());
    let (feature_cols, class_col) = if has_header {
        let find = |name: &str| fields.iter().position(|f| f.eq_ignore_ascii_case(name));
        let class = find("Class").ok_or_else(|| Error::InvalidDataset("missing class column".into()))?;
        let named: Option<Vec<usize>> = (1..=FRAUD_FEATURES).map(|k| find(&format!("V{k}"))).collect();
        let features = match named {
            Some(cols) => cols,
            None => {
                let others: Vec<usize> = (0..fields.len()).filter(|&c| c != class).collect();
                if others.len() != FRAUD_FEATURES {
                    return Err(Error::InvalidDataset(format!(
                        "expected {FRAUD_FEATURES} feature columns, found {}",
                        others.len()
                    )));
                }
                others
            }
        };
        lines.next();
        (features, class)
    } else {
        if fields.len() != FRAUD_FEATURES + 1 {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected {} columns, found {}", FRAUD_FEATURES + 1, fields.len()),
            });
        }
        ((0..FRAUD_FEATURES).collect(), FRAUD_FEATURES)
    };
    let width = if has_header { fields.len() } else { FRAUD_FEATURES + 1 };
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let cells = split_fields(line);
        if cells.len() != width {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {width} columns, found {}", cells.len()),
            });
        }
        let num = |c: usize| -> Result<f64> {
            let v: f64 = cells[c].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("column {}: cannot parse {:?}", c + 1, cells[c]),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse {
                    line: line_no,
                    message: format!("column {}: non-finite value", c + 1),
                })
            }
        };
        let row = feature_cols.iter().map(|&c| num(c)).collect::<Result<Vec<f64>>>()?;
        let label = match num(class_col)? {
            0.0 => GENUINE,
            1.0 => FRAUD,
            v => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("class must be 0 or 1, found {v}"),
                })
            }
        };
        features.push(row);
        labels.push(label);
    }
    let n = features.len();
    Ok(Dataset {
        features,
        labels,
        targets: vec![],
        row_ids: (0..n).collect(),
        classes: 2,
        split: Split::Full,
        provenance: Provenance::new(source, None),
    })
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(',').map(|f| f.trim().trim_matches('"')).collect()
}

/// Where fraud transactions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FraudSource {
    Csv { path: String },
    Synthetic(SyntheticFraud),
}

/// Undersampled fraud split.
///
/// Fraud rows are halved into F1 (train) and F2 (test). G1 holds `3 |F1|`
/// genuine rows drawn without replacement for training, G2 the next `|G1|`
/// for testing, and every remaining genuine row (G3) is appended to the
/// test set. Features are standardized with training-set statistics.
pub fn split_fraud(all: &Dataset, seed: u64) -> Result<(Dataset, Dataset, Standardizer)> {
    all.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fraud: Vec<usize> = (0..all.len()).filter(|&i| all.labels[i] == FRAUD).collect();
    let mut genuine: Vec<usize> = (0..all.len()).filter(|&i| all.labels[i] == GENUINE).collect();
    if fraud.len() < 2 || genuine.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "need at least two fraud rows and one genuine row, found {} and {}",
            fraud.len(),
            genuine.len()
        )));
    }
    fraud.shuffle(&mut rng);
    genuine.shuffle(&mut rng);
    let (f1, f2) = fraud.split_at(fraud.len() / 2);
    let g1_len = 3 * f1.len();
    if genuine.len() < 2 * g1_len {
        return Err(Error::InvalidDataset(format!(
            "{} genuine rows cannot fill G1 and G2 of {g1_len} rows each",
            genuine.len()
        )));
    }
    let (g1, rest) = genuine.split_at(g1_len);
    let mut train_idx: Vec<usize> = f1.iter().chain(g1).copied().collect();
    train_idx.shuffle(&mut rng);
    let test_idx: Vec<usize> = f2.iter().chain(rest).copied().collect();
    let mut train = all.select(&train_idx, Split::Train);
    let mut test = all.select(&test_idx, Split::Test);
    let std = Standardizer::fit(&train)?;
    std.apply(&mut train);
    std.apply(&mut test);
    for d in [&mut train, &mut test] {
        d.provenance = d
            .provenance
            .clone()
            .with("split_seed", seed)
            .with("f1", f1.len())
            .with("f2", f2.len())
            .with("g1", g1_len)
            .with("g2", g1_len)
            .with("g3", rest.len() - g1_len);
    }
    Ok((train, test, std))
}

pub fn prepare_fraud(source: &FraudSource, seed: u64) -> Result<(Dataset, Dataset, Standardizer)> {
    let all = match source {
        FraudSource::Csv { path } => read_fraud_csv(Path::new(path))?,
        FraudSource::Synthetic(cfg) => cfg.generate(seed)?,
    };
    split_fraud(&all, seed)
}

/// Per-feature affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidDataset("cannot standardize an empty dataset".into()));
        }
        let n = data.len() as f64;
        let w = data.width();
        let mean: Vec<f64> = (0..w)
            .map(|c| data.features.iter().map(|r| r[c]).sum::<f64>() / n)
            .collect();
        let std = (0..w)
            .map(|c| {
                let var = data.features.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, data: &mut Dataset) {
        for row in &mut data.features {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
    }
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Raw IDX images as `(rows, cols, pixels)` with one `Vec<u8>` per image.
pub fn read_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let header = |k: usize| -> Result<u32> {
        bytes
            .get(4 * k..4 * k + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::Idx("truncated header".into()))
    };
    let magic = header(0)?;
    if magic != IDX_IMAGES {
        return Err(Error::Idx(format!("bad image magic number {magic:#010x}")));
    }
    let (n, rows, cols) = (header(1)? as usize, header(2)? as usize, header(3)? as usize);
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() < n * size {
        return Err(Error::Idx(format!(
            "truncated file: {} of {} pixel bytes",
            body.len(),
            n * size
        )));
    }
    Ok((rows, cols, body[..n * size].chunks(size).map(<[u8]>::to_vec).collect()))
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.len() < 8 {
        return Err(Error::Idx("truncated header".into()));
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if magic != IDX_LABELS {
        return Err(Error::Idx(format!("bad label magic number {magic:#010x}")));
    }
    let n = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    if bytes.len() < 8 + n {
        return Err(Error::Idx(format!("truncated file: {} of {n} labels", bytes.len() - 8)));
    }
    Ok(bytes[8..8 + n].to_vec())
}

/// Serializes images in IDX format (used for fixtures).
pub fn write_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IDX_IMAGES, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageFilter {
    /// Labels to keep, relabelled to their position in this list.
    pub classes: Vec<u8>,
    pub per_class_limit: Option<usize>,
    /// Average 2x2 pixel blocks.
    pub downsample: bool,
}

impl Default for ImageFilter {
    fn default() -> Self {
        Self {
            classes: vec![0, 1, 2, 3],
            per_class_limit: None,
            downsample: false,
        }
    }
}

/// Loads an IDX image/label pair, filtering and scaling pixels to `[0, 1]`.
///
/// When `per_class_limit` is set, rows are shuffled with `seed` before the
/// cap is applied.
pub fn load_idx_pair(images: &Path, labels: &Path, filter: &ImageFilter, seed: u64, split: Split) -> Result<Dataset> {
    let read = |p: &Path| -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        fs::File::open(p)?.read_to_end(&mut buf)?;
        Ok(buf)
    };
    let (rows, cols, pixels) = read_idx_images(&read(images)?)?;
    let raw_labels = read_idx_labels(&read(labels)?)?;
    if raw_labels.len() != pixels.len() {
        return Err(Error::Idx(format!(
            "{} images but {} labels",
            pixels.len(),
            raw_labels.len()
        )));
    }
    let mut order: Vec<usize> = (0..pixels.len()).collect();
    if filter.per_class_limit.is_some() {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut taken = vec![0usize; filter.classes.len()];
    let mut ds = Dataset {
        features: vec![],
        labels: vec![],
        targets: vec![],
        row_ids: vec![],
        classes: filter.classes.len(),
        split,
        provenance: Provenance::new(images.display().to_string(), Some(seed))
            .with("classes", format!("{:?}", filter.classes))
            .with("downsample", filter.downsample),
    };
    for i in order {
        let Some(class) = filter.classes.iter().position(|&c| c == raw_labels[i]) else {
            continue;
        };
        if filter.per_class_limit.is_some_and(|cap| taken[class] >= cap) {
            continue;
        }
        taken[class] += 1;
        let scaled: Vec<f64> = pixels[i].iter().map(|&b| f64::from(b) / 255.0).collect();
        ds.features.push(if filter.downsample {
            pool2(&scaled, rows, cols)
        } else {
            scaled
        });
        ds.labels.push(class);
        ds.row_ids.push(i);
    }
    Ok(ds)
}

fn pool2(img: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let (r2, c2) = (rows / 2, cols / 2);
    let mut out = Vec::with_capacity(r2 * c2);
    for r in 0..r2 {
        for c in 0..c2 {
            let at = |dr: usize, dc: usize| img[(2 * r + dr) * cols + 2 * c + dc];
            out.push((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0);
        }
    }
    out
}

/// Train and test sets from a directory with the standard MNIST file names.
pub fn load_mnist(
    dir: &Path,
    filter: &ImageFilter,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let with_limit = |limit: Option<usize>| ImageFilter {
        per_class_limit: limit.map(|l| l.div_ceil(filter.classes.len().max(1))),
        ..filter.clone()
    };
    let train = load_idx_pair(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        &with_limit(train_limit),
        seed,
        Split::Train,
    )?;
    let test = load_idx_pair(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        &with_limit(test_limit),
        seed.wrapping_add(1),
        Split::Test,
    )?;
    Ok((train, test))
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_sine_is_exact() {
        let d = gen_noisy_sine(50, 0.0, (-2.0, 2.0), 3).unwrap();
        for (x, f) in d.features.iter().zip(&d.targets) {
            assert_eq!(*f, x[0].sin());
            assert!(x[0] > -2.0 && x[0] < 2.0);
        }
    }

    #[test]
    fn sine_noise_level_and_determinism() {
        let d = gen_noisy_sine(100, 0.1, (-2.0, 2.0), 11).unwrap();
        let r: Vec<f64> = d.features.iter().zip(&d.targets).map(|(x, f)| f - x[0].sin()).collect();
        let mean = r.iter().sum::<f64>() / 100.0;
        let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        assert!((0.08..=0.12).contains(&sd), "{sd}");
        assert_eq!(
            d.fingerprint(),
            gen_noisy_sine(100, 0.1, (-2.0, 2.0), 11).unwrap().fingerprint()
        );
        assert_ne!(
            d.fingerprint(),
            gen_noisy_sine(100, 0.1, (-2.0, 2.0), 12).unwrap().fingerprint()
        );
    }

    #[test]
    fn synthetic_fraud_split_laws() {
        let (train, test, _) = prepare_fraud(&FraudSource::Synthetic(SyntheticFraud::default()), 5).unwrap();
        let tc = train.class_counts();
        assert_eq!(tc[GENUINE], 3 * tc[FRAUD]);
        assert_eq!(tc[FRAUD], 100);
        let te = test.class_counts();
        assert_eq!(te, vec![1700, 100]);
        let mut ids: Vec<usize> = train.row_ids.iter().chain(&test.row_ids).copied().collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..2200).collect::<Vec<_>>());
        // standardized on train statistics
        for c in 0..FRAUD_FEATURES {
            let m = train.features.iter().map(|r| r[c]).sum::<f64>() / train.len() as f64;
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn odd_fraud_count_keeps_ratio() {
        let cfg = SyntheticFraud {
            genuine: 100,
            fraud: 7,
            separation: 1.0,
        };
        let (train, test, _) = prepare_fraud(&FraudSource::Synthetic(cfg), 1).unwrap();
        assert_eq!(train.class_counts(), vec![9, 3]);
        assert_eq!(test.class_counts(), vec![91, 4]);
    }

    #[test]
    fn csv_with_header_and_extra_columns() {
        let mut text = String::from("Time,");
        text += &(1..=28).map(|k| format!("V{k}")).collect::<Vec<_>>().join(",");
        text += ",Amount,\"Class\"\n";
        for i in 0..3 {
            text += &format!("{i},");
            text += &(1..=28)
                .map(|k| format!("{}", k as f64 * 0.5))
                .collect::<Vec<_>>()
                .join(",");
            text += &format!(",9.5,{}\n", i % 2);
        }
        let d = parse_fraud_csv(&text, "t").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.features[0][0], 0.5);
        assert_eq!(d.features[0][27], 14.0);
        assert_eq!(d.labels, vec![0, 1, 0]);
    }

    #[test]
    fn csv_errors_report_line() {
        let row = |c: &str| format!("{},{c}\n", vec!["1.0"; 28].join(","));
        let text = row("0") + &row("1") + &format!("{},x,0\n", vec!["1.0"; 27].join(","));
        match parse_fraud_csv(&text, "t") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let header = (1..=28).map(|k| format!("V{k}")).collect::<Vec<_>>().join(",") + "\n";
        assert!(matches!(parse_fraud_csv(&header, "t"), Err(Error::InvalidDataset(_))));
        assert!(matches!(
            parse_fraud_csv(&(row("2")), "t"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let imgs = vec![vec![0u8, 255, 128, 3], vec![1, 2, 3, 4], vec![9, 9, 9, 9]];
        let bytes = write_idx_images(2, 2, &imgs);
        let (r, c, back) = read_idx_images(&bytes).unwrap();
        assert_eq!((r, c), (2, 2));
        assert_eq!(back, imgs);
        assert!(matches!(read_idx_images(&bytes[..20]), Err(Error::Idx(_))));
        let mut bad = bytes.clone();
        bad[3] = 0x01;
        assert!(matches!(read_idx_images(&bad), Err(Error::Idx(_))));
        let labels = write_idx_labels(&[7, 1, 2]);
        assert_eq!(read_idx_labels(&labels).unwrap(), vec![7, 1, 2]);
        assert!(read_idx_labels(&labels[..9]).is_err());
    }

    #[test]
    fn idx_filter_scale_and_limit() {
        let dir = tempfile::tempdir().unwrap();
        let imgs: Vec<Vec<u8>> = (0..12u8).map(|i| vec![i * 20; 16]).collect();
        let labels: Vec<u8> = (0..12u8).map(|i| i % 6).collect();
        std::fs::write(dir.path().join("i"), write_idx_images(4, 4, &imgs)).unwrap();
        std::fs::write(dir.path().join("l"), write_idx_labels(&labels)).unwrap();
        let f = ImageFilter {
            downsample: true,
            ..Default::default()
        };
        let d = load_idx_pair(&dir.path().join("i"), &dir.path().join("l"), &f, 0, Split::Train).unwrap();
        assert_eq!(d.len(), 8);
        assert!(d.labels.iter().all(|&l| l < 4));
        assert!(d.features.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(d.width(), 4);
        let capped = ImageFilter {
            per_class_limit: Some(1),
            ..Default::default()
        };
        let d = load_idx_pair(&dir.path().join("i"), &dir.path().join("l"), &capped, 0, Split::Train).unwrap();
        assert_eq!(d.class_counts(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn one_hot_sums_to_one() {
        for l in 0..4 {
            let v = one_hot(l, 4);
            assert_eq!(v.iter().sum::<f64>(), 1.0);
            assert_eq!(v[l], 1.0);
        }
    }
}
