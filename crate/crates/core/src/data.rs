//! Datasets: the CIFAR-10 binary format, a seeded interleaved-spiral
//! generator, train/validation splits and mini-batch plans.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::TAU;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

pub const CIFAR10_PIXELS: usize = 3072;
pub const CIFAR10_RECORD: usize = CIFAR10_PIXELS + 1;
pub const CIFAR10_CLASSES: usize = 10;
pub const CIFAR10_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR10_TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.shape().len() != 2 || features.rows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "features {:?} for {} labels",
                features.shape(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        if !features.is_finite() {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let features = self.features.select_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(features, labels, self.num_classes)
    }

    /// Features and labels of one batch without building a `Dataset`.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let features = self.features.select_rows(indices)?;
        Ok((features, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}

/// Per-feature mean/stddev fitted on one dataset and applied to others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Self {
        let (n, d) = (data.len() as f64, data.dim());
        let mut mean = vec![0.0; d];
        for i in 0..data.len() {
            for (m, &x) in mean.iter_mut().zip(data.features.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..data.len() {
            for ((v, &x), m) in var.iter_mut().zip(data.features.row(i)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        // constant features are centered but left unscaled
        let scale = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    1.0 / s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.mean.len() {
            return Err(Error::ShapeMismatch(format!(
                "standardizer fitted on {} features, got {}",
                self.mean.len(),
                data.dim()
            )));
        }
        let mut features = data.features.clone();
        for row in features.data_mut().chunks_exact_mut(self.mean.len()) {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *x = (*x - m) * s;
            }
        }
        Dataset::new(features, data.labels.clone(), data.num_classes)
    }
}

fn parse_cifar10(bytes: &[u8], path: &str, max_records: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    if !bytes.len().is_multiple_of(CIFAR10_RECORD) {
        return Err(Error::BadRecordLength {
            path: path.to_owned(),
            len: bytes.len(),
            record: CIFAR10_RECORD,
        });
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in bytes.chunks_exact(CIFAR10_RECORD).take(max_records) {
        let label = record[0] as usize;
        if label >= CIFAR10_CLASSES {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: CIFAR10_CLASSES,
            });
        }
        labels.push(label);
        features.extend(record[1..].iter().map(|&p| f64::from(p) / 255.0));
    }
    Ok((features, labels))
}

/// Reads CIFAR-10 binary batch files: per record one label byte then 3072
/// pixel bytes (R, G, B planes). Pixels are scaled to `[0, 1]` and flattened.
pub fn load_cifar10<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    load_cifar10_limited(paths, usize::MAX)
}

/// As [`load_cifar10`], keeping at most `max_records` records in file order.
pub fn load_cifar10_limited<P: AsRef<Path>>(paths: &[P], max_records: usize) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        let remaining = max_records - labels.len();
        let (f, l) = parse_cifar10(&bytes, &path.display().to_string(), remaining)?;
        features.extend(f);
        labels.extend(l);
        if labels.len() >= max_records {
            break;
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let features = Tensor::new(vec![labels.len(), CIFAR10_PIXELS], features)?;
    Dataset::new(features, labels, CIFAR10_CLASSES)
}

/// Paths of the standard train batches and test batch inside `dir`.
pub fn cifar10_files(dir: &Path) -> (Vec<PathBuf>, PathBuf) {
    let train = CIFAR10_TRAIN_FILES.iter().map(|f| dir.join(f)).collect();
    (train, dir.join(CIFAR10_TEST_FILE))
}

/// Interleaved 2-D spiral arms, one per class. Arm `c` follows
/// `r = t`, `θ = 2πc/C + 3π·t` for `t` evenly spaced in `(0, 1]`, with
/// independent `Normal(0, noise²)` jitter on each coordinate.
pub fn make_spirals(
    n_per_class: usize,
    num_classes: usize,
    noise_stddev: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "spirals need n_per_class >= 1 and num_classes >= 2, got {n_per_class}, {num_classes}"
        )));
    }
    if !(noise_stddev.is_finite() && noise_stddev >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise stddev {noise_stddev}"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut features = Vec::with_capacity(2 * n_per_class * num_classes);
    let mut labels = Vec::with_capacity(n_per_class * num_classes);
    for c in 0..num_classes {
        let offset = TAU * c as f64 / num_classes as f64;
        for i in 0..n_per_class {
            let t = (i + 1) as f64 / n_per_class as f64;
            let theta = offset + 1.5 * TAU * t;
            features.push(t * theta.cos() + noise_stddev * rng.normal());
            features.push(t * theta.sin() + noise_stddev * rng.normal());
            labels.push(c);
        }
    }
    let features = Tensor::new(vec![labels.len(), 2], features)?;
    Dataset::new(features, labels, num_classes)
}

/// Seeded permutation, then the first `n − round(n·val_fraction)` rows train
/// and the remainder validate.
pub fn split(data: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::BadFraction(val_fraction));
    }
    let n = data.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::BadFraction(val_fraction));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let (train, val) = order.split_at(n - n_val);
    Ok((data.subset(train)?, data.subset(val)?))
}

/// Mini-batches covering `0..n` exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    batches: Vec<Vec<usize>>,
}

impl BatchPlan {
    pub fn batches(&self) -> &[Vec<usize>] {
        &self.batches
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// Fingerprint of the visiting order, for checking that two runs saw the same plan.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.batches.hash(&mut h);
        h.finish()
    }
}

/// Seeded uniform permutation of `0..n` chunked into `batch_size` pieces; the last may be short.
pub fn plan_batches(n: usize, batch_size: usize, epoch_seed: u64) -> Result<BatchPlan> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(epoch_seed).shuffle(&mut order);
    Ok(BatchPlan {
        batches: order.chunks(batch_size).map(<[usize]>::to_vec).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend(std::iter::repeat_n(fill, CIFAR10_PIXELS));
        r
    }

    #[test]
    fn cifar_fixture_two_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data_batch_1.bin");
        let mut bytes = record(3, 255);
        let mut second = record(9, 0);
        second[1] = 51;
        bytes.extend(second);
        fs::write(&path, bytes).unwrap();

        let ds = load_cifar10(&[&path]).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 3072);
        assert_eq!(ds.num_classes(), 10);
        assert_eq!(ds.labels(), &[3, 9]);
        assert!(ds.features().row(0).iter().all(|&v| v == 1.0));
        assert_eq!(ds.features().row(1)[0], 0.2);
        assert!(ds.features().row(1)[1..].iter().all(|&v| v == 0.0));

        let limited = load_cifar10_limited(&[&path, &path], 3).unwrap();
        assert_eq!(limited.labels(), &[3, 9, 3]);
    }

    #[test]
    fn cifar_bad_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.bin");
        fs::write(&path, vec![0u8; 3072]).unwrap();
        assert!(matches!(
            load_cifar10(&[&path]),
            Err(Error::BadRecordLength { len: 3072, .. })
        ));
    }

    #[test]
    fn cifar_bad_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, record(10, 0)).unwrap();
        assert!(matches!(
            load_cifar10(&[&path]),
            Err(Error::LabelOutOfRange { label: 10, .. })
        ));
    }

    #[test]
    fn cifar_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_cifar10(&[dir.path().join("nope.bin")]),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn spirals_construction() {
        let ds = make_spirals(100, 2, 0.1, 5).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!(ds.labels().iter().filter(|&&l| l == 0).count(), 100);
        assert_eq!(ds.labels().iter().filter(|&&l| l == 1).count(), 100);
        assert!(make_spirals(100, 2, 0.1, 5)
            .unwrap()
            .features()
            .bit_eq(ds.features()));
        assert!(make_spirals(0, 2, 0.1, 5).is_err());
        assert!(make_spirals(5, 1, 0.1, 5).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = make_spirals(5, 2, 0.0, 1).unwrap();
        let (train, val) = split(&ds, 0.2, 9).unwrap();
        assert_eq!((train.len(), val.len()), (8, 2));
        let (train2, val2) = split(&ds, 0.2, 9).unwrap();
        assert_eq!(train, train2);
        assert_eq!(val, val2);
        assert!(matches!(split(&ds, 1.0, 9), Err(Error::BadFraction(_))));
        assert!(matches!(split(&ds, 0.0, 9), Err(Error::BadFraction(_))));
        assert!(matches!(split(&ds, 0.01, 9), Err(Error::BadFraction(_))));
    }

    #[test]
    fn batch_plan_sizes() {
        let plan = plan_batches(10, 3, 4).unwrap();
        let sizes: Vec<_> = plan.batches().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);

        let one = plan_batches(6, 50, 4).unwrap();
        assert_eq!(one.len(), 1);
        let mut all = one.batches()[0].clone();
        all.sort_unstable();
        assert_eq!(all, (0..6).collect::<Vec<_>>());
        assert!(plan_batches(5, 0, 1).is_err());
    }

    #[test]
    fn standardizer_zero_mean_unit_variance() {
        let ds = make_spirals(50, 3, 0.2, 2).unwrap();
        let out = Standardizer::fit(&ds).apply(&ds).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = (0..out.len()).map(|i| out.features().row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn batch_plan_is_partition(n in 1usize..300, batch in 1usize..64, seed: u64) {
            let plan = plan_batches(n, batch, seed).unwrap();
            let mut seen = vec![false; n];
            for (i, b) in plan.batches().iter().enumerate() {
                if i + 1 < plan.len() {
                    prop_assert_eq!(b.len(), batch);
                }
                for &idx in b {
                    prop_assert!(!seen[idx]);
                    seen[idx] = true;
                }
            }
            prop_assert!(seen.into_iter().all(|s| s));
            prop_assert_eq!(plan_batches(n, batch, seed).unwrap(), plan);
        }
    }
}
