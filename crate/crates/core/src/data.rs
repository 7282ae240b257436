//! Datasets, synthetic blobs, Dirichlet non-IID partitioning and
//! stratified train/validation splits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::RngCore;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::DataError;

/// Dense row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        num_classes: usize,
    ) -> Result<Self, DataError> {
        if dim == 0 {
            return Err(DataError::InvalidParams("feature dimension must be at least 1".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(DataError::InvalidParams(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::InvalidParams(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            dim,
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
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Copies the given rows, in the given order, into a new dataset that
    /// keeps this dataset's class count.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            labels,
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }
}

/// `num_classes` isotropic unit-variance Gaussian clusters in `dim`
/// dimensions. Cluster means are `separation / sqrt(2)` times random unit
/// directions, so nearly orthogonal means sit about `separation` apart.
/// Sample `i` has label `i % num_classes`.
pub fn generate_blobs<R: RngCore + ?Sized>(
    num_classes: usize,
    dim: usize,
    n: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Dataset, DataError> {
    if num_classes < 2 || n < num_classes || dim == 0 {
        return Err(DataError::InvalidParams(format!(
            "blobs need K >= 2, n >= K and d >= 1 (K={num_classes}, n={n}, d={dim})"
        )));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(DataError::InvalidParams(format!("separation {separation} must be finite and >= 0")));
    }
    let radius = separation / core::f64::consts::SQRT_2;
    let mut means = Vec::with_capacity(num_classes * dim);
    for _ in 0..num_classes {
        let dir: Vec<f64> = loop {
            let d: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            if crate::vecops::l2_norm(&d) > 1e-12 {
                break d;
            }
        };
        let norm = crate::vecops::l2_norm(&dir);
        means.extend(dir.iter().map(|x| radius * x / norm));
    }
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % num_classes;
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(rng);
            features.push(means[k * dim + j] + z);
        }
        labels.push(k);
    }
    Dataset::new(features, labels, dim, num_classes)
}

/// Client id (0-based position) -> sorted sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub assignments: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }

    /// Per-client class histograms.
    pub fn class_histograms(&self, labels: &[usize], num_classes: usize) -> Vec<Vec<usize>> {
        self.assignments
            .iter()
            .map(|idx| {
                let mut h = vec![0; num_classes];
                for &i in idx {
                    h[labels[i]] += 1;
                }
                h
            })
            .collect()
    }
}

pub const MAX_PARTITION_ATTEMPTS: usize = 100;

fn dirichlet<R: RngCore + ?Sized>(alpha: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

/// Class-wise Dirichlet partition: each class's samples are shuffled and cut
/// across clients in proportions drawn from `Dirichlet(alpha * 1)`. Draws that
/// leave any client empty are retried up to [`MAX_PARTITION_ATTEMPTS`] times.
pub fn dirichlet_partition<R: RngCore + ?Sized>(
    labels: &[usize],
    num_clients: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Partition, DataError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(DataError::InvalidParams(format!("dirichlet alpha must be positive, got {alpha}")));
    }
    if num_clients == 0 {
        return Err(DataError::InvalidParams("need at least one client".into()));
    }
    if num_clients > labels.len() {
        return Err(DataError::TooManyClients {
            clients: num_clients,
            samples: labels.len(),
        });
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }

    for _ in 0..MAX_PARTITION_ATTEMPTS {
        let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
        for members in &by_class {
            if members.is_empty() {
                continue;
            }
            let mut shuffled = members.clone();
            shuffled.shuffle(rng);
            let props = dirichlet(alpha, num_clients, rng);
            let n = shuffled.len() as f64;
            let mut start = 0usize;
            let mut cumulative = 0.0;
            for (client, p) in props.iter().enumerate() {
                cumulative += p;
                let end = if client + 1 == num_clients {
                    shuffled.len()
                } else {
                    (libm::round(cumulative * n) as usize).clamp(start, shuffled.len())
                };
                assignments[client].extend_from_slice(&shuffled[start..end]);
                start = end;
            }
        }
        if assignments.iter().all(|a| !a.is_empty()) {
            for a in &mut assignments {
                a.sort_unstable();
            }
            return Ok(Partition { assignments });
        }
    }
    Err(DataError::EmptyClient(MAX_PARTITION_ATTEMPTS))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainValSplit {
    /// Sorted indices.
    pub train: Vec<usize>,
    /// Sorted indices.
    pub val: Vec<usize>,
    /// False when some class had fewer than two samples.
    pub stratified: bool,
}

/// Splits `round(fraction * n)` samples into the training side. Per-class
/// training counts are apportioned by largest remainder so each class is
/// within one sample of `fraction * n_k`.
pub fn split_train_val<R: RngCore + ?Sized>(
    labels: &[usize],
    train_fraction: f64,
    rng: &mut R,
) -> Result<TrainValSplit, DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidFraction(train_fraction));
    }
    let n = labels.len();
    let n_train = libm::round(train_fraction * n as f64) as usize;
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let stratified = by_class.iter().all(|c| c.is_empty() || c.len() >= 2);

    let (mut train, mut val) = if stratified {
        let ideal: Vec<f64> = by_class.iter().map(|c| train_fraction * c.len() as f64).collect();
        let mut quota: Vec<usize> = ideal.iter().map(|x| libm::floor(*x) as usize).collect();
        let mut remaining = n_train - quota.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..num_classes).collect();
        // Largest fractional part first; ties go to the lower class index.
        order.sort_by(|&a, &b| {
            let fa = ideal[a] - quota[a] as f64;
            let fb = ideal[b] - quota[b] as f64;
            fb.partial_cmp(&fa).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        for &k in order.iter().cycle() {
            if remaining == 0 {
                break;
            }
            if quota[k] < by_class[k].len() {
                quota[k] += 1;
                remaining -= 1;
            }
        }
        let mut train = Vec::with_capacity(n_train);
        let mut val = Vec::with_capacity(n - n_train);
        for (k, members) in by_class.iter().enumerate() {
            let mut shuffled = members.clone();
            shuffled.shuffle(rng);
            train.extend_from_slice(&shuffled[..quota[k]]);
            val.extend_from_slice(&shuffled[quota[k]..]);
        }
        (train, val)
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(rng);
        let val = all.split_off(n_train);
        (all, val)
    };
    train.sort_unstable();
    val.sort_unstable();
    Ok(TrainValSplit {
        train,
        val,
        stratified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::derive_stream;

    #[test]
    fn blobs_are_balanced() {
        let mut rng = derive_stream(5, "t/blobs").unwrap();
        let ds = generate_blobs(4, 3, 103, 5.0, &mut rng).unwrap();
        let counts = ds.class_counts();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1);
        assert_eq!(ds.len(), 103);
    }

    #[test]
    fn blobs_reject_bad_params() {
        let mut rng = derive_stream(5, "t/blobs2").unwrap();
        assert!(generate_blobs(1, 3, 10, 1.0, &mut rng).is_err());
        assert!(generate_blobs(4, 3, 3, 1.0, &mut rng).is_err());
        assert!(generate_blobs(2, 3, 10, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn split_92_8() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let mut rng = derive_stream(5, "t/split").unwrap();
        let s = split_train_val(&labels, 0.92, &mut rng).unwrap();
        assert_eq!((s.train.len(), s.val.len()), (92, 8));
        assert!(s.stratified);
        let mut all = s.train.clone();
        all.extend(&s.val);
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_falls_back_without_stratification() {
        let labels = vec![0, 0, 0, 1, 0, 0];
        let mut rng = derive_stream(5, "t/split2").unwrap();
        let s = split_train_val(&labels, 0.5, &mut rng).unwrap();
        assert!(!s.stratified);
        assert_eq!(s.train.len(), 3);
        assert!(split_train_val(&labels, 1.0, &mut rng).is_err());
        assert!(split_train_val(&labels, 0.0, &mut rng).is_err());
    }

    #[test]
    fn partition_errors() {
        let mut rng = derive_stream(5, "t/part").unwrap();
        assert!(matches!(
            dirichlet_partition(&[0, 1], 3, 0.5, &mut rng),
            Err(DataError::TooManyClients { .. })
        ));
        assert!(dirichlet_partition(&[0, 1], 1, 0.0, &mut rng).is_err());
        assert!(dirichlet_partition(&[0, 1], 0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn single_client_gets_everything_in_order() {
        let labels: Vec<usize> = (0..50).map(|i| (i * 7) % 3).collect();
        let mut rng = derive_stream(5, "t/part1").unwrap();
        let p = dirichlet_partition(&labels, 1, 0.1, &mut rng).unwrap();
        assert_eq!(p.assignments[0], (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn subset_copies_rows() {
        let ds = Dataset::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0, 1, 0], 2, 2).unwrap();
        let s = ds.subset(&[2, 0]);
        assert_eq!(s.row(0), &[5.0, 6.0]);
        assert_eq!(s.labels(), &[0, 0]);
        assert_eq!(s.num_classes(), 2);
        assert!(Dataset::new(vec![1.0], vec![2], 1, 2).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], vec![0], 1, 2).is_err());
    }
}
