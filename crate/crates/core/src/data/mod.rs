//! Dataset ingestion: IDX (MNIST) and libsvm parsers, binarization,
//! stratified subsampling, and small synthetic tasks.

mod idx;
mod libsvm;
pub mod synthetic;

use std::collections::BTreeMap;
use std::path::Path;

pub use idx::{parse_idx, read_idx_file, IdxTensor, IdxType};
pub use libsvm::parse_libsvm;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream, StreamId, StreamPurpose};

/// Examples as matrix rows, with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: String,
    pub inputs: Matrix,
    pub labels: Option<Vec<usize>>,
    /// Original label text for each class index.
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, inputs: Matrix, labels: Option<Vec<usize>>, class_names: Vec<String>) -> Result<Self> {
        if let Some(labels) = &labels {
            if labels.len() != inputs.rows() {
                return Err(Error::InvalidArgument(format!(
                    "{} labels for {} examples",
                    labels.len(),
                    inputs.rows()
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
                return Err(Error::InvalidArgument(format!(
                    "label {bad} outside the {} declared classes",
                    class_names.len()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            split: "all".into(),
            inputs,
            labels,
            class_names,
        })
    }

    pub fn with_split(mut self, split: impl Into<String>) -> Self {
        self.split = split.into();
        self
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> usize {
        self.inputs.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn is_binary(&self) -> bool {
        self.inputs.as_slice().iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            split: self.split.clone(),
            inputs: self.inputs.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            class_names: self.class_names.clone(),
        }
    }

    /// Example counts per class; empty for unlabeled data.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in self.labels().unwrap_or(&[]) {
            counts[l] += 1;
        }
        counts
    }
}

/// Thresholds every input: `value >= threshold` becomes 1, everything else 0.
pub fn binarize(dataset: &Dataset, threshold: f64) -> Dataset {
    let mut out = dataset.clone();
    out.inputs = dataset
        .inputs
        .map(|v| if v >= threshold { 1.0 } else { 0.0 });
    out
}

/// Deterministic subsample of `n` examples, stratified by class when labeled.
pub fn subsample(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    let mut parts = stratified_partition(dataset, &[n], seed)?;
    Ok(parts.remove(0))
}

/// Splits off disjoint subsets of the given sizes.
///
/// Labeled data is stratified: each part receives every class in proportion
/// to its frequency (largest-remainder rounding, so within one example per
/// class). Within a part, examples are in shuffled order.
pub fn stratified_partition(dataset: &Dataset, sizes: &[usize], seed: u64) -> Result<Vec<Dataset>> {
    let total: usize = sizes.iter().sum();
    if total > dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {total} examples from a dataset of {}",
            dataset.len()
        )));
    }
    let mut rng = RngStream::new(seed, StreamId::new(StreamPurpose::Subsample, 0, 0, 0));

    let Some(labels) = dataset.labels() else {
        let order = rng.permutation(dataset.len());
        let mut start = 0;
        return Ok(sizes
            .iter()
            .map(|&size| {
                let part = dataset.subset(&order[start..start + size]);
                start += size;
                part
            })
            .collect());
    };

    // Shuffled pool of example indices per class.
    let mut pools: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        pools.entry(l).or_default().push(i);
    }
    for pool in pools.values_mut() {
        rng.shuffle(pool);
    }

    let mut parts = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let available: usize = pools.values().map(Vec::len).sum();
        let quotas = largest_remainder(&pools, size, available);
        let mut chosen = Vec::with_capacity(size);
        for ((_, pool), quota) in pools.iter_mut().zip(quotas) {
            chosen.extend(pool.drain(..quota));
        }
        rng.shuffle(&mut chosen);
        parts.push(dataset.subset(&chosen));
    }
    Ok(parts)
}

fn largest_remainder(pools: &BTreeMap<usize, Vec<usize>>, size: usize, available: usize) -> Vec<usize> {
    if available == 0 {
        return vec![0; pools.len()];
    }
    let shares: Vec<(usize, f64)> = pools
        .values()
        .map(|p| {
            let exact = size as f64 * p.len() as f64 / available as f64;
            (exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut quotas: Vec<usize> = shares.iter().map(|s| s.0).collect();
    let mut leftover = size - quotas.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..shares.len()).collect();
    // Stable sort keeps ties in class order.
    by_remainder.sort_by(|&a, &b| shares[b].1.total_cmp(&shares[a].1));
    for &i in by_remainder.iter().cycle() {
        if leftover == 0 {
            break;
        }
        if quotas[i] < pools.values().nth(i).map_or(0, Vec::len) {
            quotas[i] += 1;
            leftover -= 1;
        }
    }
    quotas
}

/// Reads an IDX image file and its label file, scaling pixels to `[0, 1]`.
pub fn load_idx_pair(images: &Path, labels: &Path, name: &str) -> Result<Dataset> {
    let images = read_idx_file(images)?;
    let labels = read_idx_file(labels)?;
    dataset_from_idx(&images, &labels, name)
}

pub fn dataset_from_idx(images: &IdxTensor, labels: &IdxTensor, name: &str) -> Result<Dataset> {
    let n = *images
        .dims
        .first()
        .ok_or_else(|| Error::InvalidArgument("image tensor has no dimensions".into()))?;
    let features: usize = images.dims[1..].iter().product();
    if labels.dims != [n] {
        return Err(Error::InvalidArgument(format!(
            "label tensor dims {:?} do not match {n} images",
            labels.dims
        )));
    }
    let pixels: Vec<f64> = images.data.iter().map(|&b| f64::from(b) / 255.0).collect();
    let inputs = Matrix::from_vec(n, features, pixels)?;
    let raw: Vec<usize> = labels.data.iter().map(|&b| b as usize).collect();
    let classes = raw.iter().copied().max().map_or(0, |m| m + 1);
    Dataset::new(name, inputs, Some(raw), (0..classes).map(|c| c.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(counts: &[usize]) -> Dataset {
        let mut labels = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            labels.extend(std::iter::repeat_n(c, n));
        }
        let inputs = Matrix::from_vec(labels.len(), 1, (0..labels.len()).map(|i| i as f64).collect()).unwrap();
        let names = (0..counts.len()).map(|c| c.to_string()).collect();
        Dataset::new("t", inputs, Some(labels), names).unwrap()
    }

    #[test]
    fn binarize_threshold() {
        let d = Dataset::new("b", Matrix::from_vec(1, 3, vec![0.2, 0.5, 0.9]).unwrap(), None, vec![]).unwrap();
        let b = binarize(&d, 0.5);
        assert_eq!(b.inputs.as_slice(), &[0.0, 1.0, 1.0]);
        assert_eq!(binarize(&d, 0.0).inputs.as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(binarize(&b, 0.5), b);
    }

    #[test]
    fn binarize_keeps_labels_aligned() {
        let d = labeled(&[3, 2]);
        let b = binarize(&d, 2.5);
        assert_eq!(b.labels, d.labels);
        assert_eq!(b.inputs.shape(), d.inputs.shape());
    }

    #[test]
    fn stratified_counts() {
        let d = labeled(&[100; 10]);
        let s = subsample(&d, 100, 9).unwrap();
        assert_eq!(s.class_counts(), vec![10; 10]);
    }

    #[test]
    fn stratification_within_one_per_class() {
        let d = labeled(&[37, 5, 120, 64]);
        let total = d.len() as f64;
        for n in [1, 7, 50, 100, 225] {
            let s = subsample(&d, n, 3).unwrap();
            assert_eq!(s.len(), n);
            for (c, &got) in s.class_counts().iter().enumerate() {
                let exact = n as f64 * d.class_counts()[c] as f64 / total;
                assert!((got as f64 - exact).abs() < 1.0 + 1e-9, "n {n} class {c}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn full_subsample_is_a_permutation() {
        let d = labeled(&[4, 6]);
        let s = subsample(&d, 10, 1).unwrap();
        let mut ids: Vec<usize> = s.inputs.as_slice().iter().map(|&v| v as usize).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
        for (row, &l) in s.inputs.as_slice().iter().zip(s.labels().unwrap()) {
            assert_eq!(d.labels().unwrap()[*row as usize], l);
        }
    }

    #[test]
    fn same_seed_same_subset() {
        let d = labeled(&[50, 50]);
        assert_eq!(subsample(&d, 30, 5).unwrap(), subsample(&d, 30, 5).unwrap());
        assert_ne!(subsample(&d, 30, 5).unwrap(), subsample(&d, 30, 6).unwrap());
    }

    #[test]
    fn partition_is_disjoint() {
        let d = labeled(&[40, 60]);
        let parts = stratified_partition(&d, &[30, 50], 2).unwrap();
        let mut seen: Vec<usize> = parts
            .iter()
            .flat_map(|p| p.inputs.as_slice().iter().map(|&v| v as usize))
            .collect();
        assert_eq!(seen.len(), 80);
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 80);
        assert_eq!(parts[0].class_counts(), vec![12, 18]);
    }

    #[test]
    fn oversized_request_fails() {
        let d = labeled(&[2, 2]);
        assert!(subsample(&d, 5, 0).is_err());
        let unlabeled = Dataset::new("u", Matrix::zeros(3, 2), None, vec![]).unwrap();
        assert_eq!(subsample(&unlabeled, 3, 0).unwrap().len(), 3);
        assert!(subsample(&unlabeled, 4, 0).is_err());
    }
}
