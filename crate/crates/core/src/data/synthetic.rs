//! Small generated classification tasks for desk-scale runs.

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Matrix, RngStream, StreamId, StreamPurpose};

use super::Dataset;

fn stream(seed: u64, tensor: u8) -> RngStream {
    RngStream::new(seed, StreamId::new(StreamPurpose::Synthetic, tensor, 0, 0))
}

/// Two classes in `[0,1]^features` split by a random hyperplane through the
/// cube's center, keeping only points at least `margin` away from it.
pub fn linearly_separable(n: usize, features: usize, margin: f64, seed: u64) -> Result<Dataset> {
    if features == 0 {
        return Err(Error::InvalidArgument("need at least one feature".into()));
    }
    let mut rng = stream(seed, 0);
    let normal: Vec<f64> = (0..features).map(|_| rng.uniform() * 2.0 - 1.0).collect();
    let norm = normal.iter().map(|w| w * w).sum::<f64>().sqrt();

    let mut data = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    while labels.len() < n {
        let x: Vec<f64> = (0..features).map(|_| rng.uniform()).collect();
        let side: f64 = x.iter().zip(&normal).map(|(x, w)| (x - 0.5) * w).sum::<f64>() / norm;
        if side.abs() < margin {
            continue;
        }
        labels.push(usize::from(side > 0.0));
        data.extend(x);
    }
    Dataset::new(
        "separable",
        Matrix::from_vec(n, features, data)?,
        Some(labels),
        vec!["0".into(), "1".into()],
    )
}

/// Labels drawn from a fixed random "teacher" network.
///
/// Inputs are independent uniform values in `[0,1]`; the label is the argmax
/// of a random sigmoid network with `teacher_hidden` units and `classes`
/// outputs. The task needs several hidden units to be solved, and its
/// decision boundaries are set by fine-grained weight differences.
pub fn teacher_task(n: usize, features: usize, classes: usize, teacher_hidden: usize, seed: u64) -> Result<Dataset> {
    if features == 0 || classes < 2 || teacher_hidden == 0 {
        return Err(Error::InvalidArgument(
            "teacher task needs features >= 1, classes >= 2 and teacher_hidden >= 1".into(),
        ));
    }
    let mut rng = stream(seed, 1);
    let scale_in = 4.0 / (features as f64).sqrt();
    let w1: Vec<f64> = (0..features * teacher_hidden)
        .map(|_| (rng.uniform() * 2.0 - 1.0) * scale_in * 3f64.sqrt())
        .collect();
    let scale_out = 4.0 / (teacher_hidden as f64).sqrt();
    let w2: Vec<f64> = (0..teacher_hidden * classes)
        .map(|_| (rng.uniform() * 2.0 - 1.0) * scale_out * 3f64.sqrt())
        .collect();

    let mut data_rng = stream(seed, 2);
    let mut data = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    let mut hidden = vec![0.0; teacher_hidden];
    let mut out = vec![0.0; classes];
    for _ in 0..n {
        let x: Vec<f64> = (0..features).map(|_| data_rng.uniform()).collect();
        for (h, value) in hidden.iter_mut().enumerate() {
            let z: f64 = x
                .iter()
                .enumerate()
                .map(|(i, xi)| (xi - 0.5) * w1[i * teacher_hidden + h])
                .sum();
            *value = sigmoid(z) - 0.5;
        }
        for (c, value) in out.iter_mut().enumerate() {
            *value = hidden
                .iter()
                .enumerate()
                .map(|(h, hv)| hv * w2[h * classes + c])
                .sum();
        }
        let label = out
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(c, _)| c)
            .expect("at least two classes");
        labels.push(label);
        data.extend(x);
    }
    Dataset::new(
        "teacher",
        Matrix::from_vec(n, features, data)?,
        Some(labels),
        (0..classes).map(|c| c.to_string()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_respects_margin() {
        let d = linearly_separable(200, 5, 0.05, 1).unwrap();
        assert_eq!(d.len(), 200);
        let counts = d.class_counts();
        assert!(counts[0] > 40 && counts[1] > 40, "{counts:?}");
        assert!(d.inputs.as_slice().iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn teacher_uses_every_class_and_is_deterministic() {
        let a = teacher_task(2000, 64, 4, 16, 3).unwrap();
        let b = teacher_task(2000, 64, 4, 16, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.class_counts().iter().all(|&c| c > 100), "{:?}", a.class_counts());
    }
}
