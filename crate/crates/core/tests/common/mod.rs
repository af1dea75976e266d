#![allow(dead_code)]

use logitlab::store::{validate_bundle, DatasetBundle, LabelVector, LogitMatrix, RobustFlags};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rows: usize, cols: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..rows)
        .map(|_| (0..cols).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> LogitMatrix {
    LogitMatrix::from_rows(&gaussian_rows(rows, cols, 2.0, seed)).unwrap()
}

/// Logits whose argmax agrees with the label about 70% of the time, with
/// random robustness flags.
pub fn bundle(rows: usize, cols: usize, seed: u64) -> DatasetBundle {
    let mut r = rng(seed ^ 0x5eed);
    let mut data = gaussian_rows(rows, cols, 1.5, seed);
    let mut labels = Vec::with_capacity(rows);
    for row in data.iter_mut() {
        let y = r.random_range(0..cols);
        if r.random::<f64>() < 0.7 {
            row[y] += 4.0;
        }
        labels.push(y);
    }
    let flags = (0..rows).map(|_| r.random::<bool>()).collect();
    validate_bundle(
        LogitMatrix::from_rows(&data).unwrap(),
        LabelVector(labels),
        Some(RobustFlags(flags)),
    )
    .unwrap()
}

/// Indices sorted by value, largest first, lower index on ties.
pub fn descending_order(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
    idx
}
