//! Manipulated distillation targets.
//!
//! Every transform works row by row. The "top k" of a row are its k largest
//! values, ties resolved toward the lower class index.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ordering::{argmax, rank_order};
use crate::rng::{substream, tag};
use crate::store::{LabelVector, LogitMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManipulationKind {
    FixKPermute,
    FixKAverage,
    CorrectFix1,
    Hybrid,
}

impl FromStr for ManipulationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fix_k_permute" => Ok(Self::FixKPermute),
            "fix_k_average" => Ok(Self::FixKAverage),
            "correct_fix_1" => Ok(Self::CorrectFix1),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(Error::Validation(format!("unknown manipulation kind {other:?}"))),
        }
    }
}

impl fmt::Display for ManipulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FixKPermute => "fix_k_permute",
            Self::FixKAverage => "fix_k_average",
            Self::CorrectFix1 => "correct_fix_1",
            Self::Hybrid => "hybrid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ManipulationSpec {
    pub kind: ManipulationKind,
    /// Used by the fix-k kinds.
    pub k: usize,
    /// Used by `FixKPermute`.
    pub seed: u64,
}

impl ManipulationSpec {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        match self.kind {
            ManipulationKind::FixKPermute | ManipulationKind::FixKAverage => check_k(self.k, n_classes),
            _ => Ok(()),
        }
    }
}

fn check_k(k: usize, n_classes: usize) -> Result<()> {
    if k == 0 || k > n_classes {
        return Err(Error::Validation(format!("k must lie in [1, {n_classes}], got {k}")));
    }
    Ok(())
}

fn map_rows<F>(m: &LogitMatrix, f: F) -> LogitMatrix
where
    F: Fn(usize, &[f64], &mut [f64]) + Sync,
{
    let cols = m.cols();
    let mut out = m.values().to_vec();
    out.par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, dst)| f(i, m.row(i), dst));
    LogitMatrix::new(m.rows(), cols, out).expect("row transforms keep values finite")
}

/// Keep the top k of each row in place and shuffle the remaining values
/// among the remaining positions. Row i uses its own substream of `seed`.
pub fn fix_k_permute(m: &LogitMatrix, k: usize, seed: u64) -> Result<LogitMatrix> {
    check_k(k, m.cols())?;
    Ok(map_rows(m, |i, src, dst| {
        let mut rest = rank_order(src).split_off(k);
        rest.sort_unstable();
        let mut values: Vec<f64> = rest.iter().map(|&j| src[j]).collect();
        values.shuffle(&mut substream(seed, tag::ROW_PERMUTE, i as u64));
        for (&j, v) in rest.iter().zip(values) {
            dst[j] = v;
        }
    }))
}

/// Keep the top k of each row and replace the others by their mean.
pub fn fix_k_average(m: &LogitMatrix, k: usize) -> Result<LogitMatrix> {
    check_k(k, m.cols())?;
    Ok(map_rows(m, |_, src, dst| {
        let rest = &rank_order(src)[k..];
        if rest.len() < 2 {
            return;
        }
        let mean = rest.iter().map(|&j| src[j]).sum::<f64>() / rest.len() as f64;
        for &j in rest {
            dst[j] = mean;
        }
    }))
}

/// Swap the predicted and true-class values on every misclassified row.
pub fn correct_fix_1(m: &LogitMatrix, labels: &LabelVector) -> Result<LogitMatrix> {
    if labels.len() != m.rows() {
        return Err(Error::Validation("labels length mismatch".into()));
    }
    if let Some(i) = labels.as_slice().iter().position(|&l| l >= m.cols()) {
        return Err(Error::Validation(format!("label out of range at index {i}")));
    }
    let labels = labels.as_slice();
    Ok(map_rows(m, |i, src, dst| {
        let pred = argmax(src);
        dst.swap(pred, labels[i]);
    }))
}

/// Give the r-th largest value of `value_source` to the class holding rank r
/// in `index_source`.
pub fn hybrid_merge(value_source: &LogitMatrix, index_source: &LogitMatrix) -> Result<LogitMatrix> {
    if !value_source.same_shape(index_source) {
        return Err(Error::Validation(format!(
            "shape mismatch: {}x{} vs {}x{}",
            value_source.rows(),
            value_source.cols(),
            index_source.rows(),
            index_source.cols()
        )));
    }
    Ok(map_rows(value_source, |i, src, dst| {
        let by_value = rank_order(src);
        let by_index = rank_order(index_source.row(i));
        for (&from, &to) in by_value.iter().zip(&by_index) {
            dst[to] = src[from];
        }
    }))
}

pub fn apply(spec: &ManipulationSpec, m: &LogitMatrix, labels: Option<&LabelVector>, other: Option<&LogitMatrix>) -> Result<LogitMatrix> {
    spec.validate(m.cols())?;
    match spec.kind {
        ManipulationKind::FixKPermute => fix_k_permute(m, spec.k, spec.seed),
        ManipulationKind::FixKAverage => fix_k_average(m, spec.k),
        ManipulationKind::CorrectFix1 => {
            correct_fix_1(m, labels.ok_or_else(|| Error::Validation("correct_fix_1 needs labels".into()))?)
        }
        ManipulationKind::Hybrid => hybrid_merge(
            m,
            other.ok_or_else(|| Error::Validation("hybrid needs an index-source matrix".into()))?,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[Vec<f64>]) -> LogitMatrix {
        LogitMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn permute_keeps_top_one() {
        let m = mat(&[vec![5.0, 3.0, 1.0, 0.0]]);
        for seed in 0..20 {
            let out = fix_k_permute(&m, 1, seed).unwrap();
            let row = out.row(0);
            assert_eq!(row[0], 5.0);
            let mut rest = row[1..].to_vec();
            rest.sort_by(f64::total_cmp);
            assert_eq!(rest, vec![0.0, 1.0, 3.0]);
        }
    }

    #[test]
    fn permute_with_full_k_is_identity() {
        let m = mat(&[vec![5.0, 3.0, 1.0, 0.0], vec![0.0, 2.0, 2.0, 9.0]]);
        assert_eq!(fix_k_permute(&m, 4, 3).unwrap(), m);
        assert!(fix_k_permute(&m, 0, 3).is_err());
        assert!(fix_k_permute(&m, 5, 3).is_err());
    }

    #[test]
    fn average_examples() {
        let m = mat(&[vec![5.0, 3.0, 1.0, 0.0]]);
        let out = fix_k_average(&m, 1).unwrap();
        assert_eq!(out.row(0), &[5.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0]);
        assert_eq!(fix_k_average(&m, 4).unwrap(), m);
        assert_eq!(fix_k_average(&m, 3).unwrap(), m);
    }

    #[test]
    fn tie_at_cutoff_keeps_lower_index() {
        let m = mat(&[vec![1.0, 4.0, 1.0, 0.0]]);
        let out = fix_k_average(&m, 2).unwrap();
        assert_eq!(out.row(0), &[1.0, 4.0, 0.5, 0.5]);
    }

    #[test]
    fn correct_fix_examples() {
        let m = mat(&[vec![4.0, 1.0, 9.0], vec![9.0, 1.0, 4.0]]);
        let out = correct_fix_1(&m, &LabelVector(vec![0, 0])).unwrap();
        assert_eq!(out.row(0), &[9.0, 1.0, 4.0]);
        assert_eq!(out.row(1), &[9.0, 1.0, 4.0]);
        assert!(correct_fix_1(&m, &LabelVector(vec![0])).is_err());
    }

    #[test]
    fn hybrid_examples() {
        let v = mat(&[vec![2.0, 5.0, 1.0]]);
        let ix = mat(&[vec![0.1, 0.2, 0.9]]);
        assert_eq!(hybrid_merge(&v, &ix).unwrap().row(0), &[1.0, 2.0, 5.0]);
        assert_eq!(hybrid_merge(&v, &v).unwrap(), v);
        assert!(hybrid_merge(&v, &mat(&[vec![1.0, 2.0]])).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [
            ManipulationKind::FixKPermute,
            ManipulationKind::FixKAverage,
            ManipulationKind::CorrectFix1,
            ManipulationKind::Hybrid,
        ] {
            assert_eq!(k.to_string().parse::<ManipulationKind>().unwrap(), k);
        }
    }
}
