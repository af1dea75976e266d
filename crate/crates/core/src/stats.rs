//! Distributional and comparative statistics over logit matrices.
//!
//! Covers the max-logit and logit-gap distributions, adversarial accuracy
//! binned by logit gap, per-class confidence rankings and how far two
//! models' rankings disagree, which runner-up classes absorb the errors,
//! average overlap of per-sample class rankings, and cosine neighbours in
//! logit space.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::ordering::{argmax, descending, rank_order, softmax};
use crate::rng::{substream, tag};
use crate::store::{DatasetBundle, LogitMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    /// Adjusted Fisher-Pearson skewness; 0 for constant data.
    pub skewness: f64,
    pub histogram: Vec<HistogramBin>,
}

/// Two-pass moments plus a histogram with edges on multiples of `bin_width`.
pub fn summarize(values: &[f64], bin_width: f64) -> Result<DistributionSummary> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::Validation(format!("bin_width must be positive, got {bin_width}")));
    }
    let n = values.len();
    if n < 3 {
        return Err(Error::Validation(format!(
            "skewness undefined for fewer than 3 values (got {n})"
        )));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &v in values {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    let std = (m2 / (nf - 1.0)).sqrt();
    let (pop_m2, pop_m3) = (m2 / nf, m3 / nf);
    let skewness = if pop_m2 == 0.0 {
        0.0
    } else {
        let g1 = pop_m3 / pop_m2.powf(1.5);
        g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0)
    };
    Ok(DistributionSummary {
        n,
        mean,
        std,
        skewness,
        histogram: histogram(values, bin_width),
    })
}

fn histogram(values: &[f64], bin_width: f64) -> Vec<HistogramBin> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = (lo / bin_width).floor() as i64;
    let last = (hi / bin_width).floor() as i64;
    let mut bins: Vec<HistogramBin> = (first..=last)
        .map(|k| HistogramBin {
            left: k as f64 * bin_width,
            right: (k + 1) as f64 * bin_width,
            count: 0,
        })
        .collect();
    for &v in values {
        let k = ((v / bin_width).floor() as i64 - first).clamp(0, bins.len() as i64 - 1);
        bins[k as usize].count += 1;
    }
    bins
}

pub fn row_maxima(m: &LogitMatrix) -> Vec<f64> {
    m.iter_rows()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

pub fn max_logit_distribution(m: &LogitMatrix, bin_width: f64) -> Result<DistributionSummary> {
    summarize(&row_maxima(m), bin_width)
}

/// Largest minus second-largest value of each row.
pub fn logit_gaps(m: &LogitMatrix) -> Vec<f64> {
    m.iter_rows().map(row_gap).collect()
}

pub(crate) fn row_gap(row: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in row {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    first - second
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapAccuracyBin {
    pub gap_low: f64,
    pub gap_high: f64,
    pub n_samples: usize,
    /// Fraction of robust samples; `None` when the bin holds fewer than
    /// `min_count` samples.
    pub adversarial_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapAccuracyCurve {
    pub bins: Vec<GapAccuracyBin>,
}

pub const DEFAULT_GAP_BIN_WIDTH: f64 = 0.25;
pub const DEFAULT_GAP_MIN_COUNT: usize = 50;

/// Adversarial accuracy as a function of the clean logit gap.
///
/// Gaps are binned on `[k w, (k+1) w)`. Walking upward, a bin with fewer
/// than `min_count` samples absorbs its right neighbour until it is full;
/// a short group left at the top is folded into the group below it.
pub fn gap_accuracy_curve(
    bundle: &DatasetBundle,
    bin_width: f64,
    min_count: usize,
) -> Result<GapAccuracyCurve> {
    let flags = bundle
        .flags
        .as_ref()
        .ok_or_else(|| Error::Validation("gap/accuracy curve needs robustness flags".into()))?;
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::Validation(format!("bin_width must be positive, got {bin_width}")));
    }
    let gaps = logit_gaps(&bundle.logits);
    let top = gaps.iter().copied().fold(0.0, f64::max);
    let n_bins = (top / bin_width).floor() as usize + 1;
    let mut counts = vec![(0usize, 0usize); n_bins];
    for (g, &robust) in gaps.iter().zip(flags.as_slice()) {
        let k = ((g / bin_width).floor() as usize).min(n_bins - 1);
        counts[k].0 += 1;
        counts[k].1 += robust as usize;
    }

    // (first bin, last bin, n, robust)
    let mut groups: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut open: Option<(usize, usize, usize, usize)> = None;
    for (k, &(n, r)) in counts.iter().enumerate() {
        let g = match open.take() {
            Some((s, _, gn, gr)) => (s, k, gn + n, gr + r),
            None => (k, k, n, r),
        };
        if g.2 >= min_count.max(1) {
            groups.push(g);
        } else {
            open = Some(g);
        }
    }
    if let Some(rest) = open {
        match groups.last_mut() {
            Some(prev) => {
                prev.1 = rest.1;
                prev.2 += rest.2;
                prev.3 += rest.3;
            }
            None => groups.push(rest),
        }
    }
    let bins = groups
        .into_iter()
        .map(|(s, e, n, r)| GapAccuracyBin {
            gap_low: s as f64 * bin_width,
            gap_high: (e + 1) as f64 * bin_width,
            n_samples: n,
            adversarial_accuracy: (n >= min_count.max(1)).then(|| r as f64 / n as f64),
        })
        .collect();
    Ok(GapAccuracyCurve { bins })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankProfile {
    pub class_index: usize,
    /// Samples whose ground-truth label is `class_index`, ascending.
    pub sample_ids: Vec<usize>,
    /// `ranks[i]` is the confidence rank of `sample_ids[i]` (0 = most confident).
    pub ranks: Vec<usize>,
}

/// Rank the samples of one ground-truth class by the softmax probability of
/// their predicted class, most confident first.
pub fn confidence_ranks(bundle: &DatasetBundle, class_index: usize) -> Result<RankProfile> {
    let sample_ids: Vec<usize> = bundle
        .labels
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == class_index)
        .map(|(i, _)| i)
        .collect();
    if sample_ids.is_empty() {
        return Err(Error::Validation(format!("class {class_index} has no samples")));
    }
    let confidence: Vec<f64> = sample_ids
        .iter()
        .map(|&i| {
            let row = bundle.logits.row(i);
            softmax(row)[argmax(row)]
        })
        .collect();
    let mut order: Vec<usize> = (0..sample_ids.len()).collect();
    order.sort_by(|&a, &b| descending(confidence[a], confidence[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; sample_ids.len()];
    for (rank, &pos) in order.iter().enumerate() {
        ranks[pos] = rank;
    }
    Ok(RankProfile {
        class_index,
        sample_ids,
        ranks,
    })
}

/// Fraction of samples whose two ranks differ by more than
/// `threshold_fraction * (n - 1)`.
pub fn rank_divergence(a: &RankProfile, b: &RankProfile, threshold_fraction: f64) -> Result<f64> {
    if !(threshold_fraction > 0.0 && threshold_fraction <= 1.0) {
        return Err(Error::Validation(format!(
            "threshold_fraction must lie in (0, 1], got {threshold_fraction}"
        )));
    }
    let mut a_pairs: Vec<(usize, usize)> = a.sample_ids.iter().copied().zip(a.ranks.iter().copied()).collect();
    let mut b_pairs: Vec<(usize, usize)> = b.sample_ids.iter().copied().zip(b.ranks.iter().copied()).collect();
    a_pairs.sort_unstable();
    b_pairs.sort_unstable();
    if a_pairs.len() != b_pairs.len() || a_pairs.iter().zip(&b_pairs).any(|(x, y)| x.0 != y.0) {
        return Err(Error::Validation("rank profiles cover different sample sets".into()));
    }
    let n = a_pairs.len();
    let limit = threshold_fraction * (n as f64 - 1.0);
    let far = a_pairs
        .iter()
        .zip(&b_pairs)
        .filter(|(x, y)| (x.1 as f64 - y.1 as f64).abs() > limit)
        .count();
    Ok(far as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    /// `fractions[k - 1]` is the share of errors whose predicted class sits at
    /// rank k of the true class's mean correct-logit vector.
    pub fractions: Vec<f64>,
    pub n_errors: usize,
}

/// Where misclassifications land relative to the true class's average logits.
///
/// The mean logit vector of each class is taken over its correctly predicted
/// samples. Each error contributes one count at the 1-based rank of its
/// predicted class inside that vector. With no errors at all the profile is
/// all zeros and `n_errors == 0`.
pub fn error_prediction_profile(bundle: &DatasetBundle) -> Result<ErrorProfile> {
    let n_classes = bundle.n_classes();
    let mut sums = vec![vec![0.0; n_classes]; n_classes];
    let mut n_correct = vec![0usize; n_classes];
    let mut errors: Vec<(usize, usize)> = Vec::new();
    for (row, &label) in bundle.logits.iter_rows().zip(bundle.labels.as_slice()) {
        let pred = argmax(row);
        if pred == label {
            n_correct[label] += 1;
            for (s, v) in sums[label].iter_mut().zip(row) {
                *s += v;
            }
        } else {
            errors.push((label, pred));
        }
    }
    let mut counts = vec![0usize; n_classes];
    let mut rank_cache: Vec<Option<Vec<usize>>> = vec![None; n_classes];
    for &(label, pred) in &errors {
        if n_correct[label] == 0 {
            return Err(Error::Validation(format!(
                "class {label} has no correctly predicted samples"
            )));
        }
        let order = rank_cache[label].get_or_insert_with(|| {
            let mean: Vec<f64> = sums[label].iter().map(|s| s / n_correct[label] as f64).collect();
            rank_order(&mean)
        });
        let k = order.iter().position(|&c| c == pred).expect("class present in ranking");
        counts[k] += 1;
    }
    let total = errors.len();
    let fractions = counts
        .into_iter()
        .map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect();
    Ok(ErrorProfile {
        fractions,
        n_errors: total,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapCurve {
    pub k_values: Vec<usize>,
    /// AO@k = (1/k) * sum_{i<=k} O(i), averaged over samples.
    pub ao_at_k: Vec<f64>,
    /// O(k) = |top-k(a) ∩ top-k(b)| / k, averaged over samples.
    pub agreement_at_k: Vec<f64>,
}

pub fn average_overlap(m1: &LogitMatrix, m2: &LogitMatrix, k_max: usize) -> Result<OverlapCurve> {
    if !m1.same_shape(m2) {
        return Err(Error::Validation(format!(
            "shape mismatch: {}x{} vs {}x{}",
            m1.rows(),
            m1.cols(),
            m2.rows(),
            m2.cols()
        )));
    }
    let n_classes = m1.cols();
    if k_max == 0 || k_max > n_classes {
        return Err(Error::Validation(format!(
            "k_max must lie in [1, {n_classes}], got {k_max}"
        )));
    }
    let mut ao = vec![0.0; k_max];
    let mut agreement = vec![0.0; k_max];
    let mut in_a = vec![false; n_classes];
    let mut in_b = vec![false; n_classes];
    for (ra, rb) in m1.iter_rows().zip(m2.iter_rows()) {
        let la = rank_order(ra);
        let lb = rank_order(rb);
        in_a.iter_mut().for_each(|x| *x = false);
        in_b.iter_mut().for_each(|x| *x = false);
        let mut shared = 0usize;
        let mut running = 0.0;
        for i in 0..k_max {
            let (ca, cb) = (la[i], lb[i]);
            if ca == cb {
                shared += 1;
            } else {
                shared += in_b[ca] as usize + in_a[cb] as usize;
            }
            in_a[ca] = true;
            in_b[cb] = true;
            let o = shared as f64 / (i + 1) as f64;
            running += o;
            agreement[i] += o;
            ao[i] += running / (i + 1) as f64;
        }
    }
    let n = m1.rows() as f64;
    Ok(OverlapCurve {
        k_values: (1..=k_max).collect(),
        ao_at_k: ao.into_iter().map(|v| v / n).collect(),
        agreement_at_k: agreement.into_iter().map(|v| v / n).collect(),
    })
}

/// Average overlap after shuffling bundle2's samples within each
/// ground-truth class. Class `c` uses its own random substream.
pub fn within_class_permuted_overlap(
    bundle1: &DatasetBundle,
    bundle2: &DatasetBundle,
    k_max: usize,
    seed: u64,
) -> Result<OverlapCurve> {
    if bundle1.labels != bundle2.labels {
        return Err(Error::Validation("bundles carry different labels".into()));
    }
    let permuted = permute_within_classes(bundle2, seed);
    average_overlap(&bundle1.logits, &permuted, k_max)
}

pub(crate) fn permute_within_classes(bundle: &DatasetBundle, seed: u64) -> LogitMatrix {
    let n_classes = bundle.n_classes();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in bundle.labels.as_slice().iter().enumerate() {
        members[l].push(i);
    }
    let mut source = (0..bundle.n_samples()).collect::<Vec<_>>();
    for (class, ids) in members.iter().enumerate() {
        let mut shuffled = ids.clone();
        shuffled.shuffle(&mut substream(seed, tag::CLASS_PERMUTE, class as u64));
        for (&dst, &src) in ids.iter().zip(&shuffled) {
            source[dst] = src;
        }
    }
    let cols = bundle.n_classes();
    let values: Vec<f64> = source
        .iter()
        .flat_map(|&src| bundle.logits.row(src).iter().copied())
        .collect();
    LogitMatrix::new(bundle.n_samples(), cols, values).expect("permutation preserves invariants")
}

/// The `n` rows most cosine-similar to `seed_row`, excluding it.
///
/// Rows with zero norm score 0. Ties go to the lower row index.
pub fn cosine_neighbors(m: &LogitMatrix, seed_row: usize, n: usize) -> Result<Vec<(usize, f64)>> {
    if seed_row >= m.rows() {
        return Err(Error::Validation(format!(
            "seed row {seed_row} out of range for {} rows",
            m.rows()
        )));
    }
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let seed = m.row(seed_row);
    let seed_norm = norm(seed);
    if seed_norm == 0.0 {
        return Err(Error::Validation(format!("row {seed_row} has zero norm")));
    }
    let mut sims: Vec<(usize, f64)> = m
        .iter_rows()
        .enumerate()
        .filter(|&(i, _)| i != seed_row)
        .map(|(i, r)| {
            let rn = norm(r);
            let s = if rn == 0.0 {
                0.0
            } else {
                seed.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / (seed_norm * rn)
            };
            (i, s)
        })
        .collect();
    sims.sort_by(|a, b| descending(a.1, b.1).then(a.0.cmp(&b.0)));
    sims.truncate(n);
    Ok(sims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{validate_bundle, LabelVector, RobustFlags};

    fn mat(rows: &[Vec<f64>]) -> LogitMatrix {
        LogitMatrix::from_rows(rows).unwrap()
    }

    fn bundle(rows: &[Vec<f64>], labels: &[usize]) -> DatasetBundle {
        validate_bundle(mat(rows), LabelVector(labels.to_vec()), None).unwrap()
    }

    #[test]
    fn constant_maxima_have_zero_spread_and_skew() {
        let m = mat(&vec![vec![5.0, 0.0, 0.0]; 4]);
        let s = max_logit_distribution(&m, 0.5).unwrap();
        assert_eq!(s.mean, 5.0);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.skewness, 0.0);
        assert_eq!(s.histogram.iter().map(|b| b.count).sum::<usize>(), 4);
    }

    #[test]
    fn right_tail_gives_positive_skew() {
        let m = mat(&[vec![0.0, -1.0], vec![0.0, -1.0], vec![10.0, -1.0]]);
        let s = max_logit_distribution(&m, 1.0).unwrap();
        assert!((s.mean - 10.0 / 3.0).abs() < 1e-15);
        assert!(s.skewness > 0.0);
        // three points: g1 = 1/sqrt(2), adjusted by sqrt(6)/1
        assert!((s.skewness - (0.5f64).sqrt() * 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fewer_than_three_rows_is_an_error() {
        let m = mat(&[vec![1.0, 0.0], vec![2.0, 0.0]]);
        assert!(max_logit_distribution(&m, 1.0).is_err());
        assert!(max_logit_distribution(&mat(&vec![vec![1.0, 0.0]; 3]), 0.0).is_err());
    }

    #[test]
    fn histogram_bins_are_contiguous() {
        let s = summarize(&[0.1, 0.26, 0.74, 0.75, 1.9], 0.25).unwrap();
        for w in s.histogram.windows(2) {
            assert_eq!(w[0].right, w[1].left);
        }
        assert_eq!(s.histogram.first().unwrap().left, 0.0);
        assert_eq!(s.histogram.iter().map(|b| b.count).sum::<usize>(), 5);
        assert_eq!(s.histogram[3].count, 1);
    }

    #[test]
    fn gap_examples() {
        let m = mat(&[vec![3.0, 1.0, 0.5], vec![2.0, 2.0, 2.0], vec![-1.0, 4.0, 4.0]]);
        assert_eq!(logit_gaps(&m), vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn all_robust_means_full_accuracy() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 * 0.1, 0.0]).collect();
        let mut b = bundle(&rows, &vec![0; 40]);
        b.flags = Some(RobustFlags(vec![true; 40]));
        let curve = gap_accuracy_curve(&b, 0.25, 3).unwrap();
        assert!(curve.bins.iter().all(|x| x.adversarial_accuracy == Some(1.0)));
        assert_eq!(curve.bins.iter().map(|x| x.n_samples).sum::<usize>(), 40);
    }

    #[test]
    fn step_rule_gives_step_curve() {
        let gaps: Vec<f64> = (0..80).map(|i| 0.013 + i as f64 * 0.025).collect();
        let rows: Vec<Vec<f64>> = gaps.iter().map(|g| vec![*g, 0.0, -1.0]).collect();
        let flags: Vec<bool> = gaps.iter().map(|&g| g > 1.0).collect();
        let mut b = bundle(&rows, &vec![0; 80]);
        b.flags = Some(RobustFlags(flags));
        let curve = gap_accuracy_curve(&b, 0.25, 5).unwrap();
        for bin in &curve.bins {
            let acc = bin.adversarial_accuracy.unwrap();
            if bin.gap_high <= 1.0 {
                assert_eq!(acc, 0.0);
            } else if bin.gap_low >= 1.0 {
                assert_eq!(acc, 1.0);
            }
        }
    }

    #[test]
    fn sparse_bins_merge_rightward() {
        // gaps: 3 in [0, .25), 1 in [.25, .5), 4 in [.5, .75), 1 in [1.0, 1.25)
        let gaps = [0.1, 0.1, 0.1, 0.3, 0.6, 0.6, 0.6, 0.6, 1.1];
        let rows: Vec<Vec<f64>> = gaps.iter().map(|g| vec![*g, 0.0]).collect();
        let mut b = bundle(&rows, &vec![0; gaps.len()]);
        b.flags = Some(RobustFlags(vec![true, false, true, true, false, false, true, true, true]));
        let curve = gap_accuracy_curve(&b, 0.25, 4).unwrap();
        let spans: Vec<(f64, f64, usize)> = curve.bins.iter().map(|x| (x.gap_low, x.gap_high, x.n_samples)).collect();
        // [0,.5) collects 4; [.5,1.25) collects 4 + the 1 left at the top
        assert_eq!(spans, vec![(0.0, 0.5, 4), (0.5, 1.25, 5)]);
        assert_eq!(curve.bins[0].adversarial_accuracy, Some(0.75));
        assert_eq!(curve.bins[1].adversarial_accuracy, Some(0.6));
    }

    #[test]
    fn missing_flags_is_an_error() {
        let b = bundle(&[vec![1.0, 0.0]], &[0]);
        assert!(gap_accuracy_curve(&b, 0.25, 1).is_err());
    }

    #[test]
    fn confidence_rank_examples() {
        let b = bundle(&[vec![2.0, 0.0], vec![5.0, 0.0]], &[1, 0]);
        assert_eq!(confidence_ranks(&b, 0).unwrap().ranks, vec![0]);

        // softmax confidences 0.9 and 0.2-ish: first sample more confident
        let b = bundle(&[vec![(9.0f64).ln(), 0.0], vec![0.0, 0.0, ]], &[0, 0]);
        let p = confidence_ranks(&b, 0).unwrap();
        assert_eq!(p.sample_ids, vec![0, 1]);
        assert_eq!(p.ranks, vec![0, 1]);

        assert!(confidence_ranks(&b, 1).is_err());
    }

    #[test]
    fn reversed_ranking_divergence() {
        let ids: Vec<usize> = (0..11).collect();
        let a = RankProfile { class_index: 0, sample_ids: ids.clone(), ranks: ids.clone() };
        let b = RankProfile { class_index: 0, sample_ids: ids.clone(), ranks: ids.iter().map(|i| 10 - i).collect() };
        assert_eq!(rank_divergence(&a, &a, 0.5).unwrap(), 0.0);
        assert!((rank_divergence(&a, &b, 0.5).unwrap() - 6.0 / 11.0).abs() < 1e-15);
        let c = RankProfile { class_index: 0, sample_ids: (1..12).collect(), ranks: ids };
        assert!(rank_divergence(&a, &c, 0.5).is_err());
        assert!(rank_divergence(&a, &a, 0.0).is_err());
    }

    #[test]
    fn errors_on_second_best_class_land_at_k2() {
        // class means: class 0 -> [5, 2, 0], class 1 -> [0, 5, 2], class 2 -> [2, 0, 5]
        let rows = vec![
            vec![5.0, 2.0, 0.0],
            vec![0.0, 5.0, 2.0],
            vec![2.0, 0.0, 5.0],
            vec![1.0, 3.0, 0.0], // true 0 predicted 1 (2nd of class-0 mean)
            vec![0.0, 1.0, 3.0], // true 1 predicted 2
            vec![3.0, 0.0, 1.0], // true 2 predicted 0
        ];
        let b = bundle(&rows, &[0, 1, 2, 0, 1, 2]);
        let p = error_prediction_profile(&b).unwrap();
        assert_eq!(p.fractions, vec![0.0, 1.0, 0.0]);
        assert_eq!(p.n_errors, 3);
    }

    #[test]
    fn no_errors_gives_zero_profile() {
        let b = bundle(&[vec![2.0, 0.0], vec![0.0, 1.0]], &[0, 1]);
        let p = error_prediction_profile(&b).unwrap();
        assert_eq!(p.fractions, vec![0.0, 0.0]);
        assert_eq!(p.n_errors, 0);
    }

    #[test]
    fn class_without_correct_samples_is_named() {
        let b = bundle(&[vec![0.0, 2.0], vec![0.0, 1.0]], &[0, 1]);
        let err = error_prediction_profile(&b).unwrap_err();
        assert!(err.to_string().contains("class 0"), "{err}");
    }

    #[test]
    fn overlap_examples() {
        // rankings [0,1,2] vs [1,0,2]
        let a = mat(&[vec![3.0, 2.0, 1.0]]);
        let b = mat(&[vec![2.0, 3.0, 1.0]]);
        let c = average_overlap(&a, &b, 3).unwrap();
        assert_eq!(c.agreement_at_k, vec![0.0, 1.0, 1.0]);
        assert!((c.ao_at_k[2] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.ao_at_k[0], 0.0);

        let same = average_overlap(&a, &a, 3).unwrap();
        assert_eq!(same.ao_at_k, vec![1.0; 3]);

        assert!(average_overlap(&a, &mat(&[vec![1.0, 2.0]]), 2).is_err());
        assert!(average_overlap(&a, &b, 4).is_err());
    }

    #[test]
    fn permuted_overlap_with_singleton_classes_is_plain_overlap() {
        let rows = vec![vec![3.0, 1.0, 2.0], vec![0.0, 5.0, 1.0], vec![1.0, 2.0, 9.0]];
        let other = vec![vec![1.0, 3.0, 2.0], vec![5.0, 0.0, 1.0], vec![9.0, 2.0, 1.0]];
        let b1 = bundle(&rows, &[0, 1, 2]);
        let b2 = bundle(&other, &[0, 1, 2]);
        assert_eq!(
            within_class_permuted_overlap(&b1, &b2, 3, 11).unwrap(),
            average_overlap(&b1.logits, &b2.logits, 3).unwrap()
        );
        let b3 = bundle(&other, &[0, 1, 1]);
        assert!(within_class_permuted_overlap(&b1, &b3, 3, 11).is_err());
    }

    #[test]
    fn cosine_examples() {
        let m = mat(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]]);
        let nn = cosine_neighbors(&m, 0, 3).unwrap();
        assert_eq!(nn[0], (2, 1.0));
        assert_eq!(nn[1], (1, 0.0));
        assert_eq!(nn[2], (3, 0.0));
        assert!(cosine_neighbors(&m, 3, 1).is_err());
        assert!(cosine_neighbors(&m, 9, 1).is_err());
    }
}
