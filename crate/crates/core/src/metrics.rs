//! ROC statistics with OOD as the positive class.

use crate::error::{Error, Result};

fn check(scores: &[f64], positive: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: positive.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((n_pos, n_neg))
}

/// Mann–Whitney AUROC with midranks for ties.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let (n_pos, n_neg) = check(scores, positive)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let midrank = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| positive[k]).count();
        rank_sum_pos += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Cumulative `(fp, tp)` counts after admitting each distinct score,
/// scanning thresholds from high to low (rule: `score >= t` is positive).
fn threshold_counts(scores: &[f64], positive: &[bool]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((fp, tp));
    }
    out
}

/// Lowest FPR among observed-score thresholds whose TPR reaches
/// `target_tpr`. No interpolation.
pub fn fpr_at_tpr(scores: &[f64], positive: &[bool], target_tpr: f64) -> Result<f64> {
    let (n_pos, n_neg) = check(scores, positive)?;
    threshold_counts(scores, positive)
        .into_iter()
        .filter(|&(_, tp)| tp as f64 / n_pos as f64 >= target_tpr)
        .map(|(fp, _)| fp as f64 / n_neg as f64)
        .reduce(f64::min)
        .ok_or_else(|| Error::invalid("no threshold reaches the target TPR"))
}

pub fn fpr95(scores: &[f64], positive: &[bool]) -> Result<f64> {
    fpr_at_tpr(scores, positive, 0.95)
}

/// ROC points `(fpr, tpr)` from `(0,0)` to `(1,1)`, one per distinct score.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (n_pos, n_neg) = check(scores, positive)?;
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(
        threshold_counts(scores, positive)
            .into_iter()
            .map(|(fp, tp)| (fp as f64 / n_neg as f64, tp as f64 / n_pos as f64)),
    );
    if pts.last() != Some(&(1.0, 1.0)) {
        pts.push((1.0, 1.0));
    }
    Ok(pts)
}

pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(pos: &[f64], neg: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let mut s = pos.to_vec();
        s.extend_from_slice(neg);
        let mut l = vec![true; pos.len()];
        l.extend(vec![false; neg.len()]);
        (s, l)
    }

    #[test]
    fn auroc_cases() {
        let (s, l) = split(&[0.9, 0.8], &[0.2, 0.1]);
        assert_eq!(auroc(&s, &l).unwrap(), 1.0);
        let (s, l) = split(&[1.0, 1.0], &[1.0, 1.0, 1.0]);
        assert_eq!(auroc(&s, &l).unwrap(), 0.5);
        let (s, l) = split(&[3.0, 1.0], &[2.0, 1.0]);
        assert_eq!(auroc(&s, &l).unwrap(), 0.625);
    }

    #[test]
    fn single_label_is_an_error() {
        assert!(matches!(auroc(&[1.0, 2.0], &[true, true]), Err(Error::SingleClass)));
        assert!(fpr95(&[1.0], &[false]).is_err());
        assert!(roc_curve(&[1.0], &[true]).is_err());
    }

    #[test]
    fn fpr_cases() {
        let (s, l) = split(&[0.9, 0.8], &[0.2, 0.1]);
        assert_eq!(fpr95(&s, &l).unwrap(), 0.0);
        let (s, l) = split(&[0.5; 3], &[0.5; 4]);
        assert_eq!(fpr95(&s, &l).unwrap(), 1.0);
    }

    #[test]
    fn fpr_replicated_set_matches_manual_scan() {
        let mut pos = Vec::new();
        for _ in 0..4 {
            pos.extend([0.9, 0.8, 0.7, 0.6, 0.5]);
        }
        let neg = [0.55, 0.4, 0.65, 0.3, 0.2, 0.85, 0.1, 0.05, 0.52, 0.45];
        let (s, l) = split(&pos, &neg);
        // TPR reaches 19/20 only once all positives >= 0.5 are admitted
        // (16/20 at t=0.6), so t=0.5 and the negatives at or above it count:
        // 0.55, 0.65, 0.85, 0.52 -> 4/10.
        assert_eq!(fpr95(&s, &l).unwrap(), 0.4);
    }

    #[test]
    fn roc_points() {
        let (s, l) = split(&[1.0], &[0.0]);
        assert_eq!(roc_curve(&s, &l).unwrap(), vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let (s, l) = split(&[0.3; 2], &[0.3; 2]);
        assert_eq!(roc_curve(&s, &l).unwrap(), vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn mean_std_population() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
