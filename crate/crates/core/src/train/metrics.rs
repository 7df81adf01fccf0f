//! Accuracy and mean average precision.

use crate::error::{Error, Result};
use crate::model::tensor::Mat;

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &Mat, labels: &[usize]) -> Result<f64> {
    if logits.rows == 0 {
        return Err(Error::EmptyInput);
    }
    if labels.len() != logits.rows {
        return Err(Error::LengthMismatch(logits.rows, labels.len()));
    }
    let correct = labels.iter().enumerate().filter(|&(r, &y)| argmax(logits.row(r)) == y).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Average precision of one ranking: precision averaged at the rank of
/// each positive. Items are ranked by descending score, ties by index.
/// `None` when there are no positives.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Mean over classes of [`average_precision`]. Labels are thresholded at
/// 0.5. Classes without positives are skipped and logged.
pub fn mean_average_precision(scores: &Mat, labels: &[Vec<f64>]) -> Result<f64> {
    if scores.rows == 0 {
        return Err(Error::EmptyInput);
    }
    if labels.len() != scores.rows {
        return Err(Error::LengthMismatch(scores.rows, labels.len()));
    }
    let mut aps = Vec::new();
    for c in 0..scores.cols {
        let col: Vec<f64> = (0..scores.rows).map(|r| scores.at(r, c)).collect();
        let pos: Vec<bool> = labels.iter().map(|l| l[c] >= 0.5).collect();
        match average_precision(&col, &pos) {
            Some(ap) => aps.push(ap),
            None => log::info!("mAP: class {c} has no positives, skipped"),
        }
    }
    if aps.is_empty() {
        return Err(Error::InvalidParameter("mAP: no class has a positive example".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_enumerated_ap() {
        let ap = average_precision(&[0.9, 0.8, 0.1], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.1, 0.2], &[false, false]), None);
    }

    #[test]
    fn perfect_ranking() {
        let s = Mat::from_vec(4, 2, vec![0.9, 0.1, 0.8, 0.2, 0.3, 0.7, 0.1, 0.95]);
        let y = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
        assert_eq!(mean_average_precision(&s, &y).unwrap(), 1.0);
        assert_eq!(accuracy(&s, &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&s, &[1, 0, 1, 1]).unwrap(), 0.75);
    }

    #[test]
    fn classes_without_positives_are_skipped() {
        let s = Mat::from_vec(2, 2, vec![0.9, 0.1, 0.2, 0.8]);
        let y = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        assert_eq!(mean_average_precision(&s, &y).unwrap(), 1.0);
        assert!(mean_average_precision(&s, &[vec![0.0; 2], vec![0.0; 2]]).is_err());
    }
}
