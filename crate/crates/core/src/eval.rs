//! ROC curves, AUC and power at a fixed specificity.

use crate::error::{MessError, Result};

/// Sweep of (false-positive rate, true-positive rate) points from the highest
/// score threshold downwards. Tied scores collapse into one step.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub positives: usize,
    pub negatives: usize,
}

/// Higher scores are more significant.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(MessError::Dimension(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(MessError::InvalidParameter(format!("score {bad}")));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MessError::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    Ok(RocCurve {
        points,
        positives,
        negatives,
    })
}

/// Trapezoidal area under the curve.
pub fn auc(roc: &RocCurve) -> f64 {
    roc.points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum()
}

/// True-positive rate at false-positive rate `1 − specificity`, linearly
/// interpolated between adjacent sweep points.
pub fn power_at_specificity(roc: &RocCurve, specificity: f64) -> f64 {
    let target = 1.0 - specificity;
    let pts = &roc.points;
    let j = pts.partition_point(|p| p.0 <= target);
    if j == 0 {
        return pts[0].1;
    }
    let (x0, y0) = pts[j - 1];
    match pts.get(j) {
        None => y0,
        Some(&(x1, y1)) => y0 + (y1 - y0) * (target - x0) / (x1 - x0),
    }
}

/// One-sample Kolmogorov–Smirnov test against Uniform(0, 1). Returns the
/// statistic and its asymptotic p-value.
pub fn ks_uniform(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / nf - x).max(x - i as f64 / nf)
        })
        .fold(0.0, f64::max);
    let root = nf.sqrt();
    let lambda = (root + 0.12 + 0.11 / root) * d;
    (d, kolmogorov_survival(lambda))
}

fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_reversed() {
        let scores = [0.9, 0.8, 0.3, 0.2, 0.1];
        let labels = [true, true, false, false, false];
        let roc = roc_curve(&scores, &labels).unwrap();
        assert_eq!(auc(&roc), 1.0);
        assert_eq!(power_at_specificity(&roc, 0.9), 1.0);
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        assert_eq!(auc(&roc_curve(&neg, &labels).unwrap()), 0.0);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn auc_of_fixed_curves() {
        let diag = RocCurve {
            points: vec![(0.0, 0.0), (1.0, 1.0)],
            positives: 1,
            negatives: 1,
        };
        assert_eq!(auc(&diag), 0.5);
        assert!((power_at_specificity(&diag, 0.9) - 0.1).abs() < 1e-15);
        let step = RocCurve {
            points: vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)],
            positives: 1,
            negatives: 1,
        };
        assert_eq!(auc(&step), 1.0);
    }

    #[test]
    fn ties_collapse() {
        let roc = roc_curve(&[1.0, 1.0, 1.0, 1.0], &[true, false, true, false]).unwrap();
        assert_eq!(roc.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc(&roc), 0.5);
    }

    #[test]
    fn degenerate_labels() {
        assert_eq!(roc_curve(&[1.0, 2.0], &[true, true]), Err(MessError::DegenerateLabels));
        assert!(roc_curve(&[1.0], &[true, false]).is_err());
    }

    #[test]
    fn ks_detects_nonuniform() {
        let uniform: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&uniform).1 > 0.99);
        let skewed: Vec<f64> = uniform.iter().map(|u| u * u).collect();
        assert!(ks_uniform(&skewed).1 < 1e-6);
    }
}
