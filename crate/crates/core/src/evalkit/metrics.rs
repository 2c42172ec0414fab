
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which score group counts as the positive (detected) class for FPR@TPR.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositiveClass {
    /// Unknown samples are positives; higher score = detected.
    #[default]
    Unknown,
    /// Known samples are positives; lower score = accepted.
    Known,
}

fn non_empty(scores: &[f64], what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Empty(format!("{what} score list")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("{what} scores")));
    }
    Ok(())
}

/// P(unknown score > known score) + ½·P(tie), via average ranks.
pub fn auroc(scores_known: &[f64], scores_unknown: &[f64]) -> Result<f64> {
    non_empty(scores_known, "known")?;
    non_empty(scores_unknown, "unknown")?;
    let mut all: Vec<(f64, bool)> = scores_known
        .iter()
        .map(|&s| (s, false))
        .chain(scores_unknown.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * all[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let nu = scores_unknown.len() as f64;
    let nk = scores_known.len() as f64;
    Ok((rank_sum - nu * (nu + 1.0) / 2.0) / (nu * nk))
}

/// ROC points `(fpr, tpr)` sweeping the threshold from +∞ down, one point
/// per distinct score, from `(0, 0)` to `(1, 1)`.
pub fn roc_curve(scores_known: &[f64], scores_unknown: &[f64]) -> Result<Vec<(f64, f64)>> {
    non_empty(scores_known, "known")?;
    non_empty(scores_unknown, "unknown")?;
    let mut thresholds: Vec<f64> = scores_known.iter().chain(scores_unknown).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let nk = scores_known.len() as f64;
    let nu = scores_unknown.len() as f64;
    let mut curve = vec![(0.0, 0.0)];
    for t in thresholds {
        let fp = scores_known.iter().filter(|&&s| s >= t).count() as f64;
        let tp = scores_unknown.iter().filter(|&&s| s >= t).count() as f64;
        curve.push((fp / nk, tp / nu));
    }
    Ok(curve)
}

pub fn auc_trapezoid(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Number of positives that must score at or past the threshold.
fn required(n: usize, target: f64) -> usize {
    ((target * n as f64) - 1e-9).ceil().max(1.0) as usize
}

/// False-positive rate at the tightest threshold that reaches `tpr_target`.
///
/// With [`PositiveClass::Unknown`] the threshold `τ` is the largest value
/// such that at least `tpr_target` of unknown scores are `≥ τ`; the result
/// is the fraction of known scores `≥ τ`. With [`PositiveClass::Known`] the
/// roles flip and "detected" means `score ≤ τ`.
pub fn fpr_at_tpr(
    scores_known: &[f64],
    scores_unknown: &[f64],
    tpr_target: f64,
    positive: PositiveClass,
) -> Result<f64> {
    non_empty(scores_known, "known")?;
    non_empty(scores_unknown, "unknown")?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::Config(format!("TPR target must lie in (0, 1], got {tpr_target}")));
    }
    match positive {
        PositiveClass::Unknown => {
            let mut pos = scores_unknown.to_vec();
            pos.sort_by(|a, b| b.total_cmp(a));
            let tau = pos[required(pos.len(), tpr_target) - 1];
            let fp = scores_known.iter().filter(|&&s| s >= tau).count();
            Ok(fp as f64 / scores_known.len() as f64)
        }
        PositiveClass::Known => {
            let mut pos = scores_known.to_vec();
            pos.sort_by(f64::total_cmp);
            let tau = pos[required(pos.len(), tpr_target) - 1];
            let fp = scores_unknown.iter().filter(|&&s| s <= tau).count();
            Ok(fp as f64 / scores_unknown.len() as f64)
        }
    }
}

/// FPR at 95% TPR with unknown samples as positives.
pub fn fpr95(scores_known: &[f64], scores_unknown: &[f64]) -> Result<f64> {
    fpr_at_tpr(scores_known, scores_unknown, 0.95, PositiveClass::Unknown)
}

/// Mean over classes of per-class top-1 accuracy. Classes of `class_ids`
/// with no test sample are skipped with a warning.
pub fn closed_acc(predictions: &[usize], labels: &[usize], class_ids: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("accuracy test pool".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::shape("accuracy predictions", labels.len(), predictions.len()));
    }
    if let Some(l) = labels.iter().find(|l| !class_ids.contains(l)) {
        return Err(Error::Config(format!("test label {l} is not one of the evaluated classes")));
    }
    let mut total = 0f64;
    let mut counted = 0usize;
    for &c in class_ids {
        let (hit, n) = labels
            .iter()
            .zip(predictions)
            .filter(|(l, _)| **l == c)
            .fold((0usize, 0usize), |(h, n), (l, p)| (h + usize::from(l == p), n + 1));
        if n == 0 {
            log::warn!("class {c} has no test samples; excluded from accuracy");
            continue;
        }
        total += hit as f64 / n as f64;
        counted += 1;
    }
    Ok(total / counted as f64)
}

/// `1 − √(unseen / (unseen + unknown))`.
pub fn openness(n_unseen_classes: usize, n_unknown_classes: usize) -> Result<f64> {
    if n_unseen_classes == 0 {
        return Err(Error::Config("openness is undefined without unseen classes".into()));
    }
    let u = n_unseen_classes as f64;
    Ok(1.0 - (u / (u + n_unknown_classes as f64)).sqrt())
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.1, 0.2], &[0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3, 0.5, 0.7], &[0.3, 0.5, 0.7]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.6], &[0.4, 0.9]).unwrap(), 0.75);
        assert!(auroc(&[], &[1.0]).is_err());
    }

    #[test]
    fn fpr_examples() {
        assert_eq!(fpr95(&[0.1, 0.2], &[0.8, 0.9]).unwrap(), 0.0);
        let known = [0.1, 0.5, 0.9, 0.3];
        let unknown = [0.4, 0.6, 0.95];
        // tpr = 1: threshold is min(unknown) = 0.4; known ≥ 0.4 → 2 of 4.
        assert_eq!(fpr_at_tpr(&known, &unknown, 1.0, PositiveClass::Unknown).unwrap(), 0.5);
        assert!(fpr_at_tpr(&known, &[], 0.95, PositiveClass::Unknown).is_err());
        assert!(fpr_at_tpr(&known, &unknown, 0.0, PositiveClass::Unknown).is_err());
    }

    #[test]
    fn known_positive_convention() {
        let known = [0.1, 0.2, 0.3, 0.4];
        let unknown = [0.35, 0.9];
        // All known accepted at τ = 0.4; unknown ≤ 0.4 → 1 of 2.
        assert_eq!(fpr_at_tpr(&known, &unknown, 1.0, PositiveClass::Known).unwrap(), 0.5);
    }

    #[test]
    fn closed_acc_examples() {
        assert_eq!(closed_acc(&[0, 1, 1], &[0, 1, 1], &[0, 1]).unwrap(), 1.0);
        // Constant predictor on balanced classes.
        assert!((closed_acc(&[0; 6], &[0, 0, 1, 1, 2, 2], &[0, 1, 2]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        // Per-class mean, not sample mean.
        let acc = closed_acc(&[0, 1, 0, 1, 1, 1], &[0, 1, 1, 1, 1, 1], &[0, 1]).unwrap();
        assert!((acc - (1.0 + 0.8) / 2.0).abs() < 1e-12);
        let acc = closed_acc(&[0, 1, 0], &[0, 1, 1], &[0, 1]).unwrap();
        assert_eq!(acc, 0.75);
        assert!(closed_acc(&[], &[], &[0]).is_err());
        // Class 2 has no samples and is skipped.
        assert_eq!(closed_acc(&[0, 1], &[0, 1], &[0, 1, 2]).unwrap(), 1.0);
    }

    #[test]
    fn openness_examples() {
        assert!((openness(10, 10).unwrap() - 0.293).abs() < 5e-4);
        assert!((openness(10, 40).unwrap() - 0.553).abs() < 5e-4);
        assert_eq!(openness(7, 0).unwrap(), 0.0);
        assert!(openness(0, 5).is_err());
    }

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec((0u8..20).prop_map(|v| f64::from(v) / 4.0), 1..30)
    }

    proptest! {
        #[test]
        fn rank_auroc_matches_trapezoid(k in scores(), u in scores()) {
            let a = auroc(&k, &u).unwrap();
            let b = auc_trapezoid(&roc_curve(&k, &u).unwrap());
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn auroc_swaps_to_complement(k in scores(), u in scores()) {
            let s = auroc(&k, &u).unwrap() + auroc(&u, &k).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn monotone_transforms_preserve_metrics(k in scores(), u in scores(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
            let f = |v: &[f64]| v.iter().map(|x| a * x.exp() + b).collect::<Vec<_>>();
            prop_assert!((auroc(&k, &u).unwrap() - auroc(&f(&k), &f(&u)).unwrap()).abs() < 1e-12);
            prop_assert_eq!(fpr95(&k, &u).unwrap(), fpr95(&f(&k), &f(&u)).unwrap());
        }

        #[test]
        fn permutation_invariance(mut k in scores(), mut u in scores()) {
            let a = (auroc(&k, &u).unwrap(), fpr95(&k, &u).unwrap());
            k.reverse();
            let half = u.len() / 2;
            u.rotate_left(half);
            prop_assert_eq!(a, (auroc(&k, &u).unwrap(), fpr95(&k, &u).unwrap()));
        }
    }
}
