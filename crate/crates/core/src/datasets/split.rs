use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::bundle::DatasetBundle;
use crate::ndcore::Matrix;
use crate::rng::stage_rng;
use crate::{Error, Result};

/// Fraction of each seen class used for training in generalized mode.
pub const GENERALIZED_TRAIN_FRACTION: f64 = 0.8;

/// Ground truth of one test sample: a known class id, or "unknown".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Class(usize),
    Unknown,
}

impl Label {
    pub fn class(self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(c),
            Label::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Seen,
    Unseen,
    Unknown,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Seen => "seen",
            Group::Unseen => "unseen",
            Group::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum SplitMode<'a> {
    /// The bundle's own split.
    ZsOsr,
    /// As `ZsOsr`, plus held-out seen-class samples in the test pool.
    Generalized,
    /// Re-partition the bundle's unseen ∪ unknown pool at random.
    Openness { k_unseen: usize, k_unknown: usize },
    /// Unknown test classes drawn at random from another dataset.
    Ood { other: &'a DatasetBundle, n_unknown: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    ZsOsr,
    Generalized,
    Openness,
    Ood,
}

/// Everything training code is allowed to see: seen-class features and
/// labels, and the attribute vectors of seen and unseen classes. There is no
/// path from this type to unknown-class attributes or to any test sample.
///
/// ```compile_fail
/// fn peek(view: &zsosr::datasets::TrainingView) {
///     let _ = view.unknown_attributes();
/// }
/// ```
///
/// ```compile_fail
/// fn peek(view: &zsosr::datasets::TrainingView) {
///     let _ = &view.test;
/// }
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingView {
    seen_ids: Vec<usize>,
    unseen_ids: Vec<usize>,
    features: Matrix,
    labels: Vec<usize>,
    seen_attributes: Matrix,
    unseen_attributes: Matrix,
}

impl TrainingView {
    pub fn seen_ids(&self) -> &[usize] {
        &self.seen_ids
    }

    pub fn unseen_ids(&self) -> &[usize] {
        &self.unseen_ids
    }

    /// Seen-class training features.
    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows aligned with [`seen_ids`](Self::seen_ids).
    pub fn seen_attributes(&self) -> &Matrix {
        &self.seen_attributes
    }

    /// Rows aligned with [`unseen_ids`](Self::unseen_ids).
    pub fn unseen_attributes(&self) -> &Matrix {
        &self.unseen_attributes
    }

    pub fn attribute_row_count(&self) -> usize {
        self.seen_attributes.rows() + self.unseen_attributes.rows()
    }

    pub fn attr_dim(&self) -> usize {
        self.seen_attributes.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Attribute vector of a seen or unseen class.
    pub fn attribute_of(&self, class: usize) -> Option<&[f32]> {
        if let Some(i) = self.seen_ids.iter().position(|&c| c == class) {
            return Some(self.seen_attributes.row(i));
        }
        self.unseen_ids
            .iter()
            .position(|&c| c == class)
            .map(|i| self.unseen_attributes.row(i))
    }

    /// Attribute matrix for `classes` (rows in the given order).
    pub fn attributes_for(&self, classes: &[usize]) -> Result<Matrix> {
        let mut m = Matrix::zeros(0, self.attr_dim());
        for &c in classes {
            let row = self.attribute_of(c).ok_or_else(|| {
                Error::Config(format!("class {c} has no attributes in the training view"))
            })?;
            m.push_row(row)?;
        }
        Ok(m)
    }
}

/// Evaluation samples with their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPool {
    pub features: Matrix,
    pub labels: Vec<Label>,
    pub groups: Vec<Group>,
}

impl TestPool {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, group: Group) -> usize {
        self.groups.iter().filter(|&&g| g == group).count()
    }

    /// Rows whose group is `group`.
    pub fn subset(&self, group: Group) -> TestPool {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.groups[i] == group).collect();
        TestPool {
            features: self.features.select_rows(&idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
        }
    }
}

/// A concrete train/test partition derived from a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitView {
    pub kind: SplitKind,
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
    /// Unknown class ids; for OOD splits these index the other dataset.
    pub unknown: Vec<usize>,
    training: TrainingView,
    test: TestPool,
}

impl SplitView {
    pub fn training(&self) -> &TrainingView {
        &self.training
    }

    pub fn test_pool(&self) -> &TestPool {
        &self.test
    }

    /// Classes the test pool may contain besides "unknown".
    pub fn known_test_classes(&self) -> Vec<usize> {
        match self.kind {
            SplitKind::Generalized => self.seen.iter().chain(&self.unseen).copied().collect(),
            _ => self.unseen.clone(),
        }
    }
}

/// The training side of a split.
pub fn training_view(split: &SplitView) -> &TrainingView {
    split.training()
}

fn push_rows(pool: &mut TestPool, src: &Matrix, rows: &[usize], label: impl Fn(usize) -> Label, group: Group) -> Result<()> {
    for &r in rows {
        pool.features.push_row(src.row(r))?;
        pool.labels.push(label(r));
        pool.groups.push(group);
    }
    Ok(())
}

impl DatasetBundle {
    pub fn make_split(&self, mode: &SplitMode<'_>, seed: u64) -> Result<SplitView> {
        let split = self.split();
        let (kind, unseen, unknown) = match *mode {
            SplitMode::ZsOsr => (SplitKind::ZsOsr, split.unseen.clone(), split.unknown.clone()),
            SplitMode::Generalized => (SplitKind::Generalized, split.unseen.clone(), split.unknown.clone()),
            SplitMode::Openness { k_unseen, k_unknown } => {
                let mut pool: Vec<usize> = split.unseen.iter().chain(&split.unknown).copied().collect();
                pool.sort_unstable();
                if k_unseen == 0 || k_unseen + k_unknown > pool.len() {
                    return Err(Error::Config(format!(
                        "openness split asks for {k_unseen} unseen + {k_unknown} unknown classes, pool has {}",
                        pool.len()
                    )));
                }
                pool.shuffle(&mut stage_rng(seed, "split/openness", 0));
                let mut unseen = pool[..k_unseen].to_vec();
                let mut unknown = pool[k_unseen..k_unseen + k_unknown].to_vec();
                unseen.sort_unstable();
                unknown.sort_unstable();
                (SplitKind::Openness, unseen, unknown)
            }
            SplitMode::Ood { other, n_unknown } => {
                if other.feature_dim() != self.feature_dim() {
                    return Err(Error::shape("OOD feature dimension", self.feature_dim(), other.feature_dim()));
                }
                if n_unknown == 0 || n_unknown > other.n_classes() {
                    return Err(Error::Config(format!(
                        "OOD split asks for {n_unknown} unknown classes, other dataset has {}",
                        other.n_classes()
                    )));
                }
                let mut ids: Vec<usize> = (0..other.n_classes()).collect();
                ids.shuffle(&mut stage_rng(seed, "split/ood", 0));
                let mut unknown = ids[..n_unknown].to_vec();
                unknown.sort_unstable();
                (SplitKind::Ood, split.unseen.clone(), unknown)
            }
        };

        let seen = split.seen.clone();
        let seen_rows = self.rows_of(&seen);
        let seen_test: Vec<usize> = match (kind, &split.seen_test) {
            (_, Some(t)) => t.clone(),
            (SplitKind::Generalized, None) => {
                let mut held = Vec::new();
                let mut rng = stage_rng(seed, "split/generalized", 0);
                for &c in &seen {
                    let mut rows: Vec<usize> = seen_rows.iter().copied().filter(|&r| self.labels()[r] == c).collect();
                    rows.shuffle(&mut rng);
                    let n_train = (rows.len() as f64 * GENERALIZED_TRAIN_FRACTION).round() as usize;
                    held.extend_from_slice(&rows[n_train.min(rows.len())..]);
                }
                held.sort_unstable();
                held
            }
            _ => Vec::new(),
        };
        let held: HashSet<usize> = seen_test.iter().copied().collect();
        let train_rows: Vec<usize> = seen_rows.iter().copied().filter(|r| !held.contains(r)).collect();

        let training = TrainingView {
            seen_ids: seen.clone(),
            unseen_ids: unseen.clone(),
            features: self.features().select_rows(&train_rows),
            labels: train_rows.iter().map(|&r| self.labels()[r]).collect(),
            seen_attributes: self.attributes().select_rows(&seen),
            unseen_attributes: self.attributes().select_rows(&unseen),
        };

        let mut test = TestPool {
            features: Matrix::zeros(0, self.feature_dim()),
            labels: Vec::new(),
            groups: Vec::new(),
        };
        let labels = self.labels();
        if kind == SplitKind::Generalized {
            push_rows(&mut test, self.features(), &seen_test, |r| Label::Class(labels[r]), Group::Seen)?;
        }
        push_rows(&mut test, self.features(), &self.rows_of(&unseen), |r| Label::Class(labels[r]), Group::Unseen)?;
        match *mode {
            SplitMode::Ood { other, .. } => {
                push_rows(&mut test, other.features(), &other.rows_of(&unknown), |_| Label::Unknown, Group::Unknown)?;
            }
            _ => {
                push_rows(&mut test, self.features(), &self.rows_of(&unknown), |_| Label::Unknown, Group::Unknown)?;
            }
        }

        if training.features.rows() == 0 {
            return Err(Error::Empty("seen-class training set".into()));
        }
        Ok(SplitView {
            kind,
            seen,
            unseen,
            unknown,
            training,
            test,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::SplitSpec;

    fn bundle(n_classes: usize, per_class: usize, split: SplitSpec) -> DatasetBundle {
        let n = n_classes * per_class;
        let features = Matrix::from_vec(n, 2, (0..2 * n).map(|i| i as f32).collect()).unwrap();
        let labels = (0..n).map(|i| i / per_class).collect();
        let attributes = Matrix::from_vec(n_classes, 3, (0..3 * n_classes).map(|i| i as f32).collect()).unwrap();
        let names = (0..n_classes).map(|c| format!("c{c}")).collect();
        DatasetBundle::new(features, labels, attributes, names, split).unwrap()
    }

    fn cub_like() -> DatasetBundle {
        let (_, spec) = crate::datasets::canonical_split("cub").unwrap();
        bundle(200, 3, spec)
    }

    #[test]
    fn training_view_excludes_unknown_attributes_and_test_rows() {
        let b = cub_like();
        let v = b.make_split(&SplitMode::ZsOsr, 0).unwrap();
        let t = v.training();
        assert_eq!(t.seen_ids().len(), 150);
        assert_eq!(t.attribute_row_count(), 175);
        for &u in &v.unknown {
            assert!(t.attribute_of(u).is_none());
        }
        assert!(t.labels().iter().all(|l| v.seen.contains(l)));
        assert_eq!(v.test_pool().count(Group::Unseen), 25 * 3);
        assert_eq!(v.test_pool().count(Group::Unknown), 25 * 3);
        assert_eq!(v.test_pool().count(Group::Seen), 0);
    }

    #[test]
    fn openness_partition_is_disjoint_and_reproducible() {
        let b = cub_like();
        let a = b.make_split(&SplitMode::Openness { k_unseen: 10, k_unknown: 40 }, 5).unwrap();
        assert_eq!((a.unseen.len(), a.unknown.len()), (10, 40));
        assert!(a.unseen.iter().all(|c| !a.unknown.contains(c)));
        let pool: Vec<usize> = b.split().unseen.iter().chain(&b.split().unknown).copied().collect();
        assert!(a.unseen.iter().chain(&a.unknown).all(|c| pool.contains(c)));
        let again = b.make_split(&SplitMode::Openness { k_unseen: 10, k_unknown: 40 }, 5).unwrap();
        assert_eq!(a, again);
        assert!(b.make_split(&SplitMode::Openness { k_unseen: 30, k_unknown: 30 }, 5).is_err());
    }

    #[test]
    fn generalized_holds_out_a_fifth_of_each_seen_class() {
        let b = bundle(
            4,
            10,
            SplitSpec {
                seen: vec![0, 1],
                unseen: vec![2],
                unknown: vec![3],
                seen_test: None,
            },
        );
        let v = b.make_split(&SplitMode::Generalized, 1).unwrap();
        assert_eq!(v.test_pool().count(Group::Seen), 4);
        assert_eq!(v.training().features().rows(), 16);
        assert_eq!(v.known_test_classes(), vec![0, 1, 2]);
        // No training sample reappears in the test pool.
        for r in v.training().features().iter_rows() {
            assert!(!v.test_pool().features.iter_rows().any(|t| t == r));
        }
    }

    #[test]
    fn ood_takes_unknowns_from_other_dataset() {
        let b = cub_like();
        let other = bundle(
            50,
            2,
            SplitSpec {
                seen: (0..40).collect(),
                unseen: (40..45).collect(),
                unknown: (45..50).collect(),
                seen_test: None,
            },
        );
        let v = b.make_split(&SplitMode::Ood { other: &other, n_unknown: 25 }, 3).unwrap();
        assert_eq!(v.unknown.len(), 25);
        assert_eq!(v.test_pool().count(Group::Unknown), 50);
        assert_eq!(v.test_pool().count(Group::Unseen), 75);
        assert!(b.make_split(&SplitMode::Ood { other: &other, n_unknown: 51 }, 3).is_err());
    }
}
