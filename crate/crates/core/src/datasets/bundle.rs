use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::canonical::canonical_split;
use super::matrix_file::{read_any_labels, read_any_matrix, write_labels, write_matrix};
use crate::ndcore::Matrix;
use crate::{Error, Result};

/// Class partition. Ids are 0-based row indices into the attribute matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
    pub unknown: Vec<usize>,
    /// Sample indices of seen-class rows held out for testing (generalized mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seen_test: Option<Vec<usize>>,
}

impl SplitSpec {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let groups = [("seen", &self.seen), ("unseen", &self.unseen), ("unknown", &self.unknown)];
        for (name, ids) in groups {
            if let Some(&bad) = ids.iter().find(|&&c| c >= n_classes) {
                return Err(Error::Dataset {
                    field: format!("splits.{name}"),
                    message: format!("class id {bad} out of range for {n_classes} classes"),
                });
            }
            let uniq: BTreeSet<_> = ids.iter().collect();
            if uniq.len() != ids.len() {
                return Err(Error::Dataset {
                    field: format!("splits.{name}"),
                    message: "duplicate class id".into(),
                });
            }
        }
        for i in 0..3 {
            for j in i + 1..3 {
                let (a, ida) = groups[i];
                let (b, idb) = groups[j];
                if let Some(c) = ida.iter().find(|c| idb.contains(c)) {
                    return Err(Error::Disjointness(format!("class {c} is in both {a} and {b}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Transforms {
    pub l2_normalize: bool,
    pub min_max: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestSplits {
    /// Name of a shipped split (`cub`, `awa2`, `flo`, `sun`); overrides the id lists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical: Option<String>,
    #[serde(default)]
    pub seen: Vec<usize>,
    #[serde(default)]
    pub unseen: Vec<usize>,
    #[serde(default)]
    pub unknown: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seen_test: Option<Vec<usize>>,
    /// Ids in the lists above are 1-based.
    #[serde(default)]
    pub one_based: bool,
}

/// On-disk description of a dataset. Paths are relative to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub features: PathBuf,
    pub labels: PathBuf,
    pub attributes: PathBuf,
    pub class_names: Vec<String>,
    pub splits: ManifestSplits,
    #[serde(default)]
    pub transforms: Transforms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleSummary {
    pub n_samples: usize,
    pub feature_dim: usize,
    pub n_classes: usize,
    pub attr_dim: usize,
    pub n_seen: usize,
    pub n_unseen: usize,
    pub n_unknown: usize,
}

/// Features, labels, class attributes and the class split of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    features: Matrix,
    labels: Vec<usize>,
    attributes: Matrix,
    class_names: Vec<String>,
    split: SplitSpec,
    transforms: Transforms,
}

impl DatasetBundle {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        attributes: Matrix,
        class_names: Vec<String>,
        split: SplitSpec,
    ) -> Result<Self> {
        let n_classes = attributes.rows();
        let field = |f: &str, m: String| Error::Dataset {
            field: f.into(),
            message: m,
        };
        if labels.len() != features.rows() {
            return Err(field(
                "labels",
                format!("{} labels for {} feature rows", labels.len(), features.rows()),
            ));
        }
        if features.cols() == 0 {
            return Err(field("features", "feature dimension must be positive".into()));
        }
        if attributes.cols() == 0 {
            return Err(field("attributes", "attribute dimension must be positive".into()));
        }
        if class_names.len() != n_classes {
            return Err(field(
                "class_names",
                format!("{} names for {n_classes} attribute rows", class_names.len()),
            ));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(field("labels", format!("row {i} has label {l}, but only {n_classes} classes exist")));
        }
        if !features.all_finite() {
            return Err(field("features", "non-finite value".into()));
        }
        if !attributes.all_finite() {
            return Err(field("attributes", "non-finite value".into()));
        }
        split.validate(n_classes)?;
        if let Some(test) = &split.seen_test {
            for &i in test {
                if i >= labels.len() || !split.seen.contains(&labels[i]) {
                    return Err(field("splits.seen_test", format!("sample {i} is not a seen-class sample")));
                }
            }
        }
        Ok(DatasetBundle {
            features,
            labels,
            attributes,
            class_names,
            split,
            transforms: Transforms::default(),
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn attributes(&self) -> &Matrix {
        &self.attributes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn split(&self) -> &SplitSpec {
        &self.split
    }

    pub fn transforms(&self) -> Transforms {
        self.transforms
    }

    pub fn n_classes(&self) -> usize {
        self.attributes.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn attr_dim(&self) -> usize {
        self.attributes.cols()
    }

    pub fn summary(&self) -> BundleSummary {
        BundleSummary {
            n_samples: self.features.rows(),
            feature_dim: self.feature_dim(),
            n_classes: self.n_classes(),
            attr_dim: self.attr_dim(),
            n_seen: self.split.seen.len(),
            n_unseen: self.split.unseen.len(),
            n_unknown: self.split.unknown.len(),
        }
    }

    /// Row indices of every sample whose label is in `classes`.
    pub fn rows_of(&self, classes: &[usize]) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| classes.contains(l))
            .map(|(i, _)| i)
            .collect()
    }

    /// Applies feature transforms. Min-max statistics come from seen-class
    /// rows only, so test classes never influence the scaling.
    pub fn with_transforms(mut self, transforms: Transforms) -> Self {
        if transforms.l2_normalize {
            for r in 0..self.features.rows() {
                let row = self.features.row_mut(r);
                let n = crate::ndcore::l2_norm(row) as f32;
                if n > 0.0 {
                    row.iter_mut().for_each(|v| *v /= n);
                }
            }
        }
        if transforms.min_max {
            let d = self.features.cols();
            let mut lo = vec![f32::INFINITY; d];
            let mut hi = vec![f32::NEG_INFINITY; d];
            for i in self.rows_of(&self.split.seen) {
                for (j, &v) in self.features.row(i).iter().enumerate() {
                    lo[j] = lo[j].min(v);
                    hi[j] = hi[j].max(v);
                }
            }
            for r in 0..self.features.rows() {
                for (j, v) in self.features.row_mut(r).iter_mut().enumerate() {
                    let span = hi[j] - lo[j];
                    *v = if span > 0.0 && span.is_finite() { (*v - lo[j]) / span } else { 0.0 };
                }
            }
        }
        self.transforms = transforms;
        self
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads and validates the bundle described by a JSON manifest.
pub fn load_bundle(manifest_path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let features = read_any_matrix(resolve(base, &manifest.features))?;
    let labels = read_any_labels(resolve(base, &manifest.labels))?;
    let attributes = read_any_matrix(resolve(base, &manifest.attributes))?;
    let split = manifest_split(&manifest.splits, attributes.rows())?;
    let bundle = DatasetBundle::new(features, labels, attributes, manifest.class_names, split)?
        .with_transforms(manifest.transforms);
    let s = bundle.summary();
    log::info!(
        "loaded {}: N={} d={} C={} M={} seen/unseen/unknown={}/{}/{}",
        manifest_path.display(),
        s.n_samples,
        s.feature_dim,
        s.n_classes,
        s.attr_dim,
        s.n_seen,
        s.n_unseen,
        s.n_unknown
    );
    Ok(bundle)
}

fn manifest_split(splits: &ManifestSplits, n_classes: usize) -> Result<SplitSpec> {
    if let Some(name) = &splits.canonical {
        let (expected, mut spec) = canonical_split(name)?;
        if expected != n_classes {
            return Err(Error::Dataset {
                field: "splits.canonical".into(),
                message: format!("split `{name}` expects {expected} classes, attributes have {n_classes}"),
            });
        }
        spec.seen_test = splits.seen_test.clone();
        return Ok(spec);
    }
    let shift = |ids: &[usize], field: &str| -> Result<Vec<usize>> {
        if !splits.one_based {
            return Ok(ids.to_vec());
        }
        ids.iter()
            .map(|&i| {
                i.checked_sub(1).ok_or_else(|| Error::Dataset {
                    field: format!("splits.{field}"),
                    message: "id 0 in a 1-based list".into(),
                })
            })
            .collect()
    };
    Ok(SplitSpec {
        seen: shift(&splits.seen, "seen")?,
        unseen: shift(&splits.unseen, "unseen")?,
        unknown: shift(&splits.unknown, "unknown")?,
        seen_test: splits.seen_test.clone(),
    })
}

/// Writes `bundle` as `manifest.json` plus `ZSMX` files under `dir`.
pub fn save_bundle(dir: impl AsRef<Path>, bundle: &DatasetBundle) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix(dir.join("features.zsmx"), &bundle.features)?;
    write_labels(dir.join("labels.zsmx"), &bundle.labels)?;
    write_matrix(dir.join("attributes.zsmx"), &bundle.attributes)?;
    let manifest = Manifest {
        features: "features.zsmx".into(),
        labels: "labels.zsmx".into(),
        attributes: "attributes.zsmx".into(),
        class_names: bundle.class_names.clone(),
        splits: ManifestSplits {
            canonical: None,
            seen: bundle.split.seen.clone(),
            unseen: bundle.split.unseen.clone(),
            unknown: bundle.split.unknown.clone(),
            seen_test: bundle.split.seen_test.clone(),
            one_based: false,
        },
        transforms: bundle.transforms,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
