//! A synthetic zero-shot world with a known attribute→feature map.
//!
//! Class attributes are points on the unit sphere in `M` dimensions; a fixed
//! random linear map `W` (`d × M`) sends them to class feature means, and
//! samples are isotropic Gaussians around those means. Because `W` is kept,
//! tests can compare anything the pipeline learns against the truth.

use serde::{Deserialize, Serialize};

use super::bundle::{DatasetBundle, SplitSpec};
use crate::ndcore::{l2_norm, Matrix};
use crate::rng::{gaussian, stage_rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_seen: usize,
    pub n_unseen: usize,
    pub n_unknown: usize,
    pub attr_dim: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    pub noise_scale: f32,
    /// Entries of the attribute→feature map are `N(0, map_scale² / M)`.
    #[serde(default = "unit_scale")]
    pub map_scale: f32,
}

fn unit_scale() -> f32 {
    1.0
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_seen: 20,
            n_unseen: 5,
            n_unknown: 5,
            attr_dim: 16,
            feature_dim: 64,
            samples_per_class: 200,
            noise_scale: 0.1,
            map_scale: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_seen", self.n_seen),
            ("n_unseen", self.n_unseen),
            ("n_unknown", self.n_unknown),
            ("attr_dim", self.attr_dim),
            ("feature_dim", self.feature_dim),
            ("samples_per_class", self.samples_per_class),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("synthetic world: {name} must be positive")));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "synthetic world: noise_scale must be positive, got {}",
                self.noise_scale
            )));
        }
        if !(self.map_scale > 0.0 && self.map_scale.is_finite()) {
            return Err(Error::Config(format!(
                "synthetic world: map_scale must be positive, got {}",
                self.map_scale
            )));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.n_seen + self.n_unseen + self.n_unknown
    }
}

/// Ground truth of a synthetic world.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    /// `d × M` map from attributes to class feature means.
    pub map: Matrix,
    pub noise_scale: f32,
}

impl Oracle {
    pub fn class_mean(&self, attributes: &[f32]) -> Vec<f32> {
        self.map.iter_rows().map(|w| crate::ndcore::dot(w, attributes)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub bundle: DatasetBundle,
    pub oracle: Oracle,
}

impl SyntheticWorld {
    /// True feature mean of class `c`, including unknown classes.
    pub fn class_mean(&self, class: usize) -> Vec<f32> {
        self.oracle.class_mean(self.bundle.attributes().row(class))
    }
}

/// Builds a world whose classes are ordered seen, unseen, unknown.
pub fn synth_world(config: &SynthConfig, seed: u64) -> Result<SyntheticWorld> {
    config.validate()?;
    let (m, d) = (config.attr_dim, config.feature_dim);
    let n_classes = config.n_classes();

    let mut rng = stage_rng(seed, "synth/attributes", 0);
    let mut attributes = Matrix::zeros(n_classes, m);
    for c in 0..n_classes {
        let row = attributes.row_mut(c);
        loop {
            row.iter_mut().for_each(|v| *v = gaussian(&mut rng));
            let n = l2_norm(row) as f32;
            if n > 1e-6 {
                row.iter_mut().for_each(|v| *v /= n);
                break;
            }
        }
    }

    // Entries N(0, 1/M) keep class means at norm ≈ √(d/M).
    let mut rng = stage_rng(seed, "synth/map", 0);
    let std = config.map_scale / (m as f32).sqrt();
    let map = Matrix::from_vec(d, m, (0..d * m).map(|_| std * gaussian(&mut rng)).collect())?;
    let oracle = Oracle {
        map,
        noise_scale: config.noise_scale,
    };

    let mut rng = stage_rng(seed, "synth/samples", 0);
    let n = n_classes * config.samples_per_class;
    let mut features = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for c in 0..n_classes {
        let mean = oracle.class_mean(attributes.row(c));
        for _ in 0..config.samples_per_class {
            let r = labels.len();
            for (v, &mu) in features.row_mut(r).iter_mut().zip(&mean) {
                *v = mu + config.noise_scale * gaussian(&mut rng);
            }
            labels.push(c);
        }
    }

    let seen: Vec<usize> = (0..config.n_seen).collect();
    let unseen: Vec<usize> = (config.n_seen..config.n_seen + config.n_unseen).collect();
    let unknown: Vec<usize> = (config.n_seen + config.n_unseen..n_classes).collect();
    let names = (0..n_classes)
        .map(|c| {
            let group = if c < config.n_seen {
                "seen"
            } else if c < config.n_seen + config.n_unseen {
                "unseen"
            } else {
                "unknown"
            };
            format!("{group}-{c:03}")
        })
        .collect();
    let bundle = DatasetBundle::new(
        features,
        labels,
        attributes,
        names,
        SplitSpec {
            seen,
            unseen,
            unknown,
            seen_test: None,
        },
    )?;
    Ok(SyntheticWorld { bundle, oracle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::SplitMode;
    use crate::ndcore::l2_distance;

    #[test]
    fn bookkeeping() {
        let w = synth_world(&SynthConfig { samples_per_class: 3, ..Default::default() }, 1).unwrap();
        let s = w.bundle.summary();
        assert_eq!((s.n_classes, s.attr_dim, s.feature_dim), (30, 16, 64));
        assert_eq!((s.n_seen, s.n_unseen, s.n_unknown), (20, 5, 5));
        let v = w.bundle.make_split(&SplitMode::ZsOsr, 0).unwrap();
        assert_eq!(v.training().attribute_row_count(), 25);
        for &u in &w.bundle.split().unknown {
            assert!(v.training().attribute_of(u).is_none());
        }
    }

    #[test]
    fn attributes_on_unit_sphere() {
        let w = synth_world(&SynthConfig { samples_per_class: 1, ..Default::default() }, 2).unwrap();
        for r in w.bundle.attributes().iter_rows() {
            assert!((l2_norm(r) - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn reproducible() {
        let c = SynthConfig { samples_per_class: 4, ..Default::default() };
        assert_eq!(synth_world(&c, 9).unwrap(), synth_world(&c, 9).unwrap());
        assert_ne!(synth_world(&c, 9).unwrap(), synth_world(&c, 10).unwrap());
    }

    #[test]
    fn noiseless_world_is_separable_by_class_means() {
        let c = SynthConfig { samples_per_class: 5, noise_scale: 1e-6, ..Default::default() };
        let w = synth_world(&c, 3).unwrap();
        let means: Vec<Vec<f32>> = (0..c.n_classes()).map(|k| w.class_mean(k)).collect();
        for (x, &y) in w.bundle.features().iter_rows().zip(w.bundle.labels()) {
            let nearest = (0..means.len())
                .min_by(|&a, &b| l2_distance(x, &means[a]).total_cmp(&l2_distance(x, &means[b])))
                .unwrap();
            assert_eq!(nearest, y);
        }
    }

    #[test]
    fn empirical_means_converge_to_oracle() {
        let c = SynthConfig {
            n_seen: 1,
            n_unseen: 1,
            n_unknown: 1,
            samples_per_class: 10_000,
            ..Default::default()
        };
        let w = synth_world(&c, 4).unwrap();
        let tol = 3.0 * c.noise_scale / (10_000f32).sqrt();
        for k in 0..3 {
            let rows = w.bundle.rows_of(&[k]);
            let emp = w.bundle.features().select_rows(&rows).column_means();
            let truth = w.class_mean(k);
            let worst = emp.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
            // 3σ per coordinate; allow a 4σ excursion over 64 coordinates.
            assert!(worst < tol * 4.0 / 3.0, "class {k}: {worst} vs {tol}");
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(synth_world(&SynthConfig { n_unknown: 0, ..Default::default() }, 0).is_err());
        assert!(synth_world(&SynthConfig { noise_scale: 0.0, ..Default::default() }, 0).is_err());
    }
}
