use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::ase::{AseConfig, OpenClassifierConfig, VariantConfig, VariantStrategy};
use crate::baselines::{BaselineKind, BaselineSpec, ODIN_EPS_GRID};
use crate::datasets::{SplitKind, SynthConfig};
use crate::evalkit::PositiveClass;
use crate::zslgen::{ClassifierConfig, GeneratorConfig};
use crate::{Error, Result};

pub const ENV_OUTDIR: &str = "ZSOSR_OUTDIR";
pub const ENV_THREADS: &str = "ZSOSR_THREADS";

/// β values searched on the validation split.
pub const BETA_GRID: [f32; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    /// A bundle manifest on disk.
    Manifest { path: PathBuf },
    /// The oracle world, generated on demand. Without `world_seed` every
    /// master seed gets its own world.
    Synthetic {
        #[serde(default)]
        config: SynthConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        world_seed: Option<u64>,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            config: SynthConfig::default(),
            world_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    ZsOsr,
    Generalized,
    Openness { k_unseen: usize, k_unknown: usize },
    /// Unknown test classes come from `other`.
    Ood { other: DatasetSource, n_unknown: usize },
}

impl Mode {
    pub fn kind(&self) -> SplitKind {
        match self {
            Mode::ZsOsr => SplitKind::ZsOsr,
            Mode::Generalized => SplitKind::Generalized,
            Mode::Openness { .. } => SplitKind::Openness,
            Mode::Ood { .. } => SplitKind::Ood,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    /// When off, `ase.beta` and the ODIN spec's `odin_eps` are used as given.
    pub enabled: bool,
    pub beta_grid: Vec<f32>,
    pub odin_eps_grid: Vec<f32>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            enabled: true,
            beta_grid: BETA_GRID.to_vec(),
            odin_eps_grid: ODIN_EPS_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub mode: Mode,
    pub generator: GeneratorConfig,
    /// Synthesized features per unseen class for the closed and open classifiers.
    pub synth_per_class: usize,
    pub classifier: ClassifierConfig,
    pub ase: AseConfig,
    pub open: OpenClassifierConfig,
    pub tuning: TuningConfig,
    pub baselines: Vec<BaselineSpec>,
    pub variants: Vec<VariantStrategy>,
    pub variant: VariantConfig,
    pub seeds: Vec<u64>,
    pub outdir: PathBuf,
    pub bins: usize,
    pub fpr95_positive: PositiveClass,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSource::default(),
            mode: Mode::ZsOsr,
            generator: GeneratorConfig::default(),
            synth_per_class: 300,
            classifier: ClassifierConfig::default(),
            ase: AseConfig::default(),
            open: OpenClassifierConfig::default(),
            tuning: TuningConfig::default(),
            baselines: BaselineKind::ALL.into_iter().map(BaselineSpec::new).collect(),
            variants: Vec::new(),
            variant: VariantConfig::default(),
            seeds: (0..5).collect(),
            outdir: PathBuf::from("runs"),
            bins: 20,
            fpr95_positive: PositiveClass::Unknown,
        }
    }
}

impl RunConfig {
    /// Sizes that finish the five-seed oracle-world protocol in minutes on
    /// one core: a narrow generator and faster classifier schedules.
    pub fn desk_scale() -> Self {
        let classifier = ClassifierConfig {
            epochs: 60,
            lr: 0.01,
            ..Default::default()
        };
        RunConfig {
            generator: GeneratorConfig {
                hidden: 128,
                ..Default::default()
            },
            classifier: classifier.clone(),
            open: OpenClassifierConfig {
                classifier,
                unknown_weight: None,
            },
            variants: VariantStrategy::ALL.to_vec(),
            ..Default::default()
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        // Relative dataset paths are taken relative to the config file.
        if let Some(dir) = path.parent() {
            cfg.dataset = rebase(cfg.dataset, dir);
            if let Mode::Ood { other, n_unknown } = cfg.mode {
                cfg.mode = Mode::Ood {
                    other: rebase(other, dir),
                    n_unknown,
                };
            }
        }
        Ok(cfg)
    }

    /// Sets one field by dotted path, e.g. `ase.beta=0.1`. The value is
    /// parsed as JSON and falls back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut root = serde_json::to_value(&*self)?;
        let mut slot = &mut root;
        for key in path.split('.') {
            slot = match slot {
                Value::Object(map) => map
                    .get_mut(key)
                    .ok_or_else(|| Error::Config(format!("unknown config key `{path}`")))?,
                _ => return Err(Error::Config(format!("`{path}` does not name a config field"))),
            };
        }
        *slot = value;
        *self = serde_json::from_value(root).map_err(|e| Error::Config(format!("override `{assignment}`: {e}")))?;
        Ok(())
    }

    /// Reads `ZSOSR_OUTDIR`.
    pub fn apply_env(&mut self) {
        if let Ok(dir) = std::env::var(ENV_OUTDIR) {
            if !dir.is_empty() {
                self.outdir = PathBuf::from(dir);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        check_source(&self.dataset)?;
        match &self.mode {
            Mode::Ood { other, n_unknown } => {
                check_source(other)?;
                if *n_unknown == 0 {
                    return Err(Error::Config("ood mode needs n_unknown >= 1".into()));
                }
            }
            Mode::Openness { k_unseen, .. } if *k_unseen == 0 => {
                return Err(Error::Config("openness mode needs k_unseen >= 1".into()));
            }
            _ => {}
        }
        self.generator.validate()?;
        self.ase.validate()?;
        for b in &self.baselines {
            b.validate()?;
        }
        if self.synth_per_class == 0 {
            return Err(Error::Config("synth_per_class must be >= 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("bins must be >= 1".into()));
        }
        if self.tuning.enabled && self.tuning.beta_grid.is_empty() {
            return Err(Error::Config("tuning.beta_grid is empty".into()));
        }
        if let Some(b) = self.tuning.beta_grid.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(Error::Config(format!("beta grid value {b} is not a finite non-negative number")));
        }
        if let Some(e) = self.tuning.odin_eps_grid.iter().find(|e| !(**e >= 0.0)) {
            return Err(Error::Config(format!("odin eps grid value {e} is negative")));
        }
        Ok(())
    }
}

fn rebase(source: DatasetSource, dir: &Path) -> DatasetSource {
    match source {
        DatasetSource::Manifest { path } if path.is_relative() => DatasetSource::Manifest { path: dir.join(path) },
        other => other,
    }
}

fn check_source(source: &DatasetSource) -> Result<()> {
    match source {
        DatasetSource::Manifest { path } if !path.exists() => Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
        )),
        DatasetSource::Synthetic { config, .. } => config.validate(),
        _ => Ok(()),
    }
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn hash_json(value: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Number of worker threads from `ZSOSR_THREADS`, if set.
pub fn env_threads() -> Option<usize> {
    std::env::var(ENV_THREADS).ok()?.parse().ok().filter(|&n| n > 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_and_partial_files() {
        let cfg = RunConfig::desk_scale();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: RunConfig = serde_json::from_str(r#"{"mode": {"kind": "generalized"}, "seeds": [3]}"#).unwrap();
        assert_eq!(partial.mode, Mode::Generalized);
        assert_eq!(partial.seeds, vec![3]);
        assert_eq!(partial.synth_per_class, 300);
    }

    #[test]
    fn dotted_overrides() {
        let mut cfg = RunConfig::default();
        cfg.set("ase.beta=0.25").unwrap();
        cfg.set("seeds=[7,8]").unwrap();
        cfg.set("outdir=/tmp/x").unwrap();
        cfg.set(r#"mode={"kind":"openness","k_unseen":3,"k_unknown":2}"#).unwrap();
        assert_eq!(cfg.ase.beta, 0.25);
        assert_eq!(cfg.seeds, vec![7, 8]);
        assert_eq!(cfg.outdir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.mode.kind(), SplitKind::Openness);
        assert!(cfg.set("ase.nope=1").is_err());
        assert!(cfg.set("ase.beta").is_err());
        assert!(cfg.set("ase.beta=\"x\"").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.seeds.clear();
        assert!(cfg.validate().unwrap_err().to_string().contains("seeds"));
        let mut cfg = RunConfig::default();
        cfg.dataset = DatasetSource::Manifest {
            path: "/definitely/not/here.json".into(),
        };
        assert_eq!(cfg.validate().unwrap_err().kind(), "io");
        let mut cfg = RunConfig::default();
        cfg.tuning.beta_grid = vec![0.1, -1.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hashes_follow_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(hash_json(&a).unwrap(), hash_json(&b).unwrap());
        b.ase.steps += 1;
        assert_ne!(hash_json(&a).unwrap(), hash_json(&b).unwrap());
        assert_eq!(hash_json(&a).unwrap().len(), 64);
    }
}
