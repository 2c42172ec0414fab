use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::checkpoint::{load_mlp, read_fresh, save_mlp, stage_dir, write_descriptor, Descriptor, MlpShape};
use super::config::{env_threads, DatasetSource, Mode, RunConfig};
use super::experiment::{
    baseline_predictions, effective_ase_config, fit_closed, fit_generator, known_training_set, learn_ase, load_source,
    make_split, report_for, sub_seeds, train_ase_open, tuned_spec, variant_open, Front, StageHashes, Tuning,
    Validation, VERSION,
};
use crate::baselines::BaselineKind;
use crate::ase::{score_open, AdversarialEmbeddingSet, AseConfig, OpenSetClassifier};
use crate::datasets::{load_bundle, read_matrix, save_bundle, write_matrix, DatasetBundle, Group, SplitView};
use crate::evalkit::{
    aggregate, openness, read_scores_csv, write_histogram_json, write_report_json, write_scores_csv, AggregateReport,
    MetricsReport, ScoredPrediction,
};
use crate::zslgen::{ClosedSetClassifier, Generator};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    SynthData,
    Split,
    TrainGen,
    TrainClosed,
    LearnAse,
    TrainOpen,
    Score,
    Baseline,
    Ablation,
    Eval,
}

impl Stage {
    /// Execution order of a full run.
    pub const ALL: [Stage; 10] = [
        Stage::SynthData,
        Stage::Split,
        Stage::TrainGen,
        Stage::TrainClosed,
        Stage::LearnAse,
        Stage::TrainOpen,
        Stage::Score,
        Stage::Baseline,
        Stage::Ablation,
        Stage::Eval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::SynthData => "synth-data",
            Stage::Split => "split",
            Stage::TrainGen => "train-gen",
            Stage::TrainClosed => "train-closed",
            Stage::LearnAse => "learn-ase",
            Stage::TrainOpen => "train-open",
            Stage::Score => "score",
            Stage::Baseline => "baseline",
            Stage::Ablation => "ablation",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

fn payload<T: for<'de> Deserialize<'de>>(d: &Descriptor, key: &str) -> Result<T> {
    let v = d.payload.get(key).cloned().ok_or_else(|| Error::Dataset {
        field: format!("{}.payload.{key}", d.stage),
        message: "missing".into(),
    })?;
    serde_json::from_value(v).map_err(|e| Error::Dataset {
        field: format!("{}.payload.{key}", d.stage),
        message: e.to_string(),
    })
}

fn method_csv(method: &str) -> String {
    format!("{method}.csv")
}

/// Runs stages of one master seed with all outputs under `root/<stage>/`.
#[derive(Debug, Clone)]
pub struct Runner<'a> {
    cfg: &'a RunConfig,
    seed: u64,
    root: PathBuf,
    hashes: StageHashes,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a RunConfig, seed: u64, root: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        Ok(Runner {
            cfg,
            seed,
            root: root.into(),
            hashes: StageHashes::of(cfg, seed)?,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        stage_dir(&self.root, stage.as_str())
    }

    pub fn hash(&self, stage: Stage) -> &str {
        let h = &self.hashes;
        match stage {
            Stage::SynthData => &h.synth_data,
            Stage::Split => &h.split,
            Stage::TrainGen => &h.train_gen,
            Stage::TrainClosed => &h.train_closed,
            Stage::LearnAse => &h.learn_ase,
            Stage::TrainOpen => &h.train_open,
            Stage::Score => &h.score,
            Stage::Baseline => &h.baseline,
            Stage::Ablation => &h.ablation,
            Stage::Eval => &h.eval,
        }
    }

    fn parent(stage: Stage) -> Option<Stage> {
        match stage {
            Stage::SynthData => None,
            Stage::Split => Some(Stage::SynthData),
            Stage::TrainGen => Some(Stage::Split),
            Stage::TrainClosed => Some(Stage::TrainGen),
            Stage::LearnAse => Some(Stage::TrainClosed),
            Stage::TrainOpen => Some(Stage::LearnAse),
            Stage::Score => Some(Stage::TrainOpen),
            Stage::Baseline | Stage::Ablation => Some(Stage::TrainClosed),
            Stage::Eval => Some(Stage::Score),
        }
    }

    fn require(&self, stage: Stage) -> Result<Descriptor> {
        read_fresh(&self.dir(stage), stage.as_str(), self.hash(stage))
    }

    fn write(&self, stage: Stage, files: Vec<String>, payload: serde_json::Value) -> Result<PathBuf> {
        let dir = self.dir(stage);
        write_descriptor(
            &dir,
            &Descriptor {
                stage: stage.as_str().to_string(),
                config_hash: self.hash(stage).to_string(),
                parent_hash: Self::parent(stage).map(|p| self.hash(p).to_string()),
                seed: self.seed,
                sub_seeds: sub_seeds(self.seed),
                version: VERSION.to_string(),
                files,
                payload,
            },
        )?;
        Ok(dir)
    }

    /// Runs one stage. Prerequisites must already be on disk.
    pub fn run(&self, stage: Stage) -> Result<PathBuf> {
        info!("seed {}: {stage}", self.seed);
        match stage {
            Stage::SynthData => self.synth_data(),
            Stage::Split => self.split(),
            Stage::TrainGen => self.train_gen(),
            Stage::TrainClosed => self.train_closed(),
            Stage::LearnAse => self.learn_ase(),
            Stage::TrainOpen => self.train_open(),
            Stage::Score => self.score(),
            Stage::Baseline => self.baseline(),
            Stage::Ablation => self.ablation(),
            Stage::Eval => self.eval().map(|_| self.dir(Stage::Eval)),
        }
    }

    /// Runs every stage in order and returns the evaluation reports.
    pub fn run_all(&self) -> Result<Vec<MetricsReport>> {
        for stage in &Stage::ALL[..Stage::ALL.len() - 1] {
            self.run(*stage)?;
        }
        self.eval()
    }

    fn synth_data(&self) -> Result<PathBuf> {
        let dir = self.dir(Stage::SynthData);
        let mut files = Vec::new();
        let mut sources = json!({});
        for (slot, sub, source) in self.sources() {
            match source {
                DatasetSource::Synthetic { .. } => {
                    let bundle = load_source(source, self.seed, slot)?;
                    save_bundle(dir.join(sub), &bundle)?;
                    files.push(format!("{sub}/manifest.json"));
                    sources[slot] = json!({ "bundle": format!("{sub}/manifest.json"), "summary": bundle.summary() });
                }
                DatasetSource::Manifest { path } => {
                    sources[slot] = json!({ "manifest": path });
                }
            }
        }
        self.write(Stage::SynthData, files, json!({ "sources": sources }))
    }

    fn sources(&self) -> Vec<(&'static str, &'static str, &DatasetSource)> {
        let mut out = vec![("world", "primary", &self.cfg.dataset)];
        if let Mode::Ood { other, .. } = &self.cfg.mode {
            out.push(("world-ood", "other", other));
        }
        out
    }

    fn bundle(&self, sub: &str, source: &DatasetSource) -> Result<DatasetBundle> {
        match source {
            DatasetSource::Manifest { path } => load_bundle(path),
            DatasetSource::Synthetic { .. } => {
                self.require(Stage::SynthData)?;
                load_bundle(self.dir(Stage::SynthData).join(sub).join("manifest.json"))
            }
        }
    }

    fn compute_split(&self) -> Result<SplitView> {
        let mut bundles = Vec::new();
        for (_, sub, source) in self.sources() {
            bundles.push(self.bundle(sub, source)?);
        }
        make_split(self.cfg, &bundles[0], bundles.get(1), self.seed)
    }

    fn split(&self) -> Result<PathBuf> {
        let split = self.compute_split()?;
        let pool = split.test_pool();
        self.write(
            Stage::Split,
            vec![],
            json!({
                "kind": split.kind,
                "seen": split.seen,
                "unseen": split.unseen,
                "unknown": split.unknown,
                "n_train": split.training().features().rows(),
                "n_test_seen": pool.count(Group::Seen),
                "n_test_unseen": pool.count(Group::Unseen),
                "n_test_unknown": pool.count(Group::Unknown),
            }),
        )
    }

    fn load_split(&self) -> Result<SplitView> {
        let d = self.require(Stage::Split)?;
        let split = self.compute_split()?;
        let ids: (Vec<usize>, Vec<usize>, Vec<usize>) =
            (payload(&d, "seen")?, payload(&d, "unseen")?, payload(&d, "unknown")?);
        if ids != (split.seen.clone(), split.unseen.clone(), split.unknown.clone()) {
            return Err(Error::StaleCheckpoint {
                stage: Stage::Split.as_str().into(),
                recorded: format!("{ids:?}"),
                expected: format!("{:?}", (&split.seen, &split.unseen, &split.unknown)),
            });
        }
        Ok(split)
    }

    fn train_gen(&self) -> Result<PathBuf> {
        let split = self.load_split()?;
        let g = fit_generator(&self.cfg.generator, split.training(), self.seed)?;
        let dir = self.dir(Stage::TrainGen);
        let (files, shape) = save_mlp(&dir, "generator", &g.net)?;
        self.write(
            Stage::TrainGen,
            files,
            json!({ "shape": shape, "attr_dim": g.attr_dim, "noise_dim": g.noise_dim }),
        )
    }

    fn load_generator(&self) -> Result<Generator> {
        let d = self.require(Stage::TrainGen)?;
        let shape: MlpShape = payload(&d, "shape")?;
        let net = load_mlp(&self.dir(Stage::TrainGen), "generator", &shape)?;
        Generator::from_net(net, payload(&d, "attr_dim")?)
    }

    fn train_closed(&self) -> Result<PathBuf> {
        let split = self.load_split()?;
        let g = self.load_generator()?;
        let (known, order) = known_training_set(split.kind, split.training(), &g, self.cfg.synth_per_class, self.seed)?;
        let closed = fit_closed(&self.cfg.classifier, &known, &order, self.seed)?;
        let dir = self.dir(Stage::TrainClosed);
        let (files, shape) = save_mlp(&dir, "closed", &closed.net)?;
        self.write(
            Stage::TrainClosed,
            files,
            json!({ "shape": shape, "class_ids": closed.class_ids, "n_train_rows": known.len() }),
        )
    }

    fn load_front(&self, split: &SplitView) -> Result<Front> {
        let d = self.require(Stage::TrainClosed)?;
        let generator = self.load_generator()?;
        let (known, order) =
            known_training_set(split.kind, split.training(), &generator, self.cfg.synth_per_class, self.seed)?;
        let shape: MlpShape = payload(&d, "shape")?;
        let closed = ClosedSetClassifier {
            net: load_mlp(&self.dir(Stage::TrainClosed), "closed", &shape)?,
            class_ids: payload(&d, "class_ids")?,
        };
        if closed.class_ids != order {
            return Err(Error::shape("closed classifier class order", format!("{order:?}"), format!("{:?}", closed.class_ids)));
        }
        Ok(Front {
            generator,
            known,
            order,
            closed,
        })
    }

    fn learn_ase(&self) -> Result<PathBuf> {
        let split = self.load_split()?;
        let front = self.load_front(&split)?;
        let tuning = if self.cfg.tuning.enabled {
            let v = Validation::new(self.cfg, &split, &front, self.seed)?;
            let betas = v.beta_grid(self.cfg)?;
            Some(v.tuning(self.cfg, betas, Vec::new()))
        } else {
            None
        };
        let beta = tuning.as_ref().map_or(self.cfg.ase.beta, |t| t.beta);
        let ase = effective_ase_config(self.cfg, split.kind, beta);
        let set = learn_ase(&ase, split.training(), &front, self.seed)?;
        let dir = self.dir(Stage::LearnAse);
        write_matrix(dir.join("embeddings.zsmx"), &set.embeddings)?;
        write_matrix(dir.join("anchors.zsmx"), &set.anchors)?;
        let trace: Vec<[f64; 3]> = set.trace.iter().map(|s| [s.total, s.adv, s.dis]).collect();
        self.write(
            Stage::LearnAse,
            vec!["embeddings.zsmx".into(), "anchors.zsmx".into()],
            json!({
                "anchor_ids": set.anchor_ids,
                "config": ase,
                "beta_auroc": tuning.as_ref().map(|t| &t.beta_auroc),
                "final_adv": set.final_adv,
                "final_dis": set.final_dis,
                "trend_ok": set.trend_ok,
                "mean_distance": set.mean_distance(),
                "trace": trace,
            }),
        )
    }

    fn load_set(&self) -> Result<(AseConfig, AdversarialEmbeddingSet)> {
        let d = self.require(Stage::LearnAse)?;
        let dir = self.dir(Stage::LearnAse);
        let set = AdversarialEmbeddingSet {
            anchor_ids: payload(&d, "anchor_ids")?,
            anchors: read_matrix(dir.join("anchors.zsmx"))?,
            embeddings: read_matrix(dir.join("embeddings.zsmx"))?,
            final_adv: payload(&d, "final_adv")?,
            final_dis: payload(&d, "final_dis")?,
            trace: Vec::new(),
            trend_ok: payload(&d, "trend_ok")?,
        };
        Ok((payload(&d, "config")?, set))
    }

    fn train_open(&self) -> Result<PathBuf> {
        let split = self.load_split()?;
        let front = self.load_front(&split)?;
        let (ase, set) = self.load_set()?;
        let (unknown, open) = train_ase_open(self.cfg, &ase, &front, &set, self.seed)?;
        let dir = self.dir(Stage::TrainOpen);
        let (files, shape) = save_mlp(&dir, "open", &open.classifier.net)?;
        self.write(
            Stage::TrainOpen,
            files,
            json!({
                "shape": shape,
                "class_ids": open.classifier.class_ids,
                "n_unknown_rows": unknown.len(),
                "known_accuracy": open.known_accuracy,
                "unknown_recall": open.unknown_recall,
            }),
        )
    }

    fn score(&self) -> Result<PathBuf> {
        let d = self.require(Stage::TrainOpen)?;
        let split = self.load_split()?;
        let shape: MlpShape = payload(&d, "shape")?;
        let open = OpenSetClassifier {
            net: load_mlp(&self.dir(Stage::TrainOpen), "open", &shape)?,
            class_ids: payload(&d, "class_ids")?,
        };
        let scored = score_open(&open, &split.test_pool().features)?;
        let dir = self.dir(Stage::Score);
        write_scores_csv(dir.join(method_csv("ase")), &scored, &split.test_pool().groups)?;
        self.write(Stage::Score, vec![method_csv("ase")], json!({ "methods": ["ase"], "rows": scored.len() }))
    }

    fn baseline(&self) -> Result<PathBuf> {
        let split = self.load_split()?;
        let front = self.load_front(&split)?;
        let has_odin = self.cfg.baselines.iter().any(|b| b.kind == BaselineKind::Odin);
        let tuning: Option<Tuning> = if self.cfg.tuning.enabled && has_odin && !self.cfg.tuning.odin_eps_grid.is_empty() {
            let v = Validation::new(self.cfg, &split, &front, self.seed)?;
            let eps = v.odin_grid(self.cfg)?;
            Some(v.tuning(self.cfg, Vec::new(), eps))
        } else {
            None
        };
        let dir = self.dir(Stage::Baseline);
        let pool = split.test_pool();
        let mut files = Vec::new();
        let mut specs = Vec::new();
        for spec in &self.cfg.baselines {
            let spec = tuned_spec(spec, tuning.as_ref());
            let scored = baseline_predictions(self.cfg, &spec, &front, &pool.features, self.seed)?;
            let name = method_csv(spec.kind.as_str());
            write_scores_csv(dir.join(&name), &scored, &pool.groups)?;
            files.push(name);
            specs.push(spec);
        }
        let methods: Vec<&str> = specs.iter().map(|s| s.kind.as_str()).collect();
        self.write(
            Stage::Baseline,
            files,
            json!({ "methods": methods, "specs": specs, "odin_auroc": tuning.as_ref().map(|t| &t.odin_auroc) }),
        )
    }

    fn ablation(&self) -> Result<PathBuf> {
        let split = self.load_split()?;
        let front = self.load_front(&split)?;
        let dir = self.dir(Stage::Ablation);
        let pool = split.test_pool();
        let mut files = Vec::new();
        let mut recall = BTreeMap::new();
        for &strategy in &self.cfg.variants {
            let open = variant_open(self.cfg, strategy, split.kind, split.training(), &front, self.seed)?;
            let scored = score_open(&open.classifier, &pool.features)?;
            let name = method_csv(strategy.as_str());
            write_scores_csv(dir.join(&name), &scored, &pool.groups)?;
            files.push(name);
            recall.insert(strategy.as_str(), open.unknown_recall);
        }
        let methods: Vec<&str> = self.cfg.variants.iter().map(|v| v.as_str()).collect();
        self.write(Stage::Ablation, files, json!({ "methods": methods, "unknown_recall": recall }))
    }

    fn read_scores(&self, stage: Stage, method: &str, rows: usize) -> Result<Vec<ScoredPrediction>> {
        let path = self.dir(stage).join(method_csv(method));
        let raw = read_scores_csv(&path)?;
        if raw.len() != rows {
            return Err(Error::shape(format!("{}", path.display()), rows, raw.len()));
        }
        Ok(raw
            .into_iter()
            .map(|(score, _, predicted)| ScoredPrediction {
                score,
                predicted,
                logits: Vec::new(),
            })
            .collect())
    }

    /// Reads every score file, writes one report and histogram per method
    /// plus `reports.json`, and returns the reports.
    pub fn eval(&self) -> Result<Vec<MetricsReport>> {
        self.require(Stage::Score)?;
        let mut sources = vec![(Stage::Score, vec!["ase".to_string()])];
        if !self.cfg.baselines.is_empty() {
            let d = self.require(Stage::Baseline)?;
            sources.push((Stage::Baseline, payload(&d, "methods")?));
        }
        if !self.cfg.variants.is_empty() {
            let d = self.require(Stage::Ablation)?;
            sources.push((Stage::Ablation, payload(&d, "methods")?));
        }
        let split = self.load_split()?;
        let rows = split.test_pool().len();
        let dir = self.dir(Stage::Eval);
        let mut reports = Vec::new();
        let mut files = Vec::new();
        for (stage, methods) in sources {
            for m in methods {
                let scored = self.read_scores(stage, &m, rows)?;
                let r = report_for(self.cfg, &split, &m, &scored, self.seed, self.hash(Stage::Eval))?;
                write_report_json(dir.join(format!("{m}.json")), &r)?;
                write_histogram_json(dir.join(format!("{m}.histogram.json")), &r.histogram)?;
                files.push(format!("{m}.json"));
                files.push(format!("{m}.histogram.json"));
                reports.push(r);
            }
        }
        write_report_json(dir.join("reports.json"), &reports)?;
        files.push("reports.json".into());
        let summary: Vec<_> = reports
            .iter()
            .map(|r| json!({ "method": r.method, "acc": r.acc, "auroc": r.auroc, "fpr95": r.fpr95 }))
            .collect();
        self.write(Stage::Eval, files, json!({ "summary": summary }))?;
        Ok(reports)
    }
}

/// Per-method mean ± std over seeds, in the method order of the first seed.
pub fn aggregate_by_method(per_seed: &[Vec<MetricsReport>]) -> Result<Vec<AggregateReport>> {
    let first = per_seed.first().ok_or_else(|| Error::Empty("suite run list".into()))?;
    first
        .iter()
        .map(|r| {
            let same: Vec<MetricsReport> = per_seed
                .iter()
                .filter_map(|reports| reports.iter().find(|x| x.method == r.method).cloned())
                .collect();
            aggregate(&same)
        })
        .collect()
}

fn parallel<T: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let threads = env_threads().unwrap_or(1);
    if threads <= 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<Vec<MetricsReport>>,
    pub aggregate: Vec<AggregateReport>,
}

/// All stages for every seed under `root/seed-<s>/`, then per-method
/// aggregates in `root/suite/`. Seeds run on `ZSOSR_THREADS` threads.
pub fn run_suite_in(cfg: &RunConfig, root: &Path) -> Result<SuiteOutcome> {
    cfg.validate()?;
    let per_seed = parallel(&cfg.seeds, |s| Runner::new(cfg, s, root.join(format!("seed-{s}")))?.run_all())?;
    let aggregate = aggregate_by_method(&per_seed)?;
    let dir = root.join("suite");
    write_report_json(dir.join("aggregate.json"), &aggregate)?;
    let out = SuiteOutcome {
        seeds: cfg.seeds.clone(),
        per_seed,
        aggregate,
    };
    write_report_json(dir.join("runs.json"), &out.per_seed)?;
    Ok(out)
}

pub fn run_suite(cfg: &RunConfig) -> Result<SuiteOutcome> {
    run_suite_in(cfg, &cfg.outdir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpennessRow {
    pub k_unseen: usize,
    pub k_unknown: usize,
    pub openness: f64,
    pub aggregate: Vec<AggregateReport>,
}

/// One suite per `k_unknown` with `k_unseen` unseen classes, each under
/// `outdir/openness-sweep/k<k_unknown>/`.
pub fn run_openness_sweep(cfg: &RunConfig, k_unseen: usize, k_unknown: &[usize]) -> Result<Vec<OpennessRow>> {
    if k_unknown.is_empty() {
        return Err(Error::Config("openness sweep needs at least one unknown-class count".into()));
    }
    let max_unknown = *k_unknown.iter().max().unwrap_or(&0);
    let probe = load_source(&cfg.dataset, cfg.seeds.first().copied().unwrap_or(0), "world")?;
    let pool = probe.split().unseen.len() + probe.split().unknown.len();
    if k_unseen == 0 || k_unseen + max_unknown > pool {
        return Err(Error::Config(format!(
            "openness sweep asks for {k_unseen} unseen + {max_unknown} unknown classes, the dataset has {pool} non-seen classes"
        )));
    }
    let root = cfg.outdir.join("openness-sweep");
    let mut rows = Vec::new();
    for &k in k_unknown {
        let mut c = cfg.clone();
        c.mode = Mode::Openness {
            k_unseen,
            k_unknown: k,
        };
        let suite = run_suite_in(&c, &root.join(format!("k{k}")))?;
        rows.push(OpennessRow {
            k_unseen,
            k_unknown: k,
            openness: openness(k_unseen, k)?,
            aggregate: suite.aggregate,
        });
    }
    write_report_json(root.join("summary.json"), &rows)?;
    Ok(rows)
}
