use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{auroc, closed_acc, fpr_at_tpr, openness, PositiveClass};
use crate::datasets::{Group, Label};
use crate::{Error, Result};

/// Open score and decision for one sample. Higher scores mean "more likely
/// unknown"; `predicted` is a known class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub score: f64,
    pub predicted: usize,
    pub logits: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: BTreeMap<String, Vec<u64>>,
}

/// Equal-width bins over the pooled score range; the last bin is closed.
pub fn histogram(scores: &[f64], groups: &[Group], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if scores.len() != groups.len() {
        return Err(Error::shape("histogram groups", scores.len(), groups.len()));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if scores.is_empty() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for (&s, &g) in scores.iter().zip(groups) {
        let b = (((s - lo) / width) as usize).min(bins - 1);
        counts.entry(g.as_str().to_string()).or_insert_with(|| vec![0; bins])[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Provenance of one evaluation run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
    pub sub_seeds: BTreeMap<String, u64>,
    pub n_known_classes: usize,
    pub n_unknown_classes: usize,
    pub version: String,
    #[serde(default)]
    pub fpr95_positive: PositiveClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub acc: f64,
    pub auroc: f64,
    pub fpr95: f64,
    pub fpr95_positive: PositiveClass,
    pub openness: f64,
    pub n_seen_samples: usize,
    pub n_unseen_samples: usize,
    pub n_unknown_samples: usize,
    pub histogram: Histogram,
    pub seed: u64,
    pub config_hash: String,
    pub sub_seeds: BTreeMap<String, u64>,
    pub version: String,
}

/// Computes every metric for one scored test pool.
pub fn make_report(
    scored: &[ScoredPrediction],
    truth: &[Label],
    groups: &[Group],
    bins: usize,
    meta: &RunMeta,
) -> Result<MetricsReport> {
    if scored.len() != truth.len() || truth.len() != groups.len() {
        return Err(Error::shape(
            "report inputs",
            format!("{} rows", scored.len()),
            format!("{} labels / {} groups", truth.len(), groups.len()),
        ));
    }
    let mut known = Vec::new();
    let mut unknown = Vec::new();
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for ((s, t), _) in scored.iter().zip(truth).zip(groups) {
        match t {
            Label::Class(c) => {
                known.push(s.score);
                preds.push(s.predicted);
                labels.push(*c);
            }
            Label::Unknown => unknown.push(s.score),
        }
    }
    let mut missing = Vec::new();
    if known.is_empty() {
        missing.push("known (unseen)");
    }
    if unknown.is_empty() {
        missing.push("unknown");
    }
    if !missing.is_empty() {
        return Err(Error::Empty(format!("test groups [{}]", missing.join(", "))));
    }
    let mut classes: Vec<usize> = labels.clone();
    classes.sort_unstable();
    classes.dedup();
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let positive = meta.fpr95_positive;
    Ok(MetricsReport {
        method: meta.method.clone(),
        acc: closed_acc(&preds, &labels, &classes)?,
        auroc: auroc(&known, &unknown)?,
        fpr95: fpr_at_tpr(&known, &unknown, 0.95, positive)?,
        fpr95_positive: positive,
        openness: openness(meta.n_known_classes.max(1), meta.n_unknown_classes)?,
        n_seen_samples: groups.iter().filter(|&&g| g == Group::Seen).count(),
        n_unseen_samples: groups.iter().filter(|&&g| g == Group::Unseen).count(),
        n_unknown_samples: unknown.len(),
        histogram: histogram(&scores, groups, bins)?,
        seed: meta.seed,
        config_hash: meta.config_hash.clone(),
        sub_seeds: meta.sub_seeds.clone(),
        version: meta.version.clone(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-sample CSV: `sample_id,score,group,predicted_class`.
pub fn write_scores_csv(path: impl AsRef<Path>, scored: &[ScoredPrediction], groups: &[Group]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "score", "group", "predicted_class"])?;
    for (i, (s, g)) in scored.iter().zip(groups).enumerate() {
        w.write_record([i.to_string(), s.score.to_string(), g.as_str().to_string(), s.predicted.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a score CSV back as `(score, group, predicted_class)` rows.
pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, Group, usize)>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "score file not found")));
    }
    let mut r = csv::Reader::from_path(path)?;
    let bad = |m: String| Error::Dataset {
        field: path.display().to_string(),
        message: m,
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let score: f64 = rec.get(1).unwrap_or("").parse().map_err(|_| bad("bad score".into()))?;
        let group = match rec.get(2).unwrap_or("") {
            "seen" => Group::Seen,
            "unseen" => Group::Unseen,
            "unknown" => Group::Unknown,
            g => return Err(bad(format!("unknown group `{g}`"))),
        };
        let pred: usize = rec.get(3).unwrap_or("").parse().map_err(|_| bad("bad predicted_class".into()))?;
        out.push((score, group, pred));
    }
    Ok(out)
}

pub fn write_histogram_json(path: impl AsRef<Path>, h: &Histogram) -> Result<()> {
    write_text(path.as_ref(), &serde_json::to_string_pretty(h)?)
}

pub fn write_report_json(path: impl AsRef<Path>, report: &impl Serialize) -> Result<()> {
    write_text(path.as_ref(), &serde_json::to_string_pretty(report)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStd { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        MeanStd { mean, std: var.sqrt() }
    }
}

/// Mean ± sample standard deviation across runs of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub method: String,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub acc: MeanStd,
    pub auroc: MeanStd,
    pub fpr95: MeanStd,
    pub openness: f64,
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<AggregateReport> {
    let first = reports.first().ok_or_else(|| Error::Empty("report list".into()))?;
    let pick = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    Ok(AggregateReport {
        method: first.method.clone(),
        runs: reports.len(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        acc: MeanStd::of(&pick(|r| r.acc)),
        auroc: MeanStd::of(&pick(|r| r.auroc)),
        fpr95: MeanStd::of(&pick(|r| r.fpr95)),
        openness: first.openness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<ScoredPrediction>, Vec<Label>, Vec<Group>) {
        let scored = vec![
            ScoredPrediction { score: 0.2, predicted: 3, logits: vec![] },
            ScoredPrediction { score: 0.9, predicted: 3, logits: vec![] },
        ];
        (scored, vec![Label::Class(3), Label::Unknown], vec![Group::Unseen, Group::Unknown])
    }

    fn meta() -> RunMeta {
        RunMeta {
            method: "toy".into(),
            n_known_classes: 1,
            n_unknown_classes: 1,
            ..Default::default()
        }
    }

    #[test]
    fn two_sample_csv() {
        let dir = tempfile::tempdir().unwrap();
        let (s, _, g) = toy();
        let p = dir.path().join("scores.csv");
        write_scores_csv(&p, &s, &g).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "sample_id,score,group,predicted_class");
        assert_eq!(read_scores_csv(&p).unwrap().len(), 2);
    }

    #[test]
    fn report_fields() {
        let (s, t, g) = toy();
        let r = make_report(&s, &t, &g, 4, &meta()).unwrap();
        assert_eq!((r.acc, r.auroc, r.fpr95), (1.0, 1.0, 0.0));
        assert!((r.openness - (1.0 - 0.5f64.sqrt())).abs() < 1e-12);
        let total: u64 = r.histogram.counts.values().flatten().sum();
        assert_eq!(total, 2);
    }

    #[test]
    fn missing_group_is_named() {
        let (s, _, g) = toy();
        let err = make_report(&s, &[Label::Class(3), Label::Class(3)], &g, 4, &meta()).unwrap_err();
        assert!(err.to_string().contains("unknown"), "{err}");
    }

    #[test]
    fn histogram_counts_match_group_sizes() {
        let scores: Vec<f64> = (0..57).map(|i| (i as f64 * 0.37).sin()).collect();
        let groups: Vec<Group> = (0..57).map(|i| if i % 3 == 0 { Group::Unknown } else { Group::Unseen }).collect();
        let h = histogram(&scores, &groups, 7).unwrap();
        assert_eq!(h.edges.len(), 8);
        assert_eq!(h.counts["unknown"].iter().sum::<u64>(), 19);
        assert_eq!(h.counts["unseen"].iter().sum::<u64>(), 38);
    }

    #[test]
    fn aggregate_of_identical_runs_has_zero_spread() {
        let (s, t, g) = toy();
        let r = make_report(&s, &t, &g, 4, &meta()).unwrap();
        let agg = aggregate(&[r.clone(), r.clone(), r]).unwrap();
        assert_eq!(agg.auroc.std, 0.0);
        assert_eq!(agg.acc.mean, 1.0);
    }
}
