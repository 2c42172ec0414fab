//! Threshold-free metrics, openness and report export.

use zsosr::datasets::{Group, Label};
use zsosr::evalkit::{auroc, fpr_at_tpr, make_report, openness, roc_curve, auc_trapezoid, PositiveClass, RunMeta, ScoredPrediction};

fn main() -> zsosr::Result<()> {
    let known = [0.1, 0.6];
    let unknown = [0.4, 0.9];
    println!("auroc {:.3}, trapezoid {:.3}", auroc(&known, &unknown)?, auc_trapezoid(&roc_curve(&known, &unknown)?));
    println!(
        "fpr95 unknown-positive {:.3}, known-positive {:.3}",
        fpr_at_tpr(&known, &unknown, 0.95, PositiveClass::Unknown)?,
        fpr_at_tpr(&known, &unknown, 0.95, PositiveClass::Known)?
    );
    for k in [10, 20, 30, 40] {
        println!("openness(10, {k}) = {:.1}%", 100.0 * openness(10, k)?);
    }

    let scored: Vec<ScoredPrediction> = [(0.1, 0), (0.6, 1), (0.4, 1), (0.9, 0)]
        .into_iter()
        .map(|(score, predicted)| ScoredPrediction { score, predicted, logits: vec![] })
        .collect();
    let truth = [Label::Class(0), Label::Class(1), Label::Unknown, Label::Unknown];
    let groups = [Group::Unseen, Group::Unseen, Group::Unknown, Group::Unknown];
    let meta = RunMeta { method: "toy".into(), n_known_classes: 2, n_unknown_classes: 1, ..Default::default() };
    let report = make_report(&scored, &truth, &groups, 4, &meta)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
