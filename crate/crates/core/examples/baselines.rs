//! Post-hoc open-set scorers on top of the closed classifier, plus
//! LogitNorm training, compared by AUROC.
//!
//!     cargo run --release --example baselines

use zsosr::baselines::{run_baseline, train_logitnorm_classifier, BaselineKind, BaselineSpec, ODIN_EPS_GRID};
use zsosr::datasets::{synth_world, Group, SplitMode, SynthConfig};
use zsosr::evalkit::auroc;
use zsosr::zslgen::{synthesize_features, train_closed_classifier, train_generator, ClassifierConfig, GeneratorConfig};

fn main() -> zsosr::Result<()> {
    let world = synth_world(&SynthConfig::default(), 2)?;
    let split = world.bundle.make_split(&SplitMode::ZsOsr, 2)?;
    let view = split.training();
    let g = train_generator(view, &GeneratorConfig { hidden: 128, seed: 2, ..Default::default() })?.generator;
    let unseen = synthesize_features(&g, view.unseen_ids(), view.unseen_attributes(), 300, 2)?;
    let ccfg = ClassifierConfig { epochs: 60, lr: 0.01, seed: 2, ..Default::default() };
    let closed = train_closed_classifier(&unseen, view.unseen_ids(), &ccfg)?.classifier;

    let pool = split.test_pool();
    let split_scores = |s: &[zsosr::evalkit::ScoredPrediction]| {
        let pick = |g: Group| -> Vec<f64> { s.iter().zip(&pool.groups).filter(|(_, &x)| x == g).map(|(p, _)| p.score).collect() };
        auroc(&pick(Group::Unseen), &pick(Group::Unknown))
    };
    for kind in [BaselineKind::Msp, BaselineKind::MaxLogit, BaselineKind::Energy] {
        let scored = run_baseline(&BaselineSpec::new(kind), &closed, &pool.features)?;
        println!("{kind:<10} auroc {:.3}", split_scores(&scored)?);
    }
    for eps in ODIN_EPS_GRID {
        let spec = BaselineSpec { odin_eps: eps, ..BaselineSpec::new(BaselineKind::Odin) };
        let scored = run_baseline(&spec, &closed, &pool.features)?;
        println!("odin eps {eps:<6} auroc {:.3}", split_scores(&scored)?);
    }
    let spec = BaselineSpec::new(BaselineKind::LogitNorm);
    let ln = train_logitnorm_classifier(&unseen, view.unseen_ids(), spec.tau, &ccfg)?.classifier;
    println!("logitnorm  auroc {:.3}", split_scores(&run_baseline(&spec, &ln, &pool.features)?)?);
    Ok(())
}
