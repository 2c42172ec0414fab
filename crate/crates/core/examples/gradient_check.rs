//! Compares analytic gradients with central finite differences for every
//! loss kind, including the input gradient.

use zsosr::ndcore::{finite_diff_check, Activation, LossSpec, Mlp, Targets};
use zsosr::rng::{gaussian_matrix, seeded};

fn main() -> zsosr::Result<()> {
    let net = Mlp::new(&[4, 8, 3], &[Activation::LeakyRelu, Activation::Identity], 1)?;
    let batch = gaussian_matrix(&mut seeded(2), 5, 4, 1.0);
    let classes = [0, 2, 1, 1, 0];
    let values = gaussian_matrix(&mut seeded(3), 5, 3, 1.0);
    let weights = [1.0, -1.0, 0.5, 2.0, -0.3];
    let one_col = Mlp::new(&[4, 6, 1], &[Activation::LeakyRelu, Activation::Identity], 4)?;
    let cases: Vec<(&str, &Mlp, Targets, LossSpec)> = vec![
        ("cross-entropy", &net, Targets::Classes(&classes), LossSpec::cross_entropy()),
        ("squared", &net, Targets::Values(&values), LossSpec::MeanSquared),
        ("free-energy", &net, Targets::None, LossSpec::FreeEnergy { temperature: 1.0 }),
        ("critic-difference", &one_col, Targets::RowWeights(&weights), LossSpec::CriticDifference),
        ("logitnorm", &net, Targets::Classes(&classes), LossSpec::NormalizedLogitCe { tau: 0.5 }),
        (
            "composite",
            &net,
            Targets::Classes(&classes),
            LossSpec::Composite {
                terms: vec![(1.0, LossSpec::cross_entropy()), (0.3, LossSpec::FreeEnergy { temperature: 2.0 })],
            },
        ),
    ];
    for (name, model, targets, spec) in cases {
        let err = finite_diff_check(model, &batch, targets, &spec, 1e-4, true)?;
        println!("{name:<18} max relative error {err:.2e}");
    }
    Ok(())
}
