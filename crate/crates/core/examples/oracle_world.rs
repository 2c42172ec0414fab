//! Builds the synthetic zero-shot world, writes it as a dataset bundle and
//! reads it back.

use zsosr::datasets::{load_bundle, save_bundle, synth_world, SplitMode, SynthConfig};

fn main() -> zsosr::Result<()> {
    let world = synth_world(&SynthConfig::default(), 7)?;
    let b = &world.bundle;
    println!("{:?}", b.summary());

    let split = b.make_split(&SplitMode::ZsOsr, 7)?;
    let view = split.training();
    println!(
        "training view: {} seen rows, {} seen + {} unseen attribute rows",
        view.features().rows(),
        view.seen_ids().len(),
        view.unseen_ids().len()
    );
    println!("test pool: {} rows ({} unknown)", split.test_pool().len(), split.test_pool().count(zsosr::datasets::Group::Unknown));

    let dir = std::env::temp_dir().join("zsosr-oracle-world");
    let manifest = save_bundle(&dir, b)?;
    let back = load_bundle(&manifest)?;
    assert_eq!(&back, b);
    println!("bundle round-trips through {}", manifest.display());

    let mean = world.class_mean(split.unknown[0]);
    println!("oracle mean of unknown class {}: first dims {:?}", split.unknown[0], &mean[..4]);
    Ok(())
}
