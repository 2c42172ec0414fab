//! Zero-shot open-set recognition.
//!
//! A model trained under the zero-shot setting has to classify test samples
//! of *unseen* classes (described only by attribute vectors at train time)
//! while rejecting samples of *unknown* classes, for which it has neither
//! samples nor attributes. This crate implements the full pipeline:
//!
//! 1. [`zslgen`]: a conditional feature generator `G(a, ε)` trained on seen
//!    classes, used to synthesize unseen-class features and train a closed-set
//!    classifier.
//! 2. [`ase`]: adversarial semantic embeddings for the unknown classes. Each
//!    embedding stays close to an unseen-class anchor in attribute space while
//!    its generated feature prototype is pushed towards high free energy under
//!    the frozen closed-set classifier. Features generated from the learned
//!    embeddings train a `K+1` open-set classifier whose extra softmax output
//!    is the open score.
//! 3. [`baselines`]: the "combine a ZSL model with an OSR scorer" baselines
//!    (MSP, MaxLogit, Energy, ODIN, LogitNorm).
//! 4. [`evalkit`]: AUROC, FPR at a TPR target, per-class accuracy, openness,
//!    and report export.
//!
//! [`ndcore`] provides the small dense-tensor engine with reverse-mode
//! gradients everything above is trained with; [`datasets`] the on-disk
//! formats, splits and the synthetic oracle world; [`pipeline`] the staged
//! command runner behind the `zsosr` binary.
//!
//! ```no_run
//! use zsosr::pipeline::{run_experiment, RunConfig};
//!
//! # fn main() -> zsosr::Result<()> {
//! let cfg = RunConfig::desk_scale();
//! let outcome = run_experiment(&cfg, 7)?;
//! let ase = outcome.report("ase").expect("ase is always reported");
//! println!("ASE AUROC = {:.3}", ase.auroc);
//! # Ok(())
//! # }
//! ```

pub mod ase;
pub mod baselines;
pub mod datasets;
pub mod error;
pub mod evalkit;
pub mod ndcore;
pub mod pipeline;
pub mod rng;
pub mod zslgen;

pub use error::{Error, Result};
