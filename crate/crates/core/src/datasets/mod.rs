//! Dataset containers, on-disk formats, splits, and the synthetic world.

mod bundle;
mod canonical;
mod matrix_file;
mod split;
mod synth;

pub use bundle::{load_bundle, save_bundle, BundleSummary, DatasetBundle, Manifest, ManifestSplits, SplitSpec, Transforms};
pub use canonical::{canonical_names, canonical_split};
pub use matrix_file::{
    decode_matrix, decode_u32, encode_matrix, encode_u32, read_any_labels, read_any_matrix, read_csv_matrix,
    read_labels, read_matrix, write_labels, write_matrix, Dtype, U32Matrix, HEADER_LEN, MAGIC, VERSION,
};
pub use split::{
    training_view, Group, Label, SplitKind, SplitMode, SplitView, TestPool, TrainingView, GENERALIZED_TRAIN_FRACTION,
};
pub use synth::{synth_world, Oracle, SynthConfig, SyntheticWorld};
