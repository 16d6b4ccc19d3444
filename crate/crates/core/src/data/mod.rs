pub mod features;
pub mod interactions;

pub use features::{
    build_categorical_table, build_text_table, compute_input_length, hash_text, pad_or_truncate,
    CategoricalVocab, Entity, FeatureKind, FeatureSpec, FeatureStore, FeatureTable,
};
pub use interactions::{
    leave_one_out_split, load_interactions, IdRemap, Interaction, InteractionLog, LogFormat,
    SplitDataset,
};
