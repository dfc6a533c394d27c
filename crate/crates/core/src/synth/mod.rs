//! Procedural face identities, splice-style forgeries and corpus generation.

pub mod corpus;
pub mod forge;
pub mod identity;

pub use corpus::{
    build_corpus, generate_corpus, CorpusManifest, ForgeryRecord, GeneratorConfig, Label, SPLIT_TEST_CROSS,
    SPLIT_TEST_IN, SPLIT_TRAIN,
};
pub use forge::{forge, forge_frame, FaceRegion, ForgeryMethod};
pub use identity::{render_frame, render_identity, FrameJitter, IdentitySpec};
