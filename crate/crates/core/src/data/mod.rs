//! Embedding sources: the theory world, the on-disk dataset format,
//! synthesized federations and benchmark-shaped data, and partitioning.

pub mod federation;
pub mod format;
pub mod partition;
pub mod synthetic;
pub mod world;

pub use federation::{load_federation, synthesize_federation, FederationManifest};
pub use format::{load_dataset, save_dataset, EmbeddingDataset, Manifest};
pub use partition::{partition, ClientShard};
pub use synthetic::{synthesize, SyntheticSpec};
pub use world::{sample_theory, TheoryHead, TheoryWorld, WorldSpec};
