//! Federated test-time adaptation over embedding streams.
//!
//! Each client keeps a bounded per-class memory of its most confident test
//! embeddings, shares entropy-weighted class prototypes through a server,
//! retrieves the most similar prototypes of its peers, and classifies with an
//! attention read-out over the merged memory added to the zero-shot logits.
//!
//! The numeric layers are generic over [`Scalar`]; the aliases below fix
//! them to `f64`.

pub mod adapt;
pub mod data;
pub mod error;
pub mod math;
pub mod memory;
pub mod scalar;
pub mod seeds;
pub mod server;
pub mod simulate;
pub mod theory;
pub mod wire;

pub use adapt::{CommPeriod, LatteParams, Policy, Preset};
pub use error::{Error, Result};
pub use memory::Space;
pub use scalar::Scalar;

pub type Embedding = math::Embedding<f64>;
pub type Logits = math::Logits<f64>;
pub type TextClassifier = math::TextClassifier<f64>;
pub type LocalMemory = memory::LocalMemory<f64>;
pub type ExternalMemory = memory::ExternalMemory<f64>;
pub type GlobalMemory = server::GlobalMemory<f64>;
pub type Client<H = TextClassifier> = adapt::Client<f64, H>;
pub type PredictionTrace = adapt::PredictionTrace<f64>;
