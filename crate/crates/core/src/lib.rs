//! Neuro-symbolic question answering over a knowledge base.
//!
//! Questions annotated with KB artifacts are translated by a copy-attention
//! sequence policy into programs of a small action language, executed against
//! an in-memory triple store, and the policy is trained from answers alone.

pub mod answer;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod dsl;
pub mod eval;
pub mod executor;
pub mod kb;
pub mod memory;
pub mod policy;
pub mod reward;
pub mod search;
pub mod synth;
pub mod trainer;

pub use answer::{Answer, AnswerSpec};
pub use dsl::{ActionSequence, MaskTable, MaskToken, Operator};
pub use executor::{execute, ExecutorConfig};
pub use kb::KnowledgeBase;
