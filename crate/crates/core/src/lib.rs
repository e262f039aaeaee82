//! Syntactic anomaly probing toolkit.
//!
//! Generates word-content-controlled anomaly datasets from constituency
//! parses, trains shallow probes over sentence-embedding tables, and runs
//! detection, transfer, false-positive and content-word ablation analyses.

pub mod cli;
pub mod dataset;
pub mod embed;
pub mod experiments;
pub mod perturb;
pub mod probe;
pub mod treebank;

pub use dataset::{Label, LabeledExample, ProbingDataset, Split, SplitRatios};
pub use embed::{ContentWordPolicy, EmbeddingTable, WordVectorTable};
pub use perturb::{PerturbationKind, PerturbationRecord};
pub use treebank::{ConstituencyTree, NodePath, Token};
