//! Numerical toolkit for tripartite quantum states: Petz recovery, quantum
//! Markov chains, continuity-bound checkers and simulated tomography
//! protocols with seeded, reproducible campaigns.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuity;
pub mod error;
pub mod io;
pub mod linalg;
pub mod petz;
pub mod protocols;
pub mod report;
pub mod states;

pub use continuity::{BoundReport, BoundVariant};
pub use error::{QmcError, Result};
pub use linalg::{ComplexMatrix, SchattenP, SystemLayout};
pub use petz::{PetzReconstruction, QuantumChannel};
pub use protocols::{Decision, ProtocolOptions, ProtocolTranscript, SampleBudget};
pub use report::{run_campaign, CampaignConfig, CampaignSummary, Command};
pub use states::{DensityOperator, MarkovStructure, QmcSpec};
