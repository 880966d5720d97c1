//! Phenotype-driven knowledge graph expansion for population data.
//!
//! The crate turns a table of population states into phenotypes, learns
//! per-phenotype causal and probabilistic structure, ranks hypotheses by a
//! novelty-plausibility score, grounds them in retrieved literature, and
//! grows a typed knowledge graph from the Pareto-optimal claims.
//!
//! Stages, in pipeline order:
//!
//! | module         | role                                                    |
//! |----------------|---------------------------------------------------------|
//! | [`ingest`]     | CSV loading, label encoding, standardization, state graphs |
//! | [`embed`]      | propagation encoder and mean readout                    |
//! | [`phenotype`]  | spectral clustering, soft assignment, standard-phenotype mixtures |
//! | [`causal`]     | NOTEARS structure learning on each phenotype            |
//! | [`probnet`]    | discrete Bayesian networks and exact inference          |
//! | [`hypothesis`] | PICO hypotheses and novelty-plausibility scoring        |
//! | [`evidence`]   | literature retrieval, claim extraction, claim scoring   |
//! | [`kgraph`]     | Pareto selection and knowledge graph persistence        |
//! | [`online`]     | matching of new states, anomaly buffer, promotion       |
//! | [`pipeline`]   | configuration, stage orchestration, reports             |

pub mod causal;
pub mod embed;
pub mod error;
pub mod evidence;
pub mod hypothesis;
pub mod ingest;
pub mod kgraph;
pub mod linalg;
pub mod online;
pub mod phenotype;
pub mod pipeline;
pub mod probnet;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
