//! Relevance-feedback retrieval over precomputed feature vectors.
//!
//! The crate is organised around the life of a search:
//!
//! - [`data`] loads item manifests and feature matrices and splits them into
//!   test / validation / retrieval partitions.
//! - [`pca`] reduces feature dimensionality before retrieval.
//! - [`retrieval`] ranks items by weighted L1 distance with exclusions.
//! - [`session`] drives one relevance-feedback session: the initial
//!   retrieval, feedback ingestion, feature re-weighting and the shrinking
//!   batch schedule.
//! - [`groups`] remembers which items users confirmed as relevant together
//!   and uses that memory to pre-fill later batches.
//! - [`metrics`] computes precision, retrieval accuracy and the RF iteration
//!   number.
//! - [`export`] turns logged feedback into similar/dissimilar pair datasets
//!   and multi-class group datasets for external encoder training.
//! - [`sim`] provides a simulated user, a synthetic dataset generator and the
//!   experiment drivers.
//!
//! ```
//! use refine_core::session::{Query, Session, SessionConfig};
//! use refine_core::sim::{generate_synthetic, oracle_feedback, SyntheticConfig};
//!
//! let db = generate_synthetic(&SyntheticConfig {
//!     labels: 3,
//!     per_label: 30,
//!     dim: 8,
//!     separation: 4.0,
//!     noise: 1.0,
//!     seed: 7,
//! })
//! .unwrap();
//! let query = db.items()[0].id.clone();
//! let label = db.items()[0].label.clone();
//!
//! let mut session = Session::start(Query::Item(query), &db, SessionConfig::default()).unwrap();
//! while !session.is_complete() {
//!     let shown = session.current_batch().ids();
//!     let relevant = oracle_feedback(&shown, &label, &db).unwrap();
//!     session.submit_feedback(&relevant, &db, None).unwrap();
//! }
//! assert!(session.relevant().len() <= 20);
//! ```

pub mod data;
pub mod error;
pub mod export;
pub mod groups;
pub mod metrics;
pub mod pca;
pub mod retrieval;
mod rng;
pub mod session;
pub mod sim;

pub use data::{Dataset, DatasetSplit, FeatureMatrix, ItemRecord};
pub use error::{Error, Result};
pub use groups::GroupStore;
pub use retrieval::{RankedList, WeightVector};
pub use session::{Query, Session, SessionConfig, WeightMode};
