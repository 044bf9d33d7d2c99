//! Spatiotemporal regression of road-link congestion.
//!
//! The speed of a dependent (outbound) link is modelled as a linear function
//! of its inbound neighbours and of binary temporal indicators extracted from
//! the timestamps. The crate covers the whole batch pipeline:
//!
//! - [`ingestion`]: CSV speed series and GeoJSON routes into a [`Dataset`],
//!   aligned into a [`DesignMatrix`];
//! - [`features`]: Peakhour and AM indicators;
//! - [`regression`]: OLS, elastic net, conjugate Bayesian and baseline fits,
//!   point and Student-t predictions, model files;
//! - [`events`]: time-windowed input overrides for what-if predictions;
//! - [`evaluation`]: splits, MAE/RMSE and the four-solver comparison.

pub mod evaluation;
pub mod events;
pub mod features;
pub mod ingestion;
pub mod regression;
pub mod synthetic;
pub mod types;

pub use ingestion::{align, Dataset, Manifest};
pub use types::{
    DesignMatrix, EventOverride, FittedModel, Inputs, Solver, SpatialFeature, TemporalDefinition,
    TemporalFeature, TemporalRule, Timestamp,
};
