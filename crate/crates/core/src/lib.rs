//! Referential communication game between human and AI partners: game engine,
//! agent participants, transcripts, corpus tools and grounding metrics.
//!
//! Metric code is generic over [`scalar::Real`]; the aliases below fix it to `f64`.

pub mod corpus;
pub mod game;
pub mod metrics;
pub mod participants;
pub mod scalar;
pub mod sim;
pub mod synthetic;
pub mod transcript;

pub use scalar::Real;

pub type MetricsRow = metrics::MetricsRow<f64>;
pub type TrendFit = metrics::TrendFit<f64>;
pub type OlsFit = metrics::OlsFit<f64>;
pub type Aggregates = metrics::Aggregates<f64>;
pub type CellStats = metrics::CellStats<f64>;
pub type EntrainmentRow = metrics::EntrainmentRow<f64>;
pub type EffortRow = metrics::EffortRow<f64>;
pub type RougeScore = metrics::RougeScore<f64>;
