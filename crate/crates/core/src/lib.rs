//! Global multi-series demand forecasting: panel ingestion, fake-zero repair,
//! spike smoothing, seasonality clustering, feature assembly, boosted-tree and
//! baseline models, evaluation and synthetic data.

pub mod baselines;
pub mod config;
mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod panel;
pub mod pipeline;
pub mod preprocess;
pub mod seasonal;
pub mod synth;

pub use config::{Encoding, ModelKind, RunConfig};
pub use error::{Error, Result};
pub use panel::{
    Catalog, CatalogEntry, CategoryId, ProductId, ProductSeries, SalesPanel, WeekIndex,
};
