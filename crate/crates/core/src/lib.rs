pub mod config;
pub mod decoder;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod scene;
pub mod text;
pub mod training;

pub use error::{Result, SsgnError};
