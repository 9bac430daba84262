//! Stream analytics for social-media posts: credibility scoring (closed-form and neural),
//! sentiment with trigger overrides, near-duplicate grouping, and geographic aggregation.

pub mod classifier;
pub mod config;
pub mod error;
pub mod geostats;
pub mod model;
pub mod pipeline;
pub mod scoring;
pub mod sentiment;
pub mod simtext;
pub mod text;

pub use error::{Error, Result};
