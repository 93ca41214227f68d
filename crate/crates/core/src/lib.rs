//! Chain-of-image-generation toolkit: planning, stepwise execution with
//! human intervention, a content-addressed run store, evaluation metrics and
//! the entity-count benchmark.

pub mod artifact;
pub mod backends;
pub mod bench;
pub mod canonical;
pub mod caption;
pub mod cli;
pub mod engine;
pub mod eval;
pub mod executor;
pub mod planner;
pub mod raster;
pub mod runstore;
pub mod service;
