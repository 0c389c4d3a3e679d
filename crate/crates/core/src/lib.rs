//! Configuration tuning for a knowledge-graph QA pipeline.
//!
//! A trial rebuilds the graph from the training passages under one
//! [`space::PipelineConfig`], answers the training questions and scores
//! them; a Tree-structured Parzen Estimator proposes the next config.

pub mod corpus;
pub mod evaluation;
pub mod gateway;
pub mod ingest;
pub mod optimizer;
pub mod retrieval;
pub mod rng;
pub mod runner;
pub mod space;
pub mod stores;
pub mod text;
