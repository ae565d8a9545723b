pub mod ablation;
pub mod checkpoint;
pub mod chunker;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod synthetic;
pub mod tensor;
pub mod tensor_file;
pub mod training;
pub mod workflow;

pub use error::{Error, Result};
