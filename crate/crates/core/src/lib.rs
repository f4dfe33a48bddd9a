pub mod corpus;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod optim;
pub mod representation;
pub mod retrieval;
pub mod synthetic;
pub mod tfidf;
pub mod trainer;

pub use error::{Error, Result};
