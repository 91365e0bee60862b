pub mod error;
pub mod evaluation;
pub mod hydrodata;
pub mod models;
pub mod pipeline;
pub mod training;

pub use error::{Error, Result};
