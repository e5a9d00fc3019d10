pub mod config;
pub mod embed;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod inference;
pub mod io;
pub mod model;
pub mod oracle;
pub mod weights;

pub use error::{Error, Result};
