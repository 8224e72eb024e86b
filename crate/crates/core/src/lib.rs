pub mod baseline;
pub mod data;
pub mod error;
pub mod kernel;
pub mod projection;
pub mod ssnal;
pub mod svm;
pub mod vecops;

pub use error::{Error, Result};
