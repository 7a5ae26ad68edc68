pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, Tensor, Var};
