pub mod autodiff;
pub mod error;
pub mod graph;
pub mod layers;
pub mod model;
pub mod pool;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
