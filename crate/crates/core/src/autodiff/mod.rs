//! Dense tensors, sparse matrices and a reverse-mode tape.

mod gradcheck;
mod sparse;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use sparse::{SparseMatrix, SparsePattern};
pub use tape::{Activation, Elementwise, Gradients, Reduce, SparseVar, Tape, Var};
pub use tensor::Tensor;
