//! Minimal dense reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass over [`Matrix`]
//! values; [`Tape::backward`] sweeps it in reverse and returns the gradient of
//! a scalar loss with respect to each trainable leaf. Only what the taxonomy
//! model needs is provided: dense products, elementwise maps, row gathers and
//! segment reductions for message passing over batched ego networks.
//!
//! ```
//! use taxo_expand::diff::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Matrix::from_rows(&[[1.0, 2.0]]).unwrap());
//! let x = tape.constant(Matrix::column(vec![3.0, 4.0]));
//! let y = tape.matmul(w, x).unwrap();
//! assert_eq!(tape.value(y).item(), 11.0);
//!
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(w).unwrap().as_slice(), &[3.0, 4.0]);
//! ```

pub mod gradcheck;
mod matrix;
mod tape;

pub use matrix::Matrix;
pub(crate) use tape::{stable_sigmoid, stable_softplus};
pub use tape::{Gradients, Tape, Var};
