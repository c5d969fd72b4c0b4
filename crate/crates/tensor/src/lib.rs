//! Small dense-tensor engine with reverse-mode differentiation.
//!
//! Values are `f64` throughout. A [`Tape`] records forward ops on immutable
//! [`Tensor`]s and replays them backwards to produce [`Gradients`]; [`Adam`]
//! consumes the gradients by parameter name. One tape belongs to one thread;
//! tensors themselves are cheap to clone and `Send + Sync`.
//!
//! ```
//! use parcel_tensor::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.param("w", &Tensor::vector(vec![1.0, -2.0]).unwrap());
//! let sq = tape.mul(w, w).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap().data(), &[2.0, -4.0]);
//! ```

pub mod checkpoint;
mod error;
pub mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use optim::{clip_global_norm, Adam};
pub use params::{normal, xavier_uniform, ParamStore};
pub use tape::{sigmoid, softplus, Gradients, Tape, Var};
pub use tensor::Tensor;
