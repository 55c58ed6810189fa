//! HieraEdgeNet: an edge-enhanced multi-scale object detector built on a
//! small double-precision autodiff tensor library.

pub mod assign;
pub mod bbox;
pub mod blocks;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod detect;
pub mod edge;
pub mod error;
pub mod eval;
pub mod check;
pub mod gradcam;
pub mod gradcheck;
pub mod head;
pub mod infer;
pub mod loss;
pub mod model;
pub mod omni;
pub mod params;
pub mod tensor;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
pub use tensor::Tensor;
