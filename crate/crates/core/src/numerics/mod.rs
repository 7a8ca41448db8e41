//! Dense f64 tensors, reverse-mode autodiff, Adam, and a finite-difference
//! gradient checker.

mod archive;
mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use archive::{
    decode_archive, encode_archive, load_archive, save_archive, Manifest, ManifestEntry, ARCHIVE_VERSION,
};
pub use gradcheck::{grad_check, grad_check_subset, GradCheckReport, DEFAULT_EPSILON};
pub use graph::{Graph, Var, MASK_FILL};
pub use optim::{Adam, AdamConfig};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::{cross_entropy, matmul, softmax, Tensor};
