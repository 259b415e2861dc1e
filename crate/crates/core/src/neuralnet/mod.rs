//! Small recurrent network core: GRU and dense layers, dropout, batch
//! normalisation, hand-written reverse-mode gradients, and Adam.

mod adam;
mod batchnorm;
mod dense;
mod dropout;
mod gru;
mod qnet;
mod tensor;

pub use adam::Adam;
pub use batchnorm::{BatchNorm, BatchNormCache, BN_EPSILON, BN_MOMENTUM};
pub use dense::Dense;
pub use dropout::{dropout, dropout_mask};
pub use gru::{GruLayer, GruStepCache};
pub use qnet::{QNetwork, QSample};
pub use tensor::{sigmoid, Parameters, Tensor};
