//! Reconstruction of single training images from the gradients of shallow
//! CNN classifiers, and a rank-deficiency audit of how much an architecture
//! leaks.
//!
//! The pieces, bottom up:
//!
//! * [`net`]: forward/backward engine, dense (circulant) forms of conv layers,
//!   label recovery from the last layer's gradient.
//! * [`linsys`]: per-layer systems `u·x = v` built from the weight and
//!   gradient constraints, solved in the minimum-norm least-squares sense.
//! * [`attack`]: closed-form FC inversion, the layer-wise least-squares
//!   attack, the hybrid attack that corrects each layer by gradient matching,
//!   and the DLG / cosine+TV gradient-matching baselines.
//! * [`metrics`]: MSE/PSNR and the architecture security score.
//! * [`data`]: CIFAR-10 binary batches, image files, report files.
//! * [`harness`]: architecture catalog, experiment configs and runs,
//!   pre-training.

pub mod attack;
pub mod data;
pub mod error;
pub mod harness;
pub mod linsys;
pub mod metrics;
pub mod net;

pub use error::{Error, Result};
