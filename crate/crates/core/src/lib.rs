//! Topology-aware image segmentation toolkit.
//!
//! * [`grid`]: grayscale/binary images and PNG/PGM IO
//! * [`persistence`]: cubical persistent homology and Betti numbers
//! * [`loss`]: the persistence-diagram loss, its gradient, and BCE
//! * [`preprocess`]: topological input-image processing
//! * [`metrics`]: pixel confusion metrics and Betti error
//! * [`train`]: a small convolutional segmenter trained with the combined loss

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod numfmt;
pub mod persistence;
pub mod preprocess;
pub mod train;

pub use error::{Error, Result};
pub use grid::{BinaryImage, GrayImage, Pixel};
pub use persistence::{compute_persistence, FiltrationKind, PersistenceDiagram, PersistencePoint};
