//! Streaming anomaly detection with a frame-prediction scorer and an
//! expectation-maximization admission filter.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] — dense tensors, a reverse-mode tape, optimizers and a
//!   finite-difference gradient checker.
//! * [`cad`] — the flow generator, differentiable warping, reconstruction and
//!   adversarial losses, and the coupled training step.
//! * [`em_filter`] — the admission gate deciding which samples may train the
//!   scorer.
//! * [`mixer`] — builds evaluation streams with a controlled anomaly portion.
//! * [`metrics`] — ROC, AUC, EER and replicate aggregation.
//! * [`io`] — IDX files, frame datasets, score CSVs, manifests, checkpoints
//!   and SVG reports.
//! * [`runner`] — the `Scorer` abstraction and the end-to-end experiments.

pub mod cad;
pub mod em_filter;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mixer;
pub mod runner;
pub mod tensor;

pub use error::{Error, Result};
