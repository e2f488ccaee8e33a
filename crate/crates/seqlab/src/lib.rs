//! seqlab: sequential hypothesis tests and quickest changepoint detection.
//!
//! The crate covers the classical sequential-analysis toolbox built around
//! likelihood-ratio processes:
//!
//! - [`model`] — simple-hypothesis families and one-parameter exponential
//!   families, LLR paths, information numbers, clamped MLEs.
//! - [`renewal`] — boundary-crossing overshoot machinery: Lorden's
//!   worst-case overshoot bound, the renewal series for the L-numbers, and
//!   the zeta correction factors they induce.
//! - [`sprt`] — Wald's SPRT with overshoot-aware operating-characteristic
//!   bounds.
//! - [`msprt`] — the accepting matrix SPRT for N+1 hypotheses and the
//!   weighted multistream generalized sequential likelihood ratio test.
//! - [`kiefer_weiss`] — the 2-SPRT, the modified accepting MSPRT against an
//!   intermediate measure, triangular continuation regions, and minimax
//!   tuning points.
//! - [`gslrt`] — composite-hypothesis tests for exponential families:
//!   Schwarz's test, Kiefer-Sacks posterior-risk stopping, and the
//!   overshoot-optimized adaptive-boundary GSLRT.
//! - [`multistage`] — asymptotically efficient 2- and 3-stage designs.
//! - [`changepoint`] — CUSUM, GLR CUSUM, Shiryaev-Roberts, the
//!   repeated-test construction, and detection-delay reporting.
//! - [`oracle`] — exact optimal truncated tests by backward induction and
//!   exact operating characteristics by path enumeration.
//! - [`harness`] — deterministic Monte Carlo engine and threshold
//!   calibration.
//!
//! The `seqlab` binary exposes each subsystem as a CLI subcommand driven by
//! a TOML config; `examples/` holds one runnable walkthrough per major
//! capability.

pub mod error;
pub mod harness;
pub mod kiefer_weiss;
pub mod model;
pub mod msprt;
pub mod numeric;
pub mod oracle;
pub mod renewal;
pub mod sprt;

pub use error::{Error, Result};
pub use model::{Density, ExpFamily1D, ExpFamilyKind, LlrPath, ObsSource, SimpleModel};
pub use sprt::{SprtConfig, TestOutcome};
