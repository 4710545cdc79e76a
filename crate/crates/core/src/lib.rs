//! Coupled control systems.
//!
//! Two control systems that share a set of *coupled states* `z` and are glued
//! together by the algebraic constraint `z_1 - z_2 = 0`, enforced through
//! Lagrange-multiplier-like *coupling inputs* `lambda`. The crate provides
//!
//! * [`model`]: the two-vertex coupled control system and its raw / closed-loop
//!   vector fields,
//! * [`reduction`]: the coupling relation that eliminates `lambda` and the
//!   isolated control subsystem obtained by restricting the other vertex to its
//!   zero dynamics,
//! * [`simulate`]: fixed-step integration of isolated and full systems and the
//!   reconstruction of full-order solutions from isolated ones,
//! * [`mechanical`]: conversion of planar Lagrangian models (with virtual
//!   constraint outputs) into coupled control systems, plus bundled examples,
//! * [`optimize`]: direct-collocation transcription of the isolated subsystem
//!   and a dense augmented-Lagrangian NLP solver for periodic orbits,
//! * [`cli`]: the configuration-driven front end used by the `ccs` binary.

// `!(a > b)` is used on purpose to reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fd;
pub mod linalg;
pub mod mechanical;
pub mod model;
pub mod optimize;
pub mod reduction;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{CcsModel, Dims, FullState, PerVertex, SubsystemDynamics, Terms, Vertex};
pub use reduction::{CouplingRelation, IsolatedModel, RelationPoint};
pub use simulate::{IntegratorConfig, Trajectory};

