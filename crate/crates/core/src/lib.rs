//! Electromagnetic discrete-time quantum walks on a 2D square lattice.
//!
//! The walker is a two-component spinor field advanced by alternating shifts
//! along `p` and `q` and position-dependent coins that encode an
//! electromagnetic potential `A_μ`. The crate provides
//!
//! * the walk itself ([`walk`]), with its exact discrete `U(1)` gauge symmetry;
//! * the lattice finite-difference operators ([`lattice`]);
//! * the gauge-invariant field tensor and discrete Maxwell operator ([`gauge`]);
//! * the conserved lattice current and continuity residual ([`current`]);
//! * a continuum Dirac reference for convergence studies ([`oracle`]);
//! * trajectory observables ([`observables`]) and config-driven experiment
//!   runners ([`experiments`]).

pub mod current;
pub mod error;
pub mod experiments;
pub mod gauge;
pub mod invariants;
pub mod lattice;
pub mod observables;
pub mod oracle;
pub mod walk;

pub use error::{Error, Result};
pub use gauge::{FieldTensor, IndexPosition, PotentialSpec};
pub use lattice::{FieldHistory, Grid, ScalarField, Stencil};
pub use walk::{evolve, step, SpinorField, StepObserver, WalkParams};
