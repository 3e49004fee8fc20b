//! Exact symbolic computation of conservation laws of gradient flows.
//!
//! Given a polynomial reparametrization φ: R^D → R^d of a model, the gradient
//! flow of any loss expressed through φ conserves every function h whose
//! gradient is orthogonal to the span of the ∇φ_i everywhere. This crate
//! computes, with exact rational arithmetic:
//!
//! * the maximal number of independent conservation laws, as D minus the
//!   dimension of the trace of the Lie algebra generated by the gradient
//!   fields of φ ([`lieclosure`]);
//! * an explicit basis of polynomial conservation laws up to a degree bound,
//!   by solving the orthogonality constraints as an exact linear system
//!   ([`lawfinder`]);
//! * numerical corroboration along simulated gradient-flow trajectories,
//!   including the induced Riemannian flow in prediction space ([`flowsim`]).
//!
//! Built-in model families live in [`models`]; the `conslaw` binary exposes
//! `count`, `find`, `verify`, `simulate` and `reproduce` subcommands on top.

pub mod exactalg;
pub mod flowsim;
pub mod lawfinder;
pub mod lieclosure;
pub mod models;
pub mod poly;
pub mod report;
pub mod vfield;
