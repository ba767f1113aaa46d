//! Worst-case load sensitivities of DC optimal power flow.
//!
//! The optimal dispatch of a DC-OPF is piecewise linear in the loads, with
//! one linear piece per set of binding generator and branch limits. This
//! crate solves the OPF, builds the Jacobian of each piece from the binding
//! set alone, and maximizes sensitivities over every admissible binding set,
//! optionally splitting the search at bridges of the network.

pub mod cases;
pub mod chain;
pub mod dcopf;
pub mod decompose;
pub mod error;
pub mod jacobian;
pub mod linalg;
pub mod matpower;
pub mod model;
pub mod sensitivity;
mod simplex;

pub use dcopf::{BindingSet, LoadVector, OpfSolution, Tolerances};
pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use model::{Edge, Network, OpfParams, VertexLabel};
