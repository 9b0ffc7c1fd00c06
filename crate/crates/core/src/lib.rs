//! Numerical laboratory for planar symplectic maps with a non-split
//! separatrix: normal forms, return maps and their renormalization,
//! invariant circles accumulating the separatrix, and a perturbation that
//! destroys them.

pub mod charts_flows;
pub mod cli;
pub mod counterexample;
pub mod curves;
pub mod model;
pub mod nf_algebra;
pub mod numerics;
pub mod return_renorm;
