//! Two-level Additive Schwarz preconditioning for 2D Poisson problems, with
//! local subdomain solves performed either by a direct factorization or by a
//! trainable message-passing graph network.
//!
//! The pipeline: [`mesh`] → [`fem`] assembly → [`decomp`] overlapping
//! decomposition → [`asm`] or [`ddmgnn`] preconditioner → [`sparse::pcg`].
//! [`dataset`] harvests local problems from classical solves to train the
//! network in [`dss`].

pub mod asm;
pub mod bench;
pub mod cli;
pub mod dataset;
pub mod ddmgnn;
pub mod decomp;
pub mod dss;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod sparse;

pub use error::{Error, Result};
