//! Discretization and numerical study of nonlocal operators of small order.

pub mod assembly;
pub mod cli;
pub mod config;
pub mod error;
pub mod expr;
pub mod kernels;
pub mod mesh;
pub mod quadrature;
pub mod solve;
pub mod special;
pub mod verify;

pub use error::{NonlocalError, Result};
