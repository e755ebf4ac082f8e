//! SW-C: a single-source compiler and simulator for MPE/CPE machines.

pub mod bytecode;
pub mod diag;
pub mod driver;
pub mod frontend;
pub mod linker;
pub mod pipeline;
pub mod sema;
pub mod sim;
pub mod tir;
pub mod transform;
pub mod types;
