//! Middle-end rewrites from the checked source to per-target modules.

pub mod closure;
pub mod codegen;
pub mod mono;
pub mod split;
