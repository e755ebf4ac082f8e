//! Target analysis: call graph, explicit marks, inference and legality.

pub mod graph;
pub mod infer;
pub mod legality;
pub mod target;

pub use graph::{build_program_graph, ProgramGraph};
pub use infer::{infer_targets, infer_targets_in_order, resolve_explicit_targets};
pub use legality::{check_call_legality, target_table};
pub use target::{Side, TargetSet};
