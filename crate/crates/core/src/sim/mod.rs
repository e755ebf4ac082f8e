//! Simulated MPE + CPE-array node executing linked images.

mod memory;
mod vm;

use std::fmt;

use thiserror::Error;

use crate::diag::Span;
use crate::linker::LinkedImage;

pub use memory::{local_addr, Context, Memory, LOCAL_TAG, MAIN_BASE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Sequential,
    Interleaved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_cpes: u32,
    pub mode: Mode,
    /// Only used in interleaved mode.
    pub seed: u64,
    pub main_memory_bytes: usize,
    pub local_memory_bytes: usize,
    pub trace: bool,
    /// Activation-depth limit per thread; exceeding it is TRAP_OOM.
    pub max_call_depth: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_cpes: 64,
            mode: Mode::Sequential,
            seed: 0,
            main_memory_bytes: 64 << 20,
            local_memory_bytes: 256 << 10,
            trace: false,
            max_call_depth: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrapKind {
    Oob,
    LocalFromMpe,
    Oom,
    Div0,
    CpeIdFromMpe,
    DmaFromMpe,
    NestedLaunch,
}

impl TrapKind {
    pub fn name(self) -> &'static str {
        match self {
            TrapKind::Oob => "TRAP_OOB",
            TrapKind::LocalFromMpe => "TRAP_LOCAL_FROM_MPE",
            TrapKind::Oom => "TRAP_OOM",
            TrapKind::Div0 => "TRAP_DIV0",
            TrapKind::CpeIdFromMpe => "TRAP_CPEID_FROM_MPE",
            TrapKind::DmaFromMpe => "TRAP_DMA_FROM_MPE",
            TrapKind::NestedLaunch => "TRAP_NESTED_LAUNCH",
        }
    }
}

impl fmt::Display for TrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpeStatus {
    Completed,
    Trapped,
    Pending,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trap {
    pub kind: TrapKind,
    pub context: Context,
    pub symbol: String,
    pub span: Span,
    pub message: String,
    /// Per-CPE state of the launch in progress, if any.
    pub launch: Option<Vec<CpeStatus>>,
}

impl fmt::Display for Trap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ctx = match self.context {
            Context::Mpe => "MPE".to_string(),
            Context::Cpe(i) => format!("CPE {i}"),
        };
        write!(
            f,
            "{}: trap[{}]: {} (on {ctx}, in `{}`)",
            self.span, self.kind, self.message, self.symbol
        )?;
        if let Some(st) = &self.launch {
            let count = |s| st.iter().filter(|x| **x == s).count();
            write!(
                f,
                "\n  launch status: {} completed, {} trapped, {} pending",
                count(CpeStatus::Completed),
                count(CpeStatus::Trapped),
                count(CpeStatus::Pending)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Exited(i32),
    Trapped(Trap),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub status: Status,
    pub stdout: String,
    /// One `LAUNCH ...` line per launch when tracing.
    pub trace: Vec<String>,
}

impl RunResult {
    pub fn exit_status(&self) -> Option<i32> {
        match self.status {
            Status::Exited(s) => Some(s),
            Status::Trapped(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid image: {0}")]
    Image(String),
    #[error("{0}")]
    Args(String),
}

/// Runs `image` from its entry point. Scalar parameters of the entry
/// function are parsed from `argv`.
pub fn run(image: &LinkedImage, config: &SimConfig, argv: &[String]) -> Result<RunResult, SimError> {
    vm::Machine::new(image, config)?.run(argv)
}
