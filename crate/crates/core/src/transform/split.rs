//! Per-target modules: body retention, kernel launch lowering, listings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::bytecode::{disassemble, CodeFunction};
use crate::sema::{Side, TargetSet};
use crate::tir::{Func, Program};
use crate::types::RecordLayout;

use super::codegen::{
    compile_function, kernel_block, launch_stub_function, launch_wrapper_function, BlockLayout, Ctx,
};

/// Launch entry of one kernel: the stub on HOST, the wrapper on SLAVE.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEntry {
    pub kernel: String,
    pub symbol: String,
    pub block: BlockLayout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetModule {
    pub side: Side,
    /// Sorted by symbol.
    pub functions: Vec<CodeFunction>,
    /// Symbols referenced but not defined here.
    pub externs: Vec<String>,
    pub kernels: Vec<KernelEntry>,
    pub layouts: Vec<RecordLayout>,
}

impl TargetModule {
    pub fn function(&self, symbol: &str) -> Option<&CodeFunction> {
        self.functions.iter().find(|f| f.symbol == symbol)
    }

    fn finish(&mut self) {
        self.functions.sort_by(|a, b| a.symbol.cmp(&b.symbol));
        self.kernels.sort_by(|a, b| a.kernel.cmp(&b.kernel));
        let defined: BTreeSet<&str> = self.functions.iter().map(|f| f.symbol.as_str()).collect();
        let ext: BTreeSet<String> = self
            .functions
            .iter()
            .flat_map(|f| f.references())
            .map(|(s, _)| s)
            .filter(|s| !defined.contains(s))
            .map(str::to_string)
            .collect();
        self.externs = ext.into_iter().collect();
    }

    /// Deterministic text listing.
    pub fn listing(&self) -> String {
        let mut out = format!("; module {}\n", self.side);
        for l in &self.layouts {
            let _ = writeln!(out, "\nrecord {} size={} align={}", l.name, l.size, l.align);
            for f in &l.fields {
                let _ = writeln!(out, "  {:>4}  {}: {} ({}B)", f.offset, f.name, f.ty, f.size);
            }
        }
        for k in &self.kernels {
            let _ = writeln!(out, "\nkernel {} -> {} block={}B", k.kernel, k.symbol, k.block.size);
            for f in &k.block.fields {
                let _ = writeln!(out, "  {:>4}  {}: {} ({}B)", f.offset, f.name, f.ty, f.size);
            }
        }
        if !self.externs.is_empty() {
            out.push('\n');
            for e in &self.externs {
                let _ = writeln!(out, "extern {e}");
            }
        }
        for f in &self.functions {
            out.push('\n');
            out.push_str(&disassemble(f));
        }
        out
    }
}

/// Compiles every function whose target set includes `side`; everything
/// else it references becomes an extern.
pub fn split_for_target(
    program: &Program,
    targets: &BTreeMap<String, TargetSet>,
    side: Side,
) -> TargetModule {
    let kernels: BTreeSet<String> = program
        .funcs
        .values()
        .filter(|f| f.is_kernel)
        .map(|f| f.name.clone())
        .collect();
    let cx = Ctx {
        records: &program.records,
        side,
        kernels: &kernels,
    };
    let functions = program
        .funcs
        .values()
        .filter(|f| f.body.is_some())
        .filter(|f| targets.get(&f.name).is_some_and(|t| t.contains(side)))
        .map(|f| compile_function(&cx, f))
        .collect();
    let mut m = TargetModule {
        side,
        functions,
        externs: Vec::new(),
        kernels: Vec::new(),
        layouts: program.records.layouts(),
    };
    m.finish();
    m
}

/// Adds a launch stub per kernel to the HOST module and a wrapper per kernel
/// to the SLAVE module. Kernel call sites in HOST code already target the
/// stub.
pub fn lower_kernels(host: &mut TargetModule, slave: &mut TargetModule, program: &Program) {
    lower_side(host, program);
    lower_side(slave, program);
}

/// Lowering for one module, used when the two sides are built separately.
/// A declared kernel still gets a HOST stub; its wrapper needs the body.
pub fn lower_side(m: &mut TargetModule, program: &Program) {
    let wanted = |f: &&Func| f.is_kernel && (m.side == Side::Host || f.body.is_some());
    for k in program.funcs.values().filter(wanted) {
        let block = kernel_block(k, &program.records);
        let f = match m.side {
            Side::Host => launch_stub_function(k, &block),
            Side::Slave => launch_wrapper_function(k, &block),
        };
        m.kernels.push(KernelEntry {
            kernel: k.name.clone(),
            symbol: f.symbol.clone(),
            block,
        });
        m.functions.push(f);
    }
    m.finish();
}

#[cfg(test)]
mod tests {
    use crate::pipeline::{compile, compile_side};
    use crate::sema::Side;

    const SRC: &str = "
        __attribute((host)) __attribute((slave)) int sq(int x) { return x * x; }
        __attribute((slave)) int twice(int x) { return sq(x) * 2; }
        __attribute((kernel)) void k(int* a) { a[cpe_id()] = twice(cpe_id()); }
        int main() { int a[64]; k(a); return sq(a[1]); }
    ";

    fn symbols(m: &super::TargetModule) -> Vec<&str> {
        m.functions.iter().map(|f| f.symbol.as_str()).collect()
    }

    #[test]
    fn bodies_follow_targets() {
        let c = compile(SRC).unwrap();
        assert_eq!(symbols(&c.host), ["k_launch", "main", "sq"]);
        assert_eq!(
            symbols(&c.slave),
            ["slave_k", "slave_k_wrapper", "slave_sq", "slave_twice"]
        );
        // The launch stub is the only cross-module reference.
        assert_eq!(c.host.externs, ["slave_k_wrapper"]);
        assert!(c.slave.externs.is_empty());
    }

    #[test]
    fn kernel_entries_on_both_sides() {
        let c = compile(SRC).unwrap();
        assert_eq!(c.host.kernels[0].symbol, "k_launch");
        assert_eq!(c.slave.kernels[0].symbol, "slave_k_wrapper");
        assert_eq!(c.host.kernels[0].block, c.slave.kernels[0].block);
        assert_eq!(c.host.kernels[0].block.size, 8);
    }

    #[test]
    fn one_sided_module_lists_externs() {
        let (host, _) = compile_side(SRC, Side::Host).unwrap();
        assert_eq!(host.externs, ["slave_k_wrapper"]);
        let listing = host.listing();
        assert!(listing.starts_with("; module HOST\n"));
        assert!(listing.contains("\nextern slave_k_wrapper\n"), "{listing}");
        assert!(listing.contains("kernel k -> k_launch block=8B"), "{listing}");
    }

    #[test]
    fn declared_kernel_gets_a_stub_but_no_wrapper() {
        let src = "__attribute((kernel)) void k(long n);
                   int main() { k(3L); return 0; }";
        let (host, _) = compile_side(src, Side::Host).unwrap();
        assert!(host.function("k_launch").is_some());
        let (slave, _) = compile_side(src, Side::Slave).unwrap();
        assert!(slave.kernels.is_empty());
    }
}
