//! Call legality over resolved targets.

use crate::diag::{Code, Diagnostic};
use crate::frontend::ast::CaptureMode;
use crate::tir::Program;
use crate::types::{RecordTable, Type};

use super::graph::{Callee, ProgramGraph};
use super::target::TargetSet;

/// Scalars, addresses and records built from them can cross into a launch block.
pub fn is_transferable(ty: &Type, records: &RecordTable) -> bool {
    match ty {
        Type::Bool | Type::Int | Type::Long | Type::Float | Type::Double | Type::Ptr(_) => true,
        Type::Closure(_) => true,
        Type::Record(n) => records
            .get(n)
            .is_some_and(|d| d.fields.iter().all(|(_, t)| is_transferable(t, records))),
        Type::Void | Type::Array(..) | Type::Str => false,
    }
}

pub fn check_call_legality(program: &Program, graph: &ProgramGraph) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let avail = |n: &str| graph.resolved_targets.get(n).copied().unwrap_or(TargetSet::NONE);
    for site in &graph.call_sites {
        let caller = avail(&site.caller);
        let Some(callee) = graph.target_of(&site.callee) else { continue };
        // An infeasible callee has already been reported.
        if callee.is_none() && matches!(site.callee, Callee::Func(_)) {
            continue;
        }
        for side in caller.sides() {
            if callee.contains(side) {
                continue;
            }
            let what = match &site.callee {
                Callee::Builtin(super::graph::LOCAL_STORAGE) => "`local` storage".to_string(),
                Callee::Builtin(b) => format!("builtin `{b}`"),
                Callee::Func(f) => format!("`{f}`"),
            };
            let mut d = Diagnostic::error(
                Code::E_TARGET_MISMATCH,
                site.span,
                format!(
                    "`{}` may run on {side} but {what} is only available on {callee}",
                    site.caller
                ),
            );
            if let Some(sym) = graph.symbols.get(&site.caller) {
                d = d.with_note(sym.span, format!("`{}` is {caller}", site.caller));
            }
            if let Callee::Func(f) = &site.callee {
                if let Some(sym) = graph.symbols.get(f) {
                    d = d.with_note(sym.span, format!("`{f}` declared here"));
                }
            }
            diags.push(d);
        }
    }
    for k in &graph.kernel_call_sites {
        let caller = avail(&k.caller);
        if caller.slave {
            let mut d = Diagnostic::error(
                Code::E_KERNEL_FROM_SLAVE,
                k.span,
                format!(
                    "kernel `{}` launched from `{}`, which may run on SLAVE ({caller})",
                    k.kernel, k.caller
                ),
            );
            if let Some(sym) = graph.symbols.get(&k.caller) {
                d = d.with_note(sym.span, format!("`{}` declared here", k.caller));
            }
            diags.push(d);
        }
    }
    for f in program.funcs.values().filter(|f| f.is_kernel) {
        for p in &f.params {
            let v = f.var(*p);
            if !is_transferable(&v.ty, &program.records) {
                diags.push(Diagnostic::error(
                    Code::E_KERNEL_PARAM,
                    v.span,
                    format!(
                        "parameter `{}` of kernel `{}` has type `{}`, which cannot be passed to a kernel",
                        v.name, f.name, v.ty
                    ),
                ));
            }
        }
    }
    for c in &program.closures {
        if !avail(&c.call_function).host {
            continue;
        }
        for cap in &c.captures {
            if cap.mode == CaptureMode::ByRef && cap.is_local {
                diags.push(Diagnostic::error(
                    Code::E_CAPTURE,
                    c.span,
                    format!(
                        "lambda available on HOST captures `local` variable `{}` by reference",
                        cap.name
                    ),
                ));
            }
        }
    }
    diags.sort_by_key(|d| d.span);
    diags
}

/// `name<TAB>HOST|SLAVE|BOTH` per function, sorted by name.
pub fn target_table(graph: &ProgramGraph) -> String {
    let mut out = String::new();
    for (name, t) in &graph.resolved_targets {
        out.push_str(&format!("{name}\t{t}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;
    use crate::sema::{graph::build_program_graph, infer::infer_targets};
    use crate::transform::{closure::closure_convert, mono::{monomorphize, MonoOptions}};

    fn codes(src: &str) -> Vec<Code> {
        let p = parse_source(src).unwrap();
        let mut out = monomorphize(&p.unit, &MonoOptions::default());
        assert!(out.diagnostics.is_empty(), "{:?}", out.diagnostics);
        closure_convert(&mut out.program);
        let (mut g, _) = build_program_graph(&out.program);
        let mut d = infer_targets(&mut g);
        d.extend(check_call_legality(&out.program, &g));
        d.iter().map(|d| d.code).collect()
    }

    #[test]
    fn host_calling_slave_only() {
        assert_eq!(
            codes(
                "__attribute((slave)) int f() { return 1; }
                 int main() { return f(); }"
            ),
            vec![Code::E_TARGET_MISMATCH]
        );
    }

    #[test]
    fn both_calling_host_only_fails_on_slave() {
        assert_eq!(
            codes(
                "int h() { return 1; }
                 __attribute((host)) __attribute((slave)) int b() { return h(); }"
            ),
            vec![Code::E_TARGET_MISMATCH]
        );
    }

    #[test]
    fn kernel_from_slave() {
        assert_eq!(
            codes(
                "__attribute((kernel)) void k() { }
                 __attribute((slave)) void s() { k(); }"
            ),
            vec![Code::E_KERNEL_FROM_SLAVE]
        );
    }

    #[test]
    fn host_builtin_use_is_mismatch() {
        assert_eq!(codes("int main() { return cpe_id(); }"), vec![Code::E_TARGET_MISMATCH]);
        assert_eq!(codes("int main() { local int x; return 0; }"), vec![Code::E_TARGET_MISMATCH]);
    }

    #[test]
    fn legal_program_is_clean() {
        assert!(codes(
            "__attribute((host)) __attribute((slave)) int helper(int a) { return a * 2; }
             __attribute((kernel)) void k(int* a, int* b, long n) { b[0] = helper(a[0]); }
             int main() { int a[1]; int b[1]; k(a, b, 1); return helper(3); }"
        )
        .is_empty());
    }

    #[test]
    fn local_by_ref_into_host_lambda() {
        assert_eq!(
            codes(
                "__attribute((slave)) void s() { local int b[2]; auto f = [&]() __attribute((host)) { b[0] = 1; }; }"
            ),
            vec![Code::E_CAPTURE]
        );
    }

    #[test]
    fn transferability() {
        let r = RecordTable::default();
        assert!(is_transferable(&Type::ptr(Type::Int), &r));
        assert!(!is_transferable(&Type::Array(Box::new(Type::Int), 3), &r));
    }
}
