//! Target resolution: explicit marks, then greatest-fixed-point inference.

use std::collections::BTreeMap;

use crate::diag::{Code, Diagnostic};

use super::graph::{Callee, ProgramGraph};
use super::target::{explicit_target, TargetSet};

/// Targets fixed by marks or pragma defaults; `None` is UNRESOLVED-INFER.
pub fn resolve_explicit_targets(graph: &ProgramGraph) -> BTreeMap<String, Option<TargetSet>> {
    graph
        .symbols
        .iter()
        .map(|(n, s)| (n.clone(), explicit_target(&s.spec)))
        .collect()
}

/// Runs inference visiting infer functions in name order.
pub fn infer_targets(graph: &mut ProgramGraph) -> Vec<Diagnostic> {
    let order: Vec<String> = graph.symbols.keys().cloned().collect();
    infer_targets_in_order(graph, &order)
}

/// Chaotic iteration over `order` until stable. Every infer function starts
/// at BOTH and only ever shrinks, so the result is the greatest fixed point
/// regardless of `order`.
///
/// A function that launches kernels must be able to run on the MPE, which
/// contributes a HOST constraint.
pub fn infer_targets_in_order(graph: &mut ProgramGraph, order: &[String]) -> Vec<Diagnostic> {
    let explicit = resolve_explicit_targets(graph);
    let mut current: BTreeMap<String, TargetSet> = explicit
        .iter()
        .map(|(n, t)| (n.clone(), t.unwrap_or(TargetSet::BOTH)))
        .collect();
    let infer: Vec<&String> = order
        .iter()
        .filter(|n| matches!(explicit.get(*n), Some(None)))
        .collect();
    let launches: BTreeMap<&str, bool> = graph
        .kernel_call_sites
        .iter()
        .map(|k| (k.caller.as_str(), true))
        .collect();
    loop {
        let mut changed = false;
        for f in &infer {
            let mut t = if launches.contains_key(f.as_str()) {
                TargetSet::HOST
            } else {
                TargetSet::BOTH
            };
            for c in graph.callees(f) {
                t = t.meet(callee_target(c, &current));
            }
            let slot = current.get_mut(*f).unwrap();
            if t != *slot {
                *slot = t;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    graph.resolved_targets = current;
    let mut diags = Vec::new();
    for (name, t) in &explicit {
        if t.is_some() || !graph.resolved_targets[name].is_none() {
            continue;
        }
        diags.push(infeasible(graph, name, launches.contains_key(name.as_str())));
    }
    diags
}

fn callee_target(c: &Callee, current: &BTreeMap<String, TargetSet>) -> TargetSet {
    match c {
        Callee::Func(n) => current.get(n).copied().unwrap_or(TargetSet::BOTH),
        Callee::Builtin(b) => super::graph::builtin_targets(b).unwrap_or(TargetSet::BOTH),
    }
}

fn infeasible(graph: &ProgramGraph, name: &str, launches: bool) -> Diagnostic {
    let sym = &graph.symbols[name];
    let mut host_only = Vec::new();
    let mut slave_only = Vec::new();
    let mut none = Vec::new();
    for c in graph.callees(name) {
        let t = graph.target_of(c).unwrap_or(TargetSet::BOTH);
        let label = format!("`{}`", c.name());
        match (t.host, t.slave) {
            (true, false) => host_only.push(label),
            (false, true) => slave_only.push(label),
            (false, false) => none.push(label),
            _ => {}
        }
    }
    if launches {
        host_only.push("kernel launches".to_string());
    }
    let mut parts = Vec::new();
    if !host_only.is_empty() {
        parts.push(format!("{} (HOST only)", host_only.join(", ")));
    }
    if !slave_only.is_empty() {
        parts.push(format!("{} (SLAVE only)", slave_only.join(", ")));
    }
    if !none.is_empty() {
        parts.push(format!("{} (no target)", none.join(", ")));
    }
    let mut d = Diagnostic::error(
        Code::E_INFER_INFEASIBLE,
        sym.span,
        format!(
            "cannot infer a target for `{name}`: it calls {}, which share no common target",
            parts.join(" and ")
        ),
    );
    for site in graph.call_sites.iter().filter(|s| s.caller == name) {
        let t = graph.target_of(&site.callee).unwrap_or(TargetSet::BOTH);
        if t != TargetSet::BOTH {
            d = d.with_note(site.span, format!("call to `{}` ({t}) here", site.callee.name()));
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sema::graph::build_program_graph;
    use crate::frontend::parse_source;
    use crate::transform::{closure::closure_convert, mono::{monomorphize, MonoOptions}};

    fn analyzed(src: &str) -> (ProgramGraph, Vec<Diagnostic>) {
        let p = parse_source(src).unwrap();
        let mut out = monomorphize(&p.unit, &MonoOptions::default());
        assert!(out.diagnostics.is_empty(), "{:?}", out.diagnostics);
        closure_convert(&mut out.program);
        let (mut g, _) = build_program_graph(&out.program);
        let d = infer_targets(&mut g);
        (g, d)
    }

    fn t(g: &ProgramGraph, f: &str) -> TargetSet {
        g.resolved_targets[f]
    }

    #[test]
    fn infer_leaf_is_both() {
        let (g, d) = analyzed("__attribute((infer)) int f() { return 1; }");
        assert!(d.is_empty());
        assert_eq!(t(&g, "f"), TargetSet::BOTH);
    }

    #[test]
    fn infer_through_slave_callee() {
        let (g, _) = analyzed(
            "__attribute((slave)) int g() { return 1; }
             __attribute((infer)) int f() { return g(); }",
        );
        assert_eq!(t(&g, "f"), TargetSet::SLAVE);
        assert_eq!(t(&g, "g"), TargetSet::SLAVE);
    }

    #[test]
    fn conflicting_callees_are_infeasible() {
        let (g, d) = analyzed(
            "int h() { return 1; }
             __attribute((slave)) int s() { return 2; }
             __attribute((infer)) int f() { return h() + s(); }",
        );
        assert_eq!(t(&g, "f"), TargetSet::NONE);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, Code::E_INFER_INFEASIBLE);
        assert!(d[0].message.contains("`h`") && d[0].message.contains("`s`"), "{}", d[0].message);
    }

    #[test]
    fn mutual_recursion_stays_both() {
        let (g, d) = analyzed(
            "#pragma swuc push infer\n\
             int f(int n);\n\
             int g(int n) { if (n > 0) return f(n - 1); return 0; }\n\
             int f(int n) { if (n > 0) return g(n - 1); return 0; }\n\
             #pragma swuc pop\n",
        );
        assert!(d.is_empty());
        assert_eq!(t(&g, "f"), TargetSet::BOTH);
        assert_eq!(t(&g, "g"), TargetSet::BOTH);
    }

    #[test]
    fn launching_function_infers_host() {
        let (g, _) = analyzed(
            "__attribute((kernel)) void k() { }
             __attribute((infer)) void go() { k(); }",
        );
        assert_eq!(t(&g, "go"), TargetSet::HOST);
        assert_eq!(t(&g, "k"), TargetSet::SLAVE);
    }

    #[test]
    fn builtin_constrains_inference() {
        let (g, _) = analyzed("__attribute((infer)) int id() { return cpe_id(); }");
        assert_eq!(t(&g, "id"), TargetSet::SLAVE);
    }

    #[test]
    fn idempotent() {
        let (mut g, _) = analyzed(
            "__attribute((slave)) int g() { return 1; }
             __attribute((infer)) int f() { return g(); }
             __attribute((infer)) int e() { return f(); }",
        );
        let before = g.resolved_targets.clone();
        infer_targets(&mut g);
        assert_eq!(g.resolved_targets, before);
    }
}
