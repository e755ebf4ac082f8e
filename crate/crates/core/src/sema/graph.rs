//! Symbol table and call graph over the monomorphic program.

use std::collections::{BTreeMap, BTreeSet};

use crate::diag::{Code, Diagnostic, Span};
use crate::frontend::ast::RawTargetSpec;
use crate::tir::{walk_exprs, ExprKind, Program, Stmt, StmtKind};

use super::target::TargetSet;

/// Pseudo-builtin standing for storage declared with `local`.
pub const LOCAL_STORAGE: &str = "local";

/// Availability of builtins. `sizeof` never reaches the graph (it is
/// folded during type checking) but is listed for completeness.
pub fn builtin_targets(name: &str) -> Option<TargetSet> {
    Some(match name {
        "cpe_id" | "dma_get" | "dma_put" | LOCAL_STORAGE => TargetSet::SLAVE,
        "print" | "min" | "sizeof" | "n_cpes" => TargetSet::BOTH,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Callee {
    Func(String),
    Builtin(&'static str),
}

impl Callee {
    pub fn name(&self) -> &str {
        match self {
            Callee::Func(n) => n,
            Callee::Builtin(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallSite {
    pub caller: String,
    pub callee: Callee,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSite {
    pub caller: String,
    pub kernel: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnSymbol {
    pub name: String,
    pub spec: RawTargetSpec,
    pub is_kernel: bool,
    pub has_body: bool,
    pub span: Span,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProgramGraph {
    pub symbols: BTreeMap<String, FnSymbol>,
    pub call_edges: BTreeMap<String, BTreeSet<Callee>>,
    /// Every regular call with its position; `call_edges` is the set view.
    pub call_sites: Vec<CallSite>,
    pub kernel_call_sites: Vec<KernelSite>,
    pub resolved_targets: BTreeMap<String, TargetSet>,
    pub kernel_flags: BTreeSet<String>,
}

impl ProgramGraph {
    /// Availability of a callee under the current resolution.
    pub fn target_of(&self, callee: &Callee) -> Option<TargetSet> {
        match callee {
            Callee::Func(n) => self.resolved_targets.get(n).copied(),
            Callee::Builtin(b) => builtin_targets(b),
        }
    }

    pub fn add_edge(&mut self, caller: &str, callee: Callee, span: Span) {
        self.call_edges
            .entry(caller.to_string())
            .or_default()
            .insert(callee.clone());
        self.call_sites.push(CallSite {
            caller: caller.to_string(),
            callee,
            span,
        });
    }

    pub fn callees(&self, f: &str) -> impl Iterator<Item = &Callee> {
        self.call_edges.get(f).into_iter().flatten()
    }
}

pub fn build_program_graph(program: &Program) -> (ProgramGraph, Vec<Diagnostic>) {
    let mut g = ProgramGraph::default();
    let mut diags = Vec::new();
    for f in program.funcs.values() {
        g.symbols.insert(
            f.name.clone(),
            FnSymbol {
                name: f.name.clone(),
                spec: f.spec.clone(),
                is_kernel: f.is_kernel,
                has_body: f.body.is_some(),
                span: f.span,
            },
        );
        g.call_edges.entry(f.name.clone()).or_default();
        if f.is_kernel {
            g.kernel_flags.insert(f.name.clone());
        }
    }
    for f in program.funcs.values() {
        let Some(body) = &f.body else { continue };
        let mut sites: Vec<(Site, Span)> = Vec::new();
        walk_exprs(body, &mut |x| match &x.kind {
            ExprKind::Call { func, .. } => sites.push((Site::Call(func.clone()), x.span)),
            ExprKind::ClosureCall { id, .. } => {
                sites.push((Site::Call(crate::types::closure_call_name(*id)), x.span))
            }
            ExprKind::KernelCall { kernel, .. } => sites.push((Site::Kernel(kernel.clone()), x.span)),
            ExprKind::Builtin(b, _) => sites.push((Site::Builtin(b.name()), x.span)),
            _ => {}
        });
        local_decls(body, f, &mut |span| sites.push((Site::Builtin(LOCAL_STORAGE), span)));
        sites.sort_by_key(|(_, span)| *span);
        for (site, span) in sites {
            match site {
                Site::Builtin(b) => g.add_edge(&f.name, Callee::Builtin(b), span),
                Site::Kernel(k) => g.kernel_call_sites.push(KernelSite {
                    caller: f.name.clone(),
                    kernel: k,
                    span,
                }),
                Site::Call(name) => match g.symbols.get(&name) {
                    Some(s) if s.is_kernel => g.kernel_call_sites.push(KernelSite {
                        caller: f.name.clone(),
                        kernel: name,
                        span,
                    }),
                    Some(_) => g.add_edge(&f.name, Callee::Func(name), span),
                    None => diags.push(Diagnostic::error(
                        Code::E_UNDECLARED,
                        span,
                        format!("call to undeclared function `{name}`"),
                    )),
                },
            }
        }
    }
    (g, diags)
}

enum Site {
    Call(String),
    Kernel(String),
    Builtin(&'static str),
}

fn local_decls(stmts: &[Stmt], f: &crate::tir::Func, out: &mut impl FnMut(Span)) {
    for s in stmts {
        match &s.kind {
            StmtKind::Decl { var, .. } => {
                if f.var(*var).is_local {
                    out(s.span)
                }
            }
            StmtKind::If { then, els, .. } => {
                local_decls(then, f, out);
                local_decls(els, f, out);
            }
            StmtKind::While { body, .. } | StmtKind::Block(body) => local_decls(body, f, out),
            StmtKind::For { init, body, .. } => {
                local_decls(init, f, out);
                local_decls(body, f, out);
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;
    use crate::transform::{closure::closure_convert, mono::{monomorphize, MonoOptions}};

    pub(crate) fn graph(src: &str) -> ProgramGraph {
        let p = parse_source(src).unwrap();
        let mut out = monomorphize(&p.unit, &MonoOptions::default());
        assert!(out.diagnostics.is_empty(), "{:?}", out.diagnostics);
        closure_convert(&mut out.program);
        let (g, d) = build_program_graph(&out.program);
        assert!(d.is_empty());
        g
    }

    fn edges(g: &ProgramGraph, f: &str) -> Vec<String> {
        g.callees(f).map(|c| c.name().to_string()).collect()
    }

    #[test]
    fn kernel_sites_are_not_edges() {
        let g = graph(
            "__attribute((host)) __attribute((slave)) int helper(int a) { return a * 2; }
             __attribute((kernel)) void k(int* a, int* b, int n) { b[0] = helper(a[0]); }
             int main() { int a[1]; int b[1]; k(a, b, 1); return 0; }",
        );
        assert_eq!(edges(&g, "k"), vec!["helper"]);
        assert!(edges(&g, "main").is_empty());
        assert_eq!(g.kernel_call_sites.len(), 1);
        assert_eq!((g.kernel_call_sites[0].caller.as_str(), g.kernel_call_sites[0].kernel.as_str()), ("main", "k"));
        assert!(g.call_edges.values().flatten().all(|c| !g.kernel_flags.contains(c.name())));
    }

    #[test]
    fn leaf_has_no_edges() {
        let g = graph("int leaf(int x) { return x; }");
        assert!(edges(&g, "leaf").is_empty());
    }

    #[test]
    fn builtin_edges() {
        let g = graph(
            "__attribute((slave)) void s(int* a) { local int la[4]; dma_get(la, a, 16); print(cpe_id()); }",
        );
        let mut e = edges(&g, "s");
        e.sort();
        assert_eq!(e, vec!["cpe_id", "dma_get", "local", "print"]);
        assert_eq!(builtin_targets("dma_get"), Some(TargetSet::SLAVE));
        assert_eq!(builtin_targets("n_cpes"), Some(TargetSet::BOTH));
    }

    #[test]
    fn lambda_calls_become_edges() {
        let g = graph(
            "template <T> __attribute((infer)) int apply(T f, int x) { return f(x); }
             int main() { auto f = [=](int x) __attribute((slave)) { return x; }; return 0; }
             int use() { auto f = [=](int x) { return x; }; return apply(f, 1); }",
        );
        assert_eq!(edges(&g, "apply$lambda1"), vec!["__lambda1_call"]);
    }
}
