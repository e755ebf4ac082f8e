//! Target inference over randomly generated call graphs.

use std::collections::BTreeMap;

use proptest::prelude::*;

use swuc::diag::Span;
use swuc::frontend::parse_source;
use swuc::sema::graph::Callee;
use swuc::sema::{build_program_graph, infer_targets, infer_targets_in_order, ProgramGraph, TargetSet};
use swuc::transform::closure::closure_convert;
use swuc::transform::mono::{monomorphize, MonoOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Decl {
    Unmarked,
    Host,
    Slave,
    Both,
    Infer,
}

impl Decl {
    fn attrs(self) -> &'static str {
        match self {
            Decl::Unmarked => "",
            Decl::Host => "__attribute((host)) ",
            Decl::Slave => "__attribute((slave)) ",
            Decl::Both => "__attribute((host)) __attribute((slave)) ",
            Decl::Infer => "__attribute((infer)) ",
        }
    }

    fn explicit(self) -> Option<TargetSet> {
        match self {
            Decl::Unmarked | Decl::Host => Some(TargetSet::HOST),
            Decl::Slave => Some(TargetSet::SLAVE),
            Decl::Both => Some(TargetSet::BOTH),
            Decl::Infer => None,
        }
    }
}

#[derive(Debug, Clone)]
struct Spec {
    decls: Vec<Decl>,
    calls: Vec<Vec<usize>>,
    uses_cpe_id: Vec<bool>,
}

impl Spec {
    fn source(&self) -> String {
        let mut src = String::new();
        for (i, d) in self.decls.iter().enumerate() {
            src += &format!("{}int f{i}(int n);\n", d.attrs());
        }
        for (i, d) in self.decls.iter().enumerate() {
            let mut body = String::from("n");
            for c in &self.calls[i] {
                body += &format!(" + f{c}(n - 1)");
            }
            if self.uses_cpe_id[i] {
                body += " + cpe_id()";
            }
            src += &format!("{}int f{i}(int n) {{ if (n < 0) return 0; return {body}; }}\n", d.attrs());
        }
        src
    }
}

fn spec() -> impl Strategy<Value = Spec> {
    let decl = prop::sample::select(vec![Decl::Unmarked, Decl::Host, Decl::Slave, Decl::Both, Decl::Infer, Decl::Infer]);
    (1usize..9).prop_flat_map(move |n| {
        (
            prop::collection::vec(decl.clone(), n),
            prop::collection::vec(prop::collection::vec(0..n, 0..3), n),
            prop::collection::vec(prop::bool::weighted(0.15), n),
        )
            .prop_map(|(decls, calls, uses_cpe_id)| Spec { decls, calls, uses_cpe_id })
    })
}

fn graph(src: &str) -> ProgramGraph {
    let parsed = parse_source(src).unwrap_or_else(|d| panic!("{d:?}\n{src}"));
    let mut mono = monomorphize(&parsed.unit, &MonoOptions::default());
    assert!(mono.diagnostics.is_empty(), "{:?}\n{src}", mono.diagnostics);
    closure_convert(&mut mono.program);
    build_program_graph(&mono.program).0
}

fn inferred(mut g: ProgramGraph) -> BTreeMap<String, TargetSet> {
    infer_targets(&mut g);
    g.resolved_targets
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn explicit_marks_are_constant(s in spec()) {
        let t = inferred(graph(&s.source()));
        for (i, d) in s.decls.iter().enumerate() {
            if let Some(e) = d.explicit() {
                prop_assert_eq!(t[&format!("f{i}")], e, "f{}", i);
            }
        }
    }

    #[test]
    fn leaf_law(s in spec()) {
        let t = inferred(graph(&s.source()));
        for (i, d) in s.decls.iter().enumerate() {
            if *d == Decl::Infer && s.calls[i].is_empty() && !s.uses_cpe_id[i] {
                prop_assert_eq!(t[&format!("f{i}")], TargetSet::BOTH);
            }
        }
    }

    #[test]
    fn idempotent(s in spec()) {
        let mut g = graph(&s.source());
        let first = infer_targets(&mut g);
        let once = g.resolved_targets.clone();
        let second = infer_targets(&mut g);
        prop_assert_eq!(&g.resolved_targets, &once);
        prop_assert_eq!(first.len(), second.len());
    }

    #[test]
    fn adding_an_edge_never_enlarges(s in spec(), from in any::<prop::sample::Index>(), to in any::<prop::sample::Index>()) {
        let g = graph(&s.source());
        let before = inferred(g.clone());
        let n = s.decls.len();
        let (a, b) = (format!("f{}", from.index(n)), format!("f{}", to.index(n)));
        let mut g2 = g;
        g2.add_edge(&a, Callee::Func(b), Span::default());
        let after = inferred(g2);
        for (f, t) in &after {
            prop_assert!(t.is_subset(before[f]), "{f}: {t:?} grew from {:?}", before[f]);
        }
    }

    #[test]
    fn worklist_order_is_irrelevant(s in spec(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let g = graph(&s.source());
        let reference = inferred(g.clone());
        let mut order: Vec<String> = g.symbols.keys().cloned().collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let mut g2 = g;
        infer_targets_in_order(&mut g2, &order);
        prop_assert_eq!(g2.resolved_targets, reference);
    }
}
