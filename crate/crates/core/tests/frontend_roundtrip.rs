mod common;

use proptest::prelude::*;

use swuc::frontend::ast::{DefaultTarget, Mark};
use swuc::frontend::{parse_source, pretty_print, SourceUnit};

use common::{corpus, corpus_dir};

fn parse(src: &str) -> SourceUnit {
    parse_source(src).unwrap_or_else(|d| panic!("{d:?}\n{src}")).unit
}

/// Names, marks and pragma defaults of every function, in order.
fn signature(u: &SourceUnit) -> Vec<(String, Vec<Mark>, DefaultTarget)> {
    u.functions()
        .map(|f| (f.name.clone(), f.spec.explicit_marks.clone(), f.spec.pragma_default))
        .collect()
}

#[test]
fn corpus_survives_pretty_printing() {
    let mut seen = 0;
    for entry in std::fs::read_dir(corpus_dir()).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        if !name.ends_with(".swc") {
            continue;
        }
        let first = parse(&corpus(&name));
        let printed = pretty_print(&first);
        let second = parse(&printed);
        assert_eq!(pretty_print(&second), printed, "{name}");
        assert_eq!(signature(&second), signature(&first), "{name}");
        seen += 1;
    }
    assert!(seen >= 8);
}

fn target_word() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec!["host", "slave", "infer"])
}

fn default_of(word: &str) -> DefaultTarget {
    match word {
        "slave" => DefaultTarget::Slave,
        "infer" => DefaultTarget::Infer,
        _ => DefaultTarget::Host,
    }
}

proptest! {
    // After n pushes and m pops the active default is the (n-m)-th push.
    #[test]
    fn pragma_balance(pushes in prop::collection::vec(target_word(), 0..12), pops in 0usize..12) {
        let pops = pops.min(pushes.len());
        let mut src = String::new();
        for w in &pushes {
            src += &format!("#pragma swuc push {w}\n");
        }
        for _ in 0..pops {
            src += "#pragma swuc pop\n";
        }
        src += "int probe() { return 0; }\n";
        let unit = parse(&src);
        let f = unit.functions().next().unwrap();
        let expected = match pushes.len() - pops {
            0 => DefaultTarget::Host,
            k => default_of(pushes[k - 1]),
        };
        prop_assert_eq!(f.spec.pragma_default, expected);
    }

    // Moving a declaration into a pragma region only changes its default.
    #[test]
    fn attribute_locality(
        marks in prop::sample::subsequence(vec!["host", "slave"], 0..=2),
        region in target_word(),
    ) {
        let attrs: String = marks.iter().map(|m| format!("__attribute(({m})) ")).collect();
        let decl = format!("{attrs}int f(int x) {{ return x; }}\n");
        let outside = parse(&decl);
        let inside = parse(&format!("#pragma swuc push {region}\n{decl}#pragma swuc pop\n"));
        let (a, b) = (outside.functions().next().unwrap(), inside.functions().next().unwrap());
        prop_assert_eq!(&a.spec.explicit_marks, &b.spec.explicit_marks);
        prop_assert_eq!(a.spec.pragma_default, DefaultTarget::Host);
        prop_assert_eq!(b.spec.pragma_default, default_of(region));
    }
}
