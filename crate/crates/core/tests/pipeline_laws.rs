//! Laws relating analysis, split modules, linking and execution.

mod common;

use proptest::prelude::*;

use swuc::linker::{demangle, launch_stub, link, mangle, write_image};
use swuc::pipeline::{build, compile, Compiled};
use swuc::sema::Side;
use swuc::sim::Status;

use common::*;

fn compiled(name: &str) -> Compiled {
    compile(&corpus(name)).unwrap_or_else(|d| panic!("{name}: {d:?}"))
}

#[test]
fn split_partition_law() {
    for name in buildable_corpus() {
        let c = compiled(&name);
        let targets = &c.analysis.graph.resolved_targets;
        for f in c.analysis.program.funcs.values().filter(|f| f.body.is_some()) {
            let t = targets[&f.name];
            for (side, module) in [(Side::Host, &c.host), (Side::Slave, &c.slave)] {
                let present = module.function(&mangle(side, &f.name)).is_some();
                let expected = t.contains(side) && !(f.is_kernel && side == Side::Host);
                assert_eq!(present, expected, "{name}: `{}` on {side:?}", f.name);
            }
            if f.is_kernel {
                assert!(c.host.function(&launch_stub(&f.name)).is_some(), "{name}: stub for `{}`", f.name);
            }
        }
    }
}

#[test]
fn single_source_always_links() {
    for name in buildable_corpus() {
        let c = compiled(&name);
        // Every SLAVE-side instance the HOST module launches is defined.
        for k in &c.host.kernels {
            assert!(c.slave.function(&mangle(Side::Slave, &k.kernel)).is_some(), "{name}: {}", k.kernel);
        }
        link(&c.host, &c.slave).unwrap_or_else(|d| panic!("{name}: {d:?}"));
    }
}

#[test]
fn builds_are_byte_deterministic() {
    for name in buildable_corpus() {
        let a = compiled(&name);
        let b = compiled(&name);
        assert_eq!(a.host.listing(), b.host.listing(), "{name}");
        assert_eq!(a.slave.listing(), b.slave.listing(), "{name}");
        for (ka, kb) in a.host.kernels.iter().zip(&b.host.kernels) {
            assert_eq!(ka.block, kb.block, "{name}");
        }
        let once = write_image(&link(&a.host, &a.slave).unwrap());
        let twice = write_image(&link(&b.host, &b.slave).unwrap());
        assert_eq!(once, twice, "{name}");
    }
}

#[test]
fn kernel_blocks_agree_between_sides() {
    for name in buildable_corpus() {
        let c = compiled(&name);
        for (h, s) in c.host.kernels.iter().zip(&c.slave.kernels) {
            assert_eq!(h.kernel, s.kernel);
            assert_eq!(h.block, s.block, "{name}: {}", h.kernel);
        }
    }
}

#[test]
fn corpus_symbols_demangle() {
    for name in buildable_corpus() {
        let (img, _) = build(&corpus(&name)).unwrap();
        for sym in img.functions.keys() {
            let (side, base) = demangle(sym);
            assert_eq!(&mangle(side, base), sym);
        }
    }
}

/// `long` expression over the parameters and earlier locals; literals and
/// comparisons are spelled so that every subexpression is 64-bit.
#[derive(Debug, Clone)]
enum E {
    Var(usize),
    Lit(i64),
    Neg(Box<E>),
    Bin(&'static str, Box<E>, Box<E>),
    DivConst(&'static str, Box<E>, i64),
    Shift(&'static str, Box<E>, u32),
}

impl E {
    fn render(&self) -> String {
        match self {
            E::Var(i) => format!("v{i}"),
            E::Lit(n) if *n < 0 => format!("({n}L)"),
            E::Lit(n) => format!("{n}L"),
            E::Neg(e) => format!("(-{})", e.render()),
            E::Bin(op @ ("<" | "=="), a, b) => format!("(long)({} {op} {})", a.render(), b.render()),
            E::Bin(op, a, b) => format!("({} {op} {})", a.render(), b.render()),
            E::DivConst(op, a, d) => format!("({} {op} {d})", a.render()),
            E::Shift(op, a, s) => format!("({} {op} {s})", a.render()),
        }
    }

    fn eval(&self, vars: &[i64]) -> i64 {
        match self {
            E::Var(i) => vars[*i],
            E::Lit(n) => *n,
            E::Neg(e) => e.eval(vars).wrapping_neg(),
            E::Bin(op, a, b) => {
                let (x, y) = (a.eval(vars), b.eval(vars));
                match *op {
                    "+" => x.wrapping_add(y),
                    "-" => x.wrapping_sub(y),
                    "*" => x.wrapping_mul(y),
                    "&" => x & y,
                    "|" => x | y,
                    "^" => x ^ y,
                    "<" => (x < y) as i64,
                    "==" => (x == y) as i64,
                    _ => unreachable!(),
                }
            }
            E::DivConst(op, a, d) => {
                let x = a.eval(vars);
                if *op == "/" { x.wrapping_div(*d) } else { x.wrapping_rem(*d) }
            }
            E::Shift(op, a, s) => {
                let x = a.eval(vars);
                if *op == "<<" { x.wrapping_shl(*s) } else { x >> s }
            }
        }
    }
}

fn expr(vars: usize) -> impl Strategy<Value = E> {
    let leaf = prop_oneof![(0..vars).prop_map(E::Var), (-100i64..100).prop_map(E::Lit)];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| E::Neg(Box::new(e))),
            (
                prop::sample::select(vec!["+", "-", "*", "&", "|", "^", "<", "=="]),
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| E::Bin(op, Box::new(a), Box::new(b))),
            (prop::sample::select(vec!["/", "%"]), inner.clone(), prop_oneof![1i64..10, -9i64..0])
                .prop_map(|(op, a, d)| E::DivConst(op, Box::new(a), d)),
            (prop::sample::select(vec!["<<", ">>"]), inner, 0u32..63)
                .prop_map(|(op, a, s)| E::Shift(op, Box::new(a), s)),
        ]
    })
}

fn straight_line() -> impl Strategy<Value = Vec<E>> {
    (expr(3), expr(4), expr(5), expr(6))
        .prop_map(|(a, b, c, d)| vec![a, b, c, d])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // HOST-only programs compute what a direct evaluation computes.
    #[test]
    fn host_programs_match_reference(steps in straight_line(), args in prop::array::uniform3(-1_000_000i64..1_000_000)) {
        let mut src = String::from("int main(long v0, long v1, long v2) {\n");
        for (i, e) in steps.iter().enumerate() {
            src += &format!("    long v{} = {};\n", i + 3, e.render());
        }
        src += "    print(v3, v4, v5, v6);\n    return 0;\n}\n";

        let mut vars = args.to_vec();
        for e in &steps {
            let v = e.eval(&vars);
            vars.push(v);
        }
        let expected = format!("{} {} {} {}\n", vars[3], vars[4], vars[5], vars[6]);

        let img = image(&src);
        let argv: Vec<String> = args.iter().map(|a| a.to_string()).collect();
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let r = exec(&img, &config(1, swuc::sim::Mode::Sequential, 0), &argv);
        prop_assert_eq!(&r.status, &Status::Exited(0));
        prop_assert_eq!(r.stdout, expected, "{}", src);
    }
}
