mod common;

use swuc::bytecode::{CodeFunction, Instr, Kind, Slot};
use swuc::linker::LinkedImage;
use swuc::sim::{run, Context, CpeStatus, Mode, SimConfig, SimError, Status, Trap, TrapKind};

use common::*;

fn trap_of(src: &str, cfg: &SimConfig, args: &[&str]) -> Trap {
    match exec(&image(src), cfg, args).status {
        Status::Trapped(t) => t,
        other => panic!("expected a trap, got {other:?}"),
    }
}

fn seq(n: u32) -> SimConfig {
    config(n, Mode::Sequential, 0)
}

fn main_only(code: Vec<Instr>) -> LinkedImage {
    let main = CodeFunction {
        symbol: "main".into(),
        frame_size: 16,
        local_size: 0,
        ret: Slot::Scalar(Kind::I32),
        params: vec![],
        strings: vec![],
        spans: vec![Default::default(); code.len()],
        code,
    };
    LinkedImage {
        entry: "main".into(),
        functions: [("main".to_string(), main)].into_iter().collect(),
        kernel_table: vec![],
        layouts: vec![],
    }
}

#[test]
fn exit_status_is_mains_return_value() {
    let img = image("int main(int a, int b) { return a * b; }");
    assert_eq!(exec(&img, &seq(1), &["6", "7"]).status, Status::Exited(42));
}

#[test]
fn division_by_zero_traps_on_the_right_cpe() {
    let src = "__attribute((kernel)) void k(int* out, int z) { out[cpe_id()] = 10 / (cpe_id() - z); }
               int main(int z) { int out[64]; k(out, z); return out[0]; }";
    let t = trap_of(src, &seq(8), &["5"]);
    assert_eq!((t.kind, t.context), (TrapKind::Div0, Context::Cpe(5)));
    let st = t.launch.unwrap();
    assert_eq!(st.iter().filter(|s| **s == CpeStatus::Completed).count(), 5);
    assert_eq!(st[5], CpeStatus::Trapped);
    assert!(st[6..].iter().all(|s| *s == CpeStatus::Pending));
}

#[test]
fn runaway_recursion_is_out_of_memory() {
    let src = "int down(long n) { return down(n + 1) + 1; } int main() { return down(0); }";
    let cfg = SimConfig { max_call_depth: 500, ..seq(1) };
    let t = trap_of(src, &cfg, &[]);
    assert_eq!((t.kind, t.context), (TrapKind::Oom, Context::Mpe));
}

#[test]
fn oversized_local_array_is_out_of_memory() {
    let src = "__attribute((kernel)) void k() { local long big[40000]; big[0] = 1; }
               int main() { k(); return 0; }";
    let t = trap_of(src, &seq(2), &[]);
    assert_eq!((t.kind, t.context), (TrapKind::Oom, Context::Cpe(0)));
}

#[test]
fn dma_edge_cases() {
    let src = "__attribute((kernel)) void k(long* a, long n) {
                   local long la[8];
                   dma_get(la, a, n);
                   la[0] += 1;
                   dma_put(a, la, n);
               }
               int main(long n) { long a[8]; a[0] = 41; k(a, n); return (int)a[0]; }";
    let img = image(src);
    // Size zero moves nothing.
    assert_eq!(exec(&img, &seq(1), &["0"]).status, Status::Exited(41));
    assert_eq!(exec(&img, &seq(1), &["8"]).status, Status::Exited(42));
    match exec(&img, &seq(1), &["-8"]).status {
        Status::Trapped(t) => assert_eq!(t.kind, TrapKind::Oob),
        other => panic!("{other:?}"),
    }
    // Past the end of local memory.
    match exec(&img, &seq(1), &["300000"]).status {
        Status::Trapped(t) => assert_eq!(t.kind, TrapKind::Oob),
        other => panic!("{other:?}"),
    }
}

#[test]
fn slave_only_builtins_trap_on_the_mpe() {
    let cpe_id = main_only(vec![Instr::CpeId, Instr::RetVal]);
    let t = match exec(&cpe_id, &seq(1), &[]).status {
        Status::Trapped(t) => t,
        other => panic!("{other:?}"),
    };
    assert_eq!((t.kind, t.context), (TrapKind::CpeIdFromMpe, Context::Mpe));

    let dma = main_only(vec![
        Instr::FrameAddr(0),
        Instr::FrameAddr(8),
        Instr::PushInt(8),
        Instr::DmaGet,
        Instr::PushInt(0),
        Instr::RetVal,
    ]);
    match exec(&dma, &seq(1), &[]).status {
        Status::Trapped(t) => assert_eq!(t.kind, TrapKind::DmaFromMpe),
        other => panic!("{other:?}"),
    }
}

#[test]
fn launches_are_full_barriers() {
    // Each launch reads what the MPE and the previous launch wrote.
    let src = "__attribute((kernel)) void bump(long* a, long n) {
                   for (long i = cpe_id(); i < n; i += n_cpes()) { a[i] = a[i] * 2 + 1; }
               }
               int main(long n) {
                   long a[300];
                   for (long i = 0; i < n; i++) { a[i] = i; }
                   bump(a, n);
                   bump(a, n);
                   long s = 0;
                   for (long i = 0; i < n; i++) { s += a[i]; }
                   print(s);
                   return 0;
               }";
    let img = image(src);
    let n = 300i64;
    let expected: i64 = (0..n).map(|i| (i * 2 + 1) * 2 + 1).sum();
    for cpes in [1, 7, 64] {
        for mode in [Mode::Sequential, Mode::Interleaved] {
            let r = exec(&img, &config(cpes, mode, 11), &["300"]);
            assert_eq!(r.stdout, format!("{expected}\n"));
        }
    }
}

#[test]
fn interleaving_really_interleaves() {
    // Unsynchronized read-modify-write of one counter loses updates only
    // when CPE threads actually overlap.
    let src = "__attribute((kernel)) void race(long* c, long n) {
                   for (long i = 0; i < n; i++) { long v = c[0]; c[0] = v + 1; }
               }
               int main(long n) { long c[1]; c[0] = 0; race(c, n); print(c[0]); return 0; }";
    let img = image(src);
    let seq_out = exec(&img, &seq(8), &["200"]).stdout;
    assert_eq!(seq_out, "1600\n");
    let lost = (0..10).any(|seed| exec(&img, &config(8, Mode::Interleaved, seed), &["200"]).stdout != seq_out);
    assert!(lost, "no seed produced a lost update");
    let a = exec(&img, &config(8, Mode::Interleaved, 3), &["200"]);
    let b = exec(&img, &config(8, Mode::Interleaved, 3), &["200"]);
    assert_eq!(a, b, "a seed must fix the schedule");
}

#[test]
fn output_is_flushed_in_cpe_order() {
    let src = "__attribute((kernel)) void hello() { print(\"cpe\", cpe_id()); }
               int main() { print(\"before\"); hello(); print(\"after\"); return 0; }";
    let img = image(src);
    let mut expected = String::from("before\n");
    for i in 0..4 {
        expected += &format!("cpe {i}\n");
    }
    expected += "after\n";
    for mode in [Mode::Sequential, Mode::Interleaved] {
        assert_eq!(exec(&img, &config(4, mode, 5), &[]).stdout, expected);
    }
}

#[test]
fn trace_records_each_launch() {
    let img = image(&corpus("vector_add.swc"));
    let cfg = SimConfig { trace: true, ..seq(16) };
    let r = exec(&img, &cfg, &["10"]);
    assert_eq!(
        r.trace,
        vec![
            "LAUNCH slave_spawn__vector_add$int_wrapper block=24B cpes=16",
            "LAUNCH slave_spawn__vector_add$float_wrapper block=24B cpes=16",
        ]
    );
}

#[test]
fn trap_report_names_place_and_launch_state() {
    let t = trap_of(&corpus("isolation.swc"), &seq(64), &["1"]);
    let text = t.to_string();
    assert!(text.contains("trap[TRAP_OOB]"), "{text}");
    assert!(text.contains("on CPE 1, in `slave_leak`"), "{text}");
    assert!(text.contains("1 completed, 1 trapped, 62 pending"), "{text}");
}

#[test]
fn bad_configuration_and_arguments() {
    let img = image("int main(int a) { return a; }");
    let zero = SimConfig { n_cpes: 0, ..SimConfig::default() };
    assert!(matches!(run(&img, &zero, &["1".into()]), Err(SimError::Config(_))));
    assert!(matches!(run(&img, &seq(1), &[]), Err(SimError::Args(_))));
    assert!(matches!(run(&img, &seq(1), &["x".into()]), Err(SimError::Args(_))));
}
