mod common;

use std::path::Path;
use std::process::Output;

use common::{corpus_dir, swucc, RACE_FREE};

fn swucc_run(args: &[&str]) -> Output {
    swucc().args(args).env_remove("SWUCC_COLOR").output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn corpus_path(name: &str) -> String {
    corpus_dir().join(name).to_string_lossy().into_owned()
}

fn write(dir: &Path, name: &str, src: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, src).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_reports_mains_return_value() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "ret.swc", "int main(int x) { print(x); return x + 1; }");
    let out = swucc_run(&["run", &f, "--", "6"]);
    assert_eq!(out.status.code(), Some(7));
    assert_eq!(text(&out.stdout), "6\n");
}

#[test]
fn compile_errors_exit_one_with_located_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "bad.swc",
        "__attribute((slave)) int s() { return 1; }\nint main() { return s(); }\n",
    );
    let out = swucc_run(&["check", &f]);
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("bad.swc:2:"), "{err}");
    assert!(err.contains("error[E_TARGET_MISMATCH]"), "{err}");
    assert!(!err.contains('\x1b'), "no color unless asked");
}

#[test]
fn color_can_be_forced() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "bad.swc", "int main() { return cpe_id(); }\n");
    let flag = swucc_run(&["--color", "always", "check", &f]);
    assert!(text(&flag.stderr).contains('\x1b'));
    let env = swucc().args(["check", &f]).env("SWUCC_COLOR", "always").output().unwrap();
    assert!(text(&env.stderr).contains('\x1b'));
}

#[test]
fn usage_problems_exit_two() {
    assert_eq!(swucc_run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(swucc_run(&["run"]).status.code(), Some(2));
    assert_eq!(swucc_run(&["run", "/nonexistent/x.swc"]).status.code(), Some(2));
    let bad_argv = swucc_run(&["run", &corpus_path("fig1_migration.swc"), "--", "many"]);
    assert_eq!(bad_argv.status.code(), Some(2));
    let bad_cpes = swucc_run(&["run", &corpus_path("fig1_migration.swc"), "--cpes", "0", "--", "1"]);
    assert_eq!(bad_cpes.status.code(), Some(2));
}

#[test]
fn traps_exit_101_with_report() {
    let out = swucc_run(&["run", &corpus_path("isolation.swc"), "--", "0"]);
    assert_eq!(out.status.code(), Some(101));
    let err = text(&out.stderr);
    assert!(err.contains("isolation.swc:16:"), "{err}");
    assert!(err.contains("trap[TRAP_LOCAL_FROM_MPE]"), "{err}");
}

#[test]
fn build_then_exec_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    for (name, args) in RACE_FREE {
        let img = dir.path().join(name.replace(".swc", ".swcimg"));
        let img = img.to_string_lossy();
        let b = swucc_run(&["build", &corpus_path(name), "-o", &img]);
        assert!(b.status.success(), "{}", text(&b.stderr));
        let flags = ["--cpes", "8", "--mode", "interleave", "--seed", "4", "--trace", "--"];
        let src = corpus_path(name);
        let mut run_args = vec!["run", &src];
        run_args.extend(flags);
        run_args.extend(args.iter());
        let mut exec_args = vec!["exec", img.as_ref()];
        exec_args.extend(flags);
        exec_args.extend(args.iter());
        let (r, e) = (swucc_run(&run_args), swucc_run(&exec_args));
        assert_eq!(r.status.code(), Some(0), "{name}: {}", text(&r.stderr));
        assert_eq!(r.stdout, e.stdout, "{name}");
        assert_eq!(r.stderr, e.stderr, "{name}");
    }
}

#[test]
fn builds_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.swcimg"), dir.path().join("b.swcimg"));
    for out in [&a, &b] {
        let o = swucc_run(&["build", &corpus_path("stencil_records.swc"), "-o", &out.to_string_lossy()]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn side_modules_link_into_a_working_image() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus_path("fig1_migration.swc");
    let host = dir.path().join("fig1.host.swcmod").to_string_lossy().into_owned();
    let slave = dir.path().join("fig1.slave.swcmod").to_string_lossy().into_owned();
    let img = dir.path().join("fig1.swcimg").to_string_lossy().into_owned();
    assert!(swucc_run(&["build", &src, "--side", "host", "-o", &host]).status.success());
    assert!(swucc_run(&["build", &src, "--side", "slave", "-o", &slave]).status.success());
    let l = swucc_run(&["link", &host, &slave, "-o", &img]);
    assert!(l.status.success(), "{}", text(&l.stderr));
    let linked = swucc_run(&["exec", &img, "--", "100"]);
    let direct = swucc_run(&["run", &src, "--", "100"]);
    assert_eq!(linked.status.code(), Some(0));
    assert_eq!(linked.stdout, direct.stdout);
}

#[test]
fn corrupt_images_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("x.swcimg");
    let o = swucc_run(&["build", &corpus_path("reduction.swc"), "-o", &img.to_string_lossy()]);
    assert!(o.status.success());
    let mut bytes = std::fs::read(&img).unwrap();
    bytes[0] = b'X';
    std::fs::write(&img, &bytes).unwrap();
    let out = swucc_run(&["exec", &img.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("E_IMG_MAGIC"), "{}", text(&out.stderr));
}

#[test]
fn emit_targets_lists_every_function() {
    let out = swucc_run(&["check", &corpus_path("stencil_records.swc"), "--emit-targets"]);
    assert!(out.status.success());
    assert_eq!(
        text(&out.stdout),
        "at\tSLAVE\nclamp\tBOTH\nmain\tHOST\nsmooth\tSLAVE\nstep\tSLAVE\n"
    );
}

#[test]
fn emit_split_writes_both_listings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_string_lossy().into_owned();
    let out = swucc_run(&["emit-split", &corpus_path("cpe_lambda.swc"), "-o", &d]);
    assert!(out.status.success());
    let host = std::fs::read_to_string(dir.path().join("cpe_lambda.host.ir.txt")).unwrap();
    let slave = std::fs::read_to_string(dir.path().join("cpe_lambda.slave.ir.txt")).unwrap();
    assert!(host.starts_with("; module HOST"));
    assert!(slave.starts_with("; module SLAVE"));
    assert!(host.contains("function map_ids$lambda0_launch "), "{host}");
    assert!(slave.contains("function slave_apply$lambda0 "), "{slave}");
    assert!(!host.contains("function apply$lambda0 "), "apply is SLAVE only");
}
