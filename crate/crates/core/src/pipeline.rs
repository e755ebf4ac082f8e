//! The compilation pipeline as a library API.

use crate::diag::{has_errors, Diagnostic};
use crate::frontend::{frontend_check, parse_source};
use crate::linker::{link, link_modules, LinkedImage};
use crate::sema::{build_program_graph, check_call_legality, infer_targets, ProgramGraph, Side};
use crate::tir::Program;
use crate::transform::closure::closure_convert;
use crate::transform::mono::{monomorphize, MonoOptions};
use crate::transform::split::{lower_kernels, lower_side, split_for_target, TargetModule};

/// A program that passed every check, with its resolved call graph.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub program: Program,
    pub graph: ProgramGraph,
    /// Warnings only.
    pub diagnostics: Vec<Diagnostic>,
}

fn gate(diags: &[Diagnostic]) -> Result<(), Vec<Diagnostic>> {
    if has_errors(diags) {
        Err(diags.to_vec())
    } else {
        Ok(())
    }
}

/// Front end, monomorphization, closure conversion and target analysis.
pub fn analyze(source: &str, opts: &MonoOptions) -> Result<Analysis, Vec<Diagnostic>> {
    let parsed = parse_source(source)?;
    let mut diags = parsed.diagnostics;
    diags.extend(frontend_check(&parsed.unit));
    gate(&diags)?;
    let mono = monomorphize(&parsed.unit, opts);
    diags.extend(mono.diagnostics);
    gate(&diags)?;
    let mut program = mono.program;
    diags.extend(closure_convert(&mut program));
    gate(&diags)?;
    let (mut graph, d) = build_program_graph(&program);
    diags.extend(d);
    gate(&diags)?;
    diags.extend(infer_targets(&mut graph));
    diags.extend(check_call_legality(&program, &graph));
    gate(&diags)?;
    Ok(Analysis {
        program,
        graph,
        diagnostics: diags,
    })
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub analysis: Analysis,
    pub host: TargetModule,
    pub slave: TargetModule,
}

/// Single-source compilation into both target modules.
pub fn compile(source: &str) -> Result<Compiled, Vec<Diagnostic>> {
    let analysis = analyze(source, &MonoOptions::default())?;
    let targets = &analysis.graph.resolved_targets;
    let mut host = split_for_target(&analysis.program, targets, Side::Host);
    let mut slave = split_for_target(&analysis.program, targets, Side::Slave);
    lower_kernels(&mut host, &mut slave, &analysis.program);
    Ok(Compiled {
        analysis,
        host,
        slave,
    })
}

/// Compiles and links; returns the image and any warnings.
pub fn build(source: &str) -> Result<(LinkedImage, Vec<Diagnostic>), Vec<Diagnostic>> {
    let c = compile(source)?;
    let img = link(&c.host, &c.slave)?;
    Ok((img, c.analysis.diagnostics))
}

/// One pass of separate compilation: only code reachable from functions
/// declared for `side` is checked and instantiated, and only that side's
/// module is produced. Generic instances needed by the other side are not
/// shared.
pub fn compile_side(source: &str, side: Side) -> Result<(TargetModule, Vec<Diagnostic>), Vec<Diagnostic>> {
    let analysis = analyze(source, &MonoOptions { root_side: Some(side) })?;
    let mut m = split_for_target(&analysis.program, &analysis.graph.resolved_targets, side);
    lower_side(&mut m, &analysis.program);
    Ok((m, analysis.diagnostics))
}

/// Separate compilation of a host file set and a slave file set, then link.
pub fn build_separately(
    host_source: &str,
    slave_source: &str,
) -> Result<(LinkedImage, Vec<Diagnostic>), Vec<Diagnostic>> {
    let (host, mut warnings) = compile_side(host_source, Side::Host)?;
    let (slave, w) = compile_side(slave_source, Side::Slave)?;
    warnings.extend(w);
    let img = link_modules(&[host, slave])?;
    Ok((img, warnings))
}
