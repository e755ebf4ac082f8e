//! Closure conversion.
//!
//! Each lambda already has its capture record registered and its body
//! checked as `__lambdaN_call` with the record as parameter 0. This pass
//! makes that explicit: captured-variable references become field accesses
//! on the record (by-reference fields are dereferenced), closure
//! construction becomes record construction, closure invocation becomes a
//! direct call, and closure types become record types.

use crate::diag::{Code, Diagnostic};
use crate::frontend::ast::CaptureMode;
use crate::tir::*;
use crate::types::{closure_call_name, closure_record_name, Type};

pub fn closure_convert(program: &mut Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if program.closure_converted {
        return diags;
    }
    check_escapes(program, &mut diags);
    for f in program.funcs.values_mut() {
        let env = match f.origin {
            FuncOrigin::Lambda(id) => program.closures.iter().find(|c| c.id == id).map(|c| (f.params[0], c.clone())),
            _ => None,
        };
        for v in &mut f.locals {
            v.ty = v.ty.erase_closures();
        }
        f.ret = f.ret.erase_closures();
        if let Some(body) = &mut f.body {
            walk_exprs_mut(body, &mut |x| rewrite(x, env.as_ref()));
        }
    }
    for def in program.records.defs.values_mut() {
        for (_, t) in &mut def.fields {
            *t = t.erase_closures();
        }
    }
    program.closure_converted = true;
    diags
}

fn rewrite(x: &mut Expr, env: Option<&(VarId, ClosureInfo)>) {
    let span = x.span;
    match &mut x.kind {
        ExprKind::Capture(k) => {
            let (env_var, info) = env.expect("capture outside a lambda body");
            let cap = &info.captures[*k as usize];
            let record = Type::Record(closure_record_name(info.id));
            let env_expr = Expr::new(ExprKind::Var(*env_var), record, span);
            let ty = cap.ty.erase_closures();
            x.kind = match cap.mode {
                CaptureMode::ByValue => ExprKind::Member(Box::new(env_expr), cap.name.clone()),
                CaptureMode::ByRef => {
                    let field = Expr::new(
                        ExprKind::Member(Box::new(env_expr), cap.name.clone()),
                        Type::ptr(ty.clone()),
                        span,
                    );
                    ExprKind::Deref(Box::new(field))
                }
            };
        }
        ExprKind::ClosureNew { id, fields } => {
            x.kind = ExprKind::RecordNew {
                record: closure_record_name(*id),
                fields: std::mem::take(fields),
            };
        }
        ExprKind::ClosureCall { id, closure, args } => {
            let mut all = vec![std::mem::replace(
                &mut **closure,
                Expr::new(ExprKind::Int(0), Type::Int, span),
            )];
            all.append(args);
            x.kind = ExprKind::Call {
                func: closure_call_name(*id),
                args: all,
            };
        }
        _ => {}
    }
    x.ty = x.ty.erase_closures();
}

/// A closure holding the address of CPE-local storage must not be handed
/// to a kernel: the address is only meaningful on the CPE that took it.
fn check_escapes(program: &Program, diags: &mut Vec<Diagnostic>) {
    for f in program.funcs.values() {
        let Some(body) = &f.body else { continue };
        walk_exprs(body, &mut |x| {
            let ExprKind::KernelCall { kernel, args } = &x.kind else {
                return;
            };
            for a in args {
                let mut ids = Vec::new();
                closure_ids(&a.ty, program, &mut ids);
                for id in ids {
                    let Some(c) = program.closure(id) else { continue };
                    if let Some(cap) = c
                        .captures
                        .iter()
                        .find(|c| c.mode == CaptureMode::ByRef && c.is_local)
                    {
                        diags.push(
                            Diagnostic::error(
                                Code::E_LAMBDA_ESCAPE,
                                a.span,
                                format!(
                                    "closure passed to kernel `{kernel}` captures `local` variable `{}` by reference",
                                    cap.name
                                ),
                            )
                            .with_note(c.span, "lambda defined here"),
                        );
                    }
                }
            }
        });
    }
}

fn closure_ids(t: &Type, program: &Program, out: &mut Vec<u32>) {
    match t {
        Type::Closure(id) => {
            if !out.contains(id) {
                out.push(*id);
                if let Some(c) = program.closure(*id) {
                    for cap in &c.captures {
                        if cap.mode == CaptureMode::ByValue {
                            closure_ids(&cap.ty, program, out);
                        }
                    }
                }
            }
        }
        Type::Record(n) => {
            if let Some(d) = program.records.get(n) {
                for (_, ft) in &d.fields {
                    closure_ids(ft, program, out);
                }
            }
        }
        Type::Array(inner, _) => closure_ids(inner, program, out),
        _ => {}
    }
}
