//! Type checking fused with worklist monomorphization.
//!
//! Bodies are checked one function instance at a time. A call to a generic
//! function deduces (or reads) the type argument, names the instance
//! `g$arg` and enqueues it, so generic bodies are only ever checked at
//! concrete types. Lambdas get a global id as they are checked; their
//! bodies become `__lambdaN_call` functions whose captured variables are
//! still `Capture` nodes (see closure conversion).

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use crate::diag::{Code, Diagnostic, Span};
use crate::frontend::ast::{self, CaptureMode, FunctionDecl, RawTargetSpec, TypeExpr, UnOp};
use crate::sema::target::{explicit_target, Side, TargetSet};
use crate::tir::*;
use crate::types::{closure_call_name, closure_record_name, instance_name, RecordDef, RecordTable, Type};

/// Deepest allowed chain of instantiations started from a non-generic root.
pub const MAX_INST_DEPTH: usize = 64;

/// Prefixes reserved for generated symbols.
pub const RESERVED_PREFIXES: [&str; 2] = ["slave_", "__lambda"];

#[derive(Debug, Clone, Copy, Default)]
pub struct MonoOptions {
    /// Separate-compilation pass: only functions whose declared target
    /// includes this side (or is inferred) seed the worklist.
    pub root_side: Option<Side>,
}

#[derive(Debug, Clone)]
pub struct MonoOutput {
    pub program: Program,
    pub diagnostics: Vec<Diagnostic>,
}

/// Error already reported as a diagnostic.
#[derive(Debug)]
struct Reported;

type R<T> = Result<T, Reported>;

struct FnEntry<'a> {
    decl: &'a FunctionDecl,
    spec: RawTargetSpec,
}

struct Request {
    name: String,
    source: String,
    arg: Option<Type>,
    depth: usize,
}

struct LambdaSig {
    params: Vec<Type>,
    ret: Type,
}

pub fn monomorphize(unit: &ast::SourceUnit, opts: &MonoOptions) -> MonoOutput {
    let mut c = Checker {
        fns: BTreeMap::new(),
        records: RecordTable::default(),
        diags: Vec::new(),
        funcs: BTreeMap::new(),
        queue: VecDeque::new(),
        requested: HashSet::new(),
        instantiations: Vec::new(),
        closures: Vec::new(),
        lambda_sigs: HashMap::new(),
        next_lambda: 0,
    };
    c.collect_records(unit);
    c.collect_functions(unit);
    let roots: Vec<String> = c
        .fns
        .iter()
        .filter(|(_, e)| e.decl.type_param.is_none() && e.decl.body.is_some())
        .filter(|(_, e)| match opts.root_side {
            None => true,
            Some(side) => explicit_target(&e.spec).is_none_or(|t| t.contains(side)),
        })
        .map(|(n, _)| n.clone())
        .collect();
    for name in roots {
        c.request(name.clone(), name, None, 0);
    }
    while let Some(req) = c.queue.pop_front() {
        c.check_function(req);
    }
    MonoOutput {
        program: Program {
            records: c.records,
            funcs: c.funcs,
            instantiations: c.instantiations,
            closures: c.closures,
            closure_converted: false,
        },
        diagnostics: c.diags,
    }
}

struct Checker<'a> {
    fns: BTreeMap<String, FnEntry<'a>>,
    records: RecordTable,
    diags: Vec<Diagnostic>,
    funcs: BTreeMap<String, Func>,
    queue: VecDeque<Request>,
    requested: HashSet<String>,
    instantiations: Vec<Instantiation>,
    closures: Vec<ClosureInfo>,
    lambda_sigs: HashMap<u32, LambdaSig>,
    next_lambda: u32,
}

/// Per-body checking state.
struct Cx {
    fn_name: String,
    type_param: Option<(String, Type)>,
    locals: Vec<LocalVar>,
    scopes: Vec<HashMap<String, VarId>>,
    /// Declared return type, or `None` for a lambda still deducing it.
    ret: Option<Type>,
    loops: usize,
    depth: usize,
    lambda: Option<LambdaScope>,
}

/// Enclosing function's visible variables, for capture resolution.
struct LambdaScope {
    mode: CaptureMode,
    outer_scopes: Vec<HashMap<String, VarId>>,
    outer_locals: Vec<LocalVar>,
    captures: Vec<CaptureInfo>,
}

enum Lookup {
    Var(VarId),
    Capture(u32),
}

impl Cx {
    fn new(fn_name: &str, type_param: Option<(String, Type)>, ret: Option<Type>, depth: usize) -> Self {
        Cx {
            fn_name: fn_name.to_string(),
            type_param,
            locals: Vec::new(),
            scopes: vec![HashMap::new()],
            ret,
            loops: 0,
            depth,
            lambda: None,
        }
    }

    fn declare(&mut self, name: &str, ty: Type, is_local: bool, span: Span) -> Result<VarId, Span> {
        let scope = self.scopes.last_mut().unwrap();
        if let Some(prev) = scope.get(name) {
            return Err(self.locals[prev.0 as usize].span);
        }
        let id = VarId(self.locals.len() as u32);
        self.locals.push(LocalVar {
            name: name.to_string(),
            ty,
            is_local,
            span,
        });
        self.scopes.last_mut().unwrap().insert(name.to_string(), id);
        Ok(id)
    }

    fn lookup(&mut self, name: &str) -> Option<Lookup> {
        for s in self.scopes.iter().rev() {
            if let Some(v) = s.get(name) {
                return Some(Lookup::Var(*v));
            }
        }
        let lam = self.lambda.as_mut()?;
        if let Some(k) = lam.captures.iter().position(|c| c.name == name) {
            return Some(Lookup::Capture(k as u32));
        }
        let var = lam.outer_scopes.iter().rev().find_map(|s| s.get(name).copied())?;
        let lv = &lam.outer_locals[var.0 as usize];
        lam.captures.push(CaptureInfo {
            name: name.to_string(),
            var,
            mode: lam.mode,
            ty: lv.ty.clone(),
            is_local: lv.is_local,
        });
        Some(Lookup::Capture(lam.captures.len() as u32 - 1))
    }

    fn var_ty(&self, v: VarId) -> &Type {
        &self.locals[v.0 as usize].ty
    }

    fn capture(&self, k: u32) -> &CaptureInfo {
        &self.lambda.as_ref().unwrap().captures[k as usize]
    }
}

fn e(kind: ExprKind, ty: Type, span: Span) -> Expr {
    Expr::new(kind, ty, span)
}

fn arith_rank(t: &Type) -> u8 {
    match t {
        Type::Bool | Type::Int => 1,
        Type::Long => 2,
        Type::Float => 3,
        Type::Double => 4,
        _ => 0,
    }
}

/// Usual arithmetic conversions.
fn common_type(a: &Type, b: &Type) -> Type {
    match arith_rank(a).max(arith_rank(b)) {
        4 => Type::Double,
        3 => Type::Float,
        2 => Type::Long,
        _ => Type::Int,
    }
}

fn decayed(t: &Type) -> Type {
    match t {
        Type::Array(inner, _) => Type::ptr((**inner).clone()),
        other => other.clone(),
    }
}

fn is_null_literal(x: &Expr) -> bool {
    matches!(x.kind, ExprKind::Int(0))
}

impl<'a> Checker<'a> {
    fn err(&mut self, code: Code, span: Span, msg: impl Into<String>) -> Reported {
        self.diags.push(Diagnostic::error(code, span, msg));
        Reported
    }

    // ---- declarations ----

    fn collect_records(&mut self, unit: &ast::SourceUnit) {
        let mut seen: HashMap<&str, Span> = HashMap::new();
        let mut decls = Vec::new();
        for r in unit.records() {
            if let Some(prev) = seen.get(r.name.as_str()) {
                let d = Diagnostic::error(
                    Code::E_REDEFINED,
                    r.span,
                    format!("redefinition of record `{}`", r.name),
                )
                .with_note(*prev, "previous definition is here");
                self.diags.push(d);
                continue;
            }
            if RESERVED_PREFIXES.iter().any(|p| r.name.starts_with(p)) {
                let _ = self.err(
                    Code::E_RESERVED_NAME,
                    r.span,
                    format!("record name `{}` is reserved", r.name),
                );
                continue;
            }
            seen.insert(&r.name, r.span);
            decls.push(r);
            // Register the name first so fields may refer to later records.
            self.records.insert(RecordDef {
                name: r.name.clone(),
                fields: Vec::new(),
                span: r.span,
                synthesized: false,
            });
        }
        let mut defs = Vec::new();
        for r in &decls {
            let mut fields: Vec<(String, Type)> = Vec::new();
            for f in &r.fields {
                if fields.iter().any(|(n, _)| *n == f.name) {
                    let _ = self.err(
                        Code::E_REDEFINED,
                        f.span,
                        format!("duplicate field `{}` in record `{}`", f.name, r.name),
                    );
                    continue;
                }
                let mut cx = Cx::new("", None, None, 0);
                if let Ok(t) = self.resolve_type(&mut cx, &f.ty, f.span) {
                    if matches!(t, Type::Void) {
                        let _ = self.err(Code::E_TYPE, f.span, format!("field `{}` has type void", f.name));
                        continue;
                    }
                    fields.push((f.name.clone(), t));
                }
            }
            defs.push(RecordDef {
                name: r.name.clone(),
                fields,
                span: r.span,
                synthesized: false,
            });
        }
        for d in defs {
            self.records.insert(d);
        }
        // A record may not contain itself by value.
        for r in &decls {
            if self.contains_by_value(&r.name, &Type::Record(r.name.clone()), &mut Vec::new(), true) {
                let _ = self.err(
                    Code::E_TYPE,
                    r.span,
                    format!("record `{}` contains itself by value", r.name),
                );
                if let Some(d) = self.records.defs.get_mut(&r.name) {
                    d.fields.clear();
                }
            }
        }
    }

    fn contains_by_value(&self, target: &str, t: &Type, stack: &mut Vec<String>, top: bool) -> bool {
        match t {
            Type::Array(inner, _) => self.contains_by_value(target, inner, stack, false),
            Type::Record(n) => {
                if !top && n == target {
                    return true;
                }
                if stack.contains(n) {
                    return false;
                }
                stack.push(n.clone());
                let found = self.records.get(n).is_some_and(|d| {
                    d.fields
                        .iter()
                        .any(|(_, ft)| self.contains_by_value(target, ft, stack, false))
                });
                stack.pop();
                found
            }
            _ => false,
        }
    }

    fn collect_functions(&mut self, unit: &'a ast::SourceUnit) {
        for f in unit.functions() {
            if Builtin::from_name(&f.name).is_some()
                || RESERVED_PREFIXES.iter().any(|p| f.name.starts_with(p))
            {
                let _ = self.err(
                    Code::E_RESERVED_NAME,
                    f.span,
                    format!("function name `{}` is reserved", f.name),
                );
                continue;
            }
            if self.records.get(&f.name).is_some() {
                let _ = self.err(
                    Code::E_REDEFINED,
                    f.span,
                    format!("`{}` is already declared as a record", f.name),
                );
                continue;
            }
            match self.fns.get_mut(&f.name) {
                None => {
                    self.fns.insert(
                        f.name.clone(),
                        FnEntry {
                            decl: f,
                            spec: f.spec.clone(),
                        },
                    );
                }
                Some(prev) => {
                    let prev_span = prev.decl.span;
                    let conflict = if prev.decl.body.is_some() && f.body.is_some() {
                        Some(format!("redefinition of function `{}`", f.name))
                    } else if prev.decl.type_param.is_some() != f.type_param.is_some()
                        || prev.decl.params.len() != f.params.len()
                    {
                        Some(format!("conflicting declarations of function `{}`", f.name))
                    } else {
                        None
                    };
                    if let Some(msg) = conflict {
                        self.diags.push(
                            Diagnostic::error(Code::E_REDEFINED, f.span, msg)
                                .with_note(prev_span, "previous declaration is here"),
                        );
                        continue;
                    }
                    // Keep the definition; unmarked declarations inherit marks
                    // from whichever declaration carries them.
                    let spec = if f.spec.explicit_marks.is_empty() {
                        prev.spec.clone()
                    } else {
                        f.spec.clone()
                    };
                    if f.body.is_some() {
                        prev.decl = f;
                    }
                    prev.spec = spec;
                }
            }
        }
    }

    fn request(&mut self, name: String, source: String, arg: Option<Type>, depth: usize) {
        if self.requested.insert(name.clone()) {
            self.queue.push_back(Request {
                name,
                source,
                arg,
                depth,
            });
        }
    }

    // ---- types ----

    fn resolve_type(&mut self, cx: &mut Cx, t: &TypeExpr, span: Span) -> R<Type> {
        Ok(match t {
            TypeExpr::Int => Type::Int,
            TypeExpr::Long => Type::Long,
            TypeExpr::Float => Type::Float,
            TypeExpr::Double => Type::Double,
            TypeExpr::Bool => Type::Bool,
            TypeExpr::Void => Type::Void,
            TypeExpr::Named(n) => {
                if let Some((p, arg)) = &cx.type_param {
                    if p == n {
                        return Ok(arg.clone());
                    }
                }
                if self.records.get(n).is_some() {
                    Type::Record(n.clone())
                } else {
                    return Err(self.err(Code::E_UNDECLARED, span, format!("unknown type `{n}`")));
                }
            }
            TypeExpr::Ptr(inner) => Type::ptr(self.resolve_type(cx, inner, span)?),
            TypeExpr::Array(inner, dim) => {
                let elem = self.resolve_type(cx, inner, span)?;
                if matches!(elem, Type::Void) {
                    return Err(self.err(Code::E_TYPE, span, "array of void"));
                }
                let n = self.const_eval(cx, dim)?;
                if n <= 0 {
                    return Err(self.err(
                        Code::E_TYPE,
                        dim.span,
                        format!("array size must be positive, got {n}"),
                    ));
                }
                Type::Array(Box::new(elem), n as u64)
            }
            TypeExpr::Auto => {
                return Err(self.err(
                    Code::E_TYPE,
                    span,
                    "`auto` is only allowed in an initialized declaration",
                ))
            }
        })
    }

    fn const_eval(&mut self, cx: &mut Cx, x: &ast::Expr) -> R<i64> {
        use ast::BinOp as B;
        use ast::ExprKind as K;
        Ok(match &x.kind {
            K::Int { value, .. } => *value,
            K::SizeOf(t) => {
                let t = self.resolve_type(cx, t, x.span)?;
                self.records.size_of(&t) as i64
            }
            K::Unary(UnOp::Neg, a) => self.const_eval(cx, a)?.wrapping_neg(),
            K::Cast(TypeExpr::Int | TypeExpr::Long, a) => self.const_eval(cx, a)?,
            K::Binary(op, a, b) => {
                let a = self.const_eval(cx, a)?;
                let b = self.const_eval(cx, b)?;
                let div0 = || matches!(op, B::Div | B::Rem) && b == 0;
                if div0() {
                    return Err(self.err(Code::E_TYPE, x.span, "division by zero in constant expression"));
                }
                match op {
                    B::Add => a.wrapping_add(b),
                    B::Sub => a.wrapping_sub(b),
                    B::Mul => a.wrapping_mul(b),
                    B::Div => a.wrapping_div(b),
                    B::Rem => a.wrapping_rem(b),
                    B::Shl => a.wrapping_shl(b as u32),
                    B::Shr => a.wrapping_shr(b as u32),
                    B::BitAnd => a & b,
                    B::BitOr => a | b,
                    B::BitXor => a ^ b,
                    _ => {
                        return Err(self.err(
                            Code::E_UNSUPPORTED,
                            x.span,
                            "array size must be a constant expression",
                        ))
                    }
                }
            }
            _ => {
                return Err(self.err(
                    Code::E_UNSUPPORTED,
                    x.span,
                    "array size must be a constant expression",
                ))
            }
        })
    }

    fn param_type(&mut self, cx: &mut Cx, p: &ast::Param) -> R<Type> {
        let t = self.resolve_type(cx, &p.ty, p.span)?;
        if matches!(t, Type::Void) {
            return Err(self.err(Code::E_TYPE, p.span, format!("parameter `{}` has type void", p.name)));
        }
        Ok(decayed(&t))
    }

    /// Parameter and return types of `decl` at type argument `arg`.
    fn signature(&mut self, decl: &FunctionDecl, arg: Option<&Type>) -> R<(Vec<Type>, Type)> {
        let mut cx = Cx::new(
            &decl.name,
            decl.type_param.clone().zip(arg.cloned()),
            None,
            0,
        );
        let mut params = Vec::new();
        let mut ok = true;
        for p in &decl.params {
            match self.param_type(&mut cx, p) {
                Ok(t) => params.push(t),
                Err(_) => ok = false,
            }
        }
        let ret = self.resolve_type(&mut cx, &decl.ret, decl.span)?;
        if matches!(ret, Type::Array(..)) {
            return Err(self.err(Code::E_TYPE, decl.span, "functions cannot return arrays"));
        }
        if !ok {
            return Err(Reported);
        }
        Ok((params, ret))
    }

    // ---- functions ----

    fn check_function(&mut self, req: Request) {
        let Some(entry) = self.fns.get(&req.source) else {
            return;
        };
        let decl = entry.decl;
        let spec = entry.spec.clone();
        let is_kernel = spec.is_kernel();
        let mut cx = Cx::new(
            &req.name,
            decl.type_param.clone().zip(req.arg.clone()),
            None,
            req.depth,
        );
        let mut params = Vec::new();
        let mut failed = false;
        for p in &decl.params {
            match self.param_type(&mut cx, p) {
                Ok(t) => match cx.declare(&p.name, t, false, p.span) {
                    Ok(v) => params.push(v),
                    Err(prev) => {
                        self.diags.push(
                            Diagnostic::error(
                                Code::E_REDEFINED,
                                p.span,
                                format!("duplicate parameter `{}`", p.name),
                            )
                            .with_note(prev, "previous declaration is here"),
                        );
                        failed = true;
                    }
                },
                Err(_) => failed = true,
            }
        }
        let ret = match self.resolve_type(&mut cx, &decl.ret, decl.span) {
            Ok(Type::Array(..)) => {
                let _ = self.err(Code::E_TYPE, decl.span, "functions cannot return arrays");
                failed = true;
                Type::Void
            }
            Ok(t) => t,
            Err(_) => {
                failed = true;
                Type::Void
            }
        };
        if is_kernel && ret != Type::Void {
            let _ = self.err(
                Code::E_KERNEL_MISUSE,
                decl.span,
                format!("kernel `{}` must return void", decl.name),
            );
        }
        if decl.name == "main" && req.arg.is_none() {
            if is_kernel || decl.type_param.is_some() {
                let _ = self.err(Code::E_TYPE, decl.span, "`main` cannot be a kernel or generic");
            }
            if !matches!(ret, Type::Int | Type::Void) {
                let _ = self.err(Code::E_TYPE, decl.span, "`main` must return int or void");
            }
            for p in &params {
                if !matches!(cx.var_ty(*p), Type::Int | Type::Long) {
                    let _ = self.err(
                        Code::E_TYPE,
                        cx.locals[p.0 as usize].span,
                        "parameters of `main` must be int or long",
                    );
                }
            }
        }
        cx.ret = Some(ret.clone());
        let body = match &decl.body {
            Some(b) if !failed => {
                cx.scopes.push(HashMap::new());
                Some(self.block_stmts(&mut cx, &b.stmts))
            }
            _ => None,
        };
        if failed && decl.body.is_some() {
            return;
        }
        let origin = if req.arg.is_some() {
            FuncOrigin::Instance
        } else {
            FuncOrigin::Source
        };
        self.funcs.insert(
            req.name.clone(),
            Func {
                name: req.name,
                source_name: decl.name.clone(),
                type_arg: req.arg,
                params,
                locals: cx.locals,
                ret,
                body,
                spec,
                is_kernel,
                span: decl.span,
                origin,
            },
        );
    }

    // ---- statements ----

    fn block_stmts(&mut self, cx: &mut Cx, stmts: &[ast::Stmt]) -> Vec<Stmt> {
        let mut out = Vec::new();
        for s in stmts {
            if let Ok(s) = self.stmt(cx, s) {
                out.push(s);
            }
        }
        out
    }

    fn scoped_block(&mut self, cx: &mut Cx, stmts: &[ast::Stmt]) -> Vec<Stmt> {
        cx.scopes.push(HashMap::new());
        let out = self.block_stmts(cx, stmts);
        cx.scopes.pop();
        out
    }

    /// A statement used as a branch or loop body gets its own scope.
    fn sub_stmt(&mut self, cx: &mut Cx, s: &ast::Stmt) -> Vec<Stmt> {
        match &s.kind {
            ast::StmtKind::Block(b) => self.scoped_block(cx, &b.stmts),
            _ => self.scoped_block(cx, std::slice::from_ref(s)),
        }
    }

    fn cond(&mut self, cx: &mut Cx, c: &ast::Expr) -> R<Expr> {
        let c = self.expr(cx, c)?;
        self.coerce_bool(c)
    }

    fn coerce_bool(&mut self, c: Expr) -> R<Expr> {
        let c = self.rvalue(c);
        if !c.ty.is_scalar() {
            return Err(self.err(
                Code::E_TYPE,
                c.span,
                format!("condition of type `{}` is not a scalar", c.ty),
            ));
        }
        Ok(self.convert(c, &Type::Bool))
    }

    fn stmt(&mut self, cx: &mut Cx, s: &ast::Stmt) -> R<Stmt> {
        use ast::StmtKind as K;
        let span = s.span;
        let kind = match &s.kind {
            K::Decl(d) => return self.decl(cx, d, span),
            K::Expr(x) => {
                let x = self.expr(cx, x)?;
                StmtKind::Expr(x)
            }
            K::If { cond, then, els } => {
                let c = self.cond(cx, cond);
                let t = self.sub_stmt(cx, then);
                let e = match els {
                    Some(e) => self.sub_stmt(cx, e),
                    None => Vec::new(),
                };
                StmtKind::If {
                    cond: c?,
                    then: t,
                    els: e,
                }
            }
            K::While { cond, body } => {
                let c = self.cond(cx, cond);
                cx.loops += 1;
                let b = self.sub_stmt(cx, body);
                cx.loops -= 1;
                StmtKind::While { cond: c?, body: b }
            }
            K::For {
                init,
                cond,
                step,
                body,
            } => {
                cx.scopes.push(HashMap::new());
                let init_s = match init {
                    Some(i) => self.stmt(cx, i).map(|s| vec![s]),
                    None => Ok(Vec::new()),
                };
                let c = cond.as_ref().map(|c| self.cond(cx, c)).transpose();
                let st = step.as_ref().map(|x| self.expr(cx, x)).transpose();
                cx.loops += 1;
                let b = self.sub_stmt(cx, body);
                cx.loops -= 1;
                cx.scopes.pop();
                StmtKind::For {
                    init: init_s?,
                    cond: c?,
                    step: st?,
                    body: b,
                }
            }
            K::Return(v) => self.ret(cx, v.as_ref(), span)?,
            K::Break | K::Continue => {
                if cx.loops == 0 {
                    return Err(self.err(
                        Code::E_TYPE,
                        span,
                        format!(
                            "`{}` outside of a loop",
                            if matches!(s.kind, K::Break) { "break" } else { "continue" }
                        ),
                    ));
                }
                if matches!(s.kind, K::Break) {
                    StmtKind::Break
                } else {
                    StmtKind::Continue
                }
            }
            K::Block(b) => StmtKind::Block(self.scoped_block(cx, &b.stmts)),
        };
        Ok(Stmt { kind, span })
    }

    fn ret(&mut self, cx: &mut Cx, v: Option<&ast::Expr>, span: Span) -> R<StmtKind> {
        let value = v.map(|x| self.expr(cx, x)).transpose()?;
        match (&cx.ret, value) {
            (None, None) => {
                cx.ret = Some(Type::Void);
                Ok(StmtKind::Return(None))
            }
            (None, Some(x)) => {
                let x = self.rvalue(x);
                if matches!(x.ty, Type::Str | Type::Void) {
                    return Err(self.err(Code::E_TYPE, x.span, "cannot return this value"));
                }
                cx.ret = Some(x.ty.clone());
                Ok(StmtKind::Return(Some(x)))
            }
            (Some(Type::Void), None) => Ok(StmtKind::Return(None)),
            (Some(Type::Void), Some(x)) => Err(self.err(
                Code::E_TYPE,
                x.span,
                "returning a value from a function returning void",
            )),
            (Some(t), None) => Err(self.err(
                Code::E_TYPE,
                span,
                format!("missing return value in function returning `{t}`"),
            )),
            (Some(t), Some(x)) => {
                let t = t.clone();
                Ok(StmtKind::Return(Some(self.coerce(x, &t)?)))
            }
        }
    }

    fn decl(&mut self, cx: &mut Cx, d: &ast::Decl, span: Span) -> R<Stmt> {
        let (ty, init) = if matches!(d.ty, TypeExpr::Auto) {
            let Some(init) = &d.init else {
                return Err(self.err(Code::E_TYPE, span, "`auto` declaration needs an initializer"));
            };
            let x = self.expr(cx, init)?;
            let x = self.rvalue(x);
            if matches!(x.ty, Type::Void | Type::Str) {
                return Err(self.err(
                    Code::E_TYPE,
                    x.span,
                    format!("cannot declare a variable of type `{}`", x.ty),
                ));
            }
            (x.ty.clone(), Some(x))
        } else {
            let ty = self.resolve_type(cx, &d.ty, span)?;
            if matches!(ty, Type::Void) {
                return Err(self.err(Code::E_TYPE, span, format!("variable `{}` has type void", d.name)));
            }
            let init = match &d.init {
                Some(i) => {
                    if matches!(ty, Type::Array(..)) {
                        return Err(self.err(Code::E_TYPE, i.span, "arrays cannot be initialized"));
                    }
                    let x = self.expr(cx, i)?;
                    Some(self.coerce(x, &ty)?)
                }
                None => None,
            };
            (ty, init)
        };
        if RESERVED_PREFIXES.iter().any(|p| d.name.starts_with(p)) {
            return Err(self.err(
                Code::E_RESERVED_NAME,
                span,
                format!("variable name `{}` is reserved", d.name),
            ));
        }
        match cx.declare(&d.name, ty, d.is_local, span) {
            Ok(var) => Ok(Stmt {
                kind: StmtKind::Decl { var, init },
                span,
            }),
            Err(prev) => {
                self.diags.push(
                    Diagnostic::error(
                        Code::E_REDEFINED,
                        span,
                        format!("redeclaration of `{}`", d.name),
                    )
                    .with_note(prev, "previous declaration is here"),
                );
                Err(Reported)
            }
        }
    }

    // ---- conversions ----

    /// Decays arrays to pointers.
    fn rvalue(&mut self, x: Expr) -> Expr {
        if let Type::Array(inner, _) = &x.ty {
            let ty = Type::ptr((**inner).clone());
            let span = x.span;
            return e(ExprKind::Decay(Box::new(x)), ty, span);
        }
        x
    }

    fn convert(&mut self, x: Expr, to: &Type) -> Expr {
        if &x.ty == to {
            return x;
        }
        let span = x.span;
        e(ExprKind::Convert(Box::new(x)), to.clone(), span)
    }

    /// Implicit conversion to `to`.
    fn coerce(&mut self, x: Expr, to: &Type) -> R<Expr> {
        let x = self.rvalue(x);
        if &x.ty == to {
            return Ok(x);
        }
        let ok = match (&x.ty, to) {
            (a, b) if a.is_arith() && b.is_arith() => true,
            (Type::Int | Type::Long, Type::Ptr(_)) => is_null_literal(&x),
            (Type::Ptr(a), Type::Ptr(b)) => **a == Type::Void || **b == Type::Void,
            (Type::Ptr(_), Type::Bool) => true,
            _ => false,
        };
        if !ok {
            return Err(self.err(
                Code::E_TYPE,
                x.span,
                format!("cannot convert `{}` to `{}`", x.ty, to),
            ));
        }
        Ok(self.convert(x, to))
    }

    fn arith_operand(&mut self, x: Expr, integer_only: bool, op: &str) -> R<Expr> {
        let x = self.rvalue(x);
        let ok = if integer_only { x.ty.is_integer() } else { x.ty.is_arith() };
        if !ok {
            return Err(self.err(
                Code::E_TYPE,
                x.span,
                format!("invalid operand of type `{}` to `{op}`", x.ty),
            ));
        }
        Ok(x)
    }

    // ---- expressions ----

    fn expr(&mut self, cx: &mut Cx, x: &ast::Expr) -> R<Expr> {
        use ast::ExprKind as K;
        let span = x.span;
        match &x.kind {
            K::Int { value, long } => {
                let ty = if *long || i32::try_from(*value).is_err() {
                    Type::Long
                } else {
                    Type::Int
                };
                Ok(e(ExprKind::Int(*value), ty, span))
            }
            K::Float { value, single } => Ok(e(
                ExprKind::Float(*value),
                if *single { Type::Float } else { Type::Double },
                span,
            )),
            K::Bool(b) => Ok(e(ExprKind::Bool(*b), Type::Bool, span)),
            K::Str(s) => Ok(e(ExprKind::Str(s.clone()), Type::Str, span)),
            K::Ident(name) => self.ident(cx, name, span),
            K::Unary(op, a) => self.unary(cx, *op, a, span),
            K::Binary(op, a, b) => {
                let a = self.expr(cx, a)?;
                let b = self.expr(cx, b)?;
                self.binary(*op, a, b, span)
            }
            K::Assign(op, lhs, rhs) => self.assign(cx, *op, lhs, rhs, span),
            K::IncDec {
                inc,
                prefix,
                target,
            } => {
                let t = self.expr(cx, target)?;
                self.check_assignable(cx, &t, if *inc { "++" } else { "--" })?;
                if !(t.ty.is_arith() || t.ty.is_ptr()) || matches!(t.ty, Type::Bool) {
                    return Err(self.err(
                        Code::E_TYPE,
                        span,
                        format!("cannot increment a value of type `{}`", t.ty),
                    ));
                }
                let ty = t.ty.clone();
                Ok(e(
                    ExprKind::IncDec {
                        delta: if *inc { 1 } else { -1 },
                        post: !prefix,
                        target: Box::new(t),
                    },
                    ty,
                    span,
                ))
            }
            K::Call {
                callee,
                type_arg,
                args,
            } => self.call(cx, callee, type_arg.as_ref(), args, span),
            K::Index(a, i) => {
                let a = self.expr(cx, a)?;
                let a = self.rvalue(a);
                let Type::Ptr(elem) = a.ty.clone() else {
                    return Err(self.err(
                        Code::E_TYPE,
                        span,
                        format!("cannot index a value of type `{}`", a.ty),
                    ));
                };
                if *elem == Type::Void {
                    return Err(self.err(Code::E_TYPE, span, "cannot index a `void*`"));
                }
                let i = self.expr(cx, i)?;
                let i = self.arith_operand(i, true, "[]")?;
                let i = self.convert(i, &Type::Long);
                let p = e(ExprKind::PtrAdd(Box::new(a), Box::new(i)), Type::Ptr(elem.clone()), span);
                Ok(e(ExprKind::Deref(Box::new(p)), *elem, span))
            }
            K::Member { base, field, arrow } => {
                let b = self.expr(cx, base)?;
                let b = if *arrow {
                    let b = self.rvalue(b);
                    match b.ty.clone() {
                        Type::Ptr(inner) => e(ExprKind::Deref(Box::new(b)), *inner, span),
                        other => {
                            return Err(self.err(
                                Code::E_TYPE,
                                span,
                                format!("`->` applied to non-pointer type `{other}`"),
                            ))
                        }
                    }
                } else {
                    b
                };
                let fty = match &b.ty {
                    Type::Record(_) => self.records.field(&b.ty, field).map(|(_, t)| t),
                    _ => None,
                };
                match fty {
                    Some(t) => Ok(e(ExprKind::Member(Box::new(b), field.clone()), t, span)),
                    None => Err(self.err(
                        Code::E_TYPE,
                        span,
                        format!("type `{}` has no field `{field}`", b.ty),
                    )),
                }
            }
            K::Cast(t, a) => {
                let to = self.resolve_type(cx, t, span)?;
                let a = self.expr(cx, a)?;
                let a = self.rvalue(a);
                let ok = to == a.ty
                    || (to.is_arith() && a.ty.is_arith())
                    || (to.is_ptr() && a.ty.is_ptr())
                    || (to.is_ptr() && a.ty.is_integer())
                    || (to.is_integer() && a.ty.is_ptr());
                if !ok {
                    return Err(self.err(
                        Code::E_TYPE,
                        span,
                        format!("invalid cast from `{}` to `{to}`", a.ty),
                    ));
                }
                Ok(self.convert(a, &to))
            }
            K::SizeOf(t) => {
                let t = self.resolve_type(cx, t, span)?;
                if matches!(t, Type::Void) {
                    return Err(self.err(Code::E_TYPE, span, "sizeof(void)"));
                }
                Ok(e(ExprKind::Int(self.records.size_of(&t) as i64), Type::Long, span))
            }
            K::Lambda(l) => self.lambda(cx, l),
        }
    }

    fn ident(&mut self, cx: &mut Cx, name: &str, span: Span) -> R<Expr> {
        match cx.lookup(name) {
            Some(Lookup::Var(v)) => Ok(e(ExprKind::Var(v), cx.var_ty(v).clone(), span)),
            Some(Lookup::Capture(k)) => {
                let c = cx.capture(k);
                if c.mode == CaptureMode::ByValue && matches!(c.ty, Type::Array(..)) {
                    return Err(self.err(
                        Code::E_CAPTURE,
                        span,
                        format!("array `{name}` cannot be captured by value"),
                    ));
                }
                Ok(e(ExprKind::Capture(k), c.ty.clone(), span))
            }
            None => {
                if let Some(f) = self.fns.get(name) {
                    if f.spec.is_kernel() {
                        return Err(self.err(
                            Code::E_KERNEL_MISUSE,
                            span,
                            format!("kernel `{name}` can only be called, not used as a value"),
                        ));
                    }
                    return Err(self.err(
                        Code::E_FN_ADDR,
                        span,
                        format!("cannot take the address of function `{name}`; use a lambda"),
                    ));
                }
                if Builtin::from_name(name).is_some() {
                    return Err(self.err(
                        Code::E_FN_ADDR,
                        span,
                        format!("builtin `{name}` can only be called"),
                    ));
                }
                Err(self.err(Code::E_UNDECLARED, span, format!("use of undeclared identifier `{name}`")))
            }
        }
    }

    fn check_assignable(&mut self, cx: &Cx, t: &Expr, what: &str) -> R<()> {
        if !t.is_lvalue() {
            return Err(self.err(Code::E_TYPE, t.span, format!("operand of `{what}` is not assignable")));
        }
        if let ExprKind::Capture(k) = t.kind {
            if cx.capture(k).mode == CaptureMode::ByValue {
                return Err(self.err(
                    Code::E_TYPE,
                    t.span,
                    format!("cannot assign to `{}` captured by value", cx.capture(k).name),
                ));
            }
        }
        if matches!(t.ty, Type::Array(..)) {
            return Err(self.err(Code::E_TYPE, t.span, "arrays are not assignable"));
        }
        Ok(())
    }

    fn unary(&mut self, cx: &mut Cx, op: UnOp, a: &ast::Expr, span: Span) -> R<Expr> {
        if op == UnOp::AddrOf {
            if let ast::ExprKind::Ident(n) = &a.kind {
                if cx.scopes.iter().all(|s| !s.contains_key(n))
                    && cx.lambda.as_ref().is_none_or(|l| {
                        l.captures.iter().all(|c| c.name != *n)
                            && l.outer_scopes.iter().all(|s| !s.contains_key(n))
                    })
                    && self.fns.contains_key(n)
                {
                    let code = if self.fns[n].spec.is_kernel() {
                        Code::E_KERNEL_MISUSE
                    } else {
                        Code::E_FN_ADDR
                    };
                    return Err(self.err(code, span, format!("cannot take the address of function `{n}`")));
                }
            }
        }
        let a = self.expr(cx, a)?;
        match op {
            UnOp::Neg => {
                let a = self.arith_operand(a, false, "-")?;
                let ty = common_type(&a.ty, &Type::Int);
                let a = self.convert(a, &ty);
                Ok(e(ExprKind::Neg(Box::new(a)), ty, span))
            }
            UnOp::BitNot => {
                let a = self.arith_operand(a, true, "~")?;
                let ty = common_type(&a.ty, &Type::Int);
                let a = self.convert(a, &ty);
                Ok(e(ExprKind::BitNot(Box::new(a)), ty, span))
            }
            UnOp::Not => {
                let a = self.coerce_bool(a)?;
                Ok(e(ExprKind::Not(Box::new(a)), Type::Bool, span))
            }
            UnOp::Deref => {
                let a = self.rvalue(a);
                match a.ty.clone() {
                    Type::Ptr(inner) if *inner != Type::Void => {
                        Ok(e(ExprKind::Deref(Box::new(a)), *inner, span))
                    }
                    other => Err(self.err(
                        Code::E_TYPE,
                        span,
                        format!("cannot dereference a value of type `{other}`"),
                    )),
                }
            }
            UnOp::AddrOf => {
                if !a.is_lvalue() {
                    return Err(self.err(Code::E_TYPE, span, "cannot take the address of an rvalue"));
                }
                let ty = Type::ptr(a.ty.clone());
                Ok(e(ExprKind::AddrOf(Box::new(a)), ty, span))
            }
        }
    }

    fn binary(&mut self, op: ast::BinOp, a: Expr, b: Expr, span: Span) -> R<Expr> {
        use ast::BinOp as B;
        let a = self.rvalue(a);
        let b = self.rvalue(b);
        if op.is_logical() {
            let a = self.coerce_bool(a)?;
            let b = self.coerce_bool(b)?;
            return Ok(e(
                ExprKind::Logical {
                    and: op == B::And,
                    lhs: Box::new(a),
                    rhs: Box::new(b),
                },
                Type::Bool,
                span,
            ));
        }
        if op.is_comparison() {
            let cmp = match op {
                B::Lt => CmpOp::Lt,
                B::Le => CmpOp::Le,
                B::Gt => CmpOp::Gt,
                B::Ge => CmpOp::Ge,
                B::Eq => CmpOp::Eq,
                _ => CmpOp::Ne,
            };
            let (a, b) = if a.ty.is_arith() && b.ty.is_arith() {
                let ct = common_type(&a.ty, &b.ty);
                (self.convert(a, &ct), self.convert(b, &ct))
            } else if a.ty.is_ptr() && (a.ty == b.ty || is_null_literal(&b)) {
                let t = a.ty.clone();
                (a, self.convert(b, &t))
            } else if b.ty.is_ptr() && is_null_literal(&a) {
                let t = b.ty.clone();
                (self.convert(a, &t), b)
            } else if a.ty.is_ptr() && b.ty.is_ptr() {
                let t = Type::ptr(Type::Void);
                (self.convert(a, &t), self.convert(b, &t))
            } else {
                return Err(self.err(
                    Code::E_TYPE,
                    span,
                    format!("cannot compare `{}` with `{}`", a.ty, b.ty),
                ));
            };
            return Ok(e(ExprKind::Cmp(cmp, Box::new(a), Box::new(b)), Type::Bool, span));
        }
        // Pointer arithmetic.
        if matches!(op, B::Add | B::Sub) && (a.ty.is_ptr() || b.ty.is_ptr()) {
            if op == B::Sub && a.ty.is_ptr() && b.ty.is_ptr() {
                if a.ty != b.ty {
                    return Err(self.err(
                        Code::E_TYPE,
                        span,
                        format!("cannot subtract `{}` from `{}`", b.ty, a.ty),
                    ));
                }
                return Ok(e(ExprKind::PtrDiff(Box::new(a), Box::new(b)), Type::Long, span));
            }
            let (p, i) = if a.ty.is_ptr() { (a, b) } else { (b, a) };
            if op == B::Sub && !p.ty.is_ptr() {
                return Err(self.err(Code::E_TYPE, span, "cannot subtract a pointer from an integer"));
            }
            if p.ty.pointee() == Some(&Type::Void) {
                return Err(self.err(Code::E_TYPE, span, "arithmetic on `void*`"));
            }
            let i = self.arith_operand(i, true, op.symbol())?;
            let mut i = self.convert(i, &Type::Long);
            if op == B::Sub {
                let sp = i.span;
                i = e(ExprKind::Neg(Box::new(i)), Type::Long, sp);
            }
            let ty = p.ty.clone();
            return Ok(e(ExprKind::PtrAdd(Box::new(p), Box::new(i)), ty, span));
        }
        let (aop, integer_only) = match op {
            B::Add => (ArithOp::Add, false),
            B::Sub => (ArithOp::Sub, false),
            B::Mul => (ArithOp::Mul, false),
            B::Div => (ArithOp::Div, false),
            B::Rem => (ArithOp::Rem, true),
            B::Shl => (ArithOp::Shl, true),
            B::Shr => (ArithOp::Shr, true),
            B::BitAnd => (ArithOp::BitAnd, true),
            B::BitOr => (ArithOp::BitOr, true),
            _ => (ArithOp::BitXor, true),
        };
        let a = self.arith_operand(a, integer_only, op.symbol())?;
        let b = self.arith_operand(b, integer_only, op.symbol())?;
        let ct = common_type(&a.ty, &b.ty);
        let a = self.convert(a, &ct);
        let b = self.convert(b, &ct);
        Ok(e(ExprKind::Arith(aop, Box::new(a), Box::new(b)), ct, span))
    }

    fn assign(
        &mut self,
        cx: &mut Cx,
        op: Option<ast::BinOp>,
        lhs: &ast::Expr,
        rhs: &ast::Expr,
        span: Span,
    ) -> R<Expr> {
        use ast::BinOp as B;
        let l = self.expr(cx, lhs)?;
        let r = self.expr(cx, rhs)?;
        self.check_assignable(cx, &l, "=")?;
        let Some(op) = op else {
            if matches!(l.ty, Type::Record(_) | Type::Closure(_)) {
                let r = self.rvalue(r);
                if r.ty != l.ty {
                    return Err(self.err(
                        Code::E_TYPE,
                        r.span,
                        format!("cannot assign `{}` to `{}`", r.ty, l.ty),
                    ));
                }
                return Ok(e(
                    ExprKind::Assign {
                        op: None,
                        op_ty: l.ty.clone(),
                        lhs: Box::new(l),
                        rhs: Box::new(r),
                    },
                    Type::Void,
                    span,
                ));
            }
            let ty = l.ty.clone();
            let r = self.coerce(r, &ty)?;
            return Ok(e(
                ExprKind::Assign {
                    op: None,
                    op_ty: ty,
                    lhs: Box::new(l),
                    rhs: Box::new(r),
                },
                Type::Void,
                span,
            ));
        };
        let aop = match op {
            B::Add => ArithOp::Add,
            B::Sub => ArithOp::Sub,
            B::Mul => ArithOp::Mul,
            B::Div => ArithOp::Div,
            B::Rem => ArithOp::Rem,
            B::Shl => ArithOp::Shl,
            B::Shr => ArithOp::Shr,
            B::BitAnd => ArithOp::BitAnd,
            B::BitOr => ArithOp::BitOr,
            B::BitXor => ArithOp::BitXor,
            _ => return Err(self.err(Code::E_TYPE, span, "invalid compound assignment")),
        };
        if l.ty.is_ptr() && matches!(aop, ArithOp::Add | ArithOp::Sub) {
            if l.ty.pointee() == Some(&Type::Void) {
                return Err(self.err(Code::E_TYPE, span, "arithmetic on `void*`"));
            }
            let r = self.arith_operand(r, true, op.symbol())?;
            let r = self.convert(r, &Type::Long);
            let op_ty = l.ty.clone();
            return Ok(e(
                ExprKind::Assign {
                    op: Some(aop),
                    op_ty,
                    lhs: Box::new(l),
                    rhs: Box::new(r),
                },
                Type::Void,
                span,
            ));
        }
        let integer_only = !matches!(aop, ArithOp::Add | ArithOp::Sub | ArithOp::Mul | ArithOp::Div);
        if !(if integer_only { l.ty.is_integer() } else { l.ty.is_arith() }) {
            return Err(self.err(
                Code::E_TYPE,
                l.span,
                format!("invalid operand of type `{}` to `{}=`", l.ty, op.symbol()),
            ));
        }
        let r = self.arith_operand(r, integer_only, op.symbol())?;
        let op_ty = common_type(&l.ty, &r.ty);
        let r = self.convert(r, &op_ty);
        Ok(e(
            ExprKind::Assign {
                op: Some(aop),
                op_ty,
                lhs: Box::new(l),
                rhs: Box::new(r),
            },
            Type::Void,
            span,
        ))
    }

    // ---- calls ----

    fn call(
        &mut self,
        cx: &mut Cx,
        callee: &ast::Expr,
        type_arg: Option<&TypeExpr>,
        args: &[ast::Expr],
        span: Span,
    ) -> R<Expr> {
        if let ast::ExprKind::Ident(name) = &callee.kind {
            let is_var = cx.scopes.iter().any(|s| s.contains_key(name))
                || cx.lambda.as_ref().is_some_and(|l| {
                    l.captures.iter().any(|c| c.name == *name)
                        || l.outer_scopes.iter().any(|s| s.contains_key(name))
                });
            if !is_var {
                if let Some(b) = Builtin::from_name(name) {
                    if type_arg.is_some() {
                        return Err(self.err(Code::E_TYPE, span, format!("builtin `{name}` takes no type argument")));
                    }
                    return self.builtin(cx, b, args, span);
                }
                if self.fns.contains_key(name) {
                    return self.named_call(cx, name, type_arg, args, span);
                }
                return Err(self.err(
                    Code::E_UNDECLARED,
                    callee.span,
                    format!("call to undeclared function `{name}`"),
                ));
            }
        }
        if type_arg.is_some() {
            return Err(self.err(Code::E_TYPE, span, "type argument on a call through a variable"));
        }
        let f = self.expr(cx, callee)?;
        let Type::Closure(id) = f.ty else {
            return Err(self.err(
                Code::E_TYPE,
                callee.span,
                format!("called value of type `{}` is not a lambda", f.ty),
            ));
        };
        let sig = &self.lambda_sigs[&id];
        let (ptys, ret) = (sig.params.clone(), sig.ret.clone());
        let args = self.call_args(cx, &ptys, args, span, "lambda")?;
        Ok(e(
            ExprKind::ClosureCall {
                id,
                closure: Box::new(f),
                args,
            },
            ret,
            span,
        ))
    }

    fn call_args(
        &mut self,
        cx: &mut Cx,
        params: &[Type],
        args: &[ast::Expr],
        span: Span,
        what: &str,
    ) -> R<Vec<Expr>> {
        if params.len() != args.len() {
            return Err(self.err(
                Code::E_TYPE,
                span,
                format!("{what} expects {} argument(s), got {}", params.len(), args.len()),
            ));
        }
        let mut out = Vec::new();
        let mut failed = false;
        for (p, a) in params.iter().zip(args) {
            match self.expr(cx, a).and_then(|x| self.coerce(x, p)) {
                Ok(x) => out.push(x),
                Err(_) => failed = true,
            }
        }
        if failed {
            return Err(Reported);
        }
        Ok(out)
    }

    fn named_call(
        &mut self,
        cx: &mut Cx,
        name: &str,
        type_arg: Option<&TypeExpr>,
        args: &[ast::Expr],
        span: Span,
    ) -> R<Expr> {
        let decl = self.fns[name].decl;
        let is_kernel = self.fns[name].spec.is_kernel();
        let (target, arg) = match &decl.type_param {
            None => {
                if type_arg.is_some() {
                    return Err(self.err(
                        Code::E_TYPE,
                        span,
                        format!("`{name}` is not generic but was given a type argument"),
                    ));
                }
                (name.to_string(), None)
            }
            Some(tp) => {
                let arg = match type_arg {
                    Some(t) => self.resolve_type(cx, t, span)?,
                    None => {
                        let mut typed = Vec::new();
                        for a in args {
                            typed.push(self.expr(cx, a)?);
                        }
                        self.deduce(name, tp, decl, &typed, span)?
                    }
                };
                if matches!(arg, Type::Void | Type::Str) {
                    return Err(self.err(
                        Code::E_INFER_TYPEARG,
                        span,
                        format!("`{arg}` is not a valid type argument for `{name}`"),
                    ));
                }
                (instance_name(name, &arg), Some(arg))
            }
        };
        let (ptys, ret) = self.signature(decl, arg.as_ref())?;
        let args = self.call_args(cx, &ptys, args, span, &format!("function `{name}`"))?;
        if let Some(arg) = &arg {
            let depth = cx.depth + 1;
            if !self.requested.contains(&target) && depth > MAX_INST_DEPTH {
                return Err(self.err(
                    Code::E_RECURSIVE_INST,
                    span,
                    format!(
                        "instantiation of `{target}` exceeds the maximum depth of {MAX_INST_DEPTH}"
                    ),
                ));
            }
            self.note_instance(name, arg, &target, span);
            self.request(target.clone(), name.to_string(), Some(arg.clone()), depth);
        } else {
            self.request(target.clone(), name.to_string(), None, 0);
        }
        if is_kernel {
            return Ok(e(ExprKind::KernelCall { kernel: target, args }, Type::Void, span));
        }
        Ok(e(ExprKind::Call { func: target, args }, ret, span))
    }

    fn note_instance(&mut self, generic: &str, arg: &Type, mangled: &str, span: Span) {
        match self.instantiations.iter_mut().find(|i| i.mangled_name == mangled) {
            Some(i) => {
                if !i.origin_sites.contains(&span) {
                    i.origin_sites.push(span)
                }
            }
            None => self.instantiations.push(Instantiation {
                generic_name: generic.to_string(),
                type_argument: arg.clone(),
                mangled_name: mangled.to_string(),
                origin_sites: vec![span],
            }),
        }
    }

    /// Deduces the type parameter from argument types.
    fn deduce(
        &mut self,
        name: &str,
        tp: &str,
        decl: &FunctionDecl,
        args: &[Expr],
        span: Span,
    ) -> R<Type> {
        let mut binding: Option<(Type, Span)> = None;
        for (p, a) in decl.params.iter().zip(args) {
            let mut found = Vec::new();
            unify(&p.ty, &decayed(&a.ty), tp, &mut found);
            for t in found {
                match &binding {
                    None => binding = Some((t, a.span)),
                    Some((prev, prev_span)) if *prev != t => {
                        let d = Diagnostic::error(
                            Code::E_INFER_TYPEARG,
                            a.span,
                            format!(
                                "conflicting deductions for `{tp}` in call to `{name}`: `{prev}` and `{t}`"
                            ),
                        )
                        .with_note(*prev_span, format!("`{tp}` deduced as `{prev}` here"));
                        self.diags.push(d);
                        return Err(Reported);
                    }
                    _ => {}
                }
            }
        }
        match binding {
            Some((t, _)) => Ok(t),
            None => Err(self.err(
                Code::E_INFER_TYPEARG,
                span,
                format!("cannot deduce `{tp}` for call to `{name}`; write `{name}<type>(...)`"),
            )),
        }
    }

    fn builtin(&mut self, cx: &mut Cx, b: Builtin, args: &[ast::Expr], span: Span) -> R<Expr> {
        let mut typed = Vec::new();
        for a in args {
            let x = self.expr(cx, a)?;
            typed.push(self.rvalue(x));
        }
        let arity = |n: usize, this: &mut Self| -> R<()> {
            if typed.len() != n {
                return Err(this.err(
                    Code::E_TYPE,
                    span,
                    format!("`{}` expects {n} argument(s), got {}", b.name(), typed.len()),
                ));
            }
            Ok(())
        };
        match b {
            Builtin::CpeId | Builtin::NCpes => {
                arity(0, self)?;
                Ok(e(ExprKind::Builtin(b, vec![]), Type::Int, span))
            }
            Builtin::DmaGet | Builtin::DmaPut => {
                arity(3, self)?;
                let mut it = typed.into_iter();
                let dst = it.next().unwrap();
                let src = it.next().unwrap();
                let n = it.next().unwrap();
                for p in [&dst, &src] {
                    if !p.ty.is_ptr() {
                        return Err(self.err(
                            Code::E_TYPE,
                            p.span,
                            format!("`{}` expects a pointer, got `{}`", b.name(), p.ty),
                        ));
                    }
                }
                let n = self.arith_operand(n, true, b.name())?;
                let n = self.convert(n, &Type::Long);
                Ok(e(ExprKind::Builtin(b, vec![dst, src, n]), Type::Void, span))
            }
            Builtin::Print => {
                for a in &typed {
                    if !(a.ty.is_scalar() || a.ty == Type::Str) {
                        return Err(self.err(
                            Code::E_TYPE,
                            a.span,
                            format!("cannot print a value of type `{}`", a.ty),
                        ));
                    }
                }
                Ok(e(ExprKind::Builtin(b, typed), Type::Void, span))
            }
            Builtin::Min => {
                arity(2, self)?;
                let mut it = typed.into_iter();
                let x = self.arith_operand(it.next().unwrap(), false, "min")?;
                let y = self.arith_operand(it.next().unwrap(), false, "min")?;
                let ct = common_type(&x.ty, &y.ty);
                let x = self.convert(x, &ct);
                let y = self.convert(y, &ct);
                Ok(e(ExprKind::Builtin(b, vec![x, y]), ct, span))
            }
        }
    }

    // ---- lambdas ----

    fn lambda(&mut self, cx: &mut Cx, l: &ast::Lambda) -> R<Expr> {
        if cx.lambda.is_some() {
            return Err(self.err(
                Code::E_UNSUPPORTED,
                l.span,
                "lambda expressions cannot be nested inside lambda bodies",
            ));
        }
        let id = self.next_lambda;
        self.next_lambda += 1;
        let call_name = closure_call_name(id);
        let mut inner = Cx::new(&call_name, cx.type_param.clone(), None, cx.depth);
        inner.lambda = Some(LambdaScope {
            mode: l.capture,
            outer_scopes: cx.scopes.clone(),
            outer_locals: cx.locals.clone(),
            captures: Vec::new(),
        });
        // Parameter 0 is the closure record itself.
        let env = inner
            .declare("", Type::Closure(id), false, l.span)
            .expect("fresh scope");
        let mut params = vec![env];
        let mut ptys = Vec::new();
        let mut failed = false;
        for p in &l.params {
            match self.param_type(&mut inner, p) {
                Ok(t) => match inner.declare(&p.name, t.clone(), false, p.span) {
                    Ok(v) => {
                        params.push(v);
                        ptys.push(t);
                    }
                    Err(_) => {
                        let _ = self.err(Code::E_REDEFINED, p.span, format!("duplicate parameter `{}`", p.name));
                        failed = true;
                    }
                },
                Err(_) => failed = true,
            }
        }
        if failed {
            return Err(Reported);
        }
        inner.scopes.push(HashMap::new());
        let body = self.block_stmts(&mut inner, &l.body.stmts);
        let ret = inner.ret.clone().unwrap_or(Type::Void);
        let scope = inner.lambda.take().unwrap();
        for c in &scope.captures {
            if c.mode == CaptureMode::ByValue && matches!(c.ty, Type::Array(..)) {
                // Already reported at the use site.
                return Err(Reported);
            }
        }
        // Record of captures: by-value fields copy, by-ref fields hold addresses.
        let record_fields: Vec<(String, Type)> = scope
            .captures
            .iter()
            .map(|c| {
                let t = match c.mode {
                    CaptureMode::ByValue => c.ty.clone(),
                    CaptureMode::ByRef => Type::ptr(c.ty.clone()),
                };
                (c.name.clone(), t)
            })
            .collect();
        self.records.insert(RecordDef {
            name: closure_record_name(id),
            fields: record_fields,
            span: l.span,
            synthesized: true,
        });
        let fields: Vec<Expr> = scope
            .captures
            .iter()
            .map(|c| {
                let var = match cx.lookup(&c.name) {
                    Some(Lookup::Var(v)) => e(ExprKind::Var(v), c.ty.clone(), l.span),
                    Some(Lookup::Capture(k)) => e(ExprKind::Capture(k), c.ty.clone(), l.span),
                    None => unreachable!("captured name resolves in the enclosing scope"),
                };
                match c.mode {
                    CaptureMode::ByValue => var,
                    CaptureMode::ByRef => e(ExprKind::AddrOf(Box::new(var)), Type::ptr(c.ty.clone()), l.span),
                }
            })
            .collect();
        self.lambda_sigs.insert(
            id,
            LambdaSig {
                params: ptys,
                ret: ret.clone(),
            },
        );
        self.closures.push(ClosureInfo {
            id,
            enclosing: cx.fn_name.clone(),
            captures: scope.captures,
            call_function: call_name.clone(),
            span: l.span,
        });
        self.funcs.insert(
            call_name.clone(),
            Func {
                name: call_name.clone(),
                source_name: call_name,
                type_arg: None,
                params,
                locals: inner.locals,
                ret,
                body: Some(body),
                spec: l.spec.clone(),
                is_kernel: false,
                span: l.span,
                origin: FuncOrigin::Lambda(id),
            },
        );
        Ok(e(ExprKind::ClosureNew { id, fields }, Type::Closure(id), l.span))
    }
}

/// Collects the bindings of `tp` that make `param` match `arg`.
fn unify(param: &TypeExpr, arg: &Type, tp: &str, out: &mut Vec<Type>) {
    match (param, arg) {
        (TypeExpr::Named(n), t) if n == tp => out.push(t.clone()),
        (TypeExpr::Ptr(p) | TypeExpr::Array(p, _), Type::Ptr(a)) => unify(p, a, tp, out),
        (TypeExpr::Array(p, _), Type::Array(a, _)) => unify(p, a, tp, out),
        _ => {}
    }
}

/// Declared target availability ignoring inference; used to pick roots.
pub fn declared_targets(spec: &RawTargetSpec) -> TargetSet {
    explicit_target(spec).unwrap_or(TargetSet::BOTH)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn mono(src: &str) -> MonoOutput {
        let p = parse_source(src).unwrap();
        monomorphize(&p.unit, &MonoOptions::default())
    }

    fn codes(src: &str) -> Vec<Code> {
        mono(src).diagnostics.iter().map(|d| d.code).collect()
    }

    fn inst_names(out: &MonoOutput) -> Vec<String> {
        let mut v: Vec<String> = out.program.instantiations.iter().map(|i| i.mangled_name.clone()).collect();
        v.sort();
        v
    }

    #[test]
    fn dead_generic_has_no_instances() {
        let out = mono("template <T> T id(T x) { return x; } int main() { return 0; }");
        assert!(out.diagnostics.is_empty());
        assert!(out.program.instantiations.is_empty());
        assert!(out.program.func("id").is_none());
    }

    #[test]
    fn transitive_instantiation() {
        let out = mono(
            "template <T> T add(T x, T y) { return x + y; }
             template <T> T twice(T x) { return add(x, x); }
             int main() { long v = twice(3L); return 0; }",
        );
        assert!(out.diagnostics.is_empty(), "{:?}", out.diagnostics);
        assert_eq!(inst_names(&out), vec!["add$long", "twice$long"]);
    }

    #[test]
    fn two_kernel_instances() {
        let out = mono(
            "template <T> __attribute((kernel)) void k(T* a, long n) { }
             int main() { int a[4]; float b[4]; k(a, 4); k(b, 4); k(a, 2); return 0; }",
        );
        assert!(out.diagnostics.is_empty(), "{:?}", out.diagnostics);
        assert_eq!(inst_names(&out), vec!["k$float", "k$int"]);
        let k = out.program.instantiations.iter().find(|i| i.mangled_name == "k$int").unwrap();
        assert_eq!(k.origin_sites.len(), 2);
    }

    #[test]
    fn undeducible_type_argument() {
        assert_eq!(
            codes("template <T> T zero() { return 0; } int main() { int x = zero(); return 0; }"),
            vec![Code::E_INFER_TYPEARG]
        );
        assert!(codes("template <T> T zero() { return 0; } int main() { int x = zero<int>(); return 0; }").is_empty());
    }

    #[test]
    fn conflicting_deduction() {
        assert_eq!(
            codes("template <T> T add(T x, T y) { return x + y; } int main() { add(1, 2L); return 0; }"),
            vec![Code::E_INFER_TYPEARG]
        );
    }

    #[test]
    fn runaway_instantiation_is_cut_off() {
        let c = codes(
            "template <T> void f(T x) { T* p = 0; f(p); }
             int main() { f(1); return 0; }",
        );
        assert_eq!(c, vec![Code::E_RECURSIVE_INST]);
    }

    #[test]
    fn sizeof_folds_per_instance() {
        let out = mono(
            "template <T> long sz(T x) { return sizeof(T); }
             int main() { sz(1); sz(1.0); return 0; }",
        );
        let f = out.program.func("sz$double").unwrap();
        let mut sizes = Vec::new();
        walk_exprs(f.body.as_ref().unwrap(), &mut |x| {
            if let ExprKind::Int(v) = x.kind {
                sizes.push(v)
            }
        });
        assert_eq!(sizes, vec![8]);
    }

    #[test]
    fn lambda_captures() {
        let out = mono(
            "int main() { int c = 3; auto f = [=](int x) { return x + c; }; return f(1); }",
        );
        assert!(out.diagnostics.is_empty(), "{:?}", out.diagnostics);
        let cl = &out.program.closures[0];
        assert_eq!(cl.captures.len(), 1);
        assert_eq!(cl.captures[0].name, "c");
        assert_eq!(out.program.records.size_of(&Type::Closure(0)), 4);
        assert_eq!(out.program.func("__lambda0_call").unwrap().ret, Type::Int);
    }

    #[test]
    fn lambda_without_captures_is_empty_record() {
        let out = mono("int main() { auto f = [&](int x) __attribute((slave)) { return x; }; return 0; }");
        assert!(out.diagnostics.is_empty());
        assert_eq!(out.program.records.size_of(&Type::Closure(0)), 0);
        assert!(out.program.closures[0].captures.is_empty());
    }

    #[test]
    fn capture_errors() {
        assert_eq!(
            codes("int main() { int a[3]; auto f = [=]() { return a[0]; }; return 0; }"),
            vec![Code::E_CAPTURE]
        );
        assert_eq!(
            codes("int main() { int c = 1; auto f = [=]() { c = 2; }; return 0; }"),
            vec![Code::E_TYPE]
        );
        assert!(codes("int main() { int c = 1; auto f = [&]() { c = 2; }; f(); return c; }").is_empty());
    }

    #[test]
    fn function_address_rejected() {
        assert_eq!(
            codes("int g() { return 1; } int main() { auto p = g; return 0; }"),
            vec![Code::E_FN_ADDR]
        );
        assert_eq!(
            codes("__attribute((kernel)) void k() { } int main() { auto p = &k; return 0; }"),
            vec![Code::E_KERNEL_MISUSE]
        );
    }

    #[test]
    fn kernel_must_return_void() {
        assert_eq!(codes("__attribute((kernel)) int k() { return 1; }"), vec![Code::E_KERNEL_MISUSE]);
    }

    #[test]
    fn reserved_and_redefined_names() {
        assert_eq!(codes("int slave_f() { return 0; }"), vec![Code::E_RESERVED_NAME]);
        assert_eq!(codes("int print() { return 0; }"), vec![Code::E_RESERVED_NAME]);
        assert_eq!(
            codes("int f() { return 0; } int f() { return 1; }"),
            vec![Code::E_REDEFINED]
        );
    }

    #[test]
    fn prototype_marks_carry_over() {
        let out = mono("__attribute((slave)) int f(int x); int f(int x) { return x; }");
        let f = out.program.func("f").unwrap();
        assert_eq!(explicit_target(&f.spec), Some(TargetSet::SLAVE));
    }

    #[test]
    fn type_errors() {
        assert_eq!(codes("int main() { int* p = 1; return 0; }"), vec![Code::E_TYPE]);
        assert_eq!(codes("int main() { return y; }"), vec![Code::E_UNDECLARED]);
        assert_eq!(codes("int main() { nope(); return 0; }"), vec![Code::E_UNDECLARED]);
        assert_eq!(codes("struct P { P inner; }; int main() { return 0; }"), vec![Code::E_TYPE]);
        assert!(codes("struct P { int x; }; int main() { P p; p.x = 2; P* q = &p; return q->x; }").is_empty());
    }

    #[test]
    fn side_filtered_roots() {
        let p = parse_source(
            "template <T> __attribute((kernel)) void k(T* a) { }
             int main() { int a[2]; k(a); return 0; }",
        )
        .unwrap();
        let slave = monomorphize(
            &p.unit,
            &MonoOptions {
                root_side: Some(Side::Slave),
            },
        );
        assert!(slave.program.instantiations.is_empty());
        assert!(slave.program.func("main").is_none());
    }
}
