//! Source printer. Output re-parses to the same tree (modulo spans).

use std::fmt::Write;

use super::ast::*;
use crate::diag::Span;

pub fn pretty_print(unit: &SourceUnit) -> String {
    let mut p = Printer {
        out: String::new(),
        indent: 0,
    };
    for (i, item) in unit.items.iter().enumerate() {
        if i > 0 && !matches!(item, Item::Pragma(_)) {
            p.out.push('\n');
        }
        p.item(item);
    }
    p.out
}

struct Printer {
    out: String,
    indent: usize,
}

fn marks(spec: &RawTargetSpec) -> String {
    spec.explicit_marks
        .iter()
        .map(|m| format!("__attribute(({})) ", m.as_str()))
        .collect()
}

/// Splits a declarator type into its base and trailing array dimensions.
fn split_array(ty: &TypeExpr) -> (&TypeExpr, Vec<&Expr>) {
    let mut dims = Vec::new();
    let mut cur = ty;
    while let TypeExpr::Array(inner, n) = cur {
        dims.push(n.as_ref());
        cur = inner;
    }
    (cur, dims)
}

pub fn type_str(ty: &TypeExpr) -> String {
    match ty {
        TypeExpr::Int => "int".into(),
        TypeExpr::Long => "long".into(),
        TypeExpr::Float => "float".into(),
        TypeExpr::Double => "double".into(),
        TypeExpr::Bool => "bool".into(),
        TypeExpr::Void => "void".into(),
        TypeExpr::Auto => "auto".into(),
        TypeExpr::Named(n) => n.clone(),
        TypeExpr::Ptr(t) => format!("{}*", type_str(t)),
        TypeExpr::Array(..) => {
            let (base, dims) = split_array(ty);
            let mut s = type_str(base);
            for d in dims {
                let _ = write!(s, "[{}]", expr_str(d));
            }
            s
        }
    }
}

fn declarator(ty: &TypeExpr, name: &str) -> String {
    let (base, dims) = split_array(ty);
    let mut s = format!("{} {}", type_str(base), name);
    for d in dims {
        let _ = write!(s, "[{}]", expr_str(d));
    }
    s
}

fn params_str(params: &[Param]) -> String {
    params
        .iter()
        .map(|p| declarator(&p.ty, &p.name))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Printer {
    fn line(&mut self, text: &str) {
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn item(&mut self, item: &Item) {
        match item {
            Item::Pragma(p) => match p.directive {
                PragmaDirective::Push(t) => self.line(&format!("#pragma swuc push {}", t.as_str())),
                PragmaDirective::Pop => self.line("#pragma swuc pop"),
            },
            Item::Record(r) => {
                self.line(&format!("{}struct {} {{", marks(&r.spec), r.name));
                self.indent += 1;
                for f in &r.fields {
                    self.line(&format!("{};", declarator(&f.ty, &f.name)));
                }
                self.indent -= 1;
                self.line("};");
            }
            Item::Function(f) => {
                let mut head = marks(&f.spec);
                if let Some(t) = &f.type_param {
                    let _ = write!(head, "template <{t}> ");
                }
                let _ = write!(
                    head,
                    "{} {}({})",
                    type_str(&f.ret),
                    f.name,
                    params_str(&f.params)
                );
                match &f.body {
                    None => self.line(&format!("{head};")),
                    Some(b) => {
                        self.line(&format!("{head} {{"));
                        self.block_body(b);
                        self.line("}");
                    }
                }
            }
        }
    }

    fn block_body(&mut self, b: &Block) {
        self.indent += 1;
        for s in &b.stmts {
            self.stmt(s);
        }
        self.indent -= 1;
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Block(b) => {
                self.line("{");
                self.block_body(b);
                self.line("}");
            }
            StmtKind::If { cond, then, els } => {
                self.line(&format!("if ({})", expr_str(cond)));
                self.nested(then);
                if let Some(e) = els {
                    self.line("else");
                    self.nested(e);
                }
            }
            StmtKind::While { cond, body } => {
                self.line(&format!("while ({})", expr_str(cond)));
                self.nested(body);
            }
            StmtKind::For {
                init,
                cond,
                step,
                body,
            } => {
                let init = init.as_ref().map_or(";".to_string(), |s| simple_stmt_str(s));
                let cond = cond.as_ref().map_or(String::new(), expr_str);
                let step = step.as_ref().map_or(String::new(), expr_str);
                self.line(&format!("for ({init} {cond}; {step})"));
                self.nested(body);
            }
            StmtKind::Return(None) => self.line("return;"),
            StmtKind::Return(Some(e)) => self.line(&format!("return {};", expr_str(e))),
            StmtKind::Break => self.line("break;"),
            StmtKind::Continue => self.line("continue;"),
            StmtKind::Decl(_) | StmtKind::Expr(_) => self.line(&simple_stmt_str(s)),
        }
    }

    fn nested(&mut self, s: &Stmt) {
        if matches!(s.kind, StmtKind::Block(_)) {
            self.stmt(s);
        } else {
            self.indent += 1;
            self.stmt(s);
            self.indent -= 1;
        }
    }
}

fn simple_stmt_str(s: &Stmt) -> String {
    match &s.kind {
        StmtKind::Decl(d) => {
            let mut out = String::new();
            if d.is_local {
                out.push_str("local ");
            }
            out.push_str(&declarator(&d.ty, &d.name));
            if let Some(init) = &d.init {
                let _ = write!(out, " = {}", expr_str(init));
            }
            out.push(';');
            out
        }
        StmtKind::Expr(e) => format!("{};", expr_str(e)),
        _ => unreachable!("only declarations and expressions are simple statements"),
    }
}

// Precedence levels: 0 assignment, 1..=10 binary, 11 unary/cast, 12 postfix.
fn expr_prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Assign(..) => 0,
        ExprKind::Binary(op, ..) => op.precedence(),
        ExprKind::Unary(..) | ExprKind::Cast(..) => 11,
        ExprKind::IncDec { prefix: true, .. } => 11,
        _ => 12,
    }
}

fn wrap(e: &Expr, min: u8) -> String {
    let s = expr_str(e);
    if expr_prec(e) < min {
        format!("({s})")
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        match c {
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\0' => out.push_str("\\0"),
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
    out
}

pub fn expr_str(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int { value, long } => {
            let digits = if *value < 0 {
                format!("0x{:x}", *value as u64)
            } else {
                value.to_string()
            };
            if *long {
                format!("{digits}L")
            } else {
                digits
            }
        }
        ExprKind::Float { value, single } => {
            let mut s = format!("{value:?}");
            if !s.contains(['.', 'e']) {
                s.push_str(".0");
            }
            if *single {
                s.push('f');
            }
            s
        }
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Str(s) => format!("\"{}\"", escape(s)),
        ExprKind::Ident(n) => n.clone(),
        ExprKind::Unary(op, inner) => {
            let inner = wrap(inner, 11);
            if inner.starts_with(op.symbol()) {
                format!("{}({inner})", op.symbol())
            } else {
                format!("{}{inner}", op.symbol())
            }
        }
        ExprKind::Binary(op, a, b) => {
            let p = op.precedence();
            format!("{} {} {}", wrap(a, p), op.symbol(), wrap(b, p + 1))
        }
        ExprKind::Assign(op, a, b) => {
            let sym = op.map_or("=".to_string(), |o| format!("{}=", o.symbol()));
            format!("{} {sym} {}", wrap(a, 1), wrap(b, 0))
        }
        ExprKind::IncDec {
            inc,
            prefix,
            target,
        } => {
            let sym = if *inc { "++" } else { "--" };
            if *prefix {
                format!("{sym}{}", wrap(target, 11))
            } else {
                format!("{}{sym}", wrap(target, 12))
            }
        }
        ExprKind::Call {
            callee,
            type_arg,
            args,
        } => {
            let args: Vec<String> = args.iter().map(expr_str).collect();
            let targ = type_arg
                .as_ref()
                .map_or(String::new(), |t| format!("<{}>", type_str(t)));
            format!("{}{targ}({})", wrap(callee, 12), args.join(", "))
        }
        ExprKind::Index(a, i) => format!("{}[{}]", wrap(a, 12), expr_str(i)),
        ExprKind::Member { base, field, arrow } => {
            format!("{}{}{field}", wrap(base, 12), if *arrow { "->" } else { "." })
        }
        ExprKind::Cast(t, inner) => format!("({}){}", type_str(t), wrap(inner, 11)),
        ExprKind::SizeOf(t) => format!("sizeof({})", type_str(t)),
        ExprKind::Lambda(l) => {
            let cap = match l.capture {
                CaptureMode::ByRef => "[&]",
                CaptureMode::ByValue => "[=]",
            };
            let mut p = Printer {
                out: String::new(),
                indent: 0,
            };
            for s in &l.body.stmts {
                p.stmt(s);
            }
            let body = p.out.lines().collect::<Vec<_>>().join(" ");
            format!(
                "{cap}({}) {}{{ {body} }}",
                params_str(&l.params),
                marks(&l.spec)
            )
        }
    }
}

/// Zeroes every span so that two trees can be compared structurally.
pub fn erase_spans(unit: &mut SourceUnit) {
    for item in &mut unit.items {
        match item {
            Item::Pragma(p) => p.span = Span::default(),
            Item::Record(r) => {
                r.span = Span::default();
                erase_spec(&mut r.spec);
                for f in &mut r.fields {
                    f.span = Span::default();
                    erase_type(&mut f.ty);
                }
            }
            Item::Function(f) => {
                f.span = Span::default();
                erase_spec(&mut f.spec);
                erase_type(&mut f.ret);
                erase_params(&mut f.params);
                if let Some(b) = &mut f.body {
                    erase_block(b);
                }
            }
        }
    }
}

fn erase_spec(spec: &mut RawTargetSpec) {
    for s in &mut spec.mark_spans {
        *s = Span::default();
    }
}

fn erase_params(params: &mut [Param]) {
    for p in params {
        p.span = Span::default();
        erase_type(&mut p.ty);
    }
}

fn erase_type(ty: &mut TypeExpr) {
    match ty {
        TypeExpr::Ptr(t) => erase_type(t),
        TypeExpr::Array(t, n) => {
            erase_type(t);
            erase_expr(n);
        }
        _ => {}
    }
}

fn erase_block(b: &mut Block) {
    b.span = Span::default();
    for s in &mut b.stmts {
        erase_stmt(s);
    }
}

fn erase_stmt(s: &mut Stmt) {
    s.span = Span::default();
    match &mut s.kind {
        StmtKind::Decl(d) => {
            erase_type(&mut d.ty);
            if let Some(e) = &mut d.init {
                erase_expr(e);
            }
        }
        StmtKind::Expr(e) | StmtKind::Return(Some(e)) => erase_expr(e),
        StmtKind::If { cond, then, els } => {
            erase_expr(cond);
            erase_stmt(then);
            if let Some(e) = els {
                erase_stmt(e);
            }
        }
        StmtKind::While { cond, body } => {
            erase_expr(cond);
            erase_stmt(body);
        }
        StmtKind::For {
            init,
            cond,
            step,
            body,
        } => {
            if let Some(s) = init {
                erase_stmt(s);
            }
            if let Some(e) = cond {
                erase_expr(e);
            }
            if let Some(e) = step {
                erase_expr(e);
            }
            erase_stmt(body);
        }
        StmtKind::Block(b) => erase_block(b),
        StmtKind::Return(None) | StmtKind::Break | StmtKind::Continue => {}
    }
}

fn erase_expr(e: &mut Expr) {
    e.span = Span::default();
    match &mut e.kind {
        ExprKind::Unary(_, a) => erase_expr(a),
        ExprKind::Cast(t, a) => {
            erase_type(t);
            erase_expr(a);
        }
        ExprKind::IncDec { target, .. } => erase_expr(target),
        ExprKind::Member { base, .. } => erase_expr(base),
        ExprKind::Binary(_, a, b) | ExprKind::Assign(_, a, b) | ExprKind::Index(a, b) => {
            erase_expr(a);
            erase_expr(b);
        }
        ExprKind::Call {
            callee,
            type_arg,
            args,
        } => {
            erase_expr(callee);
            if let Some(t) = type_arg {
                erase_type(t);
            }
            for a in args {
                erase_expr(a);
            }
        }
        ExprKind::SizeOf(t) => erase_type(t),
        ExprKind::Lambda(l) => {
            l.span = Span::default();
            erase_spec(&mut l.spec);
            erase_params(&mut l.params);
            erase_block(&mut l.body);
        }
        ExprKind::Int { .. }
        | ExprKind::Float { .. }
        | ExprKind::Bool(_)
        | ExprKind::Str(_)
        | ExprKind::Ident(_) => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{lexer::tokenize, parser::parse};

    fn roundtrip(src: &str) {
        let mut a = parse(&tokenize(src).unwrap()).unwrap().unit;
        let printed = pretty_print(&a);
        let mut b = parse(&tokenize(&printed).unwrap())
            .unwrap_or_else(|e| panic!("{e}\n{printed}"))
            .unit;
        erase_spans(&mut a);
        erase_spans(&mut b);
        assert_eq!(a, b, "{printed}");
    }

    #[test]
    fn expressions_keep_their_shape() {
        roundtrip(
            "long f(long a, long b) { return (a - b) - (a - (b * 2)) + -(-a) + (long)(a + b) * 3; }",
        );
        roundtrip("int f(int* p) { *p += 1; p[0]++; --p[1]; return !(*p < 3) && (p[2] == 0 || 1 > 0); }");
        roundtrip("double f() { return 1.5 + 2.0f + 1e-7 + 0.5; }");
    }

    #[test]
    fn pragmas_records_and_lambdas() {
        roundtrip(
            "#pragma swuc push infer\n__attribute((slave)) struct P { int x; long y[4]; };\n\
             template <T> T id(T x) { return x; }\n#pragma swuc pop\n\
             int main() { int c = 3; auto f = [=](int x) __attribute((slave)) { return x + c; }; \
             if (c) { print(\"a\\n\", f(1)); } else c = 2; for (int i = 0; i < 3; i++) { c += id<int>(i); } \
             while (c > 0) c--; return 0; }",
        );
    }
}
