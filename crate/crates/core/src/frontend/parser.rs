//! Recursive-descent parser for SW-C.
//!
//! Pragma lines are consumed here so that every function records the
//! default target active at its declaration point.

use std::collections::HashSet;

use thiserror::Error;

use super::ast::*;
use super::lexer::{Token, TokenKind};
use super::pragma::{apply_pragma_defaults, PragmaStack};
use crate::diag::{Code, Diagnostic, Span};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: u32,
    pub column: u32,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic::error(
            Code::E_PARSE,
            Span::new(self.line, self.column),
            format!("expected {}, found {}", self.expected, self.found),
        )
    }
}

/// Parser result: the unit plus non-fatal diagnostics (pragma problems).
#[derive(Debug, Clone)]
pub struct Parsed {
    pub unit: SourceUnit,
    pub diagnostics: Vec<Diagnostic>,
}

type PResult<T> = Result<T, ParseError>;

pub fn parse(tokens: &[Token]) -> PResult<Parsed> {
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        stack: PragmaStack::new(),
        diags: Vec::new(),
        type_names: HashSet::new(),
        type_param: None,
        lambda_default: (DefaultTarget::Host, false),
    };
    let unit = p.unit()?;
    Ok(Parsed {
        unit,
        diagnostics: p.diags,
    })
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
    stack: PragmaStack,
    diags: Vec<Diagnostic>,
    type_names: HashSet<String>,
    type_param: Option<String>,
    lambda_default: (DefaultTarget, bool),
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&'t Token> {
        self.toks.get(self.pos + n)
    }

    fn span(&self) -> Span {
        match self.peek() {
            Some(t) => Span::new(t.line, t.col),
            None => self
                .toks
                .last()
                .map(|t| Span::new(t.line, t.col + t.lexeme.chars().count() as u32))
                .unwrap_or(Span::new(1, 1)),
        }
    }

    fn error<T>(&self, expected: impl Into<String>) -> PResult<T> {
        let found = match self.peek() {
            Some(t) => format!("`{}`", t.lexeme),
            None => "end of file".to_string(),
        };
        let sp = self.span();
        Err(ParseError {
            line: sp.line,
            column: sp.col,
            expected: expected.into(),
            found,
        })
    }

    fn at_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.is_punct(p))
    }

    fn at_keyword(&self, k: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(k))
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.at_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, k: &str) -> bool {
        if self.at_keyword(k) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<Span> {
        let sp = self.span();
        if self.eat_punct(p) {
            Ok(sp)
        } else {
            self.error(format!("`{p}`"))
        }
    }

    fn expect_ident(&mut self) -> PResult<(String, Span)> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => {
                self.pos += 1;
                Ok((t.lexeme.clone(), Span::new(t.line, t.col)))
            }
            _ => self.error("identifier"),
        }
    }

    // ---- items ----

    fn unit(&mut self) -> PResult<SourceUnit> {
        let mut items = Vec::new();
        while let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Pragma {
                self.pos += 1;
                let sp = Span::new(tok.line, tok.col);
                match apply_pragma_defaults(&tok.lexeme, sp, &mut self.stack) {
                    Ok(p) => items.push(Item::Pragma(p)),
                    Err(d) => self.diags.push(d),
                }
                continue;
            }
            items.push(self.item()?);
        }
        for sp in self.stack.open_pushes() {
            self.diags.push(Diagnostic::warning(
                Code::W_PRAGMA_UNCLOSED,
                sp,
                "`#pragma swuc push` is never popped before end of file",
            ));
        }
        Ok(SourceUnit { items })
    }

    fn attrs(&mut self, out: &mut Vec<(Mark, Span)>) -> PResult<()> {
        while self.at_keyword("__attribute") {
            let sp = self.span();
            self.pos += 1;
            self.expect_punct("(")?;
            self.expect_punct("(")?;
            let mark = match self.peek() {
                Some(t) if t.kind == TokenKind::Ident => Mark::from_word(&t.lexeme),
                _ => None,
            };
            let Some(mark) = mark else {
                return self.error("`host`, `slave`, `infer` or `kernel`");
            };
            self.pos += 1;
            self.expect_punct(")")?;
            self.expect_punct(")")?;
            out.push((mark, sp));
        }
        Ok(())
    }

    fn item(&mut self) -> PResult<Item> {
        let start = self.span();
        let mut marks = Vec::new();
        self.attrs(&mut marks)?;
        let mut type_param = None;
        if self.eat_keyword("template") {
            self.expect_punct("<")?;
            self.eat_keyword("typename");
            let (name, _) = self.expect_ident()?;
            self.expect_punct(">")?;
            type_param = Some(name);
            self.attrs(&mut marks)?;
        }

        if self.at_keyword("struct")
            && self.peek_at(1).is_some_and(|t| t.kind == TokenKind::Ident)
            && self.peek_at(2).is_some_and(|t| t.is_punct("{"))
        {
            if type_param.is_some() {
                return self.error("function after `template <T>`");
            }
            return self.record(marks, start).map(Item::Record);
        }

        let spec = RawTargetSpec::new(marks, self.stack.active(), !self.stack.is_empty());
        self.type_param = type_param.clone();
        let f = self.function(spec, type_param, start);
        self.type_param = None;
        f.map(Item::Function)
    }

    fn record(&mut self, marks: Vec<(Mark, Span)>, start: Span) -> PResult<RecordDecl> {
        self.expect_punct_kw("struct")?;
        let (name, _) = self.expect_ident()?;
        self.type_names.insert(name.clone());
        self.expect_punct("{")?;
        let mut fields = Vec::new();
        while !self.at_punct("}") {
            let sp = self.span();
            let ty = self.type_expr()?;
            let (fname, _) = self.expect_ident()?;
            let ty = self.array_suffix(ty)?;
            self.expect_punct(";")?;
            fields.push(Field {
                name: fname,
                ty,
                span: sp,
            });
        }
        self.expect_punct("}")?;
        self.expect_punct(";")?;
        Ok(RecordDecl {
            name,
            fields,
            spec: RawTargetSpec::new(marks, self.stack.active(), !self.stack.is_empty()),
            span: start,
        })
    }

    fn expect_punct_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.error(format!("`{kw}`"))
        }
    }

    fn function(
        &mut self,
        spec: RawTargetSpec,
        type_param: Option<String>,
        start: Span,
    ) -> PResult<FunctionDecl> {
        let ret = self.type_expr()?;
        let (name, _) = self.expect_ident()?;
        let params = self.params()?;
        let body = if self.eat_punct(";") {
            None
        } else if self.at_punct("{") {
            self.lambda_default = (spec.pragma_default, !self.stack.is_empty());
            Some(self.block()?)
        } else {
            return self.error("`{` or `;`");
        };
        Ok(FunctionDecl {
            name,
            type_param,
            params,
            ret,
            body,
            spec,
            span: start,
        })
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if self.at_keyword("void") && self.peek_at(1).is_some_and(|t| t.is_punct(")")) {
            self.pos += 1;
        }
        if !self.at_punct(")") {
            loop {
                let sp = self.span();
                let ty = self.type_expr()?;
                let (name, _) = self.expect_ident()?;
                params.push(Param { name, ty, span: sp });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(params)
    }

    // ---- types ----

    fn is_type_name(&self, name: &str) -> bool {
        self.type_names.contains(name) || self.type_param.as_deref() == Some(name)
    }

    /// True when the token at offset `n` can begin a type.
    fn type_starts_at(&self, n: usize) -> bool {
        match self.peek_at(n) {
            Some(t) if t.kind == TokenKind::Keyword => matches!(
                t.lexeme.as_str(),
                "int" | "long" | "float" | "double" | "bool" | "void" | "struct" | "const"
            ),
            Some(t) if t.kind == TokenKind::Ident => self.is_type_name(&t.lexeme),
            _ => false,
        }
    }

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        while self.eat_keyword("const") {}
        let Some(tok) = self.peek() else {
            return self.error("type");
        };
        self.pos += 1;
        let mut ty = match (tok.kind, tok.lexeme.as_str()) {
            (TokenKind::Keyword, "int") => TypeExpr::Int,
            (TokenKind::Keyword, "long") => TypeExpr::Long,
            (TokenKind::Keyword, "float") => TypeExpr::Float,
            (TokenKind::Keyword, "double") => TypeExpr::Double,
            (TokenKind::Keyword, "bool") => TypeExpr::Bool,
            (TokenKind::Keyword, "void") => TypeExpr::Void,
            (TokenKind::Keyword, "struct") => TypeExpr::Named(self.expect_ident()?.0),
            (TokenKind::Ident, name) => TypeExpr::Named(name.to_string()),
            _ => {
                self.pos -= 1;
                return self.error("type");
            }
        };
        loop {
            if self.eat_keyword("const") {
                continue;
            }
            if self.eat_punct("*") {
                ty = TypeExpr::Ptr(Box::new(ty));
                continue;
            }
            break;
        }
        Ok(ty)
    }

    /// `[N]` suffixes after a declarator name; `int a[2][3]` is an array of
    /// two arrays of three.
    fn array_suffix(&mut self, base: TypeExpr) -> PResult<TypeExpr> {
        let mut dims = Vec::new();
        while self.eat_punct("[") {
            dims.push(self.expr()?);
            self.expect_punct("]")?;
        }
        Ok(dims
            .into_iter()
            .rev()
            .fold(base, |ty, n| TypeExpr::Array(Box::new(ty), Box::new(n))))
    }

    // ---- statements ----

    fn block(&mut self) -> PResult<Block> {
        let span = self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.at_punct("}") {
            if self.peek().is_none() {
                return self.error("`}`");
            }
            stmts.push(self.stmt()?);
        }
        self.pos += 1;
        Ok(Block { stmts, span })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let span = self.span();
        let tok = self.peek().expect("caller checked");
        if tok.kind == TokenKind::Pragma {
            return Err(ParseError {
                line: span.line,
                column: span.col,
                expected: "statement (pragma directives are only allowed at file scope)"
                    .to_string(),
                found: format!("`{}`", tok.lexeme),
            });
        }
        if tok.is_keyword("__attribute") {
            return self.error("statement (attributes only apply to declarations)");
        }
        let kind = if self.at_punct("{") {
            StmtKind::Block(self.block()?)
        } else if self.eat_keyword("if") {
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let then = Box::new(self.stmt()?);
            let els = if self.eat_keyword("else") {
                Some(Box::new(self.stmt()?))
            } else {
                None
            };
            StmtKind::If { cond, then, els }
        } else if self.eat_keyword("while") {
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            StmtKind::While {
                cond,
                body: Box::new(self.stmt()?),
            }
        } else if self.eat_keyword("for") {
            self.expect_punct("(")?;
            let init = if self.eat_punct(";") {
                None
            } else {
                Some(Box::new(self.simple_stmt()?))
            };
            let cond = if self.at_punct(";") {
                None
            } else {
                Some(self.expr()?)
            };
            self.expect_punct(";")?;
            let step = if self.at_punct(")") {
                None
            } else {
                Some(self.expr()?)
            };
            self.expect_punct(")")?;
            StmtKind::For {
                init,
                cond,
                step,
                body: Box::new(self.stmt()?),
            }
        } else if self.eat_keyword("return") {
            let value = if self.at_punct(";") {
                None
            } else {
                Some(self.expr()?)
            };
            self.expect_punct(";")?;
            StmtKind::Return(value)
        } else if self.eat_keyword("break") {
            self.expect_punct(";")?;
            StmtKind::Break
        } else if self.eat_keyword("continue") {
            self.expect_punct(";")?;
            StmtKind::Continue
        } else {
            return self.simple_stmt();
        };
        Ok(Stmt { kind, span })
    }

    /// Declaration or expression statement, including the trailing `;`.
    fn simple_stmt(&mut self) -> PResult<Stmt> {
        let span = self.span();
        let is_local = self.eat_keyword("local");
        let is_decl = is_local || self.at_keyword("auto") || self.type_starts_at(0);
        if !is_decl {
            let e = self.expr()?;
            self.expect_punct(";")?;
            return Ok(Stmt {
                kind: StmtKind::Expr(e),
                span,
            });
        }
        let ty = if self.eat_keyword("auto") {
            TypeExpr::Auto
        } else {
            self.type_expr()?
        };
        let (name, _) = self.expect_ident()?;
        let ty = self.array_suffix(ty)?;
        let init = if self.eat_punct("=") {
            Some(self.expr()?)
        } else {
            None
        };
        if ty == TypeExpr::Auto && init.is_none() {
            return self.error("`=` (an `auto` declaration needs an initializer)");
        }
        self.expect_punct(";")?;
        Ok(Stmt {
            kind: StmtKind::Decl(Decl {
                name,
                ty,
                init,
                is_local,
            }),
            span,
        })
    }

    // ---- expressions ----

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.binary(0)?;
        let op = match self.peek() {
            Some(t) if t.kind == TokenKind::Punct => match t.lexeme.as_str() {
                "=" => Some(None),
                "+=" => Some(Some(BinOp::Add)),
                "-=" => Some(Some(BinOp::Sub)),
                "*=" => Some(Some(BinOp::Mul)),
                "/=" => Some(Some(BinOp::Div)),
                "%=" => Some(Some(BinOp::Rem)),
                _ => None,
            },
            _ => None,
        };
        if let Some(op) = op {
            let span = self.span();
            self.pos += 1;
            let rhs = self.expr()?;
            return Ok(Expr::new(
                ExprKind::Assign(op, Box::new(lhs), Box::new(rhs)),
                span,
            ));
        }
        Ok(lhs)
    }

    fn peek_binop(&self) -> Option<BinOp> {
        let t = self.peek()?;
        if t.kind != TokenKind::Punct {
            return None;
        }
        use BinOp::*;
        Some(match t.lexeme.as_str() {
            "+" => Add,
            "-" => Sub,
            "*" => Mul,
            "/" => Div,
            "%" => Rem,
            "<<" => Shl,
            ">>" => Shr,
            "&" => BitAnd,
            "|" => BitOr,
            "^" => BitXor,
            "<" => Lt,
            "<=" => Le,
            ">" => Gt,
            ">=" => Ge,
            "==" => Eq,
            "!=" => Ne,
            "&&" => And,
            "||" => Or,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            let prec = op.precedence();
            if prec <= min_prec {
                break;
            }
            let span = self.span();
            self.pos += 1;
            let rhs = self.binary(prec)?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let op = match self.peek() {
            Some(t) if t.kind == TokenKind::Punct => match t.lexeme.as_str() {
                "-" => Some(UnOp::Neg),
                "!" => Some(UnOp::Not),
                "~" => Some(UnOp::BitNot),
                "*" => Some(UnOp::Deref),
                "&" => Some(UnOp::AddrOf),
                _ => None,
            },
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let e = self.unary()?;
            return Ok(Expr::new(ExprKind::Unary(op, Box::new(e)), span));
        }
        if self.at_punct("++") || self.at_punct("--") {
            let inc = self.at_punct("++");
            self.pos += 1;
            let e = self.unary()?;
            return Ok(Expr::new(
                ExprKind::IncDec {
                    inc,
                    prefix: true,
                    target: Box::new(e),
                },
                span,
            ));
        }
        if self.at_punct("(") && self.type_starts_at(1) {
            self.pos += 1;
            let ty = self.type_expr()?;
            self.expect_punct(")")?;
            let e = self.unary()?;
            return Ok(Expr::new(ExprKind::Cast(ty, Box::new(e)), span));
        }
        if self.eat_keyword("sizeof") {
            self.expect_punct("(")?;
            let ty = self.type_expr()?;
            let ty = self.array_suffix(ty)?;
            self.expect_punct(")")?;
            return Ok(Expr::new(ExprKind::SizeOf(ty), span));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            let span = self.span();
            if self.at_punct("(") {
                let args = self.call_args()?;
                e = Expr::new(
                    ExprKind::Call {
                        callee: Box::new(e),
                        type_arg: None,
                        args,
                    },
                    span,
                );
            } else if self.eat_punct("[") {
                let idx = self.expr()?;
                self.expect_punct("]")?;
                e = Expr::new(ExprKind::Index(Box::new(e), Box::new(idx)), span);
            } else if self.at_punct(".") || self.at_punct("->") {
                let arrow = self.at_punct("->");
                self.pos += 1;
                let (field, _) = self.expect_ident()?;
                e = Expr::new(
                    ExprKind::Member {
                        base: Box::new(e),
                        field,
                        arrow,
                    },
                    span,
                );
            } else if self.at_punct("++") || self.at_punct("--") {
                let inc = self.at_punct("++");
                self.pos += 1;
                e = Expr::new(
                    ExprKind::IncDec {
                        inc,
                        prefix: false,
                        target: Box::new(e),
                    },
                    span,
                );
            } else {
                return Ok(e);
            }
        }
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if !self.at_punct(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    /// `name<type>(` with a type that is unambiguously a type.
    fn try_explicit_type_arg(&mut self) -> Option<TypeExpr> {
        if !self.at_punct("<") || !self.type_starts_at(1) {
            return None;
        }
        let save = self.pos;
        self.pos += 1;
        let ty = self.type_expr().ok();
        if ty.is_some() && self.eat_punct(">") && self.at_punct("(") {
            return ty;
        }
        self.pos = save;
        None
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let Some(tok) = self.peek() else {
            return self.error("expression");
        };
        let kind = match tok.kind {
            TokenKind::IntLit => {
                self.pos += 1;
                let text = tok.lexeme.as_str();
                let long = text.ends_with(['l', 'L']);
                let digits = text.trim_end_matches(['l', 'L']);
                let value = if let Some(hex) =
                    digits.strip_prefix("0x").or_else(|| digits.strip_prefix("0X"))
                {
                    u64::from_str_radix(hex, 16).ok().map(|v| v as i64)
                } else {
                    digits.parse::<i64>().ok()
                };
                let Some(value) = value else {
                    self.pos -= 1;
                    return self.error("integer literal that fits in 64 bits");
                };
                ExprKind::Int { value, long }
            }
            TokenKind::FloatLit => {
                self.pos += 1;
                let text = tok.lexeme.as_str();
                let single = text.ends_with(['f', 'F']);
                let value = text
                    .trim_end_matches(['f', 'F'])
                    .parse::<f64>()
                    .expect("lexer validated float literal");
                ExprKind::Float { value, single }
            }
            TokenKind::StrLit => {
                self.pos += 1;
                ExprKind::Str(unescape(&tok.lexeme[1..tok.lexeme.len() - 1]))
            }
            TokenKind::Keyword if tok.lexeme == "true" || tok.lexeme == "false" => {
                self.pos += 1;
                ExprKind::Bool(tok.lexeme == "true")
            }
            TokenKind::Ident => {
                self.pos += 1;
                let name = tok.lexeme.clone();
                if let Some(ty) = self.try_explicit_type_arg() {
                    let callee = Expr::new(ExprKind::Ident(name), span);
                    let call_span = self.span();
                    let args = self.call_args()?;
                    return Ok(Expr::new(
                        ExprKind::Call {
                            callee: Box::new(callee),
                            type_arg: Some(ty),
                            args,
                        },
                        call_span,
                    ));
                }
                ExprKind::Ident(name)
            }
            TokenKind::Punct if tok.lexeme == "(" => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(")")?;
                return Ok(e);
            }
            TokenKind::Punct if tok.lexeme == "[" => {
                return self.lambda().map(|l| Expr::new(ExprKind::Lambda(Box::new(l)), span));
            }
            _ => return self.error("expression"),
        };
        Ok(Expr::new(kind, span))
    }

    fn lambda(&mut self) -> PResult<Lambda> {
        let span = self.expect_punct("[")?;
        let capture = if self.eat_punct("&") {
            CaptureMode::ByRef
        } else if self.eat_punct("=") {
            CaptureMode::ByValue
        } else {
            return self.error("`&` or `=` (lambda capture)");
        };
        self.expect_punct("]")?;
        let params = self.params()?;
        let mut marks = Vec::new();
        self.attrs(&mut marks)?;
        let (default, from_pragma) = self.lambda_default;
        let body = self.block()?;
        Ok(Lambda {
            capture,
            params,
            spec: RawTargetSpec::new(marks, default, from_pragma),
            body,
            span,
        })
    }
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('0') => out.push('\0'),
            Some(other) => out.push(other),
            None => {}
        }
    }
    out
}
