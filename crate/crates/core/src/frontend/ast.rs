//! Syntax tree produced by the parser.

use crate::diag::Span;

/// One extension attribute as written in `__attribute((X))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mark {
    Host,
    Slave,
    Infer,
    Kernel,
}

impl Mark {
    pub fn from_word(word: &str) -> Option<Mark> {
        Some(match word {
            "host" => Mark::Host,
            "slave" => Mark::Slave,
            "infer" => Mark::Infer,
            "kernel" => Mark::Kernel,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mark::Host => "host",
            Mark::Slave => "slave",
            Mark::Infer => "infer",
            Mark::Kernel => "kernel",
        }
    }
}

/// Value a `#pragma swuc push` may install.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DefaultTarget {
    Host,
    Slave,
    Infer,
}

impl DefaultTarget {
    pub fn from_word(word: &str) -> Option<DefaultTarget> {
        Some(match word {
            "host" => DefaultTarget::Host,
            "slave" => DefaultTarget::Slave,
            "infer" => DefaultTarget::Infer,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DefaultTarget::Host => "host",
            DefaultTarget::Slave => "slave",
            DefaultTarget::Infer => "infer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Attribute,
    Pragma,
    GlobalDefault,
}

/// Target specification as written, before any analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTargetSpec {
    pub explicit_marks: Vec<Mark>,
    pub mark_spans: Vec<Span>,
    pub pragma_default: DefaultTarget,
    pub origin: Origin,
}

impl RawTargetSpec {
    pub fn new(marks: Vec<(Mark, Span)>, pragma_default: DefaultTarget, from_pragma: bool) -> Self {
        let origin = if !marks.is_empty() {
            Origin::Attribute
        } else if from_pragma {
            Origin::Pragma
        } else {
            Origin::GlobalDefault
        };
        let (explicit_marks, mark_spans) = marks.into_iter().unzip();
        RawTargetSpec {
            explicit_marks,
            mark_spans,
            pragma_default,
            origin,
        }
    }

    pub fn global_default() -> Self {
        RawTargetSpec::new(Vec::new(), DefaultTarget::Host, false)
    }

    pub fn has(&self, mark: Mark) -> bool {
        self.explicit_marks.contains(&mark)
    }

    pub fn is_kernel(&self) -> bool {
        self.has(Mark::Kernel)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypeExpr {
    Int,
    Long,
    Float,
    Double,
    Bool,
    Void,
    /// Record name or the generic parameter.
    Named(String),
    Ptr(Box<TypeExpr>),
    Array(Box<TypeExpr>, Box<Expr>),
    /// Only in local declarations with an initializer.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PragmaDirective {
    Push(DefaultTarget),
    Pop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pragma {
    pub directive: PragmaDirective,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    pub ty: TypeExpr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordDecl {
    pub name: String,
    pub fields: Vec<Field>,
    pub spec: RawTargetSpec,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: TypeExpr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDecl {
    pub name: String,
    pub type_param: Option<String>,
    pub params: Vec<Param>,
    pub ret: TypeExpr,
    pub body: Option<Block>,
    pub spec: RawTargetSpec,
    pub span: Span,
}

impl FunctionDecl {
    pub fn is_generic(&self) -> bool {
        self.type_param.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Pragma(Pragma),
    Record(RecordDecl),
    Function(FunctionDecl),
}

/// One parsed SW-C file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceUnit {
    pub items: Vec<Item>,
}

impl SourceUnit {
    pub fn functions(&self) -> impl Iterator<Item = &FunctionDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Function(f) => Some(f),
            _ => None,
        })
    }

    pub fn records(&self) -> impl Iterator<Item = &RecordDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Record(r) => Some(r),
            _ => None,
        })
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions().find(|f| f.name == name)
    }

    /// Every lambda in the unit, in source order.
    pub fn lambdas(&self) -> Vec<&Lambda> {
        let mut out = Vec::new();
        for f in self.functions() {
            if let Some(body) = &f.body {
                collect_block_lambdas(body, &mut out);
            }
        }
        out
    }
}

fn collect_block_lambdas<'a>(block: &'a Block, out: &mut Vec<&'a Lambda>) {
    for stmt in &block.stmts {
        collect_stmt_lambdas(stmt, out);
    }
}

fn collect_stmt_lambdas<'a>(stmt: &'a Stmt, out: &mut Vec<&'a Lambda>) {
    match &stmt.kind {
        StmtKind::Decl(d) => {
            if let Some(e) = &d.init {
                collect_expr_lambdas(e, out);
            }
        }
        StmtKind::Expr(e) => collect_expr_lambdas(e, out),
        StmtKind::If { cond, then, els } => {
            collect_expr_lambdas(cond, out);
            collect_stmt_lambdas(then, out);
            if let Some(e) = els {
                collect_stmt_lambdas(e, out);
            }
        }
        StmtKind::While { cond, body } => {
            collect_expr_lambdas(cond, out);
            collect_stmt_lambdas(body, out);
        }
        StmtKind::For {
            init,
            cond,
            step,
            body,
        } => {
            if let Some(s) = init {
                collect_stmt_lambdas(s, out);
            }
            if let Some(e) = cond {
                collect_expr_lambdas(e, out);
            }
            if let Some(e) = step {
                collect_expr_lambdas(e, out);
            }
            collect_stmt_lambdas(body, out);
        }
        StmtKind::Return(Some(e)) => collect_expr_lambdas(e, out),
        StmtKind::Block(b) => collect_block_lambdas(b, out),
        StmtKind::Return(None) | StmtKind::Break | StmtKind::Continue => {}
    }
}

fn collect_expr_lambdas<'a>(expr: &'a Expr, out: &mut Vec<&'a Lambda>) {
    match &expr.kind {
        ExprKind::Lambda(l) => {
            out.push(l);
            collect_block_lambdas(&l.body, out);
        }
        ExprKind::Unary(_, e) | ExprKind::Cast(_, e) => collect_expr_lambdas(e, out),
        ExprKind::IncDec { target, .. } => collect_expr_lambdas(target, out),
        ExprKind::Member { base, .. } => collect_expr_lambdas(base, out),
        ExprKind::Binary(_, a, b) | ExprKind::Assign(_, a, b) | ExprKind::Index(a, b) => {
            collect_expr_lambdas(a, out);
            collect_expr_lambdas(b, out);
        }
        ExprKind::Call { callee, args, .. } => {
            collect_expr_lambdas(callee, out);
            for a in args {
                collect_expr_lambdas(a, out);
            }
        }
        ExprKind::Int { .. }
        | ExprKind::Float { .. }
        | ExprKind::Bool(_)
        | ExprKind::Str(_)
        | ExprKind::Ident(_)
        | ExprKind::SizeOf(_) => {}
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decl {
    pub name: String,
    pub ty: TypeExpr,
    pub init: Option<Expr>,
    /// `local` qualifier: storage in CPE local memory.
    pub is_local: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Decl(Decl),
    Expr(Expr),
    If {
        cond: Expr,
        then: Box<Stmt>,
        els: Option<Box<Stmt>>,
    },
    While {
        cond: Expr,
        body: Box<Stmt>,
    },
    For {
        init: Option<Box<Stmt>>,
        cond: Option<Expr>,
        step: Option<Expr>,
        body: Box<Stmt>,
    },
    Return(Option<Expr>),
    Break,
    Continue,
    Block(Block),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
    BitNot,
    Deref,
    AddrOf,
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Neg => "-",
            UnOp::Not => "!",
            UnOp::BitNot => "~",
            UnOp::Deref => "*",
            UnOp::AddrOf => "&",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Shl,
    Shr,
    BitAnd,
    BitOr,
    BitXor,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        use BinOp::*;
        match self {
            Add => "+",
            Sub => "-",
            Mul => "*",
            Div => "/",
            Rem => "%",
            Shl => "<<",
            Shr => ">>",
            BitAnd => "&",
            BitOr => "|",
            BitXor => "^",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            Eq => "==",
            Ne => "!=",
            And => "&&",
            Or => "||",
        }
    }

    /// Binding power; higher binds tighter.
    pub fn precedence(self) -> u8 {
        use BinOp::*;
        match self {
            Or => 1,
            And => 2,
            BitOr => 3,
            BitXor => 4,
            BitAnd => 5,
            Eq | Ne => 6,
            Lt | Le | Gt | Ge => 7,
            Shl | Shr => 8,
            Add | Sub => 9,
            Mul | Div | Rem => 10,
        }
    }

    pub fn is_comparison(self) -> bool {
        use BinOp::*;
        matches!(self, Lt | Le | Gt | Ge | Eq | Ne)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaptureMode {
    /// `[&]`
    ByRef,
    /// `[=]`
    ByValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lambda {
    pub capture: CaptureMode,
    pub params: Vec<Param>,
    pub spec: RawTargetSpec,
    pub body: Block,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int {
        value: i64,
        long: bool,
    },
    Float {
        value: f64,
        single: bool,
    },
    Bool(bool),
    Str(String),
    Ident(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// `a = b` or compound `a op= b`.
    Assign(Option<BinOp>, Box<Expr>, Box<Expr>),
    IncDec {
        inc: bool,
        prefix: bool,
        target: Box<Expr>,
    },
    Call {
        callee: Box<Expr>,
        type_arg: Option<TypeExpr>,
        args: Vec<Expr>,
    },
    Index(Box<Expr>, Box<Expr>),
    Member {
        base: Box<Expr>,
        field: String,
        arrow: bool,
    },
    Cast(TypeExpr, Box<Expr>),
    SizeOf(TypeExpr),
    Lambda(Box<Lambda>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }
}
