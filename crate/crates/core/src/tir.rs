//! Typed, monomorphic intermediate representation.
//!
//! Produced by the type checker, rewritten by closure conversion, consumed
//! by the analyses and by code generation. Every expression carries its
//! type; lvalues are `Var`, `Deref`, `Member` and (before closure
//! conversion) `Capture`.

use std::collections::BTreeMap;

use crate::diag::Span;
use crate::frontend::ast::{CaptureMode, RawTargetSpec};
use crate::types::{RecordTable, Type};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct LocalVar {
    pub name: String,
    pub ty: Type,
    /// Declared with the `local` qualifier.
    pub is_local: bool,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    CpeId,
    NCpes,
    DmaGet,
    DmaPut,
    Print,
    Min,
}

impl Builtin {
    pub const ALL: [Builtin; 6] = [
        Builtin::CpeId,
        Builtin::NCpes,
        Builtin::DmaGet,
        Builtin::DmaPut,
        Builtin::Print,
        Builtin::Min,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::CpeId => "cpe_id",
            Builtin::NCpes => "n_cpes",
            Builtin::DmaGet => "dma_get",
            Builtin::DmaPut => "dma_put",
            Builtin::Print => "print",
            Builtin::Min => "min",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::ALL.into_iter().find(|b| b.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
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
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    Var(VarId),
    /// Captured variable `k` of the enclosing lambda, as an lvalue of the
    /// variable's type. Removed by closure conversion.
    Capture(u32),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    BitNot(Box<Expr>),
    Deref(Box<Expr>),
    AddrOf(Box<Expr>),
    /// Operands already converted to the result type.
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    /// Operands already converted to a common type; result is `bool`.
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Logical { and: bool, lhs: Box<Expr>, rhs: Box<Expr> },
    /// Pointer plus `long` element offset.
    PtrAdd(Box<Expr>, Box<Expr>),
    /// Element distance between two pointers, as `long`.
    PtrDiff(Box<Expr>, Box<Expr>),
    /// Conversion of a scalar to this expression's type.
    Convert(Box<Expr>),
    /// Array lvalue to pointer to its first element.
    Decay(Box<Expr>),
    Member(Box<Expr>, String),
    /// `lhs = rhs` (op is None) or `lhs op= rhs`; `void`-typed. For compound
    /// forms the operation is carried out in `op_ty` (pointer compound
    /// assignment uses `op_ty` = the pointer type and a `long` rhs).
    Assign {
        op: Option<ArithOp>,
        op_ty: Type,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    /// `delta` is in elements for pointers.
    IncDec { delta: i64, post: bool, target: Box<Expr> },
    Call { func: String, args: Vec<Expr> },
    KernelCall { kernel: String, args: Vec<Expr> },
    Builtin(Builtin, Vec<Expr>),
    /// Construction of lambda `id`'s closure; one value per capture (by-ref
    /// captures are addresses).
    ClosureNew { id: u32, fields: Vec<Expr> },
    ClosureCall { id: u32, closure: Box<Expr>, args: Vec<Expr> },
    /// Construction of a record from field values, in field order.
    RecordNew { record: String, fields: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub ty: Type,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, ty: Type, span: Span) -> Self {
        Expr { kind, ty, span }
    }

    pub fn is_lvalue(&self) -> bool {
        matches!(
            self.kind,
            ExprKind::Var(_) | ExprKind::Capture(_) | ExprKind::Deref(_) | ExprKind::Member(..)
        ) && !matches!(&self.kind, ExprKind::Member(b, _) if !b.is_lvalue())
    }

    /// Visits this expression and all subexpressions, parents first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Expr)) {
        f(self);
        for c in self.children_mut() {
            c.walk_mut(f);
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        use ExprKind::*;
        match &self.kind {
            Int(_) | Float(_) | Bool(_) | Str(_) | Var(_) | Capture(_) => vec![],
            Neg(e) | Not(e) | BitNot(e) | Deref(e) | AddrOf(e) | Convert(e) | Decay(e) => vec![e],
            Member(e, _) => vec![e],
            IncDec { target, .. } => vec![target],
            Arith(_, a, b) | Cmp(_, a, b) | PtrAdd(a, b) | PtrDiff(a, b) => vec![a, b],
            Logical { lhs, rhs, .. } | Assign { lhs, rhs, .. } => vec![lhs, rhs],
            Call { args, .. }
            | KernelCall { args, .. }
            | Builtin(_, args)
            | ClosureNew { fields: args, .. }
            | RecordNew { fields: args, .. } => args.iter().collect(),
            ClosureCall { closure, args, .. } => {
                std::iter::once(&**closure).chain(args.iter()).collect()
            }
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expr> {
        use ExprKind::*;
        match &mut self.kind {
            Int(_) | Float(_) | Bool(_) | Str(_) | Var(_) | Capture(_) => vec![],
            Neg(e) | Not(e) | BitNot(e) | Deref(e) | AddrOf(e) | Convert(e) | Decay(e) => vec![e],
            Member(e, _) => vec![e],
            IncDec { target, .. } => vec![target],
            Arith(_, a, b) | Cmp(_, a, b) | PtrAdd(a, b) | PtrDiff(a, b) => vec![a, b],
            Logical { lhs, rhs, .. } | Assign { lhs, rhs, .. } => vec![lhs, rhs],
            Call { args, .. }
            | KernelCall { args, .. }
            | Builtin(_, args)
            | ClosureNew { fields: args, .. }
            | RecordNew { fields: args, .. } => args.iter_mut().collect(),
            ClosureCall { closure, args, .. } => {
                std::iter::once(&mut **closure).chain(args.iter_mut()).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Expr(Expr),
    Decl { var: VarId, init: Option<Expr> },
    If { cond: Expr, then: Vec<Stmt>, els: Vec<Stmt> },
    While { cond: Expr, body: Vec<Stmt> },
    For {
        init: Vec<Stmt>,
        cond: Option<Expr>,
        step: Option<Expr>,
        body: Vec<Stmt>,
    },
    Return(Option<Expr>),
    Break,
    Continue,
    Block(Vec<Stmt>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

/// Visits every expression in `stmts`, outermost first.
pub fn walk_exprs<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Expr)) {
    for s in stmts {
        match &s.kind {
            StmtKind::Expr(e) => e.walk(f),
            StmtKind::Decl { init, .. } => {
                if let Some(e) = init {
                    e.walk(f)
                }
            }
            StmtKind::If { cond, then, els } => {
                cond.walk(f);
                walk_exprs(then, f);
                walk_exprs(els, f);
            }
            StmtKind::While { cond, body } => {
                cond.walk(f);
                walk_exprs(body, f);
            }
            StmtKind::For {
                init,
                cond,
                step,
                body,
            } => {
                walk_exprs(init, f);
                if let Some(e) = cond {
                    e.walk(f);
                }
                if let Some(e) = step {
                    e.walk(f);
                }
                walk_exprs(body, f);
            }
            StmtKind::Return(Some(e)) => e.walk(f),
            StmtKind::Block(b) => walk_exprs(b, f),
            StmtKind::Return(None) | StmtKind::Break | StmtKind::Continue => {}
        }
    }
}

pub fn walk_exprs_mut(stmts: &mut [Stmt], f: &mut impl FnMut(&mut Expr)) {
    for s in stmts {
        match &mut s.kind {
            StmtKind::Expr(e) => e.walk_mut(f),
            StmtKind::Decl { init, .. } => {
                if let Some(e) = init {
                    e.walk_mut(f)
                }
            }
            StmtKind::If { cond, then, els } => {
                cond.walk_mut(f);
                walk_exprs_mut(then, f);
                walk_exprs_mut(els, f);
            }
            StmtKind::While { cond, body } => {
                cond.walk_mut(f);
                walk_exprs_mut(body, f);
            }
            StmtKind::For {
                init,
                cond,
                step,
                body,
            } => {
                walk_exprs_mut(init, f);
                if let Some(e) = cond {
                    e.walk_mut(f);
                }
                if let Some(e) = step {
                    e.walk_mut(f);
                }
                walk_exprs_mut(body, f);
            }
            StmtKind::Return(Some(e)) => e.walk_mut(f),
            StmtKind::Block(b) => walk_exprs_mut(b, f),
            StmtKind::Return(None) | StmtKind::Break | StmtKind::Continue => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FuncOrigin {
    Source,
    Instance,
    Lambda(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Func {
    /// Function identity: plain name, `g$arg` for instances, or
    /// `__lambdaN_call`.
    pub name: String,
    pub source_name: String,
    pub type_arg: Option<Type>,
    pub params: Vec<VarId>,
    pub locals: Vec<LocalVar>,
    pub ret: Type,
    /// `None` for a declaration without a definition.
    pub body: Option<Vec<Stmt>>,
    pub spec: RawTargetSpec,
    pub is_kernel: bool,
    pub span: Span,
    pub origin: FuncOrigin,
}

impl Func {
    pub fn var(&self, v: VarId) -> &LocalVar {
        &self.locals[v.0 as usize]
    }

    pub fn param_types(&self) -> Vec<Type> {
        self.params.iter().map(|p| self.var(*p).ty.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureInfo {
    pub name: String,
    /// Variable in the enclosing function.
    pub var: VarId,
    pub mode: CaptureMode,
    /// Type of the captured variable.
    pub ty: Type,
    /// The variable was declared `local`.
    pub is_local: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosureInfo {
    pub id: u32,
    pub enclosing: String,
    pub captures: Vec<CaptureInfo>,
    pub call_function: String,
    pub span: Span,
}

/// One generic instantiation.
#[derive(Debug, Clone, PartialEq)]
pub struct Instantiation {
    pub generic_name: String,
    pub type_argument: Type,
    pub mangled_name: String,
    pub origin_sites: Vec<Span>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Program {
    pub records: RecordTable,
    pub funcs: BTreeMap<String, Func>,
    pub instantiations: Vec<Instantiation>,
    pub closures: Vec<ClosureInfo>,
    /// Closure conversion has run.
    pub closure_converted: bool,
}

impl Program {
    pub fn func(&self, name: &str) -> Option<&Func> {
        self.funcs.get(name)
    }

    pub fn closure(&self, id: u32) -> Option<&ClosureInfo> {
        self.closures.iter().find(|c| c.id == id)
    }
}
