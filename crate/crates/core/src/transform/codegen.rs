//! Bytecode generation for one execution side.
//!
//! Scalars are values on the operand stack; aggregates (records, arrays)
//! are always handled by address. An aggregate call result is copied into a
//! caller temporary straight away, so the callee's dead frame is never read
//! after another call.

use std::collections::BTreeSet;

use crate::bytecode::{self as bc, BinOp, CodeFunction, Instr, Kind, PrintArg, Slot, LOCAL_FRAME};
use crate::diag::Span;
use crate::linker::symbols::{launch_stub, launch_wrapper, mangle};
use crate::sema::Side;
use crate::tir::*;
use crate::types::{align_up, RecordTable, Type};

pub fn slot_of(ty: &Type, records: &RecordTable) -> Slot {
    match ty.kind() {
        Some(k) => Slot::Scalar(k),
        None if *ty == Type::Void => Slot::Void,
        None => Slot::Aggregate(records.size_of(ty) as u32),
    }
}

/// What code generation needs to know about the whole program.
pub struct Ctx<'a> {
    pub records: &'a RecordTable,
    pub side: Side,
    pub kernels: &'a BTreeSet<String>,
}

impl Ctx<'_> {
    fn call_symbol(&self, func: &str) -> String {
        if self.kernels.contains(func) {
            launch_stub(func)
        } else {
            mangle(self.side, func)
        }
    }
}

pub fn compile_function(cx: &Ctx<'_>, func: &Func) -> CodeFunction {
    let mut g = Gen {
        cx,
        func,
        offsets: Vec::with_capacity(func.locals.len()),
        frame: 0,
        local: 0,
        code: Vec::new(),
        spans: Vec::new(),
        strings: Vec::new(),
        span: func.span,
        loops: Vec::new(),
    };
    for v in &func.locals {
        let (size, align) = cx.records.size_align(&v.ty);
        let off = if v.is_local {
            g.local = align_up(g.local, align);
            let o = g.local as u32 | LOCAL_FRAME;
            g.local += size;
            o
        } else {
            g.frame = align_up(g.frame, align);
            let o = g.frame as u32;
            g.frame += size;
            o
        };
        g.offsets.push(off);
    }
    let params = func
        .params
        .iter()
        .map(|p| (g.offsets[p.0 as usize], slot_of(&func.var(*p).ty, cx.records)))
        .collect();
    if let Some(body) = &func.body {
        g.block(body);
    }
    g.span = func.span;
    g.default_return();
    CodeFunction {
        symbol: mangle(cx.side, &func.name),
        frame_size: align_up(g.frame, 8) as u32,
        local_size: align_up(g.local, 8) as u32,
        ret: slot_of(&func.ret, cx.records),
        params,
        strings: g.strings,
        code: g.code,
        spans: g.spans,
    }
}

#[derive(Default)]
struct Loop {
    breaks: Vec<usize>,
    continues: Vec<usize>,
}

struct Gen<'a> {
    cx: &'a Ctx<'a>,
    func: &'a Func,
    offsets: Vec<u32>,
    frame: u64,
    local: u64,
    code: Vec<Instr>,
    spans: Vec<Span>,
    strings: Vec<String>,
    span: Span,
    loops: Vec<Loop>,
}

fn kind(ty: &Type) -> Kind {
    ty.kind()
        .unwrap_or_else(|| panic!("expected a scalar type, found `{ty}`"))
}

fn is_agg(ty: &Type) -> bool {
    matches!(ty, Type::Record(_) | Type::Closure(_) | Type::Array(..))
}

fn binop(op: ArithOp) -> BinOp {
    match op {
        ArithOp::Add => BinOp::Add,
        ArithOp::Sub => BinOp::Sub,
        ArithOp::Mul => BinOp::Mul,
        ArithOp::Div => BinOp::Div,
        ArithOp::Rem => BinOp::Rem,
        ArithOp::Shl => BinOp::Shl,
        ArithOp::Shr => BinOp::Shr,
        ArithOp::BitAnd => BinOp::And,
        ArithOp::BitOr => BinOp::Or,
        ArithOp::BitXor => BinOp::Xor,
    }
}

fn cmpop(op: CmpOp) -> bc::CmpOp {
    match op {
        CmpOp::Lt => bc::CmpOp::Lt,
        CmpOp::Le => bc::CmpOp::Le,
        CmpOp::Gt => bc::CmpOp::Gt,
        CmpOp::Ge => bc::CmpOp::Ge,
        CmpOp::Eq => bc::CmpOp::Eq,
        CmpOp::Ne => bc::CmpOp::Ne,
    }
}

impl Gen<'_> {
    fn emit(&mut self, i: Instr) -> usize {
        self.code.push(i);
        self.spans.push(self.span);
        self.code.len() - 1
    }

    fn here(&self) -> u32 {
        self.code.len() as u32
    }

    fn patch(&mut self, at: usize, target: u32) {
        match &mut self.code[at] {
            Instr::Jump(t) | Instr::JumpIfZero(t) | Instr::JumpIfNotZero(t) => *t = target,
            other => unreachable!("patching non-jump {other}"),
        }
    }

    fn temp(&mut self, ty: &Type) -> u32 {
        let (size, align) = self.cx.records.size_align(ty);
        self.frame = align_up(self.frame, align.max(1));
        let o = self.frame as u32;
        self.frame += size.max(1);
        o
    }

    fn size(&self, ty: &Type) -> u64 {
        self.cx.records.size_of(ty)
    }

    fn elem_size(&self, ptr: &Type) -> i64 {
        self.size(ptr.pointee().expect("pointer type")) as i64
    }

    fn conv(&mut self, from: &Type, to: &Type) {
        let (f, t) = (kind(from), kind(to));
        if f != t {
            self.emit(Instr::Conv(f, t));
        }
    }

    fn default_return(&mut self) {
        match slot_of(&self.func.ret, self.cx.records) {
            Slot::Void => {
                self.emit(Instr::Ret);
            }
            Slot::Scalar(k) => {
                self.emit(match k {
                    Kind::F32 => Instr::PushF32(0.0),
                    Kind::F64 => Instr::PushF64(0.0),
                    _ => Instr::PushInt(0),
                });
                self.emit(Instr::RetVal);
            }
            Slot::Aggregate(_) => {
                let t = self.temp(&self.func.ret.clone());
                self.emit(Instr::FrameAddr(t));
                self.emit(Instr::RetAgg);
            }
        }
    }

    // ---- statements ----

    fn block(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        self.span = s.span;
        match &s.kind {
            StmtKind::Expr(e) => {
                self.value(e);
                if e.ty != Type::Void {
                    self.emit(Instr::Pop);
                }
            }
            StmtKind::Decl { var, init } => {
                if let Some(x) = init {
                    let ty = self.func.var(*var).ty.clone();
                    self.emit(Instr::FrameAddr(self.offsets[var.0 as usize]));
                    self.store_value(&ty, x);
                }
            }
            StmtKind::If { cond, then, els } => {
                self.value(cond);
                let jz = self.emit(Instr::JumpIfZero(0));
                self.block(then);
                if els.is_empty() {
                    let end = self.here();
                    self.patch(jz, end);
                } else {
                    let j = self.emit(Instr::Jump(0));
                    let e = self.here();
                    self.patch(jz, e);
                    self.block(els);
                    let end = self.here();
                    self.patch(j, end);
                }
            }
            StmtKind::While { cond, body } => {
                let top = self.here();
                self.value(cond);
                let jz = self.emit(Instr::JumpIfZero(0));
                self.loop_body(body, top);
                self.span = s.span;
                self.emit(Instr::Jump(top));
                let end = self.here();
                self.patch(jz, end);
                self.close_loop(end);
            }
            StmtKind::For {
                init,
                cond,
                step,
                body,
            } => {
                self.block(init);
                let top = self.here();
                let jz = cond.as_ref().map(|c| {
                    self.value(c);
                    self.emit(Instr::JumpIfZero(0))
                });
                self.loops.push(Loop::default());
                self.block(body);
                let cont = self.here();
                for c in std::mem::take(&mut self.loops.last_mut().unwrap().continues) {
                    self.patch(c, cont);
                }
                if let Some(st) = step {
                    self.value(st);
                    if st.ty != Type::Void {
                        self.emit(Instr::Pop);
                    }
                }
                self.span = s.span;
                self.emit(Instr::Jump(top));
                let end = self.here();
                if let Some(jz) = jz {
                    self.patch(jz, end);
                }
                self.close_loop(end);
            }
            StmtKind::Return(None) => {
                self.emit(Instr::Ret);
            }
            StmtKind::Return(Some(x)) => {
                self.value(x);
                self.emit(if is_agg(&x.ty) { Instr::RetAgg } else { Instr::RetVal });
            }
            StmtKind::Break => {
                let j = self.emit(Instr::Jump(0));
                self.loops.last_mut().expect("break outside loop").breaks.push(j);
            }
            StmtKind::Continue => {
                let j = self.emit(Instr::Jump(0));
                self.loops.last_mut().expect("continue outside loop").continues.push(j);
            }
            StmtKind::Block(b) => self.block(b),
        }
    }

    fn loop_body(&mut self, body: &[Stmt], cont: u32) {
        self.loops.push(Loop::default());
        self.block(body);
        for c in std::mem::take(&mut self.loops.last_mut().unwrap().continues) {
            self.patch(c, cont);
        }
    }

    fn close_loop(&mut self, end: u32) {
        let l = self.loops.pop().unwrap();
        for b in l.breaks {
            self.patch(b, end);
        }
    }

    /// With a destination address on the stack, evaluates `x` and stores it.
    fn store_value(&mut self, ty: &Type, x: &Expr) {
        self.value(x);
        if is_agg(ty) {
            self.emit(Instr::Copy(self.size(ty) as u32));
        } else {
            self.emit(Instr::Store(kind(ty)));
        }
    }

    // ---- expressions ----

    /// Pushes the address of an lvalue, or of an aggregate rvalue.
    fn addr(&mut self, e: &Expr) {
        let saved = self.span;
        self.span = e.span;
        match &e.kind {
            ExprKind::Var(v) => {
                self.emit(Instr::FrameAddr(self.offsets[v.0 as usize]));
            }
            ExprKind::Deref(p) => self.value(p),
            ExprKind::Member(base, field) => {
                if base.is_lvalue() {
                    self.addr(base);
                } else {
                    self.value(base);
                }
                let (off, _) = self
                    .cx
                    .records
                    .field(&base.ty, field)
                    .unwrap_or_else(|| panic!("no field `{field}` in `{}`", base.ty));
                if off != 0 {
                    self.emit(Instr::PushInt(off as i64));
                    self.emit(Instr::Bin(BinOp::Add, Kind::I64));
                }
            }
            _ if is_agg(&e.ty) => self.value(e),
            other => unreachable!("address of non-lvalue {other:?}"),
        }
        self.span = saved;
    }

    /// Pushes a scalar value or an aggregate's address; void pushes nothing.
    fn value(&mut self, e: &Expr) {
        let saved = self.span;
        self.span = e.span;
        self.value_inner(e);
        self.span = saved;
    }

    fn value_inner(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Int(v) => {
                self.emit(Instr::PushInt(*v));
            }
            ExprKind::Float(v) => {
                self.emit(if e.ty == Type::Float {
                    Instr::PushF32(*v as f32)
                } else {
                    Instr::PushF64(*v)
                });
            }
            ExprKind::Bool(b) => {
                self.emit(Instr::PushInt(*b as i64));
            }
            ExprKind::Str(_) => unreachable!("string literal outside print"),
            ExprKind::Var(_) | ExprKind::Deref(_) | ExprKind::Member(..) => {
                self.addr(e);
                if !is_agg(&e.ty) {
                    self.emit(Instr::Load(kind(&e.ty)));
                }
            }
            ExprKind::Capture(_) | ExprKind::ClosureNew { .. } | ExprKind::ClosureCall { .. } => {
                unreachable!("closure conversion must run before code generation")
            }
            ExprKind::Neg(a) => {
                self.value(a);
                self.emit(Instr::Neg(kind(&e.ty)));
            }
            ExprKind::Not(a) => {
                self.value(a);
                self.emit(Instr::Not(kind(&a.ty)));
            }
            ExprKind::BitNot(a) => {
                self.value(a);
                self.emit(Instr::BitNot(kind(&e.ty)));
            }
            ExprKind::AddrOf(x) | ExprKind::Decay(x) => self.addr(x),
            ExprKind::Arith(op, a, b) => {
                self.value(a);
                self.value(b);
                self.emit(Instr::Bin(binop(*op), kind(&e.ty)));
            }
            ExprKind::Cmp(op, a, b) => {
                self.value(a);
                self.value(b);
                self.emit(Instr::Cmp(cmpop(*op), kind(&a.ty)));
            }
            ExprKind::Logical { and, lhs, rhs } => {
                self.value(lhs);
                let short = self.emit(if *and {
                    Instr::JumpIfZero(0)
                } else {
                    Instr::JumpIfNotZero(0)
                });
                self.value(rhs);
                let j = self.emit(Instr::Jump(0));
                let s = self.here();
                self.patch(short, s);
                self.emit(Instr::PushInt(!*and as i64));
                let end = self.here();
                self.patch(j, end);
            }
            ExprKind::PtrAdd(p, i) => {
                self.value(p);
                self.value(i);
                self.scale(self.elem_size(&p.ty));
                self.emit(Instr::Bin(BinOp::Add, Kind::I64));
            }
            ExprKind::PtrDiff(a, b) => {
                self.value(a);
                self.value(b);
                self.emit(Instr::Bin(BinOp::Sub, Kind::I64));
                let n = self.elem_size(&a.ty);
                if n > 1 {
                    self.emit(Instr::PushInt(n));
                    self.emit(Instr::Bin(BinOp::Div, Kind::I64));
                }
            }
            ExprKind::Convert(x) => {
                self.value(x);
                self.conv(&x.ty, &e.ty);
            }
            ExprKind::Assign { op, op_ty, lhs, rhs } => self.assign(*op, op_ty, lhs, rhs),
            ExprKind::IncDec {
                delta,
                post,
                target,
            } => {
                self.addr(target);
                let delta = if target.ty.is_ptr() {
                    delta * self.elem_size(&target.ty)
                } else {
                    *delta
                };
                self.emit(Instr::IncDec {
                    kind: kind(&target.ty),
                    delta,
                    post: *post,
                });
            }
            ExprKind::Call { func, args } => {
                for a in args {
                    self.value(a);
                }
                let sym = self.cx.call_symbol(func);
                self.emit(Instr::Call(sym));
                self.capture_result(&e.ty);
            }
            ExprKind::KernelCall { kernel, args } => {
                for a in args {
                    self.value(a);
                }
                self.emit(Instr::Call(launch_stub(kernel)));
            }
            ExprKind::Builtin(b, args) => self.builtin(*b, args, &e.ty),
            ExprKind::RecordNew { record, fields } => {
                let ty = Type::Record(record.clone());
                let t = self.temp(&ty);
                let def = self.cx.records.get(record).expect("record").clone();
                let (_, _, layout) = self.cx.records.layout_fields(&def.fields);
                for ((x, (_, fty)), fl) in fields.iter().zip(&def.fields).zip(layout) {
                    self.emit(Instr::FrameAddr(t + fl.offset as u32));
                    self.store_value(fty, x);
                }
                self.emit(Instr::FrameAddr(t));
            }
        }
    }

    fn scale(&mut self, n: i64) {
        if n != 1 {
            self.emit(Instr::PushInt(n));
            self.emit(Instr::Bin(BinOp::Mul, Kind::I64));
        }
    }

    fn capture_result(&mut self, ty: &Type) {
        if is_agg(ty) {
            let t = self.temp(ty);
            self.emit(Instr::FrameAddr(t));
            self.emit(Instr::Swap);
            self.emit(Instr::Copy(self.size(ty) as u32));
            self.emit(Instr::FrameAddr(t));
        }
    }

    fn assign(&mut self, op: Option<ArithOp>, op_ty: &Type, lhs: &Expr, rhs: &Expr) {
        self.addr(lhs);
        let Some(op) = op else {
            self.store_value(&lhs.ty, rhs);
            return;
        };
        let lk = kind(&lhs.ty);
        self.emit(Instr::Dup);
        self.emit(Instr::Load(lk));
        if lhs.ty.is_ptr() {
            self.value(rhs);
            self.scale(self.elem_size(&lhs.ty));
            self.emit(Instr::Bin(binop(op), Kind::I64));
        } else {
            self.conv(&lhs.ty, op_ty);
            self.value(rhs);
            self.emit(Instr::Bin(binop(op), kind(op_ty)));
            self.conv(op_ty, &lhs.ty);
        }
        self.emit(Instr::Store(lk));
    }

    fn builtin(&mut self, b: Builtin, args: &[Expr], ty: &Type) {
        match b {
            Builtin::CpeId => {
                self.emit(Instr::CpeId);
            }
            Builtin::NCpes => {
                self.emit(Instr::NCpes);
            }
            Builtin::DmaGet | Builtin::DmaPut => {
                for a in args {
                    self.value(a);
                }
                self.emit(if b == Builtin::DmaGet { Instr::DmaGet } else { Instr::DmaPut });
            }
            Builtin::Min => {
                for a in args {
                    self.value(a);
                }
                self.emit(Instr::Min(kind(ty)));
            }
            Builtin::Print => {
                let mut fmt = Vec::with_capacity(args.len());
                for a in args {
                    if let ExprKind::Str(s) = &a.kind {
                        fmt.push(PrintArg::Str(self.strings.len() as u32));
                        self.strings.push(s.clone());
                    } else {
                        self.value(a);
                        fmt.push(PrintArg::Scalar(kind(&a.ty)));
                    }
                }
                self.emit(Instr::Print(fmt));
            }
        }
    }
}

// ---- kernel launch lowering ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockField {
    pub name: String,
    pub ty: String,
    pub offset: u32,
    pub size: u32,
    pub slot: Slot,
}

/// Parameter block of one kernel: declaration order, natural alignment,
/// total padded to a multiple of 8.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub fields: Vec<BlockField>,
    pub size: u32,
}

pub fn param_block_layout(params: &[(String, Type)], records: &RecordTable) -> BlockLayout {
    let (_, _, fl) = records.layout_fields(params);
    let end = fl.last().map_or(0, |f| f.offset + f.size);
    BlockLayout {
        fields: fl
            .into_iter()
            .zip(params)
            .map(|(f, (_, ty))| BlockField {
                name: f.name,
                ty: f.ty,
                offset: f.offset as u32,
                size: f.size as u32,
                slot: slot_of(ty, records),
            })
            .collect(),
        size: align_up(end, 8) as u32,
    }
}

pub fn kernel_block(kernel: &Func, records: &RecordTable) -> BlockLayout {
    let params: Vec<(String, Type)> = kernel
        .params
        .iter()
        .map(|p| {
            let v = kernel.var(*p);
            (v.name.clone(), v.ty.clone())
        })
        .collect();
    param_block_layout(&params, records)
}

/// HOST stub: its frame is the parameter block, so the caller's arguments
/// land in place and the frame address is handed to the launch.
pub fn launch_stub_function(kernel: &Func, block: &BlockLayout) -> CodeFunction {
    let code = vec![
        if block.size > 0 {
            Instr::FrameAddr(0)
        } else {
            Instr::PushInt(0)
        },
        Instr::Launch {
            wrapper: launch_wrapper(&kernel.name),
            size: block.size,
        },
        Instr::Ret,
    ];
    CodeFunction {
        symbol: launch_stub(&kernel.name),
        frame_size: block.size,
        local_size: 0,
        ret: Slot::Void,
        params: block.fields.iter().map(|f| (f.offset, f.slot)).collect(),
        strings: Vec::new(),
        spans: vec![kernel.span; code.len()],
        code,
    }
}

/// SLAVE wrapper: takes the block as one aggregate parameter living in the
/// CPE's local frame (the call copies it in), unpacks the fields and calls
/// the kernel body.
pub fn launch_wrapper_function(kernel: &Func, block: &BlockLayout) -> CodeFunction {
    let mut code = Vec::new();
    for f in &block.fields {
        code.push(Instr::FrameAddr(LOCAL_FRAME | f.offset));
        if let Slot::Scalar(k) = f.slot {
            code.push(Instr::Load(k));
        }
    }
    code.push(Instr::Call(mangle(Side::Slave, &kernel.name)));
    code.push(Instr::Ret);
    CodeFunction {
        symbol: launch_wrapper(&kernel.name),
        frame_size: 0,
        local_size: block.size,
        ret: Slot::Void,
        params: if block.size > 0 {
            vec![(LOCAL_FRAME, Slot::Aggregate(block.size))]
        } else {
            Vec::new()
        },
        strings: Vec::new(),
        spans: vec![kernel.span; code.len()],
        code,
    }
}
