//! Bytecode interpreter with explicit frames, so CPE activations can be run
//! to completion one after another or interleaved at instruction
//! granularity.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bytecode::{BinOp, CmpOp, CodeFunction, Instr, Kind, PrintArg, Slot, LOCAL_FRAME};
use crate::diag::Span;
use crate::linker::LinkedImage;

use super::memory::{local_addr, Context, Fault, Memory, MAIN_BASE};
use super::{CpeStatus, Mode, RunResult, SimConfig, SimError, Status, Trap, TrapKind};

const CPE_STACK_MAX: u64 = 256 << 10;
const CPE_STACK_MIN: u64 = 1 << 10;
const MAX_QUANTUM: u64 = 64;

/// Instruction with call targets resolved to function indices.
enum Op {
    Nop,
    Push(u64),
    FrameAddr(u32),
    Load(Kind),
    Store(Kind),
    Copy(u32),
    Dup,
    Pop,
    Swap,
    Bin(BinOp, Kind),
    Cmp(CmpOp, Kind),
    Neg(Kind),
    Not(Kind),
    BitNot(Kind),
    Conv(Kind, Kind),
    IncDec { kind: Kind, delta: i64, post: bool },
    Jump(u32),
    JumpIfZero(u32),
    JumpIfNotZero(u32),
    Call(u32),
    Ret,
    RetVal,
    RetAgg,
    Launch { wrapper: u32, size: u32 },
    CpeId,
    NCpes,
    DmaGet,
    DmaPut,
    Print(Vec<PrintArg>),
    Min(Kind),
    /// `FrameAddr` followed by `Load`; skips the `Load`.
    LoadFrame(u32, Kind),
    /// Constant followed by a conversion, already applied; skips the `Conv`.
    PushSkip(u64),
}

/// Fuses common instruction pairs in place. The second instruction of each
/// pair stays where it is, so jumps into the middle of a pair still work.
fn fuse(code: &mut [Op]) {
    for i in 0..code.len().saturating_sub(1) {
        let fused = match (&code[i], &code[i + 1]) {
            (Op::FrameAddr(o), Op::Load(k)) => Op::LoadFrame(*o, *k),
            (Op::Push(v), Op::Conv(a, b)) => Op::PushSkip(convert(*a, *b, *v)),
            _ => continue,
        };
        code[i] = fused;
    }
}

struct Func<'a> {
    src: &'a CodeFunction,
    code: Vec<Op>,
}

struct Frame {
    func: u32,
    pc: u32,
    base: u64,
    lbase: u64,
    prev_sp: u64,
    prev_lsp: u64,
    stack_base: usize,
}

struct Thread {
    ctx: Context,
    frames: Vec<Frame>,
    stack: Vec<u64>,
    sp: u64,
    sp_end: u64,
    lsp: u64,
    out: String,
}

impl Thread {
    fn new(ctx: Context, sp: u64, sp_end: u64) -> Self {
        Thread {
            ctx,
            frames: Vec::new(),
            stack: Vec::new(),
            sp,
            sp_end,
            lsp: 0,
            out: String::new(),
        }
    }

    fn pop(&mut self) -> u64 {
        self.stack.pop().expect("operand stack underflow")
    }
}

enum Event {
    Done(Option<u64>),
    Yield,
    Launch { wrapper: u32, size: u32, block: u64 },
}

pub struct Machine<'a> {
    funcs: Vec<Func<'a>>,
    entry: u32,
    mem: Memory,
    cfg: SimConfig,
    stdout: String,
    trace: Vec<String>,
    mpe_end: u64,
    cpe_stack: u64,
}

fn align8(n: u64) -> u64 {
    n.div_ceil(8) * 8
}

fn f32_of(v: u64) -> f32 {
    f32::from_bits(v as u32)
}

fn bits32(x: f32) -> u64 {
    x.to_bits() as u64
}

/// Canonical stack representation of an integer of kind `k`.
fn norm(k: Kind, v: i64) -> u64 {
    match k {
        Kind::Bool => (v != 0) as u64,
        Kind::I32 => v as i32 as i64 as u64,
        _ => v as u64,
    }
}

enum Num {
    I(i64),
    F(f64),
}

fn num(k: Kind, v: u64) -> Num {
    match k {
        Kind::F32 => Num::F(f32_of(v) as f64),
        Kind::F64 => Num::F(f64::from_bits(v)),
        _ => Num::I(v as i64),
    }
}

fn convert(from: Kind, to: Kind, v: u64) -> u64 {
    let n = num(from, v);
    match to {
        Kind::Bool => match n {
            Num::I(i) => (i != 0) as u64,
            Num::F(x) => (x != 0.0) as u64,
        },
        Kind::I32 => match n {
            Num::I(i) => norm(Kind::I32, i),
            Num::F(x) => x as i32 as i64 as u64,
        },
        Kind::I64 | Kind::Ptr => match n {
            Num::I(i) => i as u64,
            Num::F(x) => x as i64 as u64,
        },
        Kind::F32 => bits32(match n {
            Num::I(i) => i as f32,
            Num::F(x) => x as f32,
        }),
        Kind::F64 => match n {
            Num::I(i) => (i as f64).to_bits(),
            Num::F(x) => x.to_bits(),
        },
    }
}

fn float_bin(op: BinOp, x: f64, y: f64) -> Result<f64, Fault> {
    Ok(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => x / y,
        other => return Err((TrapKind::Oob, format!("invalid floating-point operation {other:?}"))),
    })
}

fn bin(op: BinOp, k: Kind, a: u64, b: u64) -> Result<u64, Fault> {
    match k {
        Kind::F32 => Ok(bits32(float_bin(op, f32_of(a) as f64, f32_of(b) as f64)? as f32)),
        Kind::F64 => Ok(float_bin(op, f64::from_bits(a), f64::from_bits(b))?.to_bits()),
        _ => {
            let (x, y) = (a as i64, b as i64);
            let narrow = k == Kind::I32;
            let bits = if narrow { 31 } else { 63 };
            let r = match op {
                BinOp::Add => x.wrapping_add(y),
                BinOp::Sub => x.wrapping_sub(y),
                BinOp::Mul => x.wrapping_mul(y),
                BinOp::Div | BinOp::Rem if y == 0 => {
                    return Err((TrapKind::Div0, "integer division by zero".into()))
                }
                BinOp::Div if narrow => (x as i32).wrapping_div(y as i32) as i64,
                BinOp::Rem if narrow => (x as i32).wrapping_rem(y as i32) as i64,
                BinOp::Div => x.wrapping_div(y),
                BinOp::Rem => x.wrapping_rem(y),
                BinOp::And => x & y,
                BinOp::Or => x | y,
                BinOp::Xor => x ^ y,
                BinOp::Shl => x.wrapping_shl((y & bits) as u32),
                BinOp::Shr if narrow => ((x as i32) >> (y & bits)) as i64,
                BinOp::Shr => x >> (y & bits),
            };
            Ok(norm(k, r))
        }
    }
}

fn compare(op: CmpOp, k: Kind, a: u64, b: u64) -> bool {
    use std::cmp::Ordering;
    let ord = match (num(k, a), num(k, b)) {
        (Num::I(x), Num::I(y)) => Some(x.cmp(&y)),
        (Num::F(x), Num::F(y)) => x.partial_cmp(&y),
        _ => unreachable!(),
    };
    match (op, ord) {
        (CmpOp::Ne, None) => true,
        (_, None) => false,
        (CmpOp::Lt, Some(o)) => o == Ordering::Less,
        (CmpOp::Le, Some(o)) => o != Ordering::Greater,
        (CmpOp::Gt, Some(o)) => o == Ordering::Greater,
        (CmpOp::Ge, Some(o)) => o != Ordering::Less,
        (CmpOp::Eq, Some(o)) => o == Ordering::Equal,
        (CmpOp::Ne, Some(o)) => o != Ordering::Equal,
    }
}

pub fn format_value(k: Kind, v: u64) -> String {
    match k {
        Kind::Bool => if v != 0 { "true" } else { "false" }.to_string(),
        Kind::I32 | Kind::I64 => (v as i64).to_string(),
        Kind::F32 => f32_of(v).to_string(),
        Kind::F64 => f64::from_bits(v).to_string(),
        Kind::Ptr => format!("{v:#x}"),
    }
}

fn parse_arg(k: Kind, s: &str) -> Option<u64> {
    Some(match k {
        Kind::Bool => match s {
            "true" => 1,
            "false" => 0,
            _ => (s.parse::<i64>().ok()? != 0) as u64,
        },
        Kind::I32 => norm(Kind::I32, s.parse::<i32>().ok()? as i64),
        Kind::I64 => s.parse::<i64>().ok()? as u64,
        Kind::F32 => bits32(s.parse::<f32>().ok()?),
        Kind::F64 => s.parse::<f64>().ok()?.to_bits(),
        Kind::Ptr => return None,
    })
}

impl<'a> Machine<'a> {
    pub fn new(image: &'a LinkedImage, cfg: &SimConfig) -> Result<Self, SimError> {
        if cfg.n_cpes == 0 || cfg.n_cpes > 0xFFFF {
            return Err(SimError::Config(format!(
                "CPE count must be between 1 and 65535, got {}",
                cfg.n_cpes
            )));
        }
        let main = align8(cfg.main_memory_bytes as u64);
        let cpe_stack = (main / 2 / cfg.n_cpes as u64 / 8 * 8).min(CPE_STACK_MAX);
        if cpe_stack < CPE_STACK_MIN {
            return Err(SimError::Config(format!(
                "{} bytes of main memory cannot hold stacks for {} CPEs",
                cfg.main_memory_bytes, cfg.n_cpes
            )));
        }
        let index: HashMap<&str, u32> = image
            .functions
            .keys()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i as u32))
            .collect();
        let resolve = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| SimError::Image(format!("undefined symbol `{s}`")))
        };
        let mut funcs = Vec::with_capacity(index.len());
        for f in image.functions.values() {
            let n = f.code.len() as u32;
            let target = |t: u32| {
                if t <= n {
                    Ok(t)
                } else {
                    Err(SimError::Image(format!("jump target {t} out of range in `{}`", f.symbol)))
                }
            };
            let mut code = Vec::with_capacity(f.code.len());
            for i in &f.code {
                code.push(match i {
                    Instr::Nop => Op::Nop,
                    Instr::PushInt(v) => Op::Push(*v as u64),
                    Instr::PushF32(v) => Op::Push(bits32(*v)),
                    Instr::PushF64(v) => Op::Push(v.to_bits()),
                    Instr::FrameAddr(o) => Op::FrameAddr(*o),
                    Instr::Load(k) => Op::Load(*k),
                    Instr::Store(k) => Op::Store(*k),
                    Instr::Copy(n) => Op::Copy(*n),
                    Instr::Dup => Op::Dup,
                    Instr::Pop => Op::Pop,
                    Instr::Swap => Op::Swap,
                    Instr::Bin(o, k) => Op::Bin(*o, *k),
                    Instr::Cmp(o, k) => Op::Cmp(*o, *k),
                    Instr::Neg(k) => Op::Neg(*k),
                    Instr::Not(k) => Op::Not(*k),
                    Instr::BitNot(k) => Op::BitNot(*k),
                    Instr::Conv(a, b) => Op::Conv(*a, *b),
                    Instr::IncDec { kind, delta, post } => Op::IncDec {
                        kind: *kind,
                        delta: *delta,
                        post: *post,
                    },
                    Instr::Jump(t) => Op::Jump(target(*t)?),
                    Instr::JumpIfZero(t) => Op::JumpIfZero(target(*t)?),
                    Instr::JumpIfNotZero(t) => Op::JumpIfNotZero(target(*t)?),
                    Instr::Call(s) => Op::Call(resolve(s)?),
                    Instr::Ret => Op::Ret,
                    Instr::RetVal => Op::RetVal,
                    Instr::RetAgg => Op::RetAgg,
                    Instr::Launch { wrapper, size } => Op::Launch {
                        wrapper: resolve(wrapper)?,
                        size: *size,
                    },
                    Instr::CpeId => Op::CpeId,
                    Instr::NCpes => Op::NCpes,
                    Instr::DmaGet => Op::DmaGet,
                    Instr::DmaPut => Op::DmaPut,
                    Instr::Print(a) => {
                        if a.iter().any(|p| matches!(p, PrintArg::Str(i) if *i as usize >= f.strings.len())) {
                            return Err(SimError::Image(format!("bad string index in `{}`", f.symbol)));
                        }
                        Op::Print(a.clone())
                    }
                    Instr::Min(k) => Op::Min(*k),
                });
            }
            fuse(&mut code);
            funcs.push(Func { src: f, code });
        }
        let entry = resolve(&image.entry)?;
        let main_end = MAIN_BASE + main;
        Ok(Machine {
            funcs,
            entry,
            mem: Memory::new(main as usize, cfg.n_cpes, cfg.local_memory_bytes),
            cfg: cfg.clone(),
            stdout: String::new(),
            trace: Vec::new(),
            mpe_end: main_end - cpe_stack * cfg.n_cpes as u64,
            cpe_stack,
        })
    }

    pub fn run(mut self, argv: &[String]) -> Result<RunResult, SimError> {
        let f = self.funcs[self.entry as usize].src;
        if f.params.len() != argv.len() {
            return Err(SimError::Args(format!(
                "`{}` expects {} argument(s), got {}",
                f.symbol,
                f.params.len(),
                argv.len()
            )));
        }
        let mut t = Thread::new(Context::Mpe, MAIN_BASE, self.mpe_end);
        for ((_, slot), a) in f.params.iter().zip(argv) {
            let v = match slot {
                Slot::Scalar(k) => parse_arg(*k, a),
                _ => None,
            };
            let Some(v) = v else {
                return Err(SimError::Args(format!(
                    "cannot pass `{a}` as a {slot} argument to `{}`",
                    f.symbol
                )));
            };
            t.stack.push(v);
        }
        let result = self.run_mpe(&mut t);
        self.stdout.push_str(&t.out);
        let status = match result {
            Ok(v) => Status::Exited(match (f.ret, v) {
                (Slot::Scalar(k), Some(v)) => convert(k, Kind::I32, v) as i64 as i32,
                _ => 0,
            }),
            Err(trap) => Status::Trapped(trap),
        };
        Ok(RunResult {
            status,
            stdout: self.stdout,
            trace: self.trace,
        })
    }

    fn run_mpe(&mut self, t: &mut Thread) -> Result<Option<u64>, Trap> {
        self.call(t, self.entry).map_err(|f| self.trap(t, f))?;
        loop {
            match self.exec(t, u64::MAX)? {
                Event::Done(v) => return Ok(v),
                Event::Yield => {}
                Event::Launch { wrapper, size, block } => {
                    self.stdout.push_str(&std::mem::take(&mut t.out));
                    if let Err(mut trap) = self.launch(wrapper, size, block) {
                        // Report the launch site as well as the CPE fault.
                        let site = self.trap(t, (trap.kind, String::new()));
                        trap.message = format!(
                            "{} (kernel launched from `{}` at {})",
                            trap.message, site.symbol, site.span
                        );
                        return Err(trap);
                    }
                }
            }
        }
    }

    fn launch(&mut self, wrapper: u32, size: u32, block: u64) -> Result<(), Trap> {
        let n = self.cfg.n_cpes;
        let wf = self.funcs[wrapper as usize].src;
        if self.cfg.trace {
            self.trace
                .push(format!("LAUNCH {} block={size}B cpes={n}", wf.symbol));
        }
        let main_end = self.mem.main_end();
        let mut threads: Vec<Thread> = (0..n)
            .map(|i| {
                let start = main_end - self.cpe_stack * (n - i) as u64;
                Thread::new(Context::Cpe(i), start, start + self.cpe_stack)
            })
            .collect();
        let mut status = vec![CpeStatus::Pending; n as usize];
        let fail = |this: &mut Self, threads: &mut [Thread], status: &mut Vec<CpeStatus>, i: usize, mut trap: Trap| {
            status[i] = CpeStatus::Trapped;
            for t in threads.iter_mut() {
                this.stdout.push_str(&std::mem::take(&mut t.out));
            }
            trap.launch = Some(status.clone());
            trap
        };
        for (i, t) in threads.iter_mut().enumerate() {
            if !wf.params.is_empty() {
                t.stack.push(block);
            }
            if let Err(f) = self.call(t, wrapper) {
                let mut trap = self.trap(t, f);
                trap.symbol = wf.symbol.clone();
                status[i] = CpeStatus::Trapped;
                trap.launch = Some(status);
                return Err(trap);
            }
        }
        match self.cfg.mode {
            Mode::Sequential => {
                for i in 0..n as usize {
                    match self.exec(&mut threads[i], u64::MAX) {
                        Ok(_) => {
                            status[i] = CpeStatus::Completed;
                            let out = std::mem::take(&mut threads[i].out);
                            self.stdout.push_str(&out);
                        }
                        Err(trap) => return Err(fail(self, &mut threads, &mut status, i, trap)),
                    }
                }
            }
            Mode::Interleaved => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
                let mut live = n as usize;
                while live > 0 {
                    for i in 0..n as usize {
                        if status[i] != CpeStatus::Pending {
                            continue;
                        }
                        let q = rng.gen_range(1..=MAX_QUANTUM);
                        match self.exec(&mut threads[i], q) {
                            Ok(Event::Yield) => {}
                            Ok(_) => {
                                status[i] = CpeStatus::Completed;
                                live -= 1;
                            }
                            Err(trap) => return Err(fail(self, &mut threads, &mut status, i, trap)),
                        }
                    }
                }
                for t in &mut threads {
                    self.stdout.push_str(&std::mem::take(&mut t.out));
                }
            }
        }
        Ok(())
    }

    fn trap(&self, t: &Thread, (kind, message): Fault) -> Trap {
        let (symbol, span) = match t.frames.last() {
            Some(fr) => {
                let f = self.funcs[fr.func as usize].src;
                let pc = fr.pc.saturating_sub(1) as usize;
                (f.symbol.clone(), f.spans.get(pc).copied().unwrap_or_default())
            }
            None => (String::new(), Span::default()),
        };
        Trap {
            kind,
            context: t.ctx,
            symbol,
            span,
            message,
            launch: None,
        }
    }

    fn frame_addr(ctx: Context, fr: &Frame, off: u32) -> Result<u64, Fault> {
        if off & LOCAL_FRAME == 0 {
            return Ok(fr.base + off as u64);
        }
        match ctx {
            Context::Cpe(c) => Ok(local_addr(c, fr.lbase + (off & !LOCAL_FRAME) as u64)),
            Context::Mpe => Err((
                TrapKind::LocalFromMpe,
                "local-memory variable used on the MPE".into(),
            )),
        }
    }

    fn call(&mut self, t: &mut Thread, func: u32) -> Result<(), Fault> {
        let f = self.funcs[func as usize].src;
        if t.frames.len() >= self.cfg.max_call_depth {
            return Err((
                TrapKind::Oom,
                format!("call depth limit {} exceeded calling `{}`", self.cfg.max_call_depth, f.symbol),
            ));
        }
        let frame_size = f.frame_size as u64;
        let local_size = f.local_size as u64;
        let base = align8(t.sp);
        if base + frame_size > t.sp_end {
            return Err((
                TrapKind::Oom,
                format!("stack exhausted allocating {frame_size}-byte frame for `{}`", f.symbol),
            ));
        }
        let lbase = align8(t.lsp);
        if local_size > 0 {
            let Context::Cpe(c) = t.ctx else {
                return Err((
                    TrapKind::LocalFromMpe,
                    format!("`{}` needs local memory but runs on the MPE", f.symbol),
                ));
            };
            if lbase + local_size > self.mem.local_size() {
                return Err((
                    TrapKind::Oom,
                    format!(
                        "local memory exhausted: `{}` needs {local_size} bytes at offset {lbase} of {}",
                        f.symbol,
                        self.mem.local_size()
                    ),
                ));
            }
            self.mem.zero(t.ctx, local_addr(c, lbase), local_size)?;
        }
        if frame_size > 0 {
            self.mem.zero(t.ctx, base, frame_size)?;
        }
        let n = f.params.len();
        if t.stack.len() < n {
            return Err((TrapKind::Oob, "operand stack underflow at call".into()));
        }
        let args = t.stack.split_off(t.stack.len() - n);
        let fr = Frame {
            func,
            pc: 0,
            base,
            lbase,
            prev_sp: t.sp,
            prev_lsp: t.lsp,
            stack_base: t.stack.len(),
        };
        for ((off, slot), v) in f.params.iter().zip(args) {
            let addr = Self::frame_addr(t.ctx, &fr, *off)?;
            match slot {
                Slot::Scalar(k) => self.mem.store(t.ctx, addr, *k, v)?,
                Slot::Aggregate(size) => self.mem.copy(t.ctx, addr, v, *size as u64)?,
                Slot::Void => {}
            }
        }
        t.sp = base + frame_size;
        t.lsp = lbase + local_size;
        t.frames.push(fr);
        Ok(())
    }

    /// Returns from the current activation; `Some` when the thread is done.
    fn ret(t: &mut Thread, value: Option<u64>) -> Option<Option<u64>> {
        let fr = t.frames.pop().expect("return without frame");
        t.sp = fr.prev_sp;
        t.lsp = fr.prev_lsp;
        t.stack.truncate(fr.stack_base);
        if t.frames.is_empty() {
            return Some(value);
        }
        if let Some(v) = value {
            t.stack.push(v);
        }
        None
    }

    /// Runs `t` for at most `budget` instructions.
    fn exec(&mut self, t: &mut Thread, budget: u64) -> Result<Event, Trap> {
        let mut steps = 0u64;
        loop {
            if steps == budget {
                return Ok(Event::Yield);
            }
            steps += 1;
            match self.step(t) {
                Ok(None) => {}
                Ok(Some(ev)) => return Ok(ev),
                Err(f) => return Err(self.trap(t, f)),
            }
        }
    }

    fn step(&mut self, t: &mut Thread) -> Result<Option<Event>, Fault> {
        let funcs = &self.funcs;
        let fr = t.frames.last_mut().expect("running thread without frame");
        let code = &funcs[fr.func as usize].code;
        let Some(op) = code.get(fr.pc as usize) else {
            return Ok(Self::ret(t, None).map(Event::Done));
        };
        fr.pc += 1;
        let ctx = t.ctx;
        match op {
            Op::Nop => {}
            Op::Push(v) => t.stack.push(*v),
            Op::FrameAddr(o) => {
                let a = Self::frame_addr(ctx, fr, *o)?;
                t.stack.push(a);
            }
            Op::LoadFrame(o, k) => {
                let a = Self::frame_addr(ctx, fr, *o)?;
                fr.pc += 1;
                let v = self.mem.load(ctx, a, *k)?;
                t.stack.push(v);
            }
            Op::PushSkip(v) => {
                fr.pc += 1;
                t.stack.push(*v);
            }
            Op::Load(k) => {
                let a = t.pop();
                let v = self.mem.load(ctx, a, *k)?;
                t.stack.push(v);
            }
            Op::Store(k) => {
                let v = t.pop();
                let a = t.pop();
                self.mem.store(ctx, a, *k, v)?;
            }
            Op::Copy(n) => {
                let src = t.pop();
                let dst = t.pop();
                self.mem.copy(ctx, dst, src, *n as u64)?;
            }
            Op::Dup => {
                let v = *t.stack.last().expect("operand stack underflow");
                t.stack.push(v);
            }
            Op::Pop => {
                t.pop();
            }
            Op::Swap => {
                let n = t.stack.len();
                t.stack.swap(n - 1, n - 2);
            }
            Op::Bin(op, k) => {
                let b = t.pop();
                let a = t.pop();
                t.stack.push(bin(*op, *k, a, b)?);
            }
            Op::Cmp(op, k) => {
                let b = t.pop();
                let a = t.pop();
                t.stack.push(compare(*op, *k, a, b) as u64);
            }
            Op::Neg(k) => {
                let a = t.pop();
                t.stack.push(match k {
                    Kind::F32 => bits32(-f32_of(a)),
                    Kind::F64 => (-f64::from_bits(a)).to_bits(),
                    _ => norm(*k, (a as i64).wrapping_neg()),
                });
            }
            Op::Not(k) => {
                let a = t.pop();
                t.stack.push((convert(*k, Kind::Bool, a) == 0) as u64);
            }
            Op::BitNot(k) => {
                let a = t.pop();
                t.stack.push(norm(*k, !(a as i64)));
            }
            Op::Conv(a, b) => {
                let v = t.pop();
                t.stack.push(convert(*a, *b, v));
            }
            Op::IncDec { kind, delta, post } => {
                let a = t.pop();
                let old = self.mem.load(ctx, a, *kind)?;
                let new = match kind {
                    Kind::F32 => bits32(f32_of(old) + *delta as f32),
                    Kind::F64 => (f64::from_bits(old) + *delta as f64).to_bits(),
                    _ => norm(*kind, (old as i64).wrapping_add(*delta)),
                };
                self.mem.store(ctx, a, *kind, new)?;
                t.stack.push(if *post { old } else { new });
            }
            Op::Jump(target) => fr.pc = *target,
            Op::JumpIfZero(target) => {
                let target = *target;
                if t.pop() == 0 {
                    t.frames.last_mut().unwrap().pc = target;
                }
            }
            Op::JumpIfNotZero(target) => {
                let target = *target;
                if t.pop() != 0 {
                    t.frames.last_mut().unwrap().pc = target;
                }
            }
            Op::Call(f) => {
                let f = *f;
                self.call(t, f)?;
            }
            Op::Ret => return Ok(Self::ret(t, None).map(Event::Done)),
            Op::RetVal | Op::RetAgg => {
                let v = t.pop();
                return Ok(Self::ret(t, Some(v)).map(Event::Done));
            }
            Op::Launch { wrapper, size } => {
                let (wrapper, size) = (*wrapper, *size);
                let block = t.pop();
                if let Context::Cpe(c) = ctx {
                    return Err((
                        TrapKind::NestedLaunch,
                        format!(
                            "CPE {c} attempted to launch `{}`; kernels can only be launched from the MPE",
                            self.funcs[wrapper as usize].src.symbol
                        ),
                    ));
                }
                return Ok(Some(Event::Launch { wrapper, size, block }));
            }
            Op::CpeId => match ctx {
                Context::Cpe(c) => t.stack.push(c as u64),
                Context::Mpe => {
                    return Err((TrapKind::CpeIdFromMpe, "cpe_id() called on the MPE".into()))
                }
            },
            Op::NCpes => t.stack.push(self.cfg.n_cpes as u64),
            Op::DmaGet | Op::DmaPut => {
                let get = matches!(op, Op::DmaGet);
                let n = t.pop() as i64;
                let src = t.pop();
                let dst = t.pop();
                if ctx == Context::Mpe {
                    return Err((
                        TrapKind::DmaFromMpe,
                        format!("{} called on the MPE", if get { "dma_get" } else { "dma_put" }),
                    ));
                }
                self.mem.dma(ctx, dst, src, n, get)?;
            }
            Op::Print(args) => {
                let strings = &funcs[fr.func as usize].src.strings;
                let n = args.iter().filter(|a| matches!(a, PrintArg::Scalar(_))).count();
                let vals = t.stack.split_off(t.stack.len() - n);
                let mut vals = vals.into_iter();
                let mut parts = Vec::with_capacity(args.len());
                for a in args {
                    parts.push(match a {
                        PrintArg::Str(i) => strings[*i as usize].clone(),
                        PrintArg::Scalar(k) => format_value(*k, vals.next().unwrap()),
                    });
                }
                let line = parts.join(" ");
                t.out.push_str(&line);
                t.out.push('\n');
            }
            Op::Min(k) => {
                let b = t.pop();
                let a = t.pop();
                t.stack.push(if compare(CmpOp::Lt, *k, b, a) { b } else { a });
            }
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_of(code: Vec<Instr>, frame_size: u32) -> LinkedImage {
        let main = CodeFunction {
            symbol: "main".into(),
            frame_size,
            local_size: 0,
            ret: Slot::Scalar(Kind::I32),
            params: vec![],
            strings: vec![],
            spans: vec![Span::default(); code.len()],
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
    fn fused_pairs() {
        let mut code = vec![Op::FrameAddr(8), Op::Load(Kind::I64), Op::Push(7), Op::Conv(Kind::I32, Kind::F64)];
        fuse(&mut code);
        assert!(matches!(code[0], Op::LoadFrame(8, Kind::I64)));
        assert!(matches!(code[1], Op::Load(Kind::I64)));
        assert!(matches!(code[2], Op::PushSkip(v) if f64::from_bits(v) == 7.0));
        assert!(matches!(code[3], Op::Conv(..)));
    }

    #[test]
    fn jump_into_fused_pair() {
        use Instr::*;
        let img = image_of(
            vec![
                FrameAddr(0),
                PushInt(5),
                Store(Kind::I64),
                FrameAddr(0),
                Jump(6),
                FrameAddr(0),
                Load(Kind::I64),
                Conv(Kind::I64, Kind::I32),
                RetVal,
            ],
            8,
        );
        let r = Machine::new(&img, &SimConfig::default()).unwrap().run(&[]).unwrap();
        assert_eq!(r.status, Status::Exited(5));
    }

    #[test]
    fn integer_ops_wrap_like_c() {
        let m = norm(Kind::I32, i32::MAX as i64);
        assert_eq!(bin(BinOp::Add, Kind::I32, m, 1).unwrap() as i64, i32::MIN as i64);
        assert_eq!(bin(BinOp::Div, Kind::I32, (-7i64) as u64, 2).unwrap() as i64, -3);
        assert_eq!(bin(BinOp::Rem, Kind::I32, (-7i64) as u64, 2).unwrap() as i64, -1);
        assert_eq!(bin(BinOp::Div, Kind::I64, 1, 0).unwrap_err().0, TrapKind::Div0);
        assert_eq!(bin(BinOp::Shr, Kind::I32, (-8i64) as u64, 1).unwrap() as i64, -4);
    }

    #[test]
    fn conversions() {
        assert_eq!(f32_of(convert(Kind::I32, Kind::F32, 3)), 3.0);
        assert_eq!(convert(Kind::F64, Kind::I32, (-2.7f64).to_bits()) as i64, -2);
        assert_eq!(convert(Kind::F32, Kind::Bool, bits32(0.5)), 1);
        assert_eq!(convert(Kind::I64, Kind::I32, 1 << 32), 0);
    }

    #[test]
    fn formatting() {
        assert_eq!(format_value(Kind::F32, bits32(2.0)), "2");
        assert_eq!(format_value(Kind::F64, 0.1f64.to_bits()), "0.1");
        assert_eq!(format_value(Kind::Bool, 1), "true");
        assert_eq!(format_value(Kind::I32, (-3i64) as u64), "-3");
    }
}
