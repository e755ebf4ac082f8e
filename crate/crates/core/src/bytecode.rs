//! Stack-machine instruction set executed by the simulator.
//!
//! Every function body is a flat instruction list plus a parallel table of
//! source positions. Operands live on a per-activation value stack of
//! 64-bit slots:
//!
//! * integers (`Bool`, `I32`, `I64`, `Ptr`) are stored sign-extended;
//! * `F32` values are stored as their IEEE bit pattern in the low 32 bits;
//! * `F64` values are stored as their IEEE bit pattern.
//!
//! Local variables live in the activation's frame, which is part of
//! simulated main memory, so every variable has an address. A CPE
//! activation additionally owns a second frame in its local memory for
//! `local` declarations; frame offsets with [`LOCAL_FRAME`] set address it.
//!
//! # Binary encoding
//!
//! All integers are little-endian. Strings are `u32` byte length followed by
//! UTF-8 bytes. A function is encoded as:
//!
//! ```text
//! str    symbol
//! u32    frame_size
//! u32    local_size
//! slot   return slot            (see below)
//! u32    n_params, then n_params x { u32 frame_offset, slot }
//! u32    n_strings, then n_strings x str
//! u32    n_instrs, then n_instrs x instruction
//! u32    n_instrs x { u32 line, u32 col }
//! ```
//!
//! A `slot` is one byte tag: `0` void, `1..=6` scalar of kind
//! Bool/I32/I64/F32/F64/Ptr, `7` aggregate followed by `u32` size.
//!
//! An instruction is a one-byte opcode followed by its operands, in the
//! order of the fields of [`Instr`]. Kinds are one byte (`1..=6`), operator
//! tags one byte (declaration order of [`BinOp`]/[`CmpOp`], from 0),
//! jump targets and sizes `u32`, constants `i64`/`f32`/`f64` raw bits.

use std::fmt;

use thiserror::Error;

use crate::diag::Span;

/// Frame-offset flag selecting the activation's local-memory frame.
pub const LOCAL_FRAME: u32 = 1 << 31;

/// Machine-level scalar kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Bool,
    I32,
    I64,
    F32,
    F64,
    Ptr,
}

impl Kind {
    pub fn size(self) -> u64 {
        match self {
            Kind::Bool => 1,
            Kind::I32 | Kind::F32 => 4,
            Kind::I64 | Kind::F64 | Kind::Ptr => 8,
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, Kind::F32 | Kind::F64)
    }

    fn tag(self) -> u8 {
        match self {
            Kind::Bool => 1,
            Kind::I32 => 2,
            Kind::I64 => 3,
            Kind::F32 => 4,
            Kind::F64 => 5,
            Kind::Ptr => 6,
        }
    }

    fn from_tag(t: u8) -> Option<Kind> {
        Some(match t {
            1 => Kind::Bool,
            2 => Kind::I32,
            3 => Kind::I64,
            4 => Kind::F32,
            5 => Kind::F64,
            6 => Kind::Ptr,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Bool => "bool",
            Kind::I32 => "i32",
            Kind::I64 => "i64",
            Kind::F32 => "f32",
            Kind::F64 => "f64",
            Kind::Ptr => "ptr",
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
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

const BINOPS: [BinOp; 10] = [
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::Div,
    BinOp::Rem,
    BinOp::And,
    BinOp::Or,
    BinOp::Xor,
    BinOp::Shl,
    BinOp::Shr,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

const CMPOPS: [CmpOp; 6] = [
    CmpOp::Lt,
    CmpOp::Le,
    CmpOp::Gt,
    CmpOp::Ge,
    CmpOp::Eq,
    CmpOp::Ne,
];

/// How one `print` argument is formatted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrintArg {
    Scalar(Kind),
    /// Index into the function's string table; takes no stack slot.
    Str(u32),
}

/// Value slot of a parameter or return value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Void,
    Scalar(Kind),
    /// Passed as an address; the callee copies `size` bytes into its frame.
    Aggregate(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instr {
    Nop,
    PushInt(i64),
    PushF32(f32),
    PushF64(f64),
    /// Push the address of a frame slot (see [`LOCAL_FRAME`]).
    FrameAddr(u32),
    /// Pop address, push the value loaded from it.
    Load(Kind),
    /// Pop value, pop address, store.
    Store(Kind),
    /// Pop source address, pop destination address, copy bytes.
    Copy(u32),
    Dup,
    Pop,
    Swap,
    Bin(BinOp, Kind),
    Cmp(CmpOp, Kind),
    Neg(Kind),
    /// Logical not: push 1 if the operand is zero.
    Not(Kind),
    BitNot(Kind),
    Conv(Kind, Kind),
    /// Pop address, add `delta` to the value stored there, push the old
    /// (`post`) or new value.
    IncDec { kind: Kind, delta: i64, post: bool },
    Jump(u32),
    JumpIfZero(u32),
    JumpIfNotZero(u32),
    /// Call by symbol name; arguments are on the stack in order.
    Call(String),
    Ret,
    /// Return the scalar on top of the stack.
    RetVal,
    /// Return the aggregate whose address is on top of the stack; the caller
    /// copies it out before the next call.
    RetAgg,
    /// Pop the parameter-block address and start the CPE array on `wrapper`.
    Launch { wrapper: String, size: u32 },
    CpeId,
    NCpes,
    /// Pop nbytes, source (main), destination (local).
    DmaGet,
    /// Pop nbytes, source (local), destination (main).
    DmaPut,
    Print(Vec<PrintArg>),
    Min(Kind),
}

/// A compiled function body.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeFunction {
    pub symbol: String,
    pub frame_size: u32,
    pub local_size: u32,
    pub ret: Slot,
    /// Frame offset and slot of each parameter, in order.
    pub params: Vec<(u32, Slot)>,
    pub strings: Vec<String>,
    pub code: Vec<Instr>,
    pub spans: Vec<Span>,
}

impl CodeFunction {
    /// Symbols this body calls or launches.
    pub fn references(&self) -> impl Iterator<Item = (&str, bool)> {
        self.code.iter().filter_map(|i| match i {
            Instr::Call(s) => Some((s.as_str(), false)),
            Instr::Launch { wrapper, .. } => Some((wrapper.as_str(), true)),
            _ => None,
        })
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Void => f.write_str("void"),
            Slot::Scalar(k) => f.write_str(k.name()),
            Slot::Aggregate(n) => write!(f, "agg{n}"),
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Instr::*;
        match self {
            Nop => f.write_str("nop"),
            PushInt(v) => write!(f, "push.i {v}"),
            PushF32(v) => write!(f, "push.f32 {v:?}"),
            PushF64(v) => write!(f, "push.f64 {v:?}"),
            FrameAddr(o) if o & LOCAL_FRAME != 0 => write!(f, "frame.local {}", o & !LOCAL_FRAME),
            FrameAddr(o) => write!(f, "frame {o}"),
            Load(k) => write!(f, "load.{}", k.name()),
            Store(k) => write!(f, "store.{}", k.name()),
            Copy(n) => write!(f, "copy {n}"),
            Dup => f.write_str("dup"),
            Pop => f.write_str("pop"),
            Swap => f.write_str("swap"),
            Bin(op, k) => write!(f, "{}.{}", format!("{op:?}").to_lowercase(), k.name()),
            Cmp(op, k) => write!(f, "{}.{}", format!("{op:?}").to_lowercase(), k.name()),
            Neg(k) => write!(f, "neg.{}", k.name()),
            Not(k) => write!(f, "not.{}", k.name()),
            BitNot(k) => write!(f, "bitnot.{}", k.name()),
            Conv(a, b) => write!(f, "conv.{}.{}", a.name(), b.name()),
            IncDec { kind, delta, post } => {
                write!(f, "{}.{} {delta}", if *post { "postinc" } else { "preinc" }, kind.name())
            }
            Jump(t) => write!(f, "jump {t}"),
            JumpIfZero(t) => write!(f, "jz {t}"),
            JumpIfNotZero(t) => write!(f, "jnz {t}"),
            Call(s) => write!(f, "call {s}"),
            Ret => f.write_str("ret"),
            RetVal => f.write_str("ret.val"),
            RetAgg => f.write_str("ret.agg"),
            Launch { wrapper, size } => write!(f, "LAUNCH {wrapper} block={size}B"),
            CpeId => f.write_str("cpe_id"),
            NCpes => f.write_str("n_cpes"),
            DmaGet => f.write_str("dma_get"),
            DmaPut => f.write_str("dma_put"),
            Print(args) => {
                f.write_str("print")?;
                for a in args {
                    match a {
                        PrintArg::Scalar(k) => write!(f, " {}", k.name())?,
                        PrintArg::Str(i) => write!(f, " str#{i}")?,
                    }
                }
                Ok(())
            }
            Min(k) => write!(f, "min.{}", k.name()),
        }
    }
}

// ---- encoding ----

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("stream truncated")]
    Truncated,
    #[error("malformed stream: {0}")]
    Malformed(String),
}

#[derive(Default)]
pub struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    pub fn len_of<T>(&mut self, items: &[T]) {
        self.u32(items.len() as u32);
    }
}

pub struct Reader<'a> {
    pub buf: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        let out = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated)?;
        self.pos = end;
        Ok(out)
    }
    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.bytes(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(self.u64()? as i64)
    }
    pub fn str(&mut self) -> Result<String, DecodeError> {
        let n = self.u32()? as usize;
        let b = self.bytes(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| DecodeError::Malformed("invalid UTF-8".into()))
    }
    /// A count that must be satisfiable by the remaining bytes, assuming at
    /// least `min_item` bytes per item.
    pub fn count(&mut self, min_item: usize) -> Result<usize, DecodeError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.buf.len() - self.pos {
            return Err(DecodeError::Truncated);
        }
        Ok(n)
    }
    pub fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn kind(r: &mut Reader<'_>) -> Result<Kind, DecodeError> {
    let t = r.u8()?;
    Kind::from_tag(t).ok_or_else(|| DecodeError::Malformed(format!("bad kind tag {t}")))
}

pub fn write_slot(w: &mut Writer, s: Slot) {
    match s {
        Slot::Void => w.u8(0),
        Slot::Scalar(k) => w.u8(k.tag()),
        Slot::Aggregate(n) => {
            w.u8(7);
            w.u32(n);
        }
    }
}

pub fn read_slot(r: &mut Reader<'_>) -> Result<Slot, DecodeError> {
    match r.u8()? {
        0 => Ok(Slot::Void),
        7 => Ok(Slot::Aggregate(r.u32()?)),
        t => Kind::from_tag(t)
            .map(Slot::Scalar)
            .ok_or_else(|| DecodeError::Malformed(format!("bad slot tag {t}"))),
    }
}

fn write_instr(w: &mut Writer, i: &Instr) {
    use Instr::*;
    match i {
        Nop => w.u8(0),
        PushInt(v) => {
            w.u8(1);
            w.i64(*v);
        }
        PushF32(v) => {
            w.u8(2);
            w.u32(v.to_bits());
        }
        PushF64(v) => {
            w.u8(3);
            w.u64(v.to_bits());
        }
        FrameAddr(o) => {
            w.u8(4);
            w.u32(*o);
        }
        Load(k) => {
            w.u8(5);
            w.u8(k.tag());
        }
        Store(k) => {
            w.u8(6);
            w.u8(k.tag());
        }
        Copy(n) => {
            w.u8(7);
            w.u32(*n);
        }
        Dup => w.u8(8),
        Pop => w.u8(9),
        Swap => w.u8(10),
        Bin(op, k) => {
            w.u8(11);
            w.u8(BINOPS.iter().position(|o| o == op).unwrap() as u8);
            w.u8(k.tag());
        }
        Cmp(op, k) => {
            w.u8(12);
            w.u8(CMPOPS.iter().position(|o| o == op).unwrap() as u8);
            w.u8(k.tag());
        }
        Neg(k) => {
            w.u8(13);
            w.u8(k.tag());
        }
        Not(k) => {
            w.u8(14);
            w.u8(k.tag());
        }
        BitNot(k) => {
            w.u8(15);
            w.u8(k.tag());
        }
        Conv(a, b) => {
            w.u8(16);
            w.u8(a.tag());
            w.u8(b.tag());
        }
        Jump(t) => {
            w.u8(17);
            w.u32(*t);
        }
        JumpIfZero(t) => {
            w.u8(18);
            w.u32(*t);
        }
        JumpIfNotZero(t) => {
            w.u8(19);
            w.u32(*t);
        }
        Call(s) => {
            w.u8(20);
            w.str(s);
        }
        Ret => w.u8(21),
        RetVal => w.u8(22),
        RetAgg => w.u8(23),
        Launch { wrapper, size } => {
            w.u8(24);
            w.str(wrapper);
            w.u32(*size);
        }
        CpeId => w.u8(25),
        NCpes => w.u8(26),
        DmaGet => w.u8(27),
        DmaPut => w.u8(28),
        Print(args) => {
            w.u8(29);
            w.len_of(args);
            for a in args {
                match a {
                    PrintArg::Scalar(k) => w.u8(k.tag()),
                    PrintArg::Str(i) => {
                        w.u8(0);
                        w.u32(*i);
                    }
                }
            }
        }
        Min(k) => {
            w.u8(30);
            w.u8(k.tag());
        }
        IncDec { kind, delta, post } => {
            w.u8(31);
            w.u8(kind.tag());
            w.i64(*delta);
            w.u8(*post as u8);
        }
    }
}

fn read_instr(r: &mut Reader<'_>) -> Result<Instr, DecodeError> {
    use Instr::*;
    let op = r.u8()?;
    Ok(match op {
        0 => Nop,
        1 => PushInt(r.i64()?),
        2 => PushF32(f32::from_bits(r.u32()?)),
        3 => PushF64(f64::from_bits(r.u64()?)),
        4 => FrameAddr(r.u32()?),
        5 => Load(kind(r)?),
        6 => Store(kind(r)?),
        7 => Copy(r.u32()?),
        8 => Dup,
        9 => Pop,
        10 => Swap,
        11 => {
            let o = r.u8()? as usize;
            let op = *BINOPS
                .get(o)
                .ok_or_else(|| DecodeError::Malformed(format!("bad binop {o}")))?;
            Bin(op, kind(r)?)
        }
        12 => {
            let o = r.u8()? as usize;
            let op = *CMPOPS
                .get(o)
                .ok_or_else(|| DecodeError::Malformed(format!("bad cmpop {o}")))?;
            Cmp(op, kind(r)?)
        }
        13 => Neg(kind(r)?),
        14 => Not(kind(r)?),
        15 => BitNot(kind(r)?),
        16 => Conv(kind(r)?, kind(r)?),
        17 => Jump(r.u32()?),
        18 => JumpIfZero(r.u32()?),
        19 => JumpIfNotZero(r.u32()?),
        20 => Call(r.str()?),
        21 => Ret,
        22 => RetVal,
        23 => RetAgg,
        24 => Launch {
            wrapper: r.str()?,
            size: r.u32()?,
        },
        25 => CpeId,
        26 => NCpes,
        27 => DmaGet,
        28 => DmaPut,
        29 => {
            let n = r.count(1)?;
            let mut args = Vec::with_capacity(n);
            for _ in 0..n {
                let t = r.u8()?;
                args.push(if t == 0 {
                    PrintArg::Str(r.u32()?)
                } else {
                    PrintArg::Scalar(
                        Kind::from_tag(t)
                            .ok_or_else(|| DecodeError::Malformed(format!("bad kind tag {t}")))?,
                    )
                });
            }
            Print(args)
        }
        30 => Min(kind(r)?),
        31 => IncDec {
            kind: kind(r)?,
            delta: r.i64()?,
            post: r.u8()? != 0,
        },
        other => return Err(DecodeError::Malformed(format!("unknown opcode {other}"))),
    })
}

pub fn write_function(w: &mut Writer, f: &CodeFunction) {
    w.str(&f.symbol);
    w.u32(f.frame_size);
    w.u32(f.local_size);
    write_slot(w, f.ret);
    w.len_of(&f.params);
    for (off, slot) in &f.params {
        w.u32(*off);
        write_slot(w, *slot);
    }
    w.len_of(&f.strings);
    for s in &f.strings {
        w.str(s);
    }
    w.len_of(&f.code);
    for i in &f.code {
        write_instr(w, i);
    }
    for sp in &f.spans {
        w.u32(sp.line);
        w.u32(sp.col);
    }
}

pub fn read_function(r: &mut Reader<'_>) -> Result<CodeFunction, DecodeError> {
    let symbol = r.str()?;
    let frame_size = r.u32()?;
    let local_size = r.u32()?;
    let ret = read_slot(r)?;
    let n = r.count(5)?;
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        params.push((r.u32()?, read_slot(r)?));
    }
    let n = r.count(4)?;
    let mut strings = Vec::with_capacity(n);
    for _ in 0..n {
        strings.push(r.str()?);
    }
    let n = r.count(1)?;
    let mut code = Vec::with_capacity(n);
    for _ in 0..n {
        code.push(read_instr(r)?);
    }
    let mut spans = Vec::with_capacity(n);
    for _ in 0..n {
        spans.push(Span::new(r.u32()?, r.u32()?));
    }
    Ok(CodeFunction {
        symbol,
        frame_size,
        local_size,
        ret,
        params,
        strings,
        code,
        spans,
    })
}

/// Human-readable listing of one function.
pub fn disassemble(f: &CodeFunction) -> String {
    let params: Vec<String> = f.params.iter().map(|(o, s)| format!("{s}@{o}")).collect();
    let mut out = format!(
        "function {} (frame={}, local={}, ret={}, params=[{}])\n",
        f.symbol,
        f.frame_size,
        f.local_size,
        f.ret,
        params.join(", ")
    );
    for (i, s) in f.strings.iter().enumerate() {
        out.push_str(&format!("  str#{i} = {s:?}\n"));
    }
    for (pc, (ins, sp)) in f.code.iter().zip(&f.spans).enumerate() {
        out.push_str(&format!("  {pc:04}  {ins:<40} ; {sp}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_instruction_roundtrips() {
        use Instr::*;
        let code = vec![
            Nop,
            PushInt(-5),
            PushF32(1.5),
            PushF64(-0.25),
            FrameAddr(16),
            Load(Kind::F32),
            Store(Kind::Bool),
            Copy(24),
            Dup,
            Pop,
            Swap,
            Bin(BinOp::Shr, Kind::I64),
            Cmp(CmpOp::Ne, Kind::F64),
            Neg(Kind::I32),
            Not(Kind::Ptr),
            BitNot(Kind::I64),
            Conv(Kind::I32, Kind::F64),
            Jump(3),
            JumpIfZero(4),
            JumpIfNotZero(5),
            Call("slave_helper".into()),
            Ret,
            RetVal,
            RetAgg,
            Launch {
                wrapper: "slave_k_wrapper".into(),
                size: 24,
            },
            CpeId,
            NCpes,
            DmaGet,
            DmaPut,
            Print(vec![PrintArg::Str(0), PrintArg::Scalar(Kind::I32)]),
            Min(Kind::F32),
            IncDec {
                kind: Kind::I64,
                delta: -8,
                post: true,
            },
            FrameAddr(LOCAL_FRAME | 8),
        ];
        let f = CodeFunction {
            symbol: "f".into(),
            frame_size: 32,
            local_size: 16,
            ret: Slot::Aggregate(12),
            params: vec![(0, Slot::Scalar(Kind::Ptr)), (8, Slot::Aggregate(12))],
            strings: vec!["hi\n".into()],
            spans: (0..code.len() as u32).map(|i| Span::new(i + 1, 2)).collect(),
            code,
        };
        let mut w = Writer::default();
        write_function(&mut w, &f);
        let mut r = Reader::new(&w.buf);
        assert_eq!(read_function(&mut r).unwrap(), f);
        assert!(r.at_end());
        for cut in [0, 1, 5, w.buf.len() / 2, w.buf.len() - 1] {
            assert!(read_function(&mut Reader::new(&w.buf[..cut])).is_err());
        }
    }
}
