//! Unified main memory plus one private local store per CPE.
//!
//! Main memory occupies `[MAIN_BASE, MAIN_BASE + size)`; address 0 and the
//! page below `MAIN_BASE` are never valid, so null dereferences trap. Local
//! addresses carry [`LOCAL_TAG`] and the owning CPE's index:
//! `LOCAL_TAG | cpe << 32 | offset`.

use crate::bytecode::Kind;

use super::TrapKind;

pub const MAIN_BASE: u64 = 0x1_0000;
pub const LOCAL_TAG: u64 = 1 << 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Context {
    Mpe,
    Cpe(u32),
}

pub type Fault = (TrapKind, String);

pub fn local_addr(cpe: u32, offset: u64) -> u64 {
    LOCAL_TAG | (cpe as u64) << 32 | offset
}

pub struct Memory {
    main: Vec<u8>,
    locals: Vec<Vec<u8>>,
    local_size: usize,
}

enum Region {
    Main(usize),
    Local(usize, usize),
}

impl Memory {
    pub fn new(main_bytes: usize, n_cpes: u32, local_bytes: usize) -> Self {
        Memory {
            main: vec![0; main_bytes],
            locals: (0..n_cpes).map(|_| Vec::new()).collect(),
            local_size: local_bytes,
        }
    }

    pub fn main_end(&self) -> u64 {
        MAIN_BASE + self.main.len() as u64
    }

    pub fn local_size(&self) -> u64 {
        self.local_size as u64
    }

    /// Offset of an in-bounds main-memory access; everything else takes
    /// the checked path through [`Memory::region`].
    #[inline(always)]
    fn main_slice(&self, addr: u64, n: u64) -> Option<usize> {
        let off = addr.wrapping_sub(MAIN_BASE);
        (addr >= MAIN_BASE && off < self.main.len() as u64 && n <= self.main.len() as u64 - off)
            .then_some(off as usize)
    }

    fn region(&mut self, ctx: Context, addr: u64, n: u64, what: &str) -> Result<Region, Fault> {
        if addr >> 48 == 1 {
            let owner = ((addr >> 32) & 0xFFFF) as u32;
            let off = addr & 0xFFFF_FFFF;
            let Context::Cpe(me) = ctx else {
                return Err((
                    TrapKind::LocalFromMpe,
                    format!("MPE {what} of CPE {owner} local memory at {addr:#x}"),
                ));
            };
            if owner != me {
                return Err((
                    TrapKind::Oob,
                    format!("{what} of {n} bytes at {addr:#x} in the local memory of CPE {owner}"),
                ));
            }
            if off + n > self.local_size as u64 {
                return Err((
                    TrapKind::Oob,
                    format!("{what} of {n} bytes at local offset {off} beyond {} bytes", self.local_size),
                ));
            }
            // Grown on demand; untouched bytes read as zero either way.
            let l = &mut self.locals[me as usize];
            let end = (off + n) as usize;
            if l.len() < end {
                l.resize(end.next_multiple_of(4096).min(self.local_size), 0);
            }
            return Ok(Region::Local(me as usize, off as usize));
        }
        if addr < MAIN_BASE || addr.checked_add(n).is_none_or(|end| end > self.main_end()) {
            return Err((
                TrapKind::Oob,
                format!("{what} of {n} bytes at {addr:#x} outside main memory"),
            ));
        }
        Ok(Region::Main((addr - MAIN_BASE) as usize))
    }

    fn bytes(&mut self, r: Region, n: usize) -> &mut [u8] {
        match r {
            Region::Main(o) => &mut self.main[o..o + n],
            Region::Local(c, o) => &mut self.locals[c][o..o + n],
        }
    }

    pub fn read(&mut self, ctx: Context, addr: u64, n: u64) -> Result<Vec<u8>, Fault> {
        let r = self.region(ctx, addr, n, "read")?;
        Ok(self.bytes(r, n as usize).to_vec())
    }

    pub fn write(&mut self, ctx: Context, addr: u64, data: &[u8]) -> Result<(), Fault> {
        let r = self.region(ctx, addr, data.len() as u64, "write")?;
        self.bytes(r, data.len()).copy_from_slice(data);
        Ok(())
    }

    pub fn zero(&mut self, ctx: Context, addr: u64, n: u64) -> Result<(), Fault> {
        let r = self.region(ctx, addr, n, "write")?;
        self.bytes(r, n as usize).fill(0);
        Ok(())
    }

    pub fn copy(&mut self, ctx: Context, dst: u64, src: u64, n: u64) -> Result<(), Fault> {
        if n == 0 {
            return Ok(());
        }
        let data = self.read(ctx, src, n)?;
        self.write(ctx, dst, &data)
    }

    /// Loads a scalar in the operand-stack representation.
    #[inline]
    pub fn load(&mut self, ctx: Context, addr: u64, kind: Kind) -> Result<u64, Fault> {
        let n = kind.size();
        let b = match self.main_slice(addr, n) {
            Some(o) => &self.main[o..o + n as usize],
            None => {
                let r = self.region(ctx, addr, n, "read")?;
                self.bytes(r, n as usize)
            }
        };
        Ok(match kind {
            Kind::Bool => (b[0] != 0) as u64,
            Kind::I32 => i32::from_le_bytes(b.try_into().unwrap()) as i64 as u64,
            Kind::F32 => u32::from_le_bytes(b.try_into().unwrap()) as u64,
            Kind::I64 | Kind::F64 | Kind::Ptr => u64::from_le_bytes(b.try_into().unwrap()),
        })
    }

    #[inline]
    pub fn store(&mut self, ctx: Context, addr: u64, kind: Kind, v: u64) -> Result<(), Fault> {
        let n = kind.size();
        let b = match self.main_slice(addr, n) {
            Some(o) => &mut self.main[o..o + n as usize],
            None => {
                let r = self.region(ctx, addr, n, "write")?;
                self.bytes(r, n as usize)
            }
        };
        match kind {
            Kind::Bool => b[0] = (v != 0) as u8,
            Kind::I32 | Kind::F32 => b.copy_from_slice(&(v as u32).to_le_bytes()),
            Kind::I64 | Kind::F64 | Kind::Ptr => b.copy_from_slice(&v.to_le_bytes()),
        }
        Ok(())
    }

    /// Transfer between main memory and the calling CPE's local store.
    pub fn dma(&mut self, ctx: Context, dst: u64, src: u64, n: i64, get: bool) -> Result<(), Fault> {
        if n < 0 {
            return Err((TrapKind::Oob, format!("DMA of negative size {n}")));
        }
        if n == 0 {
            return Ok(());
        }
        let (local, main) = if get { (dst, src) } else { (src, dst) };
        if local >> 48 != 1 {
            return Err((
                TrapKind::Oob,
                format!("DMA local operand {local:#x} is not a local-memory address"),
            ));
        }
        if main >> 48 != 0 {
            return Err((
                TrapKind::Oob,
                format!("DMA main operand {main:#x} is not a main-memory address"),
            ));
        }
        self.copy(ctx, dst, src, n as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_roundtrip_and_sign_extension() {
        let mut m = Memory::new(4096, 2, 256);
        let ctx = Context::Mpe;
        m.store(ctx, MAIN_BASE, Kind::I32, (-5i64) as u64).unwrap();
        assert_eq!(m.load(ctx, MAIN_BASE, Kind::I32).unwrap() as i64, -5);
        m.store(ctx, MAIN_BASE + 8, Kind::Bool, 7).unwrap();
        assert_eq!(m.load(ctx, MAIN_BASE + 8, Kind::Bool).unwrap(), 1);
    }

    #[test]
    fn isolation() {
        let mut m = Memory::new(4096, 2, 256);
        let a = local_addr(1, 16);
        assert!(m.store(Context::Cpe(1), a, Kind::I64, 9).is_ok());
        assert_eq!(m.load(Context::Cpe(0), a, Kind::I64).unwrap_err().0, TrapKind::Oob);
        assert_eq!(m.load(Context::Mpe, a, Kind::I64).unwrap_err().0, TrapKind::LocalFromMpe);
        assert_eq!(m.load(Context::Cpe(1), local_addr(1, 252), Kind::I64).unwrap_err().0, TrapKind::Oob);
        assert_eq!(m.load(Context::Mpe, 0, Kind::I32).unwrap_err().0, TrapKind::Oob);
    }

    #[test]
    fn dma_roundtrip_identity() {
        let mut m = Memory::new(8192, 1, 4096);
        let ctx = Context::Cpe(0);
        let data: Vec<u8> = (0..4096u32).map(|i| (i * 7) as u8).collect();
        m.write(Context::Mpe, MAIN_BASE, &data).unwrap();
        m.dma(ctx, local_addr(0, 0), MAIN_BASE, 4096, true).unwrap();
        m.dma(ctx, MAIN_BASE, local_addr(0, 0), 4096, false).unwrap();
        assert_eq!(m.read(Context::Mpe, MAIN_BASE, 4096).unwrap(), data);
        assert!(m.dma(ctx, 0, 0, 0, true).is_ok());
    }
}
