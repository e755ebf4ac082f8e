//! Binary encodings of target modules and linked images.
//!
//! Both start with an 8-byte magic whose last byte is the format version:
//! `SWUCMOD1` for modules and `SWUCIMG1` for images. Everything after the
//! magic uses the integer and string conventions of [`crate::bytecode`].

use crate::bytecode::{read_function, read_slot, write_function, write_slot, DecodeError, Reader, Writer};
use crate::diag::{Code, Diagnostic, Span};
use crate::sema::Side;
use crate::transform::codegen::{BlockField, BlockLayout};
use crate::transform::split::{KernelEntry, TargetModule};
use crate::types::{FieldLayout, RecordLayout};

use super::link::{KernelRecord, LinkedImage};

pub const MODULE_MAGIC: &[u8; 8] = b"SWUCMOD1";
pub const IMAGE_MAGIC: &[u8; 8] = b"SWUCIMG1";

fn error(code: Code, message: impl Into<String>) -> Diagnostic {
    Diagnostic::error(code, Span::default(), message)
}

fn check_magic(buf: &[u8], magic: &[u8; 8], what: &str) -> Result<(), Diagnostic> {
    if buf.len() < magic.len() {
        return Err(if magic.starts_with(buf) {
            error(Code::E_IMG_TRUNCATED, format!("{what} ends inside its header"))
        } else {
            error(Code::E_IMG_MAGIC, format!("not a SW-C {what}"))
        });
    }
    if buf[..7] != magic[..7] {
        return Err(error(Code::E_IMG_MAGIC, format!("not a SW-C {what}")));
    }
    if buf[7] != magic[7] {
        return Err(error(
            Code::E_IMG_VERSION,
            format!(
                "unsupported {what} version `{}` (expected `{}`)",
                buf[7].escape_ascii(),
                magic[7] as char
            ),
        ));
    }
    Ok(())
}

fn decode_error(e: DecodeError, what: &str) -> Diagnostic {
    error(Code::E_IMG_TRUNCATED, format!("corrupt {what}: {e}"))
}

fn write_layouts(w: &mut Writer, layouts: &[RecordLayout]) {
    w.len_of(layouts);
    for l in layouts {
        w.str(&l.name);
        w.u64(l.size);
        w.u64(l.align);
        w.len_of(&l.fields);
        for f in &l.fields {
            w.str(&f.name);
            w.str(&f.ty);
            w.u64(f.offset);
            w.u64(f.size);
        }
    }
}

fn read_layouts(r: &mut Reader<'_>) -> Result<Vec<RecordLayout>, DecodeError> {
    let n = r.count(24)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.str()?;
        let size = r.u64()?;
        let align = r.u64()?;
        let nf = r.count(24)?;
        let mut fields = Vec::with_capacity(nf);
        for _ in 0..nf {
            fields.push(FieldLayout {
                name: r.str()?,
                ty: r.str()?,
                offset: r.u64()?,
                size: r.u64()?,
            });
        }
        out.push(RecordLayout {
            name,
            size,
            align,
            fields,
        });
    }
    Ok(out)
}

fn write_side(w: &mut Writer, side: Side) {
    w.u8(match side {
        Side::Host => 0,
        Side::Slave => 1,
    });
}

fn read_side(r: &mut Reader<'_>) -> Result<Side, DecodeError> {
    match r.u8()? {
        0 => Ok(Side::Host),
        1 => Ok(Side::Slave),
        t => Err(DecodeError::Malformed(format!("bad side tag {t}"))),
    }
}

pub fn write_module(m: &TargetModule) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(MODULE_MAGIC);
    write_side(&mut w, m.side);
    write_layouts(&mut w, &m.layouts);
    w.len_of(&m.kernels);
    for k in &m.kernels {
        w.str(&k.kernel);
        w.str(&k.symbol);
        w.u32(k.block.size);
        w.len_of(&k.block.fields);
        for f in &k.block.fields {
            w.str(&f.name);
            w.str(&f.ty);
            w.u32(f.offset);
            w.u32(f.size);
            write_slot(&mut w, f.slot);
        }
    }
    w.len_of(&m.externs);
    for e in &m.externs {
        w.str(e);
    }
    w.len_of(&m.functions);
    for f in &m.functions {
        write_function(&mut w, f);
    }
    w.buf
}

pub fn read_module(buf: &[u8]) -> Result<TargetModule, Diagnostic> {
    check_magic(buf, MODULE_MAGIC, "module")?;
    let mut r = Reader::new(&buf[8..]);
    decode_module(&mut r).map_err(|e| decode_error(e, "module"))
}

fn decode_module(r: &mut Reader<'_>) -> Result<TargetModule, DecodeError> {
    let side = read_side(r)?;
    let layouts = read_layouts(r)?;
    let nk = r.count(12)?;
    let mut kernels = Vec::with_capacity(nk);
    for _ in 0..nk {
        let kernel = r.str()?;
        let symbol = r.str()?;
        let size = r.u32()?;
        let nf = r.count(17)?;
        let mut fields = Vec::with_capacity(nf);
        for _ in 0..nf {
            fields.push(BlockField {
                name: r.str()?,
                ty: r.str()?,
                offset: r.u32()?,
                size: r.u32()?,
                slot: read_slot(r)?,
            });
        }
        kernels.push(KernelEntry {
            kernel,
            symbol,
            block: BlockLayout { fields, size },
        });
    }
    let ne = r.count(4)?;
    let mut externs = Vec::with_capacity(ne);
    for _ in 0..ne {
        externs.push(r.str()?);
    }
    let nf = r.count(4)?;
    let mut functions = Vec::with_capacity(nf);
    for _ in 0..nf {
        functions.push(read_function(r)?);
    }
    if !r.at_end() {
        return Err(DecodeError::Malformed("trailing bytes".into()));
    }
    Ok(TargetModule {
        side,
        functions,
        externs,
        kernels,
        layouts,
    })
}

pub fn write_image(img: &LinkedImage) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(IMAGE_MAGIC);
    w.str(&img.entry);
    write_layouts(&mut w, &img.layouts);
    w.len_of(&img.kernel_table);
    for k in &img.kernel_table {
        w.str(&k.kernel);
        w.str(&k.stub);
        w.str(&k.wrapper);
        w.u32(k.block_size);
    }
    w.u32(img.functions.len() as u32);
    for f in img.functions.values() {
        write_function(&mut w, f);
    }
    w.buf
}

pub fn read_image(buf: &[u8]) -> Result<LinkedImage, Diagnostic> {
    check_magic(buf, IMAGE_MAGIC, "image")?;
    let mut r = Reader::new(&buf[8..]);
    decode_image(&mut r).map_err(|e| decode_error(e, "image"))
}

fn decode_image(r: &mut Reader<'_>) -> Result<LinkedImage, DecodeError> {
    let entry = r.str()?;
    let layouts = read_layouts(r)?;
    let nk = r.count(16)?;
    let mut kernel_table = Vec::with_capacity(nk);
    for _ in 0..nk {
        kernel_table.push(KernelRecord {
            kernel: r.str()?,
            stub: r.str()?,
            wrapper: r.str()?,
            block_size: r.u32()?,
        });
    }
    let nf = r.count(4)?;
    let mut functions = std::collections::BTreeMap::new();
    for _ in 0..nf {
        let f = read_function(r)?;
        functions.insert(f.symbol.clone(), f);
    }
    if !r.at_end() {
        return Err(DecodeError::Malformed("trailing bytes".into()));
    }
    Ok(LinkedImage {
        entry,
        functions,
        kernel_table,
        layouts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bytecode::{CodeFunction, Instr, Slot};
    use std::collections::BTreeMap;

    fn tiny_image() -> LinkedImage {
        let main = CodeFunction {
            symbol: "main".into(),
            frame_size: 0,
            local_size: 0,
            ret: Slot::Scalar(crate::bytecode::Kind::I32),
            params: vec![],
            strings: vec![],
            code: vec![Instr::PushInt(7), Instr::RetVal],
            spans: vec![Span::new(1, 1); 2],
        };
        LinkedImage {
            entry: "main".into(),
            functions: BTreeMap::from([("main".to_string(), main)]),
            kernel_table: vec![],
            layouts: vec![],
        }
    }

    #[test]
    fn image_roundtrip() {
        let img = tiny_image();
        assert_eq!(read_image(&write_image(&img)).unwrap(), img);
    }

    #[test]
    fn header_errors() {
        let mut bytes = write_image(&tiny_image());
        assert_eq!(read_image(&bytes[..5]).unwrap_err().code, Code::E_IMG_TRUNCATED);
        assert_eq!(read_image(&bytes[..bytes.len() - 1]).unwrap_err().code, Code::E_IMG_TRUNCATED);
        assert_eq!(read_image(b"ELF\x7fjunkjunk").unwrap_err().code, Code::E_IMG_MAGIC);
        bytes[7] = b'2';
        assert_eq!(read_image(&bytes).unwrap_err().code, Code::E_IMG_VERSION);
        assert_eq!(read_module(IMAGE_MAGIC).unwrap_err().code, Code::E_IMG_MAGIC);
    }
}
