//! Merging target modules into one executable image.

use std::collections::BTreeMap;

use crate::bytecode::{CodeFunction, Instr};
use crate::diag::{Code, Diagnostic, Span};
use crate::sema::Side;
use crate::transform::split::TargetModule;
use crate::types::RecordLayout;

use super::symbols::{launch_stub, launch_wrapper};

pub const ENTRY: &str = "main";

/// One launchable kernel: the HOST stub and the SLAVE wrapper it starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelRecord {
    pub kernel: String,
    pub stub: String,
    pub wrapper: String,
    pub block_size: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkedImage {
    pub entry: String,
    pub functions: BTreeMap<String, CodeFunction>,
    pub kernel_table: Vec<KernelRecord>,
    pub layouts: Vec<RecordLayout>,
}

impl LinkedImage {
    pub fn function(&self, symbol: &str) -> Option<&CodeFunction> {
        self.functions.get(symbol)
    }
}

fn link_error(code: Code, message: String) -> Diagnostic {
    Diagnostic::error(code, Span::default(), message)
}

pub fn link(host: &TargetModule, slave: &TargetModule) -> Result<LinkedImage, Vec<Diagnostic>> {
    link_modules(&[host.clone(), slave.clone()])
}

/// Resolves every call and launch across `modules`; reports each missing
/// symbol once, duplicates and disagreeing record or block layouts.
pub fn link_modules(modules: &[TargetModule]) -> Result<LinkedImage, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut functions: BTreeMap<String, CodeFunction> = BTreeMap::new();
    for m in modules {
        for f in &m.functions {
            if functions.insert(f.symbol.clone(), f.clone()).is_some() {
                diags.push(link_error(
                    Code::E_DUP_SYM,
                    format!("duplicate definition of symbol `{}`", f.symbol),
                ));
            }
        }
    }

    let mut layouts: BTreeMap<&str, &RecordLayout> = BTreeMap::new();
    for m in modules {
        for l in &m.layouts {
            match layouts.get(l.name.as_str()) {
                Some(prev) if *prev != l => diags.push(link_error(
                    Code::E_LAYOUT_MISMATCH,
                    format!(
                        "record `{}` has different layouts across modules ({} vs {} bytes)",
                        l.name, prev.size, l.size
                    ),
                )),
                Some(_) => {}
                None => {
                    layouts.insert(&l.name, l);
                }
            }
        }
    }

    let mut kernel_table: BTreeMap<String, KernelRecord> = BTreeMap::new();
    let mut blocks: BTreeMap<&str, (Side, u32)> = BTreeMap::new();
    for m in modules {
        for k in &m.kernels {
            if let Some((side, size)) = blocks.get(k.kernel.as_str()) {
                if *side != m.side && *size != k.block.size {
                    diags.push(link_error(
                        Code::E_LAYOUT_MISMATCH,
                        format!(
                            "parameter block of kernel `{}` differs between HOST and SLAVE ({size} vs {} bytes)",
                            k.kernel, k.block.size
                        ),
                    ));
                }
            }
            blocks.insert(&k.kernel, (m.side, k.block.size));
            if m.side == Side::Host {
                kernel_table.insert(
                    k.kernel.clone(),
                    KernelRecord {
                        kernel: k.kernel.clone(),
                        stub: launch_stub(&k.kernel),
                        wrapper: launch_wrapper(&k.kernel),
                        block_size: k.block.size,
                    },
                );
            }
        }
    }

    // A launch whose wrapper is missing is reported against the SLAVE
    // kernel body when that is missing too: the wrapper only exists
    // because of it.
    let mut missing: BTreeMap<String, String> = BTreeMap::new();
    for f in functions.values() {
        for i in &f.code {
            let target = match i {
                Instr::Call(s) => s.clone(),
                Instr::Launch { wrapper, .. } if !functions.contains_key(wrapper) => {
                    match wrapper.strip_suffix("_wrapper") {
                        Some(body) if !functions.contains_key(body) => body.to_string(),
                        _ => wrapper.clone(),
                    }
                }
                _ => continue,
            };
            if !functions.contains_key(&target) {
                missing.entry(target).or_insert_with(|| f.symbol.clone());
            }
        }
    }
    for (sym, from) in missing {
        diags.push(link_error(
            Code::E_UNDEF_REF,
            format!("undefined reference to `{sym}` (referenced from `{from}`)"),
        ));
    }
    if !functions.contains_key(ENTRY) {
        diags.push(link_error(
            Code::E_UNDEF_REF,
            format!("undefined reference to `{ENTRY}`"),
        ));
    }

    if !diags.is_empty() {
        return Err(diags);
    }
    Ok(LinkedImage {
        entry: ENTRY.to_string(),
        layouts: layouts.into_values().cloned().collect(),
        kernel_table: kernel_table.into_values().collect(),
        functions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{compile, compile_side};

    fn codes(d: &[Diagnostic]) -> Vec<Code> {
        d.iter().map(|d| d.code).collect()
    }

    const SRC: &str = "__attribute((kernel)) void k(long* a) { a[cpe_id()] = 1; }
                       int main() { long a[64]; k(a); return (int)a[0]; }";

    #[test]
    fn links_a_single_source_program() {
        let c = compile(SRC).unwrap();
        let img = link(&c.host, &c.slave).unwrap();
        assert_eq!(img.entry, ENTRY);
        assert_eq!(
            img.kernel_table,
            vec![KernelRecord {
                kernel: "k".into(),
                stub: "k_launch".into(),
                wrapper: "slave_k_wrapper".into(),
                block_size: 8,
            }]
        );
        assert!(img.function("slave_k").is_some());
    }

    #[test]
    fn duplicate_symbols() {
        let c = compile(SRC).unwrap();
        let err = link_modules(&[c.host.clone(), c.slave.clone(), c.host]).unwrap_err();
        assert!(codes(&err).contains(&Code::E_DUP_SYM));
    }

    #[test]
    fn missing_entry_and_kernel_body() {
        let (slave, _) = compile_side("int main() { return 0; }", Side::Slave).unwrap();
        let err = link_modules(&[slave]).unwrap_err();
        assert_eq!(err[0].message, "undefined reference to `main`");

        let (host, _) = compile_side(SRC, Side::Host).unwrap();
        let err = link_modules(&[host]).unwrap_err();
        assert_eq!(
            err[0].message,
            "undefined reference to `slave_k` (referenced from `k_launch`)"
        );
    }

    #[test]
    fn kernel_block_disagreement() {
        let (host, _) = compile_side(SRC, Side::Host).unwrap();
        let other = "__attribute((kernel)) void k(long* a, long n) { a[cpe_id()] = n; }";
        let (slave, _) = compile_side(other, Side::Slave).unwrap();
        let err = link_modules(&[host, slave]).unwrap_err();
        assert_eq!(codes(&err), vec![Code::E_LAYOUT_MISMATCH]);
        assert!(err[0].message.contains("(8 vs 16 bytes)"), "{}", err[0].message);
    }
}
