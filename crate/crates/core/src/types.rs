//! Semantic types, record layouts and type-argument mangling.

use std::collections::BTreeMap;
use std::fmt;

use crate::bytecode::Kind;
use crate::diag::Span;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Void,
    Bool,
    Int,
    Long,
    Float,
    Double,
    Ptr(Box<Type>),
    Array(Box<Type>, u64),
    Record(String),
    /// Type of the lambda with the given id, until closure conversion turns
    /// it into a record.
    Closure(u32),
    /// String literal; only legal as a `print` argument.
    Str,
}

pub fn closure_record_name(id: u32) -> String {
    format!("__lambda{id}")
}

pub fn closure_call_name(id: u32) -> String {
    format!("__lambda{id}_call")
}

impl Type {
    pub fn ptr(to: Type) -> Type {
        Type::Ptr(Box::new(to))
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, Type::Bool | Type::Int | Type::Long)
    }

    pub fn is_float(&self) -> bool {
        matches!(self, Type::Float | Type::Double)
    }

    pub fn is_arith(&self) -> bool {
        self.is_integer() || self.is_float()
    }

    pub fn is_ptr(&self) -> bool {
        matches!(self, Type::Ptr(_))
    }

    pub fn is_scalar(&self) -> bool {
        self.is_arith() || self.is_ptr()
    }

    pub fn is_aggregate(&self) -> bool {
        matches!(self, Type::Record(_) | Type::Closure(_))
    }

    pub fn pointee(&self) -> Option<&Type> {
        match self {
            Type::Ptr(t) => Some(t),
            _ => None,
        }
    }

    /// Machine kind of a scalar type.
    pub fn kind(&self) -> Option<Kind> {
        Some(match self {
            Type::Bool => Kind::Bool,
            Type::Int => Kind::I32,
            Type::Long => Kind::I64,
            Type::Float => Kind::F32,
            Type::Double => Kind::F64,
            Type::Ptr(_) => Kind::Ptr,
            _ => return None,
        })
    }

    /// Readable, injective spelling used in instantiation suffixes:
    /// `int`, `ptr_int`, `struct_Pair`, `arr4_int`, `lambda3`.
    pub fn mangle(&self) -> String {
        match self {
            Type::Void => "void".into(),
            Type::Bool => "bool".into(),
            Type::Int => "int".into(),
            Type::Long => "long".into(),
            Type::Float => "float".into(),
            Type::Double => "double".into(),
            Type::Str => "str".into(),
            Type::Ptr(t) => format!("ptr_{}", t.mangle()),
            Type::Array(t, n) => format!("arr{n}_{}", t.mangle()),
            Type::Record(name) => {
                if let Some(id) = name.strip_prefix("__lambda").and_then(|s| s.parse::<u32>().ok()) {
                    format!("lambda{id}")
                } else {
                    format!("struct_{name}")
                }
            }
            Type::Closure(id) => format!("lambda{id}"),
        }
    }

    /// Inverse of [`Type::mangle`].
    pub fn demangle(s: &str) -> Option<Type> {
        Some(match s {
            "void" => Type::Void,
            "bool" => Type::Bool,
            "int" => Type::Int,
            "long" => Type::Long,
            "float" => Type::Float,
            "double" => Type::Double,
            "str" => Type::Str,
            _ => {
                if let Some(rest) = s.strip_prefix("ptr_") {
                    Type::ptr(Type::demangle(rest)?)
                } else if let Some(rest) = s.strip_prefix("struct_") {
                    Type::Record(rest.to_string())
                } else if let Some(rest) = s.strip_prefix("lambda") {
                    Type::Closure(rest.parse().ok()?)
                } else {
                    let (n, inner) = s.strip_prefix("arr")?.split_once('_')?;
                    Type::Array(Box::new(Type::demangle(inner)?), n.parse().ok()?)
                }
            }
        })
    }

    /// Closure types become their synthesized records.
    pub fn erase_closures(&self) -> Type {
        match self {
            Type::Closure(id) => Type::Record(closure_record_name(*id)),
            Type::Ptr(t) => Type::ptr(t.erase_closures()),
            Type::Array(t, n) => Type::Array(Box::new(t.erase_closures()), *n),
            other => other.clone(),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Void => f.write_str("void"),
            Type::Bool => f.write_str("bool"),
            Type::Int => f.write_str("int"),
            Type::Long => f.write_str("long"),
            Type::Float => f.write_str("float"),
            Type::Double => f.write_str("double"),
            Type::Str => f.write_str("string"),
            Type::Ptr(t) => write!(f, "{t}*"),
            Type::Array(t, n) => write!(f, "{t}[{n}]"),
            Type::Record(n) => f.write_str(n),
            Type::Closure(id) => write!(f, "<lambda {id}>"),
        }
    }
}

/// Symbol of a generic instance: `name$typearg`.
pub fn instance_name(generic: &str, arg: &Type) -> String {
    format!("{generic}${}", arg.mangle())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordDef {
    pub name: String,
    pub fields: Vec<(String, Type)>,
    pub span: Span,
    /// Closure record produced by closure conversion.
    pub synthesized: bool,
}

/// Byte layout of one record field.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldLayout {
    pub name: String,
    pub ty: String,
    pub offset: u64,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RecordLayout {
    pub name: String,
    pub size: u64,
    pub align: u64,
    pub fields: Vec<FieldLayout>,
}

pub fn align_up(n: u64, align: u64) -> u64 {
    if align <= 1 {
        n
    } else {
        n.div_ceil(align) * align
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordTable {
    pub defs: BTreeMap<String, RecordDef>,
}

impl RecordTable {
    pub fn get(&self, name: &str) -> Option<&RecordDef> {
        self.defs.get(name)
    }

    pub fn insert(&mut self, def: RecordDef) {
        self.defs.insert(def.name.clone(), def);
    }

    fn record_of<'a>(&'a self, ty: &Type) -> Option<&'a RecordDef> {
        match ty {
            Type::Record(n) => self.get(n),
            Type::Closure(id) => self.get(&closure_record_name(*id)),
            _ => None,
        }
    }

    /// `(size, align)` in bytes. Unknown records count as empty.
    pub fn size_align(&self, ty: &Type) -> (u64, u64) {
        match ty {
            Type::Void | Type::Str => (0, 1),
            Type::Bool => (1, 1),
            Type::Int | Type::Float => (4, 4),
            Type::Long | Type::Double | Type::Ptr(_) => (8, 8),
            Type::Array(t, n) => {
                let (s, a) = self.size_align(t);
                (s * n, a)
            }
            Type::Record(_) | Type::Closure(_) => match self.record_of(ty) {
                Some(def) => {
                    let l = self.layout_fields(&def.fields);
                    (l.0, l.1)
                }
                None => (0, 1),
            },
        }
    }

    pub fn size_of(&self, ty: &Type) -> u64 {
        self.size_align(ty).0
    }

    /// Natural alignment, tail padding to the record alignment.
    pub fn layout_fields(&self, fields: &[(String, Type)]) -> (u64, u64, Vec<FieldLayout>) {
        let mut off = 0;
        let mut max_align = 1;
        let mut out = Vec::with_capacity(fields.len());
        for (name, ty) in fields {
            let (size, align) = self.size_align(ty);
            off = align_up(off, align);
            out.push(FieldLayout {
                name: name.clone(),
                ty: ty.to_string(),
                offset: off,
                size,
            });
            off += size;
            max_align = max_align.max(align);
        }
        (align_up(off, max_align), max_align, out)
    }

    pub fn field(&self, ty: &Type, field: &str) -> Option<(u64, Type)> {
        let def = self.record_of(ty)?;
        let (_, _, fl) = self.layout_fields(&def.fields);
        def.fields
            .iter()
            .zip(fl)
            .find(|((n, _), _)| n == field)
            .map(|((_, t), l)| (l.offset, t.clone()))
    }

    pub fn layout(&self, name: &str) -> Option<RecordLayout> {
        let def = self.get(name)?;
        let (size, align, fields) = self.layout_fields(&def.fields);
        Some(RecordLayout {
            name: name.to_string(),
            size,
            align,
            fields,
        })
    }

    pub fn layouts(&self) -> Vec<RecordLayout> {
        self.defs.keys().filter_map(|n| self.layout(n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table() -> RecordTable {
        let mut t = RecordTable::default();
        t.insert(RecordDef {
            name: "P".into(),
            fields: vec![
                ("a".into(), Type::Bool),
                ("b".into(), Type::Long),
                ("c".into(), Type::Int),
            ],
            span: Span::default(),
            synthesized: false,
        });
        t
    }

    #[test]
    fn natural_alignment() {
        let t = table();
        let l = t.layout("P").unwrap();
        let offs: Vec<u64> = l.fields.iter().map(|f| f.offset).collect();
        assert_eq!(offs, vec![0, 8, 16]);
        assert_eq!((l.size, l.align), (24, 8));
        assert_eq!(t.size_of(&Type::Array(Box::new(Type::Record("P".into())), 3)), 72);
    }

    #[test]
    fn mangling_examples() {
        assert_eq!(instance_name("spawn__vector_add", &Type::Int), "spawn__vector_add$int");
        assert_eq!(Type::ptr(Type::Int).mangle(), "ptr_int");
        assert_eq!(Type::Record("ptr_int".into()).mangle(), "struct_ptr_int");
        assert_eq!(Type::Closure(3).mangle(), "lambda3");
        assert_eq!(Type::Record(closure_record_name(3)).mangle(), "lambda3");
    }

    fn any_type() -> impl Strategy<Value = Type> {
        let leaf = prop_oneof![
            Just(Type::Bool),
            Just(Type::Int),
            Just(Type::Long),
            Just(Type::Float),
            Just(Type::Double),
            "[A-Za-z][A-Za-z0-9_]{0,8}".prop_map(Type::Record),
            (0u32..100).prop_map(Type::Closure),
        ];
        leaf.prop_recursive(4, 16, 1, |inner| {
            prop_oneof![
                inner.clone().prop_map(Type::ptr),
                (inner, 1u64..64).prop_map(|(t, n)| Type::Array(Box::new(t), n)),
            ]
        })
    }

    proptest! {
        #[test]
        fn mangle_is_injective(a in any_type(), b in any_type()) {
            if a != b {
                prop_assert_ne!(a.mangle(), b.mangle());
            }
        }

        #[test]
        fn demangle_inverts_mangle(t in any_type()) {
            prop_assert_eq!(Type::demangle(&t.mangle()), Some(t));
        }
    }
}
