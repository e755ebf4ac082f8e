//! Per-side symbol naming.
//!
//! A HOST symbol is the function's name; a SLAVE symbol carries the
//! `slave_` prefix. Kernel launch stubs and wrappers derive from the kernel
//! name on their own side.

use crate::sema::Side;

pub const SLAVE_PREFIX: &str = "slave_";

pub fn mangle(side: Side, base: &str) -> String {
    match side {
        Side::Host => base.to_string(),
        Side::Slave => format!("{SLAVE_PREFIX}{base}"),
    }
}

/// Inverse of [`mangle`]. Source names cannot start with `slave_`, so the
/// prefix is unambiguous.
pub fn demangle(symbol: &str) -> (Side, &str) {
    match symbol.strip_prefix(SLAVE_PREFIX) {
        Some(base) => (Side::Slave, base),
        None => (Side::Host, symbol),
    }
}

/// HOST stub that packs arguments and launches `kernel`.
pub fn launch_stub(kernel: &str) -> String {
    format!("{kernel}_launch")
}

/// SLAVE entry that unpacks the parameter block and calls the body.
pub fn launch_wrapper(kernel: &str) -> String {
    format!("{SLAVE_PREFIX}{kernel}_wrapper")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(mangle(Side::Host, "helper"), "helper");
        assert_eq!(mangle(Side::Slave, "helper"), "slave_helper");
        assert_eq!(launch_wrapper("k"), "slave_k_wrapper");
        assert_eq!(launch_stub("k"), "k_launch");
    }

    proptest! {
        #[test]
        fn roundtrip(base in "[a-z][a-z0-9_]{0,12}(\\$[a-z]+)?", slave in any::<bool>()) {
            prop_assume!(!base.starts_with(SLAVE_PREFIX));
            let side = if slave { Side::Slave } else { Side::Host };
            let s = mangle(side, &base);
            prop_assert_eq!(demangle(&s), (side, base.as_str()));
        }
    }
}
