//! Target sets and the explicit-mark resolution table.

use std::fmt;

use crate::frontend::ast::{DefaultTarget, Mark, RawTargetSpec};

/// Execution side of a compiled module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Host,
    Slave,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Host, Side::Slave];

    pub fn name(self) -> &'static str {
        match self {
            Side::Host => "HOST",
            Side::Slave => "SLAVE",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Subset of {HOST, SLAVE}; `meet` is intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TargetSet {
    pub host: bool,
    pub slave: bool,
}

impl TargetSet {
    pub const NONE: TargetSet = TargetSet {
        host: false,
        slave: false,
    };
    pub const HOST: TargetSet = TargetSet {
        host: true,
        slave: false,
    };
    pub const SLAVE: TargetSet = TargetSet {
        host: false,
        slave: true,
    };
    pub const BOTH: TargetSet = TargetSet {
        host: true,
        slave: true,
    };

    pub fn contains(self, side: Side) -> bool {
        match side {
            Side::Host => self.host,
            Side::Slave => self.slave,
        }
    }

    pub fn meet(self, other: TargetSet) -> TargetSet {
        TargetSet {
            host: self.host && other.host,
            slave: self.slave && other.slave,
        }
    }

    pub fn is_none(self) -> bool {
        self == TargetSet::NONE
    }

    pub fn is_subset(self, other: TargetSet) -> bool {
        self.meet(other) == self
    }

    pub fn sides(self) -> impl Iterator<Item = Side> {
        Side::BOTH.into_iter().filter(move |s| self.contains(*s))
    }

    pub fn name(self) -> &'static str {
        match (self.host, self.slave) {
            (true, true) => "BOTH",
            (true, false) => "HOST",
            (false, true) => "SLAVE",
            (false, false) => "NONE",
        }
    }
}

impl fmt::Display for TargetSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Target of a function before inference: `None` is UNRESOLVED-INFER.
pub fn explicit_target(spec: &RawTargetSpec) -> Option<TargetSet> {
    if spec.explicit_marks.is_empty() {
        return match spec.pragma_default {
            DefaultTarget::Host => Some(TargetSet::HOST),
            DefaultTarget::Slave => Some(TargetSet::SLAVE),
            DefaultTarget::Infer => None,
        };
    }
    if spec.has(Mark::Infer) {
        return None;
    }
    if spec.has(Mark::Kernel) {
        return Some(TargetSet::SLAVE);
    }
    Some(TargetSet {
        host: spec.has(Mark::Host),
        slave: spec.has(Mark::Slave),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diag::Span;

    fn spec(marks: &[Mark], default: DefaultTarget) -> RawTargetSpec {
        RawTargetSpec::new(
            marks.iter().map(|m| (*m, Span::default())).collect(),
            default,
            default != DefaultTarget::Host,
        )
    }

    #[test]
    fn explicit_table() {
        assert_eq!(explicit_target(&spec(&[Mark::Host, Mark::Slave], DefaultTarget::Host)), Some(TargetSet::BOTH));
        assert_eq!(explicit_target(&spec(&[], DefaultTarget::Host)), Some(TargetSet::HOST));
        assert_eq!(explicit_target(&spec(&[], DefaultTarget::Infer)), None);
        assert_eq!(explicit_target(&spec(&[Mark::Infer], DefaultTarget::Slave)), None);
        assert_eq!(explicit_target(&spec(&[Mark::Kernel], DefaultTarget::Host)), Some(TargetSet::SLAVE));
        // Explicit marks win over the pragma default.
        assert_eq!(explicit_target(&spec(&[Mark::Host], DefaultTarget::Slave)), Some(TargetSet::HOST));
    }

    #[test]
    fn meet_is_intersection() {
        assert_eq!(TargetSet::BOTH.meet(TargetSet::SLAVE), TargetSet::SLAVE);
        assert_eq!(TargetSet::HOST.meet(TargetSet::SLAVE), TargetSet::NONE);
        assert!(TargetSet::NONE.is_subset(TargetSet::HOST));
    }
}
