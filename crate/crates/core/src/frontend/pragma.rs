//! `#pragma swuc push|pop` default-target stack.

use super::ast::{DefaultTarget, Pragma, PragmaDirective};
use crate::diag::{Code, Diagnostic, Span};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PragmaStack {
    frames: Vec<(DefaultTarget, Span)>,
}

impl PragmaStack {
    pub const BASE: DefaultTarget = DefaultTarget::Host;

    pub fn new() -> Self {
        Self::default()
    }

    /// Top frame, or `host` when nothing is pushed.
    pub fn active(&self) -> DefaultTarget {
        self.frames.last().map_or(Self::BASE, |f| f.0)
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn push(&mut self, target: DefaultTarget, span: Span) {
        self.frames.push((target, span));
    }

    pub fn pop(&mut self, span: Span) -> Result<DefaultTarget, Diagnostic> {
        self.frames.pop().map(|f| f.0).ok_or_else(|| {
            Diagnostic::error(
                Code::E_PRAGMA_UNDERFLOW,
                span,
                "`#pragma swuc pop` with no matching push",
            )
        })
    }

    /// Spans of pushes still open, oldest first.
    pub fn open_pushes(&self) -> impl Iterator<Item = Span> + '_ {
        self.frames.iter().map(|f| f.1)
    }
}

/// Parses the text of a `#pragma swuc` line.
pub fn parse_directive(line: &str, span: Span) -> Result<Pragma, Diagnostic> {
    let words: Vec<&str> = line.split_whitespace().collect();
    let malformed = |msg: String| Diagnostic::error(Code::E_PRAGMA_MALFORMED, span, msg);
    if words.len() < 2 || words[0] != "#pragma" || words[1] != "swuc" {
        return Err(malformed(format!("not a swuc directive: `{line}`")));
    }
    let directive = match &words[2..] {
        ["push", target] => match DefaultTarget::from_word(target) {
            Some(t) => PragmaDirective::Push(t),
            None => {
                return Err(malformed(format!(
                    "unknown target `{target}`; expected host, slave or infer"
                )))
            }
        },
        ["pop"] => PragmaDirective::Pop,
        [] => return Err(malformed("missing swuc subcommand".to_string())),
        other => {
            return Err(malformed(format!(
                "unknown swuc directive `{}`",
                other.join(" ")
            )))
        }
    };
    Ok(Pragma { directive, span })
}

/// Applies one directive line to `stack`.
pub fn apply_pragma_defaults(
    pragma_line: &str,
    span: Span,
    stack: &mut PragmaStack,
) -> Result<Pragma, Diagnostic> {
    let pragma = parse_directive(pragma_line, span)?;
    match pragma.directive {
        PragmaDirective::Push(t) => stack.push(t, span),
        PragmaDirective::Pop => {
            stack.pop(span)?;
        }
    }
    Ok(pragma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sp(line: u32) -> Span {
        Span::new(line, 1)
    }

    #[test]
    fn push_pop_discipline() {
        let mut st = PragmaStack::new();
        apply_pragma_defaults("#pragma swuc push host", sp(1), &mut st).unwrap();
        apply_pragma_defaults("#pragma swuc push slave", sp(2), &mut st).unwrap();
        assert_eq!(st.active(), DefaultTarget::Slave);
        apply_pragma_defaults("#pragma swuc pop", sp(3), &mut st).unwrap();
        assert_eq!(st.active(), DefaultTarget::Host);
        assert_eq!(st.depth(), 1);
    }

    #[test]
    fn underflow_is_an_error() {
        let mut st = PragmaStack::new();
        let d = apply_pragma_defaults("#pragma swuc pop", sp(7), &mut st).unwrap_err();
        assert_eq!(d.code, Code::E_PRAGMA_UNDERFLOW);
        assert_eq!(d.span, sp(7));
        assert_eq!(st.depth(), 0);
    }

    #[test]
    fn malformed_directives() {
        let mut st = PragmaStack::new();
        for line in [
            "#pragma swuc push gpu",
            "#pragma swuc",
            "#pragma swuc pop now",
            "#pragma swuc push",
            "#pragma swuc reset",
        ] {
            let d = apply_pragma_defaults(line, sp(1), &mut st).unwrap_err();
            assert_eq!(d.code, Code::E_PRAGMA_MALFORMED, "{line}");
        }
    }

    fn target() -> impl Strategy<Value = DefaultTarget> {
        prop_oneof![
            Just(DefaultTarget::Host),
            Just(DefaultTarget::Slave),
            Just(DefaultTarget::Infer)
        ]
    }

    proptest! {
        #[test]
        fn balance_law(pushed in proptest::collection::vec(target(), 0..20), pops in 0usize..20) {
            let m = pops.min(pushed.len());
            let mut st = PragmaStack::new();
            for t in &pushed {
                apply_pragma_defaults(&format!("#pragma swuc push {}", t.as_str()), sp(1), &mut st).unwrap();
            }
            for _ in 0..m {
                apply_pragma_defaults("#pragma swuc pop", sp(1), &mut st).unwrap();
            }
            let n = pushed.len();
            let expected = if n == m { DefaultTarget::Host } else { pushed[n - m - 1] };
            prop_assert_eq!(st.active(), expected);
        }
    }
}
