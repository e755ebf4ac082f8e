//! Diagnostics shared by every compiler stage.
//!
//! Codes are stable identifiers; messages are free to change. The full
//! registry lives in [`Code`].

use std::fmt;

/// A 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub const fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Error,
    Warning,
}

macro_rules! codes {
    ($($(#[$m:meta])* $name:ident),* $(,)?) => {
        /// Registry of diagnostic codes.
        #[allow(non_camel_case_types)]
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum Code {
            $($(#[$m])* $name),*
        }

        impl Code {
            pub const ALL: &'static [Code] = &[$(Code::$name),*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(Code::$name => stringify!($name)),*
                }
            }
        }
    };
}

codes! {
    /// Illegal character, unterminated literal or comment.
    E_LEX,
    /// Unexpected token.
    E_PARSE,
    /// `#pragma swuc pop` with nothing pushed.
    E_PRAGMA_UNDERFLOW,
    /// Unknown `#pragma swuc` subcommand or target word.
    E_PRAGMA_MALFORMED,
    /// A `push` with no matching `pop` before end of file.
    W_PRAGMA_UNCLOSED,
    /// `infer` or `kernel` combined with another mark.
    E_ATTR_CONFLICT,
    /// `kernel` on a lambda expression.
    E_KERNEL_LAMBDA,
    /// The same mark written twice.
    W_DUP_ATTR,
    /// Target attribute on a record; accepted but has no effect.
    W_RECORD_ATTR_UNUSED,
    /// Unknown identifier, function or type.
    E_UNDECLARED,
    /// Two definitions of the same name.
    E_REDEFINED,
    /// Identifier reserved for builtins or target mangling.
    E_RESERVED_NAME,
    /// Type error.
    E_TYPE,
    /// Construct outside the supported language subset.
    E_UNSUPPORTED,
    /// Generic type argument cannot be deduced.
    E_INFER_TYPEARG,
    /// Instantiation chain deeper than the limit.
    E_RECURSIVE_INST,
    /// Illegal lambda capture.
    E_CAPTURE,
    /// Closure capturing CPE-local storage by reference handed to a kernel.
    E_LAMBDA_ESCAPE,
    /// Address of a named function taken.
    E_FN_ADDR,
    /// `infer` function with no feasible target.
    E_INFER_INFEASIBLE,
    /// Call to a function unavailable on one of the caller's targets.
    E_TARGET_MISMATCH,
    /// Kernel launched from code that may run on a CPE.
    E_KERNEL_FROM_SLAVE,
    /// Kernel used as a value or with a non-void result.
    E_KERNEL_MISUSE,
    /// Kernel parameter that cannot be copied into a launch block.
    E_KERNEL_PARAM,
    /// Unresolved symbol at link time.
    E_UNDEF_REF,
    /// Symbol defined twice at link time.
    E_DUP_SYM,
    /// Record layouts differ between modules.
    E_LAYOUT_MISMATCH,
    /// Image or module stream with the wrong magic.
    E_IMG_MAGIC,
    /// Image or module stream with an unsupported version.
    E_IMG_VERSION,
    /// Image or module stream ended early or is malformed.
    E_IMG_TRUNCATED,
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Note {
    pub span: Span,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: Code,
    pub message: String,
    pub file: String,
    pub span: Span,
    pub notes: Vec<Note>,
}

impl Diagnostic {
    pub fn error(code: Code, span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code,
            message: message.into(),
            file: String::new(),
            span,
            notes: Vec::new(),
        }
    }

    pub fn warning(code: Code, span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            ..Diagnostic::error(code, span, message)
        }
    }

    pub fn with_note(mut self, span: Span, message: impl Into<String>) -> Self {
        self.notes.push(Note {
            span,
            message: message.into(),
        });
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// Renders as `file:line:col: error[CODE]: message`, notes on
    /// following lines. A zero line means "no source position" and renders
    /// as `file: ...`.
    pub fn render(&self, color: bool) -> String {
        let (label, paint) = match self.severity {
            Severity::Error => ("error", "\x1b[1;31m"),
            Severity::Warning => ("warning", "\x1b[1;33m"),
        };
        let head = |span: Span| {
            if span.line == 0 {
                self.file.clone()
            } else {
                format!("{}:{span}", self.file)
            }
        };
        let mut out = if color {
            format!("{}: {paint}{label}[{}]\x1b[0m: {}", head(self.span), self.code, self.message)
        } else {
            format!("{}: {label}[{}]: {}", head(self.span), self.code, self.message)
        };
        for note in &self.notes {
            out.push_str(&format!("\n{}: note: {}", head(note.span), note.message));
        }
        out
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(false))
    }
}

/// Sorts by (file, line, column) and stamps the file name on entries that
/// have none.
pub fn finalize(diags: &mut [Diagnostic], file: &str) {
    for d in diags.iter_mut() {
        if d.file.is_empty() {
            d.file = file.to_string();
        }
    }
    diags.sort_by(|a, b| (&a.file, a.span).cmp(&(&b.file, b.span)));
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_rendering() {
        let mut d = vec![
            Diagnostic::warning(Code::W_DUP_ATTR, Span::new(3, 1), "duplicate `slave`"),
            Diagnostic::error(Code::E_TARGET_MISMATCH, Span::new(1, 9), "bad call")
                .with_note(Span::new(2, 1), "declared here"),
            Diagnostic::error(Code::E_UNDEF_REF, Span::default(), "undefined reference to `main`"),
        ];
        finalize(&mut d, "a.swc");
        let text: Vec<String> = d.iter().map(|d| d.render(false)).collect();
        assert_eq!(
            text,
            [
                "a.swc: error[E_UNDEF_REF]: undefined reference to `main`",
                "a.swc:1:9: error[E_TARGET_MISMATCH]: bad call\na.swc:2:1: note: declared here",
                "a.swc:3:1: warning[W_DUP_ATTR]: duplicate `slave`",
            ]
        );
        assert!(has_errors(&d));
        assert!(!has_errors(&d[2..]));
    }

    #[test]
    fn colored_rendering_wraps_the_label() {
        let d = Diagnostic::error(Code::E_PARSE, Span::new(1, 1), "x");
        let s = d.render(true);
        assert!(s.contains("\x1b[1;31merror[E_PARSE]\x1b[0m"), "{s:?}");
    }
}
