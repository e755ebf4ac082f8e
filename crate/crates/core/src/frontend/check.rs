//! Attribute compatibility rules checked right after parsing.

use super::ast::{Mark, RawTargetSpec, SourceUnit};
use crate::diag::{Code, Diagnostic};

pub fn frontend_check(unit: &SourceUnit) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for f in unit.functions() {
        check_marks(&f.spec, &format!("function `{}`", f.name), &mut diags);
    }
    for l in unit.lambdas() {
        if let Some(i) = l.spec.explicit_marks.iter().position(|m| *m == Mark::Kernel) {
            diags.push(Diagnostic::error(
                Code::E_KERNEL_LAMBDA,
                l.spec.mark_spans[i],
                "a lambda expression cannot be a kernel",
            ));
        }
        check_marks(&l.spec, "lambda expression", &mut diags);
    }
    for r in unit.records() {
        if let Some(sp) = r.spec.mark_spans.first() {
            diags.push(Diagnostic::warning(
                Code::W_RECORD_ATTR_UNUSED,
                *sp,
                format!(
                    "target attribute on record `{}` has no effect (records have no member functions)",
                    r.name
                ),
            ));
        }
    }
    diags
}

fn check_marks(spec: &RawTargetSpec, what: &str, diags: &mut Vec<Diagnostic>) {
    let mut seen: Vec<Mark> = Vec::new();
    for (mark, sp) in spec.explicit_marks.iter().zip(&spec.mark_spans) {
        if seen.contains(mark) {
            diags.push(Diagnostic::warning(
                Code::W_DUP_ATTR,
                *sp,
                format!("duplicate `{}` attribute on {what}", mark.as_str()),
            ));
        } else {
            seen.push(*mark);
        }
    }
    if seen.len() < 2 {
        return;
    }
    for exclusive in [Mark::Infer, Mark::Kernel] {
        if let Some(i) = spec.explicit_marks.iter().position(|m| *m == exclusive) {
            let others: Vec<&str> = seen
                .iter()
                .filter(|m| **m != exclusive)
                .map(|m| m.as_str())
                .collect();
            diags.push(Diagnostic::error(
                Code::E_ATTR_CONFLICT,
                spec.mark_spans[i],
                format!(
                    "`{}` is not compatible with other extension attributes ({} also given on {what})",
                    exclusive.as_str(),
                    others.join(", ")
                ),
            ));
            return;
        }
    }
}

/// Marks with duplicates removed, in first-occurrence order.
pub fn collapsed_marks(spec: &RawTargetSpec) -> Vec<Mark> {
    let mut out = Vec::new();
    for m in &spec.explicit_marks {
        if !out.contains(m) {
            out.push(*m);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{lexer::tokenize, parser::parse};

    fn codes(src: &str) -> Vec<Code> {
        let unit = parse(&tokenize(src).unwrap()).unwrap().unit;
        frontend_check(&unit).into_iter().map(|d| d.code).collect()
    }

    #[test]
    fn infer_with_host_conflicts() {
        assert_eq!(
            codes("__attribute((infer)) __attribute((host)) int f() { return 0; }"),
            vec![Code::E_ATTR_CONFLICT]
        );
    }

    #[test]
    fn kernel_with_slave_conflicts() {
        assert_eq!(
            codes("__attribute((kernel)) __attribute((slave)) void k() { }"),
            vec![Code::E_ATTR_CONFLICT]
        );
    }

    #[test]
    fn single_mark_is_clean() {
        assert!(codes("__attribute((host)) int f() { return 0; }").is_empty());
        assert!(codes("__attribute((host)) __attribute((slave)) int f() { return 0; }").is_empty());
    }

    #[test]
    fn duplicate_marks_warn() {
        assert_eq!(
            codes("__attribute((slave)) __attribute((slave)) int f() { return 0; }"),
            vec![Code::W_DUP_ATTR]
        );
        assert_eq!(
            codes("__attribute((infer)) __attribute((infer)) int f() { return 0; }"),
            vec![Code::W_DUP_ATTR]
        );
    }

    #[test]
    fn kernel_lambda_is_rejected() {
        assert_eq!(
            codes("int main() { auto f = [=](int x) __attribute((kernel)) { return x; }; return 0; }"),
            vec![Code::E_KERNEL_LAMBDA]
        );
    }

    #[test]
    fn generic_kernel_is_allowed() {
        assert!(codes("template <T> __attribute((kernel)) void k(T* a) { }").is_empty());
    }

    #[test]
    fn record_attribute_warns() {
        assert_eq!(
            codes("__attribute((slave)) struct P { int x; };"),
            vec![Code::W_RECORD_ATTR_UNUSED]
        );
    }
}
