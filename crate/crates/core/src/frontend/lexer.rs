//! Tokenizer for SW-C source text.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Ident,
    Keyword,
    IntLit,
    FloatLit,
    StrLit,
    Punct,
    /// A whole `#pragma swuc ...` line.
    Pragma,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub line: u32,
    pub col: u32,
    /// Byte offset of the first character of the lexeme.
    pub offset: usize,
}

impl Token {
    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.lexeme == text
    }

    pub fn is_punct(&self, text: &str) -> bool {
        self.is(TokenKind::Punct, text)
    }

    pub fn is_keyword(&self, text: &str) -> bool {
        self.is(TokenKind::Keyword, text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct LexError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

pub const KEYWORDS: &[&str] = &[
    "int",
    "long",
    "float",
    "double",
    "bool",
    "void",
    "struct",
    "template",
    "typename",
    "return",
    "if",
    "else",
    "while",
    "for",
    "break",
    "continue",
    "true",
    "false",
    "sizeof",
    "local",
    "auto",
    "const",
    "__attribute",
];

const PUNCT2: &[&str] = &[
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=",
    "%=",
];
const PUNCT1: &str = "(){}[],;.+-*/%<>=!&|^~?:";

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn error(&self, line: u32, col: u32, message: impl Into<String>) -> LexError {
        LexError {
            line,
            column: col,
            message: message.into(),
        }
    }
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let mut cur = Cursor {
        src: source,
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut tokens = Vec::new();

    while let Some(c) = cur.peek() {
        let (line, col, start) = (cur.line, cur.col, cur.pos);

        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if cur.rest().starts_with("//") {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if cur.rest().starts_with("/*") {
            cur.bump();
            cur.bump();
            loop {
                if cur.rest().starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    return Err(cur.error(line, col, "unterminated block comment"));
                }
            }
            continue;
        }

        let kind = if c == '#' {
            let text = cur.rest().split('\n').next().unwrap_or("");
            let words: Vec<&str> = text.split_whitespace().collect();
            let is_swuc = col == 1 && words.first() == Some(&"#pragma") && words.get(1) == Some(&"swuc");
            if !is_swuc {
                return Err(cur.error(
                    line,
                    col,
                    "only `#pragma swuc` directives at the start of a line are supported",
                ));
            }
            let text = text.trim_end_matches('\r').trim_end();
            for _ in text.chars() {
                cur.bump();
            }
            TokenKind::Pragma
        } else if c.is_ascii_alphabetic() || c == '_' {
            while matches!(cur.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                cur.bump();
            }
            if KEYWORDS.contains(&&source[start..cur.pos]) {
                TokenKind::Keyword
            } else {
                TokenKind::Ident
            }
        } else if c.is_ascii_digit()
            || (c == '.' && matches!(cur.peek_at(1), Some(d) if d.is_ascii_digit()))
        {
            lex_number(&mut cur)?
        } else if c == '"' {
            cur.bump();
            loop {
                match cur.bump() {
                    None | Some('\n') => {
                        return Err(cur.error(line, col, "unterminated string literal"))
                    }
                    Some('\\') => {
                        if cur.bump().is_none() {
                            return Err(cur.error(line, col, "unterminated string literal"));
                        }
                    }
                    Some('"') => break,
                    Some(_) => {}
                }
            }
            TokenKind::StrLit
        } else {
            let rest = cur.rest();
            let len = PUNCT2
                .iter()
                .find(|p| rest.starts_with(**p))
                .map(|p| p.len())
                .or_else(|| PUNCT1.contains(c).then_some(1));
            match len {
                Some(len) => {
                    for _ in 0..len {
                        cur.bump();
                    }
                    TokenKind::Punct
                }
                None => {
                    return Err(cur.error(line, col, format!("illegal character `{c}`")));
                }
            }
        };

        tokens.push(Token {
            kind,
            lexeme: source[start..cur.pos].to_string(),
            line,
            col,
            offset: start,
        });
    }
    Ok(tokens)
}

fn lex_number(cur: &mut Cursor<'_>) -> Result<TokenKind, LexError> {
    let (line, col) = (cur.line, cur.col);
    if cur.rest().starts_with("0x") || cur.rest().starts_with("0X") {
        cur.bump();
        cur.bump();
        let mut digits = 0;
        while matches!(cur.peek(), Some(c) if c.is_ascii_hexdigit()) {
            cur.bump();
            digits += 1;
        }
        if digits == 0 {
            return Err(cur.error(line, col, "hexadecimal literal has no digits"));
        }
        if matches!(cur.peek(), Some('l' | 'L')) {
            cur.bump();
        }
        return Ok(TokenKind::IntLit);
    }

    let mut is_float = false;
    while matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
        cur.bump();
    }
    if cur.peek() == Some('.') {
        is_float = true;
        cur.bump();
        while matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
            cur.bump();
        }
    }
    if matches!(cur.peek(), Some('e' | 'E')) {
        let sign = matches!(cur.peek_at(1), Some('+' | '-'));
        let digit_at = if sign { 2 } else { 1 };
        if matches!(cur.peek_at(digit_at), Some(d) if d.is_ascii_digit()) {
            is_float = true;
            for _ in 0..digit_at {
                cur.bump();
            }
            while matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
                cur.bump();
            }
        }
    }
    match cur.peek() {
        Some('f' | 'F') if is_float => {
            cur.bump();
        }
        Some('l' | 'L') if !is_float => {
            cur.bump();
        }
        _ => {}
    }
    if matches!(cur.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
        return Err(cur.error(line, col, "malformed numeric literal"));
    }
    Ok(if is_float {
        TokenKind::FloatLit
    } else {
        TokenKind::IntLit
    })
}
