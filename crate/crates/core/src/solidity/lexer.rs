//! Token stream for Solidity source text.
//!
//! The lexer is deliberately shallow: it recognizes identifiers, numbers,
//! string literals and single-character punctuation, and drops comments and
//! whitespace. That is enough to find declarations, balance braces and spot
//! call sites without a full grammar.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Punct(char),
    /// `=>`
    Arrow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    /// 1-based line of `start`.
    pub line: usize,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    pub fn is_punct(&self, c: char) -> bool {
        self.kind == TokenKind::Punct(c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

/// Byte offset of the start of every line; `line_starts[0] == 0`.
pub fn line_starts(src: &str) -> Vec<usize> {
    std::iter::once(0)
        .chain(src.match_indices('\n').map(|(i, _)| i + 1))
        .collect()
}

/// 1-based line containing byte `offset`.
pub fn line_of(line_starts: &[usize], offset: usize) -> usize {
    match line_starts.binary_search(&offset) {
        Ok(i) => i + 1,
        Err(i) => i,
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let starts = line_starts(src);
    let err = |at: usize, message: &str| {
        let line = line_of(&starts, at);
        LexError {
            line,
            column: at - starts[line - 1] + 1,
            message: message.to_string(),
        }
    };
    let mut out = Vec::new();
    let mut line = 1;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'\n' => {
                line += 1;
                i += 1;
            }
            b if b.is_ascii_whitespace() => i += 1,
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let open = i;
                i += 2;
                loop {
                    if i + 1 >= bytes.len() {
                        return Err(err(open, "unterminated block comment"));
                    }
                    if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                        i += 2;
                        break;
                    }
                    if bytes[i] == b'\n' {
                        line += 1;
                    }
                    i += 1;
                }
            }
            b'"' | b'\'' => {
                let open = i;
                i = scan_string(bytes, i).ok_or_else(|| err(open, "unterminated string literal"))?;
                out.push(Token {
                    kind: TokenKind::Str,
                    start: open,
                    end: i,
                    line,
                });
            }
            b if b.is_ascii_digit() => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.') {
                    // `1.5` is a number but `x.1` never reaches here; stop at `..`-style member access
                    if bytes[i] == b'.' && !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
                        break;
                    }
                    i += 1;
                }
                out.push(Token {
                    kind: TokenKind::Number,
                    start,
                    end: i,
                    line,
                });
            }
            b if b.is_ascii_alphabetic() || b == b'_' || b == b'$' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$') {
                    i += 1;
                }
                // hex"..", unicode".." literals
                let word = &src[start..i];
                if (word == "hex" || word == "unicode") && matches!(bytes.get(i), Some(b'"') | Some(b'\'')) {
                    i = scan_string(bytes, i).ok_or_else(|| err(start, "unterminated string literal"))?;
                    out.push(Token {
                        kind: TokenKind::Str,
                        start,
                        end: i,
                        line,
                    });
                } else {
                    out.push(Token {
                        kind: TokenKind::Ident,
                        start,
                        end: i,
                        line,
                    });
                }
            }
            b'=' if bytes.get(i + 1) == Some(&b'>') => {
                out.push(Token {
                    kind: TokenKind::Arrow,
                    start: i,
                    end: i + 2,
                    line,
                });
                i += 2;
            }
            _ => {
                let c = src[i..].chars().next().expect("in bounds");
                out.push(Token {
                    kind: TokenKind::Punct(c),
                    start: i,
                    end: i + c.len_utf8(),
                    line,
                });
                i += c.len_utf8();
            }
        }
    }
    Ok(out)
}

/// Returns the index one past the closing quote, or `None` if unterminated.
fn scan_string(bytes: &[u8], open: usize) -> Option<usize> {
    let quote = bytes[open];
    let mut i = open + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' => return None,
            b if b == quote => return Some(i + 1),
            _ => i += 1,
        }
    }
    None
}
