use super::ast::Span;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Number(String),
    Str(String),
    Punct(&'static str),
    /// A character outside the token grammar.
    Unknown(char),
    /// A string literal without its closing quote.
    UnterminatedStr,
    /// A block comment without its closing `*/`.
    UnterminatedComment,
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

impl Token {
    pub fn is_punct(&self, p: &str) -> bool {
        matches!(&self.kind, TokenKind::Punct(q) if *q == p)
    }

    pub fn is_ident(&self, name: &str) -> bool {
        matches!(&self.kind, TokenKind::Ident(n) if n == name)
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::Number(s) => format!("number `{s}`"),
            TokenKind::Str(_) => "string literal".to_string(),
            TokenKind::Punct(p) => format!("`{p}`"),
            TokenKind::Unknown(c) => format!("character {c:?}"),
            TokenKind::UnterminatedStr => "unterminated string".to_string(),
            TokenKind::UnterminatedComment => "unterminated comment".to_string(),
            TokenKind::Eof => "end of file".to_string(),
        }
    }
}

// Longest first so that maximal munch works with a linear scan.
const PUNCTS: &[&str] = &[
    ">>>=", "<<=", ">>=", "**=", "...", "=>", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=", "|=", "&=",
    "^=", "<<", ">>", "**", "->", "(", ")", "{", "}", "[", "]", ";", ",", ".", "?", ":", "=", "+", "-", "*", "/", "%", "!", "~", "<", ">",
    "&", "|", "^", "@",
];

const UNITS: &[&str] = &["wei", "gwei", "szabo", "finney", "ether", "seconds", "minutes", "hours", "days", "weeks", "years"];

pub fn tokenize(text: &str) -> Vec<Token> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let start = i;
            i += 2;
            let mut closed = false;
            while i + 1 < bytes.len() {
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    i += 2;
                    closed = true;
                    break;
                }
                i += 1;
            }
            if !closed {
                i = bytes.len();
                tokens.push(Token { kind: TokenKind::UnterminatedComment, span: Span::new(start, i) });
            }
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' || c == b'$' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$') {
                i += 1;
            }
            let word = &text[start..i];
            // hex"..." / unicode"..." literals
            if (word == "hex" || word == "unicode") && i < bytes.len() && (bytes[i] == b'"' || bytes[i] == b'\'') {
                let (tok, end) = lex_string(text, i);
                i = end;
                let kind = match tok {
                    TokenKind::Str(s) => TokenKind::Str(format!("{word}:{s}")),
                    other => other,
                };
                tokens.push(Token { kind, span: Span::new(start, i) });
                continue;
            }
            tokens.push(Token { kind: TokenKind::Ident(word.to_string()), span: Span::new(start, i) });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())) {
            if c == b'0' && matches!(bytes.get(i + 1), Some(b'x') | Some(b'X')) {
                i += 2;
                while i < bytes.len() && (bytes[i].is_ascii_hexdigit() || bytes[i] == b'_') {
                    i += 1;
                }
            } else {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_' || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && bytes[j] == b'-' {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
            }
            let mut end = i;
            let mut literal = text[start..i].to_string();
            // trailing unit: `1 days`, `2 ether`
            let mut j = i;
            while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
                j += 1;
            }
            let ws = j;
            while j < bytes.len() && bytes[j].is_ascii_alphabetic() {
                j += 1;
            }
            if j > ws && (j >= bytes.len() || !(bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_')) {
                let unit = &text[ws..j];
                if UNITS.contains(&unit) {
                    literal = format!("{literal} {unit}");
                    end = j;
                }
            }
            i = end;
            tokens.push(Token { kind: TokenKind::Number(literal), span: Span::new(start, end) });
            continue;
        }
        if c == b'"' || c == b'\'' {
            let (kind, end) = lex_string(text, i);
            i = end;
            tokens.push(Token { kind, span: Span::new(start, i) });
            continue;
        }
        if let Some(p) = PUNCTS.iter().find(|p| bytes[i..].starts_with(p.as_bytes())) {
            i += p.len();
            tokens.push(Token { kind: TokenKind::Punct(p), span: Span::new(start, i) });
            continue;
        }
        // Unknown character: consume the whole UTF-8 scalar.
        let ch = text[i..].chars().next().unwrap_or('\u{fffd}');
        i += ch.len_utf8().max(1);
        tokens.push(Token { kind: TokenKind::Unknown(ch), span: Span::new(start, i) });
    }
    tokens.push(Token { kind: TokenKind::Eof, span: Span::new(text.len(), text.len()) });
    tokens
}

fn lex_string(text: &str, open: usize) -> (TokenKind, usize) {
    let bytes = text.as_bytes();
    let quote = bytes[open];
    let mut i = open + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' => break,
            b if b == quote => {
                let content = &text[open + 1..i];
                return (TokenKind::Str(content.to_string()), i + 1);
            }
            _ => i += 1,
        }
    }
    let end = i.min(bytes.len());
    // never split a UTF-8 scalar
    let mut end = end;
    while end < bytes.len() && !text.is_char_boundary(end) {
        end += 1;
    }
    (TokenKind::UnterminatedStr, end.max(open + 1))
}
