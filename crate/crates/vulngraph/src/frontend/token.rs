//! Hand-written lexer with byte spans and 1-based line/column positions.

use super::FrontendError;

/// Lexical class of a [`Token`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Keyword,
    Identifier,
    Number,
    CharLiteral,
    StringLiteral,
    Operator,
    Punctuation,
}

/// One lexed token. `line` and `col` are 1-based; the byte span refers to
/// the original source and is what lets the parser reconstruct source
/// slices with original spacing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub col: u32,
    /// Byte offset of the first byte of the token in the source.
    pub byte_start: usize,
    /// Byte offset one past the last byte of the token.
    pub byte_end: usize,
}

const KEYWORDS: [&str; 9] =
    ["void", "int", "char", "long", "unsigned", "if", "else", "while", "return"];

/// Multi-byte operators, longest first so maximal munch works.
const MULTI_OPS: [&str; 8] = ["==", "!=", "<=", ">=", "+=", "-=", "&&", "||"];
const SINGLE_OPS: [u8; 8] = [b'=', b'<', b'>', b'+', b'-', b'*', b'/', b'%'];
const PUNCT: [u8; 8] = [b'(', b')', b'{', b'}', b'[', b']', b';', b','];

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.src.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn error(&self, message: impl Into<String>) -> FrontendError {
        FrontendError::Lex { line: self.line, col: self.col, message: message.into() }
    }

    /// Skip whitespace and `//` / `/* */` comments.
    fn skip_trivia(&mut self) -> Result<(), FrontendError> {
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'/') if self.peek_at(1) == Some(b'/') => {
                    while let Some(b) = self.peek() {
                        if b == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                Some(b'/') if self.peek_at(1) == Some(b'*') => {
                    let (line, col) = (self.line, self.col);
                    self.bump();
                    self.bump();
                    loop {
                        match self.peek() {
                            Some(b'*') if self.peek_at(1) == Some(b'/') => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            Some(_) => {
                                self.bump();
                            }
                            None => {
                                return Err(FrontendError::Lex {
                                    line,
                                    col,
                                    message: "unterminated block comment".into(),
                                })
                            }
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    /// Consume the body of a quoted literal after its opening quote,
    /// returning at the closing quote. Handles `\` escapes opaquely.
    fn quoted(&mut self, quote: u8, what: &str) -> Result<(), FrontendError> {
        loop {
            match self.peek() {
                Some(b'\\') => {
                    self.bump();
                    if self.bump().is_none() {
                        return Err(self.error(format!("unterminated {what}")));
                    }
                }
                Some(b'\n') | None => return Err(self.error(format!("unterminated {what}"))),
                Some(b) => {
                    self.bump();
                    if b == quote {
                        return Ok(());
                    }
                }
            }
        }
    }

    fn next_token(&mut self) -> Result<Option<Token>, FrontendError> {
        self.skip_trivia()?;
        let (line, col, start) = (self.line, self.col, self.pos);
        let Some(b) = self.peek() else { return Ok(None) };

        let kind = if b == b'_' || b.is_ascii_alphabetic() {
            while matches!(self.peek(), Some(c) if c == b'_' || c.is_ascii_alphanumeric()) {
                self.bump();
            }
            let text = &self.src[start..self.pos];
            if KEYWORDS.iter().any(|k| k.as_bytes() == text) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            }
        } else if b.is_ascii_digit() {
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
            TokenKind::Number
        } else if b == b'\'' {
            self.bump();
            self.quoted(b'\'', "character literal")?;
            TokenKind::CharLiteral
        } else if b == b'"' {
            self.bump();
            self.quoted(b'"', "string literal")?;
            TokenKind::StringLiteral
        } else if let Some(op) = MULTI_OPS
            .iter()
            .find(|op| self.src[self.pos..].starts_with(op.as_bytes()))
        {
            for _ in 0..op.len() {
                self.bump();
            }
            TokenKind::Operator
        } else if SINGLE_OPS.contains(&b) {
            self.bump();
            TokenKind::Operator
        } else if PUNCT.contains(&b) {
            self.bump();
            TokenKind::Punctuation
        } else {
            return Err(self.error(format!("unexpected character {:?}", b as char)));
        };

        let text = std::str::from_utf8(&self.src[start..self.pos])
            .expect("token bytes are ASCII")
            .to_string();
        Ok(Some(Token { kind, text, line, col, byte_start: start, byte_end: self.pos }))
    }
}

/// Lex `code` into tokens. Comments and whitespace are discarded; byte
/// spans let consumers tell whether adjacent tokens were glued in the
/// source.
pub fn lex(code: &str) -> Result<Vec<Token>, FrontendError> {
    let mut lexer = Lexer { src: code.as_bytes(), pos: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    while let Some(tok) = lexer.next_token()? {
        out.push(tok);
    }
    Ok(out)
}

/// Reconstruct source text for a token range: tokens are joined with a
/// single space exactly where the original source had any separation
/// (whitespace or comments), and glued where it had none. Literal
/// interiors are never touched.
pub(crate) fn render_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 && tok.byte_start > tokens[i - 1].byte_end {
            out.push(' ');
        }
        out.push_str(&tok.text);
    }
    out
}
