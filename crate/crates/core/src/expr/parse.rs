//! Recursive-descent parser for candidate expressions.
//!
//! Grammar (whitespace is insignificant between tokens):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?            // right-associative
//! atom   := number | identifier | identifier '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers match `[A-Za-z_][A-Za-z0-9_]*` and resolve against the
//! declared variable and parameter name tables; `sin cos tan exp log sqrt
//! abs` are reserved function names. Numbers are unsigned decimal literals
//! with optional fraction and exponent; leading `-` parses as negation and
//! is folded into the literal.
//!
//! Error offsets are byte positions into the source. An unexpected-token
//! error points at the offending token's first byte; an unexpected-end
//! error points at the first byte of the last token that was consumed.

use thiserror::Error;

use super::node::{neg, Expr, UnaryOp};
use super::BinaryOp;

/// Parse-time failure, carrying a byte offset into the source where one
/// exists.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected character {character:?} at byte {offset}")]
    UnexpectedCharacter { character: char, offset: usize },
    #[error("malformed numeric literal at byte {offset}")]
    InvalidNumber { offset: usize },
    #[error("unexpected end of input after the token at byte {offset}")]
    UnexpectedEnd { offset: usize },
    #[error("expected {expected} at byte {offset}")]
    UnexpectedToken { expected: &'static str, offset: usize },
    #[error("unknown identifier {name:?} at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function {name:?} at byte {offset} must be followed by a parenthesized argument")]
    FunctionNeedsArgument { name: String, offset: usize },
    #[error("name {name:?} is declared more than once")]
    DuplicateName { name: String },
    #[error("declared name {name:?} is not a valid identifier")]
    InvalidName { name: String },
    #[error("declared name {name:?} collides with a built-in function")]
    ReservedName { name: String },
    #[error("declared parameter {name:?} does not appear in the expression")]
    UnusedParameter { name: String },
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    kind: TokenKind,
    start: usize,
}

/// True for names the grammar accepts as identifiers.
pub(super) fn is_valid_identifier(name: &str) -> bool {
    let mut bytes = name.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_alphabetic() || b == b'_' => {}
        _ => return false,
    }
    bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

fn lex(source: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let b = bytes[i];
        let kind = match b {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'+' => {
                i += 1;
                TokenKind::Plus
            }
            b'-' => {
                i += 1;
                TokenKind::Minus
            }
            b'*' => {
                i += 1;
                TokenKind::Star
            }
            b'/' => {
                i += 1;
                TokenKind::Slash
            }
            b'^' => {
                i += 1;
                TokenKind::Caret
            }
            b'(' => {
                i += 1;
                TokenKind::LParen
            }
            b')' => {
                i += 1;
                TokenKind::RParen
            }
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    if i >= bytes.len() || !bytes[i].is_ascii_digit() {
                        return Err(ParseError::InvalidNumber { offset: start });
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    if i >= bytes.len() || !bytes[i].is_ascii_digit() {
                        return Err(ParseError::InvalidNumber { offset: start });
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text = &source[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| ParseError::InvalidNumber { offset: start })?;
                if !value.is_finite() {
                    // Overflowing decimals such as 1e999 have no finite
                    // representation and cannot become literals.
                    return Err(ParseError::InvalidNumber { offset: start });
                }
                TokenKind::Number(value)
            }
            b if b.is_ascii_alphabetic() || b == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                TokenKind::Ident(source[start..i].to_string())
            }
            _ => {
                let character = source[start..].chars().next().unwrap_or('\u{fffd}');
                return Err(ParseError::UnexpectedCharacter {
                    character,
                    offset: start,
                });
            }
        };
        tokens.push(Token { kind, start });
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    variables: &'a [String],
    parameters: &'a [String],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    /// Offset reported for an unexpected end of input: the first byte of the
    /// last token that was consumed (0 for empty input).
    fn end_offset(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.tokens[self.pos - 1].start
        }
    }

    fn next(&mut self, expected: &'static str) -> Result<Token, ParseError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => {
                let _ = expected;
                Err(ParseError::UnexpectedEnd {
                    offset: self.end_offset(),
                })
            }
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind, expected: &'static str) -> Result<(), ParseError> {
        match self.tokens.get(self.pos) {
            Some(t) if t.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(ParseError::UnexpectedToken {
                expected,
                offset: t.start,
            }),
            None => Err(ParseError::UnexpectedEnd {
                offset: self.end_offset(),
            }),
        }
    }

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let mut node = self.parse_term()?;
        loop {
            let op = if self.eat(&TokenKind::Plus) {
                BinaryOp::Add
            } else if self.eat(&TokenKind::Minus) {
                BinaryOp::Sub
            } else {
                return Ok(node);
            };
            let rhs = self.parse_term()?;
            node = Expr::Binary(op, Box::new(node), Box::new(rhs));
        }
    }

    fn parse_term(&mut self) -> Result<Expr, ParseError> {
        let mut node = self.parse_unary()?;
        loop {
            let op = if self.eat(&TokenKind::Star) {
                BinaryOp::Mul
            } else if self.eat(&TokenKind::Slash) {
                BinaryOp::Div
            } else {
                return Ok(node);
            };
            let rhs = self.parse_unary()?;
            node = Expr::Binary(op, Box::new(node), Box::new(rhs));
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&TokenKind::Minus) {
            // `neg` folds literal operands, so "-3" becomes the literal -3
            // and canonical text round-trips to an identical tree.
            Ok(neg(self.parse_unary()?))
        } else {
            self.parse_power()
        }
    }

    fn parse_power(&mut self) -> Result<Expr, ParseError> {
        let base = self.parse_atom()?;
        if self.eat(&TokenKind::Caret) {
            let exponent = self.parse_unary()?;
            Ok(Expr::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ))
        } else {
            Ok(base)
        }
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        let token = self.next("a number, a name, or '('")?;
        match token.kind {
            TokenKind::Number(value) => Ok(Expr::Literal(value)),
            TokenKind::LParen => {
                let inner = self.parse_expr()?;
                self.expect(TokenKind::RParen, "')'")?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if let Some(op) = UnaryOp::from_function_name(&name) {
                    if !self.eat(&TokenKind::LParen) {
                        return Err(ParseError::FunctionNeedsArgument {
                            name,
                            offset: token.start,
                        });
                    }
                    let argument = self.parse_expr()?;
                    self.expect(TokenKind::RParen, "')'")?;
                    return Ok(Expr::Unary(op, Box::new(argument)));
                }
                if let Some(i) = self.variables.iter().position(|v| *v == name) {
                    return Ok(Expr::Variable(i));
                }
                if let Some(j) = self.parameters.iter().position(|p| *p == name) {
                    return Ok(Expr::Parameter(j));
                }
                Err(ParseError::UnknownIdentifier {
                    name,
                    offset: token.start,
                })
            }
            _ => Err(ParseError::UnexpectedToken {
                expected: "a number, a name, or '('",
                offset: token.start,
            }),
        }
    }
}

/// Parses `source` against the given name tables; declaration validation is
/// the caller's job. Returns the tree with index-based leaves.
pub(super) fn parse_source(
    source: &str,
    variables: &[String],
    parameters: &[String],
) -> Result<Expr, ParseError> {
    let tokens = lex(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        variables,
        parameters,
    };
    let root = parser.parse_expr()?;
    if let Some(t) = parser.tokens.get(parser.pos) {
        return Err(ParseError::UnexpectedToken {
            expected: "end of input",
            offset: t.start,
        });
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::super::node::{BinaryOp, Expr, UnaryOp};
    use super::*;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn parse(src: &str, vars: &[&str], pars: &[&str]) -> Result<Expr, ParseError> {
        parse_source(src, &names(vars), &names(pars))
    }

    #[test]
    fn precedence_and_associativity() {
        // a - b - c associates left: (a-b) - c.
        let e = parse("a-b-c", &["a", "b", "c"], &[]).unwrap();
        match e {
            Expr::Binary(BinaryOp::Sub, l, r) => {
                assert!(matches!(*l, Expr::Binary(BinaryOp::Sub, _, _)));
                assert_eq!(*r, Expr::Variable(2));
            }
            other => panic!("unexpected tree: {other:?}"),
        }
        // 2^3^2 associates right: 2^(3^2).
        let e = parse("2^3^2", &[], &[]).unwrap();
        match e {
            Expr::Binary(BinaryOp::Pow, l, r) => {
                assert_eq!(*l, Expr::Literal(2.0));
                assert!(matches!(*r, Expr::Binary(BinaryOp::Pow, _, _)));
            }
            other => panic!("unexpected tree: {other:?}"),
        }
        // -x^2 negates the power.
        let e = parse("-x^2", &["x"], &[]).unwrap();
        assert!(matches!(e, Expr::Unary(UnaryOp::Neg, _)));
    }

    #[test]
    fn unary_minus_folds_into_literals() {
        assert_eq!(parse("-3", &[], &[]).unwrap(), Expr::Literal(-3.0));
        assert_eq!(parse("--3", &[], &[]).unwrap(), Expr::Literal(3.0));
        // 2^-3 puts the negation in the exponent.
        let e = parse("2^-3", &[], &[]).unwrap();
        assert_eq!(
            e,
            Expr::Binary(
                BinaryOp::Pow,
                Box::new(Expr::Literal(2.0)),
                Box::new(Expr::Literal(-3.0)),
            )
        );
    }

    #[test]
    fn unterminated_call_reports_last_consumed_token() {
        // Offsets:  a*sin(b*x
        //           012345678
        let err = parse("a*sin(b*x", &["a", "b", "x"], &[]).unwrap_err();
        assert_eq!(err, ParseError::UnexpectedEnd { offset: 8 });
    }

    #[test]
    fn error_offsets_point_at_offenders() {
        let err = parse("a $ b", &["a", "b"], &[]).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnexpectedCharacter {
                character: '$',
                offset: 2
            }
        );
        let err = parse("a + qq", &["a"], &[]).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownIdentifier {
                name: "qq".into(),
                offset: 4
            }
        );
        let err = parse("a b", &["a", "b"], &[]).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnexpectedToken {
                expected: "end of input",
                offset: 2
            }
        );
        let err = parse("sin + 1", &[], &[]).unwrap_err();
        assert_eq!(
            err,
            ParseError::FunctionNeedsArgument {
                name: "sin".into(),
                offset: 0
            }
        );
    }

    #[test]
    fn scientific_notation_and_malformed_numbers() {
        assert_eq!(parse("1.5e-3", &[], &[]).unwrap(), Expr::Literal(0.0015));
        assert_eq!(
            parse("2.", &[], &[]).unwrap_err(),
            ParseError::InvalidNumber { offset: 0 }
        );
        assert_eq!(
            parse("1e", &[], &[]).unwrap_err(),
            ParseError::InvalidNumber { offset: 0 }
        );
    }

    #[test]
    fn whitespace_is_insignificant() {
        let a = parse("a+b *c", &["a", "b", "c"], &[]).unwrap();
        let b = parse("a + b * c", &["a", "b", "c"], &[]).unwrap();
        assert_eq!(a, b);
    }
}
