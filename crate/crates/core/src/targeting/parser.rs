//! Recursive-descent parser for targeting predicates.
//!
//! ```text
//! expr    := or
//! or      := and ("OR" and)*
//! and     := unary ("AND" unary)*
//! unary   := "NOT" unary | atom
//! atom    := "(" expr ")" | "TRUE"
//!          | ident op literal
//!          | ident "IN" "{" literal ("," literal)* "}"
//! op      := "<" | "<=" | ">" | ">=" | "==" | "!="
//! literal := number | string
//! ```
//!
//! Numbers are plain decimals with an optional leading `-`; strings are
//! double-quoted with `\"` and `\\` escapes. Keywords are upper case.

use std::fmt;

use thiserror::Error;

use super::{AttrRef, CmpOp, Literal, TargetPredicate};
use crate::domain::{KpiKind, KpiSchema};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax {
        expected: Vec<&'static str>,
        found: String,
    },
    UnknownAttribute(String),
    TypeMismatch {
        attribute: String,
        reason: String,
    },
}

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax { expected, found } => write!(
                f,
                "syntax error at offset {}: expected {}, found {found}",
                self.position,
                expected.join(" or ")
            ),
            ParseErrorKind::UnknownAttribute(name) => {
                write!(f, "unknown attribute {name:?} at offset {}", self.position)
            }
            ParseErrorKind::TypeMismatch { attribute, reason } => write!(
                f,
                "type mismatch on {attribute:?} at offset {}: {reason}",
                self.position
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Str(String),
    Op(CmpOp),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    And,
    Or,
    Not,
    In,
    True,
    End,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Ident(s) => format!("identifier {s:?}"),
            Token::Number(x) => format!("number {x}"),
            Token::Str(s) => format!("string {s:?}"),
            Token::Op(op) => format!("{:?}", op.symbol()),
            Token::LParen => "\"(\"".into(),
            Token::RParen => "\")\"".into(),
            Token::LBrace => "\"{\"".into(),
            Token::RBrace => "\"}\"".into(),
            Token::Comma => "\",\"".into(),
            Token::And => "AND".into(),
            Token::Or => "OR".into(),
            Token::Not => "NOT".into(),
            Token::In => "IN".into(),
            Token::True => "TRUE".into(),
            Token::End => "end of input".into(),
        }
    }
}

fn syntax(position: usize, expected: Vec<&'static str>, found: String) -> ParseError {
    ParseError {
        position,
        kind: ParseErrorKind::Syntax { expected, found },
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let two = |next: u8| bytes.get(i + 1) == Some(&next);
        let token = match c {
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'{' => Token::LBrace,
            b'}' => Token::RBrace,
            b',' => Token::Comma,
            b'<' if two(b'=') => Token::Op(CmpOp::Le),
            b'<' => Token::Op(CmpOp::Lt),
            b'>' if two(b'=') => Token::Op(CmpOp::Ge),
            b'>' => Token::Op(CmpOp::Gt),
            b'=' if two(b'=') => Token::Op(CmpOp::Eq),
            b'!' if two(b'=') => Token::Op(CmpOp::Ne),
            b'"' => {
                let mut value = String::new();
                let mut chars = text[i + 1..].char_indices();
                loop {
                    match chars.next() {
                        None => {
                            return Err(syntax(start, vec!["closing '\"'"], "end of input".into()))
                        }
                        Some((off, '"')) => {
                            i += 1 + off + 1;
                            break;
                        }
                        Some((_, '\\')) => match chars.next() {
                            Some((_, ch @ ('"' | '\\'))) => value.push(ch),
                            Some((off, ch)) => {
                                return Err(syntax(
                                    i + 1 + off,
                                    vec!["'\\\"'", "'\\\\'"],
                                    format!("escape '\\{ch}'"),
                                ))
                            }
                            None => {
                                return Err(syntax(
                                    start,
                                    vec!["closing '\"'"],
                                    "end of input".into(),
                                ))
                            }
                        },
                        Some((_, ch)) => value.push(ch),
                    }
                }
                out.push((start, Token::Str(value)));
                continue;
            }
            b'-' | b'0'..=b'9' => {
                let mut j = i + usize::from(c == b'-');
                let digits_start = j;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j == digits_start {
                    return Err(syntax(start, vec!["number"], "'-'".into()));
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    let frac_start = j + 1;
                    j = frac_start;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    if j == frac_start {
                        return Err(syntax(j, vec!["digit"], describe_char(text, j)));
                    }
                }
                let value: f64 = text[start..j]
                    .parse()
                    .map_err(|_| syntax(start, vec!["number"], text[start..j].to_string()))?;
                if !value.is_finite() {
                    return Err(syntax(
                        start,
                        vec!["finite number"],
                        text[start..j].to_string(),
                    ));
                }
                out.push((start, Token::Number(value)));
                i = j;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                let word = &text[i..j];
                let token = match word {
                    "AND" => Token::And,
                    "OR" => Token::Or,
                    "NOT" => Token::Not,
                    "IN" => Token::In,
                    "TRUE" => Token::True,
                    _ => Token::Ident(word.to_string()),
                };
                out.push((start, token));
                i = j;
                continue;
            }
            _ => {
                return Err(syntax(
                    start,
                    vec!["operator", "identifier", "literal", "parenthesis"],
                    describe_char(text, start),
                ))
            }
        };
        i += match token {
            Token::Op(op) => op.symbol().len(),
            _ => 1,
        };
        out.push((start, token));
    }
    out.push((text.len(), Token::End));
    Ok(out)
}

fn describe_char(text: &str, at: usize) -> String {
    match text[at..].chars().next() {
        Some(ch) => format!("{ch:?}"),
        None => "end of input".into(),
    }
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    schema: &'a KpiSchema,
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].1
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].0
    }

    fn advance(&mut self) -> (usize, Token) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: Vec<&'static str>) -> ParseError {
        syntax(self.offset(), expected, self.peek().describe())
    }

    fn expect(&mut self, token: Token, name: &'static str) -> Result<(), ParseError> {
        if *self.peek() == token {
            self.advance();
            Ok(())
        } else {
            Err(self.unexpected(vec![name]))
        }
    }

    fn or(&mut self) -> Result<TargetPredicate, ParseError> {
        let mut lhs = self.and()?;
        while *self.peek() == Token::Or {
            self.advance();
            lhs = TargetPredicate::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<TargetPredicate, ParseError> {
        let mut lhs = self.unary()?;
        while *self.peek() == Token::And {
            self.advance();
            lhs = TargetPredicate::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<TargetPredicate, ParseError> {
        if *self.peek() == Token::Not {
            self.advance();
            return Ok(TargetPredicate::not(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<TargetPredicate, ParseError> {
        match self.peek().clone() {
            Token::LParen => {
                self.advance();
                let inner = self.or()?;
                self.expect(Token::RParen, "\")\"")?;
                Ok(inner)
            }
            Token::True => {
                self.advance();
                Ok(TargetPredicate::True)
            }
            Token::Ident(name) => {
                let at = self.offset();
                self.advance();
                let index = self.schema.index_of(&name).ok_or(ParseError {
                    position: at,
                    kind: ParseErrorKind::UnknownAttribute(name.clone()),
                })?;
                let kind = self.schema.attributes()[index].kind;
                let attr = AttrRef { index, name };
                match self.peek().clone() {
                    Token::Op(op) => {
                        let op_at = self.offset();
                        self.advance();
                        if op.is_ordering() && kind == KpiKind::Categorical {
                            return Err(ParseError {
                                position: op_at,
                                kind: ParseErrorKind::TypeMismatch {
                                    attribute: attr.name,
                                    reason: format!(
                                        "ordering operator {} on a categorical attribute",
                                        op.symbol()
                                    ),
                                },
                            });
                        }
                        let value = self.literal(&attr, kind)?;
                        Ok(TargetPredicate::Compare { attr, op, value })
                    }
                    Token::In => {
                        self.advance();
                        self.expect(Token::LBrace, "\"{\"")?;
                        let mut values = vec![self.literal(&attr, kind)?];
                        while *self.peek() == Token::Comma {
                            self.advance();
                            values.push(self.literal(&attr, kind)?);
                        }
                        self.expect(Token::RBrace, "\"}\"")?;
                        Ok(TargetPredicate::In { attr, values })
                    }
                    _ => Err(self.unexpected(vec!["comparison operator", "IN"])),
                }
            }
            _ => Err(self.unexpected(vec!["\"(\"", "TRUE", "NOT", "attribute"])),
        }
    }

    fn literal(&mut self, attr: &AttrRef, kind: KpiKind) -> Result<Literal, ParseError> {
        let at = self.offset();
        let literal = match self.peek().clone() {
            Token::Number(x) => Literal::Number(x),
            Token::Str(text) => Literal::Category {
                id: self.schema.categories().lookup(&text),
                text,
            },
            _ => return Err(self.unexpected(vec!["number", "string"])),
        };
        let literal_kind = match literal {
            Literal::Number(_) => KpiKind::Numeric,
            Literal::Category { .. } => KpiKind::Categorical,
        };
        if literal_kind != kind {
            return Err(ParseError {
                position: at,
                kind: ParseErrorKind::TypeMismatch {
                    attribute: attr.name.clone(),
                    reason: format!("{kind} attribute compared with a {literal_kind} literal"),
                },
            });
        }
        self.advance();
        Ok(literal)
    }
}

/// Parses `text` against `schema`, resolving attribute names to columns and
/// categorical literals to interned ids.
pub fn parse_predicate(text: &str, schema: &KpiSchema) -> Result<TargetPredicate, ParseError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        schema,
    };
    let predicate = parser.or()?;
    if *parser.peek() != Token::End {
        return Err(parser.unexpected(vec!["AND", "OR", "end of input"]));
    }
    Ok(predicate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targeting::TargetPredicate as P;

    fn schema() -> KpiSchema {
        let mut s = KpiSchema::from_pairs([
            ("arpu", KpiKind::Numeric),
            ("age", KpiKind::Numeric),
            ("region", KpiKind::Categorical),
        ]);
        s.intern("N");
        s
    }

    fn attr(index: usize, name: &str) -> AttrRef {
        AttrRef {
            index,
            name: name.into(),
        }
    }

    #[test]
    fn conjunction_tree() {
        let s = schema();
        let p = parse_predicate("arpu >= 5 AND region == \"N\"", &s).unwrap();
        assert_eq!(
            p,
            P::and(
                P::Compare {
                    attr: attr(0, "arpu"),
                    op: CmpOp::Ge,
                    value: Literal::Number(5.0)
                },
                P::Compare {
                    attr: attr(2, "region"),
                    op: CmpOp::Eq,
                    value: Literal::Category {
                        text: "N".into(),
                        id: s.categories().lookup("N")
                    }
                }
            )
        );
    }

    #[test]
    fn constant_true() {
        assert_eq!(parse_predicate("TRUE", &schema()).unwrap(), P::True);
    }

    #[test]
    fn membership_or_negation() {
        let s = schema();
        let p = parse_predicate("age IN {18,19,20} OR NOT(arpu < 2)", &s).unwrap();
        assert_eq!(
            p,
            P::or(
                P::In {
                    attr: attr(1, "age"),
                    values: vec![
                        Literal::Number(18.0),
                        Literal::Number(19.0),
                        Literal::Number(20.0)
                    ]
                },
                P::not(P::Compare {
                    attr: attr(0, "arpu"),
                    op: CmpOp::Lt,
                    value: Literal::Number(2.0)
                })
            )
        );
    }

    #[test]
    fn precedence_not_and_or() {
        let s = schema();
        let p = parse_predicate("NOT TRUE AND TRUE OR TRUE", &s).unwrap();
        assert_eq!(p, P::or(P::and(P::not(P::True), P::True), P::True));
    }

    #[test]
    fn errors_carry_positions() {
        let s = schema();
        let e = parse_predicate("arpu >", &s).unwrap_err();
        assert_eq!(e.position, 6);
        assert!(matches!(e.kind, ParseErrorKind::Syntax { .. }));

        let e = parse_predicate("arpu >= 5 AND speed > 1", &s).unwrap_err();
        assert_eq!(e.position, 14);
        assert_eq!(e.kind, ParseErrorKind::UnknownAttribute("speed".into()));

        let e = parse_predicate("region < \"N\"", &s).unwrap_err();
        assert_eq!(e.position, 7);
        assert!(matches!(e.kind, ParseErrorKind::TypeMismatch { .. }));

        let e = parse_predicate("arpu == \"N\"", &s).unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::TypeMismatch { .. }));

        let e = parse_predicate("", &s).unwrap_err();
        assert_eq!(e.position, 0);

        let e = parse_predicate("TRUE TRUE", &s).unwrap_err();
        assert_eq!(e.position, 5);

        let e = parse_predicate("region == \"N", &s).unwrap_err();
        assert_eq!(e.position, 10);

        let e = parse_predicate("arpu = 5", &s).unwrap_err();
        assert_eq!(e.position, 5);

        let e = parse_predicate("(TRUE", &s).unwrap_err();
        assert_eq!(e.position, 5);
    }

    #[test]
    fn string_escapes() {
        let mut s = schema();
        s.intern("a\"b");
        let p = parse_predicate(r#"region == "a\"b""#, &s).unwrap();
        match &p {
            P::Compare {
                value: Literal::Category { text, id },
                ..
            } => {
                assert_eq!(text, "a\"b");
                assert!(id.is_some());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p.to_string(), r#"region == "a\"b""#);
    }
}
