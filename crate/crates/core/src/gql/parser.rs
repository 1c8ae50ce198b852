use std::collections::HashMap;

use super::ast::{Direction, NodePattern, PathStep, QueryAst};
use super::QueryError;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Match,
    Return,
    Ident(String),
    Str(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Colon,
    /// `-[`
    ForwardOpen,
    /// `]->`
    ForwardClose,
    /// `<-[`
    BackwardOpen,
    /// `]-`
    BackwardClose,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Match => "MATCH".into(),
            Tok::Return => "RETURN".into(),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Colon => "`:`".into(),
            Tok::ForwardOpen => "`-[`".into(),
            Tok::ForwardClose => "`]->`".into(),
            Tok::BackwardOpen => "`<-[`".into(),
            Tok::BackwardClose => "`]-`".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b'{' => {
                i += 1;
                Tok::LBrace
            }
            b'}' => {
                i += 1;
                Tok::RBrace
            }
            b':' => {
                i += 1;
                Tok::Colon
            }
            b'-' if bytes.get(i + 1) == Some(&b'[') => {
                i += 2;
                Tok::ForwardOpen
            }
            b'<' if bytes[i..].starts_with(b"<-[") => {
                i += 3;
                Tok::BackwardOpen
            }
            b']' if bytes[i..].starts_with(b"]->") => {
                i += 3;
                Tok::ForwardClose
            }
            b']' if bytes.get(i + 1) == Some(&b'-') => {
                i += 2;
                Tok::BackwardClose
            }
            b'"' => {
                i += 1;
                let mut value = String::new();
                loop {
                    let Some(ch) = text[i..].chars().next() else {
                        return Err(QueryError::Lexical {
                            message: "unterminated string".into(),
                            position: start,
                        });
                    };
                    match ch {
                        '"' => {
                            i += 1;
                            break;
                        }
                        '\\' => match bytes.get(i + 1) {
                            Some(b'"') => {
                                value.push('"');
                                i += 2;
                            }
                            Some(b'\\') => {
                                value.push('\\');
                                i += 2;
                            }
                            _ => {
                                return Err(QueryError::Lexical {
                                    message: "invalid escape sequence".into(),
                                    position: i,
                                })
                            }
                        },
                        _ => {
                            value.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                Tok::Str(value)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                match &text[start..i] {
                    "MATCH" => Tok::Match,
                    "RETURN" => Tok::Return,
                    ident => Tok::Ident(ident.to_string()),
                }
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(QueryError::Lexical {
                    message: format!("unexpected character {ch:?}"),
                    position: start,
                });
            }
        };
        out.push((tok, start));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.at).map(|(t, _)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.at).map_or(self.end, |(_, p)| *p)
    }

    fn unexpected(&self, expected: &str) -> QueryError {
        QueryError::Syntax {
            expected: expected.to_string(),
            found: self.peek().map_or_else(|| "end of input".to_string(), Tok::describe),
            position: self.position(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), QueryError> {
        if self.peek() == Some(&tok) {
            self.at += 1;
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize), QueryError> {
        match self.tokens.get(self.at) {
            Some((Tok::Ident(s), p)) => {
                let out = (s.clone(), *p);
                self.at += 1;
                Ok(out)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn node(&mut self) -> Result<(NodePattern, usize), QueryError> {
        let position = self.position();
        self.expect(Tok::LParen)?;
        let (variable, _) = self.ident("variable")?;
        let mut bound_name = None;
        if self.peek() == Some(&Tok::LBrace) {
            self.at += 1;
            let (key, key_pos) = self.ident("`name`")?;
            if key != "name" {
                return Err(QueryError::Syntax {
                    expected: "`name`".into(),
                    found: format!("identifier `{key}`"),
                    position: key_pos,
                });
            }
            self.expect(Tok::Colon)?;
            match self.peek() {
                Some(Tok::Str(s)) => {
                    bound_name = Some(s.clone());
                    self.at += 1;
                }
                _ => return Err(self.unexpected("string")),
            }
            self.expect(Tok::RBrace)?;
        }
        self.expect(Tok::RParen)?;
        Ok((NodePattern { variable, bound_name }, position))
    }

    fn edge(&mut self) -> Result<Option<(String, Direction)>, QueryError> {
        let (close, direction) = match self.peek() {
            Some(Tok::ForwardOpen) => (Tok::ForwardClose, Direction::Forward),
            Some(Tok::BackwardOpen) => (Tok::BackwardClose, Direction::Backward),
            _ => return Ok(None),
        };
        self.at += 1;
        let (relation, _) = self.ident("relation name")?;
        self.expect(close)?;
        Ok(Some((relation, direction)))
    }
}

/// Parses `MATCH <chain> RETURN <var>`. Errors carry byte offsets into `text`.
pub fn parse_query(text: &str) -> Result<QueryAst, QueryError> {
    let mut p = Parser { tokens: lex(text)?, at: 0, end: text.len() };
    p.expect(Tok::Match)?;
    let (first, _) = p.node()?;
    let mut nodes = vec![first.clone()];
    let mut bindings: HashMap<String, Option<String>> = HashMap::new();
    bindings.insert(first.variable.clone(), first.bound_name.clone());

    let mut steps = Vec::new();
    let mut source = first;
    while let Some((relation, direction)) = p.edge()? {
        let (target, position) = p.node()?;
        match bindings.get(&target.variable) {
            Some(previous) if *previous != target.bound_name => {
                return Err(QueryError::ConflictingBinding { variable: target.variable, position })
            }
            _ => {
                bindings.insert(target.variable.clone(), target.bound_name.clone());
            }
        }
        nodes.push(target.clone());
        steps.push(PathStep { source: source.clone(), relation, direction, target: target.clone() });
        source = target;
    }
    if steps.is_empty() && !matches!(p.peek(), Some(Tok::Return)) {
        return Err(p.unexpected("`-[`, `<-[` or RETURN"));
    }
    p.expect(Tok::Return)?;
    let (returned, return_pos) = p.ident("variable")?;
    if p.peek().is_some() {
        return Err(p.unexpected("end of input"));
    }
    if !bindings.contains_key(&returned) {
        return Err(QueryError::UnboundVariable { variable: returned, position: return_pos });
    }
    if steps.is_empty() {
        return Err(QueryError::EmptyPattern { position: return_pos });
    }
    QueryAst::new(steps, vec![returned])
}
