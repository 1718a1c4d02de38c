//! Text format for controllers.
//!
//! ```text
//! DEF  := NAME "=" "tick" ("." "tick")* "." BODY
//! BODY := "sens" "{" (EV "->" BODY)+ "}" "else" BODY
//!       | "in" "{" (c?NAME "->" BODY)+ "}" "else" BODY
//!       | "out" c!NAME "." BODY "else" BODY
//!       | "act" a:NAME "." BODY
//!       | "end" "." NAME
//! ```
//!
//! Sensor guards may be written bare (`l3`) or tagged (`s:l3`). Branches may
//! be separated by `;` or `,`. Raw mode additionally permits `tick "." BODY`
//! anywhere and lifts phase checks, for modeling compromised controllers.

use std::fmt;

use super::{validate, validate_raw, Defs, Proc};
use crate::trace::{Action, ActionKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtrlParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for CtrlParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for CtrlParseError {}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Event(Action),
    Tick,
    End,
    Sens,
    In,
    Out,
    Act,
    Else,
    Eq,
    Dot,
    Arrow,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Sep,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn err(&self, message: impl Into<String>) -> CtrlParseError {
        CtrlParseError { line: self.line, col: self.col, message: message.into() }
    }

    fn bump(&mut self) -> u8 {
        let b = self.src[self.pos];
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        b
    }

    fn lex(mut self) -> Result<Vec<(Tok, usize, usize)>, CtrlParseError> {
        let mut out = Vec::new();
        while self.pos < self.src.len() {
            let (line, col) = (self.line, self.col);
            let b = self.src[self.pos];
            match b {
                b' ' | b'\t' | b'\r' | b'\n' => {
                    self.bump();
                    continue;
                }
                b'#' => {
                    while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                        self.bump();
                    }
                    continue;
                }
                b'=' => {
                    self.bump();
                    out.push((Tok::Eq, line, col));
                }
                b'.' => {
                    self.bump();
                    out.push((Tok::Dot, line, col));
                }
                b'{' => {
                    self.bump();
                    out.push((Tok::LBrace, line, col));
                }
                b'}' => {
                    self.bump();
                    out.push((Tok::RBrace, line, col));
                }
                b'(' => {
                    self.bump();
                    out.push((Tok::LParen, line, col));
                }
                b')' => {
                    self.bump();
                    out.push((Tok::RParen, line, col));
                }
                b';' | b',' => {
                    self.bump();
                    out.push((Tok::Sep, line, col));
                }
                b'-' => {
                    self.bump();
                    if self.pos < self.src.len() && self.src[self.pos] == b'>' {
                        self.bump();
                        out.push((Tok::Arrow, line, col));
                    } else {
                        return Err(self.err("expected -> after -"));
                    }
                }
                _ if b.is_ascii_alphabetic() || b == b'_' => {
                    let start = self.pos;
                    while self.pos < self.src.len()
                        && (self.src[self.pos].is_ascii_alphanumeric()
                            || self.src[self.pos] == b'_')
                    {
                        self.bump();
                    }
                    let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    // Tagged event: s:, a:, c!, c? followed by a name.
                    if word.len() == 1 && self.pos < self.src.len() {
                        let tag = self.src[self.pos];
                        let kind = match (word, tag) {
                            ("s", b':') => Some(ActionKind::SensorRead),
                            ("a", b':') => Some(ActionKind::ActuatorCmd),
                            ("c", b'!') => Some(ActionKind::ChanSend),
                            ("c", b'?') => Some(ActionKind::ChanRecv),
                            _ => None,
                        };
                        if let Some(kind) = kind {
                            self.bump();
                            let nstart = self.pos;
                            while self.pos < self.src.len()
                                && (self.src[self.pos].is_ascii_alphanumeric()
                                    || self.src[self.pos] == b'_')
                            {
                                self.bump();
                            }
                            if nstart == self.pos {
                                return Err(self.err("expected a name after the event tag"));
                            }
                            let name =
                                std::str::from_utf8(&self.src[nstart..self.pos]).unwrap();
                            out.push((Tok::Event(Action { kind, name: name.into() }), line, col));
                            continue;
                        }
                    }
                    let tok = match word {
                        "tick" => Tok::Tick,
                        "end" => Tok::End,
                        "sens" => Tok::Sens,
                        "in" => Tok::In,
                        "out" => Tok::Out,
                        "act" => Tok::Act,
                        "else" => Tok::Else,
                        _ => Tok::Ident(word.into()),
                    };
                    out.push((tok, line, col));
                }
                _ => return Err(self.err(format!("unexpected character {:?}", b as char))),
            }
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    raw: bool,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn loc(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|(_, l, c)| (*l, *c))
            .unwrap_or((1, 1))
    }

    fn err(&self, message: impl Into<String>) -> CtrlParseError {
        let (line, col) = self.loc();
        CtrlParseError { line, col, message: message.into() }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), CtrlParseError> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err(format!("expected {what}")))
            }
        }
    }

    fn defs(&mut self) -> Result<(String, Defs), CtrlParseError> {
        let mut defs = Defs::default();
        let mut first = None;
        while self.peek().is_some() {
            let Some(Tok::Ident(name)) = self.next() else {
                self.pos -= 1;
                return Err(self.err("expected a process name"));
            };
            self.expect(Tok::Eq, "= after the process name")?;
            self.expect(Tok::Tick, "a leading tick (equations are time-guarded)")?;
            self.expect(Tok::Dot, ". after tick")?;
            let mut ticks = 1;
            while self.peek() == Some(&Tok::Tick) {
                self.next();
                self.expect(Tok::Dot, ". after tick")?;
                ticks += 1;
            }
            let mut body = self.body()?;
            for _ in 0..ticks {
                body = Proc::Tick(Box::new(body));
            }
            if defs.0.insert(name.clone(), body).is_some() {
                return Err(self.err(format!("process {name} is defined twice")));
            }
            first.get_or_insert(name);
        }
        match first {
            Some(f) => Ok((f, defs)),
            None => Err(self.err("empty controller definition")),
        }
    }

    fn body(&mut self) -> Result<Proc, CtrlParseError> {
        match self.next() {
            Some(Tok::LParen) => {
                let b = self.body()?;
                self.expect(Tok::RParen, ") to close the group")?;
                Ok(b)
            }
            Some(Tok::Tick) if self.raw => {
                self.expect(Tok::Dot, ". after tick")?;
                Ok(Proc::Tick(Box::new(self.body()?)))
            }
            Some(Tok::Sens) => {
                let branches = self.branch_block(ActionKind::SensorRead)?;
                self.expect(Tok::Else, "else with the sensing timeout")?;
                Ok(Proc::SensTimeout { branches, timeout: Box::new(self.body()?) })
            }
            Some(Tok::In) => {
                let branches = self.branch_block(ActionKind::ChanRecv)?;
                self.expect(Tok::Else, "else with the input timeout")?;
                Ok(Proc::ChanInTimeout { branches, timeout: Box::new(self.body()?) })
            }
            Some(Tok::Out) => {
                let channel = match self.next() {
                    Some(Tok::Event(a)) if a.kind == ActionKind::ChanSend => a,
                    _ => {
                        self.pos = self.pos.saturating_sub(1);
                        return Err(self.err("expected c!name after out"));
                    }
                };
                self.expect(Tok::Dot, ". after the channel")?;
                let then = self.body()?;
                self.expect(Tok::Else, "else with the output timeout")?;
                Ok(Proc::ChanOutTimeout {
                    channel,
                    then: Box::new(then),
                    timeout: Box::new(self.body()?),
                })
            }
            Some(Tok::Act) => {
                let actuator = match self.next() {
                    Some(Tok::Event(a)) if a.kind == ActionKind::ActuatorCmd => a,
                    _ => {
                        self.pos = self.pos.saturating_sub(1);
                        return Err(self.err("expected a:name after act"));
                    }
                };
                self.expect(Tok::Dot, ". after the command")?;
                Ok(Proc::ActOut { actuator, then: Box::new(self.body()?) })
            }
            Some(Tok::End) => {
                self.expect(Tok::Dot, ". after end")?;
                match self.next() {
                    Some(Tok::Ident(x)) => Ok(Proc::EndThen(x)),
                    _ => {
                        self.pos = self.pos.saturating_sub(1);
                        Err(self.err("expected a process name after end ."))
                    }
                }
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err("expected sens, in, out, act or end"))
            }
        }
    }

    fn branch_block(
        &mut self,
        guard_kind: ActionKind,
    ) -> Result<Vec<(Action, Proc)>, CtrlParseError> {
        self.expect(Tok::LBrace, "{ with the branches")?;
        let mut branches = Vec::new();
        loop {
            match self.next() {
                Some(Tok::RBrace) => break,
                Some(Tok::Sep) => continue,
                Some(Tok::Event(a)) if a.kind == guard_kind => {
                    self.expect(Tok::Arrow, "-> after the guard")?;
                    branches.push((a, self.body()?));
                }
                Some(Tok::Ident(name)) if guard_kind == ActionKind::SensorRead => {
                    self.expect(Tok::Arrow, "-> after the guard")?;
                    branches.push((Action { kind: guard_kind, name }, self.body()?));
                }
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return Err(self.err("expected a branch guard or }"));
                }
            }
        }
        if branches.is_empty() {
            return Err(self.err("a timeout block needs at least one branch"));
        }
        Ok(branches)
    }
}

fn parse(text: &str, raw: bool) -> Result<(Proc, Defs), CtrlParseError> {
    let toks = Lexer::new(text).lex()?;
    let mut parser = Parser { toks, pos: 0, raw };
    let (first, defs) = parser.defs()?;
    let p = Proc::Var(first);
    let check = if raw { validate_raw(&p, &defs) } else { validate(&p, &defs) };
    check.map_err(|e| CtrlParseError { line: 1, col: 1, message: e.to_string() })?;
    Ok((p, defs))
}

/// Parses a phase-checked controller.
pub fn parse_controller(text: &str) -> Result<(Proc, Defs), CtrlParseError> {
    parse(text, false)
}

/// Parses a controller without phase checks (compromised controllers).
pub fn parse_controller_raw(text: &str) -> Result<(Proc, Defs), CtrlParseError> {
    parse(text, true)
}
