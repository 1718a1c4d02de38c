//! Concrete syntax for global properties.
//!
//! Grammar (whitespace-insensitive, `&` binds loosest):
//! ```text
//! global := star | global "&" global
//! star   := "(" local ")" "*"
//! local  := "eps" | event "." local | local ";" local | local "&" local | union
//! union  := branch ("+" branch)+
//! branch := event "." local
//! event  := "s:"ID | "a:"ID | "c!"ID | "c?"ID | "tick" | "end"
//! ```
//! Combinator calls (`BE(ev, m)`, `CND(ev, local)`, `CASE{ev: local, ...}`,
//! `BME({ev, ...}, m)`, `POW({ev, ...}, k)`, ...) are accepted wherever a
//! local property may appear and are expanded immediately; they require an
//! alphabet context, so they are only available via [`parse_property_in`].

use std::collections::BTreeSet;
use std::fmt;

use crate::combinators::{self, CombinatorEnv};
use crate::prop::{Event, GlobalProp, LocalKind, LocalProp};
use crate::trace::Action;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    LParen,
    RParen,
    LBrace,
    RBrace,
    Star,
    Amp,
    Plus,
    Semi,
    Dot,
    Comma,
    Colon,
    Ident(String),
    Event(Event),
    Num(usize),
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

type Spanned = (Tok, usize, usize);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn err(&self, message: String) -> ParseError {
        ParseError { line: self.line, col: self.col, message }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn word(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.bump();
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        while self.pos < self.src.len() {
            let (line, col) = (self.line, self.col);
            let c = self.src[self.pos];
            if c.is_ascii_whitespace() {
                self.bump();
                continue;
            }
            let tok = match c {
                b'(' => {
                    self.bump();
                    Tok::LParen
                }
                b')' => {
                    self.bump();
                    Tok::RParen
                }
                b'{' => {
                    self.bump();
                    Tok::LBrace
                }
                b'}' => {
                    self.bump();
                    Tok::RBrace
                }
                b'*' => {
                    self.bump();
                    Tok::Star
                }
                b'&' => {
                    self.bump();
                    Tok::Amp
                }
                b'+' => {
                    self.bump();
                    Tok::Plus
                }
                b';' => {
                    self.bump();
                    Tok::Semi
                }
                b'.' => {
                    self.bump();
                    Tok::Dot
                }
                b',' => {
                    self.bump();
                    Tok::Comma
                }
                b':' => {
                    self.bump();
                    Tok::Colon
                }
                b'0'..=b'9' => {
                    let w = self.word();
                    let n = w
                        .parse::<usize>()
                        .map_err(|_| self.err(format!("bad number `{w}`")))?;
                    Tok::Num(n)
                }
                _ if c.is_ascii_alphabetic() => {
                    let w = self.word();
                    // Event prefixes s: a: c! c? consume the following name.
                    let next = self.src.get(self.pos).copied();
                    match (w.as_str(), next) {
                        ("s", Some(b':')) | ("a", Some(b':')) => {
                            self.bump();
                            let name = self.word();
                            if name.is_empty() {
                                return Err(self.err(format!("missing name after `{w}:`")));
                            }
                            let ev = if w == "s" {
                                Action::sensor(&name)
                            } else {
                                Action::actuator(&name)
                            };
                            Tok::Event(ev)
                        }
                        ("c", Some(b'!')) | ("c", Some(b'?')) => {
                            let dir = self.bump();
                            let name = self.word();
                            if name.is_empty() {
                                return Err(self.err("missing channel name".to_string()));
                            }
                            let ev = if dir == b'!' {
                                Action::send(&name)
                            } else {
                                Action::recv(&name)
                            };
                            Tok::Event(ev)
                        }
                        ("tick", _) => Tok::Event(Action::tick()),
                        ("end", _) => Tok::Event(Action::end()),
                        _ => Tok::Ident(w),
                    }
                }
                _ => return Err(self.err(format!("unexpected character `{}`", c as char))),
            };
            out.push((tok, line, col));
        }
        Ok(out)
    }
}

struct Parser<'e> {
    toks: Vec<Spanned>,
    pos: usize,
    env: Option<&'e CombinatorEnv>,
}

impl<'e> Parser<'e> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|&(_, l, c)| (l, c))
            .unwrap_or((1, 1))
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError { line, col, message: message.into() }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            Some(t) => Err(ParseError {
                line: self.toks[self.pos - 1].1,
                col: self.toks[self.pos - 1].2,
                message: format!("expected {what}, found {t:?}"),
            }),
            None => Err(self.err(format!("expected {what}, found end of input"))),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn global(&mut self) -> Result<GlobalProp, ParseError> {
        let mut e = self.star_term()?;
        while self.eat(&Tok::Amp) {
            let rhs = self.star_term()?;
            e = GlobalProp::inter(e, rhs);
        }
        Ok(e)
    }

    fn star_term(&mut self) -> Result<GlobalProp, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let p = self.local_amp()?;
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::Star, "`*`")?;
        Ok(GlobalProp::Star(p))
    }

    fn local_amp(&mut self) -> Result<LocalProp, ParseError> {
        let mut p = self.local_seq()?;
        while self.eat(&Tok::Amp) {
            let rhs = self.local_seq()?;
            p = LocalProp::inter(p, rhs);
        }
        Ok(p)
    }

    fn local_seq(&mut self) -> Result<LocalProp, ParseError> {
        let mut p = self.local_union()?;
        while self.eat(&Tok::Semi) {
            let rhs = self.local_union()?;
            p = LocalProp::seq(p, rhs);
        }
        Ok(p)
    }

    fn local_union(&mut self) -> Result<LocalProp, ParseError> {
        let first = self.local_prefix()?;
        if self.peek() != Some(&Tok::Plus) {
            return Ok(first);
        }
        let mut branches = self.as_branches(first)?;
        while self.eat(&Tok::Plus) {
            let next = self.local_prefix()?;
            branches.extend(self.as_branches(next)?);
        }
        Ok(LocalProp::union(branches))
    }

    fn as_branches(&self, p: LocalProp) -> Result<Vec<(Event, LocalProp)>, ParseError> {
        match p.kind() {
            LocalKind::Union(bs) => Ok(bs.clone()),
            _ => Err(self.err("union branches must be event-guarded")),
        }
    }

    fn local_prefix(&mut self) -> Result<LocalProp, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Ident(w)) if w == "eps" => {
                self.pos += 1;
                Ok(LocalProp::epsilon())
            }
            Some(Tok::Event(ev)) => {
                self.pos += 1;
                if self.eat(&Tok::Dot) {
                    let rest = self.local_prefix()?;
                    Ok(LocalProp::union1(ev, rest))
                } else {
                    Ok(LocalProp::union1(ev, LocalProp::epsilon()))
                }
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let p = self.local_amp()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(p)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                self.combinator(&name)
            }
            _ => Err(self.err("expected a local property")),
        }
    }

    fn with_env(&self, name: &str) -> Result<&'e CombinatorEnv, ParseError> {
        self.env.ok_or_else(|| {
            self.err(format!(
                "combinator `{name}` needs an alphabet context (maxa and event set)"
            ))
        })
    }

    fn arg_event(&mut self) -> Result<Event, ParseError> {
        match self.next() {
            Some(Tok::Event(ev)) => Ok(ev),
            _ => Err(self.err("expected an event")),
        }
    }

    fn arg_num(&mut self) -> Result<usize, ParseError> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(n),
            _ => Err(self.err("expected a number")),
        }
    }

    fn event_set(&mut self) -> Result<BTreeSet<Event>, ParseError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut out = BTreeSet::new();
        loop {
            out.insert(self.arg_event()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RBrace, "`}`")?;
        Ok(out)
    }

    fn lift(&self, r: Result<LocalProp, combinators::CombinatorError>) -> Result<LocalProp, ParseError> {
        r.map_err(|e| self.err(e.to_string()))
    }

    fn combinator(&mut self, name: &str) -> Result<LocalProp, ParseError> {
        if name == "CASE" {
            let env = self.with_env(name)?;
            self.expect(Tok::LBrace, "`{`")?;
            let mut triggers = Vec::new();
            loop {
                let ev = self.arg_event()?;
                self.expect(Tok::Colon, "`:`")?;
                let p = self.local_amp()?;
                triggers.push((ev, p));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::RBrace, "`}`")?;
            return self.lift(combinators::case_cnd(env, &triggers));
        }
        match name {
            "BE" | "BP" | "BA" => {
                let env = self.with_env(name)?;
                self.expect(Tok::LParen, "`(`")?;
                let ev = self.arg_event()?;
                self.expect(Tok::Comma, "`,`")?;
                let m = self.arg_num()?;
                self.expect(Tok::RParen, "`)`")?;
                self.lift(match name {
                    "BE" => combinators::be(env, &ev, m),
                    "BP" => combinators::bp(env, &ev, m),
                    _ => combinators::ba(env, &ev, m),
                })
            }
            "CND" => {
                let env = self.with_env(name)?;
                self.expect(Tok::LParen, "`(`")?;
                let ev = self.arg_event()?;
                self.expect(Tok::Comma, "`,`")?;
                let p = self.local_amp()?;
                self.expect(Tok::RParen, "`)`")?;
                self.lift(combinators::cnd(env, &ev, &p))
            }
            "PCND" => {
                let env = self.with_env(name)?;
                self.expect(Tok::LParen, "`(`")?;
                let ev = self.arg_event()?;
                self.expect(Tok::Comma, "`,`")?;
                let p = self.local_amp()?;
                self.expect(Tok::Comma, "`,`")?;
                let m = self.arg_num()?;
                self.expect(Tok::RParen, "`)`")?;
                self.lift(combinators::pcnd(env, &ev, &p, m))
            }
            "CBE" | "CBP" | "CBA" | "MinD" | "MaxD" => {
                let env = self.with_env(name)?;
                self.expect(Tok::LParen, "`(`")?;
                let e1 = self.arg_event()?;
                self.expect(Tok::Comma, "`,`")?;
                let e2 = self.arg_event()?;
                self.expect(Tok::Comma, "`,`")?;
                let m = self.arg_num()?;
                self.expect(Tok::Comma, "`,`")?;
                let n = self.arg_num()?;
                self.expect(Tok::RParen, "`)`")?;
                self.lift(match name {
                    "CBE" => combinators::cbe(env, &e1, &e2, m, n),
                    "CBP" => combinators::cbp(env, &e1, &e2, m, n),
                    "CBA" => combinators::cba(env, &e1, &e2, m, n),
                    "MinD" => combinators::min_d(env, &e1, &e2, m, n),
                    _ => combinators::max_d(env, &e1, &e2, m, n),
                })
            }
            "BR" | "BI" => {
                let env = self.with_env(name)?;
                self.expect(Tok::LParen, "`(`")?;
                let e1 = self.arg_event()?;
                self.expect(Tok::Comma, "`,`")?;
                let e2 = self.arg_event()?;
                self.expect(Tok::Comma, "`,`")?;
                let e3 = self.arg_event()?;
                self.expect(Tok::Comma, "`,`")?;
                let m = self.arg_num()?;
                self.expect(Tok::Comma, "`,`")?;
                let n = self.arg_num()?;
                self.expect(Tok::RParen, "`)`")?;
                self.lift(match name {
                    "BR" => combinators::br(env, &e1, &e2, &e3, m, n),
                    _ => combinators::bi(env, &e1, &e2, &e3, m, n),
                })
            }
            "BME" => {
                let env = self.with_env(name)?;
                self.expect(Tok::LParen, "`(`")?;
                let evs = self.event_set()?;
                self.expect(Tok::Comma, "`,`")?;
                let m = self.arg_num()?;
                self.expect(Tok::RParen, "`)`")?;
                self.lift(combinators::bme(env, &evs, m))
            }
            "POW" => {
                self.expect(Tok::LParen, "`(`")?;
                let evs = self.event_set()?;
                self.expect(Tok::Comma, "`,`")?;
                let k = self.arg_num()?;
                self.expect(Tok::RParen, "`)`")?;
                self.lift(combinators::power_upto(&evs, k))
            }
            _ => Err(self.err(format!("unknown combinator `{name}`"))),
        }
    }
}

fn parse(text: &str, env: Option<&CombinatorEnv>) -> Result<GlobalProp, ParseError> {
    let toks = Lexer::new(text).tokens()?;
    let mut p = Parser { toks, pos: 0, env };
    let g = p.global()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input after property"));
    }
    Ok(g)
}

/// Parses the core grammar; combinator calls are rejected because they need
/// an alphabet context.
pub fn parse_property(text: &str) -> Result<GlobalProp, ParseError> {
    parse(text, None)
}

/// Parses the full grammar, expanding combinator calls in `env`.
pub fn parse_property_in(text: &str, env: &CombinatorEnv) -> Result<GlobalProp, ParseError> {
    parse(text, Some(env))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str) -> Event {
        Action::parse(s).unwrap()
    }

    #[test]
    fn parses_simple_star() {
        let e = parse_property("(s:l1 . end)*").unwrap();
        let expect = GlobalProp::Star(LocalProp::union1(ev("s:l1"), LocalProp::end_eps()));
        assert_eq!(e, expect);
    }

    #[test]
    fn parses_global_intersection() {
        let e = parse_property("(end)* & (end)*").unwrap();
        let one = GlobalProp::Star(LocalProp::end_eps());
        assert_eq!(e, GlobalProp::inter(one.clone(), one));
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_property("(s:l1 . )").is_err());
        assert!(parse_property("(s:l1 . end)").is_err());
        assert!(parse_property("").is_err());
        assert!(parse_property("(end)* extra").is_err());
    }

    #[test]
    fn parses_union_seq_inter() {
        let e = parse_property("(s:l1 . end + s:h1 . end)*").unwrap();
        let expect = GlobalProp::Star(LocalProp::union(vec![
            (ev("s:l1"), LocalProp::end_eps()),
            (ev("s:h1"), LocalProp::end_eps()),
        ]));
        assert_eq!(e, expect);

        let e = parse_property("(end ; end)*").unwrap();
        let expect = GlobalProp::Star(LocalProp::seq(
            LocalProp::end_eps(),
            LocalProp::end_eps(),
        ));
        assert_eq!(e, expect);

        let e = parse_property("(end & end)*").unwrap();
        let expect = GlobalProp::Star(LocalProp::inter(
            LocalProp::end_eps(),
            LocalProp::end_eps(),
        ));
        assert_eq!(e, expect);
    }

    #[test]
    fn union_branches_must_be_guarded() {
        assert!(parse_property("(eps + end)*").is_err());
    }

    #[test]
    fn combinators_need_env() {
        let err = parse_property("(BE(s:x, 1))*").unwrap_err();
        assert!(err.message.contains("alphabet context"));
    }

    #[test]
    fn combinator_expansion_matches_direct_call() {
        let env = CombinatorEnv::new(2, [ev("s:x"), ev("s:y"), Action::end()]).unwrap();
        let e = parse_property_in("(CBP(s:x, s:y, 1, 2))*", &env).unwrap();
        let direct =
            GlobalProp::Star(combinators::cbp(&env, &ev("s:x"), &ev("s:y"), 1, 2).unwrap());
        assert_eq!(e, direct);

        let e = parse_property_in("(BME({s:x, s:y}, 1))*", &env).unwrap();
        let set = BTreeSet::from([ev("s:x"), ev("s:y")]);
        let direct = GlobalProp::Star(combinators::bme(&env, &set, 1).unwrap());
        assert_eq!(e, direct);

        let e = parse_property_in("(CASE{s:x: end, s:y: s:x . end})*", &env).unwrap();
        let direct = GlobalProp::Star(
            combinators::case_cnd(
                &env,
                &[
                    (ev("s:x"), LocalProp::end_eps()),
                    (ev("s:y"), LocalProp::union1(ev("s:x"), LocalProp::end_eps())),
                ],
            )
            .unwrap(),
        );
        assert_eq!(e, direct);
    }

    #[test]
    fn print_parse_round_trip_preserves_size() {
        let texts = [
            "(s:l1 . end)*",
            "(s:l1 . end + s:h1 . a:x . end)*",
            "(end ; s:l1 . end)*",
            "(end & end)* & (tick . end)*",
        ];
        for t in texts {
            let e = parse_property(t).unwrap();
            let printed = e.to_string();
            let e2 = parse_property(&printed).unwrap();
            assert_eq!(e, e2, "round trip failed for {t} -> {printed}");
            assert_eq!(e.prop_size(), e2.prop_size());
        }
    }
}
