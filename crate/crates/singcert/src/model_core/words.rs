//! Bracket words over the field indices `0..=m` (index 0 is the drift).

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BracketWord {
    Field(usize),
    Bracket(Box<BracketWord>, Box<BracketWord>),
}

impl BracketWord {
    pub fn field(i: usize) -> Self {
        BracketWord::Field(i)
    }

    pub fn bracket(a: BracketWord, b: BracketWord) -> Self {
        BracketWord::Bracket(Box::new(a), Box::new(b))
    }

    /// `[i,j]`
    pub fn pair(i: usize, j: usize) -> Self {
        Self::bracket(Self::field(i), Self::field(j))
    }

    /// `[i,[j,k]]`
    pub fn triple(i: usize, j: usize, k: usize) -> Self {
        Self::bracket(Self::field(i), Self::pair(j, k))
    }

    pub fn depth(&self) -> usize {
        match self {
            BracketWord::Field(_) => 1,
            BracketWord::Bracket(a, b) => a.depth() + b.depth(),
        }
    }

    pub fn max_index(&self) -> usize {
        match self {
            BracketWord::Field(i) => *i,
            BracketWord::Bracket(a, b) => a.max_index().max(b.max_index()),
        }
    }
}

impl fmt::Display for BracketWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BracketWord::Field(i) => write!(f, "{i}"),
            BracketWord::Bracket(a, b) => write!(f, "[{a},{b}]"),
        }
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Option<()> {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            Some(())
        } else {
            None
        }
    }

    fn word(&mut self) -> Option<BracketWord> {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&b'[') {
            self.pos += 1;
            let a = self.word()?;
            self.expect(b',')?;
            let b = self.word()?;
            self.expect(b']')?;
            Some(BracketWord::bracket(a, b))
        } else {
            let start = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return None;
            }
            std::str::from_utf8(&self.s[start..self.pos]).ok()?.parse().ok().map(BracketWord::Field)
        }
    }
}

impl FromStr for BracketWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser { s: s.as_bytes(), pos: 0 };
        let w = p.word().ok_or_else(|| Error::UnresolvedWord(s.to_string()))?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(Error::UnresolvedWord(s.to_string()));
        }
        Ok(w)
    }
}
