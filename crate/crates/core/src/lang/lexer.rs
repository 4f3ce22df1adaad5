use super::ast::{Pos, Redirect, Word, WordPart};
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(i) => format!("integer `{i}`"),
            Tok::Float(f) => format!("number `{f}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: Pos,
    /// Char offset of the token start, used to rewind before raw scanning.
    pub offset: usize,
}

const SYMBOLS: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "(", ")", "{", "}", "[", "]", "<", ">", ",", ";", "=",
    "+", "-", "*", "/", "%", "!",
];

pub(crate) struct Lexer {
    src: Vec<char>,
    i: usize,
    line: u32,
    col: u32,
}

impl Lexer {
    pub(crate) fn new(src: &str) -> Self {
        Lexer { src: src.chars().collect(), i: 0, line: 1, col: 1 }
    }

    fn peek(&self) -> Option<char> {
        self.src.get(self.i).copied()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src.get(self.i + n).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.src.get(self.i).copied()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Pos {
        Pos::new(self.line, self.col)
    }

    /// Rewind to an earlier offset. Line/column are recomputed from the start.
    pub(crate) fn rewind(&mut self, offset: usize) {
        let (mut line, mut col) = (1, 1);
        for &c in &self.src[..offset] {
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        self.i = offset;
        self.line = line;
        self.col = col;
    }

    fn skip_trivia(&mut self) -> Result<(), ParseError> {
        loop {
            match (self.peek(), self.peek_at(1)) {
                (Some(c), _) if c.is_whitespace() => {
                    self.bump();
                }
                (Some('#'), _) | (Some('/'), Some('/')) => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                (Some('/'), Some('*')) => {
                    let start = self.pos();
                    self.bump();
                    self.bump();
                    loop {
                        match (self.peek(), self.peek_at(1)) {
                            (Some('*'), Some('/')) => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            (Some(_), _) => {
                                self.bump();
                            }
                            (None, _) => return Err(ParseError::syntax(start, "unterminated comment")),
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    pub(crate) fn next_token(&mut self) -> Result<Token, ParseError> {
        self.skip_trivia()?;
        let pos = self.pos();
        let offset = self.i;
        let Some(c) = self.peek() else {
            return Ok(Token { tok: Tok::Eof, pos, offset });
        };
        let tok = if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(c) = self.peek() {
                if c.is_alphanumeric() || c == '_' {
                    s.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
            Tok::Ident(s)
        } else if c.is_ascii_digit() {
            self.number(pos)?
        } else if c == '"' {
            Tok::Str(self.quoted('"', pos)?)
        } else {
            let rest: String = self.src[self.i..(self.i + 2).min(self.src.len())].iter().collect();
            let sym = SYMBOLS
                .iter()
                .find(|s| rest.starts_with(*s))
                .ok_or_else(|| ParseError::syntax(pos, format!("unexpected character `{c}`")))?;
            for _ in 0..sym.len() {
                self.bump();
            }
            Tok::Sym(sym)
        };
        Ok(Token { tok, pos, offset })
    }

    fn number(&mut self, pos: Pos) -> Result<Tok, ParseError> {
        let mut s = String::new();
        let mut is_float = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                s.push(c);
            } else if c == '.' && !is_float && self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) {
                is_float = true;
                s.push(c);
            } else if (c == 'e' || c == 'E')
                && (self.peek_at(1).is_some_and(|d| d.is_ascii_digit())
                    || (matches!(self.peek_at(1), Some('+' | '-'))
                        && self.peek_at(2).is_some_and(|d| d.is_ascii_digit())))
            {
                is_float = true;
                s.push(c);
                self.bump();
                if let Some(sign @ ('+' | '-')) = self.peek() {
                    s.push(sign);
                    self.bump();
                }
                continue;
            } else {
                break;
            }
            self.bump();
        }
        if is_float {
            s.parse::<f64>()
                .map(Tok::Float)
                .map_err(|_| ParseError::syntax(pos, format!("invalid number `{s}`")))
        } else {
            s.parse::<i64>()
                .map(Tok::Int)
                .map_err(|_| ParseError::syntax(pos, format!("integer out of range `{s}`")))
        }
    }

    fn quoted(&mut self, quote: char, pos: Pos) -> Result<String, ParseError> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(ParseError::syntax(pos, "unterminated string")),
                Some(c) if c == quote => return Ok(s),
                Some('\\') if quote == '"' => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some(c @ ('"' | '\\')) => s.push(c),
                    Some(c) => {
                        s.push('\\');
                        s.push(c);
                    }
                    None => return Err(ParseError::syntax(pos, "unterminated string")),
                },
                Some(c) => s.push(c),
            }
        }
    }

    /// Scan an app body up to (and including) the closing `}`. Words are
    /// shell-like: whitespace separated, quotes group, `;` ends the command.
    pub(crate) fn app_body(&mut self, params: &[&str]) -> Result<Vec<Word>, ParseError> {
        let open = self.pos();
        let mut words = Vec::new();
        let mut ended = false;
        loop {
            while self.peek().is_some_and(char::is_whitespace) {
                self.bump();
            }
            match self.peek() {
                None => return Err(ParseError::syntax(open, "unterminated app body")),
                Some('}') => {
                    self.bump();
                    return Ok(words);
                }
                Some(';') => {
                    self.bump();
                    ended = true;
                }
                Some(_) if ended => {
                    return Err(ParseError::syntax(self.pos(), "app body holds a single command; unexpected text after `;`"));
                }
                Some(_) => words.push(self.word(params)?),
            }
        }
    }

    fn word(&mut self, params: &[&str]) -> Result<Word, ParseError> {
        let pos = self.pos();
        // (text, quoted) raw segments and interpolations in order.
        let mut parts: Vec<WordPart> = Vec::new();
        let mut raw_unquoted = String::new();
        let mut all_unquoted = true;
        let push_lit = |parts: &mut Vec<WordPart>, s: &str| {
            if s.is_empty() {
                return;
            }
            if let Some(WordPart::Lit(prev)) = parts.last_mut() {
                prev.push_str(s);
            } else {
                parts.push(WordPart::Lit(s.to_string()));
            }
        };
        while let Some(c) = self.peek() {
            if c.is_whitespace() || c == ';' || c == '}' {
                break;
            }
            match c {
                '"' | '\'' => {
                    all_unquoted = false;
                    let p = self.pos();
                    let s = self.quoted(c, p)?;
                    push_lit(&mut parts, &s);
                }
                '@' => {
                    all_unquoted = false;
                    self.bump();
                    let p = self.pos();
                    let name = self.ident_chars();
                    if name.is_empty() {
                        return Err(ParseError::syntax(p, "expected parameter name after `@`"));
                    }
                    if name == "filename" && self.peek() == Some('(') {
                        parts.push(WordPart::Param(self.filename_arg(p)?));
                    } else {
                        parts.push(WordPart::Param(name));
                    }
                }
                _ if self.looking_at("filename(") => {
                    all_unquoted = false;
                    let p = self.pos();
                    for _ in 0.."filename".len() {
                        self.bump();
                    }
                    parts.push(WordPart::Param(self.filename_arg(p)?));
                }
                _ => {
                    self.bump();
                    raw_unquoted.push(c);
                    push_lit(&mut parts, &c.to_string());
                }
            }
        }

        // A redirect keyword is only recognised unquoted at the start of the word.
        let mut redirect = None;
        if let Some(WordPart::Lit(first)) = parts.first_mut() {
            for r in [Redirect::Stdin, Redirect::Stdout, Redirect::Stderr] {
                let prefix = format!("{}=", r.keyword());
                if raw_unquoted.starts_with(&prefix) && first.starts_with(&prefix) {
                    redirect = Some(r);
                    first.drain(..prefix.len());
                    if first.is_empty() {
                        parts.remove(0);
                    }
                    break;
                }
            }
        }
        if redirect.is_none() && all_unquoted {
            if let [WordPart::Lit(s)] = parts.as_slice() {
                if params.contains(&s.as_str()) {
                    parts = vec![WordPart::Param(s.clone())];
                }
            }
        }
        if redirect.is_some() && parts.is_empty() {
            return Err(ParseError::syntax(pos, "redirect without a target"));
        }
        Ok(Word { redirect, parts, pos })
    }

    fn looking_at(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(k, c)| self.peek_at(k) == Some(c))
    }

    fn ident_chars(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }

    fn filename_arg(&mut self, pos: Pos) -> Result<String, ParseError> {
        // at '('
        self.bump();
        let name = self.ident_chars();
        if name.is_empty() || self.peek() != Some(')') {
            return Err(ParseError::syntax(pos, "expected `filename(<parameter>)`"));
        }
        self.bump();
        Ok(name)
    }
}
