//! Line-oriented concrete syntax for D-CGF models.
//!
//! ```text
//! # comment
//! param beta = 1800
//! species S = tau[tau_S1]<b>.(S|S) + tau<mu>.0 + ?i<beta>.I
//! species I = !i<beta>.I + tau<nu>.R
//! species R = 0
//! population S: 0.3, I: 0.7, R: 0
//! therapy T1_off = tau<r1_on>.T1_on
//! therapy T1_on = !j<rho>.T1_on + tau<r1_off>.T1_off
//! init T1_off | T2_off
//! ```
//!
//! A declaration ends at the end of the line unless the line ends with `+`,
//! `|` or `,`. Rates are sums of literals, parameter names and
//! `literal*name` products.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::{
    fmt_number, Action, ActionKind, Branch, DcgfModel, Definition, Multiset, Rate, RateTerm, Site, TermKind,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file: Option<String>,
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => write!(f, "error"),
            Severity::Warning => write!(f, "warning"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    /// Always present for diagnostics produced while parsing.
    pub span: Option<SourceSpan>,
}

impl Diagnostic {
    pub fn error(code: &str, message: impl Into<String>, span: Option<SourceSpan>) -> Self {
        Diagnostic { severity: Severity::Error, code: code.to_owned(), message: message.into(), span }
    }

    pub fn warning(code: &str, message: impl Into<String>, span: Option<SourceSpan>) -> Self {
        Diagnostic { severity: Severity::Warning, code: code.to_owned(), message: message.into(), span }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    /// `file:line:col: severity[code]: message`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.span {
            Some(span) => write!(f, "{}:{}:{}: ", span.file.as_deref().unwrap_or("<input>"), span.line, span.column)?,
            None => write!(f, "<model>: ")?,
        }
        write!(f, "{}[{}]: {}", self.severity, self.code, self.message)
    }
}

/// Renders diagnostics as a JSON array.
pub fn diagnostics_to_json(diagnostics: &[Diagnostic]) -> String {
    serde_json::to_string_pretty(diagnostics).expect("diagnostics serialize")
}

/// A successfully parsed model together with any warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub model: DcgfModel,
    pub warnings: Vec<Diagnostic>,
}

pub fn parse(source: &str) -> Result<Parsed, Vec<Diagnostic>> {
    parse_named(source, None)
}

/// Parses `source`, tagging spans with `file`.
pub fn parse_named(source: &str, file: Option<&str>) -> Result<Parsed, Vec<Diagnostic>> {
    let tokens = match lex(source) {
        Ok(tokens) => tokens,
        Err(errors) => {
            return Err(errors
                .into_iter()
                .map(|(pos, msg)| Diagnostic::error("E001", msg, Some(pos.span(file, 1))))
                .collect())
        }
    };
    let mut parser = Parser {
        tokens,
        pos: 0,
        file,
        model: DcgfModel::default(),
        sites: HashMap::new(),
        diagnostics: Vec::new(),
        seen_init: false,
    };
    parser.run();
    let Parser { model, sites, mut diagnostics, .. } = parser;

    if !diagnostics.iter().any(Diagnostic::is_error) {
        if let Err(errors) = model.validate() {
            for e in errors {
                let span = e.site().and_then(|s| sites.get(s)).cloned();
                diagnostics.push(Diagnostic::error(e.code(), e.to_string(), span));
            }
        }
    }
    if !diagnostics.iter().any(Diagnostic::is_error) {
        for (index, def) in model.species.iter().enumerate() {
            if !model.population.contains_key(&def.name) {
                let span = sites.get(&Site::Definition { kind: TermKind::Species, index }).cloned();
                diagnostics.push(Diagnostic::warning(
                    "W001",
                    format!("no initial population for `{}`; defaulting to 0", def.name),
                    span,
                ));
            }
        }
    }

    if diagnostics.iter().any(Diagnostic::is_error) {
        Err(diagnostics)
    } else {
        Ok(Parsed { model, warnings: diagnostics })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pos {
    line: usize,
    column: usize,
}

impl Pos {
    fn span(self, file: Option<&str>, length: usize) -> SourceSpan {
        SourceSpan { file: file.map(str::to_owned), line: self.line, column: self.column, length }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Sym(char),
    Newline,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
    len: usize,
}

fn lex(source: &str) -> Result<Vec<Token>, Vec<(Pos, String)>> {
    let mut tokens = Vec::new();
    let mut errors = Vec::new();
    let chars: Vec<char> = source.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        if c == '\n' {
            tokens.push(Token { tok: Tok::Newline, pos, len: 0 });
            i += 1;
            line += 1;
            col = 1;
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
        } else if c.is_whitespace() {
            i += 1;
            col += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let len = i - start;
            col += len;
            tokens.push(Token { tok: Tok::Ident(text), pos, len });
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let len = i - start;
            col += len;
            match text.parse::<f64>() {
                Ok(v) => tokens.push(Token { tok: Tok::Number(v), pos, len }),
                Err(_) => errors.push((pos, format!("malformed number `{text}`"))),
            }
        } else if "=+.()|<>?!:,*[]-".contains(c) {
            tokens.push(Token { tok: Tok::Sym(c), pos, len: 1 });
            i += 1;
            col += 1;
        } else {
            errors.push((pos, format!("unexpected character `{c}`")));
            i += 1;
            col += 1;
        }
    }
    tokens.push(Token { tok: Tok::Eof, pos: Pos { line, column: col }, len: 0 });

    // A trailing `+`, `|` or `,` continues the declaration on the next line.
    let mut joined: Vec<Token> = Vec::with_capacity(tokens.len());
    for t in tokens {
        if t.tok == Tok::Newline && matches!(joined.last(), Some(Token { tok: Tok::Sym('+' | '|' | ','), .. })) {
            continue;
        }
        joined.push(t);
    }

    if errors.is_empty() {
        Ok(joined)
    } else {
        Err(errors)
    }
}

struct Parser<'f> {
    tokens: Vec<Token>,
    pos: usize,
    file: Option<&'f str>,
    model: DcgfModel,
    sites: HashMap<Site, SourceSpan>,
    diagnostics: Vec<Diagnostic>,
    seen_init: bool,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn span_of(&self, t: &Token) -> SourceSpan {
        t.pos.span(self.file, t.len)
    }

    /// Span from token `start` up to (not including) token `end`, clipped to one line.
    fn span_between(&self, start: usize, end: usize) -> SourceSpan {
        let first = &self.tokens[start];
        let last = &self.tokens[end.saturating_sub(1).max(start)];
        let length =
            if last.pos.line == first.pos.line { last.pos.column + last.len - first.pos.column } else { first.len };
        first.pos.span(self.file, length)
    }

    fn err_here(&self, msg: impl Into<String>) -> Diagnostic {
        let t = self.peek();
        Diagnostic::error("E002", msg, Some(self.span_of(t)))
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(v) => format!("number {}", fmt_number(*v)),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::Newline => "end of line".to_owned(),
            Tok::Eof => "end of input".to_owned(),
        }
    }

    fn expect_sym(&mut self, c: char) -> PResult<Token> {
        if self.peek().tok == Tok::Sym(c) {
            Ok(self.bump())
        } else {
            Err(self.err_here(format!("expected `{c}`, found {}", Self::describe(&self.peek().tok))))
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<(String, Token)> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                Ok((s, self.bump()))
            }
            other => Err(self.err_here(format!("expected {what}, found {}", Self::describe(other)))),
        }
    }

    fn expect_number(&mut self) -> PResult<f64> {
        let negative = if self.peek().tok == Tok::Sym('-') {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().tok {
            Tok::Number(v) => {
                self.bump();
                Ok(if negative { -v } else { v })
            }
            ref other => Err(self.err_here(format!("expected a number, found {}", Self::describe(other)))),
        }
    }

    fn end_of_decl(&mut self) -> PResult<()> {
        match self.peek().tok {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Ok(()),
            ref other => Err(self.err_here(format!("expected end of line, found {}", Self::describe(other)))),
        }
    }

    fn recover(&mut self) {
        while !matches!(self.peek().tok, Tok::Newline | Tok::Eof) {
            self.bump();
        }
        if self.peek().tok == Tok::Newline {
            self.bump();
        }
    }

    fn run(&mut self) {
        loop {
            match self.peek().tok.clone() {
                Tok::Eof => break,
                Tok::Newline => {
                    self.bump();
                }
                _ => {
                    if let Err(d) = self.declaration() {
                        self.diagnostics.push(d);
                        self.recover();
                    }
                }
            }
        }
    }

    fn declaration(&mut self) -> PResult<()> {
        let head = self.peek().clone();
        let keyword = match &head.tok {
            Tok::Ident(s) => s.clone(),
            other => return Err(self.err_here(format!("expected a declaration, found {}", Self::describe(other)))),
        };
        match keyword.as_str() {
            "param" => self.param_decl(),
            "species" => self.definition_decl(TermKind::Species),
            "therapy" => self.definition_decl(TermKind::Therapy),
            "population" => self.population_decl(),
            "init" => self.init_decl(),
            _ => Err(self.err_here(format!(
                "unknown declaration `{keyword}`; expected param, species, therapy, population or init"
            ))),
        }
    }

    fn param_decl(&mut self) -> PResult<()> {
        self.bump();
        let (name, tok) = self.expect_ident("a parameter name")?;
        self.expect_sym('=')?;
        let value = self.expect_number()?;
        self.end_of_decl()?;
        if self.model.parameters.contains_key(&name) {
            return Err(Diagnostic::error("E003", format!("duplicate parameter `{name}`"), Some(self.span_of(&tok))));
        }
        self.sites.insert(Site::Parameter(name.clone()), self.span_of(&tok));
        self.model.parameters.insert(name, value);
        Ok(())
    }

    fn definition_decl(&mut self, kind: TermKind) -> PResult<()> {
        self.bump();
        let (name, name_tok) = self.expect_ident("a term name")?;
        self.expect_sym('=')?;
        let def_index = match kind {
            TermKind::Species => self.model.species.len(),
            TermKind::Therapy => self.model.therapies.len(),
        };
        let mut def = Definition::new(name);
        let mut sites = vec![(Site::Definition { kind, index: def_index }, self.span_of(&name_tok))];

        if self.peek().tok == Tok::Number(0.0) {
            self.bump();
        } else {
            loop {
                let b = def.branches.len();
                let start = self.pos;
                let action = self.prefix()?;
                let prefix_span = self.span_between(start, self.pos);
                self.expect_sym('.')?;
                let cont_start = self.pos;
                let continuation = self.continuation()?;
                let cont_span = self.span_between(cont_start, self.pos);
                sites.push((Site::Branch { kind, def: def_index, branch: b }, prefix_span));
                sites.push((Site::Continuation { kind, def: def_index, branch: b }, cont_span));
                def.branches.push(Branch { action, continuation });
                if self.peek().tok == Tok::Sym('+') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.end_of_decl()?;
        self.sites.extend(sites);
        match kind {
            TermKind::Species => self.model.species.push(def),
            TermKind::Therapy => self.model.therapies.push(def),
        }
        Ok(())
    }

    fn prefix(&mut self) -> PResult<Action> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(s) if s == "tau" => {
                self.bump();
                let label = self.optional_label()?;
                let rate = self.rate()?;
                Ok(Action { kind: ActionKind::Internal, channel: None, rate, label })
            }
            Tok::Sym(c @ ('?' | '!')) => {
                let c = *c;
                self.bump();
                if matches!(&self.peek().tok, Tok::Ident(s) if s == "tau") {
                    let tau = self.bump();
                    let label = self.optional_label()?;
                    let rate = self.rate()?;
                    self.diagnostics.push(Diagnostic::warning(
                        "W002",
                        format!("`{c}tau` read as an internal action; internal actions take no channel"),
                        Some(self.span_of(&tau)),
                    ));
                    return Ok(Action { kind: ActionKind::Internal, channel: None, rate, label });
                }
                let (channel, _) = self.expect_ident("a channel name")?;
                let rate = self.rate()?;
                let kind = if c == '?' { ActionKind::Input } else { ActionKind::Output };
                Ok(Action { kind, channel: Some(channel), rate, label: None })
            }
            other => {
                Err(self.err_here(format!("expected an action (`tau`, `?x` or `!x`), found {}", Self::describe(other))))
            }
        }
    }

    fn optional_label(&mut self) -> PResult<Option<String>> {
        if self.peek().tok != Tok::Sym('[') {
            return Ok(None);
        }
        self.bump();
        let (label, _) = self.expect_ident("an action label")?;
        self.expect_sym(']')?;
        Ok(Some(label))
    }

    fn rate(&mut self) -> PResult<Rate> {
        self.expect_sym('<')?;
        let mut terms = vec![self.rate_term()?];
        while self.peek().tok == Tok::Sym('+') {
            self.bump();
            terms.push(self.rate_term()?);
        }
        self.expect_sym('>')?;
        Ok(Rate { terms })
    }

    fn rate_term(&mut self) -> PResult<RateTerm> {
        match self.peek().tok.clone() {
            Tok::Number(v) => {
                self.bump();
                if self.peek().tok == Tok::Sym('*') {
                    self.bump();
                    let (name, _) = self.expect_ident("a parameter name")?;
                    Ok(RateTerm::Param { coeff: v, name })
                } else {
                    Ok(RateTerm::Literal(v))
                }
            }
            Tok::Ident(_) => {
                let (name, _) = self.expect_ident("a parameter name")?;
                Ok(RateTerm::Param { coeff: 1.0, name })
            }
            other => Err(self.err_here(format!("expected a rate, found {}", Self::describe(&other)))),
        }
    }

    fn continuation(&mut self) -> PResult<Multiset> {
        match self.peek().tok.clone() {
            Tok::Number(0.0) => {
                self.bump();
                Ok(Multiset::new())
            }
            Tok::Sym('(') => {
                self.bump();
                let mut m = Multiset::new();
                if self.peek().tok == Tok::Number(0.0) {
                    self.bump();
                } else {
                    loop {
                        let (name, _) = self.expect_ident("a term name")?;
                        m.insert(name);
                        if self.peek().tok == Tok::Sym('|') {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect_sym(')')?;
                Ok(m)
            }
            Tok::Ident(_) => {
                let (name, _) = self.expect_ident("a term name")?;
                Ok(Multiset::from_iter([name]))
            }
            other => Err(self.err_here(format!(
                "expected a continuation (`0`, a name or `(A|B)`), found {}",
                Self::describe(&other)
            ))),
        }
    }

    fn population_decl(&mut self) -> PResult<()> {
        self.bump();
        let mut entries = Vec::new();
        if !matches!(self.peek().tok, Tok::Newline | Tok::Eof) {
            loop {
                let (name, tok) = self.expect_ident("a species name")?;
                self.expect_sym(':')?;
                let value = self.expect_number()?;
                entries.push((name, tok, value));
                if self.peek().tok == Tok::Sym(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.end_of_decl()?;
        for (name, tok, value) in entries {
            if self.model.population.contains_key(&name) {
                self.diagnostics.push(Diagnostic::error(
                    "E004",
                    format!("duplicate population entry for `{name}`"),
                    Some(self.span_of(&tok)),
                ));
                continue;
            }
            self.sites.insert(Site::Population(name.clone()), self.span_of(&tok));
            self.model.population.insert(name, value);
        }
        Ok(())
    }

    fn init_decl(&mut self) -> PResult<()> {
        let head = self.pos;
        self.bump();
        let mut m = Multiset::new();
        if self.peek().tok == Tok::Number(0.0) {
            self.bump();
        } else if !matches!(self.peek().tok, Tok::Newline | Tok::Eof) {
            loop {
                let (name, _) = self.expect_ident("a therapy name")?;
                m.insert(name);
                if self.peek().tok == Tok::Sym('|') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        let span = self.span_between(head, self.pos);
        self.end_of_decl()?;
        if self.seen_init {
            return Err(Diagnostic::error("E005", "duplicate `init` declaration", Some(span)));
        }
        self.seen_init = true;
        self.sites.insert(Site::Init, span);
        self.model.initial = m;
        Ok(())
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "tau" | "param" | "species" | "therapy" | "population" | "init")
}

/// Prints a model in the concrete syntax; `parse(render(m))` yields `m`.
pub fn render(model: &DcgfModel) -> String {
    let mut out = String::new();
    for (name, value) in &model.parameters {
        out.push_str(&format!("param {name} = {}\n", fmt_number(*value)));
    }
    for def in &model.species {
        out.push_str(&format!("species {}\n", render_definition(def)));
    }
    if !model.population.is_empty() {
        let entries: Vec<String> = model.population.iter().map(|(n, v)| format!("{n}: {}", fmt_number(*v))).collect();
        out.push_str(&format!("population {}\n", entries.join(", ")));
    }
    for def in &model.therapies {
        out.push_str(&format!("therapy {}\n", render_definition(def)));
    }
    if !model.initial.is_empty() {
        let names: Vec<&str> = model.initial.elements().collect();
        out.push_str(&format!("init {}\n", names.join(" | ")));
    }
    out
}

fn render_definition(def: &Definition) -> String {
    if def.branches.is_empty() {
        return format!("{} = 0", def.name);
    }
    let branches: Vec<String> =
        def.branches.iter().map(|b| format!("{}.{}", render_action(&b.action), b.continuation)).collect();
    format!("{} = {}", def.name, branches.join(" + "))
}

fn render_action(action: &Action) -> String {
    match action.kind {
        ActionKind::Internal => match &action.label {
            Some(label) => format!("tau[{label}]<{}>", action.rate),
            None => format!("tau<{}>", action.rate),
        },
        ActionKind::Input => format!("?{}<{}>", action.channel.as_deref().unwrap_or(""), action.rate),
        ActionKind::Output => format!("!{}<{}>", action.channel.as_deref().unwrap_or(""), action.rate),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins;

    #[test]
    fn empty_source_is_the_empty_model() {
        let parsed = parse("").unwrap();
        assert_eq!(parsed.model, DcgfModel::default());
        assert!(parsed.warnings.is_empty());
        assert_eq!(render(&parsed.model), "");
    }

    #[test]
    fn sir_therapy_builtin_shape() {
        let model = builtins::sir_therapy_model();
        assert_eq!(model.species.len(), 3);
        assert_eq!(model.therapies.len(), 4);
        assert_eq!(model.initial, Multiset::from_iter(["T1_off", "T2_off"]));
    }

    #[test]
    fn unmatched_channel_reports_location() {
        let errs = parse("species S = ?i<beta>.I\nspecies I = 0\nparam beta = 1\n").unwrap_err();
        assert_eq!(errs.len(), 1);
        let d = &errs[0];
        assert_eq!(d.code, "E107");
        assert!(d.message.contains("unmatched channel i"), "{}", d.message);
        let span = d.span.as_ref().unwrap();
        assert_eq!((span.line, span.column), (1, 13));
        assert_eq!(d.to_string(), "<input>:1:13: error[E107]: unmatched channel i: no output prefix");
    }

    #[test]
    fn grammar_error_points_at_token() {
        let errs = parse_named("param a = 1\nspecies X = tau<a>.(X|\n", Some("m.dcgf")).unwrap_err();
        // `|` at end of line joins the next line, so the error is at end of input
        assert_eq!(errs[0].code, "E002");
        assert!(errs[0].to_string().starts_with("m.dcgf:"));
        let errs = parse("species X = tau<1> X\n").unwrap_err();
        let span = errs[0].span.as_ref().unwrap();
        assert_eq!((span.line, span.column), (1, 20));
        assert!(errs[0].message.contains("expected `.`"));
    }

    #[test]
    fn lexical_errors() {
        let errs = parse("species X = tau<1>.X @\n").unwrap_err();
        assert_eq!(errs[0].code, "E001");
        assert_eq!(errs[0].span.as_ref().unwrap().column, 22);
    }

    #[test]
    fn duplicate_definitions_are_errors() {
        let errs = parse("species X = 0\nspecies X = 0\n").unwrap_err();
        assert_eq!(errs[0].code, "E101");
        assert_eq!(errs[0].span.as_ref().unwrap().line, 2);
        let errs = parse("species X = 0\ntherapy X = 0\n").unwrap_err();
        assert_eq!(errs[0].code, "E102");
        let errs = parse("param a = 1\nparam a = 2\n").unwrap_err();
        assert_eq!(errs[0].code, "E003");
    }

    #[test]
    fn undeclared_references() {
        let errs = parse("species X = tau<k>.Y\npopulation X: 1\n").unwrap_err();
        let codes: Vec<_> = errs.iter().map(|d| d.code.as_str()).collect();
        assert_eq!(codes, ["E103", "E104"]);
        assert_eq!(errs[0].span.as_ref().unwrap().column, 20);
        let errs = parse("species X = 0\npopulation X: 1\ninit U\n").unwrap_err();
        assert_eq!(errs[0].code, "E103");
        assert_eq!(errs[0].span.as_ref().unwrap().line, 3);
    }

    #[test]
    fn rate_mismatch_on_channel() {
        let src = "param a = 1\nparam b = 1\nspecies X = ?c<a>.X\nspecies Y = !c<b>.Y\npopulation X: 1, Y: 1\n";
        let errs = parse(src).unwrap_err();
        assert_eq!(errs[0].code, "E108");
        assert_eq!(errs[0].span.as_ref().unwrap().line, 4);
    }

    #[test]
    fn question_tau_is_internal_with_warning() {
        let parsed = parse("param nu = 1\nspecies I = ?tau<nu>.R\nspecies R = 0\npopulation I: 1, R: 0\n").unwrap();
        assert_eq!(parsed.model.species[0].branches[0].action.kind, ActionKind::Internal);
        assert_eq!(parsed.warnings.len(), 1);
        assert_eq!(parsed.warnings[0].code, "W002");
    }

    #[test]
    fn missing_population_warns() {
        let parsed = parse("species X = 0\n").unwrap();
        assert_eq!(parsed.warnings[0].code, "W001");
    }

    #[test]
    fn continuation_lines_after_plus() {
        let src = "param a = 1\nspecies X = tau<a>.X +\n    tau<a>.0\npopulation X: 1\n";
        let parsed = parse(src).unwrap();
        assert_eq!(parsed.model.species[0].branches.len(), 2);
    }

    #[test]
    fn symbolic_and_summed_rates_survive_render() {
        let src = "param nu = 100\nparam k = 50\nspecies I = tau<nu+2*k+0.25>.0\npopulation I: 1\n";
        let model = parse(src).unwrap().model;
        let text = render(&model);
        assert!(text.contains("tau<nu+2*k+0.25>.0"), "{text}");
        assert_eq!(parse(&text).unwrap().model, model);
    }

    #[test]
    fn builtins_round_trip() {
        for model in [builtins::sir_model(), builtins::sir_therapy_model()] {
            let text = render(&model);
            assert_eq!(parse(&text).unwrap().model, model);
        }
    }

    #[test]
    fn diagnostics_json_fields() {
        let errs = parse("species S = ?i<1>.S\n").unwrap_err();
        let json: serde_json::Value = serde_json::from_str(&diagnostics_to_json(&errs)).unwrap();
        let d = &json[0];
        assert_eq!(d["severity"], "error");
        assert_eq!(d["code"], "E107");
        assert_eq!(d["span"]["line"], 1);
    }

    #[test]
    fn parse_is_deterministic() {
        let src = builtins::SIR_THERAPY_SOURCE;
        let a = parse(src).unwrap();
        let b = parse(src).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.warnings, b.warnings);
    }
}
