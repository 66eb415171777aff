//! ALIR: the line-oriented three-address IR for app programs.
//!
//! One statement per line, explicit labels, no expression nesting. The
//! statement vocabulary covers string construction (`CONST`, `CONCAT`,
//! `LASTSEG`, `CANONICAL`, `ENVDIR`), external input (`GETEXTRA`, `GETURI`),
//! URI dispatch (`URIMATCH` against `urimap` tables), control flow
//! (`IF`/`LABEL`/`CALL`/`RETURN`) and name-resolution sinks (`SINK`).
//!
//! The grammar is documented in `docs/formats.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// Identity of one statement: function name plus body index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtId {
    pub function: String,
    pub index: usize,
}

impl StmtId {
    pub fn new(function: impl Into<String>, index: usize) -> Self {
        StmtId {
            function: function.into(),
            index,
        }
    }
}

impl fmt::Display for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.function, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SinkKind {
    Open,
    Read,
    Create,
    Delete,
    Move,
    LoadImage,
}

impl SinkKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "open" => Some(SinkKind::Open),
            "read" => Some(SinkKind::Read),
            "create" => Some(SinkKind::Create),
            "delete" => Some(SinkKind::Delete),
            "move" => Some(SinkKind::Move),
            "loadImage" => Some(SinkKind::LoadImage),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SinkKind::Open => "open",
            SinkKind::Read => "read",
            SinkKind::Create => "create",
            SinkKind::Delete => "delete",
            SinkKind::Move => "move",
            SinkKind::LoadImage => "loadImage",
        }
    }
}

/// Right-hand side of a string comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Var(String),
    Lit(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cond {
    /// `v == rhs` / `v != rhs` over strings.
    Str {
        lhs: String,
        rhs: Operand,
        negated: bool,
    },
    /// `m == n` / `m != n` over URIMATCH results.
    Int {
        lhs: String,
        rhs: i64,
        negated: bool,
    },
    StartsWith {
        var: String,
        lit: String,
    },
    Contains {
        var: String,
        lit: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Const { dst: String, value: String },
    GetExtra { dst: String, key: String },
    GetUri { dst: String },
    Concat { dst: String, lhs: String, rhs: String },
    LastSeg { dst: String, src: String },
    Canonical { dst: String, src: String },
    EnvDir { dst: String, api: String },
    UriMatch { dst: String, table: String, uri: String },
    If { cond: Cond, target: String },
    Label { name: String },
    Call { callee: String, args: Vec<String> },
    Sink { kind: SinkKind, args: Vec<String> },
    Return,
}

impl Op {
    /// Variable defined by this statement, if any.
    pub fn def(&self) -> Option<&str> {
        match self {
            Op::Const { dst, .. }
            | Op::GetExtra { dst, .. }
            | Op::GetUri { dst }
            | Op::Concat { dst, .. }
            | Op::LastSeg { dst, .. }
            | Op::Canonical { dst, .. }
            | Op::EnvDir { dst, .. }
            | Op::UriMatch { dst, .. } => Some(dst),
            _ => None,
        }
    }

    /// Variables read by this statement.
    pub fn uses(&self) -> Vec<&str> {
        match self {
            Op::Concat { lhs, rhs, .. } => vec![lhs, rhs],
            Op::LastSeg { src, .. } | Op::Canonical { src, .. } => vec![src],
            Op::UriMatch { uri, .. } => vec![uri],
            Op::If { cond, .. } => match cond {
                Cond::Str {
                    lhs,
                    rhs: Operand::Var(v),
                    ..
                } => vec![lhs, v],
                Cond::Str { lhs, .. } => vec![lhs],
                Cond::Int { lhs, .. } => vec![lhs],
                Cond::StartsWith { var, .. } | Cond::Contains { var, .. } => vec![var],
            },
            Op::Call { args, .. } => args.iter().map(String::as_str).collect(),
            Op::Sink { args, .. } => args.iter().map(String::as_str).collect(),
            _ => vec![],
        }
    }

    pub fn is_external_source(&self) -> bool {
        matches!(self, Op::GetExtra { .. } | Op::GetUri { .. })
    }

    pub fn is_internal_source(&self) -> bool {
        matches!(self, Op::Const { .. } | Op::EnvDir { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Op>,
    /// Source line per statement; not part of structural equality.
    pub lines: Vec<u32>,
    /// Set at bundle load for diagnostics; not part of structural equality.
    pub src_file: Option<String>,
}

impl PartialEq for Function {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.params == other.params && self.body == other.body
    }
}
impl Eq for Function {}

impl Function {
    /// Index of the label statement with the given name.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.body
            .iter()
            .position(|op| matches!(op, Op::Label { name } if name == label))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UriPattern {
    pub authority: String,
    pub pattern: String,
    pub code: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlirProgram {
    pub functions: BTreeMap<String, Function>,
    pub uri_tables: BTreeMap<String, Vec<UriPattern>>,
}

impl AlirProgram {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.get(name)
    }

    pub fn stmt(&self, id: &StmtId) -> Option<&Op> {
        self.functions.get(&id.function)?.body.get(id.index)
    }

    pub fn line_of(&self, id: &StmtId) -> u32 {
        self.functions
            .get(&id.function)
            .and_then(|f| f.lines.get(id.index).copied())
            .unwrap_or(0)
    }

    /// All statements in deterministic order.
    pub fn statements(&self) -> impl Iterator<Item = (StmtId, &Op)> {
        self.functions.values().flat_map(|f| {
            f.body
                .iter()
                .enumerate()
                .map(|(i, op)| (StmtId::new(f.name.clone(), i), op))
        })
    }

    /// All SINK statements in deterministic order.
    pub fn sinks(&self) -> Vec<StmtId> {
        self.statements()
            .filter(|(_, op)| matches!(op, Op::Sink { .. }))
            .map(|(id, _)| id)
            .collect()
    }

    /// Merge a second translation unit into this one (multi-file bundles).
    /// URI tables with the same id accumulate rows; duplicate functions are an
    /// error.
    pub fn merge(&mut self, other: AlirProgram) -> Result<(), AlirError> {
        for (name, f) in other.functions {
            if self.functions.contains_key(&name) {
                return Err(AlirError::DuplicateFunction { name });
            }
            self.functions.insert(name, f);
        }
        for (id, rows) in other.uri_tables {
            self.uri_tables.entry(id).or_default().extend(rows);
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlirError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: u32, message: String },
    #[error("duplicate function `{name}`")]
    DuplicateFunction { name: String },
    #[error("function `{function}`: duplicate label `{label}`")]
    DuplicateLabel { function: String, label: String },
    #[error("function `{function}`: undefined label `{label}`")]
    UndefinedLabel { function: String, label: String },
    #[error("function `{function}`: call to undefined function `{callee}`")]
    UndefinedFunction { function: String, callee: String },
    #[error("function `{function}`: call to `{callee}` passes {given} args, expected {expected}")]
    ArityMismatch {
        function: String,
        callee: String,
        given: usize,
        expected: usize,
    },
    #[error("function `{function}` line {line}: variable `{variable}` may be used before definition")]
    UseBeforeDef {
        function: String,
        variable: String,
        line: u32,
    },
    #[error("function `{function}`: variable `{variable}` used with conflicting types")]
    TypeConflict { function: String, variable: String },
    #[error("line {line}: unknown environment API `{api}`")]
    UnknownEnvApi { api: String, line: u32 },
    #[error("line {line}: URIMATCH references undeclared table `{table}`")]
    UndeclaredUriTable { table: String, line: u32 },
    #[error("function `{function}`: control flow may fall off the end (missing RETURN)")]
    MissingReturn { function: String },
    #[error("line {line}: SINK `{kind}` takes {expected} pathname argument(s)")]
    SinkArity {
        line: u32,
        kind: String,
        expected: usize,
    },
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    Str(String),
    Int(i64),
    LParen,
    RParen,
    Comma,
    LBrace,
    RBrace,
    EqEq,
    BangEq,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "{s}"),
            Token::Str(s) => write!(f, "\"{s}\""),
            Token::Int(n) => write!(f, "{n}"),
            Token::LParen => f.write_str("("),
            Token::RParen => f.write_str(")"),
            Token::Comma => f.write_str(","),
            Token::LBrace => f.write_str("{"),
            Token::RBrace => f.write_str("}"),
            Token::EqEq => f.write_str("=="),
            Token::BangEq => f.write_str("!="),
        }
    }
}

fn lex_line(line: &str, line_no: u32) -> Result<Vec<Token>, AlirError> {
    let mut tokens = Vec::new();
    let bytes: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            ' ' | '\t' | '\r' => i += 1,
            '#' => break,
            '"' => {
                let start = i + 1;
                let mut j = start;
                while j < bytes.len() && bytes[j] != '"' {
                    j += 1;
                }
                if j == bytes.len() {
                    return Err(AlirError::Syntax {
                        line: line_no,
                        message: "unterminated string literal".into(),
                    });
                }
                tokens.push(Token::Str(bytes[start..j].iter().collect()));
                i = j + 1;
            }
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            ',' => {
                tokens.push(Token::Comma);
                i += 1;
            }
            '{' => {
                tokens.push(Token::LBrace);
                i += 1;
            }
            '}' => {
                tokens.push(Token::RBrace);
                i += 1;
            }
            '=' if bytes.get(i + 1) == Some(&'=') => {
                tokens.push(Token::EqEq);
                i += 2;
            }
            '!' if bytes.get(i + 1) == Some(&'=') => {
                tokens.push(Token::BangEq);
                i += 2;
            }
            _ => {
                let start = i;
                while i < bytes.len()
                    && !bytes[i].is_whitespace()
                    && !"(),{}#\"".contains(bytes[i])
                    && !(bytes[i] == '=' && bytes.get(i + 1) == Some(&'='))
                    && !(bytes[i] == '!' && bytes.get(i + 1) == Some(&'='))
                {
                    i += 1;
                }
                let word: String = bytes[start..i].iter().collect();
                if let Ok(n) = word.parse::<i64>() {
                    tokens.push(Token::Int(n));
                } else {
                    tokens.push(Token::Ident(word));
                }
            }
        }
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct LineParser {
    tokens: Vec<Token>,
    pos: usize,
    line: u32,
}

impl LineParser {
    fn err(&self, message: impl Into<String>) -> AlirError {
        AlirError::Syntax {
            line: self.line,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, AlirError> {
        match self.next() {
            Some(Token::Ident(s)) => Ok(s),
            other => Err(self.err(format!(
                "expected {what}, found {}",
                other.map_or("end of line".to_string(), |t| t.to_string())
            ))),
        }
    }

    fn expect_str(&mut self, what: &str) -> Result<String, AlirError> {
        match self.next() {
            Some(Token::Str(s)) => Ok(s),
            other => Err(self.err(format!(
                "expected {what}, found {}",
                other.map_or("end of line".to_string(), |t| t.to_string())
            ))),
        }
    }

    fn expect_int(&mut self, what: &str) -> Result<i64, AlirError> {
        match self.next() {
            Some(Token::Int(n)) => Ok(n),
            other => Err(self.err(format!(
                "expected {what}, found {}",
                other.map_or("end of line".to_string(), |t| t.to_string())
            ))),
        }
    }

    fn expect_token(&mut self, tok: Token) -> Result<(), AlirError> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            other => Err(self.err(format!(
                "expected `{tok}`, found {}",
                other.map_or("end of line".to_string(), |t| t.to_string())
            ))),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), AlirError> {
        match self.next() {
            Some(Token::Ident(s)) if s == kw => Ok(()),
            other => Err(self.err(format!(
                "expected `{kw}`, found {}",
                other.map_or("end of line".to_string(), |t| t.to_string())
            ))),
        }
    }

    fn at_end(&self) -> bool {
        self.pos == self.tokens.len()
    }

    fn expect_end(&mut self) -> Result<(), AlirError> {
        if self.at_end() {
            Ok(())
        } else {
            let t = self.tokens[self.pos].clone();
            Err(self.err(format!("unexpected trailing `{t}`")))
        }
    }
}

fn parse_statement(p: &mut LineParser, head: &str) -> Result<Op, AlirError> {
    let op = match head {
        "CONST" => Op::Const {
            dst: p.expect_ident("destination variable")?,
            value: p.expect_str("string literal")?,
        },
        "GETEXTRA" => Op::GetExtra {
            dst: p.expect_ident("destination variable")?,
            key: p.expect_str("extra key")?,
        },
        "GETURI" => Op::GetUri {
            dst: p.expect_ident("destination variable")?,
        },
        "CONCAT" => Op::Concat {
            dst: p.expect_ident("destination variable")?,
            lhs: p.expect_ident("first operand")?,
            rhs: p.expect_ident("second operand")?,
        },
        "LASTSEG" => Op::LastSeg {
            dst: p.expect_ident("destination variable")?,
            src: p.expect_ident("source variable")?,
        },
        "CANONICAL" => Op::Canonical {
            dst: p.expect_ident("destination variable")?,
            src: p.expect_ident("source variable")?,
        },
        "ENVDIR" => Op::EnvDir {
            dst: p.expect_ident("destination variable")?,
            api: p.expect_ident("API name")?,
        },
        "URIMATCH" => Op::UriMatch {
            dst: p.expect_ident("destination variable")?,
            table: p.expect_ident("table id")?,
            uri: p.expect_ident("uri variable")?,
        },
        "IF" => {
            let lhs = p.expect_ident("variable")?;
            let cond = match p.next() {
                Some(Token::EqEq) | Some(Token::BangEq) => {
                    let negated = p.tokens[p.pos - 1] == Token::BangEq;
                    match p.next() {
                        Some(Token::Str(s)) => Cond::Str {
                            lhs,
                            rhs: Operand::Lit(s),
                            negated,
                        },
                        Some(Token::Ident(v)) => Cond::Str {
                            lhs,
                            rhs: Operand::Var(v),
                            negated,
                        },
                        Some(Token::Int(n)) => Cond::Int {
                            lhs,
                            rhs: n,
                            negated,
                        },
                        other => {
                            return Err(p.err(format!(
                                "expected comparison operand, found {}",
                                other.map_or("end of line".to_string(), |t| t.to_string())
                            )))
                        }
                    }
                }
                Some(Token::Ident(kw)) if kw == "STARTSWITH" => Cond::StartsWith {
                    var: lhs,
                    lit: p.expect_str("string literal")?,
                },
                Some(Token::Ident(kw)) if kw == "CONTAINS" => Cond::Contains {
                    var: lhs,
                    lit: p.expect_str("string literal")?,
                },
                other => {
                    return Err(p.err(format!(
                        "expected `==`, `!=`, `STARTSWITH` or `CONTAINS`, found {}",
                        other.map_or("end of line".to_string(), |t| t.to_string())
                    )))
                }
            };
            p.expect_keyword("GOTO")?;
            Op::If {
                cond,
                target: p.expect_ident("label")?,
            }
        }
        "LABEL" => Op::Label {
            name: p.expect_ident("label name")?,
        },
        "CALL" => {
            let callee = p.expect_ident("function name")?;
            p.expect_token(Token::LParen)?;
            let mut args = Vec::new();
            loop {
                match p.next() {
                    Some(Token::RParen) => break,
                    Some(Token::Ident(v)) => {
                        args.push(v);
                        match p.next() {
                            Some(Token::Comma) => continue,
                            Some(Token::RParen) => break,
                            other => {
                                return Err(p.err(format!(
                                    "expected `,` or `)`, found {}",
                                    other.map_or("end of line".to_string(), |t| t.to_string())
                                )))
                            }
                        }
                    }
                    other => {
                        return Err(p.err(format!(
                            "expected argument or `)`, found {}",
                            other.map_or("end of line".to_string(), |t| t.to_string())
                        )))
                    }
                }
            }
            Op::Call { callee, args }
        }
        "SINK" => {
            let kind_name = p.expect_ident("sink kind")?;
            let kind = SinkKind::parse(&kind_name)
                .ok_or_else(|| p.err(format!("unknown sink kind `{kind_name}`")))?;
            let mut args = vec![p.expect_ident("pathname variable")?];
            if !p.at_end() {
                args.push(p.expect_ident("second pathname variable")?);
            }
            let expected = if kind == SinkKind::Move { 2 } else { 1 };
            if args.len() != expected {
                return Err(AlirError::SinkArity {
                    line: p.line,
                    kind: kind_name,
                    expected,
                });
            }
            Op::Sink { kind, args }
        }
        "RETURN" => Op::Return,
        other => return Err(p.err(format!("unknown statement `{other}`"))),
    };
    p.expect_end()?;
    Ok(op)
}

/// Parse and link an ALIR translation unit.
pub fn parse_alir(text: &str) -> Result<AlirProgram, AlirError> {
    let program = parse_unit(text)?;
    link(&program)?;
    Ok(program)
}

/// Parse without the link checks; used for multi-file bundles where linking
/// runs once after merging.
pub fn parse_unit(text: &str) -> Result<AlirProgram, AlirError> {
    let mut program = AlirProgram::default();
    let mut current: Option<Function> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = (idx + 1) as u32;
        let tokens = lex_line(raw, line_no)?;
        if tokens.is_empty() {
            continue;
        }
        let mut p = LineParser {
            tokens,
            pos: 0,
            line: line_no,
        };
        match &p.tokens[0] {
            Token::Ident(kw) if kw == "fn" && current.is_none() => {
                p.pos = 1;
                let name = p.expect_ident("function name")?;
                p.expect_token(Token::LParen)?;
                let mut params = Vec::new();
                loop {
                    match p.next() {
                        Some(Token::RParen) => break,
                        Some(Token::Ident(v)) => {
                            params.push(v);
                            match p.next() {
                                Some(Token::Comma) => continue,
                                Some(Token::RParen) => break,
                                _ => return Err(p.err("expected `,` or `)` in parameter list")),
                            }
                        }
                        _ => return Err(p.err("expected parameter or `)`")),
                    }
                }
                p.expect_token(Token::LBrace)?;
                p.expect_end()?;
                if program.functions.contains_key(&name) {
                    return Err(AlirError::DuplicateFunction { name });
                }
                current = Some(Function {
                    name,
                    params,
                    body: Vec::new(),
                    lines: Vec::new(),
                    src_file: None,
                });
            }
            Token::Ident(kw) if kw == "urimap" && current.is_none() => {
                p.pos = 1;
                let table = p.expect_ident("table id")?;
                let authority = p.expect_str("authority")?;
                let pattern = p.expect_str("path pattern")?;
                let code = p.expect_int("match code")?;
                p.expect_end()?;
                program.uri_tables.entry(table).or_default().push(UriPattern {
                    authority,
                    pattern,
                    code,
                });
            }
            Token::RBrace => {
                p.pos = 1;
                p.expect_end()?;
                match current.take() {
                    Some(f) => {
                        program.functions.insert(f.name.clone(), f);
                    }
                    None => return Err(p.err("`}` outside of a function")),
                }
            }
            Token::Ident(head) => match current.as_mut() {
                Some(f) => {
                    let head = head.clone();
                    p.pos = 1;
                    let op = parse_statement(&mut p, &head)?;
                    f.body.push(op);
                    f.lines.push(line_no);
                }
                None => {
                    return Err(p.err("statement outside of a function"));
                }
            },
            t => {
                return Err(p.err(format!("unexpected `{t}`")));
            }
        }
    }
    if let Some(f) = current {
        return Err(AlirError::Syntax {
            line: text.lines().count() as u32,
            message: format!("unterminated function `{}`", f.name),
        });
    }
    Ok(program)
}

// ---------------------------------------------------------------------------
// Link checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarType {
    Str,
    Int,
}

/// Validate a merged program: label/call resolution, table and API
/// references, definite assignment along every control path, and typing.
pub fn link(program: &AlirProgram) -> Result<(), AlirError> {
    for f in program.functions.values() {
        // Labels unique.
        let mut labels = BTreeSet::new();
        for op in &f.body {
            if let Op::Label { name } = op {
                if !labels.insert(name.clone()) {
                    return Err(AlirError::DuplicateLabel {
                        function: f.name.clone(),
                        label: name.clone(),
                    });
                }
            }
        }
        for (i, op) in f.body.iter().enumerate() {
            let line = f.lines.get(i).copied().unwrap_or(0);
            match op {
                Op::If { target, .. } => {
                    if f.label_index(target).is_none() {
                        return Err(AlirError::UndefinedLabel {
                            function: f.name.clone(),
                            label: target.clone(),
                        });
                    }
                }
                Op::Call { callee, args } => match program.functions.get(callee) {
                    None => {
                        return Err(AlirError::UndefinedFunction {
                            function: f.name.clone(),
                            callee: callee.clone(),
                        })
                    }
                    Some(target) => {
                        if target.params.len() != args.len() {
                            return Err(AlirError::ArityMismatch {
                                function: f.name.clone(),
                                callee: callee.clone(),
                                given: args.len(),
                                expected: target.params.len(),
                            });
                        }
                    }
                },
                Op::EnvDir { api, .. } => {
                    if !crate::symexec::is_known_env_api(api) {
                        return Err(AlirError::UnknownEnvApi {
                            api: api.clone(),
                            line,
                        });
                    }
                }
                Op::UriMatch { table, .. } => {
                    if !program.uri_tables.contains_key(table) {
                        return Err(AlirError::UndeclaredUriTable {
                            table: table.clone(),
                            line,
                        });
                    }
                }
                _ => {}
            }
        }
        check_definite_assignment(f)?;
        check_types(f)?;
        check_termination(f)?;
    }
    Ok(())
}

/// Control-flow successors of statement `i` within its function.
pub fn successors(f: &Function, i: usize) -> Vec<usize> {
    match &f.body[i] {
        Op::Return => vec![],
        Op::If { target, .. } => {
            let mut s = Vec::new();
            if i + 1 < f.body.len() {
                s.push(i + 1);
            }
            if let Some(t) = f.label_index(target) {
                s.push(t);
            }
            s
        }
        _ => {
            if i + 1 < f.body.len() {
                vec![i + 1]
            } else {
                vec![]
            }
        }
    }
}

fn reachable_indices(f: &Function) -> Vec<bool> {
    let mut reach = vec![false; f.body.len()];
    if f.body.is_empty() {
        return reach;
    }
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        if reach[i] {
            continue;
        }
        reach[i] = true;
        for s in successors(f, i) {
            stack.push(s);
        }
    }
    reach
}

fn check_definite_assignment(f: &Function) -> Result<(), AlirError> {
    let n = f.body.len();
    if n == 0 {
        return Err(AlirError::MissingReturn {
            function: f.name.clone(),
        });
    }
    let reach = reachable_indices(f);
    // Forward must-be-initialized analysis: intersection at joins.
    let mut inset: Vec<Option<BTreeSet<String>>> = vec![None; n];
    inset[0] = Some(f.params.iter().cloned().collect());
    let mut work = vec![0usize];
    while let Some(i) = work.pop() {
        let mut out = inset[i].clone().expect("in-set present when scheduled");
        if let Some(d) = f.body[i].def() {
            out.insert(d.to_string());
        }
        for s in successors(f, i) {
            let changed = match &inset[s] {
                None => {
                    inset[s] = Some(out.clone());
                    true
                }
                Some(prev) => {
                    let merged: BTreeSet<String> = prev.intersection(&out).cloned().collect();
                    if &merged != prev {
                        inset[s] = Some(merged);
                        true
                    } else {
                        false
                    }
                }
            };
            if changed {
                work.push(s);
            }
        }
    }
    for (i, op) in f.body.iter().enumerate() {
        if !reach[i] {
            continue;
        }
        let avail = inset[i].as_ref().expect("reachable implies visited");
        for v in op.uses() {
            if !avail.contains(v) {
                return Err(AlirError::UseBeforeDef {
                    function: f.name.clone(),
                    variable: v.to_string(),
                    line: f.lines.get(i).copied().unwrap_or(0),
                });
            }
        }
    }
    Ok(())
}

fn check_types(f: &Function) -> Result<(), AlirError> {
    let mut types: BTreeMap<String, VarType> = BTreeMap::new();
    fn record(var: &str, ty: VarType, types: &mut BTreeMap<String, VarType>) -> bool {
        match types.get(var) {
            Some(prev) => *prev == ty,
            None => {
                types.insert(var.to_string(), ty);
                true
            }
        }
    }
    for p in &f.params {
        record(p, VarType::Str, &mut types);
    }
    for op in &f.body {
        let ok = match op {
            Op::UriMatch { dst, uri, .. } => {
                record(dst, VarType::Int, &mut types) && record(uri, VarType::Str, &mut types)
            }
            Op::If { cond, .. } => match cond {
                Cond::Int { lhs, .. } => record(lhs, VarType::Int, &mut types),
                Cond::Str { lhs, rhs, .. } => {
                    record(lhs, VarType::Str, &mut types)
                        && match rhs {
                            Operand::Var(v) => record(v, VarType::Str, &mut types),
                            Operand::Lit(_) => true,
                        }
                }
                Cond::StartsWith { var, .. } | Cond::Contains { var, .. } => {
                    record(var, VarType::Str, &mut types)
                }
            },
            other => {
                let mut ok = true;
                if let Some(d) = other.def() {
                    ok &= record(d, VarType::Str, &mut types);
                }
                for u in other.uses() {
                    ok &= record(u, VarType::Str, &mut types);
                }
                ok
            }
        };
        if !ok {
            let var = op
                .def()
                .map(str::to_string)
                .or_else(|| op.uses().first().map(|s| s.to_string()))
                .unwrap_or_default();
            return Err(AlirError::TypeConflict {
                function: f.name.clone(),
                variable: var,
            });
        }
    }
    Ok(())
}

fn check_termination(f: &Function) -> Result<(), AlirError> {
    let reach = reachable_indices(f);
    for (i, r) in reach.iter().enumerate() {
        if !r {
            continue;
        }
        let falls_off = match &f.body[i] {
            Op::Return => false,
            Op::If { .. } => i + 1 >= f.body.len(),
            _ => i + 1 >= f.body.len(),
        };
        if falls_off {
            return Err(AlirError::MissingReturn {
                function: f.name.clone(),
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

fn print_cond(cond: &Cond) -> String {
    match cond {
        Cond::Str { lhs, rhs, negated } => {
            let op = if *negated { "!=" } else { "==" };
            match rhs {
                Operand::Var(v) => format!("{lhs} {op} {v}"),
                Operand::Lit(s) => format!("{lhs} {op} \"{s}\""),
            }
        }
        Cond::Int { lhs, rhs, negated } => {
            let op = if *negated { "!=" } else { "==" };
            format!("{lhs} {op} {rhs}")
        }
        Cond::StartsWith { var, lit } => format!("{var} STARTSWITH \"{lit}\""),
        Cond::Contains { var, lit } => format!("{var} CONTAINS \"{lit}\""),
    }
}

fn print_op(op: &Op) -> String {
    match op {
        Op::Const { dst, value } => format!("CONST {dst} \"{value}\""),
        Op::GetExtra { dst, key } => format!("GETEXTRA {dst} \"{key}\""),
        Op::GetUri { dst } => format!("GETURI {dst}"),
        Op::Concat { dst, lhs, rhs } => format!("CONCAT {dst} {lhs} {rhs}"),
        Op::LastSeg { dst, src } => format!("LASTSEG {dst} {src}"),
        Op::Canonical { dst, src } => format!("CANONICAL {dst} {src}"),
        Op::EnvDir { dst, api } => format!("ENVDIR {dst} {api}"),
        Op::UriMatch { dst, table, uri } => format!("URIMATCH {dst} {table} {uri}"),
        Op::If { cond, target } => format!("IF {} GOTO {target}", print_cond(cond)),
        Op::Label { name } => format!("LABEL {name}"),
        Op::Call { callee, args } => format!("CALL {callee}({})", args.join(", ")),
        Op::Sink { kind, args } => format!("SINK {} {}", kind.name(), args.join(" ")),
        Op::Return => "RETURN".to_string(),
    }
}

/// Print a program in canonical layout; `parse_alir(print_alir(p))` is
/// structurally equal to `p`.
pub fn print_alir(program: &AlirProgram) -> String {
    let mut out = String::new();
    for (table, rows) in &program.uri_tables {
        for r in rows {
            out.push_str(&format!(
                "urimap {table} \"{}\" \"{}\" {}\n",
                r.authority, r.pattern, r.code
            ));
        }
    }
    if !program.uri_tables.is_empty() {
        out.push('\n');
    }
    for f in program.functions.values() {
        out.push_str(&format!("fn {}({}) {{\n", f.name, f.params.join(", ")));
        for op in &f.body {
            out.push_str("  ");
            out.push_str(&print_op(op));
            out.push('\n');
        }
        out.push_str("}\n\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const WALLPAPER: &str = r#"
urimap T "com.oneplus.wallpaper" "image/*" 10

fn openFile(mode) {
  GETURI uri
  URIMATCH m T uri
  IF m != 10 GOTO out
  ENVDIR base FilesDir
  CONST sub "/image/"
  CONCAT dir base sub
  LASTSEG seg uri
  CONCAT path dir seg
  SINK open path
  LABEL out
  RETURN
}
"#;

    #[test]
    fn parses_wallpaper_fixture_shape() {
        let p = parse_alir(WALLPAPER).unwrap();
        assert_eq!(p.functions.len(), 1);
        let f = p.function("openFile").unwrap();
        assert_eq!(f.params, vec!["mode"]);
        assert_eq!(p.sinks().len(), 1);
        assert_eq!(p.uri_tables["T"].len(), 1);
        assert_eq!(p.uri_tables["T"][0].code, 10);
    }

    #[test]
    fn program_without_sinks_parses() {
        let p = parse_alir("fn idle() {\n  RETURN\n}\n").unwrap();
        assert!(p.sinks().is_empty());
    }

    #[test]
    fn use_before_def_rejected() {
        let text = "fn f() {\n  CONST a \"x\"\n  CONCAT v a b\n  RETURN\n}\n";
        match parse_alir(text) {
            Err(AlirError::UseBeforeDef { variable, .. }) => assert_eq!(variable, "b"),
            other => panic!("expected use-before-def, got {other:?}"),
        }
    }

    #[test]
    fn def_on_one_branch_only_is_rejected() {
        // v defined only when the branch is taken; joined use must fail.
        let text = r#"
fn f(c) {
  IF c == "x" GOTO skip
  CONST v "a"
  LABEL skip
  SINK open v
  RETURN
}
"#;
        assert!(matches!(
            parse_alir(text),
            Err(AlirError::UseBeforeDef { .. })
        ));
    }

    #[test]
    fn undefined_label_rejected() {
        let text = "fn f(c) {\n  IF c == \"x\" GOTO nowhere\n  RETURN\n}\n";
        assert!(matches!(
            parse_alir(text),
            Err(AlirError::UndefinedLabel { .. })
        ));
    }

    #[test]
    fn undefined_callee_rejected() {
        let text = "fn f() {\n  CALL g()\n  RETURN\n}\n";
        assert!(matches!(
            parse_alir(text),
            Err(AlirError::UndefinedFunction { .. })
        ));
    }

    #[test]
    fn unknown_env_api_rejected() {
        let text = "fn f() {\n  ENVDIR d BogusDir\n  RETURN\n}\n";
        assert!(matches!(
            parse_alir(text),
            Err(AlirError::UnknownEnvApi { .. })
        ));
    }

    #[test]
    fn urimatch_requires_declared_table() {
        let text = "fn f() {\n  GETURI u\n  URIMATCH m T u\n  RETURN\n}\n";
        assert!(matches!(
            parse_alir(text),
            Err(AlirError::UndeclaredUriTable { .. })
        ));
    }

    #[test]
    fn missing_return_rejected() {
        let text = "fn f() {\n  CONST a \"x\"\n}\n";
        assert!(matches!(
            parse_alir(text),
            Err(AlirError::MissingReturn { .. })
        ));
    }

    #[test]
    fn int_var_in_string_position_rejected() {
        let text = "urimap T \"a\" \"b\" 1\n\nfn f() {\n  GETURI u\n  URIMATCH m T u\n  SINK open m\n  RETURN\n}\n";
        assert!(matches!(
            parse_alir(text),
            Err(AlirError::TypeConflict { .. })
        ));
    }

    #[test]
    fn move_sink_takes_two_args() {
        let ok = "fn f() {\n  CONST a \"/x\"\n  CONST b \"/y\"\n  SINK move a b\n  RETURN\n}\n";
        assert!(parse_alir(ok).is_ok());
        let bad = "fn f() {\n  CONST a \"/x\"\n  SINK move a\n  RETURN\n}\n";
        assert!(matches!(parse_alir(bad), Err(AlirError::SinkArity { .. })));
    }

    #[test]
    fn roundtrip_wallpaper() {
        let p = parse_alir(WALLPAPER).unwrap();
        let printed = print_alir(&p);
        let reparsed = parse_alir(&printed).unwrap();
        assert_eq!(p, reparsed);
    }

    #[test]
    fn trailing_comment_ignored() {
        let p = parse_alir("fn f() {\n  CONST a \"x#y\"  # real comment\n  RETURN\n}\n").unwrap();
        match &p.function("f").unwrap().body[0] {
            Op::Const { value, .. } => assert_eq!(value, "x#y"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
