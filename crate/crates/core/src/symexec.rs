//! Directed symbolic execution along a chosen control path.
//!
//! Strings are the only symbolic sort; integers appear only as URI-match
//! result codes and are immediately tied back to the matched pattern so that
//! payload generation sees the pattern, not just the integer. Well-known
//! directory APIs are concretized through a fixed summary table.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::json;
use thiserror::Error;

use crate::constraints::canonical::canonicalize;
use crate::diag::Diagnostic;
use crate::frontend::alir::{AlirProgram, Cond, Op, Operand, SinkKind, StmtId, UriPattern};
use crate::graph::{enumerate_paths, Budgets, FlowSource, Pdg, SourceKind, TaintFlow};

/// Match code returned when no table row matches.
pub const URI_NO_MATCH: i64 = -1;

// ---------------------------------------------------------------------------
// Android-idiom API summaries
// ---------------------------------------------------------------------------

const API_SUMMARIES: &[(&str, &str)] = &[
    ("ExternalStorageDirectory", "/storage/emulated/0"),
    ("FilesDir", "/data/data/<package>/files"),
    ("CacheDir", "/data/data/<package>/cache"),
    (
        "ExternalFilesDir",
        "/storage/emulated/0/Android/data/<package>/files",
    ),
];

pub fn is_known_env_api(name: &str) -> bool {
    API_SUMMARIES.iter().any(|(n, _)| *n == name)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SymexecError {
    #[error("unknown environment API `{0}`")]
    UnknownApi(String),
    #[error("control path inconsistent with program at {at}: {detail}")]
    PathInconsistent { at: String, detail: String },
    #[error("atom budget ({0}) exceeded while executing path")]
    AtomBudgetExceeded(usize),
}

/// Concrete directory returned by a well-known environment API, with
/// `<package>` substituted.
pub fn api_summary(api: &str, package: &str) -> Result<String, SymexecError> {
    API_SUMMARIES
        .iter()
        .find(|(n, _)| *n == api)
        .map(|(_, v)| v.replace("<package>", package))
        .ok_or_else(|| SymexecError::UnknownApi(api.to_string()))
}

// ---------------------------------------------------------------------------
// URI transport semantics
// ---------------------------------------------------------------------------

/// Decode the percent-escapes used by the payload transport: `%2F`/`%2f`
/// for `/` and `%25` for `%`. Other sequences pass through unchanged.
pub fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            match &s[i + 1..i + 3] {
                "2F" | "2f" => {
                    out.push('/');
                    i += 3;
                    continue;
                }
                "25" => {
                    out.push('%');
                    i += 3;
                    continue;
                }
                _ => {}
            }
        }
        out.push(s[i..].chars().next().expect("nonempty"));
        i += s[i..].chars().next().map(char::len_utf8).unwrap_or(1);
    }
    out
}

/// Encode a value for transport as a single URI segment.
pub fn percent_encode_segment(s: &str) -> String {
    s.replace('%', "%25").replace('/', "%2F")
}

/// The decoded last `/`-separated segment of a string; the whole string
/// (decoded) when it contains no separator.
pub fn last_segment(s: &str) -> String {
    match s.rfind('/') {
        Some(p) => percent_decode(&s[p + 1..]),
        None => percent_decode(s),
    }
}

/// Split `scheme://authority/seg1/seg2` into authority and raw segments.
pub fn parse_uri(s: &str) -> Option<(String, Vec<String>)> {
    let rest = s.split_once("://")?.1;
    match rest.split_once('/') {
        Some((auth, path)) => Some((
            auth.to_string(),
            path.split('/').map(str::to_string).collect(),
        )),
        None => Some((rest.to_string(), Vec::new())),
    }
}

fn segment_matches(pattern_seg: &str, uri_seg: &str) -> bool {
    match pattern_seg {
        "*" => true,
        "#" => !uri_seg.is_empty() && uri_seg.bytes().all(|b| b.is_ascii_digit()),
        lit => lit == uri_seg,
    }
}

/// Match a URI string against a table's rows in declaration order; first
/// match wins. Authority must be equal; the pattern matches segment-wise
/// with `*` for one arbitrary segment and `#` for one numeric segment.
pub fn match_uri(rows: &[UriPattern], uri: &str) -> i64 {
    let (authority, segs) = match parse_uri(uri) {
        Some(x) => x,
        None => return URI_NO_MATCH,
    };
    'rows: for row in rows {
        if row.authority != authority {
            continue;
        }
        let pat_segs: Vec<&str> = if row.pattern.is_empty() {
            Vec::new()
        } else {
            row.pattern.split('/').collect()
        };
        if pat_segs.len() != segs.len() {
            continue;
        }
        for (p, s) in pat_segs.iter().zip(segs.iter()) {
            if !segment_matches(p, s) {
                continue 'rows;
            }
        }
        return row.code;
    }
    URI_NO_MATCH
}

// ---------------------------------------------------------------------------
// Symbolic expressions and atoms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum StrExpr {
    Lit(String),
    /// External input: the key is the extra name, or `"uri"` for the
    /// invocation URI. All reads of the URI within one invocation share the
    /// same concrete value.
    Sym { source: StmtId, key: String },
    Concat(Box<StrExpr>, Box<StrExpr>),
    LastSeg(Box<StrExpr>),
    Canonical(Box<StrExpr>),
}

impl StrExpr {
    pub fn lit(s: impl Into<String>) -> StrExpr {
        StrExpr::Lit(s.into())
    }

    /// Concatenation with literal coalescing.
    pub fn concat(a: StrExpr, b: StrExpr) -> StrExpr {
        match (a, b) {
            (StrExpr::Lit(x), StrExpr::Lit(y)) => StrExpr::Lit(format!("{x}{y}")),
            (a, b) => StrExpr::Concat(Box::new(a), Box::new(b)),
        }
    }

    pub fn last_seg(e: StrExpr) -> StrExpr {
        match e {
            StrExpr::Lit(s) => StrExpr::Lit(last_segment(&s)),
            e => StrExpr::LastSeg(Box::new(e)),
        }
    }

    pub fn canonical(e: StrExpr) -> StrExpr {
        match e {
            StrExpr::Lit(s) => StrExpr::Lit(canonicalize(&s).path),
            e => StrExpr::Canonical(Box::new(e)),
        }
    }

    /// Distinct symbol keys in this expression, in order of first occurrence.
    pub fn sym_keys(&self) -> Vec<String> {
        let mut keys = Vec::new();
        self.visit_syms(&mut |key, _| {
            if !keys.iter().any(|k| k == key) {
                keys.push(key.to_string());
            }
        });
        keys
    }

    fn visit_syms(&self, f: &mut impl FnMut(&str, bool)) {
        self.visit_syms_inner(f, false)
    }

    fn visit_syms_inner(&self, f: &mut impl FnMut(&str, bool), under_canonical: bool) {
        match self {
            StrExpr::Lit(_) => {}
            StrExpr::Sym { key, .. } => f(key, under_canonical),
            StrExpr::Concat(a, b) => {
                a.visit_syms_inner(f, under_canonical);
                b.visit_syms_inner(f, under_canonical);
            }
            StrExpr::LastSeg(e) => e.visit_syms_inner(f, under_canonical),
            StrExpr::Canonical(e) => e.visit_syms_inner(f, true),
        }
    }

    /// True when every symbol occurrence is dominated by a `Canonical` node.
    pub fn all_syms_canonical(&self) -> bool {
        let mut all = true;
        self.visit_syms(&mut |_, under| all &= under);
        all
    }

    /// Per-key domination: true iff every occurrence of the key sits under a
    /// `Canonical` node. Mixed cases are flagged by detectors rather than
    /// guessed at.
    pub fn canonical_domination(&self) -> BTreeMap<String, bool> {
        let mut map: BTreeMap<String, bool> = BTreeMap::new();
        self.visit_syms(&mut |key, under| {
            map.entry(key.to_string())
                .and_modify(|v| *v &= under)
                .or_insert(under);
        });
        map
    }

    pub fn has_syms(&self) -> bool {
        !self.sym_keys().is_empty()
    }

    /// Prefix-form JSON rendering for `--dump-conditions`.
    pub fn to_prefix_json(&self) -> serde_json::Value {
        match self {
            StrExpr::Lit(s) => json!(["lit", s]),
            StrExpr::Sym { source, key } => json!(["sym", source.to_string(), key]),
            StrExpr::Concat(a, b) => json!(["concat", a.to_prefix_json(), b.to_prefix_json()]),
            StrExpr::LastSeg(e) => json!(["lastseg", e.to_prefix_json()]),
            StrExpr::Canonical(e) => json!(["canonical", e.to_prefix_json()]),
        }
    }
}

impl fmt::Display for StrExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrExpr::Lit(s) => write!(f, "\"{s}\""),
            StrExpr::Sym { key, .. } => write!(f, "${key}"),
            StrExpr::Concat(a, b) => write!(f, "{a} ++ {b}"),
            StrExpr::LastSeg(e) => write!(f, "lastseg({e})"),
            StrExpr::Canonical(e) => write!(f, "canonical({e})"),
        }
    }
}

/// One branch condition collected along an executed path, in the polarity
/// that held on that path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Atom {
    StrEq {
        lhs: StrExpr,
        rhs: StrExpr,
        negated: bool,
    },
    StartsWith {
        expr: StrExpr,
        prefix: String,
        negated: bool,
    },
    Contains {
        expr: StrExpr,
        needle: String,
        negated: bool,
    },
    /// `match(table, uri) == code` (or `!=` when negated).
    UriMatch {
        table: String,
        uri: StrExpr,
        code: i64,
        negated: bool,
    },
}

impl Atom {
    pub fn negate(self) -> Atom {
        match self {
            Atom::StrEq { lhs, rhs, negated } => Atom::StrEq {
                lhs,
                rhs,
                negated: !negated,
            },
            Atom::StartsWith {
                expr,
                prefix,
                negated,
            } => Atom::StartsWith {
                expr,
                prefix,
                negated: !negated,
            },
            Atom::Contains {
                expr,
                needle,
                negated,
            } => Atom::Contains {
                expr,
                needle,
                negated: !negated,
            },
            Atom::UriMatch {
                table,
                uri,
                code,
                negated,
            } => Atom::UriMatch {
                table,
                uri,
                code,
                negated: !negated,
            },
        }
    }

    pub fn to_prefix_json(&self) -> serde_json::Value {
        match self {
            Atom::StrEq { lhs, rhs, negated } => json!([
                if *negated { "strne" } else { "streq" },
                lhs.to_prefix_json(),
                rhs.to_prefix_json()
            ]),
            Atom::StartsWith {
                expr,
                prefix,
                negated,
            } => json!([
                if *negated { "not-startswith" } else { "startswith" },
                expr.to_prefix_json(),
                prefix
            ]),
            Atom::Contains {
                expr,
                needle,
                negated,
            } => json!([
                if *negated { "not-contains" } else { "contains" },
                expr.to_prefix_json(),
                needle
            ]),
            Atom::UriMatch {
                table,
                uri,
                code,
                negated,
            } => json!([
                if *negated { "urimatch-ne" } else { "urimatch-eq" },
                table,
                uri.to_prefix_json(),
                code
            ]),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::StrEq { lhs, rhs, negated } => {
                write!(f, "{lhs} {} {rhs}", if *negated { "!=" } else { "==" })
            }
            Atom::StartsWith {
                expr,
                prefix,
                negated,
            } => {
                if *negated {
                    write!(f, "!startswith({expr}, \"{prefix}\")")
                } else {
                    write!(f, "startswith({expr}, \"{prefix}\")")
                }
            }
            Atom::Contains {
                expr,
                needle,
                negated,
            } => {
                if *negated {
                    write!(f, "!contains({expr}, \"{needle}\")")
                } else {
                    write!(f, "contains({expr}, \"{needle}\")")
                }
            }
            Atom::UriMatch {
                table,
                uri,
                code,
                negated,
            } => write!(
                f,
                "urimatch({table}, {uri}) {} {code}",
                if *negated { "!=" } else { "==" }
            ),
        }
    }
}

/// The result of symbolically executing one control path: the branch atoms
/// in path order, the symbolic pathname reaching the sink, and the
/// sanitization verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathCondition {
    pub flow: TaintFlow,
    pub atoms: Vec<Atom>,
    pub sink_path: StrExpr,
    pub sink_kind: SinkKind,
    /// True iff every symbol in `sink_path` is dominated by a `Canonical`
    /// node (vacuously true for all-literal paths).
    pub sanitized: bool,
    /// Package of the app under analysis; used for URI authority defaults.
    pub app_package: String,
}

impl PathCondition {
    pub fn atom_summary(&self) -> Vec<String> {
        self.atoms.iter().map(|a| a.to_string()).collect()
    }

    pub fn to_prefix_json(&self) -> serde_json::Value {
        json!({
            "entry": { "component": self.flow.component, "function": self.flow.entry },
            "sink": self.flow.sink.to_string(),
            "sinkKind": self.sink_kind,
            "atoms": self.atoms.iter().map(Atom::to_prefix_json).collect::<Vec<_>>(),
            "sinkPath": self.sink_path.to_prefix_json(),
            "sanitized": self.sanitized,
        })
    }
}

// ---------------------------------------------------------------------------
// Path execution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum SymValue {
    Str(StrExpr),
    /// URI-match result: the table and the uri expression it was applied to.
    Match { table: String, uri: StrExpr },
}

/// Symbolically execute one taint flow's control path and collect its path
/// condition. CANONICAL statements wrap operands in `Canonical`; URIMATCH
/// conditions record the table reference so payload generation can see the
/// pattern.
pub fn exec_path(
    program: &AlirProgram,
    flow: &TaintFlow,
    package: &str,
    budgets: &Budgets,
) -> Result<PathCondition, SymexecError> {
    let mut frames: Vec<BTreeMap<String, SymValue>> = vec![BTreeMap::new()];
    let mut atoms: Vec<Atom> = Vec::new();
    let mut sink_result: Option<(StrExpr, SinkKind)> = None;

    let inconsistent = |at: &StmtId, detail: &str| SymexecError::PathInconsistent {
        at: at.to_string(),
        detail: detail.to_string(),
    };

    for (pos, id) in flow.control_path.iter().enumerate() {
        let op = program
            .stmt(id)
            .ok_or_else(|| inconsistent(id, "statement not found"))?;
        let env = frames.last_mut().expect("frame");
        let str_of = |env: &BTreeMap<String, SymValue>, var: &str| -> Result<StrExpr, SymexecError> {
            match env.get(var) {
                Some(SymValue::Str(e)) => Ok(e.clone()),
                Some(SymValue::Match { .. }) => {
                    Err(inconsistent(id, &format!("`{var}` is a match result")))
                }
                None => Err(inconsistent(id, &format!("`{var}` unbound"))),
            }
        };
        match op {
            Op::Const { dst, value } => {
                env.insert(dst.clone(), SymValue::Str(StrExpr::lit(value.clone())));
            }
            Op::GetExtra { dst, key } => {
                env.insert(
                    dst.clone(),
                    SymValue::Str(StrExpr::Sym {
                        source: id.clone(),
                        key: key.clone(),
                    }),
                );
            }
            Op::GetUri { dst } => {
                env.insert(
                    dst.clone(),
                    SymValue::Str(StrExpr::Sym {
                        source: id.clone(),
                        key: "uri".to_string(),
                    }),
                );
            }
            Op::Concat { dst, lhs, rhs } => {
                let a = str_of(env, lhs)?;
                let b = str_of(env, rhs)?;
                env.insert(dst.clone(), SymValue::Str(StrExpr::concat(a, b)));
            }
            Op::LastSeg { dst, src } => {
                let e = str_of(env, src)?;
                env.insert(dst.clone(), SymValue::Str(StrExpr::last_seg(e)));
            }
            Op::Canonical { dst, src } => {
                let e = str_of(env, src)?;
                env.insert(dst.clone(), SymValue::Str(StrExpr::canonical(e)));
            }
            Op::EnvDir { dst, api } => {
                let dir = api_summary(api, package)?;
                env.insert(dst.clone(), SymValue::Str(StrExpr::lit(dir)));
            }
            Op::UriMatch { dst, table, uri } => {
                let e = str_of(env, uri)?;
                env.insert(
                    dst.clone(),
                    SymValue::Match {
                        table: table.clone(),
                        uri: e,
                    },
                );
            }
            Op::If { cond, target } => {
                let next = flow
                    .control_path
                    .get(pos + 1)
                    .ok_or_else(|| inconsistent(id, "path ends at a branch"))?;
                let func = program
                    .function(&id.function)
                    .ok_or_else(|| inconsistent(id, "function not found"))?;
                let target_idx = func
                    .label_index(target)
                    .ok_or_else(|| inconsistent(id, "branch target missing"))?;
                let taken = if next.function == id.function && next.index == target_idx {
                    true
                } else if next.function == id.function && next.index == id.index + 1 {
                    false
                } else {
                    return Err(inconsistent(id, "successor not a branch successor"));
                };
                let atom = match cond {
                    Cond::Str { lhs, rhs, negated } => {
                        let l = str_of(env, lhs)?;
                        let r = match rhs {
                            Operand::Var(v) => str_of(env, v)?,
                            Operand::Lit(s) => StrExpr::lit(s.clone()),
                        };
                        Atom::StrEq {
                            lhs: l,
                            rhs: r,
                            negated: *negated,
                        }
                    }
                    Cond::Int { lhs, rhs, negated } => match env.get(lhs) {
                        Some(SymValue::Match { table, uri }) => Atom::UriMatch {
                            table: table.clone(),
                            uri: uri.clone(),
                            code: *rhs,
                            negated: *negated,
                        },
                        _ => return Err(inconsistent(id, "integer compare on non-match value")),
                    },
                    Cond::StartsWith { var, lit } => Atom::StartsWith {
                        expr: str_of(env, var)?,
                        prefix: lit.clone(),
                        negated: false,
                    },
                    Cond::Contains { var, lit } => Atom::Contains {
                        expr: str_of(env, var)?,
                        needle: lit.clone(),
                        negated: false,
                    },
                };
                atoms.push(if taken { atom } else { atom.negate() });
                if atoms.len() > budgets.max_atoms {
                    return Err(SymexecError::AtomBudgetExceeded(budgets.max_atoms));
                }
            }
            Op::Label { .. } => {}
            Op::Call { callee, args } => {
                let func = program
                    .function(callee)
                    .ok_or_else(|| inconsistent(id, "callee not found"))?;
                let mut new_env = BTreeMap::new();
                for (p, a) in func.params.iter().zip(args.iter()) {
                    new_env.insert(p.clone(), SymValue::Str(str_of(env, a)?));
                }
                frames.push(new_env);
            }
            Op::Sink { kind, args } => {
                // The first argument is the primary pathname. The flow's
                // control path ends at its sink, so the binding captured at
                // the final position is the one that holds.
                let e = str_of(env, &args[0])?;
                if pos + 1 == flow.control_path.len() && *id == flow.sink {
                    sink_result = Some((e, *kind));
                }
            }
            Op::Return => {
                if frames.len() > 1 {
                    frames.pop();
                }
            }
        }
    }

    let (sink_path, sink_kind) = sink_result.ok_or_else(|| SymexecError::PathInconsistent {
        at: flow.sink.to_string(),
        detail: "path never reached the flow's sink".to_string(),
    })?;
    let sanitized = sink_path.all_syms_canonical();
    Ok(PathCondition {
        flow: flow.clone(),
        atoms,
        sink_path,
        sink_kind,
        sanitized,
        app_package: package.to_string(),
    })
}

/// Symbolically execute every control path from the given entry points to an
/// internal sink, producing one path condition per (entry, control path).
/// Entries with no reaching path contribute nothing.
pub fn exec_all_entries(
    program: &AlirProgram,
    pdg: &Pdg,
    package: &str,
    entries: &[(String, String)],
    sink: &StmtId,
    budgets: &Budgets,
) -> (Vec<PathCondition>, Vec<Diagnostic>) {
    let mut conditions = Vec::new();
    let mut diags = Vec::new();
    let sink_set = std::iter::once(sink.clone()).collect();
    for (component, entry_fn) in entries {
        let (hits, d) = enumerate_paths(program, pdg, entry_fn, &sink_set, budgets);
        diags.extend(d);
        for hit in hits {
            let internal: std::collections::BTreeSet<StmtId> = hit
                .contributing
                .iter()
                .filter(|s| {
                    program
                        .stmt(s)
                        .map(Op::is_internal_source)
                        .unwrap_or(false)
                })
                .cloned()
                .collect();
            let flow = TaintFlow {
                component: component.clone(),
                entry: entry_fn.clone(),
                source: FlowSource::Internal(internal),
                sink: hit.sink.clone(),
                control_path: hit.control_path,
                source_kind: SourceKind::Internal,
            };
            match exec_path(program, &flow, package, budgets) {
                Ok(cond) => conditions.push(cond),
                Err(SymexecError::AtomBudgetExceeded(n)) => {
                    diags.push(
                        Diagnostic::warning(
                            "atom-budget-exhausted",
                            format!("path to {sink} exceeded the {n}-atom budget"),
                        )
                        .at(entry_fn.clone()),
                    );
                }
                Err(e) => {
                    diags.push(
                        Diagnostic::error("symexec-internal", e.to_string()).at(entry_fn.clone()),
                    );
                }
            }
        }
    }
    (conditions, diags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::alir::parse_alir;
    use crate::graph::{build_pdg, forward_taint};
    use std::collections::BTreeSet;

    #[test]
    fn api_summary_table() {
        assert_eq!(
            api_summary("ExternalStorageDirectory", "com.x").unwrap(),
            "/storage/emulated/0"
        );
        assert_eq!(
            api_summary("FilesDir", "com.x").unwrap(),
            "/data/data/com.x/files"
        );
        assert_eq!(
            api_summary("CacheDir", "com.x").unwrap(),
            "/data/data/com.x/cache"
        );
        assert_eq!(
            api_summary("ExternalFilesDir", "com.x").unwrap(),
            "/storage/emulated/0/Android/data/com.x/files"
        );
        assert!(matches!(
            api_summary("HomeDir", "com.x"),
            Err(SymexecError::UnknownApi(_))
        ));
    }

    #[test]
    fn uri_matching_segmentwise() {
        let rows = vec![UriPattern {
            authority: "com.example.app".into(),
            pattern: "image/*".into(),
            code: 10,
        }];
        assert_eq!(match_uri(&rows, "content://com.example.app/image/cat.png"), 10);
        assert_eq!(
            match_uri(&rows, "content://com.example.app/image/..%2F..%2Fsecret"),
            10
        );
        assert_eq!(match_uri(&rows, "content://com.example.app/image"), URI_NO_MATCH);
        assert_eq!(
            match_uri(&rows, "content://com.example.app/image/a/b"),
            URI_NO_MATCH
        );
        assert_eq!(match_uri(&rows, "content://other/image/x"), URI_NO_MATCH);
    }

    #[test]
    fn numeric_wildcard() {
        let rows = vec![UriPattern {
            authority: "a".into(),
            pattern: "item/#".into(),
            code: 7,
        }];
        assert_eq!(match_uri(&rows, "content://a/item/42"), 7);
        assert_eq!(match_uri(&rows, "content://a/item/x42"), URI_NO_MATCH);
    }

    #[test]
    fn decode_and_last_segment() {
        assert_eq!(percent_decode("..%2F..%2Fshared_prefs"), "../../shared_prefs");
        assert_eq!(percent_decode("a%25b"), "a%b");
        assert_eq!(
            last_segment("content://app/image/..%2F..%2Fshared_prefs"),
            "../../shared_prefs"
        );
        assert_eq!(last_segment("plain"), "plain");
        assert_eq!(percent_decode(&percent_encode_segment("a/b%c")), "a/b%c");
    }

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

    fn wallpaper_condition() -> PathCondition {
        let p = parse_alir(WALLPAPER).unwrap();
        let (pdg, _) = build_pdg(&p, &["openFile".into()]);
        let sources: BTreeSet<StmtId> = BTreeSet::from([StmtId::new("openFile", 0)]);
        let sinks: BTreeSet<StmtId> = p.sinks().into_iter().collect();
        let entries = vec![("WallpaperProvider".to_string(), "openFile".to_string())];
        let (flows, _) = forward_taint(&p, &pdg, &entries, &sources, &sinks, &Budgets::default());
        exec_path(&p, &flows[0], "com.oneplus.wallpaper", &Budgets::default()).unwrap()
    }

    #[test]
    fn wallpaper_condition_shape() {
        let cond = wallpaper_condition();
        let uri_sym = StrExpr::Sym {
            source: StmtId::new("openFile", 0),
            key: "uri".to_string(),
        };
        assert_eq!(
            cond.atoms,
            vec![Atom::UriMatch {
                table: "T".into(),
                uri: uri_sym.clone(),
                code: 10,
                negated: false,
            }]
        );
        // Adjacent literals coalesce, so the sink path is exactly
        // Lit(base dir) ++ lastseg($uri).
        assert_eq!(
            cond.sink_path,
            StrExpr::Concat(
                Box::new(StrExpr::lit(
                    "/data/data/com.oneplus.wallpaper/files/image/"
                )),
                Box::new(StrExpr::LastSeg(Box::new(uri_sym))),
            )
        );
        assert!(!cond.sanitized);
        assert_eq!(cond.sink_kind, SinkKind::Open);
    }

    #[test]
    fn canonical_before_sink_sets_sanitized() {
        let text = r#"
fn f() {
  GETEXTRA name "n"
  CONST base "/data/app/files/"
  CONCAT p base name
  CANONICAL q p
  SINK open q
  RETURN
}
"#;
        let p = parse_alir(text).unwrap();
        let (pdg, _) = build_pdg(&p, &["f".into()]);
        let sources: BTreeSet<StmtId> = BTreeSet::from([StmtId::new("f", 0)]);
        let sinks: BTreeSet<StmtId> = p.sinks().into_iter().collect();
        let entries = vec![("C".to_string(), "f".to_string())];
        let (flows, _) = forward_taint(&p, &pdg, &entries, &sources, &sinks, &Budgets::default());
        let cond = exec_path(&p, &flows[0], "com.app", &Budgets::default()).unwrap();
        assert!(cond.sanitized);
    }

    #[test]
    fn no_branches_means_no_atoms() {
        let text = "fn f() {\n  GETEXTRA n \"k\"\n  CONST b \"/data/\"\n  CONCAT p b n\n  SINK open p\n  RETURN\n}\n";
        let p = parse_alir(text).unwrap();
        let (pdg, _) = build_pdg(&p, &["f".into()]);
        let sources: BTreeSet<StmtId> = BTreeSet::from([StmtId::new("f", 0)]);
        let sinks: BTreeSet<StmtId> = p.sinks().into_iter().collect();
        let entries = vec![("C".to_string(), "f".to_string())];
        let (flows, _) = forward_taint(&p, &pdg, &entries, &sources, &sinks, &Budgets::default());
        let cond = exec_path(&p, &flows[0], "com.app", &Budgets::default()).unwrap();
        assert!(cond.atoms.is_empty());
    }

    const RESETREASON: &str = r#"
fn onReceive() {
  CONST path "/data/log/power_off_resetreason.txt"
  SINK open path
  RETURN
}
"#;

    #[test]
    fn all_literal_sink_path_from_one_entry() {
        let p = parse_alir(RESETREASON).unwrap();
        let (pdg, _) = build_pdg(&p, &["onReceive".into()]);
        let sink = StmtId::new("onReceive", 1);
        let entries = vec![("BootReceiver".to_string(), "onReceive".to_string())];
        let (conds, _) = exec_all_entries(
            &p,
            &pdg,
            "com.sec.resetreason",
            &entries,
            &sink,
            &Budgets::default(),
        );
        assert_eq!(conds.len(), 1);
        assert_eq!(
            conds[0].sink_path,
            StrExpr::lit("/data/log/power_off_resetreason.txt")
        );
        assert!(!conds[0].sink_path.has_syms());
        // Vacuously sanitized: there is no symbol to dominate.
        assert!(conds[0].sanitized);
    }

    const DUALENTRY: &str = r#"
fn onBoot() {
  CALL writeLog()
  RETURN
}

fn onShutdown() {
  CALL writeLog()
  RETURN
}

fn writeLog() {
  CONST p "/data/log/events.txt"
  SINK create p
  RETURN
}
"#;

    #[test]
    fn sink_reachable_from_two_entries_yields_two_conditions() {
        let p = parse_alir(DUALENTRY).unwrap();
        let entries = vec![
            ("BootReceiver".to_string(), "onBoot".to_string()),
            ("ShutdownReceiver".to_string(), "onShutdown".to_string()),
        ];
        let entry_fns: Vec<String> = entries.iter().map(|(_, f)| f.clone()).collect();
        let (pdg, _) = build_pdg(&p, &entry_fns);
        let sink = StmtId::new("writeLog", 1);
        let (conds, _) = exec_all_entries(&p, &pdg, "com.x", &entries, &sink, &Budgets::default());
        assert_eq!(conds.len(), 2);
    }

    #[test]
    fn unreachable_sink_yields_nothing() {
        let p = parse_alir(RESETREASON).unwrap();
        let (pdg, _) = build_pdg(&p, &["onReceive".into()]);
        let sink = StmtId::new("onReceive", 1);
        let entries = vec![("Other".to_string(), "missing".to_string())];
        let (conds, _) = exec_all_entries(&p, &pdg, "com.x", &entries, &sink, &Budgets::default());
        assert!(conds.is_empty());
    }
}
