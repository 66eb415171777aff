//! SMT-LIB 2.6 strings-theory emission for external cross-checking.
//!
//! The emitted document works over one declared constant per payload symbol:
//! for a URI consumed through its last path segment, the constant is the
//! decoded segment value and the URI itself is a `define-fun` that re-encodes
//! it into the structural form pinned by the URI-match atoms. Branch atoms
//! translate directly over those names; the goal becomes a finite disjunction
//! of landing equalities produced by unrolling the canonicalization of the
//! sink template's literal prefix (the same bounded rewriting the internal
//! solver inverts). The encodable fragment is documented in
//! `docs/smt_encoding.md`; conditions outside it are reported as unsupported
//! rather than approximated.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::constraints::canonical::canonicalize;
use crate::constraints::solve::{invert_against_prefix, template_of, Goal, Part};
use crate::frontend::alir::UriPattern;
use crate::symexec::{match_uri, Atom, PathCondition, StrExpr, URI_NO_MATCH};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmtEmitError {
    #[error("condition outside the encodable fragment: {0}")]
    Unsupported(String),
}

fn smt_string(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn smt_name(prefix: &str, key: &str) -> String {
    let clean: String = key
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{prefix}_{clean}")
}

#[derive(Debug, Clone)]
struct KeyModel {
    key: String,
    /// SMT constant holding the payload value (decoded segment for encoded
    /// URIs, the raw string otherwise).
    val_name: String,
    /// SMT term for the full string the program reads (equals `val_name`
    /// unless the key is a structurally pinned URI).
    str_term: String,
    /// Row code the URI structure is pinned to, if any.
    pinned_code: Option<i64>,
    /// Whether the key's value is restricted to a benign segment.
    canonical: bool,
    last_seg: bool,
}

fn encode_term(val: &str) -> String {
    // percent-encode: '%' -> "%25" first, then '/' -> "%2F".
    format!(
        "(str.replace_all (str.replace_all {val} \"%\" \"%25\") \"/\" \"%2F\")"
    )
}

/// Build the define-fun body for a URI pinned to a table row: literal
/// pattern segments stay literal, inner wildcards become fixed fillers, the
/// final segment carries the encoded value.
fn uri_structure(row: &UriPattern, val_name: &str) -> Result<String, SmtEmitError> {
    let pat_segs: Vec<&str> = if row.pattern.is_empty() {
        Vec::new()
    } else {
        row.pattern.split('/').collect()
    };
    if pat_segs.is_empty() {
        return Err(SmtEmitError::Unsupported(
            "URI pattern with no segments".to_string(),
        ));
    }
    let mut parts: Vec<String> = vec![smt_string(&format!("content://{}/", row.authority))];
    for (i, p) in pat_segs.iter().enumerate() {
        let is_last = i + 1 == pat_segs.len();
        if i > 0 {
            parts.push(smt_string("/"));
        }
        match (*p, is_last) {
            ("*", true) => parts.push(encode_term(val_name)),
            ("*", false) => parts.push(smt_string("a")),
            ("#", true) => {
                return Err(SmtEmitError::Unsupported(
                    "numeric wildcard in final segment".to_string(),
                ))
            }
            ("#", false) => parts.push(smt_string("0")),
            (lit, _) => parts.push(smt_string(lit)),
        }
    }
    Ok(format!("(str.++ {})", parts.join(" ")))
}

/// Pick a URI shape that cannot match any table row, probing with both a
/// benign and a traversal-looking placeholder.
fn no_match_structure(rows: &[UriPattern], val_name: &str) -> Result<String, SmtEmitError> {
    let authority = rows
        .first()
        .map(|r| r.authority.clone())
        .unwrap_or_else(|| "app".to_string());
    for shape_segs in [
        vec!["zz-nomatch"],
        vec!["zz", "zz", "zz-nomatch"],
        vec!["zz", "zz", "zz", "zz", "zz-nomatch"],
    ] {
        let probe_benign = format!(
            "content://{authority}/{}/{}",
            shape_segs.join("/"),
            "zzz"
        );
        let probe_trav = format!(
            "content://{authority}/{}/{}",
            shape_segs.join("/"),
            "..%2F..%2Fzzz"
        );
        if match_uri(rows, &probe_benign) == URI_NO_MATCH
            && match_uri(rows, &probe_trav) == URI_NO_MATCH
        {
            let mut parts =
                vec![smt_string(&format!("content://{authority}/{}/", shape_segs.join("/")))];
            parts.push(encode_term(val_name));
            return Ok(format!("(str.++ {})", parts.join(" ")));
        }
    }
    Err(SmtEmitError::Unsupported(
        "no reliably unmatched URI shape for this table".to_string(),
    ))
}

fn expr_term(expr: &StrExpr, models: &BTreeMap<String, KeyModel>) -> Result<String, SmtEmitError> {
    match expr {
        StrExpr::Lit(s) => Ok(smt_string(s)),
        StrExpr::Sym { key, .. } => {
            let m = models
                .get(key)
                .ok_or_else(|| SmtEmitError::Unsupported(format!("unmodeled symbol `{key}`")))?;
            Ok(m.str_term.clone())
        }
        StrExpr::Concat(a, b) => Ok(format!(
            "(str.++ {} {})",
            expr_term(a, models)?,
            expr_term(b, models)?
        )),
        StrExpr::LastSeg(inner) => match inner.as_ref() {
            StrExpr::Sym { key, .. } => {
                let m = models.get(key).ok_or_else(|| {
                    SmtEmitError::Unsupported(format!("unmodeled symbol `{key}`"))
                })?;
                if m.last_seg {
                    Ok(m.val_name.clone())
                } else {
                    Err(SmtEmitError::Unsupported(
                        "last-segment of a raw symbol".to_string(),
                    ))
                }
            }
            _ => Err(SmtEmitError::Unsupported(
                "last-segment of a composite expression".to_string(),
            )),
        },
        StrExpr::Canonical(inner) => {
            // Symbols under Canonical are benign-restricted, so lexical
            // normalization is the identity on their contribution.
            expr_term(inner, models)
        }
    }
}

fn atom_assert(
    atom: &Atom,
    models: &BTreeMap<String, KeyModel>,
) -> Result<Option<String>, SmtEmitError> {
    let t = match atom {
        Atom::StrEq { lhs, rhs, negated } => {
            let e = format!("(= {} {})", expr_term(lhs, models)?, expr_term(rhs, models)?);
            if *negated {
                format!("(not {e})")
            } else {
                e
            }
        }
        Atom::StartsWith {
            expr,
            prefix,
            negated,
        } => {
            let e = format!(
                "(str.prefixof {} {})",
                smt_string(prefix),
                expr_term(expr, models)?
            );
            if *negated {
                format!("(not {e})")
            } else {
                e
            }
        }
        Atom::Contains {
            expr,
            needle,
            negated,
        } => {
            let e = format!(
                "(str.contains {} {})",
                expr_term(expr, models)?,
                smt_string(needle)
            );
            if *negated {
                format!("(not {e})")
            } else {
                e
            }
        }
        Atom::UriMatch { uri, code, negated, .. } => {
            // Consumed by the pinned structure: residually true or false.
            let keys = uri.sym_keys();
            let key = keys.first().ok_or_else(|| {
                SmtEmitError::Unsupported("URI match over a literal".to_string())
            })?;
            let m = models
                .get(key)
                .ok_or_else(|| SmtEmitError::Unsupported(format!("unmodeled symbol `{key}`")))?;
            let actual = m.pinned_code.unwrap_or(URI_NO_MATCH);
            let holds = (actual == *code) != *negated;
            if holds {
                return Ok(None); // satisfied by construction
            }
            "false".to_string()
        }
    };
    Ok(Some(t))
}

/// Emit an SMT-LIB 2.6 document over the strings theory for one path
/// condition and goal: one declared constant per payload symbol, the atom
/// assertions, the sink construction, and the goal as a disjunction of
/// landing equalities, followed by `(check-sat)` and `(get-model)`.
pub fn emit_smtlib(
    cond: &PathCondition,
    goal: Goal<'_>,
    tables: &BTreeMap<String, Vec<UriPattern>>,
) -> Result<String, SmtEmitError> {
    let template = template_of(&cond.sink_path).ok_or_else(|| {
        SmtEmitError::Unsupported("sink path outside the linear template fragment".to_string())
    })?;

    // Inventory of keys: sink path plus atoms.
    let mut keys: Vec<String> = cond.sink_path.sym_keys();
    for atom in &cond.atoms {
        for e in match atom {
            Atom::StrEq { lhs, rhs, .. } => vec![lhs, rhs],
            Atom::StartsWith { expr, .. } | Atom::Contains { expr, .. } => vec![expr],
            Atom::UriMatch { uri, .. } => vec![uri],
        } {
            for k in e.sym_keys() {
                if !keys.contains(&k) {
                    keys.push(k);
                }
            }
        }
    }
    keys.sort();

    let domination = cond.sink_path.canonical_domination();

    // Per-key models.
    let mut models: BTreeMap<String, KeyModel> = BTreeMap::new();
    let mut defines: Vec<String> = Vec::new();
    let mut declares: Vec<String> = Vec::new();
    let mut asserts: Vec<String> = Vec::new();

    for key in &keys {
        let val_name = smt_name("val", key);
        declares.push(format!("(declare-const {val_name} String)"));
        let canonical = domination.get(key).copied().unwrap_or(false);

        // Occurrence shape within the sink template.
        let mut last_seg = true;
        let mut in_sink = false;
        for p in &template {
            if let Part::Sym {
                key: k,
                last_seg: ls,
                ..
            } = p
            {
                if k == key {
                    in_sink = true;
                    last_seg &= *ls;
                }
            }
        }
        let last_seg = in_sink && last_seg;

        let match_atoms: Vec<(&String, i64, bool)> = cond
            .atoms
            .iter()
            .filter_map(|a| match a {
                Atom::UriMatch {
                    table,
                    uri,
                    code,
                    negated,
                } if uri.sym_keys().contains(key) => Some((table, *code, *negated)),
                _ => None,
            })
            .collect();

        let (str_term, pinned_code) = if match_atoms.is_empty() {
            if key == "uri" && last_seg {
                let uri_name = smt_name("str", key);
                defines.push(format!(
                    "(define-fun {uri_name} () String (str.++ {} {}))",
                    smt_string(&format!("content://{}/", cond.app_package)),
                    encode_term(&val_name)
                ));
                (uri_name, None)
            } else {
                (val_name.clone(), None)
            }
        } else {
            let table_name = match_atoms[0].0;
            let rows = tables.get(table_name).ok_or_else(|| {
                SmtEmitError::Unsupported(format!("unknown URI table `{table_name}`"))
            })?;
            let positive: Vec<i64> = match_atoms
                .iter()
                .filter(|(_, _, neg)| !neg)
                .map(|(_, c, _)| *c)
                .collect();
            let admissible = |code: i64| {
                match_atoms
                    .iter()
                    .all(|(t, c, neg)| *t != table_name || ((code == *c) != *neg))
            };
            let structure = if let Some(code) = positive.first() {
                let row = rows
                    .iter()
                    .find(|r| r.code == *code)
                    .ok_or_else(|| {
                        SmtEmitError::Unsupported(format!(
                            "no row with code {code} in table `{table_name}`"
                        ))
                    })?;
                if !admissible(row.code) {
                    // Contradictory match atoms.
                    asserts.push("(assert false)".to_string());
                }
                (uri_structure(row, &val_name)?, Some(row.code))
            } else {
                (no_match_structure(rows, &val_name)?, None)
            };
            let uri_name = smt_name("str", key);
            defines.push(format!(
                "(define-fun {uri_name} () String {})",
                structure.0
            ));
            (uri_name, structure.1)
        };

        if canonical {
            asserts.push(format!(
                "(assert (not (str.contains {val_name} \"/\")))"
            ));
            asserts.push(format!(
                "(assert (not (str.contains {val_name} \"..\")))"
            ));
        }

        models.insert(
            key.clone(),
            KeyModel {
                key: key.clone(),
                val_name,
                str_term,
                pinned_code,
                canonical,
                last_seg,
            },
        );
    }

    for atom in &cond.atoms {
        if let Some(t) = atom_assert(atom, &models)? {
            asserts.push(format!("(assert {t})"));
        }
    }

    // Goal encoding: finite disjunction of landing equalities for the free
    // symbol in the sink template.
    let targets: Vec<String> = match goal {
        Goal::ReachPrivate(fc) => fc
            .private_prefixes
            .iter()
            .flat_map(|p| [p.clone(), format!("{p}/secret.txt")])
            .filter(|t| fc.is_private(t))
            .collect(),
        Goal::ReachHijackable(fc) => fc
            .hijackable_dirs
            .iter()
            .flat_map(|d| [d.clone(), format!("{d}/drop")])
            .collect(),
        Goal::ReachSink => Vec::new(),
    };

    if !matches!(goal, Goal::ReachSink) {
        let free_syms: Vec<&Part> = template
            .iter()
            .filter(|p| matches!(p, Part::Sym { canonical: false, .. }))
            .collect();
        let goal_clause = if free_syms.len() > 1 {
            return Err(SmtEmitError::Unsupported(
                "more than one unsanitized symbol in the sink path".to_string(),
            ));
        } else if let Some(Part::Sym { key, .. }) = free_syms.first() {
            // Literal prefix before the free symbol.
            let mut prefix = String::new();
            for p in &template {
                match p {
                    Part::Lit(s) => prefix.push_str(s),
                    Part::Sym { key: k, .. } if k == key => break,
                    Part::Sym { .. } => {
                        return Err(SmtEmitError::Unsupported(
                            "sanitized symbol before the free symbol".to_string(),
                        ))
                    }
                }
            }
            let m = &models[key.as_str()];
            let mut values: Vec<String> = Vec::new();
            for t in &targets {
                values.extend(invert_against_prefix(&prefix, t));
            }
            values.sort();
            values.dedup();
            if values.is_empty() {
                "false".to_string()
            } else {
                let eqs: Vec<String> = values
                    .iter()
                    .map(|v| format!("(= {} {})", m.val_name, smt_string(v)))
                    .collect();
                format!("(or {})", eqs.join(" "))
            }
        } else {
            // No free symbol: the landing point is the canonicalized literal
            // prefix plus benign contributions; only canonical-dominated
            // symbols may land inside a target subtree.
            let mut prefix = String::new();
            let mut dominated: Option<&KeyModel> = None;
            for p in &template {
                match p {
                    Part::Lit(s) => prefix.push_str(s),
                    Part::Sym { key, .. } => dominated = Some(&models[key]),
                }
            }
            let landing = canonicalize(&prefix).path;
            match dominated {
                None => {
                    let hit = targets
                        .iter()
                        .any(|t| crate::constraints::canonical::is_path_under(&landing, t));
                    if hit { "true".to_string() } else { "false".to_string() }
                }
                Some(m) => {
                    let mut eqs = Vec::new();
                    for t in &targets {
                        if let Some(rest) = t.strip_prefix(&landing) {
                            let rest = rest.trim_start_matches('/');
                            if !rest.is_empty() && !rest.contains('/') {
                                eqs.push(format!("(= {} {})", m.val_name, smt_string(rest)));
                            } else if rest.is_empty() {
                                eqs.push("true".to_string());
                            }
                        }
                    }
                    if eqs.is_empty() {
                        "false".to_string()
                    } else {
                        format!("(or {})", eqs.join(" "))
                    }
                }
            }
        };
        asserts.push(format!("(assert {goal_clause})"));
    }

    let mut out = String::new();
    let _ = writeln!(out, "(set-logic QF_S)");
    let _ = writeln!(
        out,
        "; path condition for {} sink {}",
        cond.flow.component, cond.flow.sink
    );
    for d in &declares {
        let _ = writeln!(out, "{d}");
    }
    for d in &defines {
        let _ = writeln!(out, "{d}");
    }
    for a in &asserts {
        let _ = writeln!(out, "{a}");
    }
    let _ = writeln!(out, "(check-sat)");
    let _ = writeln!(out, "(get-model)");
    Ok(out)
}
