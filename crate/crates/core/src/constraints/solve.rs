//! Satisfiability of a path condition against a file-constraint goal, with
//! concrete payload synthesis.
//!
//! The solver is a goal-directed template inverter: the sink path is a
//! concatenation of literals and (possibly last-segment-wrapped) symbols, so
//! candidate payloads are constructed by injecting `../` chains and
//! goal-directed suffixes, then filtered through the branch atoms and the
//! goal by direct re-evaluation. Within the documented payload fragment the
//! candidate enumeration is exhaustive, so `Unsat` is a completeness claim
//! there; when a budget cuts enumeration short the outcome is `Unknown`.
//!
//! Symbols dominated by `Canonical` nodes model sanitized input (canonical
//! form plus containment checks) and are restricted to benign single
//! segments during generation; the concrete interpreter still replays
//! lexical semantics, so any witness found here re-validates end to end.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::constraints::canonical::canonicalize;
use crate::frontend::alir::UriPattern;
use crate::policy::FileConstraint;
use crate::symexec::{
    last_segment, match_uri, percent_encode_segment, Atom, PathCondition, StrExpr, URI_NO_MATCH,
};

/// Concrete attacker input for one component invocation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    pub component: String,
    #[serde(default)]
    pub extras: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uri: Option<String>,
}

impl Payload {
    pub fn value_of(&self, key: &str) -> Option<&str> {
        if key == "uri" {
            self.uri.as_deref()
        } else {
            self.extras.get(key).map(String::as_str)
        }
    }
}

/// What the solved payload must make the sink path reach.
#[derive(Debug, Clone, Copy)]
pub enum Goal<'a> {
    /// The canonical sink path must be victim-private relative to the
    /// attacker.
    ReachPrivate(&'a FileConstraint),
    /// The canonical sink path must land in an attacker-writable directory.
    ReachHijackable(&'a FileConstraint),
    /// No target restriction: reaching the sink with the atoms satisfied is
    /// enough (hijacking uses the literal path directly).
    ReachSink,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveOutcome {
    Sat(Payload),
    Unsat,
    Unknown { budget: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    MissingKey(String),
}

/// Concrete evaluation of a symbolic string under a payload. `Canonical`
/// nodes evaluate to lexical normalization, exactly as the victim executes
/// them.
pub fn eval_expr(expr: &StrExpr, payload: &Payload) -> Result<String, EvalError> {
    match expr {
        StrExpr::Lit(s) => Ok(s.clone()),
        StrExpr::Sym { key, .. } => payload
            .value_of(key)
            .map(str::to_string)
            .ok_or_else(|| EvalError::MissingKey(key.clone())),
        StrExpr::Concat(a, b) => Ok(format!("{}{}", eval_expr(a, payload)?, eval_expr(b, payload)?)),
        StrExpr::LastSeg(e) => Ok(last_segment(&eval_expr(e, payload)?)),
        StrExpr::Canonical(e) => Ok(canonicalize(&eval_expr(e, payload)?).path),
    }
}

/// Evaluate one atom under a payload.
pub fn eval_atom(
    atom: &Atom,
    payload: &Payload,
    tables: &BTreeMap<String, Vec<UriPattern>>,
) -> Result<bool, EvalError> {
    let b = match atom {
        Atom::StrEq { lhs, rhs, negated } => {
            (eval_expr(lhs, payload)? == eval_expr(rhs, payload)?) != *negated
        }
        Atom::StartsWith {
            expr,
            prefix,
            negated,
        } => eval_expr(expr, payload)?.starts_with(prefix.as_str()) != *negated,
        Atom::Contains {
            expr,
            needle,
            negated,
        } => eval_expr(expr, payload)?.contains(needle.as_str()) != *negated,
        Atom::UriMatch {
            table,
            uri,
            code,
            negated,
        } => {
            let uri_val = eval_expr(uri, payload)?;
            let rows = tables.get(table).map(Vec::as_slice).unwrap_or(&[]);
            (match_uri(rows, &uri_val) == *code) != *negated
        }
    };
    Ok(b)
}

/// Whether a canonical absolute path meets the goal.
pub fn goal_met(goal: Goal<'_>, canonical_path: &str) -> bool {
    match goal {
        Goal::ReachSink => true,
        Goal::ReachPrivate(fc) => fc.is_private(canonical_path),
        Goal::ReachHijackable(fc) => fc.lands_in_hijackable(canonical_path),
    }
}

/// Full witness check: every atom holds and the canonicalized sink path
/// meets the goal. This is the re-evaluation gate every SAT result passes
/// before it is returned, and tests re-assert it independently.
pub fn validate_witness(
    cond: &PathCondition,
    goal: Goal<'_>,
    payload: &Payload,
    tables: &BTreeMap<String, Vec<UriPattern>>,
) -> bool {
    for atom in &cond.atoms {
        match eval_atom(atom, payload, tables) {
            Ok(true) => {}
            _ => return false,
        }
    }
    match eval_expr(&cond.sink_path, payload) {
        Ok(path) => {
            let canon = canonicalize(&path);
            goal_met(goal, &canon.path)
        }
        Err(_) => false,
    }
}

// ---------------------------------------------------------------------------
// Payload alphabet
// ---------------------------------------------------------------------------

fn alphabet_ok(s: &str, allow_scheme: bool) -> bool {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'a'..=b'z' | b'0'..=b'9' | b'.' | b'_' | b'-' | b'/' => i += 1,
            b':' if allow_scheme => i += 1,
            b'%' => {
                if i + 2 < bytes.len()
                    && bytes[i + 1].is_ascii_hexdigit()
                    && bytes[i + 2].is_ascii_hexdigit()
                {
                    i += 3;
                } else {
                    return false;
                }
            }
            _ => return false,
        }
    }
    true
}

fn payload_alphabet_ok(payload: &Payload) -> bool {
    payload.extras.values().all(|v| alphabet_ok(v, false))
        && payload.uri.as_deref().map_or(true, |u| alphabet_ok(u, true))
}

// ---------------------------------------------------------------------------
// Sink-path template
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Part {
    Lit(String),
    /// One symbol occurrence with its wrappers.
    Sym {
        key: String,
        last_seg: bool,
        canonical: bool,
    },
}

/// Flatten a sink-path expression into linear parts. Returns `None` for
/// shapes outside the template fragment (nested LastSeg over concats of
/// symbols and the like); enumeration still covers those via the generic
/// candidate stream.
fn flatten(expr: &StrExpr, out: &mut Vec<Part>, last_seg: bool, canonical: bool) -> bool {
    match expr {
        StrExpr::Lit(s) => {
            if last_seg {
                out.push(Part::Lit(last_segment(s)));
            } else {
                out.push(Part::Lit(s.clone()));
            }
            true
        }
        StrExpr::Sym { key, .. } => {
            out.push(Part::Sym {
                key: key.clone(),
                last_seg,
                canonical,
            });
            true
        }
        StrExpr::Concat(a, b) => {
            if last_seg {
                // lastseg(a ++ b) does not distribute; outside the template.
                return false;
            }
            flatten(a, out, false, canonical) && flatten(b, out, false, canonical)
        }
        StrExpr::LastSeg(e) => flatten(e, out, true, canonical),
        StrExpr::Canonical(e) => flatten(e, out, last_seg, true),
    }
}

pub(crate) fn template_of(expr: &StrExpr) -> Option<Vec<Part>> {
    let mut parts = Vec::new();
    if flatten(expr, &mut parts, false, false) {
        Some(parts)
    } else {
        None
    }
}

/// Drop `k` trailing segments from a canonical absolute path.
pub(crate) fn pop_segments(path: &str, k: usize) -> Option<String> {
    let mut segs: Vec<&str> = path.split('/').filter(|s| !s.is_empty()).collect();
    if k > segs.len() {
        return None;
    }
    segs.truncate(segs.len() - k);
    if segs.is_empty() {
        Some("/".to_string())
    } else {
        Some(format!("/{}", segs.join("/")))
    }
}

/// Values v with canonicalize(prefix + v) == target, built from `../` chains
/// plus the target remainder.
pub(crate) fn invert_against_prefix(prefix: &str, target: &str) -> Vec<String> {
    let mut out = Vec::new();
    if prefix.is_empty() {
        out.push(target.to_string());
        return out;
    }
    if !prefix.starts_with('/') {
        return out;
    }
    let canon_prefix = canonicalize(prefix).path;
    let seg_count = canon_prefix.split('/').filter(|s| !s.is_empty()).count();
    // When the literal does not end with a separator the symbol continues
    // its last segment, so the injected value must start with `/` to split
    // it off (the partial segment then counts as poppable).
    let sep = if prefix.ends_with('/') { "" } else { "/" };
    for k in 0..=seg_count {
        let base = match pop_segments(&canon_prefix, k) {
            Some(b) => b,
            None => continue,
        };
        let rel = if target == base {
            String::new()
        } else if base == "/" {
            target.trim_start_matches('/').to_string()
        } else if let Some(rest) = target.strip_prefix(&format!("{base}/")) {
            rest.to_string()
        } else {
            continue;
        };
        let ups = "../".repeat(k);
        let mut v = format!("{sep}{ups}{rel}");
        if rel.is_empty() {
            // Trim the trailing separator of the final "../".
            if v.ends_with('/') {
                v.pop();
            }
        }
        if v.is_empty() {
            continue;
        }
        out.push(v);
    }
    out
}

// ---------------------------------------------------------------------------
// Candidate generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct KeyContext {
    key: String,
    is_uri: bool,
    /// Every sink-path occurrence wrapped in LastSeg.
    last_seg: bool,
    /// Every sink-path occurrence dominated by Canonical (sanitized input).
    canonical: bool,
    /// URI-match constraints on this key: (table, code, negated).
    match_atoms: Vec<(String, i64, bool)>,
}

fn atom_exprs(atom: &Atom) -> Vec<&StrExpr> {
    match atom {
        Atom::StrEq { lhs, rhs, .. } => vec![lhs, rhs],
        Atom::StartsWith { expr, .. } | Atom::Contains { expr, .. } => vec![expr],
        Atom::UriMatch { uri, .. } => vec![uri],
    }
}

fn atom_keys(atom: &Atom) -> BTreeSet<String> {
    let mut keys = BTreeSet::new();
    for e in atom_exprs(atom) {
        keys.extend(e.sym_keys());
    }
    keys
}

fn atom_literals(atom: &Atom) -> Vec<String> {
    fn expr_lits(e: &StrExpr, out: &mut Vec<String>) {
        match e {
            StrExpr::Lit(s) => out.push(s.clone()),
            StrExpr::Concat(a, b) => {
                expr_lits(a, out);
                expr_lits(b, out);
            }
            StrExpr::LastSeg(e) | StrExpr::Canonical(e) => expr_lits(e, out),
            StrExpr::Sym { .. } => {}
        }
    }
    let mut out = Vec::new();
    match atom {
        Atom::StrEq { lhs, rhs, .. } => {
            expr_lits(lhs, &mut out);
            expr_lits(rhs, &mut out);
        }
        Atom::StartsWith { expr, prefix, .. } => {
            expr_lits(expr, &mut out);
            out.push(prefix.clone());
        }
        Atom::Contains { expr, needle, .. } => {
            expr_lits(expr, &mut out);
            out.push(needle.clone());
        }
        Atom::UriMatch { uri, .. } => expr_lits(uri, &mut out),
    }
    out
}

/// Segment pool shared by enumeration: segments of goal targets, atom
/// literals, sink literals, plus traversal and filler material. The bounded
/// completeness domain is built from exactly this derivation.
fn segment_pool(cond: &PathCondition, targets: &[String]) -> Vec<String> {
    let mut pool: BTreeSet<String> = BTreeSet::new();
    pool.insert("..".to_string());
    pool.insert(".".to_string());
    pool.insert("a".to_string());
    let mut add_path = |s: &str, pool: &mut BTreeSet<String>| {
        for seg in s.split('/') {
            if !seg.is_empty() {
                pool.insert(seg.to_string());
            }
        }
    };
    for t in targets {
        add_path(t, &mut pool);
    }
    for atom in &cond.atoms {
        for lit in atom_literals(atom) {
            add_path(&lit, &mut pool);
            pool.insert(lit.clone());
        }
    }
    fn sink_lits(e: &StrExpr, out: &mut Vec<String>) {
        match e {
            StrExpr::Lit(s) => out.push(s.clone()),
            StrExpr::Concat(a, b) => {
                sink_lits(a, out);
                sink_lits(b, out);
            }
            StrExpr::LastSeg(e) | StrExpr::Canonical(e) => sink_lits(e, out),
            StrExpr::Sym { .. } => {}
        }
    }
    let mut lits = Vec::new();
    sink_lits(&cond.sink_path, &mut lits);
    for l in lits {
        add_path(&l, &mut pool);
    }
    pool.into_iter().collect()
}

const MAX_ENUM_SEGMENTS: usize = 5;

/// All joinings of up to `MAX_ENUM_SEGMENTS` pool segments (plus the empty
/// string and each segment prefixed with `/`), capped in count.
fn enumerate_values(pool: &[String], cap: usize) -> Vec<String> {
    let mut out: Vec<String> = vec![String::new()];
    let mut frontier: Vec<String> = vec![String::new()];
    for _ in 0..MAX_ENUM_SEGMENTS {
        let mut next = Vec::new();
        for base in &frontier {
            for seg in pool {
                let v = if base.is_empty() {
                    seg.clone()
                } else {
                    format!("{base}/{seg}")
                };
                next.push(v);
                if out.len() + next.len() > cap {
                    break;
                }
            }
            if out.len() + next.len() > cap {
                break;
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
        if out.len() >= cap {
            break;
        }
    }
    // Absolute variants matter when the symbol is the whole pathname.
    let absolutes: Vec<String> = out
        .iter()
        .filter(|v| !v.is_empty() && !v.starts_with('/'))
        .map(|v| format!("/{v}"))
        .collect();
    out.extend(absolutes);
    out
}

fn benign_segment(v: &str) -> bool {
    !v.contains('/') && !v.contains("..") && v != "." && !v.contains('%')
}

/// Build concrete uri strings that place `v` as the decoded last segment
/// while satisfying the key's URI-match atoms.
fn uri_candidates_for_value(
    ctx: &KeyContext,
    v: &str,
    tables: &BTreeMap<String, Vec<UriPattern>>,
    package: &str,
) -> Vec<String> {
    let enc = percent_encode_segment(v);
    let mut out = Vec::new();
    if ctx.match_atoms.is_empty() {
        if ctx.last_seg {
            out.push(format!("content://{package}/{enc}"));
        } else {
            // Raw use of the uri string.
            out.push(v.to_string());
            out.push(format!("content://{package}/{enc}"));
        }
        return out;
    }
    let table_name = &ctx.match_atoms[0].0;
    let rows = match tables.get(table_name) {
        Some(r) => r,
        None => return out,
    };
    let admissible = |code: i64| -> bool {
        ctx.match_atoms
            .iter()
            .all(|(t, c, negated)| t != table_name || ((code == *c) != *negated))
    };
    for row in rows {
        if !admissible(row.code) {
            continue;
        }
        let pat_segs: Vec<&str> = if row.pattern.is_empty() {
            Vec::new()
        } else {
            row.pattern.split('/').collect()
        };
        if pat_segs.is_empty() {
            continue;
        }
        let mut segs: Vec<String> = Vec::new();
        let mut ok = true;
        for (i, p) in pat_segs.iter().enumerate() {
            let is_last = i + 1 == pat_segs.len();
            let s = match (*p, is_last) {
                ("*", true) => enc.clone(),
                ("*", false) => "a".to_string(),
                ("#", true) => {
                    if !v.is_empty() && v.bytes().all(|b| b.is_ascii_digit()) {
                        v.to_string()
                    } else {
                        ok = false;
                        break;
                    }
                }
                ("#", false) => "0".to_string(),
                (lit, true) => {
                    if lit == v {
                        lit.to_string()
                    } else {
                        ok = false;
                        break;
                    }
                }
                (lit, false) => lit.to_string(),
            };
            segs.push(s);
        }
        if !ok {
            continue;
        }
        let uri = format!("content://{}/{}", row.authority, segs.join("/"));
        // First-match semantics can shadow the intended row; keep only uris
        // whose actual match code is admissible.
        if admissible(match_uri(rows, &uri)) {
            out.push(uri);
        }
    }
    if admissible(URI_NO_MATCH) {
        let authority = rows
            .first()
            .map(|r| r.authority.clone())
            .unwrap_or_else(|| package.to_string());
        for shape in [
            format!("content://{authority}/{enc}"),
            format!("content://{authority}/zz-nomatch/{enc}"),
            format!("content://{authority}/zz/zz/zz-nomatch/{enc}"),
        ] {
            if match_uri(rows, &shape) == URI_NO_MATCH {
                out.push(shape);
                break;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Solve
// ---------------------------------------------------------------------------

/// Decide satisfiability of a path condition conjoined with a goal and
/// produce a concrete payload witness. Every `Sat` payload satisfies all
/// atoms and its canonicalized sink path meets the goal (re-checked before
/// returning); witnesses are minimal per key (shortest, ties lexicographic).
pub fn solve(
    cond: &PathCondition,
    goal: Goal<'_>,
    tables: &BTreeMap<String, Vec<UriPattern>>,
    max_candidates: usize,
) -> SolveOutcome {
    // Target exemplars for goal-directed construction.
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
    if matches!(goal, Goal::ReachPrivate(_) | Goal::ReachHijackable(_)) && targets.is_empty() {
        return SolveOutcome::Unsat;
    }

    // Symbol inventory: sink path first, then atom-only keys.
    let domination = cond.sink_path.canonical_domination();
    let mut keys: Vec<String> = cond.sink_path.sym_keys();
    for atom in &cond.atoms {
        for k in atom_keys(atom) {
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    if keys.is_empty() {
        let payload = Payload {
            component: cond.flow.component.clone(),
            extras: BTreeMap::new(),
            uri: None,
        };
        return if validate_witness(cond, goal, &payload, tables) {
            SolveOutcome::Sat(payload)
        } else {
            SolveOutcome::Unsat
        };
    }
    keys.sort();

    let template = template_of(&cond.sink_path);

    // Per-key contexts.
    let contexts: Vec<KeyContext> = keys
        .iter()
        .map(|key| {
            let mut last_seg = true;
            let mut present = false;
            if let Some(parts) = &template {
                for p in parts {
                    if let Part::Sym {
                        key: k, last_seg: ls, ..
                    } = p
                    {
                        if k == key {
                            present = true;
                            last_seg &= *ls;
                        }
                    }
                }
            }
            let match_atoms = cond
                .atoms
                .iter()
                .filter_map(|a| match a {
                    Atom::UriMatch {
                        table,
                        uri,
                        code,
                        negated,
                    } if uri.sym_keys().contains(key) => {
                        Some((table.clone(), *code, *negated))
                    }
                    _ => None,
                })
                .collect();
            KeyContext {
                key: key.clone(),
                is_uri: key == "uri",
                last_seg: present && last_seg,
                canonical: domination.get(key).copied().unwrap_or(false),
                match_atoms,
            }
        })
        .collect();

    // Goal-directed seed values per key: invert the literal prefix of the
    // template against each target.
    let mut seeds: BTreeMap<String, Vec<String>> = BTreeMap::new();
    if let Some(parts) = &template {
        for (i, part) in parts.iter().enumerate() {
            let Part::Sym { key, canonical, .. } = part else {
                continue;
            };
            if *canonical {
                continue; // sanitized input never carries traversal
            }
            // Literal prefix before this occurrence; bail out when a prior
            // part is symbolic.
            let mut prefix = String::new();
            let mut clean = true;
            for p in &parts[..i] {
                match p {
                    Part::Lit(s) => prefix.push_str(s),
                    Part::Sym { .. } => {
                        clean = false;
                        break;
                    }
                }
            }
            // Only invert when this occurrence ends the template or only
            // literals follow (appended suffixes shift the landing point).
            let suffix_literal = parts[i + 1..]
                .iter()
                .all(|p| matches!(p, Part::Lit(s) if s.is_empty()));
            if !clean || !suffix_literal {
                continue;
            }
            for t in &targets {
                for v in invert_against_prefix(&prefix, t) {
                    seeds.entry(key.clone()).or_default().push(v);
                }
            }
        }
    }

    // Candidate value lists per key, ordered shortest-then-lexicographic.
    let per_key_cap = (max_candidates / keys.len()).max(64);
    let pool = segment_pool(cond, &targets);
    let mut candidate_lists: Vec<Vec<String>> = Vec::new();
    let mut lists_complete = true;
    for ctx in &contexts {
        let mut values: BTreeSet<String> = BTreeSet::new();
        values.insert(String::new());
        for v in enumerate_values(&pool, per_key_cap) {
            values.insert(v);
        }
        if let Some(s) = seeds.get(&ctx.key) {
            for v in s {
                values.insert(v.clone());
            }
        }
        if ctx.canonical {
            values.retain(|v| benign_segment(v));
        }
        if values.len() >= per_key_cap {
            lists_complete = false;
        }
        // Values become final payload strings.
        let mut finals: BTreeSet<String> = BTreeSet::new();
        for v in &values {
            if ctx.is_uri {
                for u in uri_candidates_for_value(ctx, v, tables, &cond.app_package) {
                    finals.insert(u);
                }
            } else {
                finals.insert(v.clone());
                if ctx.last_seg && v.contains('/') {
                    // An extra consumed through LASTSEG needs its separators
                    // encoded to survive the split.
                    finals.insert(percent_encode_segment(v));
                }
            }
        }
        let mut list: Vec<String> = finals.into_iter().collect();
        list.sort_by(|a, b| (a.len(), a.as_str()).cmp(&(b.len(), b.as_str())));
        candidate_lists.push(list);
    }

    // Atom partition: an atom is checkable once all its keys are fixed.
    let atom_stage: Vec<usize> = cond
        .atoms
        .iter()
        .map(|a| {
            atom_keys(a)
                .iter()
                .map(|k| keys.iter().position(|kk| kk == k).unwrap_or(0))
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut checked: usize = 0;
    let mut truncated = !lists_complete;

    fn assign(
        depth: usize,
        keys: &[String],
        lists: &[Vec<String>],
        cond: &PathCondition,
        goal: Goal<'_>,
        tables: &BTreeMap<String, Vec<UriPattern>>,
        atom_stage: &[usize],
        payload: &mut Payload,
        checked: &mut usize,
        max_candidates: usize,
        truncated: &mut bool,
    ) -> Option<Payload> {
        if depth == keys.len() {
            *checked += 1;
            if validate_witness(cond, goal, payload, tables) && payload_alphabet_ok(payload) {
                return Some(payload.clone());
            }
            return None;
        }
        for v in &lists[depth] {
            if *checked >= max_candidates {
                *truncated = true;
                return None;
            }
            if keys[depth] == "uri" {
                payload.uri = Some(v.clone());
            } else {
                payload.extras.insert(keys[depth].clone(), v.clone());
            }
            // Early rejection: atoms fully determined at this depth.
            let mut viable = true;
            for (ai, atom) in cond.atoms.iter().enumerate() {
                if atom_stage[ai] == depth {
                    *checked += 1;
                    if !matches!(eval_atom(atom, payload, tables), Ok(true)) {
                        viable = false;
                        break;
                    }
                }
            }
            if viable {
                if let Some(found) = assign(
                    depth + 1,
                    keys,
                    lists,
                    cond,
                    goal,
                    tables,
                    atom_stage,
                    payload,
                    checked,
                    max_candidates,
                    truncated,
                ) {
                    return Some(found);
                }
            }
            if keys[depth] == "uri" {
                payload.uri = None;
            } else {
                payload.extras.remove(&keys[depth]);
            }
        }
        None
    }

    let mut working = Payload {
        component: cond.flow.component.clone(),
        extras: BTreeMap::new(),
        uri: None,
    };
    let found = assign(
        0,
        &keys,
        &candidate_lists,
        cond,
        goal,
        tables,
        &atom_stage,
        &mut working,
        &mut checked,
        max_candidates,
        &mut truncated,
    );
    match found {
        Some(payload) => {
            debug_assert!(validate_witness(cond, goal, &payload, tables));
            SolveOutcome::Sat(payload)
        }
        None if truncated => SolveOutcome::Unknown {
            budget: max_candidates,
        },
        None => SolveOutcome::Unsat,
    }
}
