//! Program dependence graph construction and taint flows.
//!
//! The PDG carries control edges (including call and return edges) and
//! def-use data edges. Forward taint enumerates control paths from entry
//! points to sinks with a data-dependence chain from a source to the sink's
//! pathname argument; reverse dataflow walks def-use chains backwards from a
//! sink to the internal sources feeding it.
//!
//! Loops are unrolled at most once during flow enumeration, which keeps path
//! constraints finite; this under-approximates path coverage, not
//! reachability. Call edges are context-insensitive but enumeration follows
//! proper call/return nesting via an explicit frame stack.

use std::collections::{BTreeMap, BTreeSet};

use crate::diag::Diagnostic;
use crate::frontend::alir::{successors, AlirProgram, Op, StmtId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    External,
    Internal,
}

/// The origin of a flow: one external input statement, or the set of internal
/// constant/environment statements contributing to the sink path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum FlowSource {
    External(StmtId),
    Internal(BTreeSet<StmtId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaintFlow {
    pub component: String,
    pub entry: String,
    pub source: FlowSource,
    pub sink: StmtId,
    pub control_path: Vec<StmtId>,
    pub source_kind: SourceKind,
}

#[derive(Debug, Clone, Default)]
pub struct Pdg {
    pub nodes: BTreeSet<StmtId>,
    pub control_edges: BTreeSet<(StmtId, StmtId)>,
    /// (def site, use site, variable)
    pub data_edges: BTreeSet<(StmtId, StmtId, String)>,
}

impl Pdg {
    pub fn contains(&self, id: &StmtId) -> bool {
        self.nodes.contains(id)
    }

    /// Graphviz rendering for `--dump-pdg`.
    pub fn to_dot(&self, program: &AlirProgram) -> String {
        let mut out = String::from("digraph pdg {\n  node [shape=box, fontname=\"monospace\"];\n");
        for n in &self.nodes {
            let label = program
                .stmt(n)
                .map(|op| format!("{n}\\n{op:?}"))
                .unwrap_or_else(|| n.to_string());
            let label = label.replace('"', "'");
            out.push_str(&format!("  \"{n}\" [label=\"{label}\"];\n"));
        }
        for (a, b) in &self.control_edges {
            out.push_str(&format!("  \"{a}\" -> \"{b}\";\n"));
        }
        for (d, u, v) in &self.data_edges {
            out.push_str(&format!(
                "  \"{d}\" -> \"{u}\" [style=dashed, label=\"{v}\"];\n"
            ));
        }
        out.push_str("}\n");
        out
    }
}

/// Functions transitively callable from the given entry functions.
fn reachable_functions(program: &AlirProgram, entries: &[String]) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<String> = entries
        .iter()
        .filter(|f| program.functions.contains_key(*f))
        .cloned()
        .collect();
    while let Some(f) = stack.pop() {
        if !seen.insert(f.clone()) {
            continue;
        }
        if let Some(func) = program.function(&f) {
            for op in &func.body {
                if let Op::Call { callee, .. } = op {
                    if !seen.contains(callee) {
                        stack.push(callee.clone());
                    }
                }
            }
        }
    }
    seen
}

/// Build the PDG covering all statements reachable from the given entry
/// functions. Unreachable functions are excluded and reported as diagnostics.
pub fn build_pdg(program: &AlirProgram, entries: &[String]) -> (Pdg, Vec<Diagnostic>) {
    let mut pdg = Pdg::default();
    let mut diags = Vec::new();
    let reachable = reachable_functions(program, entries);
    for name in program.functions.keys() {
        if !reachable.contains(name) {
            diags.push(
                Diagnostic::info(
                    "unreachable-function",
                    format!("function `{name}` is not reachable from any entry point"),
                )
                .at(name.clone()),
            );
        }
    }

    for fname in &reachable {
        let f = match program.function(fname) {
            Some(f) => f,
            None => continue,
        };
        for i in 0..f.body.len() {
            pdg.nodes.insert(StmtId::new(fname.clone(), i));
        }
        // Intra-function control edges.
        for i in 0..f.body.len() {
            let from = StmtId::new(fname.clone(), i);
            for s in successors(f, i) {
                pdg.control_edges
                    .insert((from.clone(), StmtId::new(fname.clone(), s)));
            }
            match &f.body[i] {
                Op::Call { callee, .. } => {
                    if let Some(g) = program.function(callee) {
                        if !g.body.is_empty() {
                            // Call edge to callee entry.
                            pdg.control_edges
                                .insert((from.clone(), StmtId::new(callee.clone(), 0)));
                            // Return edges from each callee RETURN to the
                            // call-site successor.
                            for (j, op) in g.body.iter().enumerate() {
                                if matches!(op, Op::Return) && i + 1 < f.body.len() {
                                    pdg.control_edges.insert((
                                        StmtId::new(callee.clone(), j),
                                        StmtId::new(fname.clone(), i + 1),
                                    ));
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        // Intra-function data edges via reaching definitions.
        add_data_edges(program, f, &mut pdg);
        // Unreachable statements inside reachable functions.
        let mut reach_idx = vec![false; f.body.len()];
        if !f.body.is_empty() {
            let mut stack = vec![0usize];
            while let Some(i) = stack.pop() {
                if reach_idx[i] {
                    continue;
                }
                reach_idx[i] = true;
                for s in successors(f, i) {
                    stack.push(s);
                }
            }
        }
        for (i, r) in reach_idx.iter().enumerate() {
            if !r {
                diags.push(
                    Diagnostic::info(
                        "unreachable-statement",
                        format!("statement {fname}:{i} is unreachable"),
                    )
                    .at(format!("{fname}:{}", f.lines.get(i).copied().unwrap_or(0))),
                );
            }
        }
    }
    (pdg, diags)
}

/// Pseudo-definition site for reaching definitions: either a real statement
/// or the function entry (parameters).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum DefSite {
    Stmt(usize),
    Param,
}

fn add_data_edges(program: &AlirProgram, f: &crate::frontend::alir::Function, pdg: &mut Pdg) {
    let n = f.body.len();
    // Reaching definitions: var -> set of def sites, per statement entry.
    type Rd = BTreeMap<String, BTreeSet<DefSite>>;
    let mut insets: Vec<Option<Rd>> = vec![None; n];
    if n == 0 {
        return;
    }
    let mut entry_rd: Rd = BTreeMap::new();
    for p in &f.params {
        entry_rd
            .entry(p.clone())
            .or_default()
            .insert(DefSite::Param);
    }
    insets[0] = Some(entry_rd);
    let mut work = vec![0usize];
    while let Some(i) = work.pop() {
        let mut out = insets[i].clone().expect("scheduled with in-set");
        if let Some(d) = f.body[i].def() {
            out.insert(d.to_string(), BTreeSet::from([DefSite::Stmt(i)]));
        }
        for s in successors(f, i) {
            let changed = match &mut insets[s] {
                slot @ None => {
                    *slot = Some(out.clone());
                    true
                }
                Some(prev) => {
                    let mut changed = false;
                    for (var, defs) in &out {
                        let entry = prev.entry(var.clone()).or_default();
                        for d in defs {
                            changed |= entry.insert(d.clone());
                        }
                    }
                    changed
                }
            };
            if changed {
                work.push(s);
            }
        }
    }
    // Call sites of this function, used to bridge parameter definitions.
    let call_sites: Vec<StmtId> = program
        .statements()
        .filter(|(_, op)| matches!(op, Op::Call { callee, .. } if callee == &f.name))
        .map(|(id, _)| id)
        .collect();
    for (i, op) in f.body.iter().enumerate() {
        let rd = match &insets[i] {
            Some(rd) => rd,
            None => continue, // unreachable
        };
        let use_site = StmtId::new(f.name.clone(), i);
        for v in op.uses() {
            if let Some(defs) = rd.get(v) {
                for d in defs {
                    match d {
                        DefSite::Stmt(j) => {
                            pdg.data_edges.insert((
                                StmtId::new(f.name.clone(), *j),
                                use_site.clone(),
                                v.to_string(),
                            ));
                        }
                        DefSite::Param => {
                            for c in &call_sites {
                                pdg.data_edges
                                    .insert((c.clone(), use_site.clone(), v.to_string()));
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Directed path enumeration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct Budgets {
    /// Maximum enumerated control paths per entry point.
    pub max_paths: usize,
    /// Maximum branch atoms collected along one path.
    pub max_atoms: usize,
    /// Call-frame depth cap during enumeration and interpretation.
    pub max_call_depth: usize,
    /// Step cap for the concrete interpreter.
    pub max_interp_steps: usize,
    /// Candidate cap for the payload solver.
    pub max_solver_candidates: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_paths: 4096,
            max_atoms: 128,
            max_call_depth: 16,
            max_interp_steps: 10_000,
            max_solver_candidates: 200_000,
        }
    }
}

/// One sink visit on one enumerated control path.
#[derive(Debug, Clone)]
pub struct PathHit {
    pub sink: StmtId,
    pub control_path: Vec<StmtId>,
    /// Source statements contributing to the sink's pathname argument(s),
    /// per the def-use chains along this exact path.
    pub contributing: BTreeSet<StmtId>,
}

struct Frame {
    function: String,
    index: usize,
    /// Per-variable contributing source statements along the current path.
    taint: BTreeMap<String, BTreeSet<StmtId>>,
    /// Visit counts for loop bounding: each statement may be entered at most
    /// twice per frame (one unroll).
    visits: BTreeMap<usize, u8>,
}

/// Statements from which any statement satisfying `is_target` is reachable
/// over control edges (interprocedural, context-insensitive). Used to direct
/// enumeration toward sinks.
fn backward_reach(pdg: &Pdg, targets: &BTreeSet<StmtId>) -> BTreeSet<StmtId> {
    let mut preds: BTreeMap<&StmtId, Vec<&StmtId>> = BTreeMap::new();
    for (a, b) in &pdg.control_edges {
        preds.entry(b).or_default().push(a);
    }
    let mut seen: BTreeSet<StmtId> = targets.clone();
    let mut stack: Vec<StmtId> = targets.iter().cloned().collect();
    while let Some(s) = stack.pop() {
        if let Some(ps) = preds.get(&s) {
            for p in ps {
                if seen.insert((*p).clone()) {
                    stack.push((*p).clone());
                }
            }
        }
    }
    seen
}

struct Enumerator<'a> {
    program: &'a AlirProgram,
    /// Statements from which a target sink is still reachable.
    relevant: BTreeSet<StmtId>,
    sinks: &'a BTreeSet<StmtId>,
    budgets: &'a Budgets,
    hits: Vec<PathHit>,
    paths_done: usize,
    truncated: bool,
}

impl Enumerator<'_> {
    fn walk(&mut self, frames: &mut Vec<Frame>, path: &mut Vec<StmtId>) {
        if self.paths_done >= self.budgets.max_paths {
            self.truncated = true;
            return;
        }
        let frame = frames.last_mut().expect("non-empty frame stack");
        let func = self
            .program
            .function(&frame.function)
            .expect("frame function exists");
        let i = frame.index;
        let id = StmtId::new(frame.function.clone(), i);

        // Loop bound: each statement may be entered at most twice per frame,
        // which unrolls every cycle at most once.
        let count = frame.visits.entry(i).or_insert(0);
        if *count >= 2 {
            return;
        }
        *count += 1;
        path.push(id.clone());

        let op = &func.body[i];
        match op {
            Op::Sink { args, .. } => {
                if self.sinks.contains(&id) {
                    let frame = frames.last().expect("frame");
                    let mut contributing = BTreeSet::new();
                    for a in args {
                        if let Some(t) = frame.taint.get(a) {
                            contributing.extend(t.iter().cloned());
                        }
                    }
                    self.hits.push(PathHit {
                        sink: id.clone(),
                        control_path: path.clone(),
                        contributing,
                    });
                }
                self.step(frames, path, i + 1);
            }
            Op::Return => {
                if frames.len() == 1 {
                    self.paths_done += 1;
                } else {
                    let popped = frames.pop().expect("frame");
                    let ret_to = frames.last().expect("caller frame").index + 1;
                    self.step(frames, path, ret_to);
                    frames.push(popped);
                }
            }
            Op::Call { callee, args } => {
                let arg_taints: Vec<BTreeSet<StmtId>> = args
                    .iter()
                    .map(|a| frame.taint.get(a).cloned().unwrap_or_default())
                    .collect();
                if frames.len() >= self.budgets.max_call_depth {
                    self.truncated = true;
                } else if let Some(g) = self.program.function(callee) {
                    let taint: BTreeMap<String, BTreeSet<StmtId>> = g
                        .params
                        .iter()
                        .cloned()
                        .zip(arg_taints)
                        .collect();
                    frames.push(Frame {
                        function: callee.clone(),
                        index: 0,
                        taint,
                        visits: BTreeMap::new(),
                    });
                    self.walk(frames, path);
                    frames.pop();
                }
            }
            Op::If { .. } => {
                // Fallthrough first, then branch target.
                for s in successors(func, i) {
                    self.step(frames, path, s);
                }
            }
            _ => {
                let taint_update = match op {
                    Op::Const { dst, .. }
                    | Op::EnvDir { dst, .. }
                    | Op::GetExtra { dst, .. }
                    | Op::GetUri { dst } => Some((dst.clone(), BTreeSet::from([id.clone()]))),
                    Op::Concat { dst, lhs, rhs } => {
                        let mut t = frame.taint.get(lhs).cloned().unwrap_or_default();
                        t.extend(frame.taint.get(rhs).cloned().unwrap_or_default());
                        Some((dst.clone(), t))
                    }
                    Op::LastSeg { dst, src }
                    | Op::Canonical { dst, src }
                    | Op::UriMatch { dst, uri: src, .. } => Some((
                        dst.clone(),
                        frame.taint.get(src).cloned().unwrap_or_default(),
                    )),
                    _ => None,
                };
                let saved = taint_update.map(|(dst, new_taint)| {
                    let frame = frames.last_mut().expect("frame");
                    let old = frame.taint.insert(dst.clone(), new_taint);
                    (dst, old)
                });
                self.step(frames, path, i + 1);
                if let Some((dst, old)) = saved {
                    let frame = frames.last_mut().expect("frame");
                    match old {
                        Some(t) => {
                            frame.taint.insert(dst, t);
                        }
                        None => {
                            frame.taint.remove(&dst);
                        }
                    }
                }
            }
        }

        path.pop();
        let frame = frames.last_mut().expect("frame");
        *frame.visits.get_mut(&i).expect("visited") -= 1;
    }

    fn step(&mut self, frames: &mut Vec<Frame>, path: &mut Vec<StmtId>, next_index: usize) {
        let frame = frames.last().expect("frame");
        let func = self.program.function(&frame.function).expect("function");
        if next_index >= func.body.len() {
            return;
        }
        let next_id = StmtId::new(frame.function.clone(), next_index);
        // Direct the search: abandon arms in the entry frame that can no
        // longer reach a target sink. Deeper frames still unwind normally.
        if frames.len() == 1 && !self.relevant.contains(&next_id) {
            self.paths_done += 1;
            return;
        }
        let saved = frame.index;
        frames.last_mut().expect("frame").index = next_index;
        self.walk(frames, path);
        frames.last_mut().expect("frame").index = saved;
    }
}

/// Enumerate control paths from `entry_fn`, reporting every visit to a
/// statement in `sinks`. Paths are explored depth-first with fallthrough
/// before branch target, loops unrolled at most once, and exploration pruned
/// to statements that can still reach a sink.
pub fn enumerate_paths(
    program: &AlirProgram,
    pdg: &Pdg,
    entry_fn: &str,
    sinks: &BTreeSet<StmtId>,
    budgets: &Budgets,
) -> (Vec<PathHit>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let f = match program.function(entry_fn) {
        Some(f) => f,
        None => return (Vec::new(), diags),
    };
    if f.body.is_empty() {
        return (Vec::new(), diags);
    }
    let relevant = backward_reach(pdg, sinks);
    if !relevant.contains(&StmtId::new(entry_fn, 0)) {
        return (Vec::new(), diags);
    }
    let mut en = Enumerator {
        program,
        relevant,
        sinks,
        budgets,
        hits: Vec::new(),
        paths_done: 0,
        truncated: false,
    };
    let mut frames = vec![Frame {
        function: entry_fn.to_string(),
        index: 0,
        taint: BTreeMap::new(),
        visits: BTreeMap::new(),
    }];
    let mut path = Vec::new();
    en.walk(&mut frames, &mut path);
    if en.truncated {
        diags.push(
            Diagnostic::warning(
                "path-budget-exhausted",
                format!(
                    "path enumeration from `{entry_fn}` truncated at {} paths",
                    budgets.max_paths
                ),
            )
            .at(entry_fn.to_string()),
        );
    }
    (en.hits, diags)
}

/// Enumerate taint flows from external sources to sinks, per
/// (entry, source, sink, control path). Every returned flow has a data
/// dependence chain from its source to the sink's pathname argument along
/// its control path.
pub fn forward_taint(
    program: &AlirProgram,
    pdg: &Pdg,
    entries: &[(String, String)],
    sources: &BTreeSet<StmtId>,
    sinks: &BTreeSet<StmtId>,
    budgets: &Budgets,
) -> (Vec<TaintFlow>, Vec<Diagnostic>) {
    let mut flows = Vec::new();
    let mut diags = Vec::new();
    for (component, entry_fn) in entries {
        let (hits, d) = enumerate_paths(program, pdg, entry_fn, sinks, budgets);
        diags.extend(d);
        for hit in hits {
            for src in hit.contributing.iter() {
                if !sources.contains(src) {
                    continue;
                }
                let external = program
                    .stmt(src)
                    .map(Op::is_external_source)
                    .unwrap_or(false);
                if !external {
                    continue;
                }
                flows.push(TaintFlow {
                    component: component.clone(),
                    entry: entry_fn.clone(),
                    source: FlowSource::External(src.clone()),
                    sink: hit.sink.clone(),
                    control_path: hit.control_path.clone(),
                    source_kind: SourceKind::External,
                });
            }
        }
    }
    flows.sort_by(|a, b| {
        (&a.component, &a.entry, &a.source, &a.sink, &a.control_path).cmp(&(
            &b.component,
            &b.entry,
            &b.source,
            &b.sink,
            &b.control_path,
        ))
    });
    (flows, diags)
}

/// Result of the reverse walk from a sink's pathname argument.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InternalSources {
    /// CONST/ENVDIR statements whose values may reach the sink argument.
    pub internal: BTreeSet<StmtId>,
    /// External source statements encountered on a contributing chain. When
    /// non-empty the flow is assessed for path traversal instead of
    /// hijacking.
    pub external: BTreeSet<StmtId>,
}

impl InternalSources {
    pub fn is_external_tainted(&self) -> bool {
        !self.external.is_empty()
    }
}

/// Walk def-use chains backwards from the sink's pathname argument(s) and
/// collect the internal source statements feeding it. External sources found
/// on the way are reported so the caller can route the flow to traversal
/// analysis.
pub fn reverse_dataflow(pdg: &Pdg, program: &AlirProgram, sink: &StmtId) -> InternalSources {
    let mut result = InternalSources::default();
    let mut edges_into: BTreeMap<&StmtId, Vec<&StmtId>> = BTreeMap::new();
    for (def, use_site, _) in &pdg.data_edges {
        edges_into.entry(use_site).or_default().push(def);
    }
    let mut seen = BTreeSet::new();
    let mut stack = vec![sink.clone()];
    while let Some(s) = stack.pop() {
        if !seen.insert(s.clone()) {
            continue;
        }
        if let Some(op) = program.stmt(&s) {
            if op.is_internal_source() {
                result.internal.insert(s.clone());
                continue;
            }
            if op.is_external_source() {
                result.external.insert(s.clone());
                continue;
            }
        }
        if let Some(defs) = edges_into.get(&s) {
            for d in defs {
                stack.push((*d).clone());
            }
        }
    }
    result
}

/// Distinct (entry, source, sink) triples over all entries and all source
/// kinds, with no environmental constraints applied. This is the raw
/// source-to-sink flow enumeration used as the pre-constraint statistic.
pub fn raw_flow_triples(
    program: &AlirProgram,
    pdg: &Pdg,
    entries: &[(String, String)],
    budgets: &Budgets,
) -> BTreeSet<(String, StmtId, StmtId)> {
    let sinks: BTreeSet<StmtId> = program.sinks().into_iter().collect();
    let mut triples = BTreeSet::new();
    for (_, entry_fn) in entries {
        let (hits, _) = enumerate_paths(program, pdg, entry_fn, &sinks, budgets);
        for hit in hits {
            for src in hit.contributing {
                triples.insert((entry_fn.clone(), src, hit.sink.clone()));
            }
        }
    }
    triples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::alir::parse_alir;

    fn ids(f: &str, idxs: &[usize]) -> Vec<StmtId> {
        idxs.iter().map(|i| StmtId::new(f, *i)).collect()
    }

    #[test]
    fn straight_line_control_and_data_edges() {
        let p = parse_alir(
            "fn f() {\n  CONST a \"/x/\"\n  CONST b \"y\"\n  CONCAT c a b\n  RETURN\n}\n",
        )
        .unwrap();
        let (pdg, _) = build_pdg(&p, &["f".into()]);
        // 4 statements, 3 control edges.
        assert_eq!(pdg.nodes.len(), 4);
        assert_eq!(pdg.control_edges.len(), 3);
        let expected: BTreeSet<(StmtId, StmtId, String)> = BTreeSet::from([
            (StmtId::new("f", 0), StmtId::new("f", 2), "a".to_string()),
            (StmtId::new("f", 1), StmtId::new("f", 2), "b".to_string()),
        ]);
        assert_eq!(pdg.data_edges, expected);
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

    #[test]
    fn wallpaper_def_use_chain_reaches_sink() {
        let p = parse_alir(WALLPAPER).unwrap();
        let (pdg, _) = build_pdg(&p, &["openFile".into()]);
        // GETURI -> LASTSEG (uri), LASTSEG -> CONCAT (seg), CONCAT -> SINK (path)
        assert!(pdg.data_edges.contains(&(
            StmtId::new("openFile", 0),
            StmtId::new("openFile", 6),
            "uri".to_string()
        )));
        assert!(pdg.data_edges.contains(&(
            StmtId::new("openFile", 6),
            StmtId::new("openFile", 7),
            "seg".to_string()
        )));
        assert!(pdg.data_edges.contains(&(
            StmtId::new("openFile", 7),
            StmtId::new("openFile", 8),
            "path".to_string()
        )));
    }

    #[test]
    fn diamond_has_both_branch_successors() {
        let p = parse_alir(
            "fn f(c) {\n  IF c == \"x\" GOTO l\n  CONST a \"1\"\n  LABEL l\n  RETURN\n}\n",
        )
        .unwrap();
        let (pdg, _) = build_pdg(&p, &["f".into()]);
        assert!(pdg
            .control_edges
            .contains(&(StmtId::new("f", 0), StmtId::new("f", 1))));
        assert!(pdg
            .control_edges
            .contains(&(StmtId::new("f", 0), StmtId::new("f", 2))));
    }

    #[test]
    fn wallpaper_yields_exactly_one_external_flow() {
        let p = parse_alir(WALLPAPER).unwrap();
        let (pdg, _) = build_pdg(&p, &["openFile".into()]);
        let sources: BTreeSet<StmtId> = BTreeSet::from([StmtId::new("openFile", 0)]);
        let sinks: BTreeSet<StmtId> = p.sinks().into_iter().collect();
        let entries = vec![("WallpaperProvider".to_string(), "openFile".to_string())];
        let (flows, _) = forward_taint(&p, &pdg, &entries, &sources, &sinks, &Budgets::default());
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].sink, StmtId::new("openFile", 8));
        assert_eq!(
            flows[0].control_path,
            ids("openFile", &[0, 1, 2, 3, 4, 5, 6, 7, 8])
        );
    }

    const CLIENTPROVIDER: &str = r#"
fn openFile(mode) {
  GETURI u1
  GETEXTRA enc "encode"
  CONST e ""
  LASTSEG p u1
  IF enc != "path" GOTO open
  GETURI u2
  LASTSEG q u2
  CONCAT p q e
  LABEL open
  SINK open p
  RETURN
}
"#;

    #[test]
    fn clientprovider_yields_two_flows_to_same_sink() {
        let p = parse_alir(CLIENTPROVIDER).unwrap();
        let (pdg, _) = build_pdg(&p, &["openFile".into()]);
        let sources: BTreeSet<StmtId> =
            BTreeSet::from([StmtId::new("openFile", 0), StmtId::new("openFile", 5)]);
        let sinks: BTreeSet<StmtId> = p.sinks().into_iter().collect();
        let entries = vec![("ClientProvider".to_string(), "openFile".to_string())];
        let (flows, _) = forward_taint(&p, &pdg, &entries, &sources, &sinks, &Budgets::default());
        assert_eq!(flows.len(), 2);
        let sink = StmtId::new("openFile", 9);
        assert!(flows.iter().all(|f| f.sink == sink));
        let srcs: BTreeSet<&FlowSource> = flows.iter().map(|f| &f.source).collect();
        assert_eq!(srcs.len(), 2);
    }

    #[test]
    fn source_with_no_path_to_sink_yields_nothing() {
        let p = parse_alir(
            "fn f() {\n  GETEXTRA x \"k\"\n  CONST a \"/data/x\"\n  SINK open a\n  RETURN\n}\n",
        )
        .unwrap();
        let (pdg, _) = build_pdg(&p, &["f".into()]);
        let sources: BTreeSet<StmtId> = BTreeSet::from([StmtId::new("f", 0)]);
        let sinks: BTreeSet<StmtId> = p.sinks().into_iter().collect();
        let entries = vec![("C".to_string(), "f".to_string())];
        let (flows, _) = forward_taint(&p, &pdg, &entries, &sources, &sinks, &Budgets::default());
        assert!(flows.is_empty());
    }

    #[test]
    fn reverse_dataflow_const_only() {
        let p = parse_alir("fn f() {\n  CONST a \"/data/log/x.txt\"\n  SINK open a\n  RETURN\n}\n")
            .unwrap();
        let (pdg, _) = build_pdg(&p, &["f".into()]);
        let r = reverse_dataflow(&pdg, &p, &StmtId::new("f", 1));
        assert_eq!(r.internal, BTreeSet::from([StmtId::new("f", 0)]));
        assert!(!r.is_external_tainted());
    }

    #[test]
    fn reverse_dataflow_envdir_and_const() {
        let p = parse_alir(
            "fn f() {\n  ENVDIR d FilesDir\n  CONST c \"/cfg\"\n  CONCAT p d c\n  SINK open p\n  RETURN\n}\n",
        )
        .unwrap();
        let (pdg, _) = build_pdg(&p, &["f".into()]);
        let r = reverse_dataflow(&pdg, &p, &StmtId::new("f", 3));
        assert_eq!(
            r.internal,
            BTreeSet::from([StmtId::new("f", 0), StmtId::new("f", 1)])
        );
        assert!(!r.is_external_tainted());
    }

    #[test]
    fn reverse_dataflow_flags_external() {
        let p = parse_alir(
            "fn f() {\n  GETEXTRA s \"sub\"\n  CONST b \"/data/log/\"\n  CONCAT p b s\n  SINK open p\n  RETURN\n}\n",
        )
        .unwrap();
        let (pdg, _) = build_pdg(&p, &["f".into()]);
        let r = reverse_dataflow(&pdg, &p, &StmtId::new("f", 3));
        assert!(r.is_external_tainted());
        assert_eq!(r.external, BTreeSet::from([StmtId::new("f", 0)]));
    }

    #[test]
    fn flows_through_calls() {
        let text = "fn entry() {\n  GETEXTRA x \"k\"\n  CALL helper(x)\n  RETURN\n}\n\nfn helper(p) {\n  SINK open p\n  RETURN\n}\n";
        let p = parse_alir(text).unwrap();
        let (pdg, _) = build_pdg(&p, &["entry".into()]);
        let sources: BTreeSet<StmtId> = BTreeSet::from([StmtId::new("entry", 0)]);
        let sinks: BTreeSet<StmtId> = p.sinks().into_iter().collect();
        let entries = vec![("C".to_string(), "entry".to_string())];
        let (flows, _) = forward_taint(&p, &pdg, &entries, &sources, &sinks, &Budgets::default());
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].sink, StmtId::new("helper", 0));
        assert_eq!(
            flows[0].control_path,
            vec![
                StmtId::new("entry", 0),
                StmtId::new("entry", 1),
                StmtId::new("helper", 0),
            ]
        );
    }

    #[test]
    fn loop_is_unrolled_at_most_once() {
        let text = "fn f(c) {\n  LABEL top\n  CONST a \"/data/log/x\"\n  SINK open a\n  IF c == \"again\" GOTO top\n  RETURN\n}\n";
        let p = parse_alir(text).unwrap();
        let (pdg, _) = build_pdg(&p, &["f".into()]);
        let sinks: BTreeSet<StmtId> = p.sinks().into_iter().collect();
        let (hits, _) = enumerate_paths(&p, &pdg, "f", &sinks, &Budgets::default());
        // First iteration hit plus one unrolled second-iteration hit.
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn deterministic_flow_order() {
        let p = parse_alir(CLIENTPROVIDER).unwrap();
        let (pdg, _) = build_pdg(&p, &["openFile".into()]);
        let sources: BTreeSet<StmtId> =
            BTreeSet::from([StmtId::new("openFile", 0), StmtId::new("openFile", 5)]);
        let sinks: BTreeSet<StmtId> = p.sinks().into_iter().collect();
        let entries = vec![("ClientProvider".to_string(), "openFile".to_string())];
        let (f1, _) = forward_taint(&p, &pdg, &entries, &sources, &sinks, &Budgets::default());
        let (f2, _) = forward_taint(&p, &pdg, &entries, &sources, &sinks, &Budgets::default());
        assert_eq!(f1, f2);
    }
}
