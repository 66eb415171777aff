//! The three vulnerability detectors and their orchestration, with mandatory
//! in-process validation of every positive through the concrete interpreter.

pub mod interp;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::constraints::canonical::canonicalize;
use crate::constraints::solve::{eval_expr, solve, Goal, Payload, SolveOutcome};
use crate::diag::Diagnostic;
use crate::frontend::alir::{Op, SinkKind, StmtId};
use crate::frontend::bundle::AppBundle;
use crate::frontend::policy::PolicySet;
use crate::graph::{
    build_pdg, forward_taint, raw_flow_triples, reverse_dataflow, Budgets, Pdg, SourceKind,
};
use crate::policy::{
    accessible_entries, file_constraints, resolve, AttackerLevel, FileConstraint,
};
use crate::symexec::{exec_all_entries, exec_path, PathCondition, SymexecError};

pub use interp::{interpret, FsModel, SinkEvent, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FindingClass {
    PathTraversal,
    Hijacking,
    Luring,
}

impl std::fmt::Display for FindingClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FindingClass::PathTraversal => "PathTraversal",
            FindingClass::Hijacking => "Hijacking",
            FindingClass::Luring => "Luring",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Validation {
    Confirmed,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SinkRef {
    pub function: String,
    pub line: u32,
    pub kind: SinkKind,
}

/// What the attack reaches: the adversary-chosen resource, and for
/// hijacking/luring the junction where the link is planted and the writable
/// root that makes it possible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TargetInfo {
    pub resource: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub junction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hijackable_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Finding {
    pub class: FindingClass,
    pub app: String,
    pub component: String,
    pub entry: String,
    pub attacker_level: AttackerLevel,
    pub required_permissions: Vec<String>,
    pub sink: SinkRef,
    /// Control path of the flow, as statement ids.
    pub flow: Vec<String>,
    pub condition_summary: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload: Option<Payload>,
    pub target: TargetInfo,
    pub validated: Validation,
}

impl Finding {
    /// Identity for de-duplication across attacker profiles and classes.
    fn identity(&self) -> (FindingClass, String, String, String, String) {
        (
            self.class,
            self.component.clone(),
            self.entry.clone(),
            format!("{}:{}", self.sink.function, self.sink.line),
            self.target.resource.clone(),
        )
    }

    fn sink_target_key(&self) -> (String, String) {
        (
            format!("{}:{}", self.sink.function, self.sink.line),
            self.target.resource.clone(),
        )
    }
}

/// Everything one detector pass needs.
struct Ctx<'a> {
    bundle: &'a AppBundle,
    policy: &'a PolicySet,
    attacker: AttackerLevel,
    fc: FileConstraint,
    entries: Vec<(String, String)>,
    pdg: Pdg,
    budgets: Budgets,
}

impl<'a> Ctx<'a> {
    fn new(
        bundle: &'a AppBundle,
        policy: &'a PolicySet,
        attacker: AttackerLevel,
        budgets: Budgets,
        diags: &mut Vec<Diagnostic>,
    ) -> Option<Ctx<'a>> {
        let fc = match file_constraints(policy, bundle.package(), attacker) {
            Ok(fc) => fc,
            Err(e) => {
                diags.push(Diagnostic::warning(
                    "victim-not-in-policy",
                    format!("{e}; skipping analysis for this bundle"),
                ));
                return None;
            }
        };
        let entries = accessible_entries(bundle, policy, attacker);
        let entry_fns: Vec<String> = {
            let mut seen = BTreeSet::new();
            entries
                .iter()
                .filter_map(|(_, f)| seen.insert(f.clone()).then(|| f.clone()))
                .collect()
        };
        let (pdg, pdg_diags) = build_pdg(&bundle.program, &entry_fns);
        diags.extend(pdg_diags);
        Some(Ctx {
            bundle,
            policy,
            attacker,
            fc,
            entries,
            pdg,
            budgets,
        })
    }

    fn required_permissions(&self, component: &str) -> Vec<String> {
        self.bundle
            .manifest
            .component(component)
            .and_then(|c| c.permission.clone())
            .into_iter()
            .collect()
    }

    fn sink_ref(&self, sink: &StmtId) -> SinkRef {
        let kind = match self.bundle.program.stmt(sink) {
            Some(Op::Sink { kind, .. }) => *kind,
            _ => SinkKind::Open,
        };
        SinkRef {
            function: sink.function.clone(),
            line: self.bundle.program.line_of(sink),
            kind,
        }
    }

    /// Adversary-chosen redirection target: the first victim-private prefix.
    fn adversary_target(&self) -> Option<String> {
        self.fc.private_prefixes.iter().next().cloned()
    }

    /// Validate through the interpreter: the sink must fire with the
    /// expected canonical pathname, resolving to the expected final
    /// resource.
    fn confirm(
        &self,
        payload: &Payload,
        fs: &FsModel,
        sink: &StmtId,
        expected_canonical: &str,
        expected_final: &str,
    ) -> Validation {
        let trace = interpret(
            self.bundle,
            self.policy,
            self.attacker,
            &payload.component,
            payload,
            fs,
            &self.budgets,
        );
        let hit = trace.events().any(|ev| {
            ev.sink == *sink
                && ev.canonical_path == expected_canonical
                && ev.resolution.final_path == expected_final
        });
        if hit {
            Validation::Confirmed
        } else {
            Validation::Failed
        }
    }
}

fn literal_prefix_of(cond: &PathCondition) -> Option<String> {
    // Leading literal of the sink path, Canonical wrappers ignored.
    fn leading(e: &crate::symexec::StrExpr) -> Option<String> {
        use crate::symexec::StrExpr;
        match e {
            StrExpr::Lit(s) => Some(s.clone()),
            StrExpr::Concat(a, _) => leading(a),
            StrExpr::Canonical(inner) => leading(inner),
            _ => None,
        }
    }
    leading(&cond.sink_path)
}

/// External-source flows from accessible entries, symbolically executed.
fn traversal_conditions(ctx: &Ctx<'_>, diags: &mut Vec<Diagnostic>) -> Vec<PathCondition> {
    let program = &ctx.bundle.program;
    let sources: BTreeSet<StmtId> = program
        .statements()
        .filter(|(_, op)| op.is_external_source())
        .map(|(id, _)| id)
        .collect();
    let sinks: BTreeSet<StmtId> = program.sinks().into_iter().collect();
    let (flows, flow_diags) = forward_taint(
        program,
        &ctx.pdg,
        &ctx.entries,
        &sources,
        &sinks,
        &ctx.budgets,
    );
    diags.extend(flow_diags);
    let mut conds = Vec::new();
    for flow in &flows {
        match exec_path(program, flow, ctx.bundle.package(), &ctx.budgets) {
            Ok(c) => conds.push(c),
            Err(SymexecError::AtomBudgetExceeded(n)) => diags.push(
                Diagnostic::warning(
                    "atom-budget-exhausted",
                    format!("flow to {} exceeded the {n}-atom budget", flow.sink),
                )
                .at(flow.entry.clone()),
            ),
            Err(e) => diags.push(Diagnostic::error("symexec-internal", e.to_string())),
        }
    }
    conds
}

fn build_finding(
    ctx: &Ctx<'_>,
    class: FindingClass,
    cond: &PathCondition,
    payload: Option<Payload>,
    target: TargetInfo,
    validated: Validation,
) -> Finding {
    Finding {
        class,
        app: ctx.bundle.package().to_string(),
        component: cond.flow.component.clone(),
        entry: cond.flow.entry.clone(),
        attacker_level: ctx.attacker,
        required_permissions: ctx.required_permissions(&cond.flow.component),
        sink: ctx.sink_ref(&cond.flow.sink),
        flow: cond.flow.control_path.iter().map(|s| s.to_string()).collect(),
        condition_summary: cond.atom_summary(),
        payload,
        target,
        validated,
    }
}

/// Path traversal: attacker input steers the victim's file operation to a
/// resource private to the victim.
pub fn detect_path_traversal(
    bundle: &AppBundle,
    policy: &PolicySet,
    attacker: AttackerLevel,
    budgets: &Budgets,
) -> (Vec<Finding>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let Some(ctx) = Ctx::new(bundle, policy, attacker, *budgets, &mut diags) else {
        return (Vec::new(), diags);
    };
    let mut findings = Vec::new();
    for cond in traversal_conditions(&ctx, &mut diags) {
        if cond.sanitized {
            // Sanitized flows are pruned unless the literal prefix alone
            // already reaches a private resource; then the attacker still
            // chooses which file under that private base is opened.
            let prefix_private = literal_prefix_of(&cond)
                .map(|p| ctx.fc.is_private(&canonicalize(&p).path))
                .unwrap_or(false);
            if !prefix_private {
                diags.push(
                    Diagnostic::info(
                        "sanitized-pruned",
                        format!(
                            "flow to {} pruned: adversary input is canonicalized",
                            cond.flow.sink
                        ),
                    )
                    .at(cond.flow.entry.clone()),
                );
                continue;
            }
        }
        match solve(
            &cond,
            Goal::ReachPrivate(&ctx.fc),
            &bundle.program.uri_tables,
            budgets.max_solver_candidates,
        ) {
            SolveOutcome::Sat(payload) => {
                let path = eval_expr(&cond.sink_path, &payload).expect("witness evaluates");
                let target = canonicalize(&path).path;
                let fs = FsModel {
                    existing_files: BTreeSet::from([target.clone()]),
                    ..FsModel::default()
                };
                let validated = ctx.confirm(&payload, &fs, &cond.flow.sink, &target, &target);
                findings.push(build_finding(
                    &ctx,
                    FindingClass::PathTraversal,
                    &cond,
                    Some(payload),
                    TargetInfo {
                        resource: target,
                        junction: None,
                        hijackable_dir: None,
                    },
                    validated,
                ));
            }
            SolveOutcome::Unsat => {}
            SolveOutcome::Unknown { budget } => diags.push(
                Diagnostic::warning(
                    "solver-budget-exhausted",
                    format!(
                        "flow to {} undecided within {budget} candidates",
                        cond.flow.sink
                    ),
                )
                .at(cond.flow.entry.clone()),
            ),
        }
    }
    (findings, diags)
}

/// Hijacking: a hard-coded pathname resolves through a directory the
/// attacker can write, so a planted link or squatted file redirects the
/// victim.
pub fn detect_hijacking(
    bundle: &AppBundle,
    policy: &PolicySet,
    attacker: AttackerLevel,
    budgets: &Budgets,
) -> (Vec<Finding>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let Some(ctx) = Ctx::new(bundle, policy, attacker, *budgets, &mut diags) else {
        return (Vec::new(), diags);
    };
    let program = &bundle.program;
    let mut findings = Vec::new();
    for sink in program.sinks() {
        if !ctx.pdg.contains(&sink) {
            continue; // unreachable from any accessible entry
        }
        let rd = reverse_dataflow(&ctx.pdg, program, &sink);
        if rd.is_external_tainted() {
            diags.push(Diagnostic::info(
                "external-flow-routed",
                format!("sink {sink} carries external input; assessed for path traversal"),
            ));
            continue;
        }
        if rd.internal.is_empty() {
            continue;
        }
        // Cheap pruning before symbolic execution: some contributing literal
        // must name an attacker-writable directory.
        let literal_of = |id: &StmtId| -> Option<String> {
            match program.stmt(id) {
                Some(Op::Const { value, .. }) => Some(value.clone()),
                Some(Op::EnvDir { api, .. }) => {
                    crate::symexec::api_summary(api, bundle.package()).ok()
                }
                _ => None,
            }
        };
        let hijack_material = rd.internal.iter().filter_map(|s| literal_of(s)).any(|lit| {
            let canon = canonicalize(&lit).path;
            canon.starts_with('/') && ctx.fc.has_hijackable_prefix(&canon)
        });
        if !hijack_material {
            diags.push(Diagnostic::info(
                "hijack-pruned",
                format!("sink {sink} uses no adversary-controlled directory"),
            ));
            continue;
        }
        let (conds, exec_diags) = exec_all_entries(
            program,
            &ctx.pdg,
            bundle.package(),
            &ctx.entries,
            &sink,
            &ctx.budgets,
        );
        diags.extend(exec_diags);
        for cond in conds {
            if cond.sink_path.has_syms() {
                continue; // mixed flows belong to traversal/luring
            }
            match solve(
                &cond,
                Goal::ReachSink,
                &program.uri_tables,
                budgets.max_solver_candidates,
            ) {
                SolveOutcome::Sat(payload) => {
                    let literal = eval_expr(&cond.sink_path, &payload).expect("literal evaluates");
                    let canon = canonicalize(&literal).path;
                    if !ctx.fc.has_hijackable_prefix(&canon) {
                        continue;
                    }
                    let probe = resolve(policy, attacker, &canon, &BTreeMap::new());
                    let junction = match probe.junctions.last() {
                        Some(j) => j.clone(),
                        None => continue,
                    };
                    let hijack_root = ctx
                        .fc
                        .hijackable_dirs
                        .iter()
                        .find(|d| crate::constraints::canonical::is_path_under(&canon, d))
                        .cloned();
                    let link_target = ctx
                        .adversary_target()
                        .unwrap_or_else(|| "/data/system/secret".to_string());
                    let fs = FsModel {
                        planted_links: BTreeMap::from([(junction.clone(), link_target.clone())]),
                        existing_files: BTreeSet::from([link_target.clone()]),
                    };
                    let validated =
                        ctx.confirm(&payload, &fs, &cond.flow.sink, &canon, &link_target);
                    findings.push(build_finding(
                        &ctx,
                        FindingClass::Hijacking,
                        &cond,
                        Some(payload),
                        TargetInfo {
                            resource: link_target,
                            junction: Some(junction),
                            hijackable_dir: hijack_root,
                        },
                        validated,
                    ));
                }
                SolveOutcome::Unsat => {}
                SolveOutcome::Unknown { budget } => diags.push(Diagnostic::warning(
                    "solver-budget-exhausted",
                    format!("hijack path to {sink} undecided within {budget} candidates"),
                )),
            }
        }
    }
    (findings, diags)
}

/// Luring: attacker input steers the victim into an attacker-writable
/// directory where a planted link redirects resolution to a private target.
pub fn detect_luring(
    bundle: &AppBundle,
    policy: &PolicySet,
    attacker: AttackerLevel,
    budgets: &Budgets,
) -> (Vec<Finding>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let Some(ctx) = Ctx::new(bundle, policy, attacker, *budgets, &mut diags) else {
        return (Vec::new(), diags);
    };
    let mut findings = Vec::new();
    for cond in traversal_conditions(&ctx, &mut diags) {
        if cond.sanitized {
            // Canonicalized input cannot be steered into a foreign
            // directory; luring has no literal-prefix exception.
            if cond.sink_path.has_syms() {
                diags.push(
                    Diagnostic::info(
                        "sanitized-pruned",
                        format!(
                            "luring flow to {} pruned: adversary input is canonicalized",
                            cond.flow.sink
                        ),
                    )
                    .at(cond.flow.entry.clone()),
                );
            }
            continue;
        }
        let Some(link_target) = ctx.adversary_target() else {
            continue;
        };
        match solve(
            &cond,
            Goal::ReachHijackable(&ctx.fc),
            &bundle.program.uri_tables,
            budgets.max_solver_candidates,
        ) {
            SolveOutcome::Sat(payload) => {
                let landed =
                    canonicalize(&eval_expr(&cond.sink_path, &payload).expect("witness evaluates"))
                        .path;
                let planted = BTreeMap::from([(landed.clone(), link_target.clone())]);
                let resolution = resolve(policy, attacker, &landed, &planted);
                if resolution.final_path != link_target {
                    continue;
                }
                let junction = resolution
                    .followed
                    .first()
                    .map(|(j, _)| j.clone())
                    .unwrap_or_else(|| landed.clone());
                let hijack_root = ctx
                    .fc
                    .hijackable_dirs
                    .iter()
                    .find(|d| crate::constraints::canonical::is_path_under(&landed, d))
                    .cloned();
                let fs = FsModel {
                    planted_links: planted,
                    existing_files: BTreeSet::from([link_target.clone()]),
                };
                let validated = ctx.confirm(&payload, &fs, &cond.flow.sink, &landed, &link_target);
                findings.push(build_finding(
                    &ctx,
                    FindingClass::Luring,
                    &cond,
                    Some(payload),
                    TargetInfo {
                        resource: link_target,
                        junction: Some(junction),
                        hijackable_dir: hijack_root,
                    },
                    validated,
                ));
            }
            SolveOutcome::Unsat => {}
            SolveOutcome::Unknown { budget } => diags.push(
                Diagnostic::warning(
                    "solver-budget-exhausted",
                    format!(
                        "luring flow to {} undecided within {budget} candidates",
                        cond.flow.sink
                    ),
                )
                .at(cond.flow.entry.clone()),
            ),
        }
    }
    (findings, diags)
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SourceCounts {
    pub total: usize,
    pub internal: usize,
    pub external: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Stats {
    pub entry_count: usize,
    pub source_counts: SourceCounts,
    pub attackable_source_count: usize,
    pub sink_count: usize,
    pub flows_pre_constraint: usize,
    pub flows_post_constraint: usize,
}

#[derive(Debug, Clone)]
pub struct BundleAnalysis {
    pub findings: Vec<Finding>,
    pub diagnostics: Vec<Diagnostic>,
    pub stats: Stats,
    /// All path conditions examined, for `--dump-conditions`.
    pub conditions: Vec<PathCondition>,
    /// The accessible-entry PDG in DOT form, for `--dump-pdg`.
    pub pdg_dot: String,
}

/// Sinks that survive the hijacking literal-path pruning, used by the
/// post-constraint flow statistic.
fn surviving_hijack_sinks(
    bundle: &AppBundle,
    pdg: &Pdg,
    fc: &FileConstraint,
) -> BTreeSet<StmtId> {
    let program = &bundle.program;
    let mut out = BTreeSet::new();
    for sink in program.sinks() {
        if !pdg.contains(&sink) {
            continue;
        }
        let rd = reverse_dataflow(pdg, program, &sink);
        if rd.is_external_tainted() || rd.internal.is_empty() {
            continue;
        }
        let material = rd
            .internal
            .iter()
            .filter_map(|s| match program.stmt(s) {
                Some(Op::Const { value, .. }) => Some(value.clone()),
                Some(Op::EnvDir { api, .. }) => {
                    crate::symexec::api_summary(api, bundle.package()).ok()
                }
                _ => None,
            })
            .any(|lit| {
                let canon = canonicalize(&lit).path;
                canon.starts_with('/') && fc.has_hijackable_prefix(&canon)
            });
        if material {
            out.insert(sink);
        }
    }
    out
}

fn compute_stats(
    bundle: &AppBundle,
    policy: &PolicySet,
    attacker: AttackerLevel,
    budgets: &Budgets,
) -> Stats {
    let program = &bundle.program;
    let external: BTreeSet<StmtId> = program
        .statements()
        .filter(|(_, op)| op.is_external_source())
        .map(|(id, _)| id)
        .collect();
    let internal_count = program
        .statements()
        .filter(|(_, op)| op.is_internal_source())
        .count();

    // Pre-constraint: plain PDG source-to-sink traversal over every entry
    // point, exported or not.
    let all_entries = bundle.entry_points();
    let all_fns: Vec<String> = bundle.entry_functions();
    let (full_pdg, _) = build_pdg(program, &all_fns);
    let pre = raw_flow_triples(program, &full_pdg, &all_entries, budgets);

    // Post-constraint: entry constraints filter external flows; file
    // constraints additionally filter internal (hijacking) flows.
    let accessible = accessible_entries(bundle, policy, attacker);
    let accessible_fns: Vec<String> = {
        let mut seen = BTreeSet::new();
        accessible
            .iter()
            .filter_map(|(_, f)| seen.insert(f.clone()).then(|| f.clone()))
            .collect()
    };
    let (acc_pdg, _) = build_pdg(program, &accessible_fns);
    let post = match file_constraints(policy, bundle.package(), attacker) {
        Ok(fc) => {
            let surviving = surviving_hijack_sinks(bundle, &acc_pdg, &fc);
            raw_flow_triples(program, &acc_pdg, &accessible, budgets)
                .into_iter()
                .filter(|(_, src, sink)| {
                    let is_external = external.contains(src);
                    is_external || surviving.contains(sink)
                })
                .count()
        }
        Err(_) => 0,
    };

    let attackable = external
        .iter()
        .filter(|id| acc_pdg.contains(id))
        .count();

    Stats {
        entry_count: bundle.entry_points().len(),
        source_counts: SourceCounts {
            total: external.len() + internal_count,
            internal: internal_count,
            external: external.len(),
        },
        attackable_source_count: attackable,
        sink_count: program.sinks().len(),
        flows_pre_constraint: pre.len(),
        flows_post_constraint: post,
    }
}

/// Run all three detectors for every attacker profile at or below the given
/// level, validate positives, de-duplicate, and compute the flow statistics.
///
/// Findings are unioned across profiles (a vulnerability exploitable by a
/// weaker attacker is still exploitable by a stronger one), keeping the
/// weakest profile per identity; a (sink, target) pair reported as path
/// traversal suppresses the equivalent luring finding, traversal being the
/// stronger primitive.
pub fn analyze_bundle(
    bundle: &AppBundle,
    policy: &PolicySet,
    level: AttackerLevel,
    budgets: &Budgets,
) -> BundleAnalysis {
    let mut diagnostics: Vec<Diagnostic> = bundle.diagnostics.clone();
    let mut by_identity: BTreeMap<(FindingClass, String, String, String, String), Finding> =
        BTreeMap::new();
    let mut conditions = Vec::new();

    for profile in level.profiles_up_to() {
        let (t, d1) = detect_path_traversal(bundle, policy, *profile, budgets);
        let (h, d2) = detect_hijacking(bundle, policy, *profile, budgets);
        let (l, d3) = detect_luring(bundle, policy, *profile, budgets);
        for d in d1.into_iter().chain(d2).chain(d3) {
            if !diagnostics.contains(&d) {
                diagnostics.push(d);
            }
        }
        for f in t.into_iter().chain(h).chain(l) {
            by_identity.entry(f.identity()).or_insert(f);
        }
    }

    // Cross-class de-duplication.
    let traversal_keys: BTreeSet<(String, String)> = by_identity
        .values()
        .filter(|f| f.class == FindingClass::PathTraversal)
        .map(Finding::sink_target_key)
        .collect();
    let mut findings: Vec<Finding> = by_identity
        .into_values()
        .filter(|f| {
            f.class != FindingClass::Luring || !traversal_keys.contains(&f.sink_target_key())
        })
        .collect();
    findings.sort_by(|a, b| {
        (
            &a.class,
            &a.component,
            a.sink.line,
            &a.entry,
            &a.target.resource,
        )
            .cmp(&(
                &b.class,
                &b.component,
                b.sink.line,
                &b.entry,
                &b.target.resource,
            ))
    });

    // Conditions and PDG for dump flags, computed at the requested level.
    let mut dump_diags = Vec::new();
    let pdg_dot = match Ctx::new(bundle, policy, level, *budgets, &mut dump_diags) {
        Some(ctx) => {
            conditions.extend(traversal_conditions(&ctx, &mut dump_diags));
            ctx.pdg.to_dot(&bundle.program)
        }
        None => String::new(),
    };

    let stats = compute_stats(bundle, policy, level, budgets);
    BundleAnalysis {
        findings,
        diagnostics,
        stats,
        conditions,
        pdg_dot,
    }
}
