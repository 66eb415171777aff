//! Concrete ALIR interpreter: the in-process validation oracle.
//!
//! Every reported finding is replayed here before it is confirmed. The
//! interpreter executes an entry function under a concrete payload, records
//! each sink invocation with its evaluated and canonicalized pathname, and
//! resolves that pathname through the policy module's namespace model
//! (planted links included). Execution is deterministic.

use std::collections::{BTreeMap, BTreeSet};

use crate::constraints::canonical::canonicalize;
use crate::constraints::solve::Payload;
use crate::frontend::alir::{AlirProgram, Cond, Op, Operand, SinkKind, StmtId};
use crate::frontend::bundle::AppBundle;
use crate::frontend::policy::PolicySet;
use crate::graph::Budgets;
use crate::policy::{resolve, AttackerLevel, Resolution};
use crate::symexec::{api_summary, last_segment, match_uri};

/// Filesystem assumptions for one validation run. Defaults: target private
/// files exist, hijackable directories start empty, links are planted
/// exactly as the detector prescribes.
#[derive(Debug, Clone, Default)]
pub struct FsModel {
    pub planted_links: BTreeMap<String, String>,
    pub existing_files: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkEvent {
    pub sink: StmtId,
    pub kind: SinkKind,
    /// Pathname exactly as the program computed it.
    pub raw_path: String,
    /// Lexical normalization of `raw_path`.
    pub canonical_path: String,
    /// Name-resolution outcome under the filesystem model.
    pub resolution: Resolution,
    /// Whether the resolved resource exists in the model.
    pub exists: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Completed,
    /// A GETEXTRA/GETURI read had no value in the payload.
    IncompletePayload { key: String },
    StepBudgetExceeded,
    /// Internal execution fault (should not happen on linked programs).
    Fault(String),
}

#[derive(Debug, Clone)]
pub struct EntryRun {
    pub function: String,
    pub outcome: RunOutcome,
    pub events: Vec<SinkEvent>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub component: String,
    pub runs: Vec<EntryRun>,
}

impl Trace {
    pub fn events(&self) -> impl Iterator<Item = &SinkEvent> {
        self.runs.iter().flat_map(|r| r.events.iter())
    }
}

#[derive(Debug, Clone)]
enum CVal {
    S(String),
    I(i64),
}

struct Machine<'a> {
    program: &'a AlirProgram,
    policy: &'a PolicySet,
    attacker: AttackerLevel,
    package: &'a str,
    payload: &'a Payload,
    fs: &'a FsModel,
    steps: usize,
    max_steps: usize,
    max_depth: usize,
    events: Vec<SinkEvent>,
}

enum StepStop {
    Done,
    Incomplete(String),
    Budget,
    Fault(String),
}

impl Machine<'_> {
    fn run_function(&mut self, name: &str, args: Vec<CVal>, depth: usize) -> StepStop {
        if depth > self.max_depth {
            return StepStop::Fault(format!("call depth exceeded at `{name}`"));
        }
        let f = match self.program.function(name) {
            Some(f) => f,
            None => return StepStop::Fault(format!("undefined function `{name}`")),
        };
        let mut env: BTreeMap<String, CVal> = BTreeMap::new();
        for (p, a) in f.params.iter().zip(args.into_iter()) {
            env.insert(p.clone(), a);
        }
        // Entry parameters without supplied arguments read as empty strings.
        for p in &f.params {
            env.entry(p.clone()).or_insert(CVal::S(String::new()));
        }
        let mut pc = 0usize;
        loop {
            if pc >= f.body.len() {
                return StepStop::Fault(format!("fell off the end of `{name}`"));
            }
            self.steps += 1;
            if self.steps > self.max_steps {
                return StepStop::Budget;
            }
            let id = StmtId::new(name, pc);
            let str_of = |env: &BTreeMap<String, CVal>, v: &str| -> Result<String, StepStop> {
                match env.get(v) {
                    Some(CVal::S(s)) => Ok(s.clone()),
                    Some(CVal::I(_)) => Err(StepStop::Fault(format!("`{v}` is an int"))),
                    None => Err(StepStop::Fault(format!("`{v}` unbound"))),
                }
            };
            macro_rules! get_str {
                ($v:expr) => {
                    match str_of(&env, $v) {
                        Ok(s) => s,
                        Err(stop) => return stop,
                    }
                };
            }
            match &f.body[pc] {
                Op::Const { dst, value } => {
                    env.insert(dst.clone(), CVal::S(value.clone()));
                    pc += 1;
                }
                Op::GetExtra { dst, key } => match self.payload.extras.get(key) {
                    Some(v) => {
                        env.insert(dst.clone(), CVal::S(v.clone()));
                        pc += 1;
                    }
                    None => return StepStop::Incomplete(key.clone()),
                },
                Op::GetUri { dst } => match &self.payload.uri {
                    Some(u) => {
                        env.insert(dst.clone(), CVal::S(u.clone()));
                        pc += 1;
                    }
                    None => return StepStop::Incomplete("uri".to_string()),
                },
                Op::Concat { dst, lhs, rhs } => {
                    let v = format!("{}{}", get_str!(lhs), get_str!(rhs));
                    env.insert(dst.clone(), CVal::S(v));
                    pc += 1;
                }
                Op::LastSeg { dst, src } => {
                    let v = last_segment(&get_str!(src));
                    env.insert(dst.clone(), CVal::S(v));
                    pc += 1;
                }
                Op::Canonical { dst, src } => {
                    let v = canonicalize(&get_str!(src)).path;
                    env.insert(dst.clone(), CVal::S(v));
                    pc += 1;
                }
                Op::EnvDir { dst, api } => match api_summary(api, self.package) {
                    Ok(v) => {
                        env.insert(dst.clone(), CVal::S(v));
                        pc += 1;
                    }
                    Err(e) => return StepStop::Fault(e.to_string()),
                },
                Op::UriMatch { dst, table, uri } => {
                    let u = get_str!(uri);
                    let rows = self
                        .program
                        .uri_tables
                        .get(table)
                        .map(Vec::as_slice)
                        .unwrap_or(&[]);
                    env.insert(dst.clone(), CVal::I(match_uri(rows, &u)));
                    pc += 1;
                }
                Op::If { cond, target } => {
                    let taken = match cond {
                        Cond::Str { lhs, rhs, negated } => {
                            let l = get_str!(lhs);
                            let r = match rhs {
                                Operand::Var(v) => get_str!(v),
                                Operand::Lit(s) => s.clone(),
                            };
                            (l == r) != *negated
                        }
                        Cond::Int { lhs, rhs, negated } => match env.get(lhs) {
                            Some(CVal::I(n)) => (*n == *rhs) != *negated,
                            _ => return StepStop::Fault(format!("`{lhs}` is not an int")),
                        },
                        Cond::StartsWith { var, lit } => get_str!(var).starts_with(lit.as_str()),
                        Cond::Contains { var, lit } => get_str!(var).contains(lit.as_str()),
                    };
                    if taken {
                        match f.label_index(target) {
                            Some(t) => pc = t,
                            None => return StepStop::Fault(format!("missing label `{target}`")),
                        }
                    } else {
                        pc += 1;
                    }
                }
                Op::Label { .. } => pc += 1,
                Op::Call { callee, args } => {
                    let mut vals = Vec::new();
                    for a in args {
                        vals.push(CVal::S(get_str!(a)));
                    }
                    match self.run_function(callee, vals, depth + 1) {
                        StepStop::Done => pc += 1,
                        stop => return stop,
                    }
                }
                Op::Sink { kind, args } => {
                    let raw = get_str!(&args[0]);
                    let canon = canonicalize(&raw);
                    let abs = if canon.path.starts_with('/') {
                        canon.path.clone()
                    } else {
                        format!("/{}", canon.path)
                    };
                    let resolution =
                        resolve(self.policy, self.attacker, &abs, &self.fs.planted_links);
                    let exists = self.fs.existing_files.contains(&resolution.final_path);
                    self.events.push(SinkEvent {
                        sink: id,
                        kind: *kind,
                        raw_path: raw,
                        canonical_path: canon.path,
                        resolution,
                        exists,
                    });
                    pc += 1;
                }
                Op::Return => return StepStop::Done,
            }
        }
    }
}

/// Concretely execute each entry function of a component under the payload.
/// Entry runs are independent: a missing payload key in one run does not
/// abort the others.
pub fn interpret(
    bundle: &AppBundle,
    policy: &PolicySet,
    attacker: AttackerLevel,
    component: &str,
    payload: &Payload,
    fs: &FsModel,
    budgets: &Budgets,
) -> Trace {
    let mut runs = Vec::new();
    let entry_functions = bundle
        .manifest
        .component(component)
        .map(|c| c.entry_functions.clone())
        .unwrap_or_default();
    for function in entry_functions {
        let mut m = Machine {
            program: &bundle.program,
            policy,
            attacker,
            package: bundle.package(),
            payload,
            fs,
            steps: 0,
            max_steps: budgets.max_interp_steps,
            max_depth: budgets.max_call_depth,
            events: Vec::new(),
        };
        let stop = m.run_function(&function, Vec::new(), 0);
        let outcome = match stop {
            StepStop::Done => RunOutcome::Completed,
            StepStop::Incomplete(key) => RunOutcome::IncompletePayload { key },
            StepStop::Budget => RunOutcome::StepBudgetExceeded,
            StepStop::Fault(msg) => RunOutcome::Fault(msg),
        };
        runs.push(EntryRun {
            function,
            outcome,
            events: m.events,
        });
    }
    Trace {
        component: component.to_string(),
        runs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::manifest::parse_manifest;
    use crate::frontend::policy::parse_policy;

    fn bundle(manifest: &str, alir: &str) -> AppBundle {
        AppBundle {
            manifest: parse_manifest(manifest).unwrap(),
            program: crate::frontend::alir::parse_alir(alir).unwrap(),
            dir_name: "test".to_string(),
            diagnostics: Vec::new(),
        }
    }

    const WALLPAPER_MANIFEST: &str = r#"{
        "package": "com.oneplus.wallpaper", "privilegeLevel": "LV2",
        "components": [{"name": "WallpaperProvider", "kind": "provider",
                        "exported": true, "permission": null,
                        "entryFunctions": ["openFile"]}],
        "declaredPermissions": [], "usesPermissions": []}"#;

    const WALLPAPER_ALIR: &str = r#"
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
    fn wallpaper_payload_opens_escaped_path() {
        let b = bundle(WALLPAPER_MANIFEST, WALLPAPER_ALIR);
        let policy = parse_policy("subject com.oneplus.wallpaper level 2\n").unwrap();
        let payload = Payload {
            component: "WallpaperProvider".to_string(),
            extras: BTreeMap::new(),
            uri: Some("content://com.oneplus.wallpaper/image/..%2F..%2Fshared_prefs".to_string()),
        };
        let trace = interpret(
            &b,
            &policy,
            AttackerLevel::Lv1,
            "WallpaperProvider",
            &payload,
            &FsModel::default(),
            &Budgets::default(),
        );
        let events: Vec<&SinkEvent> = trace.events().collect();
        assert_eq!(events.len(), 1);
        assert_eq!(
            events[0].canonical_path,
            "/data/data/com.oneplus.wallpaper/shared_prefs"
        );
        assert!(matches!(trace.runs[0].outcome, RunOutcome::Completed));
    }

    #[test]
    fn non_matching_uri_skips_sink() {
        let b = bundle(WALLPAPER_MANIFEST, WALLPAPER_ALIR);
        let policy = parse_policy("").unwrap();
        let payload = Payload {
            component: "WallpaperProvider".to_string(),
            extras: BTreeMap::new(),
            uri: Some("content://com.oneplus.wallpaper/other/x".to_string()),
        };
        let trace = interpret(
            &b,
            &policy,
            AttackerLevel::Lv1,
            "WallpaperProvider",
            &payload,
            &FsModel::default(),
            &Budgets::default(),
        );
        assert_eq!(trace.events().count(), 0);
    }

    #[test]
    fn missing_extra_reports_incomplete_payload() {
        let manifest = r#"{
            "package": "com.x", "privilegeLevel": "LV2",
            "components": [{"name": "C", "kind": "receiver", "exported": true,
                            "permission": null, "entryFunctions": ["onReceive"]}],
            "declaredPermissions": [], "usesPermissions": []}"#;
        let alir = "fn onReceive() {\n  GETEXTRA v \"k\"\n  SINK open v\n  RETURN\n}\n";
        let b = bundle(manifest, alir);
        let policy = parse_policy("").unwrap();
        let payload = Payload {
            component: "C".to_string(),
            extras: BTreeMap::new(),
            uri: None,
        };
        let trace = interpret(
            &b,
            &policy,
            AttackerLevel::Lv1,
            "C",
            &payload,
            &FsModel::default(),
            &Budgets::default(),
        );
        assert!(matches!(
            &trace.runs[0].outcome,
            RunOutcome::IncompletePayload { key } if key == "k"
        ));
        assert_eq!(trace.events().count(), 0);
    }

    #[test]
    fn planted_link_redirects_resolution() {
        let manifest = r#"{
            "package": "com.sec.resetreason", "privilegeLevel": "LV2",
            "components": [{"name": "BootReceiver", "kind": "receiver", "exported": true,
                            "permission": null, "entryFunctions": ["onReceive"]}],
            "declaredPermissions": [], "usesPermissions": []}"#;
        let alir = "fn onReceive() {\n  CONST p \"/data/log/power_off_resetreason.txt\"\n  SINK open p\n  RETURN\n}\n";
        let b = bundle(manifest, alir);
        let policy = parse_policy("allow LV1 /data/log write\n").unwrap();
        let fs = FsModel {
            planted_links: BTreeMap::from([(
                "/data/log/power_off_resetreason.txt".to_string(),
                "/data/system/secret".to_string(),
            )]),
            existing_files: BTreeSet::from(["/data/system/secret".to_string()]),
        };
        let payload = Payload {
            component: "BootReceiver".to_string(),
            extras: BTreeMap::new(),
            uri: None,
        };
        let trace = interpret(
            &b,
            &policy,
            AttackerLevel::Lv1,
            "BootReceiver",
            &payload,
            &fs,
            &Budgets::default(),
        );
        let ev: Vec<&SinkEvent> = trace.events().collect();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].resolution.final_path, "/data/system/secret");
        assert!(ev[0].exists);
    }
}
