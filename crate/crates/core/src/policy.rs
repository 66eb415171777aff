//! Environmental constraints derived from the access-control policy: which
//! entry points each attacker profile can invoke, which files are private to
//! a victim relative to an attacker, which directories an attacker can
//! write, and the symlink-capable name-resolution model.
//!
//! Filesystem access is modeled at path-prefix granularity: an allow rule on
//! a prefix grants the stated access to the whole subtree. A path is private
//! to the victim when the victim holds any access to it and the attacker
//! holds none (any unauthorized access is a confused-deputy win, so read and
//! write are not distinguished here).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::canonical::{is_path_under, parent_prefixes};
use crate::diag::Diagnostic;
use crate::frontend::bundle::AppBundle;
use crate::frontend::manifest::{ComponentDecl, ProtectionLevel};
use crate::frontend::policy::{Access, PolicySet, SubjectClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttackerLevel {
    /// Worst-case third-party app: granted every normal and dangerous
    /// permission in the global table, never signature permissions.
    #[serde(rename = "LV1")]
    Lv1,
    /// Privileged testing posture: additionally granted signature
    /// permissions and the filesystem access of OEM-level subjects.
    #[serde(rename = "LV2root")]
    Lv2Root,
}

impl AttackerLevel {
    pub fn rank(self) -> u8 {
        match self {
            AttackerLevel::Lv1 => 1,
            AttackerLevel::Lv2Root => 2,
        }
    }

    pub const ALL: [AttackerLevel; 2] = [AttackerLevel::Lv1, AttackerLevel::Lv2Root];

    /// Profiles at or below this level, weakest first.
    pub fn profiles_up_to(self) -> &'static [AttackerLevel] {
        match self {
            AttackerLevel::Lv1 => &[AttackerLevel::Lv1],
            AttackerLevel::Lv2Root => &[AttackerLevel::Lv1, AttackerLevel::Lv2Root],
        }
    }
}

impl std::fmt::Display for AttackerLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttackerLevel::Lv1 => f.write_str("LV1"),
            AttackerLevel::Lv2Root => f.write_str("LV2root"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackerProfile {
    pub level: AttackerLevel,
    pub granted_permissions: BTreeSet<String>,
}

/// Derive the worst-case attacker profile at a level from the merged
/// permission table.
pub fn attacker_profile(policy: &PolicySet, level: AttackerLevel) -> AttackerProfile {
    let granted = policy
        .permission_table
        .iter()
        .filter(|(_, prot)| match prot {
            ProtectionLevel::Normal | ProtectionLevel::Dangerous => true,
            ProtectionLevel::Signature => level == AttackerLevel::Lv2Root,
        })
        .map(|(name, _)| name.clone())
        .collect();
    AttackerProfile {
        level,
        granted_permissions: granted,
    }
}

// ---------------------------------------------------------------------------
// Entry constraints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryConstraint {
    pub component: String,
    pub accessible_by: BTreeSet<AttackerLevel>,
    /// Guard permission with its resolved protection level, when declared.
    pub required_permission: Option<(String, Option<ProtectionLevel>)>,
}

fn component_accessible(
    component: &ComponentDecl,
    policy: &PolicySet,
    profile: &AttackerProfile,
) -> bool {
    if !component.exported {
        return false;
    }
    match &component.permission {
        None => true,
        Some(perm) => match policy.permission_table.get(perm) {
            // Unknown guard: conservative for exploitability, flagged by the
            // caller for review.
            None => false,
            Some(_) => profile.granted_permissions.contains(perm),
        },
    }
}

/// Per-component accessibility for every attacker profile. Components whose
/// guard permission is absent from the merged table are treated as
/// inaccessible and reported.
pub fn entry_constraints(
    bundle: &AppBundle,
    policy: &PolicySet,
) -> (Vec<EntryConstraint>, Vec<Diagnostic>) {
    let mut out = Vec::new();
    let mut diags = Vec::new();
    let profiles: Vec<AttackerProfile> = AttackerLevel::ALL
        .iter()
        .map(|l| attacker_profile(policy, *l))
        .collect();
    for c in &bundle.manifest.components {
        let mut accessible_by = BTreeSet::new();
        for p in &profiles {
            if component_accessible(c, policy, p) {
                accessible_by.insert(p.level);
            }
        }
        let required_permission = c.permission.as_ref().map(|perm| {
            let resolved = policy.permission_table.get(perm).copied();
            if resolved.is_none() && c.exported {
                diags.push(
                    Diagnostic::warning(
                        "unknown-guard-permission",
                        format!(
                            "component `{}` is guarded by `{perm}` which is not in the merged \
                             permission table; treating as inaccessible",
                            c.name
                        ),
                    )
                    .at(c.name.clone()),
                );
            }
            (perm.clone(), resolved)
        });
        out.push(EntryConstraint {
            component: c.name.clone(),
            accessible_by,
            required_permission,
        });
    }
    (out, diags)
}

/// (component, entry function) pairs invocable by the given attacker level.
pub fn accessible_entries(
    bundle: &AppBundle,
    policy: &PolicySet,
    level: AttackerLevel,
) -> Vec<(String, String)> {
    let (constraints, _) = entry_constraints(bundle, policy);
    let mut out = Vec::new();
    for ec in constraints {
        if !ec.accessible_by.contains(&level) {
            continue;
        }
        if let Some(c) = bundle.manifest.component(&ec.component) {
            for f in &c.entry_functions {
                out.push((c.name.clone(), f.clone()));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// File constraints
// ---------------------------------------------------------------------------

/// Whose filesystem access is being queried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessQuery<'a> {
    Subject(&'a str),
    Profile(AttackerLevel),
}

fn rule_applies(policy: &PolicySet, class: &SubjectClass, query: AccessQuery<'_>) -> bool {
    match (class, query) {
        (SubjectClass::Subject(id), AccessQuery::Subject(q)) => id == q,
        (SubjectClass::Subject(_), AccessQuery::Profile(_)) => false,
        (SubjectClass::Level(n), AccessQuery::Subject(q)) => policy
            .subjects
            .get(q)
            .map(|s| s.level >= *n)
            .unwrap_or(false),
        (SubjectClass::Level(n), AccessQuery::Profile(level)) => level.rank() >= *n,
    }
}

/// Access bits held by the query at an exact path: the union over all
/// applicable rules whose prefix covers the path.
pub fn access_at(policy: &PolicySet, query: AccessQuery<'_>, path: &str) -> Access {
    let mut acc = Access {
        read: false,
        write: false,
    };
    for rule in &policy.allow_rules {
        if rule_applies(policy, &rule.subject_class, query)
            && is_path_under(path, &rule.path_prefix)
        {
            acc = acc.union(rule.access);
        }
    }
    acc
}

/// The set of (path prefix, access) pairs accessible to a subject or
/// profile. Overlapping rules combine with longest-prefix semantics: a
/// deeper prefix carries the union of its own bits and every ancestor's.
pub fn accessible_set(policy: &PolicySet, query: AccessQuery<'_>) -> BTreeMap<String, Access> {
    let mut raw: BTreeMap<String, Access> = BTreeMap::new();
    for rule in &policy.allow_rules {
        if rule_applies(policy, &rule.subject_class, query) {
            raw.entry(rule.path_prefix.clone())
                .and_modify(|a| *a = a.union(rule.access))
                .or_insert(rule.access);
        }
    }
    // Propagate ancestor bits onto descendants.
    let prefixes: Vec<String> = raw.keys().cloned().collect();
    let mut out = raw.clone();
    for p in &prefixes {
        for q in &prefixes {
            if p != q && is_path_under(p, q) {
                let anc = raw[q];
                out.entry(p.clone()).and_modify(|a| *a = a.union(anc));
            }
        }
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("unknown victim subject `{0}`")]
    UnknownSubject(String),
}

/// Policy-derived sets for one (victim, attacker) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileConstraint {
    pub victim: String,
    pub attacker: AttackerLevel,
    /// Victim-accessible path prefixes not covered by any attacker access.
    pub private_prefixes: BTreeSet<String>,
    /// Minimal roots of directories the attacker can write.
    pub hijackable_dirs: BTreeSet<String>,
    victim_access: BTreeMap<String, Access>,
    attacker_access: BTreeMap<String, Access>,
}

impl FileConstraint {
    /// Exact membership test: the victim can access `path` and the attacker
    /// cannot (with either access kind).
    pub fn is_private(&self, path: &str) -> bool {
        let victim_has = self
            .victim_access
            .iter()
            .any(|(p, a)| !a.is_empty() && is_path_under(path, p));
        let attacker_has = self.attacker_has_access(path);
        victim_has && !attacker_has
    }

    pub fn attacker_has_access(&self, path: &str) -> bool {
        self.attacker_access
            .iter()
            .any(|(p, a)| !a.is_empty() && is_path_under(path, p))
    }

    /// True when the attacker can write the given directory.
    pub fn is_attacker_writable(&self, dir: &str) -> bool {
        self.attacker_access
            .iter()
            .any(|(p, a)| a.write && is_path_under(dir, p))
    }

    /// True when some proper directory prefix of `path` is attacker-writable.
    pub fn has_hijackable_prefix(&self, path: &str) -> bool {
        parent_prefixes(path)
            .iter()
            .any(|d| self.is_attacker_writable(d))
    }

    /// True when `path` itself lies in or under an attacker-writable
    /// directory.
    pub fn lands_in_hijackable(&self, path: &str) -> bool {
        self.hijackable_dirs
            .iter()
            .any(|d| is_path_under(path, d))
    }
}

/// Compute the file constraints for a victim subject against an attacker
/// profile: the private-file set difference and the attacker-writable
/// directories.
pub fn file_constraints(
    policy: &PolicySet,
    victim: &str,
    attacker: AttackerLevel,
) -> Result<FileConstraint, PolicyError> {
    if !policy.subjects.contains_key(victim) {
        return Err(PolicyError::UnknownSubject(victim.to_string()));
    }
    let victim_access = accessible_set(policy, AccessQuery::Subject(victim));
    let attacker_access = accessible_set(policy, AccessQuery::Profile(attacker));

    let private_prefixes = victim_access
        .iter()
        .filter(|(_, a)| !a.is_empty())
        .map(|(p, _)| p)
        .filter(|p| {
            !attacker_access
                .iter()
                .any(|(q, a)| !a.is_empty() && is_path_under(p, q))
        })
        .cloned()
        .collect();

    let write_roots: BTreeSet<String> = attacker_access
        .iter()
        .filter(|(_, a)| a.write)
        .map(|(p, _)| p.clone())
        .collect();
    let hijackable_dirs = write_roots
        .iter()
        .filter(|p| {
            !write_roots
                .iter()
                .any(|q| q != *p && is_path_under(p, q))
        })
        .cloned()
        .collect();

    Ok(FileConstraint {
        victim: victim.to_string(),
        attacker,
        private_prefixes,
        hijackable_dirs,
        victim_access,
        attacker_access,
    })
}

// ---------------------------------------------------------------------------
// Name resolution with planted links
// ---------------------------------------------------------------------------

/// Outcome of walking a pathname through the attacker-influenced namespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    /// The filesystem resource the walk lands on.
    pub final_path: String,
    /// Pathname positions where the attacker could plant an entry: each is a
    /// child of an attacker-writable directory crossed during the walk.
    pub junctions: Vec<String>,
    /// Links actually followed, in order.
    pub followed: Vec<(String, String)>,
    /// Set when the link-follow cap was hit.
    pub loop_cut: bool,
}

const MAX_LINK_FOLLOWS: usize = 32;

/// Resolve a canonical absolute pathname element by element. Whenever the
/// directory being walked is attacker-writable, the next component is an
/// attacker-controllable junction; if a link is planted there, resolution
/// redirects to the link target and continues with the remaining components.
/// Missing files are a valid outcome (a squatting opportunity), not an error.
pub fn resolve(
    policy: &PolicySet,
    attacker: AttackerLevel,
    path: &str,
    planted_links: &BTreeMap<String, String>,
) -> Resolution {
    let mut junctions = Vec::new();
    let mut followed = Vec::new();
    let mut loop_cut = false;

    let writable = |dir: &str| access_at(policy, AccessQuery::Profile(attacker), dir).write;

    let mut components: Vec<String> = path
        .split('/')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    components.reverse(); // treat as a stack: next component on top
    let mut cur = "/".to_string();
    while let Some(seg) = components.pop() {
        let candidate = if cur == "/" {
            format!("/{seg}")
        } else {
            format!("{cur}/{seg}")
        };
        if writable(&cur) {
            junctions.push(candidate.clone());
            if let Some(target) = planted_links.get(&candidate) {
                if followed.len() >= MAX_LINK_FOLLOWS {
                    loop_cut = true;
                    break;
                }
                followed.push((candidate.clone(), target.clone()));
                // The link target replaces the walked prefix; remaining
                // components continue from there.
                let canon = crate::constraints::canonical::canonicalize(target);
                cur = "/".to_string();
                for seg in canon.path.split('/').filter(|s| !s.is_empty()).rev() {
                    components.push(seg.to_string());
                }
                continue;
            }
        }
        cur = candidate;
    }
    Resolution {
        final_path: cur,
        junctions,
        followed,
        loop_cut,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::policy::parse_policy;

    const BASE: &str = "\
perm android.permission.INTERNET level normal
perm android.permission.READ_SMS level dangerous
perm com.sec.telephony.ACCESS level signature
subject com.oneplus.wallpaper level 2
subject com.sec.telephony level 2 holds com.sec.telephony.ACCESS
allow LV1 /data/log write
allow LV1 /storage/emulated/0 readwrite
allow LV1 /data/data/com.oneplus.wallpaper/files read
allow com.oneplus.wallpaper /data/data/com.oneplus.wallpaper/shared_prefs readwrite
allow com.oneplus.wallpaper /data/data/com.oneplus.wallpaper/files readwrite
allow com.sec.telephony /data/data/com.sec.telephony readwrite
allow LV2 /data/oem/shared read
";

    fn base_policy() -> PolicySet {
        parse_policy(BASE).unwrap()
    }

    #[test]
    fn lv1_profile_excludes_signature() {
        let p = base_policy();
        let lv1 = attacker_profile(&p, AttackerLevel::Lv1);
        assert!(lv1.granted_permissions.contains("android.permission.INTERNET"));
        assert!(lv1.granted_permissions.contains("android.permission.READ_SMS"));
        assert!(!lv1.granted_permissions.contains("com.sec.telephony.ACCESS"));
        let lv2root = attacker_profile(&p, AttackerLevel::Lv2Root);
        assert!(lv2root.granted_permissions.contains("com.sec.telephony.ACCESS"));
    }

    #[test]
    fn accessible_set_unions_overlapping_rules() {
        let p = parse_policy("allow LV1 /a read\nallow LV1 /a/b write\n").unwrap();
        let set = accessible_set(&p, AccessQuery::Profile(AttackerLevel::Lv1));
        assert_eq!(set["/a"], Access::READ);
        assert_eq!(set["/a/b"], Access::READWRITE);
    }

    #[test]
    fn empty_policy_grants_nothing() {
        let p = parse_policy("").unwrap();
        assert!(accessible_set(&p, AccessQuery::Profile(AttackerLevel::Lv1)).is_empty());
    }

    #[test]
    fn lv1_write_rule_makes_dir_adversary_writable() {
        let p = base_policy();
        let fc = file_constraints(&p, "com.oneplus.wallpaper", AttackerLevel::Lv1).unwrap();
        assert!(fc.is_attacker_writable("/data/log"));
        assert!(fc.is_attacker_writable("/data/log/sub"));
        assert!(!fc.is_attacker_writable("/data"));
    }

    #[test]
    fn hijackable_dirs_are_minimal_roots() {
        let p = base_policy();
        let fc = file_constraints(&p, "com.oneplus.wallpaper", AttackerLevel::Lv1).unwrap();
        assert_eq!(
            fc.hijackable_dirs,
            BTreeSet::from(["/data/log".to_string(), "/storage/emulated/0".to_string()])
        );
    }

    #[test]
    fn wallpaper_private_set_is_shared_prefs_only() {
        let p = base_policy();
        let fc = file_constraints(&p, "com.oneplus.wallpaper", AttackerLevel::Lv1).unwrap();
        assert_eq!(
            fc.private_prefixes,
            BTreeSet::from(["/data/data/com.oneplus.wallpaper/shared_prefs".to_string()])
        );
        assert!(fc.is_private("/data/data/com.oneplus.wallpaper/shared_prefs/x.xml"));
        // The provider-served files tree is attacker-readable, hence not private.
        assert!(!fc.is_private("/data/data/com.oneplus.wallpaper/files/image/a.png"));
        // Not victim-accessible at all, hence not private either.
        assert!(!fc.is_private("/data/data/com.oneplus.wallpaper"));
    }

    #[test]
    fn self_difference_is_empty() {
        // An attacker with exactly the victim's access keeps nothing private.
        let text = "subject app level 1\nallow LV1 /data/x readwrite\n";
        let p = parse_policy(text).unwrap();
        let fc = file_constraints(&p, "app", AttackerLevel::Lv1).unwrap();
        assert!(fc.private_prefixes.is_empty());
    }

    #[test]
    fn unknown_victim_subject_is_an_error() {
        let p = base_policy();
        assert_eq!(
            file_constraints(&p, "nobody", AttackerLevel::Lv1),
            Err(PolicyError::UnknownSubject("nobody".to_string()))
        );
    }

    #[test]
    fn resolve_follows_planted_link() {
        let p = base_policy();
        let links = BTreeMap::from([(
            "/data/log/x.txt".to_string(),
            "/data/system/secret".to_string(),
        )]);
        let r = resolve(&p, AttackerLevel::Lv1, "/data/log/x.txt", &links);
        assert_eq!(r.final_path, "/data/system/secret");
        assert_eq!(r.junctions, vec!["/data/log/x.txt".to_string()]);
        assert_eq!(
            r.followed,
            vec![(
                "/data/log/x.txt".to_string(),
                "/data/system/secret".to_string()
            )]
        );
    }

    #[test]
    fn resolve_without_hijackable_prefix_is_identity() {
        let p = base_policy();
        let links = BTreeMap::new();
        let r = resolve(&p, AttackerLevel::Lv1, "/data/system/settings.db", &links);
        assert_eq!(r.final_path, "/data/system/settings.db");
        assert!(r.junctions.is_empty());
        assert!(r.followed.is_empty());
    }

    #[test]
    fn resolve_reports_luring_junction() {
        let p = base_policy();
        let links = BTreeMap::from([(
            "/storage/emulated/0/drop".to_string(),
            "/data/data/com.oneplus.gameinstaller/files/apks".to_string(),
        )]);
        let r = resolve(&p, AttackerLevel::Lv1, "/storage/emulated/0/drop", &links);
        assert_eq!(
            r.final_path,
            "/data/data/com.oneplus.gameinstaller/files/apks"
        );
        assert!(r
            .junctions
            .contains(&"/storage/emulated/0/drop".to_string()));
    }

    #[test]
    fn resolve_walks_below_writable_root() {
        // Everything under a writable root is attacker-controllable, so a
        // link planted deeper in the subtree is reachable too.
        let p = base_policy();
        let links = BTreeMap::from([(
            "/data/log/omc/cfg.dat".to_string(),
            "/data/system/secret".to_string(),
        )]);
        let r = resolve(&p, AttackerLevel::Lv1, "/data/log/omc/cfg.dat", &links);
        assert_eq!(r.final_path, "/data/system/secret");
        assert_eq!(
            r.junctions,
            vec![
                "/data/log/omc".to_string(),
                "/data/log/omc/cfg.dat".to_string()
            ]
        );
    }
}
