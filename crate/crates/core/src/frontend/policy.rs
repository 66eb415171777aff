//! Access-control policy parsing.
//!
//! The policy format carries three kinds of facts: permission declarations
//! with protection levels, subjects with privilege levels and permission
//! grants, and filesystem allow-rules keyed by subject id or privilege-level
//! pattern. A rule whose subject class is a level pattern applies to every
//! subject at that level or above; a rule naming a subject applies to exactly
//! that subject.

use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::constraints::canonical::canonicalize;
use crate::frontend::manifest::{PermissionDecl, ProtectionLevel};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SubjectClass {
    /// Level pattern `LV1`/`LV2`/`LV3`: all subjects at this rank or above.
    Level(u8),
    /// A specific subject id.
    Subject(String),
}

impl std::fmt::Display for SubjectClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SubjectClass::Level(n) => write!(f, "LV{n}"),
            SubjectClass::Subject(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Access {
    pub read: bool,
    pub write: bool,
}

impl Access {
    pub const READ: Access = Access {
        read: true,
        write: false,
    };
    pub const WRITE: Access = Access {
        read: false,
        write: true,
    };
    pub const READWRITE: Access = Access {
        read: true,
        write: true,
    };

    pub fn union(self, other: Access) -> Access {
        Access {
            read: self.read || other.read,
            write: self.write || other.write,
        }
    }

    pub fn is_empty(self) -> bool {
        !self.read && !self.write
    }
}

impl std::fmt::Display for Access {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.read, self.write) {
            (true, true) => f.write_str("readwrite"),
            (true, false) => f.write_str("read"),
            (false, true) => f.write_str("write"),
            (false, false) => f.write_str("none"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllowRule {
    pub subject_class: SubjectClass,
    pub path_prefix: String,
    pub access: Access,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subject {
    pub id: String,
    pub level: u8,
    pub holds: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicySet {
    pub permission_table: BTreeMap<String, ProtectionLevel>,
    pub subjects: BTreeMap<String, Subject>,
    pub allow_rules: Vec<AllowRule>,
}

impl PolicySet {
    pub fn subject(&self, id: &str) -> Option<&Subject> {
        self.subjects.get(id)
    }

    /// Merge permission declarations from a manifest into the global table.
    /// Protection levels may be declared in any application's manifest, so the
    /// merge is order-independent; conflicting levels for one name are an
    /// error regardless of order.
    pub fn merge_permissions(&mut self, decls: &[PermissionDecl]) -> Result<(), PolicyParseError> {
        for d in decls {
            match self.permission_table.get(&d.name) {
                Some(prev) if *prev != d.protection_level => {
                    return Err(PolicyParseError::ConflictingPermission {
                        name: d.name.clone(),
                    });
                }
                _ => {
                    self.permission_table
                        .insert(d.name.clone(), d.protection_level);
                }
            }
        }
        Ok(())
    }

    /// Permission names held by subjects but absent from the merged table.
    pub fn unresolved_holds(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for s in self.subjects.values() {
            for p in &s.holds {
                if !self.permission_table.contains_key(p) {
                    out.push((s.id.clone(), p.clone()));
                }
            }
        }
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyParseError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: u32, message: String },
    #[error("line {line}: unknown protection level `{level}`")]
    UnknownProtectionLevel { level: String, line: u32 },
    #[error("line {line}: path prefix `{path}` is not absolute")]
    NonAbsolutePath { path: String, line: u32 },
    #[error("line {line}: path prefix `{path}` is not in canonical form")]
    NonCanonicalPath { path: String, line: u32 },
    #[error("line {line}: duplicate rule for ({class}, {path}) with conflicting access")]
    ConflictingRule {
        class: String,
        path: String,
        line: u32,
    },
    #[error("line {line}: duplicate subject `{id}`")]
    DuplicateSubject { id: String, line: u32 },
    #[error("permission `{name}` declared with conflicting protection levels")]
    ConflictingPermission { name: String },
}

fn parse_subject_class(word: &str) -> SubjectClass {
    match word {
        "LV1" => SubjectClass::Level(1),
        "LV2" => SubjectClass::Level(2),
        "LV3" => SubjectClass::Level(3),
        other => SubjectClass::Subject(other.to_string()),
    }
}

/// Parse a policy document.
pub fn parse_policy(text: &str) -> Result<PolicySet, PolicyParseError> {
    let mut policy = PolicySet::default();
    let mut rule_index: BTreeMap<(String, String), (Access, u32)> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = (idx + 1) as u32;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let syntax = |message: &str| PolicyParseError::Syntax {
            line: line_no,
            message: message.to_string(),
        };
        match words[0] {
            "perm" => {
                // perm NAME level normal|dangerous|signature
                if words.len() != 4 || words[2] != "level" {
                    return Err(syntax("expected `perm NAME level <protection-level>`"));
                }
                let level = match words[3] {
                    "normal" => ProtectionLevel::Normal,
                    "dangerous" => ProtectionLevel::Dangerous,
                    "signature" => ProtectionLevel::Signature,
                    other => {
                        return Err(PolicyParseError::UnknownProtectionLevel {
                            level: other.to_string(),
                            line: line_no,
                        })
                    }
                };
                policy.merge_permissions(&[PermissionDecl {
                    name: words[1].to_string(),
                    protection_level: level,
                }])?;
            }
            "subject" => {
                // subject ID level 1|2|3 [holds P1,P2]
                if words.len() < 4 || words[2] != "level" {
                    return Err(syntax("expected `subject ID level <1|2|3> [holds P1,P2]`"));
                }
                let level: u8 = words[3]
                    .parse()
                    .ok()
                    .filter(|l| (1..=3).contains(l))
                    .ok_or_else(|| syntax("privilege level must be 1, 2 or 3"))?;
                let holds = if words.len() > 4 {
                    if words[4] != "holds" || words.len() != 6 {
                        return Err(syntax("expected `holds P1,P2` after level"));
                    }
                    words[5]
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect()
                } else {
                    BTreeSet::new()
                };
                let id = words[1].to_string();
                if policy.subjects.contains_key(&id) {
                    return Err(PolicyParseError::DuplicateSubject { id, line: line_no });
                }
                policy.subjects.insert(
                    id.clone(),
                    Subject {
                        id,
                        level,
                        holds,
                    },
                );
            }
            "allow" => {
                // allow CLASS /path/prefix read|write|readwrite
                if words.len() != 4 {
                    return Err(syntax("expected `allow CLASS /path/prefix <access>`"));
                }
                let class = parse_subject_class(words[1]);
                let path = words[2].to_string();
                if !path.starts_with('/') {
                    return Err(PolicyParseError::NonAbsolutePath {
                        path,
                        line: line_no,
                    });
                }
                let canon = canonicalize(&path);
                if canon.path != path {
                    return Err(PolicyParseError::NonCanonicalPath {
                        path,
                        line: line_no,
                    });
                }
                let access = match words[3] {
                    "read" => Access::READ,
                    "write" => Access::WRITE,
                    "readwrite" => Access::READWRITE,
                    _ => return Err(syntax("access must be read, write or readwrite")),
                };
                let key = (class.to_string(), path.clone());
                if let Some((prev, _)) = rule_index.get(&key) {
                    if *prev != access {
                        return Err(PolicyParseError::ConflictingRule {
                            class: key.0,
                            path: key.1,
                            line: line_no,
                        });
                    }
                    continue; // identical duplicate: merged
                }
                rule_index.insert(key, (access, line_no));
                policy.allow_rules.push(AllowRule {
                    subject_class: class,
                    path_prefix: path,
                    access,
                });
            }
            other => {
                return Err(syntax(&format!("unknown directive `{other}`")));
            }
        }
    }
    Ok(policy)
}

/// Print a policy in canonical layout; `parse_policy(print_policy(p))` is
/// structurally equal to `p` for policies produced by `parse_policy`.
pub fn print_policy(policy: &PolicySet) -> String {
    let mut out = String::new();
    for (name, level) in &policy.permission_table {
        out.push_str(&format!("perm {name} level {level}\n"));
    }
    for s in policy.subjects.values() {
        if s.holds.is_empty() {
            out.push_str(&format!("subject {} level {}\n", s.id, s.level));
        } else {
            let holds: Vec<&str> = s.holds.iter().map(String::as_str).collect();
            out.push_str(&format!(
                "subject {} level {} holds {}\n",
                s.id,
                s.level,
                holds.join(",")
            ));
        }
    }
    for r in &policy.allow_rules {
        out.push_str(&format!(
            "allow {} {} {}\n",
            r.subject_class, r.path_prefix, r.access
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lv1_write_rule_parses() {
        let p = parse_policy("allow LV1 /data/log write\n").unwrap();
        assert_eq!(p.allow_rules.len(), 1);
        assert_eq!(p.allow_rules[0].subject_class, SubjectClass::Level(1));
        assert_eq!(p.allow_rules[0].access, Access::WRITE);
    }

    #[test]
    fn empty_policy_has_no_rules() {
        let p = parse_policy("# nothing\n").unwrap();
        assert!(p.allow_rules.is_empty());
        assert!(p.subjects.is_empty());
    }

    #[test]
    fn two_subjects_can_hold_same_signature_perm() {
        let text = "perm x.SIG level signature\n\
                    subject a level 2 holds x.SIG\n\
                    subject b level 2 holds x.SIG\n";
        let p = parse_policy(text).unwrap();
        assert!(p.subjects["a"].holds.contains("x.SIG"));
        assert!(p.subjects["b"].holds.contains("x.SIG"));
        assert!(p.unresolved_holds().is_empty());
    }

    #[test]
    fn relative_prefix_rejected() {
        assert!(matches!(
            parse_policy("allow LV1 data/log write\n"),
            Err(PolicyParseError::NonAbsolutePath { .. })
        ));
    }

    #[test]
    fn unknown_protection_level_rejected() {
        assert!(matches!(
            parse_policy("perm p level secret\n"),
            Err(PolicyParseError::UnknownProtectionLevel { .. })
        ));
    }

    #[test]
    fn conflicting_duplicate_rule_rejected() {
        let text = "allow LV1 /data/log write\nallow LV1 /data/log read\n";
        assert!(matches!(
            parse_policy(text),
            Err(PolicyParseError::ConflictingRule { .. })
        ));
    }

    #[test]
    fn identical_duplicate_rule_merges() {
        let text = "allow LV1 /data/log write\nallow LV1 /data/log write\n";
        let p = parse_policy(text).unwrap();
        assert_eq!(p.allow_rules.len(), 1);
    }

    #[test]
    fn merge_is_order_independent() {
        use crate::frontend::manifest::PermissionDecl;
        let a = PermissionDecl {
            name: "p.a".into(),
            protection_level: ProtectionLevel::Normal,
        };
        let b = PermissionDecl {
            name: "p.b".into(),
            protection_level: ProtectionLevel::Signature,
        };
        let mut p1 = PolicySet::default();
        p1.merge_permissions(&[a.clone()]).unwrap();
        p1.merge_permissions(&[b.clone()]).unwrap();
        let mut p2 = PolicySet::default();
        p2.merge_permissions(&[b]).unwrap();
        p2.merge_permissions(&[a]).unwrap();
        assert_eq!(p1.permission_table, p2.permission_table);
    }

    #[test]
    fn roundtrip() {
        let text = "perm x.SIG level signature\n\
                    subject app level 2 holds x.SIG\n\
                    allow LV1 /data/log write\n\
                    allow app /data/data/app readwrite\n";
        let p = parse_policy(text).unwrap();
        assert_eq!(parse_policy(&print_policy(&p)).unwrap(), p);
    }
}
