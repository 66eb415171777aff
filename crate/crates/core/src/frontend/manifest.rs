//! Manifest parsing and validation.
//!
//! The manifest is JSON whose field names mirror the platform manifest
//! attributes one-to-one, so fixtures stay readable. Permission names used as
//! component guards are retained unresolved here; protection levels may be
//! declared in a different app's manifest and are resolved after the global
//! permission-table merge.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PrivilegeLevel {
    #[serde(rename = "LV1")]
    Lv1,
    #[serde(rename = "LV2")]
    Lv2,
    #[serde(rename = "LV3")]
    Lv3,
}

impl PrivilegeLevel {
    pub fn rank(self) -> u8 {
        match self {
            PrivilegeLevel::Lv1 => 1,
            PrivilegeLevel::Lv2 => 2,
            PrivilegeLevel::Lv3 => 3,
        }
    }

    pub fn from_rank(rank: u8) -> Option<Self> {
        match rank {
            1 => Some(PrivilegeLevel::Lv1),
            2 => Some(PrivilegeLevel::Lv2),
            3 => Some(PrivilegeLevel::Lv3),
            _ => None,
        }
    }
}

impl std::fmt::Display for PrivilegeLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LV{}", self.rank())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtectionLevel {
    Normal,
    Dangerous,
    Signature,
}

impl std::fmt::Display for ProtectionLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProtectionLevel::Normal => "normal",
            ProtectionLevel::Dangerous => "dangerous",
            ProtectionLevel::Signature => "signature",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Activity,
    Service,
    Receiver,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ComponentDecl {
    pub name: String,
    pub kind: ComponentKind,
    pub exported: bool,
    pub permission: Option<String>,
    pub entry_functions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PermissionDecl {
    pub name: String,
    pub protection_level: ProtectionLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Manifest {
    pub package: String,
    pub privilege_level: PrivilegeLevel,
    pub components: Vec<ComponentDecl>,
    #[serde(default)]
    pub declared_permissions: Vec<PermissionDecl>,
    #[serde(default)]
    pub uses_permissions: Vec<String>,
}

impl Manifest {
    pub fn component(&self, name: &str) -> Option<&ComponentDecl> {
        self.components.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("empty package name")]
    EmptyPackage,
    #[error("duplicate component name `{0}`")]
    DuplicateComponent(String),
    #[error("component `{0}` declares no entry functions")]
    NoEntryFunctions(String),
    #[error("duplicate permission declaration `{0}` with conflicting protection levels")]
    ConflictingPermission(String),
}

/// Parse and validate a manifest document.
pub fn parse_manifest(text: &str) -> Result<Manifest, ManifestError> {
    let manifest: Manifest = serde_json::from_str(text).map_err(|e| ManifestError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate(&manifest)?;
    Ok(manifest)
}

fn validate(manifest: &Manifest) -> Result<(), ManifestError> {
    if manifest.package.is_empty() {
        return Err(ManifestError::EmptyPackage);
    }
    let mut seen = BTreeSet::new();
    for c in &manifest.components {
        if !seen.insert(c.name.as_str()) {
            return Err(ManifestError::DuplicateComponent(c.name.clone()));
        }
        if c.entry_functions.is_empty() {
            return Err(ManifestError::NoEntryFunctions(c.name.clone()));
        }
    }
    let mut perms: std::collections::BTreeMap<&str, ProtectionLevel> = Default::default();
    for p in &manifest.declared_permissions {
        if let Some(prev) = perms.insert(p.name.as_str(), p.protection_level) {
            if prev != p.protection_level {
                return Err(ManifestError::ConflictingPermission(p.name.clone()));
            }
        }
    }
    Ok(())
}

/// Serialize a manifest back to its JSON wire form.
pub fn print_manifest(manifest: &Manifest) -> String {
    serde_json::to_string_pretty(manifest).expect("manifest serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(components: &str) -> String {
        format!(
            r#"{{"package": "com.example.app", "privilegeLevel": "LV2",
                "components": {components},
                "declaredPermissions": [], "usesPermissions": []}}"#
        )
    }

    #[test]
    fn exported_provider_without_permission() {
        let text = minimal(
            r#"[{"name": "P", "kind": "provider", "exported": true,
                 "permission": null, "entryFunctions": ["openFile"]}]"#,
        );
        let m = parse_manifest(&text).unwrap();
        assert!(m.components[0].exported);
        assert_eq!(m.components[0].permission, None);
    }

    #[test]
    fn empty_components_is_valid() {
        let m = parse_manifest(&minimal("[]")).unwrap();
        assert!(m.components.is_empty());
    }

    #[test]
    fn normal_level_guard_is_recorded() {
        let text = r#"{"package": "com.oneplus.gameinstaller", "privilegeLevel": "LV2",
            "components": [{"name": "InstallProvider", "kind": "provider", "exported": true,
                            "permission": "oneplus.permission.SILENT_INSTALL",
                            "entryFunctions": ["silentInstall"]}],
            "declaredPermissions": [{"name": "oneplus.permission.SILENT_INSTALL",
                                     "protectionLevel": "normal"}],
            "usesPermissions": []}"#;
        let m = parse_manifest(text).unwrap();
        assert_eq!(
            m.components[0].permission.as_deref(),
            Some("oneplus.permission.SILENT_INSTALL")
        );
        assert_eq!(
            m.declared_permissions[0].protection_level,
            ProtectionLevel::Normal
        );
    }

    #[test]
    fn duplicate_component_rejected() {
        let text = minimal(
            r#"[{"name": "A", "kind": "service", "exported": false, "permission": null,
                 "entryFunctions": ["onStart"]},
                {"name": "A", "kind": "service", "exported": false, "permission": null,
                 "entryFunctions": ["onStart"]}]"#,
        );
        assert!(matches!(
            parse_manifest(&text),
            Err(ManifestError::DuplicateComponent(_))
        ));
    }

    #[test]
    fn unknown_kind_reports_position() {
        let text = minimal(
            r#"[{"name": "A", "kind": "widget", "exported": false, "permission": null,
                 "entryFunctions": ["onStart"]}]"#,
        );
        match parse_manifest(&text) {
            Err(ManifestError::Syntax { line, .. }) => assert!(line >= 1),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn roundtrip() {
        let text = minimal(
            r#"[{"name": "P", "kind": "provider", "exported": true,
                 "permission": "x.P", "entryFunctions": ["openFile", "query"]}]"#,
        );
        let m = parse_manifest(&text).unwrap();
        let printed = print_manifest(&m);
        assert_eq!(parse_manifest(&printed).unwrap(), m);
    }
}
