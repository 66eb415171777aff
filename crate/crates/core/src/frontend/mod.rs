//! Front end: parsers for the three input formats (manifest, ALIR, policy)
//! and bundle assembly.

pub mod alir;
pub mod bundle;
pub mod manifest;
pub mod policy;

pub use alir::{parse_alir, print_alir, AlirError, AlirProgram, SinkKind, StmtId};
pub use bundle::{load_bundle, AppBundle, BundleError};
pub use manifest::{
    parse_manifest, print_manifest, ComponentDecl, ComponentKind, Manifest, ManifestError,
    PrivilegeLevel, ProtectionLevel,
};
pub use policy::{parse_policy, print_policy, AllowRule, PolicyParseError, PolicySet, SubjectClass};
