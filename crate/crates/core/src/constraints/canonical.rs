//! Lexical pathname normalization.
//!
//! This is the victim-side sanitizer model: it collapses empty and `.`
//! segments and resolves `..` without touching the filesystem. Symlink
//! redirection is deliberately not handled here; that lives in the policy
//! module's name-resolution model, keeping sanitizer semantics and attack
//! semantics separated.

/// Result of lexical normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalPath {
    pub path: String,
    /// True when a relative path escaped above its origin (e.g. `../x`).
    /// Detectors treat this as traversal evidence; absolute paths clamp at
    /// the root instead and never escape.
    pub escaped: bool,
}

/// Normalize a pathname: split on `/`, drop empty and `.` segments, let `..`
/// pop one segment. For absolute paths, `..` at the root is dropped. For
/// relative paths, `..` past the origin is retained and flagged. Idempotent;
/// the result is absolute iff the input is.
pub fn canonicalize(input: &str) -> CanonicalPath {
    let absolute = input.starts_with('/');
    let mut stack: Vec<&str> = Vec::new();
    let mut escaped = false;
    for seg in input.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                if matches!(stack.last(), Some(&s) if s != "..") {
                    stack.pop();
                } else if absolute {
                    // "/.." stays at the root.
                } else {
                    stack.push("..");
                    escaped = true;
                }
            }
            s => stack.push(s),
        }
    }
    let body = stack.join("/");
    let path = if absolute {
        format!("/{body}")
    } else {
        body
    };
    CanonicalPath { path, escaped }
}

/// Segment-aligned prefix test over canonical absolute paths: `/a/b` is under
/// `/a` but `/ab` is not.
pub fn is_path_under(path: &str, prefix: &str) -> bool {
    if prefix == "/" {
        return path.starts_with('/');
    }
    path == prefix || path.starts_with(&format!("{prefix}/"))
}

/// Proper directory prefixes of a canonical absolute path, outermost first:
/// `/a/b/c` yields `/`, `/a`, `/a/b`.
pub fn parent_prefixes(path: &str) -> Vec<String> {
    if !path.starts_with('/') {
        return Vec::new();
    }
    let mut out = vec!["/".to_string()];
    let segs: Vec<&str> = path.split('/').filter(|s| !s.is_empty()).collect();
    let mut cur = String::new();
    for seg in segs.iter().take(segs.len().saturating_sub(1)) {
        cur.push('/');
        cur.push_str(seg);
        out.push(cur.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: an explicit stack machine over characters, written
    /// before `canonicalize` and kept separate from it. It accumulates the
    /// current segment byte by byte and applies the same normalization rules
    /// through a different code path.
    fn oracle_canonicalize(input: &str) -> (String, bool) {
        #[derive(PartialEq)]
        enum StackItem {
            Up,
            Seg(String),
        }
        let absolute = input.as_bytes().first() == Some(&b'/');
        let mut stack: Vec<StackItem> = Vec::new();
        let mut escaped = false;
        let mut cur = String::new();
        let mut push_seg = |cur: &mut String, stack: &mut Vec<StackItem>, escaped: &mut bool| {
            let seg = std::mem::take(cur);
            if seg.is_empty() || seg == "." {
                return;
            }
            if seg == ".." {
                let poppable = matches!(stack.last(), Some(StackItem::Seg(_)));
                if poppable {
                    stack.pop();
                } else if !absolute {
                    stack.push(StackItem::Up);
                    *escaped = true;
                }
            } else {
                stack.push(StackItem::Seg(seg));
            }
        };
        for ch in input.chars() {
            if ch == '/' {
                push_seg(&mut cur, &mut stack, &mut escaped);
            } else {
                cur.push(ch);
            }
        }
        push_seg(&mut cur, &mut stack, &mut escaped);
        let mut body = String::new();
        for (i, item) in stack.iter().enumerate() {
            if i > 0 {
                body.push('/');
            }
            match item {
                StackItem::Up => body.push_str(".."),
                StackItem::Seg(s) => body.push_str(s),
            }
        }
        let path = if absolute { format!("/{body}") } else { body };
        (path, escaped)
    }

    #[test]
    fn traversal_example() {
        let c = canonicalize("/data/data/app/files/image/../../shared_prefs/c.xml");
        assert_eq!(c.path, "/data/data/app/shared_prefs/c.xml");
        assert!(!c.escaped);
    }

    #[test]
    fn root_is_fixed_point() {
        assert_eq!(canonicalize("/").path, "/");
    }

    #[test]
    fn dots_and_empty_segments_collapse() {
        assert_eq!(canonicalize("/a/./b//c").path, "/a/b/c");
    }

    #[test]
    fn absolute_dotdot_clamps_at_root() {
        let c = canonicalize("/../../x");
        assert_eq!(c.path, "/x");
        assert!(!c.escaped);
    }

    #[test]
    fn relative_escape_is_flagged() {
        let c = canonicalize("../x");
        assert_eq!(c.path, "../x");
        assert!(c.escaped);
    }

    #[test]
    fn relative_collapse_to_empty() {
        let c = canonicalize("a/..");
        assert_eq!(c.path, "");
        assert!(!c.escaped);
    }

    #[test]
    fn under_is_segment_aligned() {
        assert!(is_path_under("/a/b", "/a"));
        assert!(is_path_under("/a", "/a"));
        assert!(!is_path_under("/ab", "/a"));
        assert!(is_path_under("/x", "/"));
    }

    #[test]
    fn parent_prefixes_outermost_first() {
        assert_eq!(
            parent_prefixes("/data/log/x.txt"),
            vec!["/".to_string(), "/data".to_string(), "/data/log".to_string()]
        );
        assert_eq!(parent_prefixes("/x"), vec!["/".to_string()]);
    }

    fn path_strategy() -> impl Strategy<Value = String> {
        let seg = prop_oneof![
            Just("..".to_string()),
            Just(".".to_string()),
            Just("".to_string()),
            "[a-z]{1,4}",
            Just("a.b".to_string()),
        ];
        (proptest::bool::ANY, proptest::collection::vec(seg, 0..8)).prop_map(|(abs, segs)| {
            let body = segs.join("/");
            if abs {
                format!("/{body}")
            } else {
                body
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2048))]

        #[test]
        fn matches_oracle(p in path_strategy()) {
            let got = canonicalize(&p);
            let (want_path, want_escaped) = oracle_canonicalize(&p);
            prop_assert_eq!(&got.path, &want_path);
            prop_assert_eq!(got.escaped, want_escaped);
        }

        #[test]
        fn idempotent(p in path_strategy()) {
            let once = canonicalize(&p);
            let twice = canonicalize(&once.path);
            prop_assert_eq!(&once.path, &twice.path);
        }

        #[test]
        fn absolute_preserved(p in path_strategy()) {
            let c = canonicalize(&p);
            prop_assert_eq!(p.starts_with('/'), c.path.starts_with('/'));
        }
    }
}
