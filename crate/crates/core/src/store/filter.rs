use serde::{Deserialize, Serialize};

use crate::model::{MetaRecord, SubDomain};

/// A glob over strings where `*` matches any run of characters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pattern(pub String);

impl Pattern {
    pub fn new(p: impl Into<String>) -> Self {
        Pattern(p.into())
    }

    pub fn matches(&self, s: &str) -> bool {
        glob(self.0.as_bytes(), s.as_bytes())
    }
}

fn glob(p: &[u8], s: &[u8]) -> bool {
    let (mut pi, mut si) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while si < s.len() {
        if pi < p.len() && p[pi] == b'*' {
            star = Some((pi, si));
            pi += 1;
        } else if pi < p.len() && p[pi] == s[si] {
            pi += 1;
            si += 1;
        } else if let Some((sp, ss)) = star {
            pi = sp + 1;
            si = ss + 1;
            star = Some((sp, ss + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == b'*')
}

/// Conjunction of optional conditions on a record's envelope. An empty
/// filter matches everything.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_domain: Option<SubDomain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_ref: Option<Pattern>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<Pattern>,
}

impl ScanFilter {
    pub fn all() -> Self {
        ScanFilter::default()
    }

    pub fn sub_domain(sd: SubDomain) -> Self {
        ScanFilter {
            sub_domain: Some(sd),
            ..Default::default()
        }
    }

    pub fn schema(pattern: &str) -> Self {
        ScanFilter {
            schema_ref: Some(Pattern::new(pattern)),
            ..Default::default()
        }
    }

    pub fn matches(&self, r: &MetaRecord) -> bool {
        self.sub_domain.is_none_or(|sd| r.sub_domain() == sd)
            && self
                .schema_ref
                .as_ref()
                .is_none_or(|p| r.schema_ref().is_some_and(|s| p.matches(s)))
            && self
                .provider
                .as_ref()
                .is_none_or(|p| p.matches(&r.source().provider))
    }
}
