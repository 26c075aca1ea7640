//! Public Suffix List parsing, registrable-domain (eTLD+1) extraction and
//! first/third-party classification.
//!
//! Implements the standard PSL lookup algorithm: longest matching rule wins,
//! exception rules shadow wildcards, and the default `*` rule applies to
//! unlisted TLDs. Hosts that are themselves a public suffix, and IP literals,
//! have no registrable domain; callers treat those as their own entity.

use std::collections::HashSet;
use std::fmt;
use std::net::IpAddr;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Normalized suffix rule set parsed from a PSL snapshot.
#[derive(Debug, Clone)]
pub struct SuffixRules {
    /// Plain rules, e.g. `com`, `co.uk`.
    exact: HashSet<String>,
    /// Wildcard rules stored as the part after `*.`, e.g. `ck` for `*.ck`.
    wildcard: HashSet<String>,
    /// Exception rules stored without the leading `!`, e.g. `www.ck`.
    exception: HashSet<String>,
    source_version: String,
}

/// A registrable domain: one label plus the matched public suffix (eTLD+1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegistrableDomain(String);

impl RegistrableDomain {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for RegistrableDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Whether a request targets the visited site's domain or somebody else's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartyClass {
    FirstParty,
    ThirdParty,
}

impl PartyClass {
    pub fn is_third(self) -> bool {
        matches!(self, PartyClass::ThirdParty)
    }
}

/// Bundled PSL snapshot shipped with the toolkit. `--psl <path>` overrides it.
pub const BUNDLED_PSL: &str = include_str!("../data/public_suffix_list.dat");

impl SuffixRules {
    /// Parse the standard `public_suffix_list.dat` text format.
    ///
    /// Comment lines (`//`), blank lines and the ICANN/private section markers
    /// are ignored; all rules are loaded regardless of section. Rules are
    /// normalized to lowercase with no leading dot.
    pub fn parse(text: &str) -> Result<SuffixRules> {
        let mut rules = SuffixRules {
            exact: HashSet::new(),
            wildcard: HashSet::new(),
            exception: HashSet::new(),
            source_version: content_version(text),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with("//") {
                continue;
            }
            if line.contains(char::is_whitespace) {
                return Err(Error::PslParse {
                    line: line_no,
                    message: format!("embedded whitespace in rule {line:?}"),
                });
            }
            let mut rule = line.to_lowercase();
            let is_exception = if let Some(rest) = rule.strip_prefix('!') {
                rule = rest.to_string();
                true
            } else {
                false
            };
            let rule = rule.strip_prefix('.').unwrap_or(&rule).to_string();
            if rule.is_empty() {
                return Err(Error::PslParse {
                    line: line_no,
                    message: "empty rule".to_string(),
                });
            }
            if is_exception {
                check_labels(&rule, line_no)?;
                rules.exception.insert(rule);
            } else if let Some(parent) = rule.strip_prefix("*.") {
                check_labels(parent, line_no)?;
                rules.wildcard.insert(parent.to_string());
            } else if rule == "*" {
                // Explicit default rule: one-label wildcard.
                rules.wildcard.insert(String::new());
            } else {
                check_labels(&rule, line_no)?;
                rules.exact.insert(rule);
            }
        }
        Ok(rules)
    }

    pub fn load(path: &Path) -> Result<SuffixRules> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SuffixRules::parse(&text)
    }

    /// The PSL snapshot shipped in the binary.
    pub fn bundled() -> SuffixRules {
        SuffixRules::parse(BUNDLED_PSL).expect("bundled suffix list is valid")
    }

    /// Opaque identifier of the snapshot this rule set was parsed from.
    pub fn source_version(&self) -> &str {
        &self.source_version
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.wildcard.len() + self.exception.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registrable domain (eTLD+1) of `host`, or `None` when the host is
    /// itself a public suffix, an IP literal, or not a valid hostname.
    pub fn registrable_domain(&self, host: &str) -> Option<RegistrableDomain> {
        let host = host.strip_suffix('.').unwrap_or(host).to_lowercase();
        if !valid_hostname(&host) || is_ip_literal(&host) {
            return None;
        }
        let labels: Vec<&str> = host.split('.').collect();
        let n = labels.len();
        let suffix_len = self.matched_suffix_len(&labels);
        if suffix_len >= n {
            return None;
        }
        let registrable = labels[n - suffix_len - 1..].join(".");
        Some(RegistrableDomain(registrable))
    }

    /// Entity identifier for a host: its registrable domain when one exists,
    /// otherwise the host itself (IP literals and bare public suffixes act as
    /// their own entity).
    pub fn entity(&self, host: &str) -> String {
        match self.registrable_domain(host) {
            Some(rd) => rd.into_string(),
            None => host.strip_suffix('.').unwrap_or(host).to_lowercase(),
        }
    }

    /// FirstParty iff both hosts share a registrable domain (or, lacking one,
    /// are the same self-entity).
    pub fn classify_party(&self, request_host: &str, site_host: &str) -> PartyClass {
        if self.entity(request_host) == self.entity(site_host) {
            PartyClass::FirstParty
        } else {
            PartyClass::ThirdParty
        }
    }

    /// Number of host labels covered by the prevailing rule.
    fn matched_suffix_len(&self, labels: &[&str]) -> usize {
        let n = labels.len();
        // Exception rules prevail over everything else; the public suffix is
        // the exception with its leftmost label removed.
        for start in 0..n {
            if self.exception.contains(&labels[start..].join(".")) {
                return n - start - 1;
            }
        }
        let mut best = 0usize;
        for start in 0..n {
            let len = n - start;
            if len <= best {
                break;
            }
            if self.exact.contains(&labels[start..].join(".")) {
                best = len;
                continue;
            }
            // `*.X`: the wildcard consumes labels[start], X the rest.
            if self.wildcard.contains(&labels[start + 1..].join(".")) {
                best = len;
            }
        }
        if best == 0 {
            // Default rule `*`: the last label is the public suffix.
            best = 1;
        }
        best
    }
}

fn check_labels(rule: &str, line_no: usize) -> Result<()> {
    if rule.split('.').any(|label| label.is_empty()) {
        return Err(Error::PslParse {
            line: line_no,
            message: format!("empty label in rule {rule:?}"),
        });
    }
    Ok(())
}

fn content_version(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    format!("sha256:{hex}")
}

fn valid_hostname(host: &str) -> bool {
    !host.is_empty()
        && !host.contains(char::is_whitespace)
        && host.split('.').all(|label| !label.is_empty())
}

/// IPv4/IPv6 literals have no registrable domain.
pub fn is_ip_literal(host: &str) -> bool {
    let trimmed = host
        .strip_prefix('[')
        .and_then(|h| h.strip_suffix(']'))
        .unwrap_or(host);
    trimmed.parse::<IpAddr>().is_ok()
}
