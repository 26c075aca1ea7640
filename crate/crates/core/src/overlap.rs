//! Blocked-resource sets per technique and their pairwise/unique overlap
//! structure.
//!
//! A technique's blocked set is the presence difference between the union of
//! bare runs and the union of its protected runs; the run-union keeps ad
//! churn from contaminating single-run differences.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::CrawlRun;
use crate::psl::SuffixRules;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResourceKind {
    /// Normalized request URLs (scheme and query stripped, host lowercased).
    Requests,
    /// Third-party registrable domains.
    Domains,
}

impl ResourceKind {
    pub fn name(self) -> &'static str {
        match self {
            ResourceKind::Requests => "requests",
            ResourceKind::Domains => "domains",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "requests" => Ok(ResourceKind::Requests),
            "domains" => Ok(ResourceKind::Domains),
            other => Err(Error::invalid(format!("unknown resource kind {other:?}"))),
        }
    }
}

/// Third-party resources a technique suppressed, relative to the bare runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockedSet {
    pub technique: String,
    pub kind: ResourceKind,
    pub members: BTreeSet<String>,
}

/// Strip scheme and query, lowercase the host, keep the path:
/// `https://T.net/px.gif?id=1` becomes `t.net/px.gif`. Query parameters
/// churn between reloads and would make request sets incomparable.
pub fn normalize_request_url(url: &str) -> String {
    match url::Url::parse(url) {
        Ok(parsed) => {
            let host = parsed.host_str().unwrap_or_default().to_lowercase();
            format!("{host}{}", parsed.path())
        }
        Err(_) => {
            let stripped = url.split_once("://").map_or(url, |(_, rest)| rest);
            let stripped = stripped.split_once('?').map_or(stripped, |(head, _)| head);
            stripped.to_lowercase()
        }
    }
}

fn third_party_resources(
    runs: &[CrawlRun],
    kind: ResourceKind,
    rules: &SuffixRules,
) -> BTreeSet<String> {
    let mut set = BTreeSet::new();
    for run in runs {
        for visit in &run.visits {
            for req in &visit.requests {
                if !rules.classify_party(&req.host, &visit.site_host).is_third() {
                    continue;
                }
                let member = match kind {
                    ResourceKind::Requests => normalize_request_url(&req.url),
                    ResourceKind::Domains => rules.entity(&req.host),
                };
                set.insert(member);
            }
        }
    }
    set
}

/// Third-party resources present in any bare run but in no protected run.
/// The site lists must overlap; the protected runs' config id names the
/// technique.
pub fn blocked_set(
    bare: &[CrawlRun],
    protected: &[CrawlRun],
    kind: ResourceKind,
    rules: &SuffixRules,
) -> Result<BlockedSet> {
    let technique: BTreeSet<&str> = protected.iter().map(|r| r.config_id.as_str()).collect();
    if technique.len() != 1 {
        return Err(Error::invalid(format!(
            "protected runs must share one configuration, got {technique:?}"
        )));
    }
    let bare_sites: BTreeSet<&str> = bare
        .iter()
        .flat_map(|r| r.visits.iter().map(|v| v.site.as_str()))
        .collect();
    let protected_sites: BTreeSet<&str> = protected
        .iter()
        .flat_map(|r| r.visits.iter().map(|v| v.site.as_str()))
        .collect();
    if bare_sites.intersection(&protected_sites).next().is_none() {
        return Err(Error::invalid(
            "bare and protected runs cover disjoint site lists",
        ));
    }
    let bare_resources = third_party_resources(bare, kind, rules);
    let protected_resources = third_party_resources(protected, kind, rules);
    Ok(BlockedSet {
        technique: technique.iter().next().unwrap().to_string(),
        kind,
        members: bare_resources
            .difference(&protected_resources)
            .cloned()
            .collect(),
    })
}

/// Set sizes, pairwise intersections and per-technique unique counts for a
/// family of blocked sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapMatrix {
    /// Techniques in input order; rendering preserves it.
    pub techniques: Vec<String>,
    pub sizes: BTreeMap<String, u64>,
    /// Keyed with the two technique ids in lexicographic order.
    pub pairwise: BTreeMap<(String, String), u64>,
    pub unique: BTreeMap<String, u64>,
}

impl OverlapMatrix {
    pub fn pairwise_size(&self, a: &str, b: &str) -> Option<u64> {
        let key = if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        self.pairwise.get(&key).copied()
    }
}

pub fn overlap_matrix(sets: &[BlockedSet]) -> Result<OverlapMatrix> {
    if sets.len() < 2 {
        return Err(Error::invalid(format!(
            "overlap needs at least 2 blocked sets, got {}",
            sets.len()
        )));
    }
    let kinds: BTreeSet<&str> = sets.iter().map(|s| s.kind.name()).collect();
    if kinds.len() != 1 {
        return Err(Error::invalid(format!(
            "overlap sets mix resource kinds: {kinds:?}"
        )));
    }
    let ids: BTreeSet<&str> = sets.iter().map(|s| s.technique.as_str()).collect();
    if ids.len() != sets.len() {
        return Err(Error::invalid("duplicate technique in overlap sets"));
    }

    let mut matrix = OverlapMatrix {
        techniques: sets.iter().map(|s| s.technique.clone()).collect(),
        sizes: BTreeMap::new(),
        pairwise: BTreeMap::new(),
        unique: BTreeMap::new(),
    };
    for set in sets {
        matrix
            .sizes
            .insert(set.technique.clone(), set.members.len() as u64);
    }
    for (i, a) in sets.iter().enumerate() {
        for b in sets.iter().skip(i + 1) {
            let count = a.members.intersection(&b.members).count() as u64;
            let key = if a.technique <= b.technique {
                (a.technique.clone(), b.technique.clone())
            } else {
                (b.technique.clone(), a.technique.clone())
            };
            matrix.pairwise.insert(key, count);
        }
    }
    for (i, set) in sets.iter().enumerate() {
        let mut others: BTreeSet<&String> = BTreeSet::new();
        for (j, other) in sets.iter().enumerate() {
            if i != j {
                others.extend(other.members.iter());
            }
        }
        let unique = set
            .members
            .iter()
            .filter(|m| !others.contains(m))
            .count() as u64;
        matrix.unique.insert(set.technique.clone(), unique);
    }
    Ok(matrix)
}

/// One square of the overlap figure. `side_length` is sqrt(value) divided by
/// sqrt of the largest value in the table, so surface area encodes the count.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapCell {
    pub row: String,
    pub col: String,
    pub cell_kind: &'static str,
    pub value: u64,
    pub side_length: f64,
}

/// Flatten the matrix into plot data: per (row, col) pair the row's total
/// plus the intersection; on the diagonal, the total plus the unique count.
pub fn render_overlap_data(matrix: &OverlapMatrix) -> Vec<OverlapCell> {
    let mut cells: Vec<(String, String, &'static str, u64)> = Vec::new();
    for row in &matrix.techniques {
        for col in &matrix.techniques {
            cells.push((row.clone(), col.clone(), "total", matrix.sizes[row]));
            if row == col {
                cells.push((row.clone(), col.clone(), "unique", matrix.unique[row]));
            } else {
                let inter = matrix.pairwise_size(row, col).unwrap_or(0);
                cells.push((row.clone(), col.clone(), "intersection", inter));
            }
        }
    }
    let max = cells.iter().map(|c| c.3).max().unwrap_or(0);
    cells
        .into_iter()
        .map(|(row, col, cell_kind, value)| OverlapCell {
            row,
            col,
            cell_kind,
            value,
            side_length: if max == 0 {
                0.0
            } else {
                (value as f64).sqrt() / (max as f64).sqrt()
            },
        })
        .collect()
}
