//! Privacy-footprint graphs: a bipartite first-party / third-party-entity
//! graph built from crawl runs, with third parties grouped by the
//! registrable domain of their authoritative DNS server (ADNS) or, for
//! CDN/hosting-located parties, their own domain (root).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::CrawlRun;
use crate::psl::SuffixRules;

/// Offline entity knowledge: ADNS mappings plus the set of domains known to
/// sit on hosting services or CDNs.
#[derive(Debug, Clone, Default)]
pub struct EntityMap {
    /// registrable domain -> registrable domain of its authoritative DNS.
    pub adns: BTreeMap<String, String>,
    pub cdn_domains: BTreeSet<String>,
}

impl EntityMap {
    /// Load the two-column `domain,adns_domain` CSV. A header row and `#`
    /// comment lines are skipped.
    pub fn load_adns_csv(path: &Path) -> Result<BTreeMap<String, String>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == "domain,adns_domain" {
                continue;
            }
            let (domain, adns) = line.split_once(',').ok_or_else(|| {
                Error::config(path, format!("line {}: expected domain,adns_domain", idx + 1))
            })?;
            map.insert(domain.trim().to_lowercase(), adns.trim().to_lowercase());
        }
        Ok(map)
    }

    /// Load the one-column CDN/hosting domain list.
    pub fn load_cdn_csv(path: &Path) -> Result<BTreeSet<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#') && *l != "domain")
            .map(str::to_lowercase)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupingMethod {
    Adns,
    Root,
}

impl GroupingMethod {
    pub fn name(self) -> &'static str {
        match self {
            GroupingMethod::Adns => "adns",
            GroupingMethod::Root => "root",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adns" => Ok(GroupingMethod::Adns),
            "root" => Ok(GroupingMethod::Root),
            other => Err(Error::invalid(format!("unknown grouping method {other:?}"))),
        }
    }
}

/// Entity a third-party domain is grouped under, and whether the ADNS map
/// had no entry so the domain itself was used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityResolution {
    pub entity: String,
    pub used_fallback: bool,
}

/// ADNS: the mapped DNS domain, falling back to the domain itself. Root: the
/// domain itself when it is CDN/hosting-located, otherwise the ADNS result.
pub fn third_party_entity(
    domain: &str,
    map: &EntityMap,
    method: GroupingMethod,
) -> EntityResolution {
    if method == GroupingMethod::Root && map.cdn_domains.contains(domain) {
        return EntityResolution {
            entity: domain.to_string(),
            used_fallback: false,
        };
    }
    match map.adns.get(domain) {
        Some(adns) => EntityResolution {
            entity: adns.clone(),
            used_fallback: false,
        },
        None => EntityResolution {
            entity: domain.to_string(),
            used_fallback: true,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FootprintGraph {
    pub method: GroupingMethod,
    pub first_parties: BTreeSet<String>,
    pub third_parties: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
    /// Third-party resolutions that fell back to the domain itself, and the
    /// total number of resolutions, for the coverage report.
    pub fallback_resolutions: u64,
    pub total_resolutions: u64,
}

impl FootprintGraph {
    pub fn fallback_rate(&self) -> f64 {
        if self.total_resolutions == 0 {
            0.0
        } else {
            self.fallback_resolutions as f64 / self.total_resolutions as f64
        }
    }
}

/// Union the first-party/third-party interactions of all runs into one
/// deduplicated bipartite graph. All runs must share a configuration.
/// Edges whose grouped entity collides with the site's own domain are
/// dropped (no self-edges).
pub fn build_footprint(
    runs: &[CrawlRun],
    rules: &SuffixRules,
    map: &EntityMap,
    method: GroupingMethod,
) -> Result<FootprintGraph> {
    let configs: BTreeSet<&str> = runs.iter().map(|r| r.config_id.as_str()).collect();
    if configs.len() > 1 {
        return Err(Error::invalid(format!(
            "footprint expects runs from one configuration, got {configs:?}"
        )));
    }
    let mut graph = FootprintGraph {
        method,
        first_parties: BTreeSet::new(),
        third_parties: BTreeSet::new(),
        edges: BTreeSet::new(),
        fallback_resolutions: 0,
        total_resolutions: 0,
    };
    for run in runs {
        for visit in &run.visits {
            let site_entity = rules.entity(&visit.site_host);
            graph.first_parties.insert(site_entity.clone());
            for req in &visit.requests {
                if !rules.classify_party(&req.host, &visit.site_host).is_third() {
                    continue;
                }
                let domain = rules.entity(&req.host);
                let resolved = third_party_entity(&domain, map, method);
                graph.total_resolutions += 1;
                if resolved.used_fallback {
                    graph.fallback_resolutions += 1;
                }
                if resolved.entity == site_entity {
                    continue;
                }
                graph.third_parties.insert(resolved.entity.clone());
                graph.edges.insert((site_entity.clone(), resolved.entity));
            }
        }
    }
    Ok(graph)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootprintMetrics {
    /// Third-party entities with at least one edge.
    pub n_third_parties: u64,
    /// Mean third-party degree over all first parties (including isolated
    /// first-party nodes).
    pub mean_tp_per_fp: f64,
    /// First parties touched by the 10 highest-degree third parties (ties
    /// broken by entity identifier; all of them when fewer than 10 exist).
    pub top10_fp_coverage: u64,
}

pub fn footprint_metrics(graph: &FootprintGraph) -> FootprintMetrics {
    if graph.first_parties.is_empty() {
        return FootprintMetrics {
            n_third_parties: 0,
            mean_tp_per_fp: 0.0,
            top10_fp_coverage: 0,
        };
    }
    let mut tp_neighbors: BTreeMap<&String, BTreeSet<&String>> = BTreeMap::new();
    for (fp, tp) in &graph.edges {
        tp_neighbors.entry(tp).or_default().insert(fp);
    }
    let n_third_parties = tp_neighbors.len() as u64;
    let mean_tp_per_fp = graph.edges.len() as f64 / graph.first_parties.len() as f64;

    let mut by_degree: Vec<(&String, &BTreeSet<&String>)> = tp_neighbors.iter().map(|(k, v)| (*k, v)).collect();
    by_degree.sort_by(|(ea, na), (eb, nb)| nb.len().cmp(&na.len()).then_with(|| ea.cmp(eb)));
    let mut covered: BTreeSet<&String> = BTreeSet::new();
    for (_, neighbors) in by_degree.iter().take(10) {
        covered.extend(neighbors.iter());
    }
    FootprintMetrics {
        n_third_parties,
        mean_tp_per_fp,
        top10_fp_coverage: covered.len() as u64,
    }
}

/// Emit the deduplicated edge list as CSV.
pub fn write_edge_csv(graph: &FootprintGraph, path: &Path, comment: Option<&str>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let emit = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        if let Some(comment) = comment {
            for line in comment.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        writeln!(out, "first_party,third_party_entity")?;
        for (fp, tp) in &graph.edges {
            writeln!(out, "{fp},{tp}")?;
        }
        out.flush()
    };
    emit(&mut out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HtmlSummary, RequestRecord, ResourceClass, SiteVisit};

    fn rules() -> SuffixRules {
        SuffixRules::parse("com\nnet\norg").unwrap()
    }

    fn req(host: &str) -> RequestRecord {
        RequestRecord {
            url: format!("https://{host}/r"),
            host: host.to_string(),
            bytes: 1,
            resource_class: ResourceClass::Script,
            sets_cookie: false,
            reads_cookie: false,
        }
    }

    fn visit(site_host: &str, requests: Vec<RequestRecord>) -> SiteVisit {
        SiteVisit {
            site: format!("https://{site_host}/"),
            site_host: site_host.to_string(),
            requests,
            html: HtmlSummary::default(),
        }
    }

    #[test]
    fn entity_adns_lookup() {
        let mut map = EntityMap::default();
        map.adns.insert("tracker.net".into(), "dnsco.com".into());
        let r = third_party_entity("tracker.net", &map, GroupingMethod::Adns);
        assert_eq!(r.entity, "dnsco.com");
        assert!(!r.used_fallback);
    }

    #[test]
    fn entity_root_keeps_cdn_domain() {
        let mut map = EntityMap::default();
        map.adns.insert("cdnhost.com".into(), "dnsco.com".into());
        map.cdn_domains.insert("cdnhost.com".into());
        let root = third_party_entity("cdnhost.com", &map, GroupingMethod::Root);
        assert_eq!(root.entity, "cdnhost.com");
        let adns = third_party_entity("cdnhost.com", &map, GroupingMethod::Adns);
        assert_eq!(adns.entity, "dnsco.com");
    }

    #[test]
    fn entity_missing_mapping_falls_back() {
        let map = EntityMap::default();
        let r = third_party_entity("tracker.net", &map, GroupingMethod::Adns);
        assert_eq!(r.entity, "tracker.net");
        assert!(r.used_fallback);
    }

    #[test]
    fn two_sites_one_tracker() {
        let mut run = CrawlRun::new("bare", 0);
        run.visits.push(visit("a.com", vec![req("px.tracker.net")]));
        run.visits.push(visit("b.com", vec![req("cdn.tracker.net")]));
        let g = build_footprint(&[run], &rules(), &EntityMap::default(), GroupingMethod::Adns)
            .unwrap();
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.third_parties.len(), 1);
        let m = footprint_metrics(&g);
        assert_eq!(m.n_third_parties, 1);
        assert_eq!(m.mean_tp_per_fp, 1.0);
        assert_eq!(m.top10_fp_coverage, 2);
    }

    #[test]
    fn site_without_third_parties_is_isolated_node() {
        let mut run = CrawlRun::new("bare", 0);
        run.visits.push(visit("a.com", vec![req("a.com")]));
        let g = build_footprint(&[run], &rules(), &EntityMap::default(), GroupingMethod::Adns)
            .unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.first_parties.len(), 1);
        let m = footprint_metrics(&g);
        assert_eq!(m.n_third_parties, 0);
        assert_eq!(m.mean_tp_per_fp, 0.0);
        assert_eq!(m.top10_fp_coverage, 0);
    }

    #[test]
    fn hand_built_graph_matches_adjacency() {
        // 3 sites, 4 trackers; adjacency written out by hand:
        //   a.com -> t1, t2
        //   b.com -> t1, t3
        //   c.com -> t4
        let mut run = CrawlRun::new("bare", 0);
        run.visits.push(visit("a.com", vec![req("x.t1.net"), req("y.t2.net")]));
        run.visits.push(visit("b.com", vec![req("x.t1.net"), req("z.t3.net")]));
        run.visits.push(visit("c.com", vec![req("w.t4.net")]));
        let g = build_footprint(&[run], &rules(), &EntityMap::default(), GroupingMethod::Adns)
            .unwrap();
        let expect: BTreeSet<(String, String)> = [
            ("a.com", "t1.net"),
            ("a.com", "t2.net"),
            ("b.com", "t1.net"),
            ("b.com", "t3.net"),
            ("c.com", "t4.net"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        assert_eq!(g.edges, expect);
        let m = footprint_metrics(&g);
        assert_eq!(m.n_third_parties, 4);
        assert!((m.mean_tp_per_fp - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.top10_fp_coverage, 3);
    }

    #[test]
    fn single_fp_three_trackers() {
        let mut run = CrawlRun::new("bare", 0);
        run.visits.push(visit(
            "a.com",
            vec![req("x.t1.net"), req("y.t2.net"), req("z.t3.net")],
        ));
        let g = build_footprint(&[run], &rules(), &EntityMap::default(), GroupingMethod::Adns)
            .unwrap();
        let m = footprint_metrics(&g);
        assert_eq!(m.n_third_parties, 3);
        assert_eq!(m.mean_tp_per_fp, 3.0);
        assert_eq!(m.top10_fp_coverage, 1);
    }

    #[test]
    fn grouping_coarsens_node_count() {
        let mut run = CrawlRun::new("bare", 0);
        run.visits.push(visit(
            "a.com",
            vec![req("x.t1.net"), req("y.t2.net"), req("z.t3.net")],
        ));
        let mut map = EntityMap::default();
        map.adns.insert("t1.net".into(), "shared-dns.com".into());
        map.adns.insert("t2.net".into(), "shared-dns.com".into());
        let identity = build_footprint(
            std::slice::from_ref(&run),
            &rules(),
            &EntityMap::default(),
            GroupingMethod::Adns,
        )
        .unwrap();
        let grouped =
            build_footprint(std::slice::from_ref(&run), &rules(), &map, GroupingMethod::Adns)
                .unwrap();
        assert!(grouped.third_parties.len() <= identity.third_parties.len());
        assert_eq!(grouped.third_parties.len(), 2);
    }

    #[test]
    fn fallback_rate_reported() {
        let mut run = CrawlRun::new("bare", 0);
        run.visits.push(visit("a.com", vec![req("x.t1.net"), req("y.t2.net")]));
        let mut map = EntityMap::default();
        map.adns.insert("t1.net".into(), "dns.com".into());
        let g = build_footprint(&[run], &rules(), &map, GroupingMethod::Adns).unwrap();
        assert_eq!(g.total_resolutions, 2);
        assert_eq!(g.fallback_resolutions, 1);
        assert!((g.fallback_rate() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mixed_configs_rejected() {
        let runs = vec![CrawlRun::new("a", 0), CrawlRun::new("b", 0)];
        assert!(build_footprint(&runs, &rules(), &EntityMap::default(), GroupingMethod::Adns)
            .is_err());
    }

    #[test]
    fn blocking_all_third_parties_empties_the_graph() {
        let mut run = CrawlRun::new("bare", 0);
        run.visits.push(visit("a.com", vec![req("a.com"), req("x.t1.net")]));
        run.visits.push(visit("b.com", vec![req("b.com"), req("y.t2.net")]));
        let r = rules();
        let mut blocker = crate::blocker::BlockerSpec::policy(
            "rp",
            crate::blocker::PolicyBlocker::BlockAllThirdParty,
        );
        let protected = crate::blocker::apply_blocker(&mut blocker, &run, &r);
        let g = build_footprint(&[protected], &r, &EntityMap::default(), GroupingMethod::Adns)
            .unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.first_parties.len(), 2);
    }

    #[test]
    fn self_edges_dropped() {
        // Third-party domain whose ADNS maps onto the site's own entity.
        let mut run = CrawlRun::new("bare", 0);
        run.visits.push(visit("a.com", vec![req("x.t1.net")]));
        let mut map = EntityMap::default();
        map.adns.insert("t1.net".into(), "a.com".into());
        let g = build_footprint(&[run], &rules(), &map, GroupingMethod::Adns).unwrap();
        assert!(g.edges.is_empty());
    }
}
