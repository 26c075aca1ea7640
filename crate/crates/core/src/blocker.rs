//! Simulated protection techniques: rule lists, blanket policies, cookie
//! policies and the prevalence heuristic. A blocker filters a raw ("bare")
//! crawl run into the run a protected browser would have produced.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{CookieEntry, CrawlRun, RequestRecord, ResourceClass, SiteVisit};
use crate::psl::{PartyClass, SuffixRules};

/// Domain pattern in a rule list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    /// Matches any request whose registrable domain equals the pattern.
    RegistrableDomain(String),
    /// Matches one exact hostname.
    ExactHost(String),
    /// Matches the host itself and any subdomain (`||domain^`).
    HostSuffix(String),
}

impl Pattern {
    fn matches(&self, host: &str, entity: &str) -> bool {
        match self {
            Pattern::RegistrableDomain(d) => entity == d,
            Pattern::ExactHost(h) => host == h,
            Pattern::HostSuffix(s) => {
                host == s
                    || (host.len() > s.len()
                        && host.ends_with(s)
                        && host.as_bytes()[host.len() - s.len() - 1] == b'.')
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartyScope {
    #[default]
    ThirdPartyOnly,
    All,
}

impl PartyScope {
    fn covers(self, party: PartyClass) -> bool {
        match self {
            PartyScope::All => true,
            PartyScope::ThirdPartyOnly => party.is_third(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleList {
    pub name: String,
    pub block_rules: Vec<Pattern>,
    pub exception_rules: Vec<Pattern>,
    pub party_scope: PartyScope,
}

/// Result of parsing a filter-list file: the usable rules plus how many
/// unsupported lines (cosmetic filters, option suffixes) were skipped.
#[derive(Debug, Clone)]
pub struct ParsedRuleList {
    pub list: RuleList,
    pub skipped_lines: usize,
}

/// Parse the supported AdBlock-flavored subset: `!` comments, `@@` exception
/// prefix, `||domain^` host-suffix anchors and bare registrable domains.
/// Element-hiding (`##`) and option-qualified (`$...`) lines are skipped and
/// counted, not rejected.
pub fn parse_rule_list(name: &str, text: &str) -> ParsedRuleList {
    let mut list = RuleList {
        name: name.to_string(),
        ..Default::default()
    };
    let mut skipped = 0usize;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('!') || line.starts_with('[') {
            continue;
        }
        if line.contains("##") || line.contains("#@#") || line.contains("#?#") {
            skipped += 1;
            continue;
        }
        let (body, exception) = match line.strip_prefix("@@") {
            Some(rest) => (rest, true),
            None => (line, false),
        };
        if body.contains('$') {
            skipped += 1;
            continue;
        }
        let pattern = if let Some(rest) = body.strip_prefix("||") {
            let host = rest.strip_suffix('^').unwrap_or(rest);
            match normalize_pattern_domain(host) {
                Some(d) => Pattern::HostSuffix(d),
                None => {
                    skipped += 1;
                    continue;
                }
            }
        } else {
            match normalize_pattern_domain(body) {
                Some(d) => Pattern::RegistrableDomain(d),
                None => {
                    skipped += 1;
                    continue;
                }
            }
        };
        if exception {
            list.exception_rules.push(pattern);
        } else {
            list.block_rules.push(pattern);
        }
    }
    ParsedRuleList {
        list,
        skipped_lines: skipped,
    }
}

fn normalize_pattern_domain(s: &str) -> Option<String> {
    let s = s.trim().to_lowercase();
    if s.is_empty()
        || s.contains(|c: char| c.is_whitespace() || "/^|*".contains(c))
        || s.split('.').any(|l| l.is_empty())
    {
        return None;
    }
    Some(s)
}

/// Blanket request policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolicyBlocker {
    /// Do nothing (models advisory techniques like the DNT header).
    #[default]
    NoOp,
    BlockAllThirdParty,
    BlockAllScripts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CookiePolicyKind {
    #[default]
    AllowAll,
    BlockThirdParty,
    BlockThirdPartyExceptVisited,
    OptOutCookies,
}

#[derive(Debug, Clone, Default)]
pub struct CookiePolicy {
    pub kind: CookiePolicyKind,
    /// Only meaningful for `OptOutCookies`.
    pub optout_domains: BTreeSet<String>,
}

pub const OPTOUT_COOKIE_NAME: &str = "optout";

/// Prevalence-tracking heuristic: a third-party domain is blocked once it has
/// read cookies as a third party on more than `threshold` distinct sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeuristicState {
    pub threshold: u32,
    /// Third-party domain -> distinct site domains where it read a cookie.
    pub prevalence: BTreeMap<String, BTreeSet<String>>,
    pub blocked: BTreeSet<String>,
}

impl HeuristicState {
    pub const DEFAULT_THRESHOLD: u32 = 3;

    pub fn new(threshold: u32) -> Self {
        HeuristicState {
            threshold,
            prevalence: BTreeMap::new(),
            blocked: BTreeSet::new(),
        }
    }

    fn observe(&mut self, tracker: String, site: String) {
        let sites = self.prevalence.entry(tracker.clone()).or_default();
        sites.insert(site);
        if sites.len() as u64 > self.threshold as u64 {
            self.blocked.insert(tracker);
        }
    }
}

impl Default for HeuristicState {
    fn default() -> Self {
        HeuristicState::new(Self::DEFAULT_THRESHOLD)
    }
}

/// A simulated protection technique.
#[derive(Debug, Clone, Default)]
pub struct BlockerSpec {
    pub id: String,
    pub rule_lists: Vec<RuleList>,
    pub policy: PolicyBlocker,
    pub cookie_policy: CookiePolicy,
    pub heuristic: Option<HeuristicState>,
}

impl BlockerSpec {
    pub fn noop(id: impl Into<String>) -> Self {
        BlockerSpec {
            id: id.into(),
            ..Default::default()
        }
    }

    pub fn policy(id: impl Into<String>, policy: PolicyBlocker) -> Self {
        BlockerSpec {
            id: id.into(),
            policy,
            ..Default::default()
        }
    }

    pub fn with_rule_list(id: impl Into<String>, list: RuleList) -> Self {
        BlockerSpec {
            id: id.into(),
            rule_lists: vec![list],
            ..Default::default()
        }
    }
}

/// Should this request be blocked? Consults the blanket policy, the heuristic
/// state (third-party requests only) and the rule lists; an exception rule
/// from any list overrides block rules but never the policy.
pub fn match_request(
    blocker: &BlockerSpec,
    request: &RequestRecord,
    party: PartyClass,
    rules: &SuffixRules,
) -> bool {
    match blocker.policy {
        PolicyBlocker::BlockAllThirdParty if party.is_third() => return true,
        PolicyBlocker::BlockAllScripts if request.resource_class == ResourceClass::Script => {
            return true;
        }
        _ => {}
    }
    let entity = rules.entity(&request.host);
    if let Some(h) = &blocker.heuristic {
        if party.is_third() && h.blocked.contains(&entity) {
            return true;
        }
    }
    rule_lists_block(blocker, &request.host, &entity, party)
}

fn rule_lists_block(blocker: &BlockerSpec, host: &str, entity: &str, party: PartyClass) -> bool {
    let mut hit = false;
    for list in &blocker.rule_lists {
        if !list.party_scope.covers(party) {
            continue;
        }
        if list
            .exception_rules
            .iter()
            .any(|p| p.matches(host, entity))
        {
            return false;
        }
        hit = hit || list.block_rules.iter().any(|p| p.matches(host, entity));
    }
    hit
}

/// Filter a bare run through a blocker. Blocked requests and matching HTML
/// refs are removed, the cookie jar is filtered, and `config_id` becomes the
/// blocker id. Heuristic state is consulted before each visit and updated
/// from the requests that survived it, in visit order.
pub fn apply_blocker(blocker: &mut BlockerSpec, raw: &CrawlRun, rules: &SuffixRules) -> CrawlRun {
    let mut out = CrawlRun::new(blocker.id.clone(), raw.run_index);
    for visit in &raw.visits {
        let mut kept = Vec::with_capacity(visit.requests.len());
        for req in &visit.requests {
            let party = rules.classify_party(&req.host, &visit.site_host);
            if !match_request(blocker, req, party, rules) {
                kept.push(req.clone());
            }
        }
        let html = filter_html(blocker, visit, rules);
        if let Some(h) = blocker.heuristic.as_mut() {
            let site_entity = rules.entity(&visit.site_host);
            for req in &kept {
                if req.reads_cookie {
                    let entity = rules.entity(&req.host);
                    if entity != site_entity {
                        h.observe(entity, site_entity.clone());
                    }
                }
            }
        }
        out.visits.push(SiteVisit {
            site: visit.site.clone(),
            site_host: visit.site_host.clone(),
            requests: kept,
            html,
        });
    }
    out.cookie_jar = filter_cookie_jar(blocker, raw, rules);
    out
}

fn filter_html(blocker: &BlockerSpec, visit: &SiteVisit, rules: &SuffixRules) -> crate::model::HtmlSummary {
    let keep_ref = |url: &str, class: ResourceClass| -> bool {
        let host = match url::Url::parse(url).ok().and_then(|u| u.host_str().map(str::to_string)) {
            Some(h) => h,
            // Refs we cannot attribute to a host are left alone.
            None => return true,
        };
        let pseudo = RequestRecord {
            url: url.to_string(),
            host,
            bytes: 0,
            resource_class: class,
            sets_cookie: false,
            reads_cookie: false,
        };
        let party = rules.classify_party(&pseudo.host, &visit.site_host);
        !match_request(blocker, &pseudo, party, rules)
    };
    crate::model::HtmlSummary {
        doc_bytes: visit.html.doc_bytes,
        image_refs: visit
            .html
            .image_refs
            .iter()
            .filter(|r| keep_ref(&r.url, ResourceClass::Image))
            .cloned()
            .collect(),
        script_refs: visit
            .html
            .script_refs
            .iter()
            .filter(|r| keep_ref(&r.url, ResourceClass::Script))
            .cloned()
            .collect(),
    }
}

/// A jar entry survives when the interaction that set it would not have been
/// blocked: the entry is re-evaluated as a pseudo-request from its domain
/// with the party recorded at set time. The cookie policy then applies on
/// top, and opt-out replacement runs last.
fn filter_cookie_jar(
    blocker: &BlockerSpec,
    raw: &CrawlRun,
    rules: &SuffixRules,
) -> Vec<CookieEntry> {
    let visited_entities: BTreeSet<String> = raw
        .visits
        .iter()
        .map(|v| rules.entity(&v.site_host))
        .collect();

    let mut kept: Vec<CookieEntry> = Vec::new();
    for entry in &raw.cookie_jar {
        let party = if entry.third_party_origin {
            PartyClass::ThirdParty
        } else {
            PartyClass::FirstParty
        };
        let entity = rules.entity(&entry.domain);
        if blocker.policy == PolicyBlocker::BlockAllThirdParty && party.is_third() {
            continue;
        }
        if let Some(h) = &blocker.heuristic {
            if party.is_third() && h.blocked.contains(&entity) {
                continue;
            }
        }
        if rule_lists_block(blocker, &entry.domain, &entity, party) {
            continue;
        }
        match blocker.cookie_policy.kind {
            CookiePolicyKind::AllowAll | CookiePolicyKind::OptOutCookies => {}
            CookiePolicyKind::BlockThirdParty => {
                if entry.third_party_origin {
                    continue;
                }
            }
            CookiePolicyKind::BlockThirdPartyExceptVisited => {
                if entry.third_party_origin && !visited_entities.contains(&entity) {
                    continue;
                }
            }
        }
        kept.push(entry.clone());
    }

    if blocker.cookie_policy.kind == CookiePolicyKind::OptOutCookies {
        let mut replaced: BTreeSet<String> = BTreeSet::new();
        kept.retain(|entry| {
            let entity = rules.entity(&entry.domain);
            if blocker.cookie_policy.optout_domains.contains(&entity) {
                replaced.insert(entity);
                false
            } else {
                true
            }
        });
        for domain in replaced {
            kept.push(CookieEntry {
                domain,
                name: OPTOUT_COOKIE_NAME.to_string(),
                third_party_origin: false,
            });
        }
    }
    kept
}

/// Run `passes` training crawls over `corpus`, carrying heuristic state
/// across passes. `passes = 0` leaves the state untouched.
pub fn train_heuristic(
    blocker: &BlockerSpec,
    corpus: &CrawlRun,
    passes: u32,
    rules: &SuffixRules,
) -> Result<BlockerSpec> {
    if blocker.heuristic.is_none() {
        return Err(Error::invalid(format!(
            "blocker {:?} has no heuristic state to train",
            blocker.id
        )));
    }
    let mut trained = blocker.clone();
    for _ in 0..passes {
        apply_blocker(&mut trained, corpus, rules);
    }
    Ok(trained)
}
