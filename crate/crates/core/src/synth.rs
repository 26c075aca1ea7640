//! Deterministic synthetic crawl corpora with configurable tracker
//! prevalence, cookie behavior and ad churn. Generation is a pure function
//! of the config, and every corpus comes with independently-tallied expected
//! metric values so downstream computations can be checked against ground
//! truth.
//!
//! The ecosystem: each site carries a fixed set of first-party assets and
//! persistent trackers (identical across runs), plus churn ad slots whose
//! count varies per run and whose URLs turn over per the freshness schedule.
//! Tracker popularity follows a power law, so a few trackers sit on most
//! sites and a long tail appears once.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{
    CookieEntry, CrawlRun, HtmlSummary, RequestRecord, ResourceClass, ResourceRef, SiteVisit,
};

pub const BARE_CONFIG_ID: &str = "bare";

/// Probability that a churn request at a given reload goes to a
/// never-seen-before ad URL rather than one recycled from earlier reloads.
/// Decays from `initial_fresh_prob` to `floor_fresh_prob`, so cumulative
/// unique ads grow fast over the first ~10 reloads and linearly after.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default)]
pub struct ChurnSchedule {
    pub initial_fresh_prob: f64,
    pub decay: f64,
    pub floor_fresh_prob: f64,
}

impl Default for ChurnSchedule {
    fn default() -> Self {
        ChurnSchedule {
            initial_fresh_prob: 1.0,
            decay: 0.8,
            floor_fresh_prob: 0.12,
        }
    }
}

impl ChurnSchedule {
    /// `reload` is 1-based.
    pub fn fresh_prob(&self, reload: u32) -> f64 {
        let decayed = self.initial_fresh_prob * self.decay.powi(reload.saturating_sub(1) as i32);
        decayed.max(self.floor_fresh_prob).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default)]
pub struct EcosystemConfig {
    pub n_sites: u32,
    pub n_trackers: u32,
    /// Power-law exponent for tracker popularity (> 0).
    pub prevalence_exponent: f64,
    /// Embedding probability of the most popular tracker.
    pub prevalence_scale: f64,
    /// Probability that a tracker sets/reads cookies.
    pub cookie_set_prob: f64,
    /// Per-site churn request baseline range; (0, 0) disables churn.
    pub churn_min_requests: u32,
    pub churn_max_requests: u32,
    pub churn_new_ad_rate: ChurnSchedule,
    pub seed: u64,
}

impl Default for EcosystemConfig {
    /// The default desk-scale corpus: 100 sites, crawled (by convention)
    /// 10 times.
    fn default() -> Self {
        EcosystemConfig {
            n_sites: 100,
            n_trackers: 40,
            prevalence_exponent: 1.5,
            prevalence_scale: 0.9,
            cookie_set_prob: 0.5,
            churn_min_requests: 2,
            churn_max_requests: 6,
            churn_new_ad_rate: ChurnSchedule::default(),
            seed: 42,
        }
    }
}

impl EcosystemConfig {
    pub fn load(path: &Path) -> Result<EcosystemConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: EcosystemConfig =
            toml::from_str(&text).map_err(|e| Error::config(path, e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("prevalence_scale", self.prevalence_scale),
            ("cookie_set_prob", self.cookie_set_prob),
            ("initial_fresh_prob", self.churn_new_ad_rate.initial_fresh_prob),
            ("decay", self.churn_new_ad_rate.decay),
            ("floor_fresh_prob", self.churn_new_ad_rate.floor_fresh_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.prevalence_exponent <= 0.0 {
            return Err(Error::invalid("prevalence_exponent must be > 0"));
        }
        if self.churn_min_requests > self.churn_max_requests {
            return Err(Error::invalid(
                "churn_min_requests must not exceed churn_max_requests",
            ));
        }
        Ok(())
    }
}

/// Expected per-visit metric values, tallied at generation time while each
/// request is emitted. This is an independent route to the same numbers the
/// metrics computation should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExpectedVisit {
    pub fp_requests: u64,
    pub tp_requests: u64,
    pub tp_domains: u64,
    pub bytes_total: u64,
    pub html_bytes: u64,
    pub n_images: u64,
    pub n_scripts: u64,
    pub image_bytes: u64,
    pub script_bytes: u64,
}

#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    /// Site registrable domain -> persistent tracker domains embedded on it.
    pub site_trackers: BTreeMap<String, Vec<String>>,
    /// Tracker domain -> whether it sets/reads cookies.
    pub tracker_cookie_behavior: BTreeMap<String, bool>,
    /// Tracker domain -> number of distinct sites where it reads cookies as
    /// a third party (what the prevalence heuristic sees on a bare crawl).
    pub tracker_prevalence: BTreeMap<String, u32>,
    /// (run_index, site url) -> expected bare metric values.
    pub expected_visits: BTreeMap<(u32, String), ExpectedVisit>,
    /// run_index -> expected cookie jar size.
    pub expected_cookies: BTreeMap<u32, u64>,
}

struct AssetReq {
    url: String,
    host: String,
    bytes: u64,
    class: ResourceClass,
}

struct TrackerWorld {
    domain: String,
    is_cookie_tracker: bool,
}

struct SiteWorld {
    url: String,
    host: String,
    domain: String,
    doc_bytes: u64,
    fp_assets: Vec<AssetReq>,
    /// (tracker index, its persistent requests on this site).
    tracker_reqs: Vec<(usize, Vec<AssetReq>)>,
    churn_base: u32,
    has_session_cookie: bool,
}

struct World {
    trackers: Vec<TrackerWorld>,
    sites: Vec<SiteWorld>,
}

#[derive(Debug, Clone, PartialEq)]
struct ChurnAd {
    domain: String,
    url: String,
    host: String,
    bytes: u64,
    class: ResourceClass,
    sets_cookie: bool,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn slot_seed(seed: u64, site: u32, reload: u32) -> u64 {
    splitmix64(splitmix64(seed ^ (site as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)) ^ reload as u64)
}

const FP_SUBDOMAINS: [&str; 3] = ["www", "static", "img"];
const TRACKER_SUBDOMAINS: [&str; 4] = ["px", "cdn", "static", "www"];

/// The persistent part of the ecosystem; a pure function of the config.
fn build_world(config: &EcosystemConfig) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let trackers: Vec<TrackerWorld> = (0..config.n_trackers)
        .map(|j| TrackerWorld {
            domain: format!("tracker{j:02}.net"),
            is_cookie_tracker: rng.random_bool(config.cookie_set_prob),
        })
        .collect();

    let mut sites = Vec::with_capacity(config.n_sites as usize);
    for i in 0..config.n_sites {
        let domain = format!("site{i:03}.com");
        let host = format!("www.{domain}");
        let url = format!("https://{host}/");
        let doc_bytes = rng.random_range(5_000..=60_000);
        let n_assets = rng.random_range(3..=8);
        let fp_assets = (0..n_assets)
            .map(|k| {
                let sub = FP_SUBDOMAINS[rng.random_range(0..FP_SUBDOMAINS.len())];
                let class = match rng.random_range(0..3) {
                    0 => ResourceClass::Script,
                    1 => ResourceClass::Image,
                    _ => ResourceClass::Stylesheet,
                };
                let ext = match class {
                    ResourceClass::Script => "js",
                    ResourceClass::Image => "png",
                    _ => "css",
                };
                let asset_host = format!("{sub}.{domain}");
                AssetReq {
                    url: format!("https://{asset_host}/asset{k}.{ext}"),
                    host: asset_host,
                    bytes: rng.random_range(500..=30_000),
                    class,
                }
            })
            .collect();
        let mut tracker_reqs = Vec::new();
        for (j, tracker) in trackers.iter().enumerate() {
            let p = (config.prevalence_scale
                * ((j + 1) as f64).powf(-config.prevalence_exponent))
            .min(1.0);
            if !rng.random_bool(p) {
                continue;
            }
            let n_reqs = rng.random_range(2..=4);
            let reqs = (0..n_reqs)
                .map(|k| {
                    let sub = TRACKER_SUBDOMAINS[rng.random_range(0..TRACKER_SUBDOMAINS.len())];
                    let class = if rng.random_bool(0.5) {
                        ResourceClass::Script
                    } else {
                        ResourceClass::Image
                    };
                    let ext = if class == ResourceClass::Script { "js" } else { "gif" };
                    let tracker_host = format!("{sub}.{}", tracker.domain);
                    AssetReq {
                        url: format!("https://{tracker_host}/s{i}t{k}.{ext}"),
                        host: tracker_host,
                        bytes: rng.random_range(500..=20_000),
                        class,
                    }
                })
                .collect();
            tracker_reqs.push((j, reqs));
        }
        let churn_base = if config.churn_max_requests == 0 {
            0
        } else {
            rng.random_range(config.churn_min_requests..=config.churn_max_requests)
        };
        sites.push(SiteWorld {
            url,
            host,
            domain,
            doc_bytes,
            fp_assets,
            tracker_reqs,
            churn_base,
            has_session_cookie: rng.random_bool(0.8),
        });
    }
    World { trackers, sites }
}

/// Churn ads shown on `site` at `reload` (1-based). `pool` holds every ad
/// the site has shown at earlier reloads; recycled slots draw from it.
fn churn_for_reload(
    config: &EcosystemConfig,
    site_idx: u32,
    churn_base: u32,
    reload: u32,
    pool: &[ChurnAd],
) -> Vec<ChurnAd> {
    if churn_base == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(slot_seed(config.seed, site_idx, reload));
    let count = rng.random_range(churn_base.saturating_sub(1)..=churn_base + 1);
    let fresh_prob = config.churn_new_ad_rate.fresh_prob(reload);
    let mut ads = Vec::with_capacity(count as usize);
    for k in 0..count {
        let fresh = pool.is_empty() || rng.random_bool(fresh_prob);
        if fresh {
            let domain = format!("ad{site_idx:03}x{reload:02}x{k}.net");
            let host = format!("serve.{domain}");
            let class = if rng.random_bool(0.5) {
                ResourceClass::Script
            } else {
                ResourceClass::Image
            };
            let ext = if class == ResourceClass::Script { "js" } else { "gif" };
            ads.push(ChurnAd {
                url: format!("https://{host}/creative.{ext}"),
                host,
                domain,
                bytes: rng.random_range(1_000..=200_000),
                class,
                sets_cookie: rng.random_bool(0.2),
            });
        } else {
            let pick = rng.random_range(0..pool.len());
            ads.push(pool[pick].clone());
        }
    }
    ads
}

/// Generate `n_runs` stateful bare runs over the same site list, plus the
/// ground truth tallied while emitting. Fully determined by the seed.
pub fn generate(config: &EcosystemConfig, n_runs: u32) -> Result<(Vec<CrawlRun>, GroundTruth)> {
    config.validate()?;
    let world = build_world(config);
    let mut truth = GroundTruth::default();
    for tracker in &world.trackers {
        truth
            .tracker_cookie_behavior
            .insert(tracker.domain.clone(), tracker.is_cookie_tracker);
    }
    for site in &world.sites {
        let trackers: Vec<String> = site
            .tracker_reqs
            .iter()
            .map(|(j, _)| world.trackers[*j].domain.clone())
            .collect();
        for (j, _) in &site.tracker_reqs {
            let tracker = &world.trackers[*j];
            if tracker.is_cookie_tracker {
                *truth
                    .tracker_prevalence
                    .entry(tracker.domain.clone())
                    .or_insert(0) += 1;
            }
        }
        truth.site_trackers.insert(site.domain.clone(), trackers);
    }

    // site index -> every ad shown so far, for recycling.
    let mut pools: Vec<Vec<ChurnAd>> = vec![Vec::new(); world.sites.len()];
    let mut pool_urls: Vec<BTreeSet<String>> = vec![BTreeSet::new(); world.sites.len()];
    let mut runs = Vec::with_capacity(n_runs as usize);
    for run_idx in 0..n_runs {
        let reload = run_idx + 1;
        let mut run = CrawlRun::new(BARE_CONFIG_ID, run_idx);
        let mut churn_cookie_domains: BTreeSet<String> = BTreeSet::new();
        for (site_idx, site) in world.sites.iter().enumerate() {
            let churn = churn_for_reload(
                config,
                site_idx as u32,
                site.churn_base,
                reload,
                &pools[site_idx],
            );
            for ad in &churn {
                if pool_urls[site_idx].insert(ad.url.clone()) {
                    pools[site_idx].push(ad.clone());
                }
                if ad.sets_cookie {
                    churn_cookie_domains.insert(ad.domain.clone());
                }
            }

            let mut expected = ExpectedVisit {
                html_bytes: site.doc_bytes,
                ..Default::default()
            };
            let mut requests = Vec::new();
            let tally = |req: &RequestRecord, expected: &mut ExpectedVisit, third: bool| {
                if third {
                    expected.tp_requests += 1;
                } else {
                    expected.fp_requests += 1;
                }
                expected.bytes_total += req.bytes;
                match req.resource_class {
                    ResourceClass::Image => {
                        expected.n_images += 1;
                        expected.image_bytes += req.bytes;
                    }
                    ResourceClass::Script => {
                        expected.n_scripts += 1;
                        expected.script_bytes += req.bytes;
                    }
                    _ => {}
                }
            };

            let doc = RequestRecord {
                url: site.url.clone(),
                host: site.host.clone(),
                bytes: site.doc_bytes,
                resource_class: ResourceClass::Document,
                sets_cookie: site.has_session_cookie,
                reads_cookie: false,
            };
            tally(&doc, &mut expected, false);
            requests.push(doc);
            for asset in &site.fp_assets {
                let req = RequestRecord {
                    url: asset.url.clone(),
                    host: asset.host.clone(),
                    bytes: asset.bytes,
                    resource_class: asset.class,
                    sets_cookie: false,
                    reads_cookie: false,
                };
                tally(&req, &mut expected, false);
                requests.push(req);
            }
            let mut tp_domains: BTreeSet<&str> = BTreeSet::new();
            for (j, reqs) in &site.tracker_reqs {
                let tracker = &world.trackers[*j];
                tp_domains.insert(&tracker.domain);
                for asset in reqs {
                    let req = RequestRecord {
                        url: asset.url.clone(),
                        host: asset.host.clone(),
                        bytes: asset.bytes,
                        resource_class: asset.class,
                        sets_cookie: tracker.is_cookie_tracker,
                        reads_cookie: tracker.is_cookie_tracker,
                    };
                    tally(&req, &mut expected, true);
                    requests.push(req);
                }
            }
            for ad in &churn {
                tp_domains.insert(&ad.domain);
                let req = RequestRecord {
                    url: ad.url.clone(),
                    host: ad.host.clone(),
                    bytes: ad.bytes,
                    resource_class: ad.class,
                    sets_cookie: ad.sets_cookie,
                    reads_cookie: false,
                };
                tally(&req, &mut expected, true);
                requests.push(req);
            }
            expected.tp_domains = tp_domains.len() as u64;

            let html = html_from_requests(site.doc_bytes, &requests);
            truth
                .expected_visits
                .insert((run_idx, site.url.clone()), expected);
            run.visits.push(SiteVisit {
                site: site.url.clone(),
                site_host: site.host.clone(),
                requests,
                html,
            });
        }

        for site in &world.sites {
            if site.has_session_cookie {
                run.cookie_jar.push(CookieEntry {
                    domain: site.domain.clone(),
                    name: "session".to_string(),
                    third_party_origin: false,
                });
            }
        }
        let embedded: BTreeSet<usize> = world
            .sites
            .iter()
            .flat_map(|s| s.tracker_reqs.iter().map(|(j, _)| *j))
            .collect();
        for j in embedded {
            let tracker = &world.trackers[j];
            if tracker.is_cookie_tracker {
                run.cookie_jar.push(CookieEntry {
                    domain: tracker.domain.clone(),
                    name: "uid".to_string(),
                    third_party_origin: true,
                });
            }
        }
        for domain in &churn_cookie_domains {
            run.cookie_jar.push(CookieEntry {
                domain: domain.clone(),
                name: "uid".to_string(),
                third_party_origin: true,
            });
        }
        truth
            .expected_cookies
            .insert(run_idx, run.cookie_jar.len() as u64);
        runs.push(run);
    }
    Ok((runs, truth))
}

fn html_from_requests(doc_bytes: u64, requests: &[RequestRecord]) -> HtmlSummary {
    let refs = |class: ResourceClass| -> Vec<ResourceRef> {
        requests
            .iter()
            .filter(|r| r.resource_class == class)
            .map(|r| ResourceRef {
                url: r.url.clone(),
                bytes: r.bytes,
            })
            .collect()
    };
    HtmlSummary {
        doc_bytes,
        image_refs: refs(ResourceClass::Image),
        script_refs: refs(ResourceClass::Script),
    }
}

/// Rebuild `run` as it would look at `reload_index` (1-based): persistent
/// requests are kept as-is, churn requests are regenerated per the schedule
/// (the recycling pool is replayed from reload 1).
pub fn perturb_reload(
    run: &CrawlRun,
    config: &EcosystemConfig,
    reload_index: u32,
) -> Result<CrawlRun> {
    if reload_index < 1 {
        return Err(Error::invalid("reload_index must be >= 1"));
    }
    config.validate()?;
    let world = build_world(config);
    let mut out = CrawlRun::new(run.config_id.clone(), run.run_index);
    let mut churn_cookie_domains: BTreeSet<String> = BTreeSet::new();

    for visit in &run.visits {
        let site = world
            .sites
            .iter()
            .enumerate()
            .find(|(_, s)| s.url == visit.site)
            .ok_or_else(|| {
                Error::invalid(format!("visit {} is not part of this ecosystem", visit.site))
            })?;
        let (site_idx, site_world) = site;
        let persistent_urls: BTreeSet<&str> = std::iter::once(site_world.url.as_str())
            .chain(site_world.fp_assets.iter().map(|a| a.url.as_str()))
            .chain(
                site_world
                    .tracker_reqs
                    .iter()
                    .flat_map(|(_, reqs)| reqs.iter().map(|a| a.url.as_str())),
            )
            .collect();

        let mut pool: Vec<ChurnAd> = Vec::new();
        let mut pool_urls: BTreeSet<String> = BTreeSet::new();
        for past in 1..reload_index {
            let shown = churn_for_reload(
                config,
                site_idx as u32,
                site_world.churn_base,
                past,
                &pool,
            );
            for ad in shown {
                if pool_urls.insert(ad.url.clone()) {
                    pool.push(ad);
                }
            }
        }
        let churn = churn_for_reload(
            config,
            site_idx as u32,
            site_world.churn_base,
            reload_index,
            &pool,
        );

        let mut requests: Vec<RequestRecord> = visit
            .requests
            .iter()
            .filter(|r| persistent_urls.contains(r.url.as_str()))
            .cloned()
            .collect();
        for ad in &churn {
            if ad.sets_cookie {
                churn_cookie_domains.insert(ad.domain.clone());
            }
            requests.push(RequestRecord {
                url: ad.url.clone(),
                host: ad.host.clone(),
                bytes: ad.bytes,
                resource_class: ad.class,
                sets_cookie: ad.sets_cookie,
                reads_cookie: false,
            });
        }
        let html = html_from_requests(site_world.doc_bytes, &requests);
        out.visits.push(SiteVisit {
            site: visit.site.clone(),
            site_host: visit.site_host.clone(),
            requests,
            html,
        });
    }

    // Jar: keep non-churn entries, regenerate churn setters.
    out.cookie_jar = run
        .cookie_jar
        .iter()
        .filter(|c| !c.domain.starts_with("ad"))
        .cloned()
        .collect();
    for domain in &churn_cookie_domains {
        out.cookie_jar.push(CookieEntry {
            domain: domain.clone(),
            name: "uid".to_string(),
            third_party_origin: true,
        });
    }
    Ok(out)
}
