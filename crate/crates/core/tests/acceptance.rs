//! Acceptance suite: one test per criterion, each printing a PASS line once
//! its checks hold. Oracles here are written independently of the library
//! code they check.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use privmeter::blocker::{
    self, BlockerSpec, HeuristicState, Pattern, PartyScope, PolicyBlocker, RuleList,
};
use privmeter::footprint::{self, EntityMap, GroupingMethod};
use privmeter::metrics::{self, Metric, MetricTable};
use privmeter::model::{CrawlRun, HtmlSummary, RequestRecord, ResourceClass, SiteVisit};
use privmeter::overlap::{self, ResourceKind};
use privmeter::psl::SuffixRules;
use privmeter::report;
use privmeter::stats::{self, Direction, Grouping};
use privmeter::synth::{self, EcosystemConfig};

// --- independent oracles -------------------------------------------------

/// Brute-force KS statistic: evaluate |F_a - F_b| at every point of the
/// pooled sample by direct counting.
fn brute_force_d(a: &[f64], b: &[f64]) -> f64 {
    let mut points: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    points.sort_by(|x, y| x.partial_cmp(y).unwrap());
    points.dedup();
    let count_le = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64;
    let mut d: f64 = 0.0;
    for x in points {
        let diff = (count_le(a, x) / a.len() as f64 - count_le(b, x) / b.len() as f64).abs();
        if diff > d {
            d = diff;
        }
    }
    d
}

/// Permutation-test p-value with its own shuffling and its own statistic
/// evaluation over a sorted pooled sample.
fn permutation_oracle_p(a: &[f64], b: &[f64], shuffles: u32, seed: u64) -> f64 {
    let d_obs = brute_force_d(a, b);
    let n = a.len();
    let m = b.len();
    let mut pooled: Vec<(f64, u8)> = a
        .iter()
        .map(|&v| (v, 0u8))
        .chain(b.iter().map(|&v| (v, 1u8)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let values: Vec<f64> = pooled.iter().map(|p| p.0).collect();
    let mut labels: Vec<u8> = pooled.iter().map(|p| p.1).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..shuffles {
        labels.shuffle(&mut rng);
        // Statistic over the fixed sorted values with shuffled labels.
        let mut ca = 0usize;
        let mut cb = 0usize;
        let mut d: f64 = 0.0;
        let mut i = 0usize;
        let total = values.len();
        while i < total {
            let v = values[i];
            while i < total && values[i] == v {
                if labels[i] == 0 {
                    ca += 1;
                } else {
                    cb += 1;
                }
                i += 1;
            }
            let diff = (ca as f64 / n as f64 - cb as f64 / m as f64).abs();
            if diff > d {
                d = diff;
            }
        }
        if d >= d_obs - 1e-12 {
            hits += 1;
        }
    }
    (hits as f64 + 1.0) / (shuffles as f64 + 1.0)
}

fn random_sample(rng: &mut ChaCha8Rng, len: usize, ties: bool) -> Vec<f64> {
    (0..len)
        .map(|_| {
            if ties {
                rng.random_range(0..15) as f64
            } else {
                rng.random_range(0.0..100.0)
            }
        })
        .collect()
}

// --- criteria ------------------------------------------------------------

#[test]
fn acceptance_ks_correctness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE01);

    // Exact agreement with the brute-force scan on 200 randomized pairs.
    for case in 0..200 {
        let ties = case % 2 == 0;
        let len_a = rng.random_range(1..=60);
        let len_b = rng.random_range(1..=60);
        let a = random_sample(&mut rng, len_a, ties);
        let b = random_sample(&mut rng, len_b, ties);
        let d = stats::ks_statistic(&a, &b).unwrap();
        let oracle = brute_force_d(&a, &b);
        assert_eq!(d, oracle, "case {case}: D mismatch vs brute force");
    }

    // D(a, a) = 0 and disjoint supports give D = 1.
    for _ in 0..50 {
        let len = rng.random_range(1..=40);
        let a = random_sample(&mut rng, len, true);
        assert_eq!(stats::ks_statistic(&a, &a).unwrap(), 0.0);
        let lo: Vec<f64> = (0..rng.random_range(1..=30))
            .map(|_| rng.random_range(0.0..10.0))
            .collect();
        let hi: Vec<f64> = (0..rng.random_range(1..=30))
            .map(|_| rng.random_range(20.0..30.0))
            .collect();
        assert_eq!(stats::ks_statistic(&lo, &hi).unwrap(), 1.0);
    }

    // Asymptotic p within 0.02 of a 1e5-shuffle permutation oracle on 20
    // fixed (n, m, D) cases with n, m >= 30. Samples are evenly spaced
    // grids with a shift, pinning D exactly; the cases span p from ~0.26
    // down to ~1e-6, the region where accept/reject decisions live.
    let cases: [(usize, usize, f64); 20] = [
        (30, 30, 12.0),
        (30, 30, 13.0),
        (30, 30, 15.0),
        (50, 50, 8.0),
        (50, 50, 10.0),
        (50, 50, 12.0),
        (50, 64, 6.0),
        (50, 64, 8.0),
        (50, 64, 10.0),
        (50, 64, 12.0),
        (60, 74, 6.0),
        (60, 74, 8.0),
        (60, 74, 10.0),
        (80, 80, 6.0),
        (80, 80, 8.0),
        (80, 80, 10.0),
        (100, 86, 4.0),
        (100, 86, 6.0),
        (100, 100, 6.0),
        (100, 100, 8.0),
    ];
    for (case, (n, m, shift)) in cases.into_iter().enumerate() {
        let a: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64 * 30.0).collect();
        let b: Vec<f64> = (0..m)
            .map(|j| (j as f64 + 0.5) / m as f64 * 30.0 + shift)
            .collect();
        let result = stats::ks_two_sample(&a, &b, 0.05).unwrap();
        let oracle = permutation_oracle_p(&a, &b, 100_000, 0xBEEF + case as u64);
        assert!(
            (result.p_value - oracle).abs() < 0.02,
            "case {case} (n={n}, m={m}, D={:.3}): asymptotic {:.4} vs permutation {:.4}",
            result.d_statistic,
            result.p_value,
            oracle
        );
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "KS checks took {elapsed:?}");
    println!("ACCEPTANCE PASS: ks correctness ({elapsed:?})");
}

#[test]
fn acceptance_psl_conformance() {
    let rules = SuffixRules::bundled();
    let vectors = include_str!("../data/psl_test_vectors.txt");
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for line in vectors.lines() {
        let line = line.trim();
        let Some(args) = line
            .strip_prefix("checkPublicSuffix(")
            .and_then(|rest| rest.strip_suffix(");"))
        else {
            continue;
        };
        let parts: Vec<&str> = args.splitn(2, ", ").collect();
        assert_eq!(parts.len(), 2, "unparsable vector line: {line}");
        let parse = |s: &str| -> Option<String> {
            if s == "null" {
                None
            } else {
                Some(s.trim_matches('\'').to_string())
            }
        };
        let host = parse(parts[0]);
        let expected = parse(parts[1]);
        // Punycode conversion is out of scope.
        if host.as_deref().is_some_and(|h| h.contains("xn--")) {
            skipped += 1;
            continue;
        }
        let got = host
            .as_deref()
            .and_then(|h| rules.registrable_domain(h))
            .map(|rd| rd.into_string());
        assert_eq!(
            got, expected,
            "checkPublicSuffix({:?}) mismatch",
            host.as_deref().unwrap_or("null")
        );
        checked += 1;
    }
    assert!(checked >= 60, "only {checked} vectors ran");
    println!("ACCEPTANCE PASS: psl conformance ({checked} vectors, {skipped} punycode skipped)");
}

fn default_corpus() -> Vec<CrawlRun> {
    let config = EcosystemConfig::default();
    let (runs, _) = synth::generate(&config, 10).unwrap();
    runs
}

#[test]
fn acceptance_blocker_semantics() {
    let rules = SuffixRules::bundled();
    let bare = default_corpus();
    let bare_table = MetricTable::build(&bare, &rules).unwrap();

    // BlockAllThirdParty: zero third-party requests and cookies everywhere.
    let mut rp = BlockerSpec::policy("block3p", PolicyBlocker::BlockAllThirdParty);
    let mut protected = Vec::new();
    for run in &bare {
        protected.push(blocker::apply_blocker(&mut rp, run, &rules));
    }
    let table = MetricTable::build(&protected, &rules).unwrap();
    for ((_, run, site), (b, _)) in &table.visit_rows {
        assert_eq!(b.tp_requests, 0, "run {run} site {site} still has third-party requests");
        assert_eq!(b.tp_domains, 0);
    }
    for run in &protected {
        assert!(
            run.cookie_jar.iter().all(|c| !c.third_party_origin),
            "third-party cookie survived"
        );
    }

    // NoOp: metrics bit-identical to bare.
    let mut noop = BlockerSpec::noop("noop");
    let noop_runs: Vec<CrawlRun> = bare
        .iter()
        .map(|run| blocker::apply_blocker(&mut noop, run, &rules))
        .collect();
    let noop_table = MetricTable::build(&noop_runs, &rules).unwrap();
    for ((_, run, site), values) in &noop_table.visit_rows {
        let bare_values = &bare_table.visit_rows[&("bare".to_string(), *run, site.clone())];
        assert_eq!(values, bare_values, "noop changed metrics at run {run} {site}");
    }
    for ((_, run), values) in &noop_table.run_rows {
        let bare_values = &bare_table.run_rows[&("bare".to_string(), *run)];
        assert_eq!(values, bare_values);
    }

    // Monotonicity: 50 random rule lists never increase any metric anywhere.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE03);
    let mut domain_pool: Vec<String> = (0..40).map(|j| format!("tracker{j:02}.net")).collect();
    domain_pool.extend((0..20).map(|i| format!("site{i:03}.com")));
    domain_pool.extend((0..10).map(|i| format!("ad{i:03}x01x0.net")));
    for list_idx in 0..50 {
        let mut list = RuleList {
            name: format!("random{list_idx}"),
            party_scope: if rng.random_bool(0.8) {
                PartyScope::ThirdPartyOnly
            } else {
                PartyScope::All
            },
            ..Default::default()
        };
        for _ in 0..rng.random_range(1..=8) {
            let domain = domain_pool[rng.random_range(0..domain_pool.len())].clone();
            let pattern = match rng.random_range(0..3) {
                0 => Pattern::RegistrableDomain(domain),
                1 => Pattern::HostSuffix(domain),
                _ => Pattern::ExactHost(format!("px.{domain}")),
            };
            list.block_rules.push(pattern);
        }
        if rng.random_bool(0.3) {
            let domain = domain_pool[rng.random_range(0..domain_pool.len())].clone();
            list.exception_rules.push(Pattern::HostSuffix(domain));
        }
        let mut spec = BlockerSpec::with_rule_list(format!("rl{list_idx}"), list);
        for run in &bare {
            let filtered = blocker::apply_blocker(&mut spec, run, &rules);
            for visit in &filtered.visits {
                let (b, h) = metrics::visit_metrics(visit, &rules);
                let key = ("bare".to_string(), run.run_index, visit.site.clone());
                let (bb, bh) = &bare_table.visit_rows[&key];
                for metric in metrics::BROWSING_METRICS.iter().chain(&metrics::HTML_METRICS) {
                    assert!(
                        metric.value(&b, &h) <= metric.value(bb, bh),
                        "list {list_idx}: {} increased on {}",
                        metric.name(),
                        visit.site
                    );
                }
            }
            assert!(filtered.cookie_jar.len() <= run.cookie_jar.len());
        }
    }
    println!("ACCEPTANCE PASS: blocker semantics");
}

#[test]
fn acceptance_heuristic_training() {
    let rules = SuffixRules::bundled();
    let bare = default_corpus();

    // Zero training: the heuristic trains as the measurement crawl runs and
    // already suppresses requests.
    let mut untrained = BlockerSpec::noop("pb");
    untrained.heuristic = Some(HeuristicState::default());
    let mut bare_tp = 0u64;
    let mut untrained_tp = 0u64;
    for run in &bare {
        let (b, _) = metrics::run_totals(run, &rules);
        bare_tp += b.tp_requests;
        let filtered = blocker::apply_blocker(&mut untrained, run, &rules);
        let (f, _) = metrics::run_totals(&filtered, &rules);
        untrained_tp += f.tp_requests;
    }
    assert!(
        untrained_tp < bare_tp,
        "untrained heuristic blocked nothing ({untrained_tp} vs {bare_tp})"
    );
    assert!(!untrained.heuristic.as_ref().unwrap().blocked.is_empty());

    // One full pass fixes the blocked set; more passes add nothing.
    let mut template = BlockerSpec::noop("pb");
    template.heuristic = Some(HeuristicState::default());
    let one = blocker::train_heuristic(&template, &bare[0], 1, &rules).unwrap();
    let blocked_after_one = one.heuristic.as_ref().unwrap().blocked.clone();
    assert!(!blocked_after_one.is_empty());
    for passes in 2..=4 {
        let more = blocker::train_heuristic(&template, &bare[0], passes, &rules).unwrap();
        assert_eq!(
            more.heuristic.as_ref().unwrap().blocked,
            blocked_after_one,
            "training pass {passes} changed the blocked set"
        );
    }

    // Threshold boundary: prevalence 4 blocks, prevalence 3 does not.
    let corpus = |reading_sites: u32| -> CrawlRun {
        let mut run = CrawlRun::new("bare", 0);
        for i in 0..6u32 {
            let site_host = format!("s{i}.com");
            let mut requests = vec![RequestRecord {
                url: format!("https://{site_host}/"),
                host: site_host.clone(),
                bytes: 10,
                resource_class: ResourceClass::Document,
                sets_cookie: false,
                reads_cookie: false,
            }];
            if i < reading_sites {
                requests.push(RequestRecord {
                    url: "https://px.watcher.net/p.gif".to_string(),
                    host: "px.watcher.net".to_string(),
                    bytes: 1,
                    resource_class: ResourceClass::Image,
                    sets_cookie: true,
                    reads_cookie: true,
                });
            }
            run.visits.push(SiteVisit {
                site: format!("https://{site_host}/"),
                site_host,
                requests,
                html: HtmlSummary::default(),
            });
        }
        run
    };
    for (sites, expect_blocked) in [(4u32, true), (3u32, false)] {
        let trained = blocker::train_heuristic(&template, &corpus(sites), 1, &rules).unwrap();
        assert_eq!(
            trained.heuristic.unwrap().blocked.contains("watcher.net"),
            expect_blocked,
            "prevalence {sites}"
        );
    }
    println!("ACCEPTANCE PASS: heuristic training");
}

#[test]
fn acceptance_stability_analysis() {
    let rules = SuffixRules::bundled();
    let mut passes = 0u32;
    let seeds = 20u64;
    for seed in 0..seeds {
        let config = EcosystemConfig {
            seed: 1000 + seed,
            ..Default::default()
        };
        let (runs, _) = synth::generate(&config, 10).unwrap();
        let curve = stats::stability_curve(&runs, Metric::TpRequests, 10, &rules).unwrap();
        let at2 = curve.row(2).unwrap().median;
        let at10 = curve.row(10).unwrap().median;
        if at10 < at2 && at10 < 0.05 {
            passes += 1;
        } else {
            println!("  seed {seed}: median RSE n=2 {at2:.4}, n=10 {at10:.4}");
        }
    }
    assert!(
        passes >= 19,
        "stability shape held for only {passes}/{seeds} seeds"
    );
    println!("ACCEPTANCE PASS: stability analysis ({passes}/{seeds} seeds)");
}

#[test]
fn acceptance_footprint_oracle() {
    let rules = SuffixRules::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE04);
    for case in 0..30 {
        let config = EcosystemConfig {
            n_sites: rng.random_range(2..=10),
            n_trackers: rng.random_range(3..=15),
            seed: 5000 + case,
            ..Default::default()
        };
        let (runs, _) = synth::generate(&config, 2).unwrap();

        let mut map = EntityMap::default();
        for j in 0..config.n_trackers {
            if rng.random_bool(0.6) {
                map.adns.insert(
                    format!("tracker{j:02}.net"),
                    format!("dns{}.com", rng.random_range(0..4)),
                );
            }
            if rng.random_bool(0.3) {
                map.cdn_domains.insert(format!("tracker{j:02}.net"));
            }
        }

        for method in [GroupingMethod::Adns, GroupingMethod::Root] {
            let graph = footprint::build_footprint(&runs, &rules, &map, method).unwrap();
            let got = footprint::footprint_metrics(&graph);

            // Oracle: collect raw edges by direct iteration, group with its
            // own logic, and count degrees by brute force.
            let mut edges: Vec<(String, String)> = Vec::new();
            let mut fps: Vec<String> = Vec::new();
            for run in &runs {
                for visit in &run.visits {
                    let site = rules.entity(&visit.site_host);
                    if !fps.contains(&site) {
                        fps.push(site.clone());
                    }
                    for req in &visit.requests {
                        let domain = rules.entity(&req.host);
                        if domain == site {
                            continue;
                        }
                        let entity = if method == GroupingMethod::Root
                            && map.cdn_domains.contains(&domain)
                        {
                            domain.clone()
                        } else {
                            map.adns.get(&domain).cloned().unwrap_or(domain.clone())
                        };
                        if entity == site {
                            continue;
                        }
                        let edge = (site.clone(), entity);
                        if !edges.contains(&edge) {
                            edges.push(edge);
                        }
                    }
                }
            }
            let tps: BTreeSet<&String> = edges.iter().map(|(_, t)| t).collect();
            let expect_n = tps.len() as u64;
            let expect_mean = edges.len() as f64 / fps.len() as f64;
            let mut degrees: Vec<(usize, &String)> = tps
                .iter()
                .map(|t| (edges.iter().filter(|(_, e)| &e == t).count(), *t))
                .collect();
            degrees.sort_by(|(da, ta), (db, tb)| db.cmp(da).then_with(|| ta.cmp(tb)));
            let mut covered: BTreeSet<&String> = BTreeSet::new();
            for (_, t) in degrees.iter().take(10) {
                for (fp, tp) in &edges {
                    if &tp == t {
                        covered.insert(fp);
                    }
                }
            }
            assert_eq!(got.n_third_parties, expect_n, "case {case} {method:?}");
            assert!(
                (got.mean_tp_per_fp - expect_mean).abs() < 1e-12,
                "case {case} {method:?}: mean {} vs {}",
                got.mean_tp_per_fp,
                expect_mean
            );
            assert_eq!(
                got.top10_fp_coverage,
                covered.len() as u64,
                "case {case} {method:?}"
            );
        }
    }
    println!("ACCEPTANCE PASS: footprint oracle (30 corpora, both methods)");
}

#[test]
fn acceptance_overlap_oracle() {
    let rules = SuffixRules::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE05);
    for case in 0..30 {
        let config = EcosystemConfig {
            n_sites: 10,
            n_trackers: 12,
            seed: 9000 + case,
            ..Default::default()
        };
        let (bare, _) = synth::generate(&config, 2).unwrap();
        let kind = if case % 2 == 0 {
            ResourceKind::Domains
        } else {
            ResourceKind::Requests
        };

        let mut sets = Vec::new();
        for t in 0..5 {
            let mut list = RuleList {
                name: format!("t{t}"),
                ..Default::default()
            };
            for j in 0..config.n_trackers {
                if rng.random_bool(0.4) {
                    list.block_rules
                        .push(Pattern::RegistrableDomain(format!("tracker{j:02}.net")));
                }
            }
            let mut spec = BlockerSpec::with_rule_list(format!("technique{t}"), list);
            let protected: Vec<CrawlRun> = bare
                .iter()
                .map(|run| blocker::apply_blocker(&mut spec, run, &rules))
                .collect();
            sets.push(overlap::blocked_set(&bare, &protected, kind, &rules).unwrap());
        }

        let matrix = overlap::overlap_matrix(&sets).unwrap();
        for set in &sets {
            assert_eq!(matrix.sizes[&set.technique], set.members.len() as u64);
        }
        for (i, a) in sets.iter().enumerate() {
            for b in sets.iter().skip(i + 1) {
                let inter = a.members.iter().filter(|m| b.members.contains(*m)).count() as u64;
                assert_eq!(
                    matrix.pairwise_size(&a.technique, &b.technique),
                    Some(inter),
                    "case {case}"
                );
                // Inclusion-exclusion against a directly computed union.
                let union: BTreeSet<&String> = a.members.union(&b.members).collect();
                assert_eq!(
                    union.len() as u64,
                    matrix.sizes[&a.technique] + matrix.sizes[&b.technique] - inter,
                    "case {case}"
                );
            }
        }
        for set in &sets {
            let mut others: BTreeSet<&String> = BTreeSet::new();
            for other in &sets {
                if other.technique != set.technique {
                    others.extend(other.members.iter());
                }
            }
            let unique = set.members.iter().filter(|m| !others.contains(*m)).count() as u64;
            assert_eq!(matrix.unique[&set.technique], unique, "case {case}");
        }
    }
    println!("ACCEPTANCE PASS: overlap oracle (30 configurations)");
}

#[test]
fn acceptance_ranking_sanity() {
    let rules = SuffixRules::bundled();
    let bare = default_corpus();

    // Strictly nested rule lists: each blocks a superset of the previous.
    let nested_list = |top_k: u32| -> RuleList {
        RuleList {
            name: format!("top{top_k}"),
            block_rules: (0..top_k)
                .map(|j| Pattern::RegistrableDomain(format!("tracker{j:02}.net")))
                .collect(),
            ..Default::default()
        }
    };
    let mut all_runs = bare.clone();
    for (id, k) in [("l1", 1u32), ("l2", 4), ("l2-twin", 4), ("l3", 12)] {
        let mut spec = BlockerSpec::with_rule_list(id, nested_list(k));
        for run in &bare {
            all_runs.push(blocker::apply_blocker(&mut spec, run, &rules));
        }
    }
    let table = MetricTable::build(&all_runs, &rules).unwrap();
    let mut per_config: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for config in table.config_ids() {
        per_config.insert(
            config.clone(),
            metrics::per_site_means(&table, &config, Metric::TpRequests)
                .unwrap()
                .into_iter()
                .map(|(site, sm)| (site, sm.mean))
                .collect(),
        );
    }
    let assignment = stats::ks_rank(
        &per_config,
        0.05,
        Direction::LowerIsBetter,
        Grouping::AnchorGreedy,
    )
    .unwrap();

    // Means must follow the nesting, and ranks must not invert it.
    assert!(assignment.means["l3"] <= assignment.means["l2"]);
    assert!(assignment.means["l2"] <= assignment.means["l1"]);
    assert!(assignment.means["l1"] <= assignment.means["bare"]);
    assert!(assignment.ranks["l3"] <= assignment.ranks["l2"]);
    assert!(assignment.ranks["l2"] <= assignment.ranks["l1"]);
    assert!(assignment.ranks["l1"] <= assignment.ranks["bare"]);
    assert!(
        assignment.ranks["l3"] < assignment.ranks["bare"],
        "the widest blocker must separate from bare"
    );
    // Identical blockers always share a rank.
    assert_eq!(assignment.ranks["l2"], assignment.ranks["l2-twin"]);
    println!("ACCEPTANCE PASS: ranking sanity");
}

#[test]
fn acceptance_end_to_end_determinism() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();

    fs::write(base.join("eco.toml"), "n_sites = 100\nseed = 42\n").unwrap();
    fs::write(
        base.join("easy.txt"),
        "! list\n||tracker00.net^\ntracker01.net\ntracker02.net\n",
    )
    .unwrap();
    fs::write(
        base.join("roster.toml"),
        concat!(
            "[[blocker]]\nid = \"dnt\"\n\n",
            "[[blocker]]\nid = \"block3p\"\npolicy = \"block-all-third-party\"\n\n",
            "[[blocker]]\nid = \"noscript\"\npolicy = \"block-all-scripts\"\n\n",
            "[[blocker]]\nid = \"easy\"\nrule_lists = [\"easy.txt\"]\n\n",
            "[[blocker]]\nid = \"cookie3p\"\ncookie_policy = \"block-third-party\"\n\n",
            "[[blocker]]\nid = \"pb\"\nheuristic = true\ntraining_passes = 1\n",
        ),
    )
    .unwrap();
    fs::write(
        base.join("manifest.toml"),
        concat!(
            "alpha = 0.05\n",
            "metrics = [\"fp_requests\", \"tp_requests\", \"tp_domains\", \"cookies\"]\n\n",
            "[data]\nsynth_config = \"eco.toml\"\nruns = 10\n\n",
            "[blockers]\nroster = \"roster.toml\"\n\n",
            "[footprint]\nmethod = \"adns\"\n\n",
            "[overlap]\nkind = \"domains\"\n",
        ),
    )
    .unwrap();

    let rules = SuffixRules::bundled();
    let manifest = report::load_manifest(&base.join("manifest.toml")).unwrap();
    let first = report::run_pipeline(&manifest, &rules, &base.join("out1"), false).unwrap();
    let manifest_again = report::load_manifest(&base.join("manifest.toml")).unwrap();
    let second = report::run_pipeline(&manifest_again, &rules, &base.join("out2"), false).unwrap();
    assert_eq!(first.manifest_hash, second.manifest_hash);

    for file in report::REPORT_FILES {
        let a = fs::read(base.join("out1").join(file)).unwrap();
        let b = fs::read(base.join("out2").join(file)).unwrap();
        assert!(!a.is_empty(), "{file} is empty");
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let entries = fs::read_dir(base.join("out1")).unwrap().count();
    assert_eq!(entries, report::REPORT_FILES.len());

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 300,
        "pipeline too slow for commodity hardware: {elapsed:?}"
    );
    println!("ACCEPTANCE PASS: end-to-end determinism ({elapsed:?} for two runs)");
}
