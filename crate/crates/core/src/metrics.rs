//! Browsing and HTML metrics per visit, per run and per configuration, plus
//! the CSV form they are persisted in.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CrawlRun, SiteVisit};
use crate::psl::SuffixRules;

/// Request/cookie/traffic counters. `cookies` is only populated at run level
/// (the jar is end-of-run state).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BrowsingMetrics {
    pub fp_requests: u64,
    pub tp_requests: u64,
    pub tp_domains: u64,
    pub cookies: u64,
    pub bytes_total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HtmlMetrics {
    pub html_bytes: u64,
    pub n_images: u64,
    pub n_scripts: u64,
    pub image_bytes: u64,
    pub script_bytes: u64,
}

/// The metrics the toolkit knows how to compute and rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    FpRequests,
    TpRequests,
    TpDomains,
    Cookies,
    BytesTotal,
    HtmlBytes,
    NImages,
    NScripts,
    ImageBytes,
    ScriptBytes,
}

pub const BROWSING_METRICS: [Metric; 5] = [
    Metric::FpRequests,
    Metric::TpRequests,
    Metric::TpDomains,
    Metric::Cookies,
    Metric::BytesTotal,
];

pub const HTML_METRICS: [Metric; 5] = [
    Metric::HtmlBytes,
    Metric::NImages,
    Metric::NScripts,
    Metric::ImageBytes,
    Metric::ScriptBytes,
];

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::FpRequests => "fp_requests",
            Metric::TpRequests => "tp_requests",
            Metric::TpDomains => "tp_domains",
            Metric::Cookies => "cookies",
            Metric::BytesTotal => "bytes_total",
            Metric::HtmlBytes => "html_bytes",
            Metric::NImages => "n_images",
            Metric::NScripts => "n_scripts",
            Metric::ImageBytes => "image_bytes",
            Metric::ScriptBytes => "script_bytes",
        }
    }

    pub fn parse(name: &str) -> Result<Metric> {
        let all = BROWSING_METRICS.iter().chain(HTML_METRICS.iter());
        for m in all {
            if m.name() == name {
                return Ok(*m);
            }
        }
        Err(Error::invalid(format!("unknown metric {name:?}")))
    }

    /// Bytes transferred varies too much between reloads to compare
    /// configurations on; reports carry it but flag it.
    pub fn is_stable(self) -> bool {
        self != Metric::BytesTotal
    }

    /// Cookie counts exist per run, not per site.
    pub fn is_run_level(self) -> bool {
        self == Metric::Cookies
    }

    pub fn value(self, b: &BrowsingMetrics, h: &HtmlMetrics) -> f64 {
        let v = match self {
            Metric::FpRequests => b.fp_requests,
            Metric::TpRequests => b.tp_requests,
            Metric::TpDomains => b.tp_domains,
            Metric::Cookies => b.cookies,
            Metric::BytesTotal => b.bytes_total,
            Metric::HtmlBytes => h.html_bytes,
            Metric::NImages => h.n_images,
            Metric::NScripts => h.n_scripts,
            Metric::ImageBytes => h.image_bytes,
            Metric::ScriptBytes => h.script_bytes,
        };
        v as f64
    }
}

/// Metrics for one page load. `cookies` stays 0 here.
pub fn visit_metrics(visit: &SiteVisit, rules: &SuffixRules) -> (BrowsingMetrics, HtmlMetrics) {
    let mut b = BrowsingMetrics::default();
    let mut tp_entities: BTreeSet<String> = BTreeSet::new();
    for req in &visit.requests {
        b.bytes_total += req.bytes;
        if rules.classify_party(&req.host, &visit.site_host).is_third() {
            b.tp_requests += 1;
            tp_entities.insert(rules.entity(&req.host));
        } else {
            b.fp_requests += 1;
        }
    }
    b.tp_domains = tp_entities.len() as u64;
    let h = HtmlMetrics {
        html_bytes: visit.html.doc_bytes,
        n_images: visit.html.image_refs.len() as u64,
        n_scripts: visit.html.script_refs.len() as u64,
        image_bytes: visit.html.image_refs.iter().map(|r| r.bytes).sum(),
        script_bytes: visit.html.script_refs.iter().map(|r| r.bytes).sum(),
    };
    (b, h)
}

/// Whole-run totals: per-visit sums, except `tp_domains` which counts
/// distinct third-party domains across the run and `cookies` which is the
/// jar size.
pub fn run_totals(run: &CrawlRun, rules: &SuffixRules) -> (BrowsingMetrics, HtmlMetrics) {
    let mut b = BrowsingMetrics::default();
    let mut h = HtmlMetrics::default();
    let mut tp_entities: BTreeSet<String> = BTreeSet::new();
    for visit in &run.visits {
        let (vb, vh) = visit_metrics(visit, rules);
        b.fp_requests += vb.fp_requests;
        b.tp_requests += vb.tp_requests;
        b.bytes_total += vb.bytes_total;
        h.html_bytes += vh.html_bytes;
        h.n_images += vh.n_images;
        h.n_scripts += vh.n_scripts;
        h.image_bytes += vh.image_bytes;
        h.script_bytes += vh.script_bytes;
        for req in &visit.requests {
            if rules.classify_party(&req.host, &visit.site_host).is_third() {
                tp_entities.insert(rules.entity(&req.host));
            }
        }
    }
    b.tp_domains = tp_entities.len() as u64;
    b.cookies = run.cookie_jar.len() as u64;
    (b, h)
}

pub type VisitKey = (String, u32, String);
pub type RunKey = (String, u32);

/// Per-site, per-run, per-configuration metric values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    /// (config_id, run_index, site) -> per-visit metrics.
    pub visit_rows: BTreeMap<VisitKey, (BrowsingMetrics, HtmlMetrics)>,
    /// (config_id, run_index) -> run totals, including the cookie count.
    pub run_rows: BTreeMap<RunKey, (BrowsingMetrics, HtmlMetrics)>,
}

impl MetricTable {
    pub fn build(runs: &[CrawlRun], rules: &SuffixRules) -> Result<MetricTable> {
        let mut table = MetricTable::default();
        for run in runs {
            let run_key = (run.config_id.clone(), run.run_index);
            if table.run_rows.contains_key(&run_key) {
                return Err(Error::invalid(format!(
                    "duplicate run ({}, {})",
                    run_key.0, run_key.1
                )));
            }
            for visit in &run.visits {
                let key = (run.config_id.clone(), run.run_index, visit.site.clone());
                if table
                    .visit_rows
                    .insert(key.clone(), visit_metrics(visit, rules))
                    .is_some()
                {
                    return Err(Error::invalid(format!(
                        "duplicate visit row ({}, {}, {})",
                        key.0, key.1, key.2
                    )));
                }
            }
            table.run_rows.insert(run_key, run_totals(run, rules));
        }
        Ok(table)
    }

    pub fn config_ids(&self) -> BTreeSet<String> {
        self.run_rows.keys().map(|(c, _)| c.clone()).collect()
    }

    pub fn runs_for(&self, config_id: &str) -> Vec<u32> {
        self.run_rows
            .keys()
            .filter(|(c, _)| c == config_id)
            .map(|(_, r)| *r)
            .collect()
    }
}

/// Mean of one site's metric across the runs where the site appears.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteMean {
    pub mean: f64,
    /// Number of runs the site was present in.
    pub coverage: u32,
}

/// Per-site means of `metric` over all runs of `config_id`. Sites missing
/// from some runs are averaged over the runs where they are present.
pub fn per_site_means(
    table: &MetricTable,
    config_id: &str,
    metric: Metric,
) -> Result<BTreeMap<String, SiteMean>> {
    if metric.is_run_level() {
        return Err(Error::invalid(format!(
            "metric {} is run-level and has no per-site values",
            metric.name()
        )));
    }
    let n_runs = table.runs_for(config_id).len();
    if n_runs == 0 {
        return Err(Error::invalid(format!(
            "no runs for configuration {config_id:?}"
        )));
    }
    let mut acc: BTreeMap<String, (f64, u32)> = BTreeMap::new();
    for ((cfg, _run, site), (b, h)) in &table.visit_rows {
        if cfg != config_id {
            continue;
        }
        let entry = acc.entry(site.clone()).or_insert((0.0, 0));
        entry.0 += metric.value(b, h);
        entry.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(site, (sum, count))| {
            (
                site,
                SiteMean {
                    mean: sum / count as f64,
                    coverage: count,
                },
            )
        })
        .collect())
}

/// Per-run totals of `metric` for one configuration, in run-index order.
/// This is the sample the run-level comparison (and the cookie metric) uses.
pub fn run_total_values(table: &MetricTable, config_id: &str, metric: Metric) -> Vec<f64> {
    table
        .run_rows
        .iter()
        .filter(|((cfg, _), _)| cfg == config_id)
        .map(|(_, (b, h))| metric.value(b, h))
        .collect()
}

const CSV_HEADER: &str = "config_id,run_index,scope,site,fp_requests,tp_requests,tp_domains,cookies,bytes_total,html_bytes,n_images,n_scripts,image_bytes,script_bytes";

/// Write the table as CSV. Visit rows carry `scope=visit` and an empty
/// cookie column; run rows carry `scope=run` totals. `comment`, when given,
/// is emitted first as `# ...` lines.
pub fn write_metrics_csv(table: &MetricTable, path: &Path, comment: Option<&str>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_metrics_csv_to(table, &mut out, comment).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_metrics_csv_to(
    table: &MetricTable,
    out: &mut impl Write,
    comment: Option<&str>,
) -> std::io::Result<()> {
    if let Some(comment) = comment {
        for line in comment.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    writeln!(out, "{CSV_HEADER}")?;
    for ((cfg, run, site), (b, h)) in &table.visit_rows {
        writeln!(
            out,
            "{},{},visit,{},{},{},{},,{},{},{},{},{},{}",
            csv_field(cfg),
            run,
            csv_field(site),
            b.fp_requests,
            b.tp_requests,
            b.tp_domains,
            b.bytes_total,
            h.html_bytes,
            h.n_images,
            h.n_scripts,
            h.image_bytes,
            h.script_bytes,
        )?;
    }
    for ((cfg, run), (b, h)) in &table.run_rows {
        writeln!(
            out,
            "{},{},run,,{},{},{},{},{},{},{},{},{},{}",
            csv_field(cfg),
            run,
            b.fp_requests,
            b.tp_requests,
            b.tp_domains,
            b.cookies,
            b.bytes_total,
            h.html_bytes,
            h.n_images,
            h.n_scripts,
            h.image_bytes,
            h.script_bytes,
        )?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct MetricRowWire {
    config_id: String,
    run_index: u32,
    scope: String,
    #[serde(default)]
    site: String,
    fp_requests: u64,
    tp_requests: u64,
    tp_domains: u64,
    #[serde(default)]
    cookies: u64,
    bytes_total: u64,
    html_bytes: u64,
    n_images: u64,
    n_scripts: u64,
    image_bytes: u64,
    script_bytes: u64,
}

/// Write the table in the line-delimited structured-text form (one JSON
/// record per row, same fields as the CSV).
pub fn write_metrics_jsonl(table: &MetricTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    let mut push = |row: &MetricRowWire| {
        out.push_str(&serde_json::to_string(row).expect("metric row serializes"));
        out.push('\n');
    };
    for ((cfg, run, site), (b, h)) in &table.visit_rows {
        push(&MetricRowWire {
            config_id: cfg.clone(),
            run_index: *run,
            scope: "visit".to_string(),
            site: site.clone(),
            fp_requests: b.fp_requests,
            tp_requests: b.tp_requests,
            tp_domains: b.tp_domains,
            cookies: 0,
            bytes_total: b.bytes_total,
            html_bytes: h.html_bytes,
            n_images: h.n_images,
            n_scripts: h.n_scripts,
            image_bytes: h.image_bytes,
            script_bytes: h.script_bytes,
        });
    }
    for ((cfg, run), (b, h)) in &table.run_rows {
        push(&MetricRowWire {
            config_id: cfg.clone(),
            run_index: *run,
            scope: "run".to_string(),
            site: String::new(),
            fp_requests: b.fp_requests,
            tp_requests: b.tp_requests,
            tp_domains: b.tp_domains,
            cookies: b.cookies,
            bytes_total: b.bytes_total,
            html_bytes: h.html_bytes,
            n_images: h.n_images,
            n_scripts: h.n_scripts,
            image_bytes: h.image_bytes,
            script_bytes: h.script_bytes,
        });
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_metrics_jsonl(path: &Path) -> Result<MetricTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = MetricTable::default();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: MetricRowWire = serde_json::from_str(line).map_err(|e| Error::LogSchema {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let b = BrowsingMetrics {
            fp_requests: row.fp_requests,
            tp_requests: row.tp_requests,
            tp_domains: row.tp_domains,
            cookies: row.cookies,
            bytes_total: row.bytes_total,
        };
        let h = HtmlMetrics {
            html_bytes: row.html_bytes,
            n_images: row.n_images,
            n_scripts: row.n_scripts,
            image_bytes: row.image_bytes,
            script_bytes: row.script_bytes,
        };
        match row.scope.as_str() {
            "visit" => {
                table
                    .visit_rows
                    .insert((row.config_id, row.run_index, row.site), (b, h));
            }
            "run" => {
                table.run_rows.insert((row.config_id, row.run_index), (b, h));
            }
            other => {
                return Err(Error::LogSchema {
                    line: idx + 1,
                    message: format!("unknown scope {other:?}"),
                });
            }
        }
    }
    Ok(table)
}

/// Read a metrics CSV written by [`write_metrics_csv`]. Leading `#` comment
/// lines are skipped.
pub fn read_metrics_csv(path: &Path) -> Result<MetricTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut content = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('#') {
            continue;
        }
        content.push_str(&line);
        content.push('\n');
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(content.as_bytes());
    let bad = |msg: String| Error::config(path, msg);
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(bad(format!("unexpected metrics csv header: {headers:?}")));
    }
    let mut table = MetricTable::default();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let get = |i: usize| record.get(i).unwrap_or_default().to_string();
        let num = |i: usize| -> Result<u64> {
            let field = record.get(i).unwrap_or_default();
            if field.is_empty() {
                return Ok(0);
            }
            field
                .parse::<u64>()
                .map_err(|e| bad(format!("bad number {field:?}: {e}")))
        };
        let config = get(0);
        let run: u32 = get(1)
            .parse()
            .map_err(|e| bad(format!("bad run_index: {e}")))?;
        let scope = get(2);
        let b = BrowsingMetrics {
            fp_requests: num(4)?,
            tp_requests: num(5)?,
            tp_domains: num(6)?,
            cookies: num(7)?,
            bytes_total: num(8)?,
        };
        let h = HtmlMetrics {
            html_bytes: num(9)?,
            n_images: num(10)?,
            n_scripts: num(11)?,
            image_bytes: num(12)?,
            script_bytes: num(13)?,
        };
        match scope.as_str() {
            "visit" => {
                table.visit_rows.insert((config, run, get(3)), (b, h));
            }
            "run" => {
                table.run_rows.insert((config, run), (b, h));
            }
            other => return Err(bad(format!("unknown scope {other:?}"))),
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CookieEntry, HtmlSummary, RequestRecord, ResourceClass, ResourceRef, SiteVisit};

    fn rules() -> SuffixRules {
        SuffixRules::parse("com\nnet\norg").unwrap()
    }

    fn req(host: &str, bytes: u64, class: ResourceClass) -> RequestRecord {
        RequestRecord {
            url: format!("https://{host}/r"),
            host: host.to_string(),
            bytes,
            resource_class: class,
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
    fn counts_first_and_third_party() {
        let v = visit(
            "example.com",
            vec![
                req("example.com", 10, ResourceClass::Document),
                req("www.example.com", 10, ResourceClass::Image),
                req("static.example.com", 10, ResourceClass::Script),
                req("px.tracker.net", 5, ResourceClass::Script),
                req("beacon.tracker.net", 5, ResourceClass::Image),
            ],
        );
        let (b, _) = visit_metrics(&v, &rules());
        assert_eq!(b.fp_requests, 3);
        assert_eq!(b.tp_requests, 2);
        assert_eq!(b.tp_domains, 1);
        assert_eq!(b.bytes_total, 40);
        assert_eq!(b.cookies, 0);
    }

    #[test]
    fn no_third_parties_yields_zeros() {
        let v = visit("example.com", vec![req("example.com", 10, ResourceClass::Document)]);
        let (b, _) = visit_metrics(&v, &rules());
        assert_eq!(b.tp_requests, 0);
        assert_eq!(b.tp_domains, 0);
    }

    #[test]
    fn same_etld1_hosts_count_one_domain() {
        let v = visit(
            "example.com",
            vec![
                req("a.cdn.net", 1, ResourceClass::Image),
                req("b.cdn.net", 1, ResourceClass::Image),
            ],
        );
        let (b, _) = visit_metrics(&v, &rules());
        assert_eq!(b.tp_requests, 2);
        assert_eq!(b.tp_domains, 1);
    }

    #[test]
    fn html_metrics_sum_refs() {
        let mut v = visit("example.com", vec![]);
        v.html = HtmlSummary {
            doc_bytes: 1234,
            image_refs: vec![
                ResourceRef { url: "https://example.com/a.png".into(), bytes: 10 },
                ResourceRef { url: "https://example.com/b.png".into(), bytes: 20 },
            ],
            script_refs: vec![ResourceRef { url: "https://t.net/x.js".into(), bytes: 40 }],
        };
        let (_, h) = visit_metrics(&v, &rules());
        assert_eq!(h.html_bytes, 1234);
        assert_eq!(h.n_images, 2);
        assert_eq!(h.n_scripts, 1);
        assert_eq!(h.image_bytes, 30);
        assert_eq!(h.script_bytes, 40);
    }

    fn two_visit_run() -> CrawlRun {
        let mut run = CrawlRun::new("bare", 0);
        run.visits.push(visit(
            "a.com",
            vec![
                req("a.com", 1, ResourceClass::Document),
                req("a.com", 1, ResourceClass::Image),
                req("a.com", 1, ResourceClass::Image),
                req("x.shared.net", 1, ResourceClass::Script),
                req("y.shared.net", 1, ResourceClass::Script),
            ],
        ));
        run.visits.push(visit(
            "b.com",
            vec![
                req("b.com", 1, ResourceClass::Document),
                req("b.com", 1, ResourceClass::Image),
                req("b.com", 1, ResourceClass::Image),
                req("z.shared.net", 1, ResourceClass::Script),
                req("w.shared.net", 1, ResourceClass::Script),
            ],
        ));
        run.cookie_jar.push(CookieEntry {
            domain: "shared.net".into(),
            name: "uid".into(),
            third_party_origin: true,
        });
        run
    }

    #[test]
    fn run_totals_union_domains() {
        let run = two_visit_run();
        let (b, _) = run_totals(&run, &rules());
        assert_eq!(b.fp_requests, 6);
        assert_eq!(b.tp_requests, 4);
        assert_eq!(b.tp_domains, 1, "shared tracker counts once per run");
        assert_eq!(b.cookies, 1);
    }

    #[test]
    fn run_totals_empty_run() {
        let run = CrawlRun::new("bare", 0);
        let (b, h) = run_totals(&run, &rules());
        assert_eq!(b, BrowsingMetrics::default());
        assert_eq!(h, HtmlMetrics::default());
    }

    #[test]
    fn run_totals_match_hand_enumeration() {
        // 3-site corpus checked against values enumerated by hand.
        let mut run = CrawlRun::new("bare", 0);
        run.visits.push(visit(
            "one.com",
            vec![
                req("one.com", 100, ResourceClass::Document),
                req("t1.net", 10, ResourceClass::Script),
                req("t2.net", 20, ResourceClass::Image),
            ],
        ));
        run.visits.push(visit(
            "two.com",
            vec![
                req("two.com", 200, ResourceClass::Document),
                req("cdn.t1.net", 30, ResourceClass::Script),
            ],
        ));
        run.visits.push(visit(
            "three.com",
            vec![req("three.com", 300, ResourceClass::Document)],
        ));
        let (b, _) = run_totals(&run, &rules());
        assert_eq!(
            (b.fp_requests, b.tp_requests, b.tp_domains, b.bytes_total),
            (3, 3, 2, 660)
        );
    }

    #[test]
    fn additivity_of_run_totals() {
        let run = two_visit_run();
        let r = rules();
        let (rb, rh) = run_totals(&run, &r);
        let mut fp = 0;
        let mut tp = 0;
        let mut bytes = 0;
        let mut html = HtmlMetrics::default();
        for v in &run.visits {
            let (vb, vh) = visit_metrics(v, &r);
            fp += vb.fp_requests;
            tp += vb.tp_requests;
            bytes += vb.bytes_total;
            html.html_bytes += vh.html_bytes;
            html.n_images += vh.n_images;
            html.n_scripts += vh.n_scripts;
            html.image_bytes += vh.image_bytes;
            html.script_bytes += vh.script_bytes;
        }
        assert_eq!((rb.fp_requests, rb.tp_requests, rb.bytes_total), (fp, tp, bytes));
        assert_eq!(rh, html);
    }

    #[test]
    fn per_site_means_single_run_equals_values() {
        let run = two_visit_run();
        let table = MetricTable::build(std::slice::from_ref(&run), &rules()).unwrap();
        let means = per_site_means(&table, "bare", Metric::TpRequests).unwrap();
        assert_eq!(means["https://a.com/"].mean, 2.0);
        assert_eq!(means["https://a.com/"].coverage, 1);
    }

    #[test]
    fn per_site_means_averages_over_runs() {
        let mut run0 = CrawlRun::new("bare", 0);
        run0.visits.push(visit(
            "a.com",
            vec![
                req("t1.net", 1, ResourceClass::Script),
                req("t2.net", 1, ResourceClass::Script),
            ],
        ));
        let mut run1 = CrawlRun::new("bare", 1);
        run1.visits.push(visit(
            "a.com",
            vec![
                req("t1.net", 1, ResourceClass::Script),
                req("t2.net", 1, ResourceClass::Script),
                req("t3.net", 1, ResourceClass::Script),
                req("t4.net", 1, ResourceClass::Script),
            ],
        ));
        let table = MetricTable::build(&[run0, run1], &rules()).unwrap();
        let means = per_site_means(&table, "bare", Metric::TpRequests).unwrap();
        assert_eq!(means["https://a.com/"].mean, 3.0);
        assert_eq!(means["https://a.com/"].coverage, 2);
    }

    #[test]
    fn per_site_means_zero_runs_is_error() {
        let table = MetricTable::default();
        assert!(per_site_means(&table, "missing", Metric::TpRequests).is_err());
    }

    #[test]
    fn cookies_metric_is_run_level_only() {
        let run = two_visit_run();
        let table = MetricTable::build(std::slice::from_ref(&run), &rules()).unwrap();
        assert!(per_site_means(&table, "bare", Metric::Cookies).is_err());
        assert_eq!(run_total_values(&table, "bare", Metric::Cookies), vec![1.0]);
    }

    #[test]
    fn csv_round_trip() {
        let run = two_visit_run();
        let table = MetricTable::build(std::slice::from_ref(&run), &rules()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        write_metrics_csv(&table, &path, Some("manifest abc123")).unwrap();
        let back = read_metrics_csv(&path).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn jsonl_round_trip() {
        let run = two_visit_run();
        let table = MetricTable::build(std::slice::from_ref(&run), &rules()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        write_metrics_jsonl(&table, &path).unwrap();
        let back = read_metrics_jsonl(&path).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in BROWSING_METRICS.iter().chain(HTML_METRICS.iter()) {
            assert_eq!(Metric::parse(m.name()).unwrap(), *m);
        }
        assert!(Metric::parse("nope").is_err());
        assert!(!Metric::BytesTotal.is_stable());
        assert!(Metric::TpRequests.is_stable());
    }
}
