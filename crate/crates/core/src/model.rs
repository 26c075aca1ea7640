//! Crawl-log data model and its line-delimited log format.
//!
//! A log file holds one JSON record per line. Record kinds: `run_header`
//! (opens a run), `visit` and `cookie` (attach to the most recent header).
//! `schema_version` is fixed at 1.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceClass {
    Document,
    Script,
    Image,
    Stylesheet,
    Other,
}

/// One logged HTTP request inside a page load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub url: String,
    pub host: String,
    pub bytes: u64,
    pub resource_class: ResourceClass,
    pub sets_cookie: bool,
    pub reads_cookie: bool,
}

/// A resource referenced by the rendered HTML.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceRef {
    pub url: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HtmlSummary {
    pub doc_bytes: u64,
    pub image_refs: Vec<ResourceRef>,
    pub script_refs: Vec<ResourceRef>,
}

/// All requests and the HTML summary for one page load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteVisit {
    pub site: String,
    pub site_host: String,
    pub requests: Vec<RequestRecord>,
    pub html: HtmlSummary,
}

/// Entry in the end-of-run cookie jar. `third_party_origin` records whether
/// the domain was a third party when the cookie was set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CookieEntry {
    pub domain: String,
    pub name: String,
    pub third_party_origin: bool,
}

/// One stateful pass over a site list under one browser configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrawlRun {
    pub config_id: String,
    pub run_index: u32,
    pub visits: Vec<SiteVisit>,
    pub cookie_jar: Vec<CookieEntry>,
}

impl CrawlRun {
    pub fn new(config_id: impl Into<String>, run_index: u32) -> Self {
        CrawlRun {
            config_id: config_id.into(),
            run_index,
            visits: Vec::new(),
            cookie_jar: Vec::new(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogRecord {
    RunHeader {
        schema_version: u32,
        config_id: String,
        run_index: u32,
    },
    Visit {
        site: String,
        site_host: String,
        requests: Vec<RequestRecord>,
        html: HtmlSummary,
    },
    Cookie {
        domain: String,
        name: String,
        third_party_origin: bool,
    },
}

// Reading goes through concrete per-kind structs instead of the tagged enum:
// the enum would buffer the payload and lose field paths in error messages.
#[derive(Deserialize)]
struct KindProbe {
    kind: String,
}

#[derive(Deserialize)]
struct RunHeaderWire {
    schema_version: u32,
    config_id: String,
    run_index: u32,
}

#[derive(Deserialize)]
struct VisitWire {
    site: String,
    site_host: String,
    requests: Vec<RequestRecord>,
    html: HtmlSummary,
}

#[derive(Deserialize)]
struct CookieWire {
    domain: String,
    name: String,
    third_party_origin: bool,
}

fn parse_record<T: serde::de::DeserializeOwned>(line: &str, line_no: usize) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(line);
    serde_path_to_error::deserialize(&mut de).map_err(|e| Error::LogSchema {
        line: line_no,
        message: format!("field {}: {}", e.path(), e.inner()),
    })
}

/// Read a crawl log, validating the schema. Runs come back in file order;
/// visits keep their in-file order (statefulness matters downstream).
pub fn read_crawl_log(path: &Path) -> Result<Vec<CrawlRun>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_crawl_log_from(BufReader::new(file))
}

pub fn read_crawl_log_from(reader: impl BufRead) -> Result<Vec<CrawlRun>> {
    let mut runs: Vec<CrawlRun> = Vec::new();
    let mut seen_runs: HashSet<(String, u32)> = HashSet::new();
    let mut sites_in_run: HashSet<String> = HashSet::new();
    let mut cookies_in_run: HashSet<(String, String)> = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::LogSchema {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let probe: KindProbe =
            serde_json::from_str(&line).map_err(|e| Error::LogSchema {
                line: line_no,
                message: e.to_string(),
            })?;
        match probe.kind.as_str() {
            "run_header" => {
                let RunHeaderWire {
                    schema_version,
                    config_id,
                    run_index,
                } = parse_record(&line, line_no)?;
                if schema_version != SCHEMA_VERSION {
                    return Err(Error::LogSchema {
                        line: line_no,
                        message: format!(
                            "unsupported schema_version {schema_version}, expected {SCHEMA_VERSION}"
                        ),
                    });
                }
                if !seen_runs.insert((config_id.clone(), run_index)) {
                    return Err(Error::LogSchema {
                        line: line_no,
                        message: format!("duplicate run ({config_id}, {run_index})"),
                    });
                }
                sites_in_run.clear();
                cookies_in_run.clear();
                runs.push(CrawlRun::new(config_id, run_index));
            }
            "visit" => {
                let VisitWire {
                    site,
                    site_host,
                    requests,
                    html,
                } = parse_record(&line, line_no)?;
                let run = runs.last_mut().ok_or_else(|| Error::LogSchema {
                    line: line_no,
                    message: "visit before any run_header".to_string(),
                })?;
                validate_visit(&site, &site_host, &requests, line_no)?;
                if !sites_in_run.insert(site.clone()) {
                    return Err(Error::LogSchema {
                        line: line_no,
                        message: format!(
                            "duplicate visit to {site} in run ({}, {})",
                            run.config_id, run.run_index
                        ),
                    });
                }
                run.visits.push(SiteVisit {
                    site,
                    site_host,
                    requests,
                    html,
                });
            }
            "cookie" => {
                let CookieWire {
                    domain,
                    name,
                    third_party_origin,
                } = parse_record(&line, line_no)?;
                let run = runs.last_mut().ok_or_else(|| Error::LogSchema {
                    line: line_no,
                    message: "cookie before any run_header".to_string(),
                })?;
                if !cookies_in_run.insert((domain.clone(), name.clone())) {
                    return Err(Error::LogSchema {
                        line: line_no,
                        message: format!("duplicate cookie ({domain}, {name})"),
                    });
                }
                run.cookie_jar.push(CookieEntry {
                    domain,
                    name,
                    third_party_origin,
                });
            }
            other => {
                return Err(Error::LogSchema {
                    line: line_no,
                    message: format!("unknown record kind {other:?}"),
                });
            }
        }
    }
    Ok(runs)
}

fn validate_visit(
    site: &str,
    site_host: &str,
    requests: &[RequestRecord],
    line_no: usize,
) -> Result<()> {
    let parsed = url::Url::parse(site).map_err(|e| Error::LogSchema {
        line: line_no,
        message: format!("field site: invalid url {site:?}: {e}"),
    })?;
    let url_host = parsed.host_str().unwrap_or_default();
    if !url_host.eq_ignore_ascii_case(site_host) {
        return Err(Error::LogSchema {
            line: line_no,
            message: format!("field site_host: {site_host:?} does not match site url host {url_host:?}"),
        });
    }
    for req in requests {
        let parsed = url::Url::parse(&req.url).map_err(|e| Error::LogSchema {
            line: line_no,
            message: format!("field url: invalid url {:?}: {e}", req.url),
        })?;
        let url_host = parsed.host_str().unwrap_or_default();
        let expect = req.host.strip_prefix('[').and_then(|h| h.strip_suffix(']'));
        let matches = url_host.eq_ignore_ascii_case(&req.host)
            || expect.is_some_and(|h| url_host.eq_ignore_ascii_case(h))
            || url_host.eq_ignore_ascii_case(&format!("[{}]", req.host));
        if !matches {
            return Err(Error::LogSchema {
                line: line_no,
                message: format!(
                    "field host: {:?} does not match url host {url_host:?}",
                    req.host
                ),
            });
        }
    }
    Ok(())
}

/// Write runs in the line-delimited format. `read(write(x)) == x`.
pub fn write_crawl_log(runs: &[CrawlRun], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_crawl_log_to(runs, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_crawl_log_to(runs: &[CrawlRun], out: &mut impl Write) -> std::io::Result<()> {
    for run in runs {
        let header = LogRecord::RunHeader {
            schema_version: SCHEMA_VERSION,
            config_id: run.config_id.clone(),
            run_index: run.run_index,
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for visit in &run.visits {
            let record = LogRecord::Visit {
                site: visit.site.clone(),
                site_host: visit.site_host.clone(),
                requests: visit.requests.clone(),
                html: visit.html.clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&record)?)?;
        }
        for cookie in &run.cookie_jar {
            let record = LogRecord::Cookie {
                domain: cookie.domain.clone(),
                name: cookie.name.clone(),
                third_party_origin: cookie.third_party_origin,
            };
            writeln!(out, "{}", serde_json::to_string(&record)?)?;
        }
    }
    Ok(())
}
