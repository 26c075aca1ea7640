//! Experiment manifests, technique rosters, synthetic indices and the
//! end-to-end report pipeline.
//!
//! A manifest fully determines every report byte: the bundle embeds a hash
//! over the manifest and all referenced input files, and rerunning the same
//! manifest reproduces the bundle bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::blocker::{
    self, BlockerSpec, CookiePolicyKind, HeuristicState, PartyScope, PolicyBlocker,
};
use crate::error::{Error, Result};
use crate::footprint::{self, EntityMap, GroupingMethod};
use crate::metrics::{self, Metric, MetricTable};
use crate::model::CrawlRun;
use crate::overlap::{self, ResourceKind};
use crate::psl::SuffixRules;
use crate::stats::{self, Direction, Grouping};
use crate::synth::{self, EcosystemConfig};

/// Browsing metrics entering the protection index. Bytes are excluded as an
/// unstable metric.
pub const DEFAULT_PROTECTION_METRICS: [Metric; 4] = [
    Metric::FpRequests,
    Metric::TpRequests,
    Metric::TpDomains,
    Metric::Cookies,
];

/// HTML metrics entering the quality index. Page size is excluded: it barely
/// moves under any technique.
pub const DEFAULT_QUALITY_METRICS: [Metric; 4] = [
    Metric::NImages,
    Metric::NScripts,
    Metric::ImageBytes,
    Metric::ScriptBytes,
];

/// Per-technique mean of metric totals normalized by the bare totals.
/// 1.0 means indistinguishable from the unprotected browser.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticIndex {
    pub config_id: String,
    pub protection_index: f64,
    pub quality_index: f64,
}

/// Compute synthetic indices from run-total means. Errors when the bare
/// configuration has a zero total for a metric in use, naming the metric.
pub fn synthetic_indices(
    table: &MetricTable,
    bare_id: &str,
    protection_metrics: &[Metric],
    quality_metrics: &[Metric],
) -> Result<Vec<SyntheticIndex>> {
    let configs = table.config_ids();
    if !configs.contains(bare_id) {
        return Err(Error::invalid(format!(
            "bare configuration {bare_id:?} not present in metric table"
        )));
    }
    let mean_total = |config: &str, metric: Metric| -> f64 {
        let values = metrics::run_total_values(table, config, metric);
        values.iter().sum::<f64>() / values.len() as f64
    };
    for metric in protection_metrics.iter().chain(quality_metrics) {
        if mean_total(bare_id, *metric) == 0.0 {
            return Err(Error::invalid(format!(
                "bare total for metric {} is zero; cannot normalize",
                metric.name()
            )));
        }
    }
    let mut indices = Vec::new();
    for config in configs {
        let ratio_mean = |metrics_list: &[Metric]| -> f64 {
            let sum: f64 = metrics_list
                .iter()
                .map(|m| mean_total(&config, *m) / mean_total(bare_id, *m))
                .sum();
            sum / metrics_list.len() as f64
        };
        indices.push(SyntheticIndex {
            config_id: config.clone(),
            protection_index: ratio_mean(protection_metrics),
            quality_index: ratio_mean(quality_metrics),
        });
    }
    Ok(indices)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_metrics")]
    metrics: Vec<String>,
    #[serde(default)]
    toolkit_version: Option<String>,
    data: DataSection,
    blockers: BlockersSection,
    #[serde(default)]
    footprint: FootprintSection,
    #[serde(default)]
    overlap: OverlapSection,
    #[serde(default)]
    rank: RankSection,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_metrics() -> Vec<String> {
    vec![
        "fp_requests".into(),
        "tp_requests".into(),
        "tp_domains".into(),
        "cookies".into(),
    ]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    #[serde(default)]
    synth_config: Option<PathBuf>,
    #[serde(default = "default_runs")]
    runs: u32,
    #[serde(default)]
    log: Option<PathBuf>,
    #[serde(default = "default_bare_id")]
    bare_id: String,
}

fn default_runs() -> u32 {
    10
}

fn default_bare_id() -> String {
    synth::BARE_CONFIG_ID.to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockersSection {
    roster: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FootprintSection {
    #[serde(default = "default_method")]
    method: String,
    #[serde(default)]
    adns: Option<PathBuf>,
    #[serde(default)]
    cdn: Option<PathBuf>,
}

fn default_method() -> String {
    "adns".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverlapSection {
    #[serde(default = "default_kind")]
    kind: String,
}

fn default_kind() -> String {
    "domains".to_string()
}

impl Default for OverlapSection {
    fn default() -> Self {
        OverlapSection {
            kind: default_kind(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RankSection {
    #[serde(default = "default_direction")]
    direction: String,
    #[serde(default = "default_grouping")]
    grouping: String,
}

impl Default for RankSection {
    fn default() -> Self {
        RankSection {
            direction: default_direction(),
            grouping: default_grouping(),
        }
    }
}

fn default_direction() -> String {
    "lower-is-better".to_string()
}

fn default_grouping() -> String {
    "anchor".to_string()
}

impl Default for FootprintSection {
    fn default() -> Self {
        FootprintSection {
            method: default_method(),
            adns: None,
            cdn: None,
        }
    }
}

/// A fully resolved experiment: data source, techniques, analysis settings
/// and the hash covering the manifest plus every referenced input file.
#[derive(Debug)]
pub struct ExperimentManifest {
    pub seed: Option<u64>,
    pub alpha: f64,
    pub metrics: Vec<Metric>,
    pub data: DataSource,
    pub bare_id: String,
    pub blockers: Vec<RosterEntry>,
    pub footprint_method: GroupingMethod,
    pub entity_map: EntityMap,
    pub overlap_kind: ResourceKind,
    pub direction: Direction,
    pub grouping: Grouping,
    pub hash: String,
}

#[derive(Debug)]
pub enum DataSource {
    Synth { config: EcosystemConfig, runs: u32 },
    Log { path: PathBuf },
}

/// One blocker from the roster, with training configuration.
#[derive(Debug, Clone)]
pub struct RosterEntry {
    pub spec: BlockerSpec,
    pub training_passes: u32,
    /// Unsupported filter lines skipped per rule list.
    pub skipped_lines: Vec<(String, usize)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RosterFile {
    #[serde(rename = "blocker")]
    blockers: Vec<RosterBlocker>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RosterBlocker {
    id: String,
    #[serde(default = "default_policy")]
    policy: String,
    #[serde(default)]
    rule_lists: Vec<PathBuf>,
    #[serde(default = "default_scope")]
    party_scope: String,
    #[serde(default = "default_cookie_policy")]
    cookie_policy: String,
    #[serde(default)]
    optout_domains: Vec<String>,
    #[serde(default)]
    heuristic: bool,
    #[serde(default = "default_threshold")]
    heuristic_threshold: u32,
    #[serde(default)]
    training_passes: u32,
}

fn default_policy() -> String {
    "noop".to_string()
}

fn default_scope() -> String {
    "third-party".to_string()
}

fn default_cookie_policy() -> String {
    "allow-all".to_string()
}

fn default_threshold() -> u32 {
    HeuristicState::DEFAULT_THRESHOLD
}

fn read_input(path: &Path, hasher: &mut Sha256) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    hasher.update(path.file_name().map(|n| n.as_encoded_bytes()).unwrap_or_default());
    hasher.update([0u8]);
    hasher.update(&bytes);
    hasher.update([0u8]);
    Ok(bytes)
}

/// Parse a roster file into blocker specs, resolving rule-list paths
/// relative to the roster and folding their bytes into `hasher`.
pub fn load_roster(path: &Path, hasher: &mut Sha256) -> Result<Vec<RosterEntry>> {
    let bytes = read_input(path, hasher)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::config(path, e))?;
    let parsed: RosterFile = toml::from_str(&text).map_err(|e| Error::config(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    let mut seen_ids = std::collections::BTreeSet::new();
    for rb in parsed.blockers {
        if !seen_ids.insert(rb.id.clone()) {
            return Err(Error::config(path, format!("duplicate blocker id {:?}", rb.id)));
        }
        let policy = match rb.policy.as_str() {
            "noop" => PolicyBlocker::NoOp,
            "block-all-third-party" => PolicyBlocker::BlockAllThirdParty,
            "block-all-scripts" => PolicyBlocker::BlockAllScripts,
            other => {
                return Err(Error::config(path, format!("unknown policy {other:?}")));
            }
        };
        let party_scope = match rb.party_scope.as_str() {
            "third-party" => PartyScope::ThirdPartyOnly,
            "all" => PartyScope::All,
            other => {
                return Err(Error::config(path, format!("unknown party_scope {other:?}")));
            }
        };
        let cookie_kind = match rb.cookie_policy.as_str() {
            "allow-all" => CookiePolicyKind::AllowAll,
            "block-third-party" => CookiePolicyKind::BlockThirdParty,
            "block-third-party-except-visited" => CookiePolicyKind::BlockThirdPartyExceptVisited,
            "opt-out" => CookiePolicyKind::OptOutCookies,
            other => {
                return Err(Error::config(path, format!("unknown cookie_policy {other:?}")));
            }
        };
        if cookie_kind != CookiePolicyKind::OptOutCookies && !rb.optout_domains.is_empty() {
            return Err(Error::config(
                path,
                format!(
                    "blocker {:?}: optout_domains requires cookie_policy = \"opt-out\"",
                    rb.id
                ),
            ));
        }
        let mut spec = BlockerSpec {
            id: rb.id.clone(),
            policy,
            ..Default::default()
        };
        spec.cookie_policy.kind = cookie_kind;
        spec.cookie_policy.optout_domains =
            rb.optout_domains.iter().map(|d| d.to_lowercase()).collect();
        let mut skipped_lines = Vec::new();
        for list_path in &rb.rule_lists {
            let resolved = base.join(list_path);
            let list_bytes = read_input(&resolved, hasher)?;
            let list_text = String::from_utf8(list_bytes).map_err(|e| Error::config(&resolved, e))?;
            let name = list_path.display().to_string();
            let parsed = blocker::parse_rule_list(&name, &list_text);
            let mut list = parsed.list;
            list.party_scope = party_scope;
            skipped_lines.push((name, parsed.skipped_lines));
            spec.rule_lists.push(list);
        }
        if rb.heuristic {
            spec.heuristic = Some(HeuristicState::new(rb.heuristic_threshold));
        }
        entries.push(RosterEntry {
            spec,
            training_passes: rb.training_passes,
            skipped_lines,
        });
    }
    Ok(entries)
}

/// Load and resolve a manifest. Referenced paths resolve relative to the
/// manifest's directory; their contents all enter the manifest hash.
pub fn load_manifest(path: &Path) -> Result<ExperimentManifest> {
    let mut hasher = Sha256::new();
    let bytes = read_input(path, &mut hasher)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::config(path, e))?;
    let parsed: ManifestFile = toml::from_str(&text).map_err(|e| Error::config(path, e))?;
    if let Some(version) = &parsed.toolkit_version {
        let current = env!("CARGO_PKG_VERSION");
        if version != current {
            return Err(Error::config(
                path,
                format!("manifest pins toolkit_version {version}, this binary is {current}"),
            ));
        }
    }
    let base = path.parent().unwrap_or(Path::new("."));

    let data = match (&parsed.data.synth_config, &parsed.data.log) {
        (Some(_), Some(_)) => {
            return Err(Error::config(path, "data: set either synth_config or log, not both"));
        }
        (Some(config_path), None) => {
            let resolved = base.join(config_path);
            let config_bytes = read_input(&resolved, &mut hasher)?;
            let config_text =
                String::from_utf8(config_bytes).map_err(|e| Error::config(&resolved, e))?;
            let mut config: EcosystemConfig =
                toml::from_str(&config_text).map_err(|e| Error::config(&resolved, e))?;
            if let Some(seed) = parsed.seed {
                config.seed = seed;
            }
            config.validate()?;
            DataSource::Synth {
                config,
                runs: parsed.data.runs,
            }
        }
        (None, Some(log_path)) => {
            let resolved = base.join(log_path);
            read_input(&resolved, &mut hasher)?;
            DataSource::Log { path: resolved }
        }
        (None, None) => {
            return Err(Error::config(path, "data: needs synth_config or log"));
        }
    };

    let blockers = load_roster(&base.join(&parsed.blockers.roster), &mut hasher)?;

    let mut entity_map = EntityMap::default();
    if let Some(adns) = &parsed.footprint.adns {
        let resolved = base.join(adns);
        read_input(&resolved, &mut hasher)?;
        entity_map.adns = EntityMap::load_adns_csv(&resolved)?;
    }
    if let Some(cdn) = &parsed.footprint.cdn {
        let resolved = base.join(cdn);
        read_input(&resolved, &mut hasher)?;
        entity_map.cdn_domains = EntityMap::load_cdn_csv(&resolved)?;
    }

    let mut manifest_metrics = Vec::new();
    for name in &parsed.metrics {
        manifest_metrics.push(Metric::parse(name)?);
    }

    let hash = hex_digest(hasher);
    Ok(ExperimentManifest {
        seed: parsed.seed,
        alpha: parsed.alpha,
        metrics: manifest_metrics,
        data,
        bare_id: parsed.data.bare_id,
        blockers,
        footprint_method: GroupingMethod::parse(&parsed.footprint.method)?,
        entity_map,
        overlap_kind: ResourceKind::parse(&parsed.overlap.kind)?,
        direction: Direction::parse(&parsed.rank.direction)?,
        grouping: Grouping::parse(&parsed.rank.grouping)?,
        hash,
    })
}

fn hex_digest(hasher: Sha256) -> String {
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

pub const REPORT_FILES: [&str; 6] = [
    "metrics.csv",
    "rank.csv",
    "footprint.csv",
    "overlap.csv",
    "indices.csv",
    "summary.txt",
];

#[derive(Debug)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub manifest_hash: String,
}

/// Run the full pipeline: obtain bare runs, simulate every blocker, compute
/// metrics, ranks, footprints, overlap and indices, and write the report
/// bundle to `out_dir`. Stages report their name on failure; on error no
/// partial bundle is left behind (everything is staged in a temp directory).
pub fn run_pipeline(
    manifest: &ExperimentManifest,
    rules: &SuffixRules,
    out_dir: &Path,
    force: bool,
) -> Result<ReportBundle> {
    let staging = tempfile::Builder::new()
        .prefix(".privmeter-report")
        .tempdir_in(out_dir.parent().unwrap_or(Path::new(".")))
        .map_err(|e| Error::io(out_dir, e))?;

    let bare_runs: Vec<CrawlRun> = match &manifest.data {
        DataSource::Synth { config, runs } => synth::generate(config, *runs)
            .map(|(runs, _)| runs)
            .map_err(|e| e.in_stage("synth"))?,
        DataSource::Log { path } => {
            let all = crate::model::read_crawl_log(path).map_err(|e| e.in_stage("ingest"))?;
            let bare: Vec<CrawlRun> = all
                .into_iter()
                .filter(|r| r.config_id == manifest.bare_id)
                .collect();
            if bare.is_empty() {
                return Err(Error::invalid(format!(
                    "log has no runs for bare configuration {:?}",
                    manifest.bare_id
                ))
                .in_stage("ingest"));
            }
            bare
        }
    };

    let mut ordered_bare = bare_runs;
    ordered_bare.sort_by_key(|r| r.run_index);

    // Simulate. Heuristic blockers are trained on the first bare run, then
    // applied with state carried across runs, mirroring a profile that is
    // never reinitialized.
    let mut protected: BTreeMap<String, Vec<CrawlRun>> = BTreeMap::new();
    for entry in &manifest.blockers {
        let mut spec = entry.spec.clone();
        if spec.heuristic.is_some() && entry.training_passes > 0 {
            spec = blocker::train_heuristic(&spec, &ordered_bare[0], entry.training_passes, rules)
                .map_err(|e| e.in_stage("simulate"))?;
        }
        let mut runs = Vec::new();
        for bare in &ordered_bare {
            runs.push(blocker::apply_blocker(&mut spec, bare, rules));
        }
        protected.insert(entry.spec.id.clone(), runs);
    }

    let mut all_runs = ordered_bare.clone();
    for runs in protected.values() {
        all_runs.extend(runs.iter().cloned());
    }
    let table = MetricTable::build(&all_runs, rules).map_err(|e| e.in_stage("metrics"))?;
    let header = format!("manifest_hash: {}", manifest.hash);
    metrics::write_metrics_csv(&table, &staging.path().join("metrics.csv"), Some(&header))
        .map_err(|e| e.in_stage("metrics"))?;

    // Rank every configured metric.
    let mut rank_csv = format!("# {header}\nmetric,config_id,mean,std,rank\n");
    let mut summary_ranks = String::new();
    for metric in &manifest.metrics {
        let assignment =
            rank_for_metric(&table, *metric, manifest).map_err(|e| e.in_stage("rank"))?;
        for (config, rank) in &assignment.ranks {
            let _ = writeln!(
                rank_csv,
                "{},{},{:.6},{:.6},{}",
                metric.name(),
                config,
                assignment.means[config],
                assignment.stds[config],
                rank
            );
        }
        let _ = writeln!(
            summary_ranks,
            "\n## KS rank on {}{}",
            metric.name(),
            if metric.is_stable() { "" } else { " (unstable metric)" }
        );
        for group in &assignment.groups {
            for config in group {
                let _ = writeln!(
                    summary_ranks,
                    "  rank {}  {:<24} mean {:>14.3} std {:>12.3}",
                    assignment.ranks[config], config, assignment.means[config], assignment.stds[config]
                );
            }
        }
        let _ = writeln!(summary_ranks, "  pairwise p-values:");
        for ((a, b), p) in &assignment.pairwise_p {
            let _ = writeln!(summary_ranks, "    {a} vs {b}: {p:.4}");
        }
    }
    write_text(&staging.path().join("rank.csv"), &rank_csv)?;

    // Footprint per configuration.
    let mut footprint_csv = format!(
        "# {header}\nconfig_id,method,n_third_parties,mean_tp_per_fp,top10_fp_coverage,adns_fallback_rate\n"
    );
    let mut summary_footprint = String::new();
    let mut by_config: BTreeMap<&str, Vec<&CrawlRun>> = BTreeMap::new();
    for run in &all_runs {
        by_config.entry(run.config_id.as_str()).or_default().push(run);
    }
    for (config, runs) in &by_config {
        let owned: Vec<CrawlRun> = runs.iter().map(|r| (*r).clone()).collect();
        let graph = footprint::build_footprint(
            &owned,
            rules,
            &manifest.entity_map,
            manifest.footprint_method,
        )
        .map_err(|e| e.in_stage("footprint"))?;
        let m = footprint::footprint_metrics(&graph);
        let _ = writeln!(
            footprint_csv,
            "{},{},{},{:.6},{},{:.6}",
            config,
            manifest.footprint_method.name(),
            m.n_third_parties,
            m.mean_tp_per_fp,
            m.top10_fp_coverage,
            graph.fallback_rate()
        );
        let _ = writeln!(
            summary_footprint,
            "  {:<24} third parties {:>6}  mean/fp {:>9.3}  top10 coverage {:>5}",
            config, m.n_third_parties, m.mean_tp_per_fp, m.top10_fp_coverage
        );
    }
    write_text(&staging.path().join("footprint.csv"), &footprint_csv)?;

    // Overlap of blocked resources across techniques.
    let mut overlap_csv = format!("# {header}\nrow,col,kind,value,side_length\n");
    let mut summary_overlap = String::new();
    if manifest.blockers.len() >= 2 {
        let mut sets = Vec::new();
        for entry in &manifest.blockers {
            let runs = &protected[&entry.spec.id];
            let set = overlap::blocked_set(&ordered_bare, runs, manifest.overlap_kind, rules)
                .map_err(|e| e.in_stage("overlap"))?;
            sets.push(set);
        }
        let matrix = overlap::overlap_matrix(&sets).map_err(|e| e.in_stage("overlap"))?;
        for cell in overlap::render_overlap_data(&matrix) {
            let _ = writeln!(
                overlap_csv,
                "{},{},{},{},{:.6}",
                cell.row, cell.col, cell.cell_kind, cell.value, cell.side_length
            );
        }
        for technique in &matrix.techniques {
            let _ = writeln!(
                summary_overlap,
                "  {:<24} blocked {:>6}  unique {:>6}",
                technique, matrix.sizes[technique], matrix.unique[technique]
            );
        }
    } else {
        overlap_csv.push_str("# overlap skipped: fewer than 2 techniques\n");
        summary_overlap.push_str("  skipped: fewer than 2 techniques\n");
    }
    write_text(&staging.path().join("overlap.csv"), &overlap_csv)?;

    // Synthetic indices.
    let indices = synthetic_indices(
        &table,
        &manifest.bare_id,
        &DEFAULT_PROTECTION_METRICS,
        &DEFAULT_QUALITY_METRICS,
    )
    .map_err(|e| e.in_stage("indices"))?;
    let mut indices_csv = format!("# {header}\nconfig_id,protection_index,quality_index\n");
    let mut summary_indices = String::new();
    for index in &indices {
        let _ = writeln!(
            indices_csv,
            "{},{:.6},{:.6}",
            index.config_id, index.protection_index, index.quality_index
        );
        let _ = writeln!(
            summary_indices,
            "  {:<24} protection {:>8.3}  quality {:>8.3}",
            index.config_id, index.protection_index, index.quality_index
        );
    }
    write_text(&staging.path().join("indices.csv"), &indices_csv)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "# {header}");
    let _ = writeln!(summary, "privmeter {} report", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(summary, "alpha: {}", manifest.alpha);
    let _ = writeln!(
        summary,
        "configurations: {}",
        by_config.keys().cloned().collect::<Vec<_>>().join(", ")
    );
    for entry in &manifest.blockers {
        for (list, skipped) in &entry.skipped_lines {
            if *skipped > 0 {
                let _ = writeln!(
                    summary,
                    "warning: {}: {} unsupported filter lines skipped in {}",
                    entry.spec.id, skipped, list
                );
            }
        }
    }
    let _ = writeln!(
        summary,
        "note: bytes_total is computed but flagged unstable; it is excluded from indices."
    );
    summary.push_str(&summary_ranks);
    let _ = writeln!(summary, "\n## Privacy footprint ({})", manifest.footprint_method.name());
    summary.push_str(&summary_footprint);
    let _ = writeln!(summary, "\n## Blocked-resource overlap ({})", manifest.overlap_kind.name());
    summary.push_str(&summary_overlap);
    let _ = writeln!(summary, "\n## Synthetic indices (bare = 1.0)");
    summary.push_str(&summary_indices);
    write_text(&staging.path().join("summary.txt"), &summary)?;

    if out_dir.exists() {
        if !force {
            return Err(Error::invalid(format!(
                "output directory {} already exists (use --force to replace)",
                out_dir.display()
            )));
        }
        fs::remove_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    let staged = staging.keep();
    fs::rename(&staged, out_dir).map_err(|e| Error::io(out_dir, e))?;
    Ok(ReportBundle {
        dir: out_dir.to_path_buf(),
        manifest_hash: manifest.hash.clone(),
    })
}

fn rank_for_metric(
    table: &MetricTable,
    metric: Metric,
    manifest: &ExperimentManifest,
) -> Result<stats::RankAssignment> {
    let mut per_config: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for config in table.config_ids() {
        let samples: BTreeMap<String, f64> = if metric.is_run_level() {
            // Run-level metrics compare per-run totals; key by run index.
            table
                .runs_for(&config)
                .into_iter()
                .map(|run| {
                    let (b, h) = &table.run_rows[&(config.clone(), run)];
                    (format!("run{run:04}"), metric.value(b, h))
                })
                .collect()
        } else {
            metrics::per_site_means(table, &config, metric)?
                .into_iter()
                .map(|(site, sm)| (site, sm.mean))
                .collect()
        };
        per_config.insert(config, samples);
    }
    stats::ks_rank(&per_config, manifest.alpha, manifest.direction, manifest.grouping)
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{BrowsingMetrics, HtmlMetrics};

    fn insert_run(
        table: &mut MetricTable,
        config: &str,
        run: u32,
        b: BrowsingMetrics,
        h: HtmlMetrics,
    ) {
        table.run_rows.insert((config.to_string(), run), (b, h));
    }

    fn browsing(fp: u64, tp: u64, domains: u64, cookies: u64) -> BrowsingMetrics {
        BrowsingMetrics {
            fp_requests: fp,
            tp_requests: tp,
            tp_domains: domains,
            cookies,
            bytes_total: 1,
        }
    }

    fn html(n: u64) -> HtmlMetrics {
        HtmlMetrics {
            html_bytes: n,
            n_images: n,
            n_scripts: n,
            image_bytes: n,
            script_bytes: n,
        }
    }

    #[test]
    fn bare_index_is_one() {
        let mut table = MetricTable::default();
        insert_run(&mut table, "bare", 0, browsing(10, 20, 5, 8), html(4));
        insert_run(&mut table, "bare", 1, browsing(12, 22, 5, 8), html(4));
        let indices = synthetic_indices(
            &table,
            "bare",
            &DEFAULT_PROTECTION_METRICS,
            &DEFAULT_QUALITY_METRICS,
        )
        .unwrap();
        assert_eq!(indices.len(), 1);
        assert!((indices[0].protection_index - 1.0).abs() < 1e-12);
        assert!((indices[0].quality_index - 1.0).abs() < 1e-12);
    }

    #[test]
    fn index_with_three_browsing_metrics_halved_tp() {
        // Identical to bare except tp halved; over {fp, tp, tp_domains} the
        // protection index is (1 + 0.5 + r)/3 with r the domain ratio.
        let mut table = MetricTable::default();
        insert_run(&mut table, "bare", 0, browsing(10, 20, 8, 6), html(4));
        insert_run(&mut table, "blk", 0, browsing(10, 10, 6, 6), html(4));
        let metrics_list = [Metric::FpRequests, Metric::TpRequests, Metric::TpDomains];
        let indices =
            synthetic_indices(&table, "bare", &metrics_list, &DEFAULT_QUALITY_METRICS).unwrap();
        let blk = indices.iter().find(|i| i.config_id == "blk").unwrap();
        let r = 6.0 / 8.0;
        let expect = (1.0 + 0.5 + r) / 3.0;
        assert!((blk.protection_index - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_bare_total_names_metric() {
        let mut table = MetricTable::default();
        insert_run(&mut table, "bare", 0, browsing(10, 20, 5, 0), html(4));
        let err = synthetic_indices(
            &table,
            "bare",
            &DEFAULT_PROTECTION_METRICS,
            &DEFAULT_QUALITY_METRICS,
        )
        .unwrap_err();
        assert!(err.to_string().contains("cookies"), "{err}");
    }

    #[test]
    fn missing_bare_config_is_error() {
        let mut table = MetricTable::default();
        insert_run(&mut table, "other", 0, browsing(1, 1, 1, 1), html(1));
        assert!(synthetic_indices(
            &table,
            "bare",
            &DEFAULT_PROTECTION_METRICS,
            &DEFAULT_QUALITY_METRICS
        )
        .is_err());
    }

    #[test]
    fn pipeline_errors_carry_stage_name() {
        use crate::psl::SuffixRules;
        let dir = tempfile::tempdir().unwrap();
        // A log whose only runs belong to a non-bare configuration.
        let mut run = crate::model::CrawlRun::new("protected-only", 0);
        run.visits.push(crate::model::SiteVisit {
            site: "https://a.com/".into(),
            site_host: "a.com".into(),
            requests: vec![crate::model::RequestRecord {
                url: "https://a.com/".into(),
                host: "a.com".into(),
                bytes: 1,
                resource_class: crate::model::ResourceClass::Document,
                sets_cookie: false,
                reads_cookie: false,
            }],
            html: Default::default(),
        });
        let log_path = dir.path().join("log.jsonl");
        crate::model::write_crawl_log(&[run], &log_path).unwrap();

        let manifest = ExperimentManifest {
            seed: None,
            alpha: 0.05,
            metrics: vec![Metric::TpRequests],
            data: DataSource::Log { path: log_path },
            bare_id: "bare".to_string(),
            blockers: Vec::new(),
            footprint_method: GroupingMethod::Adns,
            entity_map: EntityMap::default(),
            overlap_kind: ResourceKind::Domains,
            direction: Direction::LowerIsBetter,
            grouping: Grouping::AnchorGreedy,
            hash: "test".to_string(),
        };
        let rules = SuffixRules::parse("com").unwrap();
        let err = run_pipeline(&manifest, &rules, &dir.path().join("out"), false).unwrap_err();
        assert!(err.to_string().contains("stage ingest"), "{err}");
        assert!(!dir.path().join("out").exists(), "no partial bundle");
    }
}
