use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use sha2::Digest;

use privmeter::blocker;
use privmeter::footprint::{self, EntityMap, GroupingMethod};
use privmeter::metrics::{self, Metric};
use privmeter::model::{self, CrawlRun};
use privmeter::overlap::{self, ResourceKind};
use privmeter::psl::SuffixRules;
use privmeter::report;
use privmeter::stats::{self, Direction, Grouping};
use privmeter::synth::{self, EcosystemConfig};

#[derive(Parser)]
#[command(
    name = "privmeter",
    version,
    about = "Crawl-log analysis toolkit for comparing web privacy protection techniques"
)]
struct Cli {
    /// Public Suffix List snapshot (defaults to the bundled one).
    #[arg(long, global = true)]
    psl: Option<PathBuf>,

    /// Seed override for synthetic generation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// KS significance level.
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,

    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bare crawl corpus.
    Synth {
        /// Ecosystem config (TOML); omit for the default 100-site corpus.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        runs: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read a crawl log and validate it against the schema.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        /// Print an explicit validation verdict.
        #[arg(long)]
        validate: bool,
    },
    /// Filter a bare log through every blocker in a roster.
    Simulate {
        #[arg(long)]
        bare: PathBuf,
        #[arg(long)]
        blockers: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute per-visit and per-run metrics into a table file.
    Metrics {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Output format: csv or jsonl.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// KS-rank configurations on one metric from a metrics CSV.
    Rank {
        /// Metrics CSV produced by `privmeter metrics`.
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long, default_value = "lower-is-better")]
        direction: String,
        #[arg(long, default_value = "anchor")]
        grouping: String,
        #[arg(long)]
        out: PathBuf,
        /// Pairwise p-value matrix CSV.
        #[arg(long)]
        pvalues: Option<PathBuf>,
    },
    /// Relative-standard-error stability analysis over repeated runs.
    Stability {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "tp_requests")]
        metric: String,
        #[arg(long, default_value_t = 10)]
        max_n: u32,
        /// Configuration to analyze when the log holds several.
        #[arg(long)]
        config_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Per-site RSE values at max_n.
        #[arg(long)]
        ecdf_out: Option<PathBuf>,
    },
    /// Build the privacy-footprint graph and its metrics.
    Footprint {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "adns")]
        method: String,
        /// Two-column domain,adns_domain CSV.
        #[arg(long)]
        adns: Option<PathBuf>,
        /// One-column CDN/hosting domain list.
        #[arg(long)]
        cdn: Option<PathBuf>,
        #[arg(long)]
        config_id: Option<String>,
        /// Edge-list CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Blocked-resource overlap between techniques.
    Overlap {
        #[arg(long)]
        bare: PathBuf,
        /// Protected logs, one per technique.
        #[arg(long, required = true, num_args = 1..)]
        protected: Vec<PathBuf>,
        #[arg(long, default_value = "domains")]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline from an experiment manifest.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace the output directory if it exists.
        #[arg(long)]
        force: bool,
    },
}

fn main() -> Result<()> {
    // Die quietly when stdout is a closed pipe (e.g. piped into `head`).
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("failed to configure worker threads")?;
    }
    let rules = match &cli.psl {
        Some(path) => SuffixRules::load(path)?,
        None => SuffixRules::bundled(),
    };

    match cli.command {
        Command::Synth { config, runs, out } => {
            let mut config = match config {
                Some(path) => EcosystemConfig::load(&path)?,
                None => EcosystemConfig::default(),
            };
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            let (generated, _) = synth::generate(&config, runs)?;
            model::write_crawl_log(&generated, &out)?;
            let visits: usize = generated.iter().map(|r| r.visits.len()).sum();
            println!(
                "wrote {} runs / {} visits (seed {}) to {}",
                generated.len(),
                visits,
                config.seed,
                out.display()
            );
        }
        Command::Ingest { input, validate } => {
            let runs = model::read_crawl_log(&input)?;
            let visits: usize = runs.iter().map(|r| r.visits.len()).sum();
            let cookies: usize = runs.iter().map(|r| r.cookie_jar.len()).sum();
            let configs: std::collections::BTreeSet<&str> =
                runs.iter().map(|r| r.config_id.as_str()).collect();
            if validate {
                println!("ok: schema valid");
            }
            println!(
                "{} runs, {} visits, {} cookies, configurations: {}",
                runs.len(),
                visits,
                cookies,
                configs.into_iter().collect::<Vec<_>>().join(", ")
            );
        }
        Command::Simulate { bare, blockers, out } => {
            let bare_runs = ordered_runs(&bare)?;
            if bare_runs.is_empty() {
                bail!("bare log {} holds no runs", bare.display());
            }
            let mut hasher = sha2::Sha256::new();
            let roster = report::load_roster(&blockers, &mut hasher)?;
            let mut output = Vec::new();
            for entry in &roster {
                let mut spec = entry.spec.clone();
                if spec.heuristic.is_some() && entry.training_passes > 0 {
                    spec = blocker::train_heuristic(
                        &spec,
                        &bare_runs[0],
                        entry.training_passes,
                        &rules,
                    )?;
                }
                for run in &bare_runs {
                    output.push(blocker::apply_blocker(&mut spec, run, &rules));
                }
                for (list, skipped) in &entry.skipped_lines {
                    if *skipped > 0 {
                        eprintln!(
                            "warning: {}: {skipped} unsupported filter lines skipped in {list}",
                            entry.spec.id
                        );
                    }
                }
            }
            model::write_crawl_log(&output, &out)?;
            println!(
                "simulated {} techniques over {} runs to {}",
                roster.len(),
                bare_runs.len(),
                out.display()
            );
        }
        Command::Metrics { input, out, format } => {
            let runs = model::read_crawl_log(&input)?;
            let table = metrics::MetricTable::build(&runs, &rules)?;
            match format.as_str() {
                "csv" => metrics::write_metrics_csv(&table, &out, None)?,
                "jsonl" => metrics::write_metrics_jsonl(&table, &out)?,
                other => bail!("unknown format {other:?} (expected csv or jsonl)"),
            }
            println!(
                "wrote {} visit rows and {} run rows to {}",
                table.visit_rows.len(),
                table.run_rows.len(),
                out.display()
            );
        }
        Command::Rank {
            metrics: metrics_path,
            metric,
            direction,
            grouping,
            out,
            pvalues,
        } => {
            let metric = Metric::parse(&metric)?;
            let table = metrics::read_metrics_csv(&metrics_path)?;
            let mut per_config: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
            for config in table.config_ids() {
                let samples: BTreeMap<String, f64> = if metric.is_run_level() {
                    table
                        .runs_for(&config)
                        .into_iter()
                        .map(|run| {
                            let (b, h) = &table.run_rows[&(config.clone(), run)];
                            (format!("run{run:04}"), metric.value(b, h))
                        })
                        .collect()
                } else {
                    metrics::per_site_means(&table, &config, metric)?
                        .into_iter()
                        .map(|(site, sm)| (site, sm.mean))
                        .collect()
                };
                per_config.insert(config, samples);
            }
            let assignment = stats::ks_rank(
                &per_config,
                cli.alpha,
                Direction::parse(&direction)?,
                Grouping::parse(&grouping)?,
            )?;
            let mut csv = String::from("config_id,mean,std,rank\n");
            for group in &assignment.groups {
                for config in group {
                    csv.push_str(&format!(
                        "{},{:.6},{:.6},{}\n",
                        config,
                        assignment.means[config],
                        assignment.stds[config],
                        assignment.ranks[config]
                    ));
                }
            }
            fs::write(&out, &csv).with_context(|| out.display().to_string())?;
            if let Some(pvalues_path) = pvalues {
                write_pvalue_matrix(&assignment, &pvalues_path)?;
            }
            for group in &assignment.groups {
                for config in group {
                    println!(
                        "rank {}  {}  mean {:.3}",
                        assignment.ranks[config], config, assignment.means[config]
                    );
                }
            }
        }
        Command::Stability {
            input,
            metric,
            max_n,
            config_id,
            out,
            ecdf_out,
        } => {
            let runs = select_config(model::read_crawl_log(&input)?, config_id.as_deref())?;
            let metric = Metric::parse(&metric)?;
            let curve = stats::stability_curve(&runs, metric, max_n, &rules)?;
            let mut csv = String::from("n,median_rse,p5_rse,p95_rse,sites,excluded\n");
            for row in &curve.rows {
                csv.push_str(&format!(
                    "{},{:.6},{:.6},{:.6},{},{}\n",
                    row.n, row.median, row.p5, row.p95, row.sites, row.excluded
                ));
            }
            fs::write(&out, &csv).with_context(|| out.display().to_string())?;
            if let Some(ecdf_path) = ecdf_out {
                let mut csv = String::from("site,rse\n");
                for (site, rse) in &curve.final_rse {
                    csv.push_str(&format!("{site},{rse:.6}\n"));
                }
                fs::write(&ecdf_path, &csv).with_context(|| ecdf_path.display().to_string())?;
            }
            for row in &curve.rows {
                println!(
                    "n={:<3} median RSE {:.4}  (p5 {:.4}, p95 {:.4}, {} sites)",
                    row.n, row.median, row.p5, row.p95, row.sites
                );
            }
        }
        Command::Footprint {
            input,
            method,
            adns,
            cdn,
            config_id,
            out,
        } => {
            let runs = select_config(model::read_crawl_log(&input)?, config_id.as_deref())?;
            let method = GroupingMethod::parse(&method)?;
            let mut map = EntityMap::default();
            if let Some(path) = adns {
                map.adns = EntityMap::load_adns_csv(&path)?;
            }
            if let Some(path) = cdn {
                map.cdn_domains = EntityMap::load_cdn_csv(&path)?;
            }
            let graph = footprint::build_footprint(&runs, &rules, &map, method)?;
            footprint::write_edge_csv(&graph, &out, None)?;
            let m = footprint::footprint_metrics(&graph);
            println!(
                "third parties: {}\nmean third parties per first party: {:.3}\ntop-10 first-party coverage: {}\nadns fallback rate: {:.3}",
                m.n_third_parties,
                m.mean_tp_per_fp,
                m.top10_fp_coverage,
                graph.fallback_rate()
            );
        }
        Command::Overlap {
            bare,
            protected,
            kind,
            out,
        } => {
            let kind = ResourceKind::parse(&kind)?;
            let bare_runs = ordered_runs(&bare)?;
            let mut sets = Vec::new();
            for path in &protected {
                for (config, runs) in split_configs(model::read_crawl_log(path)?) {
                    let set = overlap::blocked_set(&bare_runs, &runs, kind, &rules)?;
                    println!("{}: {} blocked {}", config, set.members.len(), kind.name());
                    sets.push(set);
                }
            }
            let matrix = overlap::overlap_matrix(&sets)?;
            let mut csv = String::from("row,col,kind,value,side_length\n");
            for cell in overlap::render_overlap_data(&matrix) {
                csv.push_str(&format!(
                    "{},{},{},{},{:.6}\n",
                    cell.row, cell.col, cell.cell_kind, cell.value, cell.side_length
                ));
            }
            fs::write(&out, &csv).with_context(|| out.display().to_string())?;
        }
        Command::Report {
            manifest,
            out,
            force,
        } => {
            let manifest = report::load_manifest(&manifest)?;
            let bundle = report::run_pipeline(&manifest, &rules, &out, force)?;
            println!(
                "report bundle {} (manifest {})",
                bundle.dir.display(),
                &bundle.manifest_hash[..16]
            );
        }
    }
    Ok(())
}

fn ordered_runs(path: &Path) -> Result<Vec<CrawlRun>> {
    let mut runs = model::read_crawl_log(path)?;
    runs.sort_by(|a, b| (&a.config_id, a.run_index).cmp(&(&b.config_id, b.run_index)));
    Ok(runs)
}

fn split_configs(runs: Vec<CrawlRun>) -> BTreeMap<String, Vec<CrawlRun>> {
    let mut by_config: BTreeMap<String, Vec<CrawlRun>> = BTreeMap::new();
    for run in runs {
        by_config.entry(run.config_id.clone()).or_default().push(run);
    }
    for runs in by_config.values_mut() {
        runs.sort_by_key(|r| r.run_index);
    }
    by_config
}

fn select_config(runs: Vec<CrawlRun>, config_id: Option<&str>) -> Result<Vec<CrawlRun>> {
    let mut by_config = split_configs(runs);
    match config_id {
        Some(id) => by_config
            .remove(id)
            .ok_or_else(|| anyhow::anyhow!("no runs for configuration {id:?}")),
        None if by_config.len() == 1 => Ok(by_config.pop_first().unwrap().1),
        None => bail!(
            "log holds {} configurations; pick one with --config-id ({})",
            by_config.len(),
            by_config.keys().cloned().collect::<Vec<_>>().join(", ")
        ),
    }
}

fn write_pvalue_matrix(assignment: &stats::RankAssignment, path: &Path) -> Result<()> {
    let configs: Vec<&String> = assignment.means.keys().collect();
    let mut csv = String::from("config_id");
    for config in &configs {
        csv.push(',');
        csv.push_str(config);
    }
    csv.push('\n');
    for row in &configs {
        csv.push_str(row);
        for col in &configs {
            csv.push(',');
            if row == col {
                csv.push_str("1.000000");
            } else {
                let key = if row < col {
                    ((*row).clone(), (*col).clone())
                } else {
                    ((*col).clone(), (*row).clone())
                };
                csv.push_str(&format!("{:.6}", assignment.pairwise_p[&key]));
            }
        }
        csv.push('\n');
    }
    fs::write(path, &csv).with_context(|| path.display().to_string())?;
    Ok(())
}
