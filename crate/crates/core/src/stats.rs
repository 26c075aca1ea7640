//! ECDFs, exact two-sample KS statistics with asymptotic p-values, KS-based
//! rank grouping, and relative-standard-error stability analysis.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{self, Metric};
use crate::model::CrawlRun;
use crate::psl::SuffixRules;

/// Right-continuous empirical CDF with ties merged.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    /// (value, cumulative fraction), values strictly increasing, last
    /// fraction exactly 1.
    points: Vec<(f64, f64)>,
    n: usize,
}

pub fn ecdf(samples: &[f64]) -> Result<Ecdf> {
    if samples.is_empty() {
        return Err(Error::invalid("ecdf of empty sample"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("ecdf sample contains non-finite value"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < n {
        let v = sorted[i];
        let mut j = i;
        while j < n && sorted[j] == v {
            j += 1;
        }
        points.push((v, j as f64 / n as f64));
        i = j;
    }
    Ok(Ecdf { points, n })
}

impl Ecdf {
    /// Fraction of samples <= x.
    pub fn eval(&self, x: f64) -> f64 {
        match self
            .points
            .binary_search_by(|(v, _)| v.partial_cmp(&x).unwrap())
        {
            Ok(i) => self.points[i].1,
            Err(0) => 0.0,
            Err(i) => self.points[i - 1].1,
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }
}

/// Exact KS statistic: the supremum of |F_a - F_b| over all sample points,
/// computed by a merged scan of both sorted samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    check_sample("a", a)?;
    check_sample("b", b)?;
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d: f64 = 0.0;
    while i < n || j < m {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => break,
        };
        while i < n && xs[i] == v {
            i += 1;
        }
        while j < m && ys[j] == v {
            j += 1;
        }
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        if diff > d {
            d = diff;
        }
    }
    Ok(d)
}

fn check_sample(name: &str, s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::invalid(format!("empty sample {name}")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "sample {name} contains non-finite value"
        )));
    }
    Ok(())
}

/// Survival function of the Kolmogorov distribution:
/// `2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)`, truncated once terms
/// drop below 1e-12, clamped into [0, 1].
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.04 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100u32 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub d_statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
    pub same_distribution: bool,
}

/// Sample-size product below which the asymptotic p-value is replaced by a
/// deterministic permutation estimate.
pub const SMALL_SAMPLE_NM: usize = 400;
const SMALL_SAMPLE_SHUFFLES: u32 = 20_000;
const SMALL_SAMPLE_SEED: u64 = 0x7072_6976_6d65_7465;

/// Two-sample KS test. D is exact; the p-value uses the asymptotic
/// Kolmogorov distribution with the small-sample correction
/// `lambda = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) * D`, `ne = n*m/(n+m)`.
/// For `n*m < 400` a seeded permutation estimate is used instead.
/// `same_distribution = (p >= alpha)`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<KsResult> {
    let d = ks_statistic(a, b)?;
    let (n, m) = (a.len(), b.len());
    let p_value = if n * m < SMALL_SAMPLE_NM {
        ks_permutation_p(a, b, SMALL_SAMPLE_SHUFFLES, SMALL_SAMPLE_SEED)?
    } else {
        let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
        let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
        kolmogorov_sf(lambda)
    };
    Ok(KsResult {
        d_statistic: d,
        p_value,
        n,
        m,
        same_distribution: p_value >= alpha,
    })
}

/// Permutation p-value: the fraction of label shuffles of the pooled sample
/// whose KS statistic is at least the observed one, with add-one smoothing.
/// Inputs are ordered canonically first so the estimate is symmetric.
pub fn ks_permutation_p(a: &[f64], b: &[f64], shuffles: u32, seed: u64) -> Result<f64> {
    let d_obs = ks_statistic(a, b)?;
    let (a, b) = canonical_order(a, b);
    let n = a.len();
    let m = b.len();

    // Sort the pooled values once; a permutation then only shuffles labels,
    // and D comes from a single pass over tie groups.
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let values: Vec<f64> = pooled.iter().map(|p| p.0).collect();
    let mut labels: Vec<bool> = pooled.iter().map(|p| p.1).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceed = 0u64;
    let threshold = d_obs - 1e-12;
    for _ in 0..shuffles {
        labels.shuffle(&mut rng);
        if scan_d(&values, &labels, n, m) >= threshold {
            exceed += 1;
        }
    }
    Ok((exceed as f64 + 1.0) / (shuffles as f64 + 1.0))
}

fn canonical_order<'a>(a: &'a [f64], b: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    let key = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        v
    };
    if (a.len(), key(a)) <= (b.len(), key(b)) {
        (a, b)
    } else {
        (b, a)
    }
}

/// KS statistic over pre-sorted pooled values with group labels.
fn scan_d(values: &[f64], labels: &[bool], n: usize, m: usize) -> f64 {
    let total = values.len();
    let mut i = 0usize;
    let mut in_a = 0usize;
    let mut in_b = 0usize;
    let mut d: f64 = 0.0;
    while i < total {
        let v = values[i];
        while i < total && values[i] == v {
            if labels[i] {
                in_a += 1;
            } else {
                in_b += 1;
            }
            i += 1;
        }
        let diff = (in_a as f64 / n as f64 - in_b as f64 / m as f64).abs();
        if diff > d {
            d = diff;
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    LowerIsBetter,
    HigherIsBetter,
}

impl Direction {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lower-is-better" | "lower" => Ok(Direction::LowerIsBetter),
            "higher-is-better" | "higher" => Ok(Direction::HigherIsBetter),
            other => Err(Error::invalid(format!("unknown direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Grouping {
    /// A config joins the current group iff the KS test against the group's
    /// first (anchor) config accepts; otherwise it opens a new group.
    #[default]
    AnchorGreedy,
    /// A config joins only if the KS test accepts against every member.
    CompleteLinkage,
}

impl Grouping {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "anchor" => Ok(Grouping::AnchorGreedy),
            "complete" => Ok(Grouping::CompleteLinkage),
            other => Err(Error::invalid(format!("unknown grouping {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankAssignment {
    /// config_id -> rank (1 = best group).
    pub ranks: BTreeMap<String, u32>,
    /// Groups in rank order; configs within a group keep the mean ordering.
    pub groups: Vec<Vec<String>>,
    /// config_id -> overall mean used for the ordering.
    pub means: BTreeMap<String, f64>,
    /// config_id -> standard deviation of its sample.
    pub stds: BTreeMap<String, f64>,
    /// Pairwise KS p-values, keyed with the two ids in lexicographic order.
    pub pairwise_p: BTreeMap<(String, String), f64>,
}

/// Group configurations into ranks: sort by overall mean in `direction`,
/// then grow groups while the KS test cannot tell the samples apart.
/// Ties on the mean are broken lexicographically by config id.
pub fn ks_rank(
    per_site: &BTreeMap<String, BTreeMap<String, f64>>,
    alpha: f64,
    direction: Direction,
    grouping: Grouping,
) -> Result<RankAssignment> {
    if per_site.len() < 2 {
        return Err(Error::invalid(format!(
            "ranking needs at least 2 configurations, got {}",
            per_site.len()
        )));
    }
    let mut common: Option<BTreeSet<&String>> = None;
    for sites in per_site.values() {
        if sites.is_empty() {
            return Err(Error::invalid("configuration with no site values"));
        }
        let set: BTreeSet<&String> = sites.keys().collect();
        common = Some(match common {
            None => set,
            Some(prev) => prev.intersection(&set).cloned().collect(),
        });
    }
    if common.is_none_or(|c| c.is_empty()) {
        return Err(Error::invalid("configurations share no common site"));
    }

    let samples: BTreeMap<&String, Vec<f64>> = per_site
        .iter()
        .map(|(cfg, sites)| (cfg, sites.values().copied().collect::<Vec<f64>>()))
        .collect();

    let mut order: Vec<(&String, f64)> = samples
        .iter()
        .map(|(cfg, vals)| (*cfg, vals.iter().sum::<f64>() / vals.len() as f64))
        .collect();
    order.sort_by(|(ca, ma), (cb, mb)| match direction {
        Direction::LowerIsBetter => ma.partial_cmp(mb).unwrap().then_with(|| ca.cmp(cb)),
        Direction::HigherIsBetter => mb.partial_cmp(ma).unwrap().then_with(|| ca.cmp(cb)),
    });

    let mut groups: Vec<Vec<String>> = Vec::new();
    for (cfg, _) in &order {
        let joins = match groups.last() {
            None => false,
            Some(group) => {
                let members: &[String] = match grouping {
                    Grouping::AnchorGreedy => &group[..1],
                    Grouping::CompleteLinkage => group,
                };
                members.iter().all(|member| {
                    ks_two_sample(&samples[member], &samples[*cfg], alpha)
                        .map(|r| r.same_distribution)
                        .unwrap_or(false)
                })
            }
        };
        if joins {
            groups.last_mut().unwrap().push((*cfg).clone());
        } else {
            groups.push(vec![(*cfg).clone()]);
        }
    }

    let mut ranks = BTreeMap::new();
    for (idx, group) in groups.iter().enumerate() {
        for cfg in group {
            ranks.insert(cfg.clone(), idx as u32 + 1);
        }
    }

    let means: BTreeMap<String, f64> = order.iter().map(|(c, m)| ((*c).clone(), *m)).collect();
    let stds: BTreeMap<String, f64> = samples
        .iter()
        .map(|(cfg, vals)| ((*cfg).clone(), std_dev(vals)))
        .collect();

    let ids: Vec<&String> = samples.keys().copied().collect();
    let mut pairs = Vec::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            pairs.push((ids[i], ids[j]));
        }
    }
    let pairwise_p: BTreeMap<(String, String), f64> = pairs
        .par_iter()
        .map(|(a, b)| {
            let p = ks_two_sample(&samples[*a], &samples[*b], alpha)
                .map(|r| r.p_value)
                .unwrap_or(f64::NAN);
            (((*a).clone(), (*b).clone()), p)
        })
        .collect();

    Ok(RankAssignment {
        ranks,
        groups,
        means,
        stds,
        pairwise_p,
    })
}

fn std_dev(vals: &[f64]) -> f64 {
    if vals.len() < 2 {
        return 0.0;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt()
}

/// Relative standard error of the mean: `(s / sqrt(n)) / |mean|` with the
/// n-1 sample standard deviation.
pub fn relative_standard_error(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::invalid(
            "relative standard error needs at least 2 samples",
        ));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::invalid(
            "relative standard error of zero-mean sample",
        ));
    }
    let s = std_dev(samples);
    Ok((s / n.sqrt()) / mean.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub n: u32,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
    /// Sites the RSE distribution was computed over at this n.
    pub sites: u32,
    /// Sites skipped at this n (missing from a run, or zero mean).
    pub excluded: u32,
}

/// RSE-vs-measurement-count curves across sites, plus the full per-site RSE
/// map at the largest n.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCurve {
    pub metric: Metric,
    pub rows: Vec<StabilityRow>,
    pub final_rse: BTreeMap<String, f64>,
}

impl StabilityCurve {
    pub fn row(&self, n: u32) -> Option<&StabilityRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

/// For each n in 2..=max_n, compute per-site RSE of `metric` over the first
/// n runs and summarize the distribution across sites. All runs must belong
/// to one configuration. (n=1 has no standard error, so rows start at 2.)
pub fn stability_curve(
    runs: &[CrawlRun],
    metric: Metric,
    max_n: u32,
    rules: &SuffixRules,
) -> Result<StabilityCurve> {
    if metric.is_run_level() {
        return Err(Error::invalid(format!(
            "metric {} has no per-site values",
            metric.name()
        )));
    }
    if max_n < 2 {
        return Err(Error::invalid("stability analysis needs max_n >= 2"));
    }
    let config_ids: BTreeSet<&str> = runs.iter().map(|r| r.config_id.as_str()).collect();
    if config_ids.len() != 1 {
        return Err(Error::invalid(format!(
            "stability analysis expects one configuration, got {config_ids:?}"
        )));
    }
    if (runs.len() as u32) < max_n {
        return Err(Error::invalid(format!(
            "stability analysis needs max_n={} runs, only {} available",
            max_n,
            runs.len()
        )));
    }
    let mut ordered: Vec<&CrawlRun> = runs.iter().collect();
    ordered.sort_by_key(|r| r.run_index);

    // site -> per-run values, in run order.
    let mut per_site: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for (run_pos, run) in ordered.iter().take(max_n as usize).enumerate() {
        for visit in &run.visits {
            let (b, h) = metrics::visit_metrics(visit, rules);
            let slot = per_site
                .entry(visit.site.clone())
                .or_insert_with(|| vec![None; max_n as usize]);
            slot[run_pos] = Some(metric.value(&b, &h));
        }
    }

    let mut rows = Vec::new();
    let mut final_rse = BTreeMap::new();
    for n in 2..=max_n {
        let mut rses = Vec::new();
        let mut excluded = 0u32;
        for (site, values) in &per_site {
            let prefix: Vec<f64> = values[..n as usize].iter().flatten().copied().collect();
            if prefix.len() != n as usize {
                excluded += 1;
                continue;
            }
            match relative_standard_error(&prefix) {
                Ok(rse) => {
                    if n == max_n {
                        final_rse.insert(site.clone(), rse);
                    }
                    rses.push(rse);
                }
                Err(_) => excluded += 1,
            }
        }
        rses.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(StabilityRow {
            n,
            median: percentile(&rses, 0.5),
            p5: percentile(&rses, 0.05),
            p95: percentile(&rses, 0.95),
            sites: rses.len() as u32,
            excluded,
        });
    }
    Ok(StabilityCurve {
        metric,
        rows,
        final_rse,
    })
}

/// Linear-interpolation percentile of a sorted slice; NaN when empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
