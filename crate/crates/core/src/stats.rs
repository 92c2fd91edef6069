//! Aggregation of a finished batch into hosting-capacity statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{MpqpProblem, RowKind};
use crate::engine::BatchResult;
use crate::error::StatsError;
use crate::feeder::RegulatorKind;
use crate::scenario::ThetaSource;

/// Slack values below this are reported as zero.
pub const SLACK_ZERO: f64 = 1e-8;
/// An instance with s above this is counted as infeasible.
pub const INFEASIBLE_TOL: f64 = 1e-6;
/// Allowed excess of a soft-row residual over the instance slack.
pub const P2_TOL: f64 = 1e-6;
/// Residuals at or below this are not violations.
pub const VIOLATION_TOL: f64 = 1e-8;
pub const RATIO_TOL: f64 = 1e-6;
pub const RATIO_RANGE: (f64, f64) = (0.9, 1.1);
/// Smallest regulator input voltage a ratio is formed from.
pub const MIN_INPUT_VOLTAGE: f64 = 0.5;

/// Empirical CDF at the distinct sample values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Cdf {
    pub fn from_samples(samples: &[f64]) -> Option<Cdf> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let mut values = Vec::new();
        let mut probs = Vec::new();
        for (i, &v) in s.iter().enumerate() {
            if values.last() == Some(&v) {
                *probs.last_mut().unwrap() = (i + 1) as f64 / n;
            } else {
                values.push(v);
                probs.push((i + 1) as f64 / n);
            }
        }
        Some(Cdf { values, probs })
    }

    /// P(X ≤ v), right-continuous.
    pub fn at(&self, v: f64) -> f64 {
        match self.values.partition_point(|&u| u <= v) {
            0 => 0.0,
            k => self.probs[k - 1],
        }
    }
}

/// Type-7 quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn from_samples(samples: &[f64]) -> Option<Quantiles> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Quantiles {
            min: s[0],
            q25: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            q75: quantile(&s, 0.75),
            max: s[s.len() - 1],
        })
    }
}

/// Instances of each analysis point, optionally restricted to an hour window.
pub fn group_by_analysis(sources: &[ThetaSource], hours: Option<RangeInclusive<i64>>) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in sources.iter().enumerate() {
        if hours.as_ref().is_some_and(|h| !h.contains(&s.hour)) {
            continue;
        }
        let key = format!("scaling={}|oversize={}|penetration={}", s.scaling, s.oversize, s.penetration);
        groups.entry(key).or_default().push(i);
    }
    groups
}

fn slack_of(result: &BatchResult, id: usize) -> f64 {
    let s = result.records[id].s;
    if s < SLACK_ZERO {
        0.0
    } else {
        s
    }
}

pub fn slack_cdf(result: &BatchResult, groups: &BTreeMap<String, Vec<usize>>) -> Result<BTreeMap<String, Cdf>, StatsError> {
    groups
        .par_iter()
        .map(|(key, ids)| {
            let s: Vec<f64> = ids.iter().map(|&i| slack_of(result, i)).collect();
            Cdf::from_samples(&s)
                .map(|c| (key.clone(), c))
                .ok_or_else(|| StatsError::EmptyGroup(key.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusStats {
    pub bus: String,
    pub quantiles: Quantiles,
    pub freq_above: f64,
    pub freq_below: f64,
}

/// Bus voltages of one instance, from the same affine map the constraint rows use.
pub fn instance_voltages(result: &BatchResult, prob: &MpqpProblem, thetas: &[DVector<f64>], id: usize) -> Option<DVector<f64>> {
    let x = DVector::from_column_slice(&result.records[id].x);
    prob.bus_voltages(&x, &thetas[id])
}

/// Per-bus voltage quantiles and limit-violation frequencies over `ids`.
/// Empty when the problem was not built from a feeder.
pub fn voltage_stats(
    result: &BatchResult,
    prob: &MpqpProblem,
    thetas: &[DVector<f64>],
    ids: &[usize],
) -> Result<Vec<BusStats>, StatsError> {
    let Some(layout) = &prob.model else {
        return Ok(Vec::new());
    };
    if ids.is_empty() {
        return Err(StatsError::EmptyGroup("voltage".into()));
    }
    let volts: Vec<DVector<f64>> = ids
        .iter()
        .map(|&i| instance_voltages(result, prob, thetas, i).expect("layout present"))
        .collect();
    let n = ids.len() as f64;
    Ok(layout
        .bus_ids
        .iter()
        .enumerate()
        .map(|(b, name)| {
            let v: Vec<f64> = volts.iter().map(|vs| vs[b]).collect();
            BusStats {
                bus: name.clone(),
                quantiles: Quantiles::from_samples(&v).expect("nonempty"),
                freq_above: v.iter().filter(|&&u| u > layout.vmax + VIOLATION_TOL).count() as f64 / n,
                freq_below: v.iter().filter(|&&u| u < layout.vmin - VIOLATION_TOL).count() as f64 / n,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowViolation {
    pub row: usize,
    pub label: String,
    pub count: usize,
    pub frequency: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub instances: usize,
    /// Soft rows violated at least once.
    pub rows: Vec<RowViolation>,
    /// Family → (violations, max residual).
    pub families: BTreeMap<String, (usize, f64)>,
    pub max_residual: f64,
    pub max_slack: f64,
    pub infeasible_fraction: f64,
    /// Instances where some soft-row residual exceeds s + tolerance.
    pub bound_failures: Vec<usize>,
}

/// Soft-row violations in original units, with the slack term removed.
pub fn violation_report(
    result: &BatchResult,
    prob: &MpqpProblem,
    thetas: &[DVector<f64>],
    ids: &[usize],
) -> ViolationReport {
    let soft = prob.rows_of_kind(RowKind::Soft);
    let per: Vec<(usize, f64, Vec<f64>)> = ids
        .par_iter()
        .map(|&i| {
            let x = DVector::from_column_slice(&result.records[i].x);
            let r = prob.unscaled_residuals_without_slack(&x, &thetas[i]);
            (i, result.records[i].s, soft.iter().map(|&k| r[k]).collect())
        })
        .collect();
    let mut counts = vec![0usize; soft.len()];
    let mut maxes = vec![0.0f64; soft.len()];
    let mut report = ViolationReport {
        instances: ids.len(),
        rows: Vec::new(),
        families: BTreeMap::new(),
        max_residual: 0.0,
        max_slack: 0.0,
        infeasible_fraction: 0.0,
        bound_failures: Vec::new(),
    };
    let mut infeasible = 0usize;
    for (i, s, res) in per {
        report.max_slack = report.max_slack.max(s);
        if s > INFEASIBLE_TOL {
            infeasible += 1;
        }
        let mut worst = 0.0f64;
        for (k, &r) in res.iter().enumerate() {
            if r > VIOLATION_TOL {
                counts[k] += 1;
                maxes[k] = maxes[k].max(r);
            }
            worst = worst.max(r);
        }
        report.max_residual = report.max_residual.max(worst);
        if worst > s + P2_TOL {
            report.bound_failures.push(i);
        }
    }
    if !ids.is_empty() {
        report.infeasible_fraction = infeasible as f64 / ids.len() as f64;
    }
    for (k, &row) in soft.iter().enumerate() {
        if counts[k] == 0 {
            continue;
        }
        let label = &prob.ineq_labels[row];
        let fam = report.families.entry(label.family.name().to_string()).or_insert((0, 0.0));
        fam.0 += counts[k];
        fam.1 = fam.1.max(maxes[k]);
        report.rows.push(RowViolation {
            row,
            label: label.display(),
            count: counts[k],
            frequency: counts[k] as f64 / ids.len() as f64,
            max_residual: maxes[k],
        });
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRecord {
    pub theta_id: usize,
    pub regulator: String,
    pub ratio: f64,
    pub flagged: bool,
}

pub fn ratio_flagged(ratio: f64) -> bool {
    ratio < RATIO_RANGE.0 - RATIO_TOL || ratio > RATIO_RANGE.1 + RATIO_TOL
}

/// Ratio v_out / v_in of every remote regulator in every instance of `ids`.
pub fn recover_ratios(
    result: &BatchResult,
    prob: &MpqpProblem,
    thetas: &[DVector<f64>],
    ids: &[usize],
) -> Result<Vec<RatioRecord>, StatsError> {
    let layout = prob.model.as_ref().ok_or(StatsError::NoRemoteRegulators)?;
    let remote: Vec<(usize, usize)> = layout
        .regulators
        .iter()
        .filter(|r| r.2 == RegulatorKind::Remote)
        .map(|r| (r.0, r.1))
        .collect();
    if remote.is_empty() {
        return Err(StatsError::NoRemoteRegulators);
    }
    let mut out = Vec::with_capacity(ids.len() * remote.len());
    for &i in ids {
        let v = instance_voltages(result, prob, thetas, i).expect("layout present");
        for &(m, n) in &remote {
            let name = format!("{}->{}", layout.bus_ids[m], layout.bus_ids[n]);
            if v[m] < MIN_INPUT_VOLTAGE {
                return Err(StatsError::DivideByZero {
                    bus: layout.bus_ids[m].clone(),
                    value: v[m],
                });
            }
            let ratio = v[n] / v[m];
            out.push(RatioRecord {
                theta_id: i,
                regulator: name,
                ratio,
                flagged: ratio_flagged(ratio),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub key: String,
    pub instances: usize,
    pub infeasible_probability: f64,
    pub slack_cdf: Cdf,
    pub voltages: Vec<BusStats>,
    pub violations: ViolationReport,
    /// Remote-regulator ratio quantiles per regulator and the number of flags.
    pub ratios: BTreeMap<String, (Quantiles, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhcaReport {
    pub groups: Vec<GroupReport>,
}

pub fn phca_report(
    result: &BatchResult,
    prob: &MpqpProblem,
    thetas: &[DVector<f64>],
    groups: &BTreeMap<String, Vec<usize>>,
) -> Result<PhcaReport, StatsError> {
    let cdfs = slack_cdf(result, groups)?;
    let reports: Result<Vec<GroupReport>, StatsError> = groups
        .par_iter()
        .map(|(key, ids)| {
            let violations = violation_report(result, prob, thetas, ids);
            let mut ratios: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
            match recover_ratios(result, prob, thetas, ids) {
                Ok(recs) => {
                    for r in recs {
                        let e = ratios.entry(r.regulator).or_default();
                        e.0.push(r.ratio);
                        e.1 += r.flagged as usize;
                    }
                }
                Err(StatsError::NoRemoteRegulators) => {}
                Err(e) => return Err(e),
            }
            Ok(GroupReport {
                key: key.clone(),
                instances: ids.len(),
                infeasible_probability: violations.infeasible_fraction,
                slack_cdf: cdfs[key].clone(),
                voltages: voltage_stats(result, prob, thetas, ids)?,
                violations,
                ratios: ratios
                    .into_iter()
                    .map(|(k, (v, f))| (k, (Quantiles::from_samples(&v).expect("nonempty"), f)))
                    .collect(),
            })
        })
        .collect();
    Ok(PhcaReport { groups: reports? })
}

impl PhcaReport {
    /// Tab-separated tables, one section per table.
    pub fn to_tsv(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "# summary\ngroup\tinstances\tinfeasible_probability\tmax_slack\tmax_soft_residual\tbound_failures");
        for g in &self.groups {
            let v = &g.violations;
            let _ = writeln!(
                o,
                "{}\t{}\t{}\t{}\t{}\t{}",
                g.key,
                g.instances,
                g.infeasible_probability,
                v.max_slack,
                v.max_residual,
                v.bound_failures.len()
            );
        }
        let _ = writeln!(o, "\n# slack_cdf\ngroup\ts\tcdf");
        for g in &self.groups {
            for (s, p) in g.slack_cdf.values.iter().zip(&g.slack_cdf.probs) {
                let _ = writeln!(o, "{}\t{}\t{}", g.key, s, p);
            }
        }
        let _ = writeln!(o, "\n# voltages\ngroup\tbus\tmin\tq25\tmedian\tq75\tmax\tfreq_above\tfreq_below");
        for g in &self.groups {
            for b in &g.voltages {
                let q = &b.quantiles;
                let _ = writeln!(
                    o,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    g.key, b.bus, q.min, q.q25, q.median, q.q75, q.max, b.freq_above, b.freq_below
                );
            }
        }
        let _ = writeln!(o, "\n# violations\ngroup\trow\tcount\tfrequency\tmax_residual");
        for g in &self.groups {
            for r in &g.violations.rows {
                let _ = writeln!(o, "{}\t{}\t{}\t{}\t{}", g.key, r.label, r.count, r.frequency, r.max_residual);
            }
        }
        let _ = writeln!(o, "\n# ratios\ngroup\tregulator\tmin\tmedian\tmax\tflags");
        for g in &self.groups {
            for (name, (q, f)) in &g.ratios {
                let _ = writeln!(o, "{}\t{}\t{}\t{}\t{}\t{}", g.key, name, q.min, q.median, q.max, f);
            }
        }
        o
    }
}
