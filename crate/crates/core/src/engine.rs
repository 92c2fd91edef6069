//! Batch solution of the parametric problem over a parameter set by
//! on-the-fly region discovery.
//!
//! Repeatedly: take the next unsolved θ, solve it directly, build the
//! critical region of its active set, hand the affine solution to every
//! remaining θ inside that region, and discard the region. Parameters whose
//! active set is ambiguous or whose region is degenerate keep only their
//! direct solution.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::MpqpProblem;
use crate::error::{BuildError, Error};
use crate::qp::{identify_active, solve_qp, QpSettings, QpSolution, QpStatus};
use crate::region::{build_region, DegenerateReason, ProblemFactor, EPS_MEM};

/// Row residual magnitudes in this open band make the active set ambiguous.
pub const UNCERTAIN_BAND: (f64, f64) = (1e-6, 1e-4);

/// Tolerances used when comparing a batch against direct solves.
pub const X_TOL: f64 = 1e-6;
pub const OBJ_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    Random,
    Sequential,
}

#[derive(Debug, Clone, Copy)]
pub struct EngineOptions {
    pub seed: u64,
    pub sampling: Sampling,
    /// Stop exploring after this many regions (0 = unlimited).
    pub early_stop: usize,
    /// Worker threads for the membership scan and straggler solves.
    pub width: usize,
    pub eps_act: f64,
    /// Tolerance of the membership check of the seed parameter in its own region.
    pub eps_mem: f64,
    /// Tolerance of the membership scan that hands out affine solutions.
    pub eps_scan: f64,
    pub qp: QpSettings,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            sampling: Sampling::Random,
            early_stop: 0,
            width: std::thread::available_parallelism().map_or(1, |n| n.get()),
            eps_act: 1e-5,
            eps_mem: EPS_MEM,
            eps_scan: 1e-9,
            qp: QpSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Direct,
    RegionReuse,
    DegenerateDirect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub theta_id: usize,
    pub x: Vec<f64>,
    pub s: f64,
    /// Objective of the (scaled) problem the batch ran on.
    pub objective: f64,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<DegenerateReason>,
    /// Active-set signature of the region that produced or contains this record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    pub status: QpStatus,
    /// Inequality multipliers (scaled problem); kept in memory only.
    #[serde(default, skip_serializing)]
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing)]
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub qp_solves: usize,
    pub membership_checks: usize,
    pub regions_discovered: usize,
    pub region_reuses: usize,
    pub degenerate: usize,
    pub failures: usize,
    pub peak_live_regions: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchResult {
    pub records: Vec<InstanceRecord>,
    /// Region signature → number of parameters it solved (seed included).
    pub census: BTreeMap<String, usize>,
    pub counters: Counters,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl BatchResult {
    /// Records not attributed to any region.
    pub fn direct_only(&self) -> usize {
        self.records.iter().filter(|r| r.region.is_none()).count()
    }
}

#[allow(clippy::too_many_arguments)]
fn record(
    prob: &MpqpProblem,
    theta_id: usize,
    theta: &DVector<f64>,
    x: DVector<f64>,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
    provenance: Provenance,
    status: QpStatus,
) -> InstanceRecord {
    InstanceRecord {
        theta_id,
        s: prob.slack.map_or(0.0, |s| x[s]),
        objective: prob.objective(&x, theta),
        x: x.iter().copied().collect(),
        provenance,
        reason: None,
        region: None,
        status,
        lambda: lambda.iter().copied().collect(),
        mu: mu.iter().copied().collect(),
    }
}

fn direct(prob: &MpqpProblem, id: usize, theta: &DVector<f64>, sol: &QpSolution, prov: Provenance) -> InstanceRecord {
    record(prob, id, theta, sol.x.clone(), &sol.lambda, &sol.mu, prov, sol.status)
}

fn check_inputs(prob: &MpqpProblem, thetas: &[DVector<f64>]) -> Result<(), Error> {
    if let Some(t) = thetas.iter().find(|t| t.len() != prob.n_theta()) {
        return Err(BuildError::Dimension {
            expected: prob.n_theta(),
            got: t.len(),
        }
        .into());
    }
    Ok(())
}

fn solve(prob: &MpqpProblem, theta: &DVector<f64>, settings: &QpSettings) -> Result<QpSolution, Error> {
    solve_qp(&prob.instance(theta), settings).map_err(|e| Error::Numerical(e.to_string()))
}

pub fn run_batch(prob: &MpqpProblem, thetas: &[DVector<f64>], opts: &EngineOptions) -> Result<BatchResult, Error> {
    let start = Instant::now();
    if opts.width == 0 {
        return Err(BuildError::Config("scan width must be >= 1".into()).into());
    }
    check_inputs(prob, thetas)?;
    let factor = ProblemFactor::new(prob)
        .ok_or_else(|| Error::Numerical("cost matrix is not positive definite".into()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.width)
        .build()
        .map_err(|e| Error::Numerical(e.to_string()))?;

    let n = thetas.len();
    let mut remaining: Vec<usize> = (0..n).collect();
    if opts.sampling == Sampling::Random {
        remaining.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    }
    let mut records: Vec<Option<InstanceRecord>> = vec![None; n];
    let mut census: BTreeMap<String, usize> = BTreeMap::new();
    let mut counters = Counters::default();
    let mut live = 0usize;

    while !remaining.is_empty() {
        if opts.early_stop > 0 && counters.regions_discovered >= opts.early_stop {
            break;
        }
        let o = remaining.remove(0);
        let theta_o = &thetas[o];
        let sol = solve(prob, theta_o, &opts.qp)?;
        counters.qp_solves += 1;
        if sol.status != QpStatus::Optimal {
            counters.failures += 1;
            records[o] = Some(direct(prob, o, theta_o, &sol, Provenance::Direct));
            continue;
        }
        let degenerate = |reason| {
            let mut r = direct(prob, o, theta_o, &sol, Provenance::DegenerateDirect);
            r.reason = Some(reason);
            r
        };
        let residuals = prob.ineq_residuals(&sol.x, theta_o);
        if residuals
            .iter()
            .any(|r| r.abs() > UNCERTAIN_BAND.0 && r.abs() < UNCERTAIN_BAND.1)
        {
            counters.degenerate += 1;
            records[o] = Some(degenerate(DegenerateReason::ActiveSetUncertain));
            continue;
        }
        let active = identify_active(&prob.instance(theta_o), &sol, opts.eps_act);
        let region = match build_region(prob, &factor, &active) {
            Ok(r) => r,
            Err(reason) => {
                counters.degenerate += 1;
                records[o] = Some(degenerate(reason));
                continue;
            }
        };
        live += 1;
        counters.peak_live_regions = counters.peak_live_regions.max(live);
        if !region.contains(theta_o, opts.eps_mem) {
            counters.degenerate += 1;
            records[o] = Some(degenerate(DegenerateReason::MembershipSanityFail));
            live -= 1;
            continue;
        }
        counters.regions_discovered += 1;
        let sig = region.signature();
        let mut seed_rec = direct(prob, o, theta_o, &sol, Provenance::Direct);
        seed_rec.region = Some(sig.clone());
        records[o] = Some(seed_rec);

        counters.membership_checks += remaining.len();
        let inside: Vec<bool> = pool.install(|| {
            remaining
                .par_iter()
                .map(|&i| region.contains(&thetas[i], opts.eps_scan))
                .collect()
        });
        let members: Vec<usize> = remaining
            .iter()
            .zip(&inside)
            .filter(|(_, &m)| m)
            .map(|(&i, _)| i)
            .collect();
        let reused: Vec<InstanceRecord> = pool.install(|| {
            members
                .par_iter()
                .map(|&i| {
                    let rs = region.eval(&thetas[i]);
                    let mut r = record(prob, i, &thetas[i], rs.x, &rs.lambda, &rs.mu, Provenance::RegionReuse, QpStatus::Optimal);
                    r.region = Some(sig.clone());
                    r
                })
                .collect()
        });
        counters.region_reuses += reused.len();
        *census.entry(sig).or_insert(0) += 1 + reused.len();
        for r in reused {
            let id = r.theta_id;
            records[id] = Some(r);
        }
        remaining = remaining
            .into_iter()
            .zip(inside)
            .filter(|(_, m)| !m)
            .map(|(i, _)| i)
            .collect();
        drop(region);
        live -= 1;
        log::info!(
            "remaining {} regions {} qp solves {}",
            remaining.len(),
            counters.regions_discovered,
            counters.qp_solves
        );
    }

    // Whatever is left after an early stop is solved directly.
    let stragglers: Vec<Result<(InstanceRecord, bool), Error>> = pool.install(|| {
        remaining
            .par_iter()
            .map(|&i| {
                let sol = solve(prob, &thetas[i], &opts.qp)?;
                Ok((direct(prob, i, &thetas[i], &sol, Provenance::Direct), sol.status == QpStatus::Optimal))
            })
            .collect()
    });
    for s in stragglers {
        let (r, ok) = s?;
        counters.qp_solves += 1;
        if !ok {
            counters.failures += 1;
        }
        let id = r.theta_id;
        records[id] = Some(r);
    }

    let records: Vec<InstanceRecord> = records
        .into_iter()
        .map(|r| r.expect("every parameter receives a record"))
        .collect();
    Ok(BatchResult {
        records,
        census,
        counters,
        wall_time: start.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checked: usize,
    pub max_x_deviation: f64,
    pub max_objective_gap: f64,
    /// Parameter ids whose deviation exceeds the tolerances.
    pub mismatches: Vec<usize>,
}

/// Relative objective gap `|a − b| / max(1, |b|)`.
pub fn objective_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Re-solve a random subsample directly and compare.
pub fn validate_batch(
    result: &BatchResult,
    prob: &MpqpProblem,
    thetas: &[DVector<f64>],
    fraction: f64,
    seed: u64,
) -> Result<ValidationReport, Error> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(BuildError::Config(format!("validation fraction {fraction} outside (0, 1]")).into());
    }
    check_inputs(prob, thetas)?;
    if thetas.len() != result.records.len() {
        return Err(BuildError::Dimension {
            expected: result.records.len(),
            got: thetas.len(),
        }
        .into());
    }
    let n = thetas.len();
    let k = ((fraction * n as f64).ceil() as usize).min(n);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids.truncate(k);
    ids.sort_unstable();
    let settings = QpSettings::default();
    let devs: Vec<Result<(usize, f64, f64), Error>> = ids
        .par_iter()
        .map(|&i| {
            let sol = solve(prob, &thetas[i], &settings)?;
            let rec = &result.records[i];
            let dx = rec
                .x
                .iter()
                .zip(sol.x.iter())
                .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            let gap = objective_gap(rec.objective, prob.objective(&sol.x, &thetas[i]));
            Ok((i, dx, gap))
        })
        .collect();
    let mut report = ValidationReport {
        checked: k,
        max_x_deviation: 0.0,
        max_objective_gap: 0.0,
        mismatches: Vec::new(),
    };
    for d in devs {
        let (i, dx, gap) = d?;
        report.max_x_deviation = report.max_x_deviation.max(dx);
        report.max_objective_gap = report.max_objective_gap.max(gap);
        if dx > X_TOL || gap > OBJ_TOL {
            report.mismatches.push(i);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    /// min ½x² − θx s.t. x ≤ 1
    fn toy() -> MpqpProblem {
        MpqpProblem::from_matrices(
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, -1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 1.0),
            DMatrix::zeros(0, 1),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        )
        .unwrap()
    }

    fn thetas(v: &[f64]) -> Vec<DVector<f64>> {
        v.iter().map(|&t| DVector::from_element(1, t)).collect()
    }

    const TOY: [f64; 6] = [0.0, 0.5, 0.9, 1.1, 1.5, 2.0];

    #[test]
    fn toy_batch_two_regions() {
        let p = toy();
        let th = thetas(&TOY);
        let opts = EngineOptions { width: 2, ..Default::default() };
        let res = run_batch(&p, &th, &opts).unwrap();
        assert_eq!(res.records.len(), 6);
        assert_eq!(res.counters.regions_discovered, 2);
        assert!(res.counters.qp_solves <= 2);
        assert_eq!(res.counters.peak_live_regions, 1);
        assert_eq!(res.census.values().sum::<usize>() + res.direct_only(), 6);
        for (r, t) in res.records.iter().zip(TOY) {
            assert!((r.x[0] - t.min(1.0)).abs() < 1e-10, "{t}: {:?}", r.x);
        }
        let v = validate_batch(&res, &p, &th, 1.0, 0).unwrap();
        assert!(v.max_x_deviation <= 1e-8);
        assert!(v.mismatches.is_empty());
    }

    #[test]
    fn repeated_theta_one_solve() {
        let p = toy();
        let th = thetas(&[0.7; 1000]);
        let res = run_batch(&p, &th, &EngineOptions::default()).unwrap();
        assert_eq!(res.counters.qp_solves, 1);
        assert_eq!(res.counters.region_reuses, 999);
    }

    #[test]
    fn early_stop_matches_full_run() {
        let p = toy();
        let th = thetas(&TOY);
        let full = run_batch(&p, &th, &EngineOptions::default()).unwrap();
        let k1 = run_batch(&p, &th, &EngineOptions { early_stop: 1, ..Default::default() }).unwrap();
        assert_eq!(k1.counters.regions_discovered, 1);
        for (a, b) in full.records.iter().zip(&k1.records) {
            assert!((a.x[0] - b.x[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_and_random_agree() {
        let p = toy();
        let th = thetas(&TOY);
        let a = run_batch(&p, &th, &EngineOptions { sampling: Sampling::Sequential, ..Default::default() }).unwrap();
        let b = run_batch(&p, &th, &EngineOptions { seed: 9, ..Default::default() }).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert!((x.x[0] - y.x[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn deterministic_serialization() {
        let p = toy();
        let th = thetas(&TOY);
        let opts = EngineOptions { seed: 5, ..Default::default() };
        let a = serde_json::to_string(&run_batch(&p, &th, &opts).unwrap()).unwrap();
        let b = serde_json::to_string(&run_batch(&p, &th, &EngineOptions { width: 1, ..opts }).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupted_record_is_flagged() {
        let p = toy();
        let th = thetas(&TOY);
        let mut res = run_batch(&p, &th, &EngineOptions::default()).unwrap();
        res.records[3].x[0] += 1e-3;
        let v = validate_batch(&res, &p, &th, 1.0, 0).unwrap();
        assert_eq!(v.mismatches, vec![3]);
    }

    #[test]
    fn direct_only_batch_has_zero_deviation() {
        let p = toy();
        let th = thetas(&TOY);
        let res = run_batch(&p, &th, &EngineOptions { early_stop: 1, eps_scan: -1e3, ..Default::default() }).unwrap();
        assert!(res.records.iter().all(|r| r.provenance == Provenance::Direct));
        let v = validate_batch(&res, &p, &th, 1.0, 0).unwrap();
        assert_eq!(v.max_x_deviation, 0.0);
        assert_eq!(v.max_objective_gap, 0.0);
    }

    #[test]
    fn malformed_theta_aborts() {
        let p = toy();
        let th = vec![DVector::zeros(2)];
        assert!(matches!(
            run_batch(&p, &th, &EngineOptions::default()),
            Err(Error::Build(BuildError::Dimension { .. }))
        ));
    }
}
