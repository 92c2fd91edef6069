//! Exact single-phase AC power flow on a radial feeder by backward-forward
//! sweep, and the error of the linear voltage and quadratic loss models
//! against it.
//!
//! Regulators are ideal transformers with ratios fixed by the caller:
//! `V_out = α V_in` and `I_in = α I_out`.

use nalgebra::{Complex, DVector};
use serde::{Deserialize, Serialize};

use crate::error::PowerFlowError;
use crate::feeder::FeederModel;

pub const SWEEP_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 200;

type C = Complex<f64>;

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub voltages: Vec<C>,
    /// Current on the line feeding each bus, measured at the bus end
    /// (index 0 unused).
    pub currents: Vec<C>,
    /// Ohmic loss of the line feeding each bus (0 for regulators).
    pub line_losses: Vec<f64>,
    pub total_loss: f64,
    pub ratios: Vec<f64>,
    pub iterations: usize,
}

impl PowerFlowSolution {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.voltages.iter().map(|v| v.norm()).collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.voltages.iter().map(|v| v.arg()).collect()
    }

    /// Losses from the voltage-angle form `g(|Vm|² + |Vn|² − 2|Vm||Vn|cos ψ)`.
    pub fn angle_form_losses(&self, feeder: &FeederModel) -> f64 {
        let reg_out: Vec<bool> = (0..feeder.n_buses()).map(|b| feeder.regulator_at_output(b).is_some()).collect();
        feeder
            .lines()
            .iter()
            .filter(|l| !reg_out[l.to])
            .map(|l| {
                let g = l.r / (l.r * l.r + l.x * l.x);
                let (vm, vn) = (self.voltages[l.from], self.voltages[l.to]);
                let psi = vm.arg() - vn.arg();
                g * (vm.norm_sqr() + vn.norm_sqr() - 2.0 * vm.norm() * vn.norm() * psi.cos())
            })
            .sum()
    }

    /// Largest complex power mismatch over non-substation buses.
    pub fn balance_mismatch(&self, feeder: &FeederModel, p: &DVector<f64>, q: &DVector<f64>) -> f64 {
        let n = feeder.n_buses();
        let mut worst = 0.0f64;
        for b in 1..n {
            let v = self.voltages[b];
            let mut net = C::new(p[b], q[b]) + v * self.currents[b].conj();
            for &c in feeder.children(b) {
                let a = feeder.regulator_at_output(c).map_or(1.0, |k| self.ratios[k]);
                net -= v * (self.currents[c] * a).conj();
            }
            worst = worst.max(net.norm());
        }
        worst
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), PowerFlowError> {
    if expected != got {
        return Err(PowerFlowError::Dimension { expected, got });
    }
    Ok(())
}

/// Solve for bus voltages given net injections `p + jq` (generation positive,
/// indexed by dense bus; the substation entry is ignored), substation voltage
/// `v0` and one ratio per regulator.
pub fn solve_powerflow(
    feeder: &FeederModel,
    p: &DVector<f64>,
    q: &DVector<f64>,
    v0: f64,
    ratios: &[f64],
) -> Result<PowerFlowSolution, PowerFlowError> {
    let n = feeder.n_buses();
    check_len(n, p.len())?;
    check_len(n, q.len())?;
    check_len(feeder.regulators().len(), ratios.len())?;

    let ratio_into = |b: usize| feeder.regulator_at_output(b).map(|k| ratios[k]);
    let mut v = vec![C::new(v0, 0.0); n];
    for b in 1..n {
        let parent = feeder.parent(b).expect("non-root bus has a parent");
        v[b] = v[parent] * ratio_into(b).unwrap_or(1.0);
    }
    let mut cur = vec![C::new(0.0, 0.0); n];
    let mut last_update = f64::INFINITY;
    for it in 1..=MAX_SWEEPS {
        // Backward: children have larger indices than their parents.
        for b in (1..n).rev() {
            let mut i = -(C::new(p[b], q[b]) / v[b]).conj();
            for &c in feeder.children(b) {
                i += cur[c] * ratio_into(c).unwrap_or(1.0);
            }
            cur[b] = i;
        }
        let mut update = 0.0f64;
        for b in 1..n {
            let parent = feeder.parent(b).expect("non-root bus has a parent");
            let nv = match ratio_into(b) {
                Some(a) => v[parent] * a,
                None => {
                    let l = feeder.feeding_line(b).expect("line feeds bus");
                    v[parent] - C::new(l.r, l.x) * cur[b]
                }
            };
            let d = (nv - v[b]).norm();
            if d.is_nan() || d > update {
                update = d;
            }
            v[b] = nv;
        }
        last_update = update;
        if update < SWEEP_TOL {
            let line_losses: Vec<f64> = (0..n)
                .map(|b| match (b, ratio_into(b)) {
                    (0, _) | (_, Some(_)) => 0.0,
                    _ => cur[b].norm_sqr() * feeder.feeding_line(b).unwrap().r,
                })
                .collect();
            return Ok(PowerFlowSolution {
                total_loss: line_losses.iter().sum(),
                voltages: v,
                currents: cur,
                line_losses,
                ratios: ratios.to_vec(),
                iterations: it,
            });
        }
        if !update.is_finite() {
            break;
        }
    }
    Err(PowerFlowError::NonConvergence {
        iterations: MAX_SWEEPS,
        last_update,
    })
}

/// Line flows (toward the child) from injections: the negated subtree sums.
fn line_flows(feeder: &FeederModel, inj: &DVector<f64>) -> Vec<f64> {
    let n = feeder.n_buses();
    let mut f = vec![0.0; n];
    for b in (1..n).rev() {
        f[b] -= inj[b];
        let parent = feeder.parent(b).unwrap();
        if parent != 0 {
            f[parent] += f[b];
        }
    }
    f
}

/// First-order voltage magnitudes with unit substation voltage and unit ratios.
pub fn linear_voltages(feeder: &FeederModel, p: &DVector<f64>, q: &DVector<f64>) -> Vec<f64> {
    let (pf, qf) = (line_flows(feeder, p), line_flows(feeder, q));
    let n = feeder.n_buses();
    let mut v = vec![1.0; n];
    for b in 1..n {
        let parent = feeder.parent(b).unwrap();
        v[b] = match feeder.regulator_at_output(b) {
            Some(_) => v[parent],
            None => {
                let l = feeder.feeding_line(b).unwrap();
                v[parent] - (l.r * pf[b] + l.x * qf[b])
            }
        };
    }
    v
}

/// Second-order losses `Σ r(P² + Q²)` over non-regulator lines.
pub fn quadratic_losses(feeder: &FeederModel, p: &DVector<f64>, q: &DVector<f64>) -> f64 {
    let (pf, qf) = (line_flows(feeder, p), line_flows(feeder, q));
    (1..feeder.n_buses())
        .filter(|&b| feeder.regulator_at_output(b).is_none())
        .map(|b| feeder.feeding_line(b).unwrap().r * (pf[b] * pf[b] + qf[b] * qf[b]))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scale: f64,
    pub voltage_error: f64,
    pub loss_error: f64,
    /// `log2(err(ε) / err(ε/2))` when ε/2 is also in the sweep.
    pub voltage_order: Option<f64>,
    pub loss_order: Option<f64>,
}

/// Errors of the linear voltage and quadratic loss models at scaled
/// injections `ε (p, q)`, with unit substation voltage and unit ratios.
pub fn approximation_error_sweep(
    feeder: &FeederModel,
    p: &DVector<f64>,
    q: &DVector<f64>,
    scales: &[f64],
) -> Result<Vec<SweepRow>, PowerFlowError> {
    let ones = vec![1.0; feeder.regulators().len()];
    let mut rows = Vec::with_capacity(scales.len());
    for &eps in scales {
        let (ps, qs) = (p * eps, q * eps);
        let exact = solve_powerflow(feeder, &ps, &qs, 1.0, &ones)?;
        let lin = linear_voltages(feeder, &ps, &qs);
        let voltage_error = exact
            .magnitudes()
            .iter()
            .zip(&lin)
            .fold(0.0f64, |a, (e, l)| a.max((e - l).abs()));
        let loss_error = (exact.total_loss - quadratic_losses(feeder, &ps, &qs)).abs();
        rows.push(SweepRow {
            scale: eps,
            voltage_error,
            loss_error,
            voltage_order: None,
            loss_order: None,
        });
    }
    for i in 0..rows.len() {
        let half = rows[i].scale / 2.0;
        if let Some(j) = rows.iter().position(|r| (r.scale - half).abs() <= 1e-12 * half) {
            let order = |a: f64, b: f64| (a > 0.0 && b > 0.0).then(|| (a / b).log2());
            rows[i].voltage_order = order(rows[i].voltage_error, rows[j].voltage_error);
            rows[i].loss_order = order(rows[i].loss_error, rows[j].loss_error);
        }
    }
    Ok(rows)
}
