//! Dense convex QP solver.
//!
//! Solves `min ½xᵀHx + cᵀx  s.t.  A x ≤ b,  B x = f` with `H ≻ 0` by a
//! Mehrotra predictor-corrector interior-point method, followed by an
//! active-set polish: one equality-constrained KKT solve on the inferred
//! active set, repaired for a few rounds if it violates sign or feasibility.
//! When the interior-point iteration fails to converge, a phase-one problem
//! decides between infeasibility and numerical failure.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("quadratic cost matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("equality constraint matrix is row-rank deficient")]
    RankDeficientEquality,
}

/// A QP at a fixed parameter value.
#[derive(Debug, Clone)]
pub struct QpInstance {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
}

impl QpInstance {
    pub fn new(
        h: DMatrix<f64>,
        c: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = c.len();
        let dim = |what: &str| Err(QpError::Dimension(what.to_string()));
        if h.nrows() != n || h.ncols() != n {
            return dim("H must be n x n");
        }
        if a_in.ncols() != n || a_in.nrows() != b_in.len() {
            return dim("A_in / b_in");
        }
        if a_eq.ncols() != n || a_eq.nrows() != b_eq.len() {
            return dim("A_eq / b_eq");
        }
        if (&h - h.transpose()).abs().max() > 1e-10 * (1.0 + h.abs().max()) {
            return Err(QpError::NotPositiveDefinite);
        }
        Ok(Self {
            h,
            c,
            a_in,
            b_in,
            a_eq,
            b_eq,
        })
    }

    /// Inequality-only instance.
    pub fn inequality(
        h: DMatrix<f64>,
        c: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = c.len();
        Self::new(h, c, a_in, b_in, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.b_in.len()
    }

    pub fn p(&self) -> usize {
        self.b_eq.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.c.dot(x)
    }

    /// Wolfe dual objective at (x, λ, μ).
    pub fn dual_objective(&self, x: &DVector<f64>, lambda: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        -0.5 * x.dot(&(&self.h * x)) - self.b_in.dot(lambda) - self.b_eq.dot(mu)
    }

    /// Inequality residuals `A x − b` (nonpositive when feasible).
    pub fn inequality_residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a_in * x - &self.b_in
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// ‖Hx + c + Aᵀλ + Bᵀμ‖∞
    pub stationarity: f64,
    /// max of positive inequality violation and ‖Bx − f‖∞
    pub primal: f64,
    /// max |λᵢ (bᵢ − Aᵢx)|
    pub complementarity: f64,
    /// max(−λ) clipped at zero
    pub dual: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.complementarity)
            .max(self.dual)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu: DVector<f64>,
    pub status: QpStatus,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub polished: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            polish: true,
        }
    }
}

pub fn kkt_residuals(
    inst: &QpInstance,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
) -> KktResiduals {
    let grad = &inst.h * x + &inst.c + inst.a_in.tr_mul(lambda) + inst.a_eq.tr_mul(mu);
    let slack = inst.inequality_residuals(x);
    let viol = slack.iter().fold(0.0f64, |acc, &s| acc.max(s));
    let eq = if inst.p() > 0 {
        (&inst.a_eq * x - &inst.b_eq).amax()
    } else {
        0.0
    };
    let comp = lambda
        .iter()
        .zip(slack.iter())
        .fold(0.0f64, |acc, (l, s)| acc.max((l * s).abs()));
    let dual = lambda.iter().fold(0.0f64, |acc, &l| acc.max(-l));
    KktResiduals {
        stationarity: grad.amax(),
        primal: viol.max(eq),
        complementarity: comp,
        dual,
    }
}

/// Sorted indices of inequality rows with `|Aᵢx − bᵢ| ≤ eps_act`.
pub fn identify_active(inst: &QpInstance, sol: &QpSolution, eps_act: f64) -> Vec<usize> {
    inst.inequality_residuals(&sol.x)
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() <= eps_act)
        .map(|(i, _)| i)
        .collect()
}

struct Scales {
    dual: f64,
    primal: f64,
}

impl Scales {
    fn of(inst: &QpInstance) -> Self {
        let b = if inst.m() > 0 { inst.b_in.amax() } else { 0.0 };
        let f = if inst.p() > 0 { inst.b_eq.amax() } else { 0.0 };
        Self {
            dual: 1.0 + inst.c.amax(),
            primal: 1.0 + b.max(f),
        }
    }

    fn satisfied(&self, r: &KktResiduals, tol: f64) -> bool {
        r.stationarity <= tol * self.dual
            && r.primal <= tol * self.primal
            && r.complementarity <= tol * self.primal.max(self.dual)
            && r.dual <= tol * self.dual
    }
}

pub fn solve_qp(inst: &QpInstance, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let n = inst.n();
    if n == 0 {
        return Err(QpError::Dimension("no variables".into()));
    }
    if linalg::cholesky(&inst.h).is_none() {
        return Err(QpError::NotPositiveDefinite);
    }
    if inst.p() > 0 && !linalg::full_row_rank(&inst.a_eq, 1e-8) {
        return Err(QpError::RankDeficientEquality);
    }
    let outcome = ipm(inst, settings);
    if let Some(sol) = outcome.solution {
        return Ok(sol);
    }
    // The iteration did not converge: decide whether the problem is infeasible.
    let state = outcome.last;
    let (infeasible, certificate) = phase_one(inst, settings);
    let residuals = kkt_residuals(inst, &state.x, &state.lambda, &state.mu);
    Ok(QpSolution {
        x: state.x,
        lambda: if infeasible {
            certificate
        } else {
            state.lambda
        },
        mu: state.mu,
        status: if infeasible {
            QpStatus::Infeasible
        } else {
            QpStatus::NumericalFailure
        },
        residuals,
        iterations: outcome.iterations,
        polished: false,
    })
}

#[derive(Clone)]
struct IpmState {
    x: DVector<f64>,
    lambda: DVector<f64>,
    mu: DVector<f64>,
    w: DVector<f64>,
}

struct IpmOutcome {
    solution: Option<QpSolution>,
    last: IpmState,
    iterations: usize,
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .fold(1.0f64, |acc, (vi, di)| acc.min(-vi / di))
}

fn initial_point(inst: &QpInstance) -> IpmState {
    let (n, m, p) = (inst.n(), inst.m(), inst.p());
    // min ½xᵀHx + cᵀx + ½‖Ax − b‖² s.t. Bx = f
    let mut kkt = DMatrix::zeros(n + p, n + p);
    let hq = &inst.h + inst.a_in.tr_mul(&inst.a_in);
    kkt.view_mut((0, 0), (n, n)).copy_from(&hq);
    if p > 0 {
        kkt.view_mut((0, n), (n, p)).copy_from(&inst.a_eq.transpose());
        kkt.view_mut((n, 0), (p, n)).copy_from(&inst.a_eq);
    }
    let mut rhs = DVector::zeros(n + p);
    rhs.rows_mut(0, n)
        .copy_from(&(inst.a_in.tr_mul(&inst.b_in) - &inst.c));
    if p > 0 {
        rhs.rows_mut(n, p).copy_from(&inst.b_eq);
    }
    let sol = kkt.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(n + p));
    let x = sol.rows(0, n).into_owned();
    let slack = &inst.b_in - &inst.a_in * &x;
    let w = slack.map(|s| s.max(1.0));
    IpmState {
        x,
        lambda: DVector::from_element(m, 1.0),
        mu: DVector::zeros(p),
        w,
    }
}

fn ipm(inst: &QpInstance, settings: &QpSettings) -> IpmOutcome {
    let (n, m, p) = (inst.n(), inst.m(), inst.p());
    let scales = Scales::of(inst);
    let loose = settings.tol.max(1e-8);
    let blowup = 1e10 * scales.dual.max(1.0 + inst.h.amax());
    let mut st = initial_point(inst);
    let mut polish_tried_at_loose = false;
    let mut tiny_steps = 0;

    for iter in 0..settings.max_iter {
        let rd = &inst.h * &st.x + &inst.c + inst.a_in.tr_mul(&st.lambda) + inst.a_eq.tr_mul(&st.mu);
        let re = &inst.a_eq * &st.x - &inst.b_eq;
        let rp = &inst.a_in * &st.x + &st.w - &inst.b_in;
        let gap = if m > 0 { st.lambda.dot(&st.w) / m as f64 } else { 0.0 };

        let rd_n = rd.amax();
        let rp_n = if m > 0 { rp.amax() } else { 0.0 }.max(if p > 0 { re.amax() } else { 0.0 });
        let done = |t: f64| rd_n <= t * scales.dual && rp_n <= t * scales.primal && gap <= t;

        if settings.polish && !polish_tried_at_loose && done(loose) {
            polish_tried_at_loose = true;
            if let Some(sol) = polish(inst, &st, settings, &scales, iter) {
                return IpmOutcome {
                    solution: Some(sol),
                    last: st,
                    iterations: iter,
                };
            }
        }
        if done(settings.tol) {
            let residuals = kkt_residuals(inst, &st.x, &st.lambda, &st.mu);
            let status = if scales.satisfied(&residuals, settings.tol.max(1e-9)) {
                QpStatus::Optimal
            } else {
                QpStatus::NumericalFailure
            };
            if status == QpStatus::Optimal {
                return IpmOutcome {
                    solution: Some(QpSolution {
                        x: st.x.clone(),
                        lambda: st.lambda.clone(),
                        mu: st.mu.clone(),
                        status,
                        residuals,
                        iterations: iter,
                        polished: false,
                    }),
                    last: st,
                    iterations: iter,
                };
            }
        }
        if m > 0 && st.lambda.amax() > blowup {
            return IpmOutcome {
                solution: None,
                last: st,
                iterations: iter,
            };
        }

        // Reduced KKT: [H + AᵀDA, Bᵀ; B, 0]
        let d = st.lambda.component_div(&st.w);
        let mut ad = inst.a_in.clone();
        for (i, mut row) in ad.row_iter_mut().enumerate() {
            row *= d[i];
        }
        let mut kkt = DMatrix::zeros(n + p, n + p);
        kkt.view_mut((0, 0), (n, n))
            .copy_from(&(&inst.h + inst.a_in.tr_mul(&ad)));
        if p > 0 {
            kkt.view_mut((0, n), (n, p)).copy_from(&inst.a_eq.transpose());
            kkt.view_mut((n, 0), (p, n)).copy_from(&inst.a_eq);
        }
        let lu = kkt.lu();

        let solve_dir = |rc: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            // rc is the complementarity right-hand side of W Δλ + Λ Δw = rc
            let t = (rc + st.lambda.component_mul(&rp)).component_div(&st.w);
            let mut rhs = DVector::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(&(-&rd - inst.a_in.tr_mul(&t)));
            if p > 0 {
                rhs.rows_mut(n, p).copy_from(&(-&re));
            }
            let sol = lu.solve(&rhs)?;
            if sol.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let dx = sol.rows(0, n).into_owned();
            let dmu = sol.rows(n, p).into_owned();
            let dw = -&rp - &inst.a_in * &dx;
            let dl = (rc - st.lambda.component_mul(&dw)).component_div(&st.w);
            Some((dx, dmu, dw, dl))
        };

        let rc_aff = -st.lambda.component_mul(&st.w);
        let Some((dx_a, _, dw_a, dl_a)) = solve_dir(&rc_aff) else {
            break;
        };
        let _ = dx_a;
        let (dx, dmu, dw, dl) = if m > 0 {
            let a_aff = max_step(&st.w, &dw_a).min(max_step(&st.lambda, &dl_a));
            let gap_aff = (&st.w + a_aff * &dw_a).dot(&(&st.lambda + a_aff * &dl_a)) / m as f64;
            let sigma = if gap > 0.0 { (gap_aff / gap).powi(3).min(1.0) } else { 0.0 };
            let rc = &rc_aff - dw_a.component_mul(&dl_a) + DVector::from_element(m, sigma * gap);
            match solve_dir(&rc) {
                Some(d) => d,
                None => break,
            }
        } else {
            match solve_dir(&rc_aff) {
                Some(d) => d,
                None => break,
            }
        };
        let alpha = if m > 0 {
            (0.995 * max_step(&st.w, &dw).min(max_step(&st.lambda, &dl))).min(1.0)
        } else {
            1.0
        };
        if alpha < 1e-12 {
            tiny_steps += 1;
            if tiny_steps >= 3 {
                break;
            }
        } else {
            tiny_steps = 0;
        }
        st.x += alpha * dx;
        st.mu += alpha * dmu;
        st.w += alpha * dw;
        st.lambda += alpha * dl;
        // keep strictly positive
        st.w.apply(|v| *v = v.max(1e-300));
        st.lambda.apply(|v| *v = v.max(1e-300));
    }

    // Last chance: try the polish from wherever we stopped.
    if settings.polish {
        if let Some(sol) = polish(inst, &st, settings, &scales, settings.max_iter) {
            return IpmOutcome {
                solution: Some(sol),
                last: st,
                iterations: settings.max_iter,
            };
        }
    }
    IpmOutcome {
        solution: None,
        last: st,
        iterations: settings.max_iter,
    }
}

/// Equality-constrained solve on an active set, with a few rounds of
/// add/drop repair.
fn polish(
    inst: &QpInstance,
    st: &IpmState,
    settings: &QpSettings,
    scales: &Scales,
    iterations: usize,
) -> Option<QpSolution> {
    let (n, m, p) = (inst.n(), inst.m(), inst.p());
    let mut active: Vec<bool> = (0..m).map(|i| st.lambda[i] > st.w[i]).collect();
    let tol_pol = 0.1 * settings.tol;

    for _ in 0..(m + 5).min(25) {
        let idx: Vec<usize> = (0..m).filter(|&i| active[i]).collect();
        let k = idx.len();
        if k + p > n {
            return None;
        }
        let size = n + k + p;
        let mut kkt = DMatrix::zeros(size, size);
        kkt.view_mut((0, 0), (n, n)).copy_from(&inst.h);
        let mut rhs = DVector::zeros(size);
        rhs.rows_mut(0, n).copy_from(&(-&inst.c));
        for (j, &i) in idx.iter().enumerate() {
            let row = inst.a_in.row(i);
            kkt.view_mut((n + j, 0), (1, n)).copy_from(&row);
            kkt.view_mut((0, n + j), (n, 1)).copy_from(&row.transpose());
            rhs[n + j] = inst.b_in[i];
        }
        if p > 0 {
            kkt.view_mut((n + k, 0), (p, n)).copy_from(&inst.a_eq);
            kkt.view_mut((0, n + k), (n, p)).copy_from(&inst.a_eq.transpose());
            rhs.rows_mut(n + k, p).copy_from(&inst.b_eq);
        }
        let sol = kkt.lu().solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let x = sol.rows(0, n).into_owned();
        let mut lambda = DVector::zeros(m);
        for (j, &i) in idx.iter().enumerate() {
            lambda[i] = sol[n + j];
        }
        let mu = sol.rows(n + k, p).into_owned();
        let slack = inst.inequality_residuals(&x);

        let worst_dual = idx
            .iter()
            .map(|&i| (i, lambda[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let worst_primal = (0..m)
            .filter(|&i| !active[i])
            .map(|i| (i, slack[i]))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let dual_bad = worst_dual.filter(|&(_, l)| l < -tol_pol * scales.dual);
        let primal_bad = worst_primal.filter(|&(_, s)| s > tol_pol * scales.primal);
        match (dual_bad, primal_bad) {
            (None, None) => {
                let residuals = kkt_residuals(inst, &x, &lambda, &mu);
                if !scales.satisfied(&residuals, settings.tol) {
                    return None;
                }
                return Some(QpSolution {
                    x,
                    lambda,
                    mu,
                    status: QpStatus::Optimal,
                    residuals,
                    iterations,
                    polished: true,
                });
            }
            (Some((i, _)), _) => active[i] = false,
            (None, Some((i, _))) => active[i] = true,
        }
    }
    None
}

/// Returns (infeasible, certificate) from `min t + ρ/2 (‖x‖² + t²)
/// s.t. A x − t ≤ b, B x = f`.
fn phase_one(inst: &QpInstance, settings: &QpSettings) -> (bool, DVector<f64>) {
    let (n, m, p) = (inst.n(), inst.m(), inst.p());
    if m == 0 {
        return (false, DVector::zeros(0));
    }
    let rho = 1e-6;
    let h = DMatrix::from_diagonal_element(n + 1, n + 1, rho);
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let mut a = DMatrix::zeros(m, n + 1);
    a.view_mut((0, 0), (m, n)).copy_from(&inst.a_in);
    a.column_mut(n).fill(-1.0);
    let mut b_eq_mat = DMatrix::zeros(p, n + 1);
    if p > 0 {
        b_eq_mat.view_mut((0, 0), (p, n)).copy_from(&inst.a_eq);
    }
    let aux = QpInstance {
        h,
        c,
        a_in: a,
        b_in: inst.b_in.clone(),
        a_eq: b_eq_mat,
        b_eq: inst.b_eq.clone(),
    };
    let inner = QpSettings {
        tol: settings.tol.max(1e-10),
        max_iter: settings.max_iter,
        polish: true,
    };
    let out = ipm(&aux, &inner);
    match out.solution {
        Some(sol) => {
            let t = sol.x[n];
            let b_scale = 1.0 + inst.b_in.amax();
            (t > 1e-7 * b_scale, sol.lambda)
        }
        None => (false, DVector::zeros(m)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(h: f64, c: f64, a: &[f64], b: &[f64]) -> QpInstance {
        QpInstance::inequality(
            DMatrix::from_element(1, 1, h),
            DVector::from_element(1, c),
            DMatrix::from_column_slice(a.len(), 1, a),
            DVector::from_column_slice(b),
        )
        .unwrap()
    }

    #[test]
    fn binding_upper_bound() {
        let inst = scalar(1.0, -1.0, &[1.0], &[0.5]);
        let sol = solve_qp(&inst, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 0.5).abs() < 1e-12);
        assert!((sol.lambda[0] - 0.5).abs() < 1e-12);
        assert_eq!(identify_active(&inst, &sol, 1e-5), vec![0]);
        assert!(sol.lambda[0] > 0.0);
    }

    #[test]
    fn interior_optimum() {
        let inst = scalar(1.0, -1.0, &[1.0], &[2.0]);
        let sol = solve_qp(&inst, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!(sol.lambda[0].abs() < 1e-12);
        assert!(identify_active(&inst, &sol, 1e-5).is_empty());
    }

    #[test]
    fn equality_symmetric() {
        let inst = QpInstance::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let sol = solve_qp(&inst, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 0.5).abs() < 1e-12 && (sol.x[1] - 0.5).abs() < 1e-12);
        assert!((sol.mu[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        // x ≤ 0 and −x ≤ −1
        let inst = scalar(1.0, 0.0, &[1.0, -1.0], &[0.0, -1.0]);
        let sol = solve_qp(&inst, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
        // certificate: λ ≥ 0, Aᵀλ ≈ 0, bᵀλ < 0
        let l = &sol.lambda;
        assert!(l.iter().all(|&v| v >= -1e-9));
        assert!((l[0] - l[1]).abs() < 1e-4);
        assert!(inst.b_in.dot(l) < 0.0);
    }

    #[test]
    fn identify_active_threshold_rule() {
        // residuals (−1e-7, −0.3) → {0}; (−2e-5, −1e-6) → {1}
        let inst = QpInstance::inequality(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            DVector::from_vec(vec![1e-7, 0.3]),
        )
        .unwrap();
        let mk = |x: f64| QpSolution {
            x: DVector::from_element(1, x),
            lambda: DVector::zeros(2),
            mu: DVector::zeros(0),
            status: QpStatus::Optimal,
            residuals: KktResiduals::default(),
            iterations: 0,
            polished: false,
        };
        assert_eq!(identify_active(&inst, &mk(0.0), 1e-5), vec![0]);
        let inst2 = QpInstance::inequality(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            DVector::from_vec(vec![2e-5, 1e-6]),
        )
        .unwrap();
        assert_eq!(identify_active(&inst2, &mk(0.0), 1e-5), vec![1]);
    }

    #[test]
    fn rejects_indefinite_h() {
        let inst = scalar(-1.0, 0.0, &[1.0], &[1.0]);
        assert_eq!(
            solve_qp(&inst, &QpSettings::default()).unwrap_err(),
            QpError::NotPositiveDefinite
        );
    }

    #[test]
    fn rejects_dependent_equalities() {
        let inst = QpInstance::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            DVector::from_vec(vec![1.0, 2.0]),
        )
        .unwrap();
        assert_eq!(
            solve_qp(&inst, &QpSettings::default()).unwrap_err(),
            QpError::RankDeficientEquality
        );
    }

    #[test]
    fn no_inequalities() {
        let inst = QpInstance::inequality(
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0])),
            DVector::from_vec(vec![-2.0, -4.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap();
        let sol = solve_qp(&inst, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
    }
}
