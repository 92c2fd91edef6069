//! Critical regions: for a fixed active set, the primal and dual solutions
//! are affine in θ and valid on a polytope of parameters.
//!
//! With `K = [Ã; B]` stacking the active inequality rows and the equality
//! rows, and `S = K H⁻¹ Kᵀ`:
//!
//! ```text
//! [λ̃; μ] = G θ + w,   G = −S⁻¹(K H⁻¹ C + [Ẽ; F]),   w = −S⁻¹(K H⁻¹ d + [b̃; f])
//! x      = M θ + r,   M = −H⁻¹(C + Kᵀ G),          r = −H⁻¹(d + Kᵀ w)
//! ```
//!
//! The region is `{θ : Aᵢ(Mθ + r) ≤ Eᵢθ + bᵢ for inactive i, G₁θ + w₁ ≥ 0}`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::builder::MpqpProblem;
use crate::error::RegionError;
use crate::linalg;
use crate::qp::QpSolution;

/// Default membership tolerance on scaled data.
pub const EPS_MEM: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DegenerateReason {
    RankDeficientK,
    MembershipSanityFail,
    ActiveSetUncertain,
}

/// A parameter whose region was not explored; only its direct solution is kept.
#[derive(Debug, Clone)]
pub struct DegenerateCase {
    pub theta: DVector<f64>,
    pub solution: QpSolution,
    pub reason: DegenerateReason,
}

/// Quantities of a problem that do not depend on the active set: the
/// Cholesky factor of H and the products `H⁻¹C`, `H⁻¹d`, `H⁻¹Aᵀ`, `H⁻¹Bᵀ`.
#[derive(Debug, Clone)]
pub struct ProblemFactor {
    chol: Cholesky<f64, Dyn>,
    hinv_c: DMatrix<f64>,
    hinv_d: DVector<f64>,
    hinv_at: DMatrix<f64>,
    hinv_bt: DMatrix<f64>,
}

impl ProblemFactor {
    pub fn new(prob: &MpqpProblem) -> Option<Self> {
        let chol = linalg::cholesky(&prob.h)?;
        Some(Self {
            hinv_c: chol.solve(&prob.c),
            hinv_d: chol.solve(&prob.d),
            hinv_at: chol.solve(&prob.a_in.transpose()),
            hinv_bt: chol.solve(&prob.a_eq.transpose()),
            chol,
        })
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }
}

#[derive(Debug, Clone)]
pub struct CriticalRegion {
    active: Vec<usize>,
    n_eq: usize,
    g: DMatrix<f64>,
    w: DVector<f64>,
    m: DMatrix<f64>,
    r: DVector<f64>,
    poly_a: DMatrix<f64>,
    poly_b: DVector<f64>,
    n_ineq: usize,
}

/// Solution reconstructed from a region's affine maps.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSolution {
    pub x: DVector<f64>,
    /// Full-length inequality multipliers, zero on inactive rows.
    pub lambda: DVector<f64>,
    pub mu: DVector<f64>,
}

/// Build the region of `active` (sorted inequality indices).
pub fn build_region(
    prob: &MpqpProblem,
    factor: &ProblemFactor,
    active: &[usize],
) -> Result<CriticalRegion, DegenerateReason> {
    let (n, nt, m, p) = (prob.n_x(), prob.n_theta(), prob.n_ineq(), prob.n_eq());
    let k = active.len();
    let kk = k + p;
    let mut kmat = DMatrix::zeros(kk, n);
    let mut hinv_kt = DMatrix::zeros(n, kk);
    let mut rhs_e = DMatrix::zeros(kk, nt);
    let mut rhs_b = DVector::zeros(kk);
    for (j, &i) in active.iter().enumerate() {
        debug_assert!(i < m);
        kmat.row_mut(j).copy_from(&prob.a_in.row(i));
        hinv_kt.column_mut(j).copy_from(&factor.hinv_at.column(i));
        rhs_e.row_mut(j).copy_from(&prob.e_in.row(i));
        rhs_b[j] = prob.b_in[i];
    }
    for i in 0..p {
        kmat.row_mut(k + i).copy_from(&prob.a_eq.row(i));
        hinv_kt.column_mut(k + i).copy_from(&factor.hinv_bt.column(i));
        rhs_e.row_mut(k + i).copy_from(&prob.f_eq.row(i));
        rhs_b[k + i] = prob.b_eq[i];
    }
    if !linalg::full_row_rank(&kmat, 1e-8) {
        return Err(DegenerateReason::RankDeficientK);
    }

    let (g, w) = if kk > 0 {
        let s = &kmat * &hinv_kt;
        let s = (&s + s.transpose()) * 0.5;
        let s_chol = s.cholesky().ok_or(DegenerateReason::RankDeficientK)?;
        let g = -s_chol.solve(&(&kmat * &factor.hinv_c + &rhs_e));
        let w = -s_chol.solve(&(&kmat * &factor.hinv_d + &rhs_b));
        (g, w)
    } else {
        (DMatrix::zeros(0, nt), DVector::zeros(0))
    };
    let mm = -&factor.hinv_c - &hinv_kt * &g;
    let r = -&factor.hinv_d - &hinv_kt * &w;

    // Polytope rows P θ ≤ q: primal feasibility of inactive rows, then
    // nonnegativity of the active multipliers.
    let inactive: Vec<usize> = (0..m).filter(|i| active.binary_search(i).is_err()).collect();
    let rows = inactive.len() + k;
    let mut poly_a = DMatrix::zeros(rows, nt);
    let mut poly_b = DVector::zeros(rows);
    for (j, &i) in inactive.iter().enumerate() {
        let ai = prob.a_in.row(i);
        poly_a.row_mut(j).copy_from(&(ai * &mm - prob.e_in.row(i)));
        poly_b[j] = prob.b_in[i] - (ai * &r)[0];
    }
    for j in 0..k {
        let row = inactive.len() + j;
        poly_a.row_mut(row).copy_from(&(-g.row(j)));
        poly_b[row] = w[j];
    }

    Ok(CriticalRegion {
        active: active.to_vec(),
        n_eq: p,
        g,
        w,
        m: mm,
        r,
        poly_a,
        poly_b,
        n_ineq: m,
    })
}

impl CriticalRegion {
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Stable text form of the active set.
    pub fn signature(&self) -> String {
        signature(&self.active)
    }

    pub fn g1(&self) -> DMatrix<f64> {
        self.g.rows(0, self.active.len()).into_owned()
    }
    pub fn g2(&self) -> DMatrix<f64> {
        self.g.rows(self.active.len(), self.n_eq).into_owned()
    }
    pub fn w1(&self) -> DVector<f64> {
        self.w.rows(0, self.active.len()).into_owned()
    }
    pub fn w2(&self) -> DVector<f64> {
        self.w.rows(self.active.len(), self.n_eq).into_owned()
    }
    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }
    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }
    pub fn polytope(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.poly_a, &self.poly_b)
    }
    pub fn n_polytope_rows(&self) -> usize {
        self.poly_b.len()
    }

    fn check_dim(&self, theta: &DVector<f64>) -> Result<(), RegionError> {
        if theta.len() != self.poly_a.ncols() {
            return Err(RegionError::Dimension {
                expected: self.poly_a.ncols(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// Largest polytope-row violation `max(Pθ − q)`; nonpositive inside.
    pub fn violation(&self, theta: &DVector<f64>) -> f64 {
        if self.poly_b.is_empty() {
            return f64::NEG_INFINITY;
        }
        (&self.poly_a * theta - &self.poly_b).max()
    }

    pub fn contains(&self, theta: &DVector<f64>, eps_mem: f64) -> bool {
        theta.len() == self.poly_a.ncols() && self.violation(theta) <= eps_mem
    }

    /// Affine maps evaluated without a membership check.
    pub fn eval(&self, theta: &DVector<f64>) -> RegionSolution {
        let x = &self.m * theta + &self.r;
        let duals = &self.g * theta + &self.w;
        let mut lambda = DVector::zeros(self.n_ineq);
        for (j, &i) in self.active.iter().enumerate() {
            lambda[i] = duals[j];
        }
        let mu = duals.rows(self.active.len(), self.n_eq).into_owned();
        RegionSolution { x, lambda, mu }
    }

    pub fn solution_at(&self, theta: &DVector<f64>, eps_mem: f64) -> Result<RegionSolution, RegionError> {
        self.check_dim(theta)?;
        if !self.contains(theta, eps_mem) {
            return Err(RegionError::NotInRegion);
        }
        Ok(self.eval(theta))
    }
}

pub fn signature(active: &[usize]) -> String {
    let parts: Vec<String> = active.iter().map(|i| i.to_string()).collect();
    format!("[{}]", parts.join(","))
}
