//! Assembly of the penalized dispatch problem as a multiparametric QP
//!
//! ```text
//! min ½xᵀHx + (Cθ + d)ᵀx   s.t.  A x ≤ E θ + b,   B x = F θ + f
//! ```
//!
//! Variables are `x = [q^g (one per DER bus); v0; v_reg (one per regulator); s]`.
//! Parameters are `θ = [p^c; q^c (non-substation buses); p^g; headroom (DER buses)]`.
//! Every bus voltage is an affine function of `(x, θ)`; the same map feeds
//! the constraint rows and the statistics.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::BuildError;
use crate::feeder::{partition_by_regulators, sensitivity_matrices, FeederModel, RegulatorKind};
use crate::linalg;
use crate::qp::{solve_qp, QpInstance, QpSettings, QpStatus};

/// Provisional linear slack penalty used until calibration.
pub const DEFAULT_ETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    InverterCap,
    RemoteReg,
    LocalRegEq,
    LdcRegEq,
    RegInput,
    VoltageLo,
    VoltageHi,
    SlackNonneg,
    Other,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::InverterCap => "inverter-cap",
            Family::RemoteReg => "remote-reg",
            Family::LocalRegEq => "local-reg-eq",
            Family::LdcRegEq => "ldc-reg-eq",
            Family::RegInput => "reg-input",
            Family::VoltageLo => "voltage-lo",
            Family::VoltageHi => "voltage-hi",
            Family::SlackNonneg => "slack-nonneg",
            Family::Other => "other",
        }
    }

    /// Inequality families whose hard/soft assignment may be changed.
    pub fn is_movable(self) -> bool {
        matches!(
            self,
            Family::InverterCap
                | Family::RemoteReg
                | Family::RegInput
                | Family::VoltageLo
                | Family::VoltageHi
        )
    }

    fn default_kind(self) -> RowKind {
        match self {
            Family::RegInput | Family::VoltageLo | Family::VoltageHi => RowKind::Soft,
            Family::SlackNonneg => RowKind::Slack,
            _ => RowKind::Hard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Hard,
    Soft,
    /// The row `−s ≤ 0`.
    Slack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowLabel {
    pub family: Family,
    pub element: String,
    pub kind: RowKind,
}

impl RowLabel {
    pub fn display(&self) -> String {
        format!("{}[{}]:{:?}", self.family.name(), self.element, self.kind).to_lowercase()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuilderConfig {
    pub beta: f64,
    pub vmin: f64,
    pub vmax: f64,
    /// Quadratic slack penalty; defaults to the largest eigenvalue of the
    /// unpenalized Hessian.
    pub nu: Option<f64>,
    /// Linear slack penalty; normally set by calibration.
    pub eta: Option<f64>,
    pub ridge: f64,
    /// Families moved to the soft set.
    pub soft: Vec<Family>,
    /// Families moved to the hard set.
    pub hard: Vec<Family>,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            vmin: 0.97,
            vmax: 1.03,
            nu: None,
            eta: None,
            ridge: 1e-8,
            soft: Vec::new(),
            hard: Vec::new(),
        }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        let bad = |m: String| Err(BuildError::Config(m));
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !(self.vmin < self.vmax) {
            return bad(format!("vmin {} must be below vmax {}", self.vmin, self.vmax));
        }
        if !(self.ridge >= 0.0) {
            return bad(format!("ridge must be >= 0, got {}", self.ridge));
        }
        if self.beta == 0.0 && self.ridge == 0.0 {
            return bad("beta = 0 with ridge = 0 leaves the substation voltage without curvature".into());
        }
        if let Some(nu) = self.nu {
            if !(nu > 0.0) {
                return bad(format!("nu must be > 0, got {nu}"));
            }
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return bad(format!("eta must be > 0, got {eta}"));
            }
        }
        for f in self.soft.iter().chain(&self.hard) {
            if !f.is_movable() {
                return bad(format!("family '{}' cannot be reassigned", f.name()));
            }
        }
        if let Some(f) = self.soft.iter().find(|f| self.hard.contains(f)) {
            return bad(format!("family '{}' listed as both hard and soft", f.name()));
        }
        Ok(())
    }

    fn kind_of(&self, family: Family) -> RowKind {
        if self.soft.contains(&family) {
            RowKind::Soft
        } else if self.hard.contains(&family) {
            RowKind::Hard
        } else {
            family.default_kind()
        }
    }
}

/// Variable positions in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    pub der_buses: Vec<usize>,
    pub n_reg: usize,
    pub has_slack: bool,
}

impl VariableLayout {
    pub fn n_der(&self) -> usize {
        self.der_buses.len()
    }
    pub fn q(&self, i: usize) -> usize {
        i
    }
    pub fn v0(&self) -> usize {
        self.n_der()
    }
    pub fn vreg(&self, k: usize) -> usize {
        self.n_der() + 1 + k
    }
    pub fn s(&self) -> Option<usize> {
        self.has_slack.then(|| self.n_der() + 1 + self.n_reg)
    }
    pub fn n(&self) -> usize {
        self.n_der() + 1 + self.n_reg + usize::from(self.has_slack)
    }
}

/// Parameter positions in `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaLayout {
    pub n_bus: usize,
    pub der_buses: Vec<usize>,
}

impl ThetaLayout {
    pub fn new(feeder: &FeederModel) -> Self {
        Self {
            n_bus: feeder.n_buses(),
            der_buses: feeder.der_buses(),
        }
    }
    fn n_load(&self) -> usize {
        self.n_bus - 1
    }
    /// Active load of bus `b ≥ 1`.
    pub fn pc(&self, b: usize) -> usize {
        b - 1
    }
    /// Reactive load of bus `b ≥ 1`.
    pub fn qc(&self, b: usize) -> usize {
        self.n_load() + b - 1
    }
    /// Scaled solar output of the `i`-th DER.
    pub fn pg(&self, i: usize) -> usize {
        2 * self.n_load() + i
    }
    /// Reactive headroom of the `i`-th DER.
    pub fn headroom(&self, i: usize) -> usize {
        2 * self.n_load() + self.der_buses.len() + i
    }
    pub fn n(&self) -> usize {
        2 * self.n_load() + 2 * self.der_buses.len()
    }
}

/// Bus voltages as `v = Vx x + Vθ θ + vc`, one row per bus.
#[derive(Debug, Clone)]
pub struct VoltageMap {
    pub vx: DMatrix<f64>,
    pub vth: DMatrix<f64>,
    pub vc: DVector<f64>,
}

impl VoltageMap {
    pub fn eval(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        &self.vx * x + &self.vth * theta + &self.vc
    }

    pub fn bus(&self, b: usize, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        self.vx.row(b).dot(&x.transpose()) + self.vth.row(b).dot(&theta.transpose()) + self.vc[b]
    }
}

/// Feeder-specific structure attached to a built problem.
#[derive(Debug, Clone)]
pub struct FeederLayout {
    pub vars: VariableLayout,
    pub theta: ThetaLayout,
    pub voltage: VoltageMap,
    pub bus_ids: Vec<String>,
    /// (input bus, output bus, kind) per regulator.
    pub regulators: Vec<(usize, usize, RegulatorKind)>,
    pub vmin: f64,
    pub vmax: f64,
}

/// Scale factors applied to the original problem data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub cost: f64,
    pub inequality: f64,
    pub equality: f64,
}

impl Default for ScalingRecord {
    fn default() -> Self {
        Self {
            cost: 1.0,
            inequality: 1.0,
            equality: 1.0,
        }
    }
}

impl ScalingRecord {
    /// Inequality multipliers of the original problem from the scaled ones.
    pub fn inequality_duals(&self, lambda: &DVector<f64>) -> DVector<f64> {
        lambda * (self.cost / self.inequality)
    }

    pub fn equality_duals(&self, mu: &DVector<f64>) -> DVector<f64> {
        mu * (self.cost / self.equality)
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone)]
pub struct MpqpProblem {
    pub h: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub e_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub f_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub ineq_labels: Vec<RowLabel>,
    pub eq_labels: Vec<RowLabel>,
    pub var_names: Vec<String>,
    pub theta_names: Vec<String>,
    pub slack: Option<usize>,
    pub model: Option<FeederLayout>,
    pub scaling: ScalingRecord,
    /// Slack penalties in original units.
    pub nu: f64,
    pub eta: f64,
}

impl MpqpProblem {
    /// A problem from raw matrices; rows are labeled as hard `other`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_matrices(
        h: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DVector<f64>,
        a_in: DMatrix<f64>,
        e_in: DMatrix<f64>,
        b_in: DVector<f64>,
        a_eq: DMatrix<f64>,
        f_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
    ) -> Result<Self, BuildError> {
        let n = d.len();
        let nt = c.ncols();
        let m = b_in.len();
        let p = b_eq.len();
        let check = |ok: bool, expected: usize, got: usize| {
            if ok {
                Ok(())
            } else {
                Err(BuildError::Dimension { expected, got })
            }
        };
        check(h.nrows() == n && h.ncols() == n, n, h.nrows())?;
        check(c.nrows() == n, n, c.nrows())?;
        check(a_in.nrows() == m && a_in.ncols() == n, n, a_in.ncols())?;
        check(e_in.nrows() == m && e_in.ncols() == nt, nt, e_in.ncols())?;
        check(a_eq.nrows() == p && a_eq.ncols() == n, n, a_eq.ncols())?;
        check(f_eq.nrows() == p && f_eq.ncols() == nt, nt, f_eq.ncols())?;
        if linalg::cholesky(&h).is_none() {
            return Err(BuildError::Model("H is not positive definite".into()));
        }
        let label = |i: usize| RowLabel {
            family: Family::Other,
            element: i.to_string(),
            kind: RowKind::Hard,
        };
        Ok(Self {
            h,
            c,
            d,
            a_in,
            e_in,
            b_in,
            a_eq,
            f_eq,
            b_eq,
            ineq_labels: (0..m).map(label).collect(),
            eq_labels: (0..p).map(label).collect(),
            var_names: (0..n).map(|i| format!("x{i}")).collect(),
            theta_names: (0..nt).map(|i| format!("theta{i}")).collect(),
            slack: None,
            model: None,
            scaling: ScalingRecord::default(),
            nu: 0.0,
            eta: 0.0,
        })
    }

    pub fn n_x(&self) -> usize {
        self.d.len()
    }

    pub fn n_theta(&self) -> usize {
        self.c.ncols()
    }

    pub fn n_ineq(&self) -> usize {
        self.b_in.len()
    }

    pub fn n_eq(&self) -> usize {
        self.b_eq.len()
    }

    /// The QP at a fixed parameter value.
    pub fn instance(&self, theta: &DVector<f64>) -> QpInstance {
        QpInstance {
            h: self.h.clone(),
            c: &self.c * theta + &self.d,
            a_in: self.a_in.clone(),
            b_in: &self.e_in * theta + &self.b_in,
            a_eq: self.a_eq.clone(),
            b_eq: &self.f_eq * theta + &self.b_eq,
        }
    }

    pub fn objective(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + (&self.c * theta + &self.d).dot(x)
    }

    /// `A x − E θ − b` on the current (possibly scaled) rows.
    pub fn ineq_residuals(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        &self.a_in * x - &self.e_in * theta - &self.b_in
    }

    /// Inequality residuals in original units with the slack term removed.
    pub fn unscaled_residuals_without_slack(
        &self,
        x: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> DVector<f64> {
        let mut r = self.ineq_residuals(x, theta);
        if let Some(s) = self.slack {
            for i in 0..r.len() {
                r[i] -= self.a_in[(i, s)] * x[s];
            }
        }
        r * self.scaling.inequality
    }

    pub fn rows_of_kind(&self, kind: RowKind) -> Vec<usize> {
        self.ineq_labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    /// Hessian of the unpenalized cost in original units.
    pub fn f_hessian(&self) -> DMatrix<f64> {
        let keep: Vec<usize> = (0..self.n_x()).filter(|&i| Some(i) != self.slack).collect();
        self.h.select_rows(&keep).select_columns(&keep) * self.scaling.cost
    }

    /// Same problem with a different linear slack penalty (original units).
    pub fn with_eta(&self, eta: f64) -> Self {
        let mut out = self.clone();
        if let Some(s) = out.slack {
            out.d[s] = eta / out.scaling.cost;
        }
        out.eta = eta;
        out
    }

    /// Same problem with a different quadratic slack penalty (original units).
    pub fn with_nu(&self, nu: f64) -> Self {
        let mut out = self.clone();
        if let Some(s) = out.slack {
            out.h[(s, s)] = 2.0 * nu / out.scaling.cost;
        }
        out.nu = nu;
        out
    }

    /// The unrelaxed problem: slack variable and its row removed, soft rows
    /// kept as plain inequalities.
    pub fn without_slack(&self) -> Self {
        let Some(s) = self.slack else {
            return self.clone();
        };
        let keep: Vec<usize> = (0..self.n_x()).filter(|&i| i != s).collect();
        let rows: Vec<usize> = (0..self.n_ineq())
            .filter(|&i| self.ineq_labels[i].kind != RowKind::Slack)
            .collect();
        let mut out = self.clone();
        out.h = self.h.select_rows(&keep).select_columns(&keep);
        out.c = self.c.select_rows(&keep);
        out.d = self.d.select_rows(&keep);
        out.a_in = self.a_in.select_rows(&rows).select_columns(&keep);
        out.e_in = self.e_in.select_rows(&rows);
        out.b_in = self.b_in.select_rows(&rows);
        out.a_eq = self.a_eq.select_columns(&keep);
        out.ineq_labels = rows.iter().map(|&i| self.ineq_labels[i].clone()).collect();
        out.var_names = keep.iter().map(|&i| self.var_names[i].clone()).collect();
        out.slack = None;
        if let Some(model) = out.model.as_mut() {
            model.vars.has_slack = false;
            model.voltage.vx = self.model.as_ref().unwrap().voltage.vx.select_columns(&keep);
        }
        out
    }

    /// Uniformly relaxed unrelaxed problem: soft rows loosened by `t`.
    pub fn relaxed_by(&self, t: f64) -> Self {
        let mut out = self.without_slack();
        for (i, l) in out.ineq_labels.iter().enumerate() {
            if l.kind == RowKind::Soft {
                out.b_in[i] += t / out.scaling.inequality;
            }
        }
        out
    }

    pub fn bus_voltages(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Option<DVector<f64>> {
        self.model.as_ref().map(|m| m.voltage.eval(x, theta))
    }

    /// Plain-text matrix dump with labeled rows and a fixed column order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, tag: &str, name: &str, vals: &mut dyn Iterator<Item = f64>| {
            let _ = write!(out, "{tag}\t{name}");
            for v in vals {
                let _ = write!(out, "\t{v:e}");
            }
            out.push('\n');
        };
        let _ = writeln!(out, "# x\t{}", self.var_names.join("\t"));
        let _ = writeln!(out, "# theta\t{}", self.theta_names.join("\t"));
        let _ = writeln!(
            out,
            "# scaling\tcost={:e}\tinequality={:e}\tequality={:e}\tnu={:e}\teta={:e}",
            self.scaling.cost, self.scaling.inequality, self.scaling.equality, self.nu, self.eta
        );
        for i in 0..self.n_x() {
            row(&mut out, "H", &self.var_names[i], &mut self.h.row(i).iter().copied());
        }
        for i in 0..self.n_x() {
            row(&mut out, "C", &self.var_names[i], &mut self.c.row(i).iter().copied());
        }
        row(&mut out, "d", "-", &mut self.d.iter().copied());
        for i in 0..self.n_ineq() {
            let name = self.ineq_labels[i].display();
            row(&mut out, "A", &name, &mut self.a_in.row(i).iter().copied());
            row(&mut out, "E", &name, &mut self.e_in.row(i).iter().copied());
            row(&mut out, "b", &name, &mut std::iter::once(self.b_in[i]));
        }
        for i in 0..self.n_eq() {
            let name = self.eq_labels[i].display();
            row(&mut out, "B", &name, &mut self.a_eq.row(i).iter().copied());
            row(&mut out, "F", &name, &mut self.f_eq.row(i).iter().copied());
            row(&mut out, "f", &name, &mut std::iter::once(self.b_eq[i]));
        }
        out
    }
}

fn zero_rows(r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::zeros(r, c)
}

/// Per-bus sums over full downstream subtrees (children carry larger indices).
fn subtree_sums(feeder: &FeederModel, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = m.clone();
    for b in (1..feeder.n_buses()).rev() {
        let p = feeder.parent(b).expect("non-root bus");
        let row = s.row(b).into_owned();
        let mut target = s.row_mut(p);
        target += row;
    }
    s
}

struct Objective {
    h: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DVector<f64>,
}

impl Objective {
    /// Adds `w (aᵀx + eᵀθ + k)²`.
    fn add_square(&mut self, w: f64, a: &DVector<f64>, e: &DVector<f64>, k: f64) {
        if w == 0.0 {
            return;
        }
        self.h += (2.0 * w) * a * a.transpose();
        self.c += (2.0 * w) * a * e.transpose();
        self.d += (2.0 * w * k) * a;
    }
}

#[derive(Default)]
struct Rows {
    a: Vec<DVector<f64>>,
    e: Vec<DVector<f64>>,
    b: Vec<f64>,
    labels: Vec<RowLabel>,
}

impl Rows {
    /// Records `axᵀx + atᵀθ + k (≤ or =) 0`.
    fn push(&mut self, ax: DVector<f64>, at: &DVector<f64>, k: f64, label: RowLabel) {
        self.a.push(ax);
        self.e.push(-at);
        self.b.push(-k);
        self.labels.push(label);
    }

    fn into_parts(self, nx: usize, nt: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, Vec<RowLabel>) {
        let m = self.b.len();
        let mut a = DMatrix::zeros(m, nx);
        let mut e = DMatrix::zeros(m, nt);
        for i in 0..m {
            a.row_mut(i).copy_from(&self.a[i].transpose());
            e.row_mut(i).copy_from(&self.e[i].transpose());
        }
        (a, e, DVector::from_vec(self.b), self.labels)
    }
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}

/// Build the penalized problem for a feeder.
pub fn build_problem(feeder: &FeederModel, cfg: &BuilderConfig) -> Result<MpqpProblem, BuildError> {
    cfg.validate()?;
    let n_bus = feeder.n_buses();
    let der = feeder.der_buses();
    if der.contains(&0) {
        return Err(BuildError::Model("the substation cannot host a DER".into()));
    }
    let regs = feeder.regulators();
    let vars = VariableLayout {
        der_buses: der.clone(),
        n_reg: regs.len(),
        has_slack: true,
    };
    let th = ThetaLayout::new(feeder);
    let (nx, nt) = (vars.n(), th.n());
    let s_idx = vars.s().expect("slack present");

    // Net injections p = Pθ θ, q = Qx x + Qθ θ, one row per bus.
    let mut pt = zero_rows(n_bus, nt);
    let mut qx = zero_rows(n_bus, nx);
    let mut qt = zero_rows(n_bus, nt);
    for b in 1..n_bus {
        pt[(b, th.pc(b))] = -1.0;
        qt[(b, th.qc(b))] = -1.0;
    }
    for (i, &b) in der.iter().enumerate() {
        pt[(b, th.pg(i))] += 1.0;
        qx[(b, vars.q(i))] = 1.0;
    }
    let (spt, sqx, sqt) = (
        subtree_sums(feeder, &pt),
        subtree_sums(feeder, &qx),
        subtree_sums(feeder, &qt),
    );

    // A regulator's input bus also carries everything downstream of the regulator.
    let (mut ept, mut eqx, mut eqt) = (pt.clone(), qx.clone(), qt.clone());
    for r in regs {
        let (m, n) = (r.input, r.output);
        let add = |dst: &mut DMatrix<f64>, src: &DMatrix<f64>| {
            let row = src.row(n).into_owned();
            let mut t = dst.row_mut(m);
            t += row;
        };
        add(&mut ept, &spt);
        add(&mut eqx, &sqx);
        add(&mut eqt, &sqt);
    }

    let mut obj = Objective {
        h: DMatrix::zeros(nx, nx),
        c: DMatrix::zeros(nx, nt),
        d: DVector::zeros(nx),
    };
    let mut vx = zero_rows(n_bus, nx);
    let mut vt = zero_rows(n_bus, nt);
    vx[(0, vars.v0())] = 1.0;
    for g in partition_by_regulators(feeder) {
        let root_var = match g.regulator {
            None => vars.v0(),
            Some(k) => vars.vreg(k),
        };
        if g.root != 0 {
            vx[(g.root, root_var)] = 1.0;
        }
        if g.fed.is_empty() {
            continue;
        }
        let sens = sensitivity_matrices(&g, feeder);
        let idx = &sens.buses;
        let gpt = ept.select_rows(idx);
        let gqx = eqx.select_rows(idx);
        let gqt = eqt.select_rows(idx);
        let gvx = &sens.x * &gqx;
        let gvt = &sens.r * &gpt + &sens.x * &gqt;
        for (j, &b) in idx.iter().enumerate() {
            vx.row_mut(b).copy_from(&gvx.row(j));
            vx[(b, root_var)] += 1.0;
            vt.row_mut(b).copy_from(&gvt.row(j));
        }
        // losses: only the reactive part depends on x
        let rq = &sens.r * &gqx;
        obj.h += (2.0 * (1.0 - cfg.beta)) * gqx.transpose() * &rq;
        obj.c += (2.0 * (1.0 - cfg.beta)) * gqx.transpose() * (&sens.r * &gqt);
    }
    let vc = DVector::zeros(n_bus);

    let row_x = |b: usize| vx.row(b).transpose();
    let row_t = |b: usize| vt.row(b).transpose();
    for b in 0..n_bus {
        obj.add_square(cfg.beta, &row_x(b), &row_t(b), vc[b] - 1.0);
    }
    let zt = DVector::zeros(nt);
    obj.add_square(cfg.ridge, &unit(nx, vars.v0()), &zt, -1.0);
    for k in 0..regs.len() {
        obj.add_square(cfg.ridge, &unit(nx, vars.vreg(k)), &zt, -1.0);
    }

    let f_hess = {
        let keep: Vec<usize> = (0..nx).filter(|&i| i != s_idx).collect();
        obj.h.select_rows(&keep).select_columns(&keep)
    };
    let nu = match cfg.nu {
        Some(nu) => nu,
        None => linalg::lambda_max(&f_hess),
    };
    let eta = cfg.eta.unwrap_or(DEFAULT_ETA);
    obj.h[(s_idx, s_idx)] += 2.0 * nu;
    obj.d[s_idx] += eta;
    if linalg::cholesky(&obj.h).is_none() {
        return Err(BuildError::Model(
            "quadratic cost is not positive definite (a DER may have no effect on any voltage)".into(),
        ));
    }

    let id = |b: usize| feeder.bus_id(b).to_string();
    let pair = |m: usize, n: usize| format!("{}-{}", id(m), id(n));
    let label = |family: Family, element: String| RowLabel {
        kind: cfg.kind_of(family),
        family,
        element,
    };

    let mut ineq = Rows::default();
    for (i, &b) in der.iter().enumerate() {
        let h = unit(nt, th.headroom(i));
        ineq.push(unit(nx, vars.q(i)), &(-&h), 0.0, label(Family::InverterCap, format!("{}:upper", id(b))));
        ineq.push(-unit(nx, vars.q(i)), &(-&h), 0.0, label(Family::InverterCap, format!("{}:lower", id(b))));
    }
    for r in regs.iter().filter(|r| r.kind == RegulatorKind::Remote) {
        let (m, n) = (r.input, r.output);
        // 0.9 v_m − v_n ≤ 0 and v_n − 1.1 v_m ≤ 0
        ineq.push(
            0.9 * row_x(m) - row_x(n),
            &(0.9 * row_t(m) - row_t(n)),
            0.9 * vc[m] - vc[n],
            label(Family::RemoteReg, format!("{}:lower", pair(m, n))),
        );
        ineq.push(
            row_x(n) - 1.1 * row_x(m),
            &(row_t(n) - 1.1 * row_t(m)),
            vc[n] - 1.1 * vc[m],
            label(Family::RemoteReg, format!("{}:upper", pair(m, n))),
        );
    }
    for r in regs.iter().filter(|r| r.kind != RegulatorKind::Remote) {
        let m = r.input;
        let (lo, hi) = r.input_window();
        ineq.push(row_x(m), &row_t(m), vc[m] - hi, label(Family::RegInput, format!("{}:upper", pair(m, r.output))));
        ineq.push(-row_x(m), &(-row_t(m)), lo - vc[m], label(Family::RegInput, format!("{}:lower", pair(m, r.output))));
    }
    for b in 1..n_bus {
        ineq.push(row_x(b), &row_t(b), vc[b] - cfg.vmax, label(Family::VoltageHi, id(b)));
        ineq.push(-row_x(b), &(-row_t(b)), cfg.vmin - vc[b], label(Family::VoltageLo, id(b)));
    }
    ineq.push(
        -unit(nx, s_idx),
        &zt,
        0.0,
        RowLabel {
            family: Family::SlackNonneg,
            element: "s".into(),
            kind: RowKind::Slack,
        },
    );
    for (i, l) in ineq.labels.iter().enumerate() {
        if l.kind == RowKind::Soft {
            ineq.a[i][s_idx] = -1.0;
        }
    }

    let mut eq = Rows::default();
    for r in regs {
        let (m, n) = (r.input, r.output);
        match r.kind {
            RegulatorKind::Remote => {}
            RegulatorKind::Local => eq.push(
                row_x(n),
                &row_t(n),
                vc[n] - r.vref,
                RowLabel {
                    family: Family::LocalRegEq,
                    element: pair(m, n),
                    kind: RowKind::Hard,
                },
            ),
            RegulatorKind::Ldc => {
                // v_n − r_ldc P_mn − x_ldc Q_mn = vref, with P_mn = −(subtree sum of p at n)
                let ax = row_x(n) + r.x_ldc * sqx.row(n).transpose();
                let at = row_t(n) + r.r_ldc * spt.row(n).transpose() + r.x_ldc * sqt.row(n).transpose();
                eq.push(
                    ax,
                    &at,
                    vc[n] - r.vref,
                    RowLabel {
                        family: Family::LdcRegEq,
                        element: pair(m, n),
                        kind: RowKind::Hard,
                    },
                );
            }
        }
    }

    let (a_in, e_in, b_in, ineq_labels) = ineq.into_parts(nx, nt);
    let (a_eq, f_eq, b_eq, eq_labels) = eq.into_parts(nx, nt);

    let mut var_names: Vec<String> = der.iter().map(|&b| format!("qg:{}", id(b))).collect();
    var_names.push("v0".into());
    var_names.extend(regs.iter().map(|r| format!("vreg:{}", pair(r.input, r.output))));
    var_names.push("s".into());
    let mut theta_names: Vec<String> = (1..n_bus).map(|b| format!("pc:{}", id(b))).collect();
    theta_names.extend((1..n_bus).map(|b| format!("qc:{}", id(b))));
    theta_names.extend(der.iter().map(|&b| format!("pg:{}", id(b))));
    theta_names.extend(der.iter().map(|&b| format!("headroom:{}", id(b))));

    Ok(MpqpProblem {
        h: obj.h,
        c: obj.c,
        d: obj.d,
        a_in,
        e_in,
        b_in,
        a_eq,
        f_eq,
        b_eq,
        ineq_labels,
        eq_labels,
        var_names,
        theta_names,
        slack: Some(s_idx),
        model: Some(FeederLayout {
            vars,
            theta: th,
            voltage: VoltageMap { vx, vth: vt, vc },
            bus_ids: (0..n_bus).map(id).collect(),
            regulators: regs.iter().map(|r| (r.input, r.output, r.kind)).collect(),
            vmin: cfg.vmin,
            vmax: cfg.vmax,
        }),
        scaling: ScalingRecord::default(),
        nu,
        eta,
    })
}

/// Divide the cost block by ‖H‖₂, the inequality block by ‖A‖₂ and the
/// equality block by ‖B‖₂. Applied to an already scaled problem, the
/// returned record composes with the earlier one.
pub fn scale_problem(prob: &MpqpProblem) -> (MpqpProblem, ScalingRecord) {
    let sh = linalg::spectral_norm(&prob.h);
    let sa = match linalg::spectral_norm(&prob.a_in) {
        v if v > 0.0 => v,
        _ => 1.0,
    };
    let sb = match linalg::spectral_norm(&prob.a_eq) {
        v if v > 0.0 => v,
        _ => 1.0,
    };
    let mut out = prob.clone();
    out.h /= sh;
    out.c /= sh;
    out.d /= sh;
    out.a_in /= sa;
    out.e_in /= sa;
    out.b_in /= sa;
    out.a_eq /= sb;
    out.f_eq /= sb;
    out.b_eq /= sb;
    out.scaling = ScalingRecord {
        cost: prob.scaling.cost * sh,
        inequality: prob.scaling.inequality * sa,
        equality: prob.scaling.equality * sb,
    };
    let rec = out.scaling;
    (out, rec)
}

/// Ten times the largest soft-row multiplier sum of the unrelaxed problem
/// over the given samples; infeasible samples are skipped.
pub fn calibrate_eta(prob: &MpqpProblem, thetas: &[DVector<f64>]) -> Result<f64, BuildError> {
    let base = prob.without_slack();
    let work = if base.scaling.is_identity() {
        scale_problem(&base).0
    } else {
        base
    };
    let soft = work.rows_of_kind(RowKind::Soft);
    let settings = QpSettings::default();
    let mut best: Option<f64> = None;
    for (i, theta) in thetas.iter().enumerate() {
        if theta.len() != work.n_theta() {
            return Err(BuildError::Dimension {
                expected: work.n_theta(),
                got: theta.len(),
            });
        }
        let sol = solve_qp(&work.instance(theta), &settings)
            .map_err(|e| BuildError::Model(e.to_string()))?;
        if sol.status != QpStatus::Optimal {
            log::warn!("eta calibration: sample {i} skipped ({:?})", sol.status);
            continue;
        }
        let lam = work.scaling.inequality_duals(&sol.lambda);
        let sum: f64 = soft.iter().map(|&r| lam[r].max(0.0)).sum();
        best = Some(best.map_or(sum, |b: f64| b.max(sum)));
    }
    best.map(|b| 10.0 * b).ok_or(BuildError::AllInfeasible)
}

/// Scenario quantities of one hour, indexed by dense bus index.
#[derive(Debug, Clone, Copy)]
pub struct BusInjections<'a> {
    pub pc: &'a [f64],
    pub qc: &'a [f64],
    /// Solar output at full penetration.
    pub pg: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisPoint {
    pub scaling: f64,
    pub oversize: f64,
    pub penetration: f64,
}

/// Parameter vector for one hour and one analysis point.
pub fn theta_map(
    layout: &ThetaLayout,
    feeder: &FeederModel,
    inj: BusInjections<'_>,
    ap: AnalysisPoint,
) -> Result<DVector<f64>, BuildError> {
    let n = layout.n_bus;
    for v in [inj.pc, inj.qc, inj.pg] {
        if v.len() != n {
            return Err(BuildError::Dimension {
                expected: n,
                got: v.len(),
            });
        }
    }
    if !(ap.penetration > 0.0 && ap.penetration <= 1.0) {
        return Err(BuildError::Config(format!("penetration {} outside (0, 1]", ap.penetration)));
    }
    if !(ap.scaling > 0.0) {
        return Err(BuildError::Config(format!("scaling {} must be > 0", ap.scaling)));
    }
    if !(ap.oversize >= 1.0) {
        return Err(BuildError::Config(format!("oversize {} must be >= 1", ap.oversize)));
    }
    let mut theta = DVector::zeros(layout.n());
    for b in 1..n {
        theta[layout.pc(b)] = ap.scaling * inj.pc[b];
        theta[layout.qc(b)] = ap.scaling * inj.qc[b];
    }
    for (i, &b) in layout.der_buses.iter().enumerate() {
        let gen = ap.penetration * ap.scaling * inj.pg[b];
        let rating = ap.oversize * feeder.buses()[b].p_rated;
        let under = rating * rating - gen * gen;
        if under < -1e-12 * rating * rating {
            return Err(BuildError::Headroom {
                bus: feeder.bus_id(b).to_string(),
                generation: gen,
                rating,
            });
        }
        theta[layout.pg(i)] = gen;
        theta[layout.headroom(i)] = under.max(0.0).sqrt();
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::load_feeder;

    fn single_line() -> FeederModel {
        load_feeder(
            r#"
substation = 0
buses = [{ id = 0 }, { id = 1, p_rated = 1.0, s_rated = 1.0 }]
lines = [{ from = 0, to = 1, r = 0.01, x = 0.02 }]
"#,
        )
        .unwrap()
    }

    fn chain_with(kind: &str, extra: &str) -> FeederModel {
        load_feeder(&format!(
            r#"
substation = 0
buses = [{{ id = 0 }}, {{ id = 1 }}, {{ id = 2 }}, {{ id = 3, p_rated = 0.5 }}]
lines = [
  {{ from = 0, to = 1, r = 0.01, x = 0.02 }},
  {{ from = 1, to = 2, r = 0.01, x = 0.02 }},
  {{ from = 2, to = 3, r = 0.02, x = 0.01 }},
]
regulators = [{{ from = 1, to = 2, kind = "{kind}" {extra} }}]
"#
        ))
        .unwrap()
    }

    fn theta_for(prob: &MpqpProblem, feeder: &FeederModel, pc: f64, pg: f64) -> DVector<f64> {
        let n = feeder.n_buses();
        let pcs: Vec<f64> = (0..n).map(|b| if b == 0 { 0.0 } else { pc }).collect();
        let qcs: Vec<f64> = pcs.iter().map(|p| 0.4 * p).collect();
        let pgs: Vec<f64> = (0..n).map(|b| if feeder.buses()[b].has_der() { pg } else { 0.0 }).collect();
        theta_map(
            &prob.model.as_ref().unwrap().theta,
            feeder,
            BusInjections { pc: &pcs, qc: &qcs, pg: &pgs },
            AnalysisPoint { scaling: 1.0, oversize: 1.1, penetration: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn single_line_layout_and_rows() {
        let f = single_line();
        let p = build_problem(&f, &BuilderConfig { beta: 0.2, ..Default::default() }).unwrap();
        assert_eq!(p.n_x(), 3);
        assert_eq!(p.var_names, vec!["qg:1", "v0", "s"]);
        let fams: Vec<(Family, RowKind)> = p.ineq_labels.iter().map(|l| (l.family, l.kind)).collect();
        assert_eq!(
            fams,
            vec![
                (Family::InverterCap, RowKind::Hard),
                (Family::InverterCap, RowKind::Hard),
                (Family::VoltageHi, RowKind::Soft),
                (Family::VoltageLo, RowKind::Soft),
                (Family::SlackNonneg, RowKind::Slack),
            ]
        );
        // v1 = v0 + r p + x q: the voltage-hi row is [x, 1, -1] with rhs 1.03
        assert_eq!(p.a_in.row(2).iter().copied().collect::<Vec<_>>(), vec![0.02, 1.0, -1.0]);
        assert!((p.b_in[2] - 1.03).abs() < 1e-15);
        assert_eq!(p.a_in.row(3).iter().copied().collect::<Vec<_>>(), vec![-0.02, -1.0, -1.0]);
        assert!((p.b_in[3] + 0.97).abs() < 1e-15);
        assert_eq!(p.a_in.row(4).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, -1.0]);
        // hard rows do not touch s
        assert_eq!(p.a_in[(0, 2)], 0.0);
        assert_eq!(p.a_in[(1, 2)], 0.0);
        // ±q ≤ headroom
        let hd = p.model.as_ref().unwrap().theta.headroom(0);
        assert_eq!(p.e_in[(0, hd)], 1.0);
        assert_eq!(p.e_in[(1, hd)], 1.0);
        assert!(linalg::lambda_min(&p.h) > 0.0);
    }

    #[test]
    fn remote_regulator_rows() {
        let f = chain_with("remote", "");
        let p = build_problem(&f, &BuilderConfig::default()).unwrap();
        let m = p.model.as_ref().unwrap();
        let rows: Vec<usize> = p
            .ineq_labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.family == Family::RemoteReg)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(rows.len(), 2);
        let vx = &m.voltage.vx;
        let expect_lo = 0.9 * vx.row(1) - vx.row(2);
        let expect_hi = vx.row(2) - 1.1 * vx.row(1);
        assert!((p.a_in.row(rows[0]) - expect_lo).amax() < 1e-15);
        assert!((p.a_in.row(rows[1]) - expect_hi).amax() < 1e-15);
        assert!(p.ineq_labels[rows[0]].kind == RowKind::Hard);
        // v2 is the regulator variable
        assert_eq!(vx[(2, m.vars.vreg(0))], 1.0);
    }

    #[test]
    fn local_regulator_equality_and_window() {
        let f = chain_with("local", ", vref = 1.0167, delta = 0.0083");
        let p = build_problem(&f, &BuilderConfig::default()).unwrap();
        assert_eq!(p.n_eq(), 1);
        assert_eq!(p.eq_labels[0].family, Family::LocalRegEq);
        let vr = p.model.as_ref().unwrap().vars.vreg(0);
        assert_eq!(p.a_eq[(0, vr)], 1.0);
        assert!((p.b_eq[0] - 1.0167).abs() < 1e-15);
        let win: Vec<usize> = p
            .ineq_labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.family == Family::RegInput)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(win.len(), 2);
        assert!((p.b_in[win[0]] - (1.0167 + 0.0083) / 0.9).abs() < 1e-12);
        assert!((p.b_in[win[1]] + (1.0167 - 0.0083) / 1.1).abs() < 1e-12);
        assert_eq!(p.ineq_labels[win[0]].kind, RowKind::Soft);
    }

    #[test]
    fn ldc_equality_uses_downstream_flow() {
        let f = chain_with("ldc", ", vref = 1.02, r_ldc = 0.05, x_ldc = 0.1");
        let p = build_problem(&f, &BuilderConfig::default()).unwrap();
        let m = p.model.as_ref().unwrap();
        let th = &m.theta;
        // P_12 = pc2 + pc3 − pg3, so the row carries −r_ldc on pc and +r_ldc on pg in F
        assert!((p.f_eq[(0, th.pc(2))] - 0.05).abs() < 1e-15);
        assert!((p.f_eq[(0, th.pc(3))] - 0.05).abs() < 1e-15);
        assert!((p.f_eq[(0, th.pg(0))] + 0.05).abs() < 1e-15);
        // −x_ldc Q_12 = x_ldc (q^g_3 − ...)
        assert!((p.a_eq[(0, m.vars.q(0))] - 0.1).abs() < 1e-15);
    }

    /// Voltages from the affine map equal a line-by-line drop walk with
    /// explicit downstream flows and regulator outputs.
    #[test]
    fn voltage_map_matches_drop_walk() {
        for kind in ["remote", "local"] {
            let extra = if kind == "local" { ", vref = 1.01" } else { "" };
            let f = chain_with(kind, extra);
            let p = build_problem(&f, &BuilderConfig::default()).unwrap();
            let m = p.model.as_ref().unwrap();
            let theta = theta_for(&p, &f, 0.1, 0.3);
            let x = DVector::from_vec(vec![0.05, 1.01, 0.98, 0.0]);
            let v = m.voltage.eval(&x, &theta);
            // injections
            let n = f.n_buses();
            let mut pinj = vec![0.0; n];
            let mut qinj = vec![0.0; n];
            for b in 1..n {
                pinj[b] = -theta[m.theta.pc(b)];
                qinj[b] = -theta[m.theta.qc(b)];
            }
            pinj[3] += theta[m.theta.pg(0)];
            qinj[3] += x[0];
            let mut walk = vec![0.0; n];
            walk[0] = x[1];
            for b in 1..n {
                if f.regulator_at_output(b).is_some() {
                    walk[b] = x[2];
                    continue;
                }
                let l = f.feeding_line(b).unwrap();
                let down = f.subtree(b);
                let pf: f64 = -down.iter().map(|&i| pinj[i]).sum::<f64>();
                let qf: f64 = -down.iter().map(|&i| qinj[i]).sum::<f64>();
                walk[b] = walk[l.from] - l.r * pf - l.x * qf;
            }
            for b in 0..n {
                assert!((v[b] - walk[b]).abs() < 1e-14, "{kind} bus {b}: {} vs {}", v[b], walk[b]);
            }
        }
    }

    #[test]
    fn config_errors() {
        let f = single_line();
        let bad = BuilderConfig { beta: 0.0, ridge: 0.0, ..Default::default() };
        assert!(matches!(build_problem(&f, &bad), Err(BuildError::Config(_))));
        let bad = BuilderConfig { beta: 1.5, ..Default::default() };
        assert!(matches!(build_problem(&f, &bad), Err(BuildError::Config(_))));
        let bad = BuilderConfig { soft: vec![Family::LocalRegEq], ..Default::default() };
        assert!(matches!(build_problem(&f, &bad), Err(BuildError::Config(_))));
        let bad = BuilderConfig {
            soft: vec![Family::InverterCap],
            hard: vec![Family::InverterCap],
            ..Default::default()
        };
        assert!(matches!(build_problem(&f, &bad), Err(BuildError::Config(_))));
        // beta = 0 with the default ridge is accepted
        let ok = BuilderConfig { beta: 0.0, ..Default::default() };
        assert!(build_problem(&f, &ok).is_ok());
    }

    #[test]
    fn family_overrides() {
        let f = chain_with("local", ", vref = 1.0167");
        let cfg = BuilderConfig {
            soft: vec![Family::InverterCap],
            hard: vec![Family::RegInput],
            ..Default::default()
        };
        let p = build_problem(&f, &cfg).unwrap();
        let s = p.slack.unwrap();
        for (i, l) in p.ineq_labels.iter().enumerate() {
            match l.family {
                Family::InverterCap => assert_eq!((l.kind, p.a_in[(i, s)]), (RowKind::Soft, -1.0)),
                Family::RegInput => assert_eq!((l.kind, p.a_in[(i, s)]), (RowKind::Hard, 0.0)),
                _ => {}
            }
        }
    }

    #[test]
    fn headroom_examples() {
        let f = single_line();
        let layout = ThetaLayout::new(&f);
        let pc = [0.0, 0.0];
        let qc = [0.0, 0.0];
        let map = |pg: f64, ap: AnalysisPoint| {
            theta_map(&layout, &f, BusInjections { pc: &pc, qc: &qc, pg: &[0.0, pg] }, ap)
        };
        let t = map(1.0, AnalysisPoint { scaling: 1.0, oversize: 1.1, penetration: 0.5 }).unwrap();
        assert!((t[layout.headroom(0)] - 0.979_795_897_113_271_2).abs() < 1e-12);
        assert!((t[layout.pg(0)] - 0.5).abs() < 1e-15);
        let t = map(0.0, AnalysisPoint { scaling: 1.0, oversize: 1.1, penetration: 0.5 }).unwrap();
        assert!((t[layout.headroom(0)] - 1.1).abs() < 1e-15);
        let t = map(1.1, AnalysisPoint { scaling: 1.0, oversize: 1.1, penetration: 1.0 }).unwrap();
        assert_eq!(t[layout.headroom(0)], 0.0);
        let err = map(1.0, AnalysisPoint { scaling: 2.0, oversize: 1.0, penetration: 1.0 });
        assert!(matches!(err, Err(BuildError::Headroom { .. })));
    }

    #[test]
    fn scaling_preserves_minimizer_and_maps_duals() {
        let f = chain_with("remote", "");
        let p = build_problem(&f, &BuilderConfig::default()).unwrap();
        let (sp, rec) = scale_problem(&p);
        assert!(rec.cost > 0.0 && rec.inequality > 0.0 && rec.equality > 0.0);
        assert!((linalg::spectral_norm(&sp.h) - 1.0).abs() < 1e-12);
        for (pc, pg) in [(0.05, 0.0), (0.2, 0.0), (0.01, 0.45)] {
            let theta = theta_for(&p, &f, pc, pg);
            let a = solve_qp(&p.instance(&theta), &QpSettings::default()).unwrap();
            let b = solve_qp(&sp.instance(&theta), &QpSettings::default()).unwrap();
            assert!((&a.x - &b.x).amax() < 1e-9);
            let mapped = rec.inequality_duals(&b.lambda);
            assert!((&a.lambda - mapped).amax() < 1e-8, "{} vs {}", a.lambda, b.lambda);
        }
    }

    #[test]
    fn identity_hessian_toy_scales() {
        let p = MpqpProblem::from_matrices(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[3.0, 4.0]),
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 1.0),
            DMatrix::zeros(0, 2),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        )
        .unwrap();
        let (sp, rec) = scale_problem(&p);
        assert_eq!(rec.cost, 1.0);
        assert!((rec.inequality - 5.0).abs() < 1e-12);
        assert_eq!(rec.equality, 1.0);
        assert_eq!(sp.h, p.h);
    }

    #[test]
    fn eta_toy_soft_lower_bound() {
        // min x² s.t. x ≥ 1 as a soft row: λ = 2, η = 20
        let mut p = MpqpProblem::from_matrices(
            DMatrix::from_element(2, 2, 0.0) + DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0])),
            DMatrix::zeros(2, 1),
            DVector::from_vec(vec![0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, 0.0, -1.0]),
            DMatrix::zeros(2, 1),
            DVector::from_vec(vec![-1.0, 0.0]),
            DMatrix::zeros(0, 2),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        )
        .unwrap();
        p.slack = Some(1);
        p.ineq_labels[0].kind = RowKind::Soft;
        p.ineq_labels[1].kind = RowKind::Slack;
        let eta = calibrate_eta(&p, &[DVector::zeros(1)]).unwrap();
        assert!((eta - 20.0).abs() < 1e-8, "{eta}");
    }

    #[test]
    fn eta_zero_when_interior() {
        let f = single_line();
        let p = build_problem(&f, &BuilderConfig::default()).unwrap();
        let theta = theta_for(&p, &f, 0.01, 0.0);
        assert_eq!(calibrate_eta(&p, &[theta]).unwrap(), 0.0);
    }

    #[test]
    fn without_slack_drops_column_and_row() {
        let f = single_line();
        let p = build_problem(&f, &BuilderConfig::default()).unwrap();
        let q = p.without_slack();
        assert_eq!(q.n_x(), 2);
        assert_eq!(q.n_ineq(), p.n_ineq() - 1);
        assert!(q.slack.is_none());
        assert_eq!(q.model.as_ref().unwrap().voltage.vx.ncols(), 2);
    }

    #[test]
    fn dump_is_labeled() {
        let f = chain_with("local", ", vref = 1.0167");
        let p = build_problem(&f, &BuilderConfig::default()).unwrap();
        let d = p.dump();
        assert!(d.contains("local-reg-eq[1-2]"));
        assert!(d.contains("voltage-hi[3]:soft"));
        assert!(d.lines().filter(|l| l.starts_with("H\t")).count() == p.n_x());
    }
}
