//! Radial feeder model: parsing, validation, partitioning at voltage
//! regulators, and the per-subgraph sensitivity matrices that make bus
//! voltages affine in the power injections.
//!
//! Buses are re-indexed densely in breadth-first order from the substation,
//! so the substation is bus 0, every bus has a smaller index than its
//! children, and line `k` is the line feeding bus `k + 1`.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::FeederError;

/// Default regulator bandwidth in per-unit.
pub const DEFAULT_BANDWIDTH: f64 = 0.0083;

/// A line oriented from the parent bus toward the child bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegulatorKind {
    Remote,
    Local,
    Ldc,
}

impl RegulatorKind {
    pub fn name(self) -> &'static str {
        match self {
            RegulatorKind::Remote => "remote",
            RegulatorKind::Local => "local",
            RegulatorKind::Ldc => "ldc",
        }
    }
}

/// A voltage regulator sitting on the line `input -> output`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorSpec {
    /// Index of the line carrying the regulator.
    pub line: usize,
    /// Upstream (input) bus `m`.
    pub input: usize,
    /// Downstream (output) bus `n`.
    pub output: usize,
    pub kind: RegulatorKind,
    pub vref: f64,
    pub delta: f64,
    pub r_ldc: f64,
    pub x_ldc: f64,
}

impl RegulatorSpec {
    /// Input-voltage window that keeps the taps off their extremes.
    pub fn input_window(&self) -> (f64, f64) {
        (
            (self.vref - self.delta) / 1.1,
            (self.vref + self.delta) / 0.9,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    /// Inverter apparent-power nameplate.
    pub s_rated: f64,
    /// Inverter peak active rating; a bus hosts a DER iff this is positive.
    pub p_rated: f64,
    /// Nominal (peak) load used for profile normalization.
    pub p_nominal: Option<f64>,
}

impl Bus {
    pub fn has_der(&self) -> bool {
        self.p_rated > 0.0
    }
}

/// A validated radial feeder.
#[derive(Debug, Clone)]
pub struct FeederModel {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    regulators: Vec<RegulatorSpec>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl FeederModel {
    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn regulators(&self) -> &[RegulatorSpec] {
        &self.regulators
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_id(&self, bus: usize) -> &str {
        &self.buses[bus].id
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn parent(&self, bus: usize) -> Option<usize> {
        self.parent[bus]
    }

    pub fn children(&self, bus: usize) -> &[usize] {
        &self.children[bus]
    }

    /// Line feeding `bus`, `None` for the substation.
    pub fn feeding_line(&self, bus: usize) -> Option<&Line> {
        bus.checked_sub(1).map(|k| &self.lines[k])
    }

    /// Buses hosting a DER, in index order.
    pub fn der_buses(&self) -> Vec<usize> {
        (0..self.n_buses())
            .filter(|&b| self.buses[b].has_der())
            .collect()
    }

    /// Regulator whose output is `bus`, if any.
    pub fn regulator_at_output(&self, bus: usize) -> Option<usize> {
        self.regulators.iter().position(|r| r.output == bus)
    }

    /// All buses in the subtree rooted at `bus`, including `bus`.
    pub fn subtree(&self, bus: usize) -> Vec<usize> {
        let mut out = vec![bus];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(&self.children[out[i]]);
            i += 1;
        }
        out.sort_unstable();
        out
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum IdDoc {
    Int(i64),
    Str(String),
}

impl IdDoc {
    fn into_string(self) -> String {
        match self {
            IdDoc::Int(i) => i.to_string(),
            IdDoc::Str(s) => s,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusDoc {
    id: IdDoc,
    #[serde(default)]
    s_rated: f64,
    #[serde(default)]
    p_rated: f64,
    #[serde(default)]
    p_nominal: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineDoc {
    from: IdDoc,
    to: IdDoc,
    r: f64,
    x: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegulatorDoc {
    from: IdDoc,
    to: IdDoc,
    kind: RegulatorKind,
    #[serde(default)]
    vref: Option<f64>,
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default)]
    r_ldc: f64,
    #[serde(default)]
    x_ldc: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeederDoc {
    substation: IdDoc,
    buses: Vec<BusDoc>,
    lines: Vec<LineDoc>,
    #[serde(default)]
    regulators: Vec<RegulatorDoc>,
}

fn schema(msg: impl Into<String>) -> FeederError {
    FeederError::Schema(msg.into())
}

/// Parse and validate a feeder document (TOML).
pub fn load_feeder(text: &str) -> Result<FeederModel, FeederError> {
    let doc: FeederDoc = toml::from_str(text).map_err(|e| schema(e.to_string()))?;
    let substation = doc.substation.into_string();

    let mut raw_buses = Vec::with_capacity(doc.buses.len());
    let mut raw_index = HashMap::new();
    for b in doc.buses {
        let id = b.id.into_string();
        if raw_index.insert(id.clone(), raw_buses.len()).is_some() {
            return Err(schema(format!("duplicate bus id '{id}'")));
        }
        for (name, v) in [("s_rated", b.s_rated), ("p_rated", b.p_rated)] {
            if !v.is_finite() || v < 0.0 {
                return Err(schema(format!("bus '{id}': {name} must be finite and >= 0")));
            }
        }
        if let Some(p) = b.p_nominal {
            if !p.is_finite() || p < 0.0 {
                return Err(schema(format!("bus '{id}': p_nominal must be >= 0")));
            }
        }
        raw_buses.push(Bus {
            id,
            s_rated: b.s_rated,
            p_rated: b.p_rated,
            p_nominal: b.p_nominal,
        });
    }
    let sub_raw = *raw_index
        .get(&substation)
        .ok_or_else(|| schema(format!("substation '{substation}' is not a listed bus")))?;
    let n = raw_buses.len();

    // Union-find over raw indices for cycle detection.
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], mut a: usize) -> usize {
        while uf[a] != a {
            uf[a] = uf[uf[a]];
            a = uf[a];
        }
        a
    }

    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut raw_lines = Vec::with_capacity(doc.lines.len());
    for (k, l) in doc.lines.into_iter().enumerate() {
        let from = l.from.into_string();
        let to = l.to.into_string();
        let f = *raw_index
            .get(&from)
            .ok_or_else(|| schema(format!("line {k}: unknown bus '{from}'")))?;
        let t = *raw_index
            .get(&to)
            .ok_or_else(|| schema(format!("line {k}: unknown bus '{to}'")))?;
        if f == t {
            return Err(schema(format!("line {k}: from == to ('{from}')")));
        }
        if !(l.r.is_finite() && l.r > 0.0) {
            return Err(schema(format!("line {from}-{to}: resistance must be > 0")));
        }
        if !(l.x.is_finite() && l.x >= 0.0) {
            return Err(schema(format!("line {from}-{to}: reactance must be >= 0")));
        }
        let (rf, rt) = (find(&mut uf, f), find(&mut uf, t));
        if rf == rt {
            return Err(FeederError::Cycle { from, to });
        }
        uf[rf] = rt;
        adj[f].push((t, k));
        adj[t].push((f, k));
        raw_lines.push((f, t, l.r, l.x));
    }

    // Breadth-first order from the substation defines the dense index.
    let mut order = Vec::with_capacity(n);
    let mut raw_parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([sub_raw]);
    seen[sub_raw] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(v, k) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                raw_parent[v] = Some((u, k));
                queue.push_back(v);
            }
        }
    }
    if order.len() != n {
        return Err(FeederError::Disconnected {
            unreachable: n - order.len(),
        });
    }

    let mut dense = vec![0usize; n];
    for (i, &raw) in order.iter().enumerate() {
        dense[raw] = i;
    }
    let buses: Vec<Bus> = order.iter().map(|&raw| raw_buses[raw].clone()).collect();
    let index: HashMap<String, usize> = buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.clone(), i))
        .collect();

    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut lines = Vec::with_capacity(n.saturating_sub(1));
    for (i, &raw) in order.iter().enumerate().skip(1) {
        let (praw, k) = raw_parent[raw].expect("non-root bus has a parent");
        let p = dense[praw];
        parent[i] = Some(p);
        children[p].push(i);
        let (_, _, r, x) = raw_lines[k];
        lines.push(Line {
            from: p,
            to: i,
            r,
            x,
        });
    }

    let mut regulators: Vec<RegulatorSpec> = Vec::with_capacity(doc.regulators.len());
    for reg in doc.regulators {
        let from = reg.from.into_string();
        let to = reg.to.into_string();
        let m = *index
            .get(&from)
            .ok_or_else(|| schema(format!("regulator: unknown bus '{from}'")))?;
        let nb = *index
            .get(&to)
            .ok_or_else(|| schema(format!("regulator: unknown bus '{to}'")))?;
        if parent[nb] != Some(m) {
            if parent[m] == Some(nb) {
                return Err(schema(format!(
                    "regulator {from}-{to}: input bus must be upstream of the output bus"
                )));
            }
            return Err(schema(format!("regulator {from}-{to}: no such line")));
        }
        if regulators.iter().any(|r| r.output == nb) {
            return Err(FeederError::DuplicateRegulator { from, to });
        }
        let delta = reg.delta.unwrap_or(DEFAULT_BANDWIDTH);
        let vref = match reg.kind {
            RegulatorKind::Remote => reg.vref.unwrap_or(1.0),
            _ => reg.vref.ok_or_else(|| {
                schema(format!("regulator {from}-{to}: vref required for {:?}", reg.kind))
            })?,
        };
        if !(vref > 0.0 && delta > 0.0 && delta < vref) {
            return Err(schema(format!(
                "regulator {from}-{to}: need 0 < delta < vref (vref={vref}, delta={delta})"
            )));
        }
        if !(reg.r_ldc.is_finite() && reg.x_ldc.is_finite()) {
            return Err(schema(format!("regulator {from}-{to}: non-finite LDC impedance")));
        }
        regulators.push(RegulatorSpec {
            line: nb - 1,
            input: m,
            output: nb,
            kind: reg.kind,
            vref,
            delta,
            r_ldc: reg.r_ldc,
            x_ldc: reg.x_ldc,
        });
    }

    Ok(FeederModel {
        buses,
        lines,
        regulators,
        parent,
        children,
        index,
    })
}

/// A connected piece of the feeder between regulators.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub id: usize,
    /// Substation (0) or the output bus of a regulator.
    pub root: usize,
    /// Regulator feeding this subgraph, `None` for the substation piece.
    pub regulator: Option<usize>,
    /// Every bus owned by the subgraph (excludes the substation).
    pub members: Vec<usize>,
    /// Members fed by a line inside the subgraph, i.e. members minus the root.
    pub fed: Vec<usize>,
}

/// Split the feeder at regulator lines. Subgraph 0 is rooted at the
/// substation; subgraph `k + 1` is rooted at the output of regulator `k`.
pub fn partition_by_regulators(feeder: &FeederModel) -> Vec<Subgraph> {
    let n = feeder.n_buses();
    let mut owner = vec![0usize; n];
    for b in 1..n {
        owner[b] = match feeder.regulator_at_output(b) {
            Some(k) => k + 1,
            None => {
                let p = feeder.parent(b).expect("non-root bus");
                if p == 0 {
                    0
                } else {
                    owner[p]
                }
            }
        };
    }
    let mut subgraphs: Vec<Subgraph> = std::iter::once(Subgraph {
        id: 0,
        root: 0,
        regulator: None,
        members: Vec::new(),
        fed: Vec::new(),
    })
    .chain(feeder.regulators().iter().enumerate().map(|(k, r)| Subgraph {
        id: k + 1,
        root: r.output,
        regulator: Some(k),
        members: Vec::new(),
        fed: Vec::new(),
    }))
    .collect();
    for b in 1..n {
        let g = &mut subgraphs[owner[b]];
        g.members.push(b);
        if b != g.root {
            g.fed.push(b);
        }
    }
    subgraphs
}

/// Sensitivities of one subgraph: `v_fed = R p + X q + v_root`.
#[derive(Debug, Clone)]
pub struct SubgraphSensitivity {
    pub subgraph: usize,
    pub root: usize,
    /// Fed buses, in the order used by the matrices.
    pub buses: Vec<usize>,
    pub r: DMatrix<f64>,
    pub x: DMatrix<f64>,
    /// Maps fed-bus injections to the flows on the lines feeding them.
    pub flow_map: DMatrix<f64>,
}

/// Build R, X and the flow map of a subgraph by common-path accumulation.
pub fn sensitivity_matrices(subgraph: &Subgraph, feeder: &FeederModel) -> SubgraphSensitivity {
    let buses = subgraph.fed.clone();
    let k = buses.len();
    let pos: HashMap<usize, usize> = buses.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let mut r = DMatrix::zeros(k, k);
    let mut x = DMatrix::zeros(k, k);

    // Fed buses are sorted by index, hence every parent is visited first and
    // no later bus belongs to an earlier bus's ancestry.
    for (i, &b) in buses.iter().enumerate() {
        let line = feeder.feeding_line(b).expect("fed bus has a line");
        match pos.get(&line.from) {
            Some(&a) => {
                for j in 0..i {
                    r[(i, j)] = r[(a, j)];
                    r[(j, i)] = r[(a, j)];
                    x[(i, j)] = x[(a, j)];
                    x[(j, i)] = x[(a, j)];
                }
                r[(i, i)] = r[(a, a)] + line.r;
                x[(i, i)] = x[(a, a)] + line.x;
            }
            None => {
                r[(i, i)] = line.r;
                x[(i, i)] = line.x;
            }
        }
    }

    // flow on the line feeding bus i = -(sum of injections in its subtree)
    let mut flow_map = DMatrix::zeros(k, k);
    for j in (0..k).rev() {
        flow_map[(j, j)] = -1.0;
        let line = feeder.feeding_line(buses[j]).expect("fed bus has a line");
        if let Some(&a) = pos.get(&line.from) {
            for c in 0..k {
                if flow_map[(j, c)] != 0.0 {
                    flow_map[(a, c)] = -1.0;
                }
            }
        }
    }

    SubgraphSensitivity {
        subgraph: subgraph.id,
        root: subgraph.root,
        buses,
        r,
        x,
        flow_map,
    }
}

/// Line flows (P, Q) on the lines feeding each fed bus, positive toward leaves.
pub fn flow_from_injections(
    sens: &SubgraphSensitivity,
    p: &DVector<f64>,
    q: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), FeederError> {
    let k = sens.buses.len();
    for v in [p, q] {
        if v.len() != k {
            return Err(FeederError::Dimension {
                expected: k,
                got: v.len(),
            });
        }
    }
    Ok((&sens.flow_map * p, &sens.flow_map * q))
}
