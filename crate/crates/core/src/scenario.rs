//! Load and solar tables, reactive-load synthesis and expansion of the
//! analysis grid into the parameter set.
//!
//! Tables are delimited text with a header row, in one of two layouts:
//!
//! * long: `hour,bus,value`, one row per (hour, bus) pair;
//! * wide: `hour,<bus id>,<bus id>,...`, one row per hour.
//!
//! Buses missing from a table read as zero.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{theta_map, AnalysisPoint, BusInjections, MpqpProblem};
use crate::error::{BuildError, ScenarioError};
use crate::feeder::FeederModel;

/// Range of the lagging power factors drawn per bus.
pub const PF_RANGE: (f64, f64) = (0.90, 0.95);

/// Hourly loads and full-penetration solar, indexed by dense bus.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTable {
    pub hours: Vec<i64>,
    /// hours × buses
    pub pc: DMatrix<f64>,
    /// hours × buses
    pub pg: DMatrix<f64>,
    pub power_factors: Vec<f64>,
}

impl ScenarioTable {
    pub fn n_hours(&self) -> usize {
        self.hours.len()
    }

    /// Reactive load from the active load and the bus power factor.
    pub fn qc(&self, hour: usize, bus: usize) -> f64 {
        self.pc[(hour, bus)] * reactive_ratio(self.power_factors[bus])
    }
}

/// `tan(arccos(pf))`
pub fn reactive_ratio(pf: f64) -> f64 {
    pf.acos().tan()
}

/// One power factor per bus, uniform on the lagging range.
pub fn draw_power_factors(n_buses: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_buses)
        .map(|_| rng.random_range(PF_RANGE.0..=PF_RANGE.1))
        .collect()
}

struct RawTable {
    hours: Vec<i64>,
    values: BTreeMap<(i64, usize), f64>,
}

fn schema(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema(msg.into())
}

fn parse_hour(s: &str) -> Result<i64, ScenarioError> {
    s.trim()
        .parse::<i64>()
        .map_err(|_| schema(format!("hour '{s}' is not an integer")))
}

fn parse_value(s: &str) -> Result<f64, ScenarioError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| schema(format!("value '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(schema(format!("value '{s}' is not finite")));
    }
    Ok(v)
}

fn read_table<R: Read>(reader: R, feeder: &FeederModel) -> Result<RawTable, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| schema(e.to_string()))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let lower: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if lower.first().map(String::as_str) != Some("hour") {
        return Err(schema("first column must be 'hour'"));
    }
    let long = lower == ["hour", "bus", "value"];
    let mut hours = BTreeSet::new();
    let mut values = BTreeMap::new();
    let bus_of = |id: &str| {
        feeder
            .bus_index(id)
            .ok_or_else(|| ScenarioError::MissingBus(id.to_string()))
    };
    let put = |values: &mut BTreeMap<(i64, usize), f64>, hour: i64, bus: usize, v: f64| {
        if v < 0.0 {
            return Err(ScenarioError::NegativeValue {
                bus: feeder.bus_id(bus).to_string(),
                hour: hour.max(0) as usize,
                value: v,
            });
        }
        if values.insert((hour, bus), v).is_some() {
            return Err(schema(format!(
                "duplicate entry for bus '{}' at hour {hour}",
                feeder.bus_id(bus)
            )));
        }
        Ok(())
    };
    if long {
        for rec in rdr.records() {
            let rec = rec.map_err(|e| schema(e.to_string()))?;
            if rec.len() != 3 {
                return Err(schema("long-form rows need hour,bus,value"));
            }
            let hour = parse_hour(&rec[0])?;
            let bus = bus_of(&rec[1])?;
            hours.insert(hour);
            put(&mut values, hour, bus, parse_value(&rec[2])?)?;
        }
    } else {
        let cols: Vec<usize> = header[1..]
            .iter()
            .map(|h| bus_of(h))
            .collect::<Result<_, _>>()?;
        if cols.iter().collect::<BTreeSet<_>>().len() != cols.len() {
            return Err(schema("duplicate bus column"));
        }
        for rec in rdr.records() {
            let rec = rec.map_err(|e| schema(e.to_string()))?;
            if rec.len() != header.len() {
                return Err(schema("row length differs from header"));
            }
            let hour = parse_hour(&rec[0])?;
            if !hours.insert(hour) {
                return Err(schema(format!("duplicate hour {hour}")));
            }
            for (j, &bus) in cols.iter().enumerate() {
                put(&mut values, hour, bus, parse_value(&rec[j + 1])?)?;
            }
        }
    }
    if hours.is_empty() {
        return Err(schema("table has no rows"));
    }
    Ok(RawTable {
        hours: hours.into_iter().collect(),
        values,
    })
}

fn to_matrix(raw: &RawTable, n_bus: usize) -> DMatrix<f64> {
    let pos: BTreeMap<i64, usize> = raw.hours.iter().enumerate().map(|(i, &h)| (h, i)).collect();
    let mut m = DMatrix::zeros(raw.hours.len(), n_bus);
    for (&(h, b), &v) in &raw.values {
        m[(pos[&h], b)] = v;
    }
    m
}

/// Build a table from readers. Loads are rescaled so that each bus with a
/// nominal load peaks at that value.
pub fn scenarios_from_readers<R1: Read, R2: Read>(
    load: R1,
    solar: R2,
    feeder: &FeederModel,
    pf_seed: u64,
) -> Result<ScenarioTable, ScenarioError> {
    let load = read_table(load, feeder)?;
    let solar = read_table(solar, feeder)?;
    if load.hours != solar.hours {
        return Err(schema("load and solar tables cover different hours"));
    }
    let n = feeder.n_buses();
    let mut pc = to_matrix(&load, n);
    let pg = to_matrix(&solar, n);
    for b in 0..n {
        if let Some(nominal) = feeder.buses()[b].p_nominal {
            let peak = pc.column(b).max();
            if peak > 0.0 {
                let mut col = pc.column_mut(b);
                col *= nominal / peak;
            }
        }
        if !feeder.buses()[b].has_der() && pg.column(b).max() > 0.0 {
            log::warn!("solar given for bus '{}' without a DER; ignored", feeder.bus_id(b));
        }
    }
    Ok(ScenarioTable {
        hours: load.hours,
        pc,
        pg,
        power_factors: draw_power_factors(n, pf_seed),
    })
}

pub fn load_scenarios(
    load_path: &Path,
    solar_path: &Path,
    feeder: &FeederModel,
    pf_seed: u64,
) -> Result<ScenarioTable, ScenarioError> {
    let open = |p: &Path| {
        std::fs::File::open(p).map_err(|e| schema(format!("{}: {e}", p.display())))
    };
    scenarios_from_readers(open(load_path)?, open(solar_path)?, feeder, pf_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisGrid {
    pub scalings: Vec<f64>,
    pub oversizes: Vec<f64>,
    pub penetrations: Vec<f64>,
}

impl Default for AnalysisGrid {
    fn default() -> Self {
        Self {
            scalings: vec![1.0, 2.0, 3.0],
            oversizes: vec![1.0, 1.1],
            penetrations: (1..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

impl AnalysisGrid {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (name, v) in [
            ("scalings", &self.scalings),
            ("oversizes", &self.oversizes),
            ("penetrations", &self.penetrations),
        ] {
            if v.is_empty() {
                return Err(schema(format!("analysis grid: {name} is empty")));
            }
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(schema(format!("analysis grid: {name} must be positive")));
            }
        }
        if self.penetrations.iter().any(|&a| a > 1.0) {
            return Err(schema("analysis grid: penetrations must be <= 1"));
        }
        if self.oversizes.iter().any(|&o| o < 1.0) {
            return Err(schema("analysis grid: oversizes must be >= 1"));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<AnalysisPoint> {
        let mut out = Vec::new();
        for &scaling in &self.scalings {
            for &oversize in &self.oversizes {
                for &penetration in &self.penetrations {
                    out.push(AnalysisPoint {
                        scaling,
                        oversize,
                        penetration,
                    });
                }
            }
        }
        out
    }
}

/// Where a parameter vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaSource {
    pub hour: i64,
    pub scaling: f64,
    pub oversize: f64,
    pub penetration: f64,
}

#[derive(Debug, Clone)]
pub struct ParameterSet {
    pub thetas: Vec<DVector<f64>>,
    pub sources: Vec<ThetaSource>,
}

impl ParameterSet {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

/// Every (analysis point, hour) combination, analysis-major.
pub fn expand_grid(
    table: &ScenarioTable,
    grid: &AnalysisGrid,
    prob: &MpqpProblem,
    feeder: &FeederModel,
) -> Result<ParameterSet, ScenarioError> {
    grid.validate()?;
    let layout = &prob
        .model
        .as_ref()
        .ok_or_else(|| schema("problem carries no feeder layout"))?
        .theta;
    let n = feeder.n_buses();
    if table.pc.ncols() != n || layout.n_bus != n {
        return Err(schema("scenario table does not match the feeder"));
    }
    let hourly: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..table.n_hours())
        .map(|h| {
            let pc: Vec<f64> = table.pc.row(h).iter().copied().collect();
            let qc: Vec<f64> = (0..n).map(|b| table.qc(h, b)).collect();
            let pg: Vec<f64> = table.pg.row(h).iter().copied().collect();
            (pc, qc, pg)
        })
        .collect();
    let combos: Vec<(AnalysisPoint, usize)> = grid
        .points()
        .into_iter()
        .flat_map(|ap| (0..table.n_hours()).map(move |h| (ap, h)))
        .collect();
    let results: Vec<Result<DVector<f64>, ScenarioError>> = combos
        .par_iter()
        .map(|&(ap, h)| {
            let (pc, qc, pg) = &hourly[h];
            theta_map(layout, feeder, BusInjections { pc, qc, pg }, ap).map_err(|source: BuildError| {
                ScenarioError::Expansion {
                    hour: h,
                    scaling: ap.scaling,
                    oversize: ap.oversize,
                    penetration: ap.penetration,
                    source,
                }
            })
        })
        .collect();
    // first failure in grid order, independent of scheduling
    let thetas = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let sources = combos
        .iter()
        .map(|&(ap, h)| ThetaSource {
            hour: table.hours[h],
            scaling: ap.scaling,
            oversize: ap.oversize,
            penetration: ap.penetration,
        })
        .collect();
    Ok(ParameterSet { thetas, sources })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_problem, BuilderConfig};
    use crate::feeder::load_feeder;

    fn feeder() -> FeederModel {
        load_feeder(
            r#"
substation = "s"
buses = [{ id = "s" }, { id = "a", p_rated = 1.0 }, { id = "b", p_nominal = 0.2 }]
lines = [{ from = "s", to = "a", r = 0.01, x = 0.01 }, { from = "a", to = "b", r = 0.01, x = 0.01 }]
"#,
        )
        .unwrap()
    }

    const LOAD_WIDE: &str = "hour,a,b\n0,0.1,0.05\n1,0.2,0.1\n2,0.3,0.02\n";
    const SOLAR_LONG: &str = "hour,bus,value\n0,a,0.0\n1,a,0.5\n2,a,0.25\n";

    #[test]
    fn wide_and_long_forms() {
        let f = feeder();
        let t = scenarios_from_readers(LOAD_WIDE.as_bytes(), SOLAR_LONG.as_bytes(), &f, 7).unwrap();
        assert_eq!(t.hours, vec![0, 1, 2]);
        let a = f.bus_index("a").unwrap();
        let b = f.bus_index("b").unwrap();
        assert_eq!(t.pc[(1, a)], 0.2);
        // bus b is normalized to peak at its nominal 0.2
        assert!((t.pc[(1, b)] - 0.2).abs() < 1e-15);
        assert!((t.pc[(0, b)] - 0.1).abs() < 1e-15);
        assert_eq!(t.pg[(1, a)], 0.5);
        assert_eq!(t.pg[(0, b)], 0.0);
    }

    #[test]
    fn reactive_from_power_factor() {
        assert!((reactive_ratio(0.9) - 0.484_322_104_837_6).abs() < 1e-12);
        let f = feeder();
        let mut t = scenarios_from_readers(LOAD_WIDE.as_bytes(), SOLAR_LONG.as_bytes(), &f, 7).unwrap();
        t.power_factors = vec![0.9; 3];
        let a = f.bus_index("a").unwrap();
        assert!((t.qc(2, a) - 0.3 * reactive_ratio(0.9)).abs() < 1e-15);
    }

    #[test]
    fn power_factors_seeded_and_in_range() {
        let a = draw_power_factors(50, 3);
        assert_eq!(a, draw_power_factors(50, 3));
        assert_ne!(a, draw_power_factors(50, 4));
        assert!(a.iter().all(|&p| (0.90..=0.95).contains(&p)));
    }

    #[test]
    fn input_errors() {
        let f = feeder();
        let bad_bus = "hour,a,zz\n0,0.1,0.1\n";
        assert!(matches!(
            scenarios_from_readers(bad_bus.as_bytes(), SOLAR_LONG.as_bytes(), &f, 1),
            Err(ScenarioError::MissingBus(ref b)) if b == "zz"
        ));
        let neg = "hour,bus,value\n0,a,-0.1\n";
        assert!(matches!(
            scenarios_from_readers(neg.as_bytes(), SOLAR_LONG.as_bytes(), &f, 1),
            Err(ScenarioError::NegativeValue { .. })
        ));
        let no_hour = "time,a\n0,0.1\n";
        assert!(matches!(
            scenarios_from_readers(no_hour.as_bytes(), SOLAR_LONG.as_bytes(), &f, 1),
            Err(ScenarioError::Schema(_))
        ));
        let other_hours = "hour,a\n5,0.1\n";
        assert!(matches!(
            scenarios_from_readers(other_hours.as_bytes(), SOLAR_LONG.as_bytes(), &f, 1),
            Err(ScenarioError::Schema(_))
        ));
        assert!(matches!(
            load_scenarios(Path::new("/nonexistent/load.csv"), Path::new("/nonexistent/s.csv"), &f, 1),
            Err(ScenarioError::Schema(_))
        ));
    }

    #[test]
    fn expansion_count_order_and_round_trip() {
        let f = feeder();
        let prob = build_problem(&f, &BuilderConfig::default()).unwrap();
        let t = scenarios_from_readers(LOAD_WIDE.as_bytes(), SOLAR_LONG.as_bytes(), &f, 7).unwrap();
        let grid = AnalysisGrid {
            scalings: vec![1.0],
            oversizes: vec![1.1],
            penetrations: vec![0.5, 1.0],
        };
        let set = expand_grid(&t, &grid, &prob, &f).unwrap();
        assert_eq!(set.len(), 3 * 2);
        assert_eq!(set.sources[0].penetration, 0.5);
        assert_eq!(set.sources[2].hour, 2);
        assert_eq!(set.sources[3].penetration, 1.0);
        // grouping by provenance recovers the grid
        let pens: BTreeSet<String> = set.sources.iter().map(|s| s.penetration.to_string()).collect();
        assert_eq!(pens.len(), 2);
        let layout = &prob.model.as_ref().unwrap().theta;
        let a = f.bus_index("a").unwrap();
        assert!((set.thetas[4][layout.pg(0)] - 0.5).abs() < 1e-15);
        assert!((set.thetas[4][layout.pc(a)] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn default_grid_has_sixty_points() {
        assert_eq!(AnalysisGrid::default().points().len(), 60);
    }

    #[test]
    fn expansion_reports_headroom_with_provenance() {
        let f = feeder();
        let prob = build_problem(&f, &BuilderConfig::default()).unwrap();
        let t = scenarios_from_readers(LOAD_WIDE.as_bytes(), SOLAR_LONG.as_bytes(), &f, 7).unwrap();
        let grid = AnalysisGrid {
            scalings: vec![3.0],
            oversizes: vec![1.0],
            penetrations: vec![1.0],
        };
        match expand_grid(&t, &grid, &prob, &f) {
            Err(ScenarioError::Expansion { hour, scaling, source: BuildError::Headroom { .. }, .. }) => {
                assert_eq!(hour, 1);
                assert_eq!(scaling, 3.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
