use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use phca::acpf::approximation_error_sweep;
use phca::builder::{build_problem, scale_problem, BuilderConfig, ScalingRecord};
use phca::engine::{run_batch, validate_batch, BatchResult, Counters, EngineOptions, Sampling, ValidationReport};
use phca::feeder::{load_feeder, FeederModel};
use phca::pipeline::{prepare, Prepared};
use phca::scenario::{load_scenarios, AnalysisGrid, ScenarioTable};
use phca::stats::{group_by_analysis, phca_report, PhcaReport};
use serde::Serialize;

use crate::manifest::{parse_hours, parse_values, RunManifest};
use crate::{DumpArgs, Failure, InputArgs, RunArgs, SamplingArg, StatsArgs, ValidateArgs};

fn resolve(input: InputArgs) -> Result<RunManifest, Failure> {
    let mut m = match &input.manifest {
        Some(p) => RunManifest::load(p)?,
        None => {
            let need = |p: &Option<PathBuf>, flag: &str| {
                p.clone()
                    .ok_or_else(|| Failure::schema(format!("--{flag} is required without --manifest")))
            };
            RunManifest {
                feeder: need(&input.feeder, "feeder")?,
                load: need(&input.load, "load")?,
                solar: need(&input.solar, "solar")?,
                config: None,
                grid: AnalysisGrid::default(),
                seed: 0,
                sampling: Sampling::Random,
                early_stop: 0,
                output: PathBuf::from("phca-out"),
            }
        }
    };
    if let Some(p) = input.feeder {
        m.feeder = p;
    }
    if let Some(p) = input.load {
        m.load = p;
    }
    if let Some(p) = input.solar {
        m.solar = p;
    }
    if input.config.is_some() {
        m.config = input.config;
    }
    if let Some(p) = input.out {
        m.output = p;
    }
    let values = |s: &str| parse_values(s).map_err(Failure::config);
    if let Some(s) = &input.penetrations {
        m.grid.penetrations = values(s)?;
    }
    if let Some(s) = &input.scalings {
        m.grid.scalings = values(s)?;
    }
    if let Some(s) = &input.oversize {
        m.grid.oversizes = values(s)?;
    }
    if let Some(seed) = input.seed {
        m.seed = seed;
    }
    if let Some(s) = input.sampling {
        m.sampling = match s {
            SamplingArg::Random => Sampling::Random,
            SamplingArg::Sequential => Sampling::Sequential,
        };
    }
    if let Some(k) = input.early_stop {
        m.early_stop = k;
    }
    Ok(m)
}

fn read_feeder(path: &Path) -> Result<FeederModel, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::schema(format!("{}: {e}", path.display())))?;
    Ok(load_feeder(&text).map_err(phca::Error::from)?)
}

fn read_config(path: Option<&Path>, beta: Option<f64>) -> Result<BuilderConfig, Failure> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::schema(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?
        }
        None => BuilderConfig::default(),
    };
    if let Some(b) = beta {
        cfg.beta = b;
    }
    cfg.validate().map_err(phca::Error::from)?;
    Ok(cfg)
}

struct Loaded {
    feeder: FeederModel,
    cfg: BuilderConfig,
    table: ScenarioTable,
}

fn load_inputs(m: &RunManifest, beta: Option<f64>) -> Result<Loaded, Failure> {
    m.check_paths()?;
    let feeder = read_feeder(&m.feeder)?;
    let cfg = read_config(m.config.as_deref(), beta)?;
    let table = load_scenarios(&m.load, &m.solar, &feeder, m.seed).map_err(phca::Error::from)?;
    Ok(Loaded { feeder, cfg, table })
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> Result<(), Failure> {
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| Failure::schema(format!("{}: {e}", p.display())))
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn report(
    result: &BatchResult,
    prepared: &Prepared,
    hours: Option<&str>,
) -> Result<PhcaReport, Failure> {
    let window = match hours {
        Some(h) => {
            let (a, b) = parse_hours(h).map_err(Failure::config)?;
            Some(a..=b)
        }
        None => None,
    };
    let groups = group_by_analysis(&prepared.params.sources, window);
    if groups.is_empty() {
        return Err(Failure::config("hour window selects no instance"));
    }
    Ok(phca_report(result, &prepared.problem, &prepared.params.thetas, &groups).map_err(phca::Error::from)?)
}

fn write_report(dir: &Path, rep: &PhcaReport) -> Result<(), Failure> {
    write(dir, "report.tsv", rep.to_tsv().as_bytes())?;
    write(dir, "report.json", &json(rep))
}

#[derive(Serialize)]
struct Summary<'a> {
    instances: usize,
    regions: usize,
    direct_only: usize,
    counters: &'a Counters,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<&'a ValidationReport>,
}

#[derive(Serialize)]
struct Stamp<'a> {
    version: &'static str,
    seed: u64,
    sampling: Sampling,
    early_stop: usize,
    eps_act: f64,
    eps_mem: f64,
    eps_scan: f64,
    qp_tol: f64,
    qp_max_iter: usize,
    scaling: ScalingRecord,
    eta: f64,
    eta_calibrated: bool,
    nu: f64,
    config: &'a BuilderConfig,
    grid: &'a AnalysisGrid,
    instances: usize,
}

pub fn run(args: RunArgs) -> Result<(), Failure> {
    let beta = args.input.beta;
    let m = resolve(args.input)?;
    if let Some(f) = args.validate {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Failure::config(format!("--validate {f} outside (0, 1]")));
        }
    }
    let inputs = load_inputs(&m, beta)?;
    let prepared = prepare(&inputs.feeder, &inputs.cfg, &inputs.table, &m.grid)?;
    let mut opts = EngineOptions {
        seed: m.seed,
        sampling: m.sampling,
        early_stop: m.early_stop,
        ..Default::default()
    };
    if let Some(w) = args.width {
        opts.width = w;
    }
    log::info!("{} parameters, {} variables, {} rows", prepared.params.len(), prepared.problem.n_x(), prepared.problem.n_ineq());
    let start = Instant::now();
    let result = run_batch(&prepared.problem, &prepared.params.thetas, &opts)?;
    log::info!(
        "batch done in {:.3}s: {} regions, {} direct solves",
        start.elapsed().as_secs_f64(),
        result.counters.regions_discovered,
        result.counters.qp_solves
    );
    let validation = match args.validate {
        Some(f) => Some(validate_batch(&result, &prepared.problem, &prepared.params.thetas, f, m.seed)?),
        None => None,
    };
    let rep = report(&result, &prepared, args.hours.as_deref())?;

    let out = &m.output;
    write(out, "batch.json", &json(&result))?;
    write_report(out, &rep)?;
    let mut census = String::from("region\tinstances\n");
    for (sig, n) in &result.census {
        let _ = writeln!(census, "{sig}\t{n}");
    }
    write(out, "census.tsv", census.as_bytes())?;
    write(
        out,
        "summary.json",
        &json(&Summary {
            instances: result.records.len(),
            regions: result.census.len(),
            direct_only: result.direct_only(),
            counters: &result.counters,
            validation: validation.as_ref(),
        }),
    )?;
    if let Some(v) = &validation {
        write(out, "validation.json", &json(v))?;
    }
    write(
        out,
        "stamp.json",
        &json(&Stamp {
            version: env!("CARGO_PKG_VERSION"),
            seed: m.seed,
            sampling: m.sampling,
            early_stop: m.early_stop,
            eps_act: opts.eps_act,
            eps_mem: opts.eps_mem,
            eps_scan: opts.eps_scan,
            qp_tol: opts.qp.tol,
            qp_max_iter: opts.qp.max_iter,
            scaling: prepared.problem.scaling,
            eta: prepared.problem.eta,
            eta_calibrated: prepared.eta_calibrated,
            nu: prepared.problem.nu,
            config: &inputs.cfg,
            grid: &m.grid,
            instances: prepared.params.len(),
        }),
    )?;
    Ok(())
}

pub fn stats(args: StatsArgs) -> Result<(), Failure> {
    let beta = args.input.beta;
    let m = resolve(args.input)?;
    let text = std::fs::read_to_string(&args.batch)
        .map_err(|e| Failure::schema(format!("{}: {e}", args.batch.display())))?;
    let result: BatchResult =
        serde_json::from_str(&text).map_err(|e| Failure::schema(format!("{}: {e}", args.batch.display())))?;
    let inputs = load_inputs(&m, beta)?;
    let prepared = prepare(&inputs.feeder, &inputs.cfg, &inputs.table, &m.grid)?;
    let n = prepared.params.len();
    if result.records.len() != n
        || result.records.iter().enumerate().any(|(i, r)| r.theta_id != i || r.x.len() != prepared.problem.n_x())
    {
        return Err(Failure::schema(format!(
            "batch does not match the manifest ({} records for {n} parameters)",
            result.records.len()
        )));
    }
    let rep = report(&result, &prepared, args.hours.as_deref())?;
    write_report(&m.output, &rep)
}

pub fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let out_given = args.input.out.is_some() || args.input.manifest.is_some();
    let m = resolve(args.input)?;
    let scales = parse_values(&args.scales).map_err(Failure::config)?;
    if scales.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
        return Err(Failure::config("scales must lie in (0, 1]"));
    }
    let inputs = load_inputs(&m, None)?;
    let (feeder, table) = (&inputs.feeder, &inputs.table);
    let hour = match args.hour {
        Some(h) if h < table.n_hours() => h,
        Some(h) => return Err(Failure::config(format!("hour {h} outside the {} scenario hours", table.n_hours()))),
        None => (0..table.n_hours())
            .max_by(|&a, &b| table.pc.row(a).sum().total_cmp(&table.pc.row(b).sum()))
            .unwrap_or(0),
    };
    let n = feeder.n_buses();
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    for b in 1..n {
        let gen = if feeder.buses()[b].has_der() { table.pg[(hour, b)] } else { 0.0 };
        p[b] = gen - table.pc[(hour, b)];
        q[b] = -table.qc(hour, b);
    }
    let rows = approximation_error_sweep(feeder, &p, &q, &scales).map_err(phca::Error::from)?;
    let mut tsv = String::from("scale\tvoltage_error\tloss_error\tvoltage_order\tloss_order\n");
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for r in &rows {
        let _ = writeln!(
            tsv,
            "{}\t{:e}\t{:e}\t{}\t{}",
            r.scale,
            r.voltage_error,
            r.loss_error,
            opt(r.voltage_order),
            opt(r.loss_order)
        );
    }
    print!("{tsv}");
    if out_given {
        write(&m.output, "sweep.tsv", tsv.as_bytes())?;
        write(&m.output, "sweep.json", &json(&rows))?;
    }
    Ok(())
}

pub fn dump_problem(args: DumpArgs) -> Result<(), Failure> {
    let feeder = read_feeder(&args.feeder)?;
    let cfg = read_config(args.config.as_deref(), None)?;
    let mut prob = build_problem(&feeder, &cfg).map_err(phca::Error::from)?;
    if args.scaled {
        prob = scale_problem(&prob).0;
    }
    let text = prob.dump();
    match args.out {
        Some(p) => std::fs::write(&p, text).map_err(|e| Failure::schema(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
