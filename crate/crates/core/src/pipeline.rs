//! Feeder + scenarios + configuration → scaled, calibrated problem and the
//! parameter set to run it on.

use nalgebra::DVector;

use crate::builder::{build_problem, calibrate_eta, scale_problem, BuilderConfig, MpqpProblem, DEFAULT_ETA};
use crate::error::{BuildError, Error};
use crate::feeder::FeederModel;
use crate::scenario::{expand_grid, AnalysisGrid, ParameterSet, ScenarioTable};

/// At most this many parameters are solved to calibrate η.
pub const ETA_SAMPLES: usize = 256;

/// Evenly strided subsample, deterministic in the parameter order.
pub fn calibration_sample(thetas: &[DVector<f64>], max: usize) -> Vec<DVector<f64>> {
    let stride = thetas.len().div_ceil(max.max(1)).max(1);
    thetas.iter().step_by(stride).cloned().collect()
}

pub struct Prepared {
    pub problem: MpqpProblem,
    pub params: ParameterSet,
    /// Whether η came from calibration (false when fixed by configuration
    /// or when calibration had nothing to go on).
    pub eta_calibrated: bool,
}

pub fn prepare(
    feeder: &FeederModel,
    cfg: &BuilderConfig,
    table: &ScenarioTable,
    grid: &AnalysisGrid,
) -> Result<Prepared, Error> {
    let raw = build_problem(feeder, cfg)?;
    let params = expand_grid(table, grid, &raw, feeder)?;
    let (scaled, _) = scale_problem(&raw);
    if cfg.eta.is_some() || scaled.slack.is_none() {
        return Ok(Prepared {
            problem: scaled,
            params,
            eta_calibrated: false,
        });
    }
    let sample = calibration_sample(&params.thetas, ETA_SAMPLES);
    let (eta, calibrated) = match calibrate_eta(&scaled, &sample) {
        Ok(e) if e > 0.0 => (e, true),
        Ok(_) => {
            log::info!("no soft row binds on the calibration sample; eta = {DEFAULT_ETA}");
            (DEFAULT_ETA, false)
        }
        Err(BuildError::AllInfeasible) => {
            log::warn!("calibration sample entirely infeasible; eta = {DEFAULT_ETA}");
            (DEFAULT_ETA, false)
        }
        Err(e) => return Err(e.into()),
    };
    log::info!("eta = {eta}");
    Ok(Prepared {
        problem: scaled.with_eta(eta),
        params,
        eta_calibrated: calibrated,
    })
}
