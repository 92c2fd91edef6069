use thiserror::Error;

/// Errors raised while loading or validating a feeder.
#[derive(Debug, Error)]
pub enum FeederError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("line {from}-{to} closes a cycle")]
    Cycle { from: String, to: String },
    #[error("feeder is disconnected: {unreachable} bus(es) unreachable from the substation")]
    Disconnected { unreachable: usize },
    #[error("more than one regulator on line {from}-{to}")]
    DuplicateRegulator { from: String, to: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Errors raised while assembling the parametric problem.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("config: {0}")]
    Config(String),
    #[error("model: {0}")]
    Model(String),
    #[error("headroom: bus {bus}: generation {generation} exceeds inverter rating {rating}")]
    Headroom {
        bus: String,
        generation: f64,
        rating: f64,
    },
    #[error("no sampled instance was feasible")]
    AllInfeasible,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Errors from the scenario readers and the grid expansion.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("unknown bus '{0}' in scenario file")]
    MissingBus(String),
    #[error("negative value {value} for bus '{bus}' at hour {hour}")]
    NegativeValue { bus: String, hour: usize, value: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("at hour {hour}, scaling {scaling}, oversize {oversize}, penetration {penetration}: {source}")]
    Expansion {
        hour: usize,
        scaling: f64,
        oversize: f64,
        penetration: f64,
        #[source]
        source: BuildError,
    },
}

/// Errors from region construction and evaluation.
#[derive(Debug, Error)]
pub enum RegionError {
    #[error("theta is outside the critical region")]
    NotInRegion,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Errors from batch statistics.
#[derive(Debug, Error)]
pub enum StatsError {
    #[error("group '{0}' has no instances")]
    EmptyGroup(String),
    #[error("regulator input voltage {value} at bus '{bus}' too low to form a ratio")]
    DivideByZero { bus: String, value: f64 },
    #[error("feeder has no remote regulators")]
    NoRemoteRegulators,
}

/// Errors from the AC power-flow oracle.
#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error("backward-forward sweep did not converge in {iterations} iterations (last update {last_update:e})")]
    NonConvergence { iterations: usize, last_update: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Top-level error carrying a stable class name for reporting.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable, machine-parsable error class.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Feeder(e) => match e {
                FeederError::Schema(_) => "SchemaError",
                FeederError::Cycle { .. } => "CycleError",
                FeederError::Disconnected { .. } => "DisconnectedError",
                FeederError::DuplicateRegulator { .. } => "DuplicateRegulatorError",
                FeederError::Dimension { .. } => "DimensionError",
            },
            Error::Build(e) => match e {
                BuildError::Config(_) => "ConfigError",
                BuildError::Model(_) => "ModelError",
                BuildError::Headroom { .. } => "HeadroomError",
                BuildError::AllInfeasible => "AllInfeasibleError",
                BuildError::Dimension { .. } => "DimensionError",
            },
            Error::Scenario(e) => match e {
                ScenarioError::Schema(_) | ScenarioError::Io(_) => "SchemaError",
                ScenarioError::MissingBus(_) => "MissingBusError",
                ScenarioError::NegativeValue { .. } => "NegativeValueError",
                ScenarioError::Expansion { .. } => "HeadroomError",
            },
            Error::Region(e) => match e {
                RegionError::NotInRegion => "NotInRegionError",
                RegionError::Dimension { .. } => "DimensionError",
            },
            Error::Stats(e) => match e {
                StatsError::EmptyGroup(_) => "EmptyGroupError",
                StatsError::DivideByZero { .. } => "DivideByZero",
                StatsError::NoRemoteRegulators => "ModelError",
            },
            Error::PowerFlow(e) => match e {
                PowerFlowError::NonConvergence { .. } => "NonConvergence",
                PowerFlowError::Dimension { .. } => "DimensionError",
            },
            Error::Numerical(_) => "NumericalFailure",
            Error::Io(_) => "SchemaError",
        }
    }

    /// True for failures caused by inputs rather than numerics.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::Numerical(_) | Error::PowerFlow(PowerFlowError::NonConvergence { .. })
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
