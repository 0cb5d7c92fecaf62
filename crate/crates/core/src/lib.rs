//! Inner approximation of the aggregate flexibility of storage fleets by
//! summed extreme actions, with peak-shaving dispatch and LP oracles.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! unsuffixed aliases below fix the scalar to `f64`.

pub mod aggregation;
pub mod container;
pub mod dispatch;
pub mod error;
pub mod extreme;
pub mod lp;
pub mod oracle;
pub mod report;
pub mod scalar;
pub mod scenario;
pub mod storage;

pub use aggregation::{
    aggregate, disaggregate, find_weights, sample_directions, DirectionSet,
    VertexFlexibility as VertexFlexibilityG,
};
pub use dispatch::{
    peak_shave_centralized, peak_shave_vertex, uncontrolled_baseline, DispatchMethod,
    DispatchResult as DispatchResultG,
};
pub use error::{Error, Result};
pub use extreme::{extreme_action, extreme_actions, SignVector};
pub use lp::{LinearProgram as LinearProgramG, LpSolution as LpSolutionG, LpStatus};
pub use scalar::Scalar;
pub use scenario::{generate_scenario, Scenario as ScenarioG, ScenarioSpec};
pub use storage::{
    build_ev_device, build_polytope, check_feasible, simulate_soc, EvSpec as EvSpecG,
    Profile as ProfileG, StorageDevice as StorageDeviceG,
};

pub type StorageDevice = StorageDeviceG<f64>;
pub type EvSpec = EvSpecG<f64>;
pub type Profile = ProfileG<f64>;
pub type VertexFlexibility = VertexFlexibilityG<f64>;
pub type DispatchResult = DispatchResultG<f64>;
pub type Scenario = ScenarioG<f64>;
pub type LinearProgram = LinearProgramG<f64>;
pub type LpSolution = LpSolutionG<f64>;

/// Version tag written into every JSON document and binary container.
pub const FORMAT_VERSION: u32 = 1;
