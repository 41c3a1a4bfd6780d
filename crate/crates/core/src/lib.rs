//! Sequential unsharp-measurement scenarios on two qubits: instruments,
//! CHSH evaluation, closed forms for the sharing chains and the optimizers
//! used to search measurement settings.

pub mod bilateral;
pub mod error;
pub mod instruments;
pub mod linalg;
pub mod optimize;
pub mod scenario;
pub mod state;
pub mod unilateral;
pub mod verify;

#[cfg(test)]
mod testutil;

pub use bilateral::{BilateralConfig, CoefficientTriple, Pair, ThetaRule};
pub use error::{Error, Result};
pub use instruments::{MeasurementSpec, ReductionMode};
pub use linalg::{Mat2, Mat4, Side};
pub use optimize::{OptimResult, OptimizerConfig, ParameterSpace, ScenarioKind, Strategy};
pub use scenario::{ObserverSetting, SignPlacement};
pub use state::TwoQubitState;
pub use unilateral::{SharingSequence, SharingStep};
