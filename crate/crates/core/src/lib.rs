//! Two-step GMM estimation of dynamic network spillovers between two groups
//! of units in a short panel, with a step-down test for the direction of
//! spillover and a Monte Carlo simulator on preferential-attachment networks.

pub mod error;
pub mod estimator;
pub mod inference;
pub mod instruments;
pub mod io;
pub mod linalg;
pub mod panel;
pub mod simulate;
pub mod transforms;

pub use error::{Error, Result, Stage};
pub use estimator::{estimate, estimate_with_truth, EstimationResult, GroupEstimate, Truth};
pub use inference::{chi2_1_quantile, stepdown, Hypothesis, StepdownDecision};
pub use instruments::{build_instruments, InstrumentPanel, IvOption};
pub use panel::{
    validate_dataset, ClusterMap, Edge, Group, GroupPartition, NetworkStack, PanelDataset,
    PeriodTensor, UnitId,
};
pub use simulate::{mc_study, simulate_panel, McReport, McSettings, SimulationConfig, TrueParams};
