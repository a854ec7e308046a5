//! Desk-scale distribution grid analyses on single-phase radial feeders.

pub mod dhc;
pub mod error;
pub mod feeder;
pub mod infeasibility;
pub mod lp;
pub mod nnls;
pub mod plot;
pub mod powerflow;
pub mod sensitivity;
pub mod synth;

pub use dhc::{run_dhc, CurtailmentResult, Norm};
pub use error::GridError;
pub use feeder::{BusId, FeederNetwork};
pub use infeasibility::{run_infeasibility, InfeasibilityResult};
pub use powerflow::PowerFlowSolution;
