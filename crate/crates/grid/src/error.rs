use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("schema error: {}", .0.join("; "))]
    Schema(Vec<String>),
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e} pu)")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("no solar buses in the network")]
    NoSolar,
    #[error("curtailment infeasible: full curtailment still leaves bus {bus} at {voltage:.6} pu above vmax {vmax:.6}")]
    Infeasible { bus: u32, voltage: f64, vmax: f64 },
    #[error("solver failure: {0}")]
    Solver(String),
}
