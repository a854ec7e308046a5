//! Current infeasibility analysis.
//!
//! Finds the smallest set of slack current injections (positive raises the
//! local voltage, negative lowers it) that brings every linearized bus
//! voltage inside `[vmin, vmax]`. The linearization is taken around a solved
//! power flow and refreshed until the nonlinear power flow with the slacks
//! applied meets the limits. ℓ1 favours few buses, ℓ2 spreads the correction.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::dhc::Norm;
use crate::error::GridError;
use crate::feeder::{BusId, FeederNetwork, SlackCurrent};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::nnls::least_distance;
use crate::powerflow::{self, PowerFlowSolution};
use crate::sensitivity::Sensitivity;

#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityResult {
    pub norm: Norm,
    /// Signed slack current per non-source bus, pu.
    pub slacks: BTreeMap<BusId, f64>,
    pub objective: f64,
}

impl InfeasibilityResult {
    pub fn magnitude(&self, bus: BusId) -> f64 {
        self.slacks.get(&bus).map_or(0.0, |s| s.abs())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InfeasibilityOptions {
    pub max_rounds: usize,
    /// Convergence threshold on the slack update, pu.
    pub step_tolerance: f64,
    /// Accepted nonlinear violation of either voltage limit, pu.
    pub voltage_tolerance: f64,
}

impl Default for InfeasibilityOptions {
    fn default() -> Self {
        Self {
            max_rounds: 100,
            step_tolerance: 1e-12,
            voltage_tolerance: 1e-9,
        }
    }
}

/// Slack currents that bring the nonlinear power flow inside the voltage
/// band. Starting from `base`, each round solves the linearized problem
/// around the current operating point and re-solves the power flow with the
/// new slacks, until the slacks stop moving. `norm` must be ℓ1 or ℓ2.
pub fn run_infeasibility(
    net: &FeederNetwork,
    base: &PowerFlowSolution,
    norm: Norm,
) -> Result<InfeasibilityResult, GridError> {
    run_infeasibility_with(net, base, norm, InfeasibilityOptions::default())
}

pub fn run_infeasibility_with(
    net: &FeederNetwork,
    base: &PowerFlowSolution,
    norm: Norm,
    opts: InfeasibilityOptions,
) -> Result<InfeasibilityResult, GridError> {
    let problem = Linearized::new(net, norm)?;
    let outside = |v: &BTreeMap<BusId, f64>| {
        problem
            .buses
            .iter()
            .map(|b| (v[b] - net.vmax).max(net.vmin - v[b]))
            .fold(0.0, f64::max)
    };
    if outside(&base.voltages) <= 0.0 {
        return Ok(problem.result(vec![0.0; problem.buses.len()]));
    }

    let mut s = vec![0.0; problem.buses.len()];
    let mut voltages = base.voltages.clone();
    for _ in 0..opts.max_rounds {
        // Voltage the linear model predicts with no slack at all.
        let offset: Vec<f64> = problem
            .buses
            .iter()
            .zip(&problem.s)
            .map(|(b, row)| voltages[b] - row.iter().zip(&s).map(|(a, x)| a * x).sum::<f64>())
            .collect();
        let next = problem.solve(&offset)?;
        let step = next.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        s = next;
        let applied = apply_slacks(net, &problem.result(s.clone()));
        voltages = powerflow::solve(&applied)?.voltages;
        if step <= opts.step_tolerance && outside(&voltages) <= opts.voltage_tolerance {
            break;
        }
    }
    Ok(problem.result(s))
}

/// Single linearized solve around `base`: the smallest slacks `s` with
/// `vmin <= v0 + S s <= vmax`, where `S` holds LinDistFlow sensitivities.
pub fn linearized_slacks(
    net: &FeederNetwork,
    base: &PowerFlowSolution,
    norm: Norm,
) -> Result<InfeasibilityResult, GridError> {
    let problem = Linearized::new(net, norm)?;
    let v0: Vec<f64> = problem.buses.iter().map(|b| base.voltages[b]).collect();
    let s = problem.solve(&v0)?;
    Ok(problem.result(s))
}

struct Linearized<'a> {
    net: &'a FeederNetwork,
    norm: Norm,
    buses: Vec<BusId>,
    s: Vec<Vec<f64>>,
}

impl<'a> Linearized<'a> {
    fn new(net: &'a FeederNetwork, norm: Norm) -> Result<Self, GridError> {
        if norm == Norm::Linf {
            return Err(GridError::Solver("infeasibility analysis supports l1 and l2 only".into()));
        }
        let topo = net.topology()?;
        let sens = Sensitivity::new(&topo);
        let buses: Vec<BusId> = topo
            .ids
            .iter()
            .copied()
            .filter(|&b| Some(b) != net.source_bus())
            .collect();
        let s = sens.matrix(&buses, &buses);
        Ok(Self { net, norm, buses, s })
    }

    fn result(&self, slack: Vec<f64>) -> InfeasibilityResult {
        let slacks: BTreeMap<BusId, f64> = self
            .buses
            .iter()
            .copied()
            .zip(slack.into_iter().map(|v| if v.abs() < 1e-13 { 0.0 } else { v }))
            .collect();
        InfeasibilityResult {
            norm: self.norm,
            objective: self.norm.measure(slacks.values().copied()),
            slacks,
        }
    }

    fn solve(&self, v0: &[f64]) -> Result<Vec<f64>, GridError> {
        let (net, s, n) = (self.net, &self.s, self.buses.len());
        if v0.iter().all(|v| *v >= net.vmin && *v <= net.vmax) {
            return Ok(vec![0.0; n]);
        }
        match self.norm {
            Norm::L2 => {
                // vmin <= v0 + S s <= vmax  as  G s >= h.
                let mut g = DMatrix::zeros(2 * n, n);
                let mut h = DVector::zeros(2 * n);
                for j in 0..n {
                    for k in 0..n {
                        g[(j, k)] = s[j][k];
                        g[(n + j, k)] = -s[j][k];
                    }
                    h[j] = net.vmin - v0[j];
                    h[n + j] = v0[j] - net.vmax;
                }
                Ok(least_distance(&g, &h)?
                    .ok_or_else(|| GridError::Solver("voltage band cannot be met by slack currents".into()))?
                    .iter()
                    .copied()
                    .collect())
            }
            _ => {
                // s = up - down with up, down >= 0.
                let mut lp = LinearProgram::new(vec![1.0; 2 * n]);
                for j in 0..n {
                    let row: Vec<f64> = s[j].iter().copied().chain(s[j].iter().map(|a| -a)).collect();
                    lp.constrain(row.clone(), Relation::Le, net.vmax - v0[j]);
                    lp.constrain(row, Relation::Ge, net.vmin - v0[j]);
                }
                match lp.solve()? {
                    LpOutcome::Optimal { x, .. } => Ok((0..n).map(|k| x[k] - x[n + k]).collect()),
                    other => Err(GridError::Solver(format!("infeasibility LP: {other:?}"))),
                }
            }
        }
    }
}

/// Copy of `net` with the slack currents added as in-phase injections.
pub fn apply_slacks(net: &FeederNetwork, result: &InfeasibilityResult) -> FeederNetwork {
    let mut out = net.clone();
    for (&bus, &current) in &result.slacks {
        if current == 0.0 {
            continue;
        }
        match out.slack_currents.iter_mut().find(|s| s.bus == bus) {
            Some(existing) => existing.current += current,
            None => out.slack_currents.push(SlackCurrent { bus, current }),
        }
    }
    out.slack_currents.sort_by_key(|s| s.bus);
    out
}
