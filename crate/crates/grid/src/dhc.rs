//! Dynamic hosting capacity as minimal-norm solar curtailment.
//!
//! Each solve linearizes bus voltages around the current operating point
//! with LinDistFlow sensitivities, finds the smallest curtailment (in the
//! requested norm) that keeps every linearized voltage at or below `vmax`,
//! then re-solves the nonlinear power flow at that curtailment and repeats
//! until the curtailment stops moving. The fixed point satisfies the
//! nonlinear voltage limit, not just its linearization.
//!
//! * ℓ1 (sparse): dense simplex.
//! * ℓ2 (balanced): least-distance program via NNLS.
//! * ℓ∞ (equitable): bisection on a common curtailment level.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::GridError;
use crate::feeder::{BusId, FeederNetwork};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::nnls::least_distance;
use crate::powerflow::{self, PowerFlowSolution};
use crate::sensitivity::Sensitivity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn as_str(self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        }
    }

    pub fn measure(self, values: impl IntoIterator<Item = f64>) -> f64 {
        let it = values.into_iter();
        match self {
            Norm::L1 => it.map(f64::abs).sum(),
            Norm::L2 => it.map(|v| v * v).sum::<f64>().sqrt(),
            Norm::Linf => it.map(f64::abs).fold(0.0, f64::max),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Norm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            "linf" => Ok(Norm::Linf),
            other => Err(format!("unknown norm '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurtailmentResult {
    pub norm: Norm,
    /// Curtailed active power per solar bus, pu.
    pub curtailment: BTreeMap<BusId, f64>,
    pub objective: f64,
    pub feasible: bool,
    pub iterations: usize,
    /// Nonlinear power flow at the curtailed operating point.
    pub voltages: BTreeMap<BusId, f64>,
}

impl CurtailmentResult {
    pub fn max_overvoltage(&self, vmax: f64) -> f64 {
        self.voltages.values().map(|v| v - vmax).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DhcOptions {
    pub max_rounds: usize,
    /// Convergence threshold on the curtailment update, pu.
    pub step_tolerance: f64,
    /// Accepted nonlinear overshoot above vmax, pu.
    pub voltage_tolerance: f64,
}

impl Default for DhcOptions {
    fn default() -> Self {
        Self {
            max_rounds: 100,
            step_tolerance: 1e-12,
            voltage_tolerance: 1e-9,
        }
    }
}

/// Returns a copy of `net` with `curtailment` added on top of any curtailment
/// already recorded in it.
pub fn apply_curtailment(net: &FeederNetwork, curtailment: &BTreeMap<BusId, f64>) -> FeederNetwork {
    let mut out = net.clone();
    for s in &mut out.solar {
        if let Some(&c) = curtailment.get(&s.bus) {
            if c != 0.0 {
                s.curtailed = (s.curtailed + c).min(s.rating);
            }
        }
    }
    out
}

pub fn run_dhc(net: &FeederNetwork, norm: Norm) -> Result<CurtailmentResult, GridError> {
    run_dhc_with(net, norm, DhcOptions::default())
}

pub fn run_dhc_with(net: &FeederNetwork, norm: Norm, opts: DhcOptions) -> Result<CurtailmentResult, GridError> {
    let solar = net.solar_buses();
    if solar.is_empty() {
        return Err(GridError::NoSolar);
    }
    let available: Vec<f64> = solar
        .iter()
        .map(|b| net.solar.iter().find(|s| s.bus == *b).map_or(0.0, |s| s.available()))
        .collect();
    let topo = net.topology()?;
    let sens = Sensitivity::new(&topo);
    let buses: Vec<BusId> = topo.ids.clone();
    let s_matrix = sens.matrix(&buses, &solar);

    let pf_at = |c: &[f64]| -> Result<PowerFlowSolution, GridError> {
        let map = solar.iter().copied().zip(c.iter().copied()).collect();
        powerflow::solve(&apply_curtailment(net, &map))
    };
    let finish = |c: Vec<f64>, sol: PowerFlowSolution, iterations: usize| {
        let curtailment: BTreeMap<BusId, f64> = solar.iter().copied().zip(c).collect();
        let feasible = sol
            .voltages
            .values()
            .all(|v| *v <= net.vmax + opts.voltage_tolerance.max(1e-9));
        CurtailmentResult {
            norm,
            objective: norm.measure(curtailment.values().copied()),
            curtailment,
            feasible,
            iterations,
            voltages: sol.voltages,
        }
    };

    let mut c = vec![0.0; solar.len()];
    let mut sol = pf_at(&c)?;
    if sol.voltages.values().all(|v| *v <= net.vmax) {
        return Ok(finish(c, sol, 0));
    }

    let full = pf_at(&available)?;
    if let Some((&bus, &voltage)) = full
        .voltages
        .iter()
        .filter(|(_, v)| **v > net.vmax + opts.voltage_tolerance)
        .max_by(|a, b| a.1.total_cmp(b.1))
    {
        return Err(GridError::Infeasible {
            bus,
            voltage,
            vmax: net.vmax,
        });
    }

    for round in 1..=opts.max_rounds {
        // Linearized requirement: S c' >= v(c) + S c - vmax, row by row.
        let rhs: Vec<f64> = buses
            .iter()
            .zip(&s_matrix)
            .map(|(b, row)| {
                let sc: f64 = row.iter().zip(&c).map(|(a, x)| a * x).sum();
                sol.voltages[b] + sc - net.vmax
            })
            .collect();
        let next = solve_linearized(norm, &s_matrix, &rhs, &available)?;
        let step = next
            .iter()
            .zip(&c)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        c = next;
        sol = pf_at(&c)?;
        let over = sol
            .voltages
            .values()
            .map(|v| v - net.vmax)
            .fold(f64::NEG_INFINITY, f64::max);
        if step <= opts.step_tolerance && over <= opts.voltage_tolerance {
            return Ok(finish(c, sol, round));
        }
    }
    Ok(finish(c, sol, opts.max_rounds))
}

/// Smallest curtailment `c` (0 <= c <= cap) with `S c >= rhs`.
fn solve_linearized(norm: Norm, s: &[Vec<f64>], rhs: &[f64], cap: &[f64]) -> Result<Vec<f64>, GridError> {
    // Sensitivities are non-negative, so rows already met at c = 0 stay met.
    let active: Vec<usize> = (0..rhs.len()).filter(|&j| rhs[j] > 0.0).collect();
    let n = cap.len();
    if active.is_empty() {
        return Ok(vec![0.0; n]);
    }
    match norm {
        Norm::Linf => {
            let covers = |t: f64| {
                active.iter().all(|&j| {
                    let got: f64 = s[j].iter().zip(cap).map(|(a, u)| a * t.min(*u)).sum();
                    got >= rhs[j]
                })
            };
            let (mut lo, mut hi) = (0.0, cap.iter().copied().fold(0.0, f64::max));
            if !covers(hi) {
                return Ok(cap.to_vec());
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if covers(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(cap.iter().map(|u| hi.min(*u)).collect())
        }
        Norm::L1 => {
            let mut lp = LinearProgram::new(vec![1.0; n]);
            for &j in &active {
                lp.constrain(s[j].clone(), Relation::Ge, rhs[j]);
            }
            for (i, &u) in cap.iter().enumerate() {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                lp.constrain(row, Relation::Le, u);
            }
            match lp.solve()? {
                LpOutcome::Optimal { x, .. } => Ok(x.iter().zip(cap).map(|(v, u)| v.clamp(0.0, *u)).collect()),
                LpOutcome::Infeasible => Ok(cap.to_vec()),
                LpOutcome::Unbounded => Err(GridError::Solver("curtailment LP unbounded".into())),
            }
        }
        Norm::L2 => {
            let rows = active.len() + 2 * n;
            let mut g = DMatrix::zeros(rows, n);
            let mut h = DVector::zeros(rows);
            for (r, &j) in active.iter().enumerate() {
                for i in 0..n {
                    g[(r, i)] = s[j][i];
                }
                h[r] = rhs[j];
            }
            for i in 0..n {
                g[(active.len() + i, i)] = 1.0;
                g[(active.len() + n + i, i)] = -1.0;
                h[active.len() + n + i] = -cap[i];
            }
            match least_distance(&g, &h)? {
                Some(x) => Ok(x.iter().zip(cap).map(|(v, u)| v.clamp(0.0, *u)).collect()),
                None => Ok(cap.to_vec()),
            }
        }
    }
}
