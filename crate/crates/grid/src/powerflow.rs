//! Backward-forward sweep power flow for radial feeders.
//!
//! Loads are constant power, capacitors constant reactive injection, solar a
//! constant active injection and slack currents a constant-magnitude current
//! in phase with the bus voltage. The source bus is fixed at 1.0∠0 pu.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::GridError;
use crate::feeder::{BusId, FeederNetwork};

#[derive(Debug, Clone, Copy)]
pub struct PowerFlowOptions {
    /// Largest tolerated complex power mismatch at any bus, pu.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub voltages: BTreeMap<BusId, f64>,
    pub angles: BTreeMap<BusId, f64>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn max_voltage(&self) -> (BusId, f64) {
        extreme(&self.voltages, |a, b| a > b)
    }

    pub fn min_voltage(&self) -> (BusId, f64) {
        extreme(&self.voltages, |a, b| a < b)
    }
}

fn extreme(values: &BTreeMap<BusId, f64>, better: impl Fn(f64, f64) -> bool) -> (BusId, f64) {
    let mut it = values.iter();
    let (&b0, &v0) = it.next().expect("solution has at least one bus");
    it.fold((b0, v0), |(bb, bv), (&b, &v)| if better(v, bv) { (b, v) } else { (bb, bv) })
}

pub fn solve(net: &FeederNetwork) -> Result<PowerFlowSolution, GridError> {
    solve_with(net, PowerFlowOptions::default())
}

pub fn solve_with(net: &FeederNetwork, opts: PowerFlowOptions) -> Result<PowerFlowSolution, GridError> {
    let topo = net.topology()?;
    let n = topo.len();

    let demand_by_id = net.net_demand();
    let demand: Vec<Complex64> = topo
        .ids
        .iter()
        .map(|id| {
            let (p, q) = demand_by_id[id];
            Complex64::new(p, q)
        })
        .collect();
    let mut slack = vec![0.0; n];
    for s in &net.slack_currents {
        if let Some(i) = topo.index_of(s.bus) {
            slack[i] += s.current;
        }
    }
    let impedance: Vec<Complex64> = topo
        .impedance
        .iter()
        .map(|&(r, x)| Complex64::new(r, x))
        .collect();

    // Current drawn by bus i at voltage v.
    let drawn = |i: usize, v: Complex64| -> Complex64 {
        let norm = v.norm();
        (demand[i] / v).conj() - v * (slack[i] / norm)
    };

    let mut v = vec![Complex64::new(1.0, 0.0); n];
    let mut injection = vec![Complex64::new(0.0, 0.0); n];
    let mut branch = vec![Complex64::new(0.0, 0.0); n];
    let mut mismatch = f64::INFINITY;

    for iteration in 1..=opts.max_iterations {
        for i in 0..n {
            injection[i] = drawn(i, v[i]);
        }
        for &u in topo.order.iter().rev() {
            let downstream: Complex64 = topo.children[u].iter().map(|&c| branch[c]).sum();
            branch[u] = injection[u] + downstream;
        }
        for &u in &topo.order[1..] {
            v[u] = v[topo.parent[u]] - impedance[u] * branch[u];
        }

        mismatch = 0.0;
        for i in 0..n {
            if i == topo.root {
                continue;
            }
            let m = (v[i] * (injection[i] - drawn(i, v[i])).conj()).norm();
            if !m.is_finite() {
                mismatch = f64::INFINITY;
                break;
            }
            mismatch = mismatch.max(m);
        }
        if !mismatch.is_finite() {
            break;
        }
        if mismatch < opts.tolerance {
            return Ok(PowerFlowSolution {
                voltages: topo.ids.iter().zip(&v).map(|(&id, x)| (id, x.norm())).collect(),
                angles: topo.ids.iter().zip(&v).map(|(&id, x)| (id, x.arg())).collect(),
                iterations: iteration,
                max_mismatch: mismatch,
            });
        }
    }
    Err(GridError::NonConvergence {
        iterations: opts.max_iterations,
        mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{Bus, BusKind, Line, Load, FORMAT_TAG};

    fn two_bus(r: f64, x: f64, p: f64, q: f64) -> FeederNetwork {
        FeederNetwork {
            format: FORMAT_TAG.into(),
            name: "two".into(),
            vmin: 0.9,
            vmax: 1.1,
            buses: vec![
                Bus { id: 0, kind: BusKind::Source },
                Bus { id: 1, kind: BusKind::Load },
            ],
            lines: vec![Line { from: 0, to: 1, r, x }],
            loads: vec![Load { bus: 1, p, q }],
            solar: vec![],
            capacitors: vec![],
            slack_currents: vec![],
        }
    }

    #[test]
    fn zero_load_gives_flat_profile() {
        let sol = solve(&two_bus(0.01, 0.02, 0.0, 0.0)).unwrap();
        assert_eq!(sol.voltages[&1], 1.0);
        assert_eq!(sol.voltages[&0], 1.0);
    }

    #[test]
    fn lossless_lines_give_flat_profile() {
        let sol = solve(&two_bus(0.0, 0.0, 0.3, 0.1)).unwrap();
        assert_eq!(sol.voltages[&1], 1.0);
    }

    #[test]
    fn absurd_load_does_not_converge() {
        let err = solve(&two_bus(0.01, 0.02, 100.0, 0.0)).unwrap_err();
        assert!(matches!(err, GridError::NonConvergence { .. }), "{err:?}");
    }

    #[test]
    fn source_stays_at_one() {
        let sol = solve(&two_bus(0.01, 0.02, 0.1, 0.05)).unwrap();
        assert_eq!(sol.voltages[&0], 1.0);
        assert!(sol.voltages[&1] < 1.0);
        assert!(sol.max_mismatch < 1e-8);
    }
}
