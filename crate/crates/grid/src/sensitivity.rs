//! LinDistFlow voltage sensitivities.
//!
//! Neglecting losses, the voltage magnitude at bus `j` moves by
//! `R(j, k)` per unit of active power injected at bus `k`, where `R(j, k)`
//! is the resistance shared by the root paths of `j` and `k`. The same
//! coefficient applies to a current injected in phase with a voltage near
//! 1.0 pu.

use crate::feeder::{BusId, Topology};

#[derive(Debug, Clone)]
pub struct Sensitivity {
    ids: Vec<BusId>,
    /// Cumulative path resistance from the root to each bus index.
    path_r: Vec<f64>,
    topo: Topology,
}

impl Sensitivity {
    pub fn new(topo: &Topology) -> Self {
        let mut path_r = vec![0.0; topo.len()];
        for &u in &topo.order[1..] {
            path_r[u] = path_r[topo.parent[u]] + topo.impedance[u].0;
        }
        Self {
            ids: topo.ids.clone(),
            path_r,
            topo: topo.clone(),
        }
    }

    pub fn bus_ids(&self) -> &[BusId] {
        &self.ids
    }

    /// dV(observed) / dP(injected), both given as bus ids.
    pub fn dv_dp(&self, observed: BusId, injected: BusId) -> f64 {
        let (Some(j), Some(k)) = (self.topo.index_of(observed), self.topo.index_of(injected)) else {
            return 0.0;
        };
        self.path_r[self.common_ancestor(j, k)]
    }

    /// Dense matrix with one row per `observed` bus and one column per
    /// `injected` bus.
    pub fn matrix(&self, observed: &[BusId], injected: &[BusId]) -> Vec<Vec<f64>> {
        observed
            .iter()
            .map(|&j| injected.iter().map(|&k| self.dv_dp(j, k)).collect())
            .collect()
    }

    fn common_ancestor(&self, mut a: usize, mut b: usize) -> usize {
        let depth = |mut u: usize| {
            let mut d = 0;
            while u != self.topo.root {
                u = self.topo.parent[u];
                d += 1;
            }
            d
        };
        let (mut da, mut db) = (depth(a), depth(b));
        while da > db {
            a = self.topo.parent[a];
            da -= 1;
        }
        while db > da {
            b = self.topo.parent[b];
            db -= 1;
        }
        while a != b {
            a = self.topo.parent[a];
            b = self.topo.parent[b];
        }
        a
    }
}
