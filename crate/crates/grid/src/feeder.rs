//! Native feeder description (`feeder/1`) and its tree topology.
//!
//! A feeder is a single-phase positive-sequence equivalent of a radial
//! distribution network: one source bus held at 1.0 pu, load buses hanging
//! off it through series impedances, plus per-bus load, solar and capacitor
//! entries. All quantities are per unit on a common base.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::GridError;

pub const FORMAT_TAG: &str = "feeder/1";

pub type BusId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Source,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    #[serde(rename = "type")]
    pub kind: BusKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: BusId,
    pub p: f64,
    pub q: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// Rooftop or utility solar at a bus. The injected active power is
/// `rating - curtailed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solar {
    pub bus: BusId,
    pub rating: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub curtailed: f64,
}

impl Solar {
    pub fn available(&self) -> f64 {
        (self.rating - self.curtailed).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capacitor {
    pub bus: BusId,
    pub q: f64,
}

/// Current injected in phase with the bus voltage (positive raises voltage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackCurrent {
    pub bus: BusId,
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederNetwork {
    pub format: String,
    pub name: String,
    pub vmin: f64,
    pub vmax: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    #[serde(default)]
    pub loads: Vec<Load>,
    #[serde(default)]
    pub solar: Vec<Solar>,
    #[serde(default)]
    pub capacitors: Vec<Capacitor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slack_currents: Vec<SlackCurrent>,
}

impl FeederNetwork {
    pub fn from_json(text: &str) -> Result<Self, GridError> {
        let net: FeederNetwork = serde_json::from_str(text)
            .map_err(|e| GridError::Schema(vec![format!("malformed feeder JSON: {e}")]))?;
        net.validate()?;
        Ok(net)
    }

    pub fn load(path: &Path) -> Result<Self, GridError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| GridError::NotFound(path.display().to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("feeder serialization cannot fail")
    }

    /// Checks every structural invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), GridError> {
        let mut problems = Vec::new();
        if self.format != FORMAT_TAG {
            problems.push(format!("format must be \"{FORMAT_TAG}\", got \"{}\"", self.format));
        }
        if !(self.vmin < 1.0 && 1.0 < self.vmax) {
            problems.push(format!(
                "voltage limits must satisfy vmin < 1.0 < vmax (got {}, {})",
                self.vmin, self.vmax
            ));
        }

        let mut ids = BTreeSet::new();
        for bus in &self.buses {
            if !ids.insert(bus.id) {
                problems.push(format!("duplicate bus id {}", bus.id));
            }
        }
        let sources = self.buses.iter().filter(|b| b.kind == BusKind::Source).count();
        if sources != 1 {
            problems.push(format!("expected exactly one source bus, found {sources}"));
        }

        for line in &self.lines {
            for end in [line.from, line.to] {
                if !ids.contains(&end) {
                    problems.push(format!("line {}-{} references unknown bus {end}", line.from, line.to));
                }
            }
            if !(line.r > 0.0 && line.x > 0.0) || !line.r.is_finite() || !line.x.is_finite() {
                problems.push(format!(
                    "line {}-{} needs r > 0 and x > 0 (got r={}, x={})",
                    line.from, line.to, line.r, line.x
                ));
            }
        }

        let mut check_unique = |what: &str, buses: &mut dyn Iterator<Item = BusId>| {
            let mut seen = BTreeSet::new();
            for b in buses {
                if !ids.contains(&b) {
                    problems.push(format!("{what} at unknown bus {b}"));
                }
                if !seen.insert(b) {
                    problems.push(format!("more than one {what} entry at bus {b}"));
                }
            }
        };
        check_unique("load", &mut self.loads.iter().map(|l| l.bus));
        check_unique("solar", &mut self.solar.iter().map(|s| s.bus));
        check_unique("capacitor", &mut self.capacitors.iter().map(|c| c.bus));
        check_unique("slack current", &mut self.slack_currents.iter().map(|c| c.bus));

        for s in &self.solar {
            if !(s.rating >= 0.0) {
                problems.push(format!("solar rating at bus {} must be >= 0", s.bus));
            } else if !(s.curtailed >= 0.0 && s.curtailed <= s.rating) {
                problems.push(format!("solar curtailment at bus {} outside [0, rating]", s.bus));
            }
        }
        for l in &self.loads {
            if !l.p.is_finite() || !l.q.is_finite() {
                problems.push(format!("load at bus {} is not finite", l.bus));
            }
        }

        if problems.is_empty() {
            if let Err(tree_problem) = self.build_topology() {
                problems.push(tree_problem);
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GridError::Schema(problems))
        }
    }

    /// Builds the rooted tree without checking electrical parameters.
    pub fn topology(&self) -> Result<Topology, GridError> {
        self.build_topology().map_err(|p| GridError::Schema(vec![p]))
    }

    fn build_topology(&self) -> Result<Topology, String> {
        let n = self.buses.len();
        if n == 0 {
            return Err("tree violation: network has no buses".into());
        }
        if self.lines.len() + 1 != n {
            return Err(format!(
                "tree violation: {} buses need {} lines, found {}",
                n,
                n - 1,
                self.lines.len()
            ));
        }
        let mut ids: Vec<BusId> = self.buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        let index: HashMap<BusId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let root_id = self
            .buses
            .iter()
            .find(|b| b.kind == BusKind::Source)
            .map(|b| b.id)
            .ok_or_else(|| "tree violation: no source bus".to_string())?;
        let root = index[&root_id];

        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (li, line) in self.lines.iter().enumerate() {
            let (Some(&a), Some(&b)) = (index.get(&line.from), index.get(&line.to)) else {
                return Err(format!("tree violation: line {} has unknown endpoint", li));
            };
            if a == b {
                return Err(format!("tree violation: line {}-{} is a self loop", line.from, line.to));
            }
            adjacency[a].push((b, li));
            adjacency[b].push((a, li));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }

        let mut parent = vec![usize::MAX; n];
        let mut parent_line = vec![usize::MAX; n];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(v, li) in &adjacency[u] {
                if v == parent[u] && li == parent_line[u] {
                    continue;
                }
                if visited[v] {
                    return Err(format!(
                        "tree violation: cycle through buses {} and {}",
                        ids[u], ids[v]
                    ));
                }
                visited[v] = true;
                parent[v] = u;
                parent_line[v] = li;
                queue.push_back(v);
            }
        }
        if order.len() != n {
            let missing: Vec<String> = (0..n)
                .filter(|&i| !visited[i])
                .map(|i| ids[i].to_string())
                .collect();
            return Err(format!(
                "tree violation: buses not connected to the source: {}",
                missing.join(", ")
            ));
        }

        let mut children = vec![Vec::new(); n];
        for &v in &order[1..] {
            children[parent[v]].push(v);
        }
        let impedance = (0..n)
            .map(|v| {
                if v == root {
                    (0.0, 0.0)
                } else {
                    let line = &self.lines[parent_line[v]];
                    (line.r, line.x)
                }
            })
            .collect();

        Ok(Topology {
            ids,
            root,
            parent,
            children,
            order,
            impedance,
        })
    }

    pub fn source_bus(&self) -> Option<BusId> {
        self.buses.iter().find(|b| b.kind == BusKind::Source).map(|b| b.id)
    }

    /// Net demand per bus (load minus solar and capacitor injections).
    pub fn net_demand(&self) -> BTreeMap<BusId, (f64, f64)> {
        let mut demand: BTreeMap<BusId, (f64, f64)> =
            self.buses.iter().map(|b| (b.id, (0.0, 0.0))).collect();
        for l in &self.loads {
            let e = demand.entry(l.bus).or_default();
            e.0 += l.p;
            e.1 += l.q;
        }
        for s in &self.solar {
            demand.entry(s.bus).or_default().0 -= s.available();
        }
        for c in &self.capacitors {
            demand.entry(c.bus).or_default().1 -= c.q;
        }
        demand
    }

    pub fn solar_buses(&self) -> Vec<BusId> {
        let mut b: Vec<BusId> = self.solar.iter().map(|s| s.bus).collect();
        b.sort_unstable();
        b
    }
}

/// Rooted tree over bus indices. Indices follow ascending bus id.
#[derive(Debug, Clone)]
pub struct Topology {
    pub ids: Vec<BusId>,
    pub root: usize,
    pub parent: Vec<usize>,
    pub children: Vec<Vec<usize>>,
    /// Breadth-first order from the root.
    pub order: Vec<usize>,
    /// Series (r, x) of the line feeding each bus; zero for the root.
    pub impedance: Vec<(f64, f64)>,
}

impl Topology {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: BusId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    /// Bus indices on the path from the root (exclusive) down to `bus` (inclusive).
    pub fn path_from_root(&self, bus: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut u = bus;
        while u != self.root {
            path.push(u);
            u = self.parent[u];
        }
        path.reverse();
        path
    }
}
