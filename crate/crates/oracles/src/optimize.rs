//! Brute-force reference solutions for curtailment and infeasibility.

use std::collections::{BTreeMap, VecDeque};

use gridflow_grid::feeder::{BusKind, FeederNetwork};
use gridflow_grid::BusId;
use nalgebra::{DMatrix, DVector};

use crate::newton;

fn with_curtailment(net: &FeederNetwork, c: &BTreeMap<BusId, f64>) -> FeederNetwork {
    let mut out = net.clone();
    for s in &mut out.solar {
        if let Some(v) = c.get(&s.bus) {
            s.curtailed = (s.curtailed + v).min(s.rating);
        }
    }
    out
}

fn within_vmax(net: &FeederNetwork, c: &BTreeMap<BusId, f64>) -> bool {
    newton::max_voltage(&with_curtailment(net, c)).is_some_and(|v| v <= net.vmax)
}

fn available(net: &FeederNetwork) -> BTreeMap<BusId, f64> {
    net.solar.iter().map(|s| (s.bus, (s.rating - s.curtailed).max(0.0))).collect()
}

/// Smallest common curtailment level `t` (each bus curtailed by
/// `min(t, available)`) whose Newton power flow stays at or below vmax.
pub fn uniform_level(net: &FeederNetwork) -> f64 {
    let avail = available(net);
    let at = |t: f64| -> BTreeMap<BusId, f64> { avail.iter().map(|(&b, &a)| (b, t.min(a))).collect() };
    let (mut lo, mut hi) = (0.0, avail.values().copied().fold(0.0, f64::max));
    if within_vmax(net, &at(0.0)) {
        return 0.0;
    }
    assert!(within_vmax(net, &at(hi)), "full curtailment still violates vmax");
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if within_vmax(net, &at(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Minimum ℓ1 curtailment over the lattice `step·ℤ` (clamped to each
/// available injection), checked against the Newton power flow. All but the
/// last solar bus are enumerated on the lattice; the last is bisected and
/// rounded up to the lattice. Returns `(objective, curtailment)`.
pub fn l1_lattice(net: &FeederNetwork, step: f64) -> (f64, BTreeMap<BusId, f64>) {
    let avail: Vec<(BusId, f64)> = available(net).into_iter().collect();
    assert!(!avail.is_empty() && avail.len() <= 3, "lattice search handles 1 to 3 solar buses");
    let to_lattice = |v: f64| ((v - 1e-9) / step).ceil().max(0.0) * step;

    let (last_bus, last_cap) = *avail.last().unwrap();
    let head = &avail[..avail.len() - 1];

    // Minimum feasible curtailment on the last bus given the others.
    let last_needed = |fixed: &BTreeMap<BusId, f64>| -> Option<f64> {
        let mut c = fixed.clone();
        c.insert(last_bus, 0.0);
        if within_vmax(net, &c) {
            return Some(0.0);
        }
        c.insert(last_bus, last_cap);
        if !within_vmax(net, &c) {
            return None;
        }
        let (mut lo, mut hi) = (0.0, last_cap);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            c.insert(last_bus, mid);
            if within_vmax(net, &c) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(to_lattice(hi).min(last_cap))
    };

    let mut best = f64::INFINITY;
    let mut best_c = BTreeMap::new();
    let consider = |fixed: &BTreeMap<BusId, f64>, best: &mut f64, best_c: &mut BTreeMap<BusId, f64>| {
        let spent: f64 = fixed.values().sum();
        if spent >= *best {
            return;
        }
        if best.is_finite() {
            let mut probe = fixed.clone();
            probe.insert(last_bus, (*best - spent).min(last_cap));
            if !within_vmax(net, &probe) {
                return;
            }
        }
        if let Some(v) = last_needed(fixed) {
            if spent + v < *best - 1e-12 {
                *best = spent + v;
                let mut c = fixed.clone();
                c.insert(last_bus, v);
                *best_c = c;
            }
        }
    };

    let grid = |cap: f64| -> Vec<f64> {
        let steps = (cap / step).floor() as usize;
        let mut pts: Vec<f64> = (0..=steps).map(|i| i as f64 * step).collect();
        if pts.last().is_some_and(|&p| p < cap) {
            pts.push(cap);
        }
        pts
    };
    match head {
        [] => consider(&BTreeMap::new(), &mut best, &mut best_c),
        [(b1, cap1)] => {
            for v1 in grid(*cap1) {
                consider(&BTreeMap::from([(*b1, v1)]), &mut best, &mut best_c);
            }
        }
        [(b1, cap1), (b2, cap2)] => {
            for v1 in grid(*cap1) {
                if v1 >= best {
                    break;
                }
                for v2 in grid(*cap2) {
                    if v1 + v2 >= best {
                        break;
                    }
                    consider(&BTreeMap::from([(*b1, v1), (*b2, v2)]), &mut best, &mut best_c);
                }
            }
        }
        _ => unreachable!(),
    }
    (best, best_c)
}

/// Path-resistance sensitivity `R(j, k)` built from a parent map found by
/// breadth-first search.
pub fn shared_resistance(net: &FeederNetwork) -> BTreeMap<(BusId, BusId), f64> {
    let root = net.buses.iter().find(|b| b.kind == BusKind::Source).unwrap().id;
    let mut parent: BTreeMap<BusId, (BusId, f64)> = BTreeMap::new();
    let mut queue = VecDeque::from([root]);
    let mut seen = vec![root];
    while let Some(u) = queue.pop_front() {
        for l in &net.lines {
            let other = if l.from == u {
                l.to
            } else if l.to == u {
                l.from
            } else {
                continue;
            };
            if !seen.contains(&other) {
                seen.push(other);
                parent.insert(other, (u, l.r));
                queue.push_back(other);
            }
        }
    }
    let path = |mut b: BusId| {
        let mut edges = Vec::new();
        while let Some(&(p, r)) = parent.get(&b) {
            edges.push((b, r));
            b = p;
        }
        edges
    };
    let mut out = BTreeMap::new();
    for a in &net.buses {
        for b in &net.buses {
            let pa = path(a.id);
            let pb = path(b.id);
            let shared: f64 = pa.iter().filter(|e| pb.iter().any(|f| f.0 == e.0)).map(|e| e.1).sum();
            out.insert((a.id, b.id), shared);
        }
    }
    out
}

/// Minimum-ℓ2 slack currents keeping the linearized voltages
/// `v0 + R s` inside `[vmin, vmax]`, by enumerating every set of at most
/// three active constraints and solving the equality-constrained minimum
/// norm problem on each.
pub fn l2_slacks(net: &FeederNetwork, v0: &BTreeMap<BusId, f64>) -> BTreeMap<BusId, f64> {
    let source = net.buses.iter().find(|b| b.kind == BusKind::Source).unwrap().id;
    let mut buses: Vec<BusId> = net.buses.iter().map(|b| b.id).filter(|&b| b != source).collect();
    buses.sort_unstable();
    let r = shared_resistance(net);
    let n = buses.len();
    let s = DMatrix::from_fn(n, n, |i, j| r[&(buses[i], buses[j])]);

    // Candidate active constraints as (bus index, bound): v0 + S s = bound.
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        rows.push((j, net.vmax));
        rows.push((j, net.vmin));
    }
    let feasible = |x: &DVector<f64>| {
        let v = &s * x;
        (0..n).all(|j| {
            let vj = v0[&buses[j]] + v[j];
            vj <= net.vmax + 1e-12 && vj >= net.vmin - 1e-12
        })
    };

    let mut best: Option<DVector<f64>> = None;
    let mut subsets: Vec<Vec<usize>> = vec![vec![]];
    for a in 0..rows.len() {
        subsets.push(vec![a]);
        for b in a + 1..rows.len() {
            subsets.push(vec![a, b]);
            for c in b + 1..rows.len() {
                subsets.push(vec![a, b, c]);
            }
        }
    }
    for set in subsets {
        let x = if set.is_empty() {
            DVector::zeros(n)
        } else {
            let a = DMatrix::from_fn(set.len(), n, |i, k| s[(rows[set[i]].0, k)]);
            let b = DVector::from_fn(set.len(), |i, _| rows[set[i]].1 - v0[&buses[rows[set[i]].0]]);
            let gram = &a * a.transpose();
            let Some(y) = gram.lu().solve(&b) else { continue };
            if !(&a * a.transpose() * &y - &b).iter().all(|e| e.abs() < 1e-9) {
                continue;
            }
            a.transpose() * y
        };
        if feasible(&x) && best.as_ref().is_none_or(|b| x.norm() < b.norm()) {
            best = Some(x);
        }
    }
    let best = best.expect("no active set of size <= 3 is feasible");
    buses.iter().copied().zip(best.iter().copied()).collect()
}
