//! Newton-Raphson power flow on the bus admittance matrix with a
//! finite-difference Jacobian, in rectangular coordinates.

use std::collections::BTreeMap;

use gridflow_grid::feeder::{BusKind, FeederNetwork};
use gridflow_grid::BusId;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
struct C {
    re: f64,
    im: f64,
}

impl C {
    fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }
    fn mul(self, o: C) -> C {
        C::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
    fn conj(self) -> C {
        C::new(self.re, -self.im)
    }
    fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Magnitude of the receiving-end voltage of a single line fed from 1.0 pu,
/// from the exact branch equations: `|V|⁴ − (1 − 2(rp + xq))|V|² + |Z|²|S|² = 0`.
pub fn two_bus_voltage(r: f64, x: f64, p: f64, q: f64) -> f64 {
    let b = 1.0 - 2.0 * (r * p + x * q);
    let disc = b * b - 4.0 * (r * r + x * x) * (p * p + q * q);
    assert!(disc >= 0.0, "no power flow solution for this operating point");
    ((b + disc.sqrt()) / 2.0).sqrt()
}

/// Returns bus voltage magnitudes, or `None` if Newton fails to converge.
pub fn solve(net: &FeederNetwork) -> Option<BTreeMap<BusId, f64>> {
    let mut ids: Vec<BusId> = net.buses.iter().map(|b| b.id).collect();
    ids.sort_unstable();
    let pos = |id: BusId| ids.iter().position(|&b| b == id).unwrap();
    let n = ids.len();
    let source = pos(net.buses.iter().find(|b| b.kind == BusKind::Source)?.id);

    let mut y = vec![vec![C::new(0.0, 0.0); n]; n];
    for line in &net.lines {
        let (a, b) = (pos(line.from), pos(line.to));
        let den = line.r * line.r + line.x * line.x;
        let g = C::new(line.r / den, -line.x / den);
        y[a][a] = C::new(y[a][a].re + g.re, y[a][a].im + g.im);
        y[b][b] = C::new(y[b][b].re + g.re, y[b][b].im + g.im);
        y[a][b] = C::new(y[a][b].re - g.re, y[a][b].im - g.im);
        y[b][a] = C::new(y[b][a].re - g.re, y[b][a].im - g.im);
    }

    // Specified constant-power injection and in-phase current injection.
    let mut p_inj = vec![0.0; n];
    let mut q_inj = vec![0.0; n];
    let mut i_inj = vec![0.0; n];
    for l in &net.loads {
        p_inj[pos(l.bus)] -= l.p;
        q_inj[pos(l.bus)] -= l.q;
    }
    for s in &net.solar {
        p_inj[pos(s.bus)] += (s.rating - s.curtailed).max(0.0);
    }
    for c in &net.capacitors {
        q_inj[pos(c.bus)] += c.q;
    }
    for s in &net.slack_currents {
        i_inj[pos(s.bus)] += s.current;
    }

    let unknown: Vec<usize> = (0..n).filter(|&i| i != source).collect();
    let m = unknown.len();
    let voltages = |x: &DVector<f64>| {
        let mut v = vec![C::new(1.0, 0.0); n];
        for (k, &i) in unknown.iter().enumerate() {
            v[i] = C::new(x[2 * k], x[2 * k + 1]);
        }
        v
    };
    let residual = |x: &DVector<f64>| {
        let v = voltages(x);
        let mut f = DVector::zeros(2 * m);
        for (k, &i) in unknown.iter().enumerate() {
            let mut current = C::new(0.0, 0.0);
            for j in 0..n {
                let t = y[i][j].mul(v[j]);
                current = C::new(current.re + t.re, current.im + t.im);
            }
            let s = v[i].mul(current.conj());
            let spec_p = p_inj[i] + i_inj[i] * v[i].abs();
            f[2 * k] = s.re - spec_p;
            f[2 * k + 1] = s.im - q_inj[i];
        }
        f
    };

    let mut x = DVector::from_fn(2 * m, |r, _| if r % 2 == 0 { 1.0 } else { 0.0 });
    for _ in 0..50 {
        let f = residual(&x);
        if f.amax() < 1e-13 {
            let v = voltages(&x);
            return Some(ids.iter().zip(v).map(|(&id, c)| (id, c.abs())).collect());
        }
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        let h = 1e-7;
        for c in 0..2 * m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let col = (residual(&xp) - residual(&xm)) / (2.0 * h);
            jac.set_column(c, &col);
        }
        let dx = jac.lu().solve(&(-f))?;
        x += dx;
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    let f = residual(&x);
    if f.amax() < 1e-10 {
        let v = voltages(&x);
        Some(ids.iter().zip(v).map(|(&id, c)| (id, c.abs())).collect())
    } else {
        None
    }
}

pub fn max_voltage(net: &FeederNetwork) -> Option<f64> {
    solve(net).map(|v| v.values().copied().fold(f64::NEG_INFINITY, f64::max))
}
