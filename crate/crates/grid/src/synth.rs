//! Seeded random radial feeders for regression fixtures and property tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::feeder::{Bus, BusKind, Capacitor, FeederNetwork, Line, Load, Solar, FORMAT_TAG};

#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    pub buses: usize,
    /// Probability that a load bus carries solar.
    pub solar_share: f64,
    pub capacitor_share: f64,
    pub max_load: f64,
    pub max_solar: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            buses: 20,
            solar_share: 0.3,
            capacitor_share: 0.1,
            max_load: 0.04,
            max_solar: 0.15,
        }
    }
}

pub fn random_feeder(seed: u64, opts: SynthOptions) -> FeederNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = opts.buses.max(2);
    let mut net = FeederNetwork {
        format: FORMAT_TAG.into(),
        name: format!("synthetic_{n}_{seed}"),
        vmin: 0.95,
        vmax: 1.05,
        buses: Vec::with_capacity(n),
        lines: Vec::with_capacity(n - 1),
        loads: Vec::new(),
        solar: Vec::new(),
        capacitors: Vec::new(),
        slack_currents: Vec::new(),
    };
    net.buses.push(Bus { id: 0, kind: BusKind::Source });
    for id in 1..n as u32 {
        net.buses.push(Bus { id, kind: BusKind::Load });
        // Attach to a recent bus so feeders come out long rather than star-shaped.
        let lo = id.saturating_sub(3);
        let parent = rng.random_range(lo..id);
        net.lines.push(Line {
            from: parent,
            to: id,
            r: round6(rng.random_range(0.002..0.02)),
            x: round6(rng.random_range(0.002..0.02)),
        });
        net.loads.push(Load {
            bus: id,
            p: round6(rng.random_range(0.0..opts.max_load)),
            q: round6(rng.random_range(0.0..opts.max_load / 2.0)),
        });
        if rng.random_bool(opts.solar_share) {
            net.solar.push(Solar {
                bus: id,
                rating: round6(rng.random_range(0.0..opts.max_solar)),
                curtailed: 0.0,
            });
        }
        if rng.random_bool(opts.capacitor_share) {
            net.capacitors.push(Capacitor {
                bus: id,
                q: round6(rng.random_range(0.0..0.05)),
            });
        }
    }
    net
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}
