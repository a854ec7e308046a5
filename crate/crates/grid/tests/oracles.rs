use std::collections::BTreeMap;
use std::path::PathBuf;

use gridflow_grid::dhc::{apply_curtailment, run_dhc};
use gridflow_grid::feeder::FeederNetwork;
use gridflow_grid::infeasibility::{apply_slacks, linearized_slacks, run_infeasibility};
use gridflow_grid::powerflow;
use gridflow_grid::synth::{random_feeder, SynthOptions};
use gridflow_grid::{BusId, Norm};
use gridflow_oracles::{newton, optimize};

fn fixture(name: &str) -> FeederNetwork {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/networks").join(name);
    FeederNetwork::load(&path).unwrap()
}

fn undervoltage_feeder() -> FeederNetwork {
    let mut net = fixture("south_hero.json");
    net.solar.clear();
    for l in &mut net.loads {
        l.p *= 4.0;
        l.q *= 4.0;
    }
    net
}

#[test]
fn two_bus_matches_closed_form() {
    let net = fixture("two_bus.json");
    let sol = powerflow::solve(&net).unwrap();
    let expected = newton::two_bus_voltage(0.01, 0.02, 0.1, 0.05);
    assert!((sol.voltages[&1] - expected).abs() < 1e-8, "{} vs {expected}", sol.voltages[&1]);
    assert_eq!(sol.voltages[&0], 1.0);
}

#[test]
fn sweep_matches_newton_on_random_feeders() {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let opts = SynthOptions {
            buses: 2 + (seed as usize * 7) % 19,
            ..Default::default()
        };
        let net = random_feeder(seed, opts);
        let sweep = powerflow::solve(&net).unwrap();
        let reference = newton::solve(&net).expect("newton converges");
        for (bus, v) in &reference {
            worst = worst.max((sweep.voltages[bus] - v).abs());
        }
    }
    assert!(worst < 1e-6, "largest deviation {worst}");
}

#[test]
fn shipped_fixture_has_one_overvoltage_bus() {
    let net = fixture("south_hero.json");
    let v = newton::solve(&net).unwrap();
    let over: Vec<BusId> = v.iter().filter(|(_, v)| **v > net.vmax).map(|(b, _)| *b).collect();
    assert_eq!(over, vec![8]);
    assert!(v.values().all(|v| *v >= net.vmin));
    assert_eq!(net.buses.len(), 9);
    assert_eq!(net.capacitors.len(), 2);
    assert_eq!(net.solar.len(), 3);
}

#[test]
fn regression_fixture_matches_generator() {
    let mut generated = random_feeder(
        18,
        SynthOptions {
            max_solar: 0.4,
            ..Default::default()
        },
    );
    generated.name = "regression_20".into();
    assert_eq!(fixture("regression_20.json"), generated);
}

#[test]
fn linf_matches_uniform_level_bisection() {
    for name in ["south_hero.json", "regression_20.json"] {
        let net = fixture(name);
        let result = run_dhc(&net, Norm::Linf).unwrap();
        let level = optimize::uniform_level(&net);
        assert!((result.objective - level).abs() < 1e-6, "{name}: {} vs {level}", result.objective);
    }
}

#[test]
fn linf_curtails_every_solar_bus_equally_on_shipped_fixture() {
    let net = fixture("south_hero.json");
    let result = run_dhc(&net, Norm::Linf).unwrap();
    let values: Vec<f64> = result.curtailment.values().copied().collect();
    assert_eq!(values.len(), 3);
    assert!(values.iter().all(|c| *c > 0.0));
    assert!(values.iter().all(|c| (c - values[0]).abs() < 1e-12), "{values:?}");
}

#[test]
fn l1_matches_lattice_search() {
    let net = fixture("south_hero.json");
    let result = run_dhc(&net, Norm::L1).unwrap();
    let (lattice, lattice_c) = optimize::l1_lattice(&net, 0.001);
    assert!(
        (result.objective - lattice).abs() <= 0.001 + 1e-9,
        "{} vs lattice {lattice} at {lattice_c:?}",
        result.objective
    );
    let nonzero: Vec<BusId> = result.curtailment.iter().filter(|(_, c)| **c > 0.0).map(|(b, _)| *b).collect();
    assert_eq!(nonzero, vec![8], "{:?}", result.curtailment);
}

#[test]
fn l1_objective_never_exceeds_l1_norm_of_l2_solution() {
    for name in ["south_hero.json", "regression_20.json"] {
        let net = fixture(name);
        let l1 = run_dhc(&net, Norm::L1).unwrap();
        let l2 = run_dhc(&net, Norm::L2).unwrap();
        let l2_as_l1: f64 = l2.curtailment.values().sum();
        assert!(l1.objective <= l2_as_l1 + 1e-9, "{name}: {} > {l2_as_l1}", l1.objective);
    }
}

#[test]
fn curtailment_respects_box_and_nonlinear_limit() {
    for name in ["south_hero.json", "regression_20.json", "two_bus.json"] {
        let net = fixture(name);
        for norm in [Norm::L1, Norm::L2, Norm::Linf] {
            let result = match run_dhc(&net, norm) {
                Ok(r) => r,
                Err(gridflow_grid::GridError::NoSolar) => continue,
                Err(e) => panic!("{name} {norm}: {e}"),
            };
            assert!(result.feasible);
            for s in &net.solar {
                let c = result.curtailment[&s.bus];
                assert!((0.0..=s.rating).contains(&c), "{name} {norm}: bus {} c={c}", s.bus);
            }
            let curtailed = apply_curtailment(&net, &result.curtailment);
            let vmax = newton::max_voltage(&curtailed).unwrap();
            assert!(vmax <= net.vmax + 1e-6, "{name} {norm}: overshoot {}", vmax - net.vmax);
        }
    }
}

#[test]
fn l2_infeasibility_matches_active_set_enumeration() {
    let net = undervoltage_feeder();
    let base = powerflow::solve(&net).unwrap();
    assert!(base.voltages.values().any(|v| *v < net.vmin));
    let result = linearized_slacks(&net, &base, Norm::L2).unwrap();
    let reference = optimize::l2_slacks(&net, &base.voltages);
    for (bus, s) in &reference {
        assert!((result.slacks[bus] - s).abs() < 1e-6, "bus {bus}: {} vs {s}", result.slacks[bus]);
    }
}

#[test]
fn l1_infeasibility_is_sparse_and_no_larger_than_l2() {
    let net = undervoltage_feeder();
    let base = powerflow::solve(&net).unwrap();
    let l1 = linearized_slacks(&net, &base, Norm::L1).unwrap();
    let l2 = linearized_slacks(&net, &base, Norm::L2).unwrap();
    let l2_as_l1: f64 = l2.slacks.values().map(|s| s.abs()).sum();
    assert!(l1.objective <= l2_as_l1 + 1e-9);

    let r = optimize::shared_resistance(&net);
    let binding = l1
        .slacks
        .keys()
        .filter(|&&j| {
            let v = base.voltages[&j] + l1.slacks.iter().map(|(&k, &s)| r[&(j, k)] * s).sum::<f64>();
            (v - net.vmin).abs() < 1e-9 || (v - net.vmax).abs() < 1e-9
        })
        .count();
    let support = l1.slacks.values().filter(|s| s.abs() > 1e-12).count();
    assert!(support >= 1 && support <= binding, "support {support}, binding {binding}");
}

#[test]
fn infeasibility_slacks_restore_limits_on_shipped_fixture() {
    for net in [fixture("south_hero.json"), undervoltage_feeder()] {
        let base = powerflow::solve(&net).unwrap();
        for norm in [Norm::L1, Norm::L2] {
            let result = run_infeasibility(&net, &base, norm).unwrap();
            assert!(result.slacks.values().any(|s| *s != 0.0));
            let v = newton::solve(&apply_slacks(&net, &result)).unwrap();
            for (bus, v) in v {
                assert!(v <= net.vmax + 1e-6 && v >= net.vmin - 1e-6, "{norm}: bus {bus} at {v}");
            }
        }
    }
}

#[test]
fn feasible_network_has_zero_slacks() {
    let net = fixture("regression_20.json");
    let mut relaxed = net.clone();
    relaxed.vmax = 1.2;
    let base = powerflow::solve(&relaxed).unwrap();
    for norm in [Norm::L1, Norm::L2] {
        let result = run_infeasibility(&relaxed, &base, norm).unwrap();
        assert!(result.slacks.values().all(|s| *s == 0.0));
        assert_eq!(result.objective, 0.0);
    }
}

#[test]
fn zero_curtailment_leaves_network_unchanged() {
    let net = fixture("south_hero.json");
    let zero: BTreeMap<BusId, f64> = net.solar.iter().map(|s| (s.bus, 0.0)).collect();
    assert_eq!(apply_curtailment(&net, &zero).to_json(), net.to_json());
}
