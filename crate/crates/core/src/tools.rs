//! The shipped grid function pool.

use serde_json::Value;

use gridflow_grid::dhc::apply_curtailment;
use gridflow_grid::infeasibility::apply_slacks;
use gridflow_grid::plot::{csv, fixed6, svg_bars};
use gridflow_grid::{powerflow, run_dhc, run_infeasibility, BusId, FeederNetwork, Norm, PowerFlowSolution};

use crate::descriptor::{is_active_ref, FunctionDescriptor, ParamSpec, ParamType};
use crate::executor::ExecutionContext;
use crate::registry::{Registry, ToolBinding, ToolError};
use crate::workflow::{canonical_value, Args};

/// Overvoltage below this margin is treated as solver noise.
pub const VIOLATION_TOLERANCE: f64 = 1e-6;

/// Number of functions in [`grid_registry`].
pub const POOL_SIZE: usize = 19;

fn describe(name: &str, description: &str, params: Vec<ParamSpec>) -> FunctionDescriptor {
    FunctionDescriptor {
        name: name.into(),
        description: Some(description.into()),
        params,
    }
}

fn network_param() -> ParamSpec {
    ParamSpec::required("network", ParamType::NetworkRef)
}

fn fail(reason: impl Into<String>) -> ToolError {
    ToolError::new(reason)
}

fn grid_fail(e: gridflow_grid::GridError) -> ToolError {
    ToolError::new(e.to_string())
}

fn active<'a>(ctx: &'a ExecutionContext, args: &Args) -> Result<&'a FeederNetwork, ToolError> {
    if let Some(v) = args.get("network") {
        match v {
            Value::String(s) if is_active_ref(s) => {}
            other => return Err(fail(format!("unknown network reference {other}"))),
        }
    }
    ctx.network.as_ref().ok_or_else(|| fail("network not loaded"))
}

fn solution<'a>(ctx: &'a ExecutionContext, args: &Args) -> Result<&'a PowerFlowSolution, ToolError> {
    active(ctx, args)?;
    ctx.powerflow.as_ref().ok_or_else(|| fail("no power flow solution; run run_powerflow first"))
}

fn text_arg(args: &Args, name: &str) -> Result<String, ToolError> {
    match canonical_value(args.get(name).ok_or_else(|| fail(format!("missing parameter {name}")))?) {
        Value::String(s) => Ok(s),
        other => Ok(other.to_string()),
    }
}

/// `n` is a positive integer or `"all"`.
fn count_arg(args: &Args) -> Result<Option<usize>, ToolError> {
    let raw = args.get("n").ok_or_else(|| fail("missing parameter n"))?;
    match canonical_value(raw) {
        Value::String(s) if s == "all" => Ok(None),
        Value::Number(n) => match n.as_u64() {
            Some(k) if k >= 1 => Ok(Some(k as usize)),
            _ => Err(fail(format!("n must be a positive integer or \"all\", got {raw}"))),
        },
        _ => Err(fail(format!("n must be a positive integer or \"all\", got {raw}"))),
    }
}

/// Descending by value, ties by ascending bus id, truncated to `n`.
pub fn rank_buses(values: impl IntoIterator<Item = (BusId, f64)>, n: Option<usize>) -> Vec<(BusId, f64)> {
    let mut rows: Vec<(BusId, f64)> = values.into_iter().collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    rows.truncate(n.unwrap_or(usize::MAX));
    rows
}

fn bus_list(label: &str, rows: &[(BusId, f64)]) -> String {
    if rows.is_empty() {
        return format!("{label}: none");
    }
    let items: Vec<String> = rows.iter().map(|(b, v)| format!("{b}={}", fixed6(*v))).collect();
    format!("{label}: {}", items.join(", "))
}

fn norm_label(norm: Norm) -> &'static str {
    norm.as_str()
}

fn load_network(ctx: &mut ExecutionContext, args: &Args) -> Result<String, ToolError> {
    let path = match args.get("path") {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(other) => other.to_string(),
        None => return Err(fail("missing parameter path")),
    };
    let net = ctx.store.load_network(&path).map_err(grid_fail)?;
    let msg = format!("loaded: {} buses, {} lines", net.buses.len(), net.lines.len());
    ctx.set_network(net);
    Ok(msg)
}

fn count_components(ctx: &mut ExecutionContext, args: &Args) -> Result<String, ToolError> {
    let net = active(ctx, args)?;
    let kind = text_arg(args, "kind")?;
    let n = match kind.as_str() {
        "capacitor" => net.capacitors.len(),
        "solar" => net.solar.len(),
        "load" => net.loads.len(),
        "bus" => net.buses.len(),
        "line" => net.lines.len(),
        other => return Err(fail(format!("unknown component kind {other}"))),
    };
    Ok(format!("{kind} count: {n}"))
}

fn total_load(ctx: &mut ExecutionContext, args: &Args) -> Result<String, ToolError> {
    let net = active(ctx, args)?;
    let p: f64 = net.loads.iter().map(|l| l.p).sum();
    let q: f64 = net.loads.iter().map(|l| l.q).sum();
    Ok(format!("total load: p={} pu, q={} pu", fixed6(p), fixed6(q)))
}

fn run_powerflow(ctx: &mut ExecutionContext, args: &Args) -> Result<String, ToolError> {
    let net = active(ctx, args)?;
    let pf = powerflow::solve(net).map_err(grid_fail)?;
    let (lo_bus, lo) = pf.min_voltage();
    let (hi_bus, hi) = pf.max_voltage();
    let msg = format!(
        "power flow converged in {} iterations: min {} pu at bus {lo_bus}, max {} pu at bus {hi_bus}",
        pf.iterations,
        fixed6(lo),
        fixed6(hi)
    );
    ctx.powerflow = Some(pf);
    Ok(msg)
}

fn get_bus_voltages(ctx: &mut ExecutionContext, args: &Args) -> Result<String, ToolError> {
    let pf = solution(ctx, args)?;
    let rows: Vec<(BusId, f64)> = pf.voltages.iter().map(|(b, v)| (*b, *v)).collect();
    Ok(bus_list("bus voltages (pu)", &rows))
}

fn check_voltage_violations(ctx: &mut ExecutionContext, args: &Args) -> Result<String, ToolError> {
    let net = active(ctx, args)?;
    let pf = solution(ctx, args)?;
    let mut items = Vec::new();
    for (bus, v) in &pf.voltages {
        if *v > net.vmax + VIOLATION_TOLERANCE {
            items.push(format!("bus {bus} over ({} pu)", fixed6(*v)));
        } else if *v < net.vmin - VIOLATION_TOLERANCE {
            items.push(format!("bus {bus} under ({} pu)", fixed6(*v)));
        }
    }
    if items.is_empty() {
        Ok("voltage violations: none".into())
    } else {
        Ok(format!("voltage violations: {}", items.join("; ")))
    }
}

fn dhc(norm: Norm) -> impl Fn(&mut ExecutionContext, &Args) -> Result<String, ToolError> {
    move |ctx, args| {
        let net = active(ctx, args)?;
        let result = run_dhc(net, norm).map_err(grid_fail)?;
        let curtailed = result.curtailment.values().filter(|c| **c > 0.0).count();
        let msg = format!(
            "{} curtailment: objective {} pu, {}, {curtailed} buses curtailed",
            norm_label(norm),
            fixed6(result.objective),
            if result.feasible { "feasible" } else { "infeasible" }
        );
        ctx.curtailment = Some(result);
        ctx.curtailment_applied = false;
        Ok(msg)
    }
}

fn apply_curtailed(norm: Norm) -> impl Fn(&mut ExecutionContext, &Args) -> Result<String, ToolError> {
    move |ctx, args| {
        let net = active(ctx, args)?;
        let result = match &ctx.curtailment {
            Some(r) if r.norm == norm => r,
            _ => return Err(fail(format!("no {} curtailment result", norm_label(norm)))),
        };
        if ctx.curtailment_applied {
            return Err(fail("already applied"));
        }
        let updated = apply_curtailment(net, &result.curtailment);
        let buses = result.curtailment.values().filter(|c| **c > 0.0).count();
        let pf = powerflow::solve(&updated).map_err(grid_fail)?;
        let (hi_bus, hi) = pf.max_voltage();
        let msg = format!(
            "applied {} curtailment at {buses} buses: max voltage {} pu at bus {hi_bus}",
            norm_label(norm),
            fixed6(hi)
        );
        ctx.network = Some(updated);
        ctx.powerflow = Some(pf);
        ctx.curtailment_applied = true;
        Ok(msg)
    }
}

fn top_curtailed_buses(ctx: &mut ExecutionContext, args: &Args) -> Result<String, ToolError> {
    let n = count_arg(args)?;
    let result = ctx.curtailment.as_ref().ok_or_else(|| fail("no curtailment result"))?;
    let rows = rank_buses(
        result.curtailment.iter().filter(|(_, c)| **c > 0.0).map(|(b, c)| (*b, *c)),
        n,
    );
    Ok(bus_list("top curtailed buses (pu)", &rows))
}

fn infeasibility(norm: Norm) -> impl Fn(&mut ExecutionContext, &Args) -> Result<String, ToolError> {
    move |ctx, args| {
        let net = active(ctx, args)?;
        let pf = solution(ctx, args)?;
        let result = run_infeasibility(net, pf, norm).map_err(grid_fail)?;
        let support = result.slacks.values().filter(|s| **s != 0.0).count();
        let msg = format!(
            "{} infeasibility: objective {} pu, slack current at {support} buses",
            norm_label(norm),
            fixed6(result.objective)
        );
        ctx.infeasibility = Some(result);
        ctx.infeasibility_applied = false;
        Ok(msg)
    }
}

fn apply_infeasible(norm: Norm) -> impl Fn(&mut ExecutionContext, &Args) -> Result<String, ToolError> {
    move |ctx, args| {
        let net = active(ctx, args)?;
        let result = match &ctx.infeasibility {
            Some(r) if r.norm == norm => r,
            _ => return Err(fail(format!("no {} infeasibility result", norm_label(norm)))),
        };
        if ctx.infeasibility_applied {
            return Err(fail("already applied"));
        }
        let updated = apply_slacks(net, result);
        let buses = result.slacks.values().filter(|s| **s != 0.0).count();
        let pf = powerflow::solve(&updated).map_err(grid_fail)?;
        let (lo_bus, lo) = pf.min_voltage();
        let (hi_bus, hi) = pf.max_voltage();
        let msg = format!(
            "applied {} slack currents at {buses} buses: min {} pu at bus {lo_bus}, max {} pu at bus {hi_bus}",
            norm_label(norm),
            fixed6(lo),
            fixed6(hi)
        );
        ctx.network = Some(updated);
        ctx.powerflow = Some(pf);
        ctx.infeasibility_applied = true;
        Ok(msg)
    }
}

fn top_infeasible_buses(ctx: &mut ExecutionContext, args: &Args) -> Result<String, ToolError> {
    let n = count_arg(args)?;
    let result = ctx.infeasibility.as_ref().ok_or_else(|| fail("no infeasibility result"))?;
    let rows = rank_buses(
        result
            .slacks
            .keys()
            .map(|b| (*b, result.magnitude(*b)))
            .filter(|(_, m)| *m > 0.0),
        n,
    );
    Ok(bus_list("top infeasible buses (pu)", &rows))
}

fn export_plot_data(ctx: &mut ExecutionContext, args: &Args) -> Result<String, ToolError> {
    let quantity = text_arg(args, "quantity")?;
    let (rows, title, unit): (Vec<(BusId, f64)>, &str, &str) = match quantity.as_str() {
        "voltages" => {
            let net = ctx.network.as_ref().ok_or_else(|| fail("network not loaded"))?;
            let voltages = match &ctx.powerflow {
                Some(pf) => pf.voltages.clone(),
                None => powerflow::solve(net).map_err(grid_fail)?.voltages,
            };
            (voltages.into_iter().collect(), "Bus voltage magnitude", "pu")
        }
        "curtailment" => {
            let c = ctx.curtailment.as_ref().ok_or_else(|| fail("quantity missing: curtailment"))?;
            (
                c.curtailment.iter().map(|(b, v)| (*b, *v)).collect(),
                "Curtailed solar power",
                "pu",
            )
        }
        "infeasible_currents" => {
            let s = ctx
                .infeasibility
                .as_ref()
                .ok_or_else(|| fail("quantity missing: infeasible_currents"))?;
            (s.slacks.iter().map(|(b, v)| (*b, *v)).collect(), "Slack current injection", "pu")
        }
        other => return Err(fail(format!("unknown quantity {other}"))),
    };
    let csv_path = ctx.stage(&quantity, "csv", csv(&rows));
    let svg_path = ctx.stage(&quantity, "svg", svg_bars(title, unit, &rows));
    Ok(format!(
        "exported {quantity} ({} rows): {}, {}",
        rows.len(),
        csv_path.display(),
        svg_path.display()
    ))
}

/// Registers the full pool.
pub fn grid_registry() -> Registry {
    let mut r = Registry::new();
    let mut add = |b: ToolBinding| r.register(b).expect("pool names are unique");

    add(ToolBinding::new(
        describe(
            "load_network",
            "Load a feeder model from the data store and make it the active network. Returns bus and line counts.",
            vec![ParamSpec::required("path", ParamType::String)],
        ),
        load_network,
    ));
    add(ToolBinding::new(
        describe(
            "count_components",
            "Count capacitors, solar units, loads, buses or lines in the active network.",
            vec![
                ParamSpec::one_of("kind", &["capacitor", "solar", "load", "bus", "line"]),
                network_param(),
            ],
        ),
        count_components,
    ));
    add(ToolBinding::new(
        describe(
            "total_load",
            "Sum of active and reactive load on the network, in pu.",
            vec![network_param()],
        ),
        total_load,
    ));
    add(ToolBinding::new(
        describe(
            "run_powerflow",
            "Solve the steady-state power flow of the active network and keep the bus voltages.",
            vec![network_param()],
        ),
        run_powerflow,
    ));
    add(ToolBinding::new(
        describe(
            "get_bus_voltages",
            "Report every bus voltage magnitude from the last power flow solution.",
            vec![network_param()],
        ),
        get_bus_voltages,
    ));
    add(ToolBinding::new(
        describe(
            "check_voltage_violations",
            "List buses whose voltage in the last power flow solution is outside the voltage limits.",
            vec![network_param()],
        ),
        check_voltage_violations,
    ));
    let dhc_text = [
        (Norm::L1, "run_dhc_l1", "sparse (l1): curtail as few solar units as possible"),
        (Norm::L2, "run_dhc_l2", "balanced (l2): spread curtailment in a least-squares sense"),
        (Norm::Linf, "run_dhc_linf", "equitable (linf): curtail every contributing unit by the same amount"),
    ];
    for (norm, name, what) in dhc_text {
        add(ToolBinding::new(
            describe(
                name,
                &format!(
                    "Dynamic hosting capacity: minimal solar curtailment that keeps every bus below the upper voltage limit, {what}."
                ),
                vec![network_param()],
            ),
            dhc(norm),
        ));
    }
    for (norm, name) in [
        (Norm::L1, "update_loads_curtailed_power_l1"),
        (Norm::L2, "update_loads_curtailed_power_l2"),
        (Norm::Linf, "update_loads_curtailed_power_linf"),
    ] {
        add(ToolBinding::new(
            describe(
                name,
                &format!(
                    "Apply the {} curtailment result to the active network and re-solve the power flow.",
                    norm.as_str()
                ),
                vec![network_param()],
            ),
            apply_curtailed(norm),
        ));
    }
    add(ToolBinding::new(
        describe(
            "top_curtailed_buses",
            "List the n buses with the largest curtailment, or all curtailed buses when n is \"all\".",
            vec![ParamSpec::required("n", ParamType::String)],
        ),
        top_curtailed_buses,
    ));
    for (norm, name, what) in [
        (Norm::L1, "run_infeasibility_l1", "sparse (l1): as few buses as possible"),
        (Norm::L2, "run_infeasibility_l2", "2-norm (l2): smallest total squared current"),
    ] {
        add(ToolBinding::new(
            describe(
                name,
                &format!(
                    "Current infeasibility analysis on the last power flow solution: minimal slack current injections that restore the voltage limits, {what}."
                ),
                vec![network_param()],
            ),
            infeasibility(norm),
        ));
    }
    for (norm, name) in [
        (Norm::L1, "update_loads_infeasible_currents_l1"),
        (Norm::L2, "update_loads_infeasible_currents_l2"),
    ] {
        add(ToolBinding::new(
            describe(
                name,
                &format!(
                    "Add the {} slack currents to the active network and re-solve the power flow.",
                    norm.as_str()
                ),
                vec![network_param()],
            ),
            apply_infeasible(norm),
        ));
    }
    add(ToolBinding::new(
        describe(
            "top_infeasible_buses",
            "List the n buses with the largest slack current magnitude, or all of them when n is \"all\".",
            vec![ParamSpec::required("n", ParamType::String)],
        ),
        top_infeasible_buses,
    ));
    add(ToolBinding::new(
        describe(
            "export_plot_data",
            "Write plot data for voltages, curtailment or infeasible_currents as a CSV file and an SVG bar chart.",
            vec![ParamSpec::one_of("quantity", &["voltages", "curtailment", "infeasible_currents"])],
        ),
        export_plot_data,
    ));
    r
}
