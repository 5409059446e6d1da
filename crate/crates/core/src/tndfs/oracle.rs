//! Exhaustive reference solver for very small instances: every allocation
//! times every split of each pair's demand on a fixed grid.

use super::solve::{check_demand, design, tie_tolerance, AllocationKey, DemandVector, RouteDesign};
use super::Network;
use crate::data::OdPair;
use crate::error::{Error, Result};

pub const ORACLE_MAX_STOPS: usize = 4;
pub const ORACLE_MAX_PAIRS: usize = 3;
pub const ORACLE_MAX_FLEET: usize = 2;
pub const ORACLE_BUDGET: f64 = 5e7;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}

fn allocations(n_routes: usize, fleet: usize, nu: usize, exact: bool) -> Vec<Vec<(usize, usize)>> {
    fn rec(
        start: usize,
        n: usize,
        buses: usize,
        nu: usize,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        out.push(cur.clone());
        if cur.len() == nu {
            return;
        }
        for c in start..n {
            for k in 1..=buses {
                cur.push((c, k));
                rec(c + 1, n, buses - k, nu, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(0, n_routes, fleet, nu, &mut Vec::new(), &mut out);
    out.retain(|a| if exact { a.len() == nu } else { true });
    out
}

/// All ways to split `units` grid steps over `parts` bins.
fn compositions(units: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![units]];
    }
    let mut out = Vec::new();
    for first in 0..=units {
        for mut rest in compositions(units - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Best objective over integer-grid flows for one allocation.
fn best_flows(net: &Network, demand: &[(OdPair, f64, usize)], alloc: &[(usize, usize)], step: f64) -> f64 {
    let nr = alloc.len();
    let caps: Vec<f64> = alloc.iter().map(|(c, k)| net.route_capacity(*c, *k)).collect();
    let util: Vec<Vec<f64>> = demand
        .iter()
        .map(|(p, _, _)| {
            alloc
                .iter()
                .map(|(c, k)| net.beta1_unchecked(*p, *c) + net.stage2_utility(*c, *k))
                .collect()
        })
        .collect();
    // choices[p]: riders per route (the remainder walks)
    let choices: Vec<Vec<Vec<usize>>> = demand
        .iter()
        .map(|(_, _, units)| {
            compositions(*units, nr + 1)
                .into_iter()
                .map(|mut v| {
                    v.pop();
                    v
                })
                .collect()
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut load = vec![0.0; nr];
    fn rec(
        p: usize,
        choices: &[Vec<Vec<usize>>],
        util: &[Vec<f64>],
        caps: &[f64],
        step: f64,
        load: &mut [f64],
        value: f64,
        best: &mut f64,
    ) {
        if p == choices.len() {
            *best = best.max(value);
            return;
        }
        'next: for ch in &choices[p] {
            let mut v = value;
            for (r, u) in ch.iter().enumerate() {
                let x = *u as f64 * step;
                if load[r] + x > caps[r] + 1e-9 {
                    for (rr, uu) in ch.iter().enumerate().take(r) {
                        load[rr] -= *uu as f64 * step;
                    }
                    continue 'next;
                }
                load[r] += x;
                v += x * util[p][r];
            }
            rec(p + 1, choices, util, caps, step, load, v, best);
            for (r, u) in ch.iter().enumerate() {
                load[r] -= *u as f64 * step;
            }
        }
    }
    rec(0, &choices, &util, &caps, step, &mut load, 0.0, &mut best);
    best
}

/// Reference optimum by brute force. Demands must be multiples of
/// `grid_step`; with integral route capacities the grid contains an exact
/// optimum.
pub fn oracle_solve(net: &Network, lambda: &DemandVector, grid_step: f64) -> Result<RouteDesign> {
    let demand = check_demand(net, lambda)?;
    let inst = &net.instance;
    if !(grid_step > 0.0) {
        return Err(Error::Invalid("grid step must be positive".into()));
    }
    let positive: Vec<(OdPair, f64, usize)> = demand
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(p, v)| {
            let units = (v / grid_step).round();
            if (units * grid_step - v).abs() > 1e-9 {
                return Err(Error::Invalid(format!("demand {v} of pair {p} is off the grid")));
            }
            Ok((*p, *v, units as usize))
        })
        .collect::<Result<_>>()?;
    if inst.bus_stops.len() > ORACLE_MAX_STOPS
        || positive.len() > ORACLE_MAX_PAIRS
        || inst.fleet_size > ORACLE_MAX_FLEET
    {
        return Err(Error::SizeGuard(format!(
            "oracle handles at most {ORACLE_MAX_STOPS} stops, {ORACLE_MAX_PAIRS} demand pairs and a fleet of {ORACLE_MAX_FLEET}"
        )));
    }
    let allocs = allocations(net.routes.len(), inst.fleet_size, inst.max_routes, inst.exact_routes);
    let work: f64 = allocs
        .iter()
        .map(|a| {
            positive
                .iter()
                .map(|(_, _, u)| binomial(u + a.len(), a.len()))
                .product::<f64>()
        })
        .sum();
    if work > ORACLE_BUDGET {
        return Err(Error::SizeGuard(format!("oracle enumeration of {work:.0} flow splits exceeds budget")));
    }
    let mut best: Option<(f64, AllocationKey)> = None;
    for a in allocs {
        let v = best_flows(net, &positive, &a, grid_step);
        let key = AllocationKey(a);
        let better = match &best {
            None => true,
            Some((b, k)) => v > b + tie_tolerance(*b) || (v >= b - tie_tolerance(*b) && key < *k),
        };
        if better {
            best = Some((v, key));
        }
    }
    let (v, key) = best.ok_or_else(|| Error::Infeasible("no allocation satisfies the route count".into()))?;
    let mut d = design(net, &demand, &key.0, inst.exact_routes);
    d.objective = v;
    Ok(d)
}
