use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::flow::{assign, Assignment};
use super::Network;
use crate::data::OdPair;
use crate::error::{Error, Result};

/// Passengers per OD pair (indices into the network's demand nodes).
pub type DemandVector = BTreeMap<OdPair, f64>;

/// Running routes and their bus counts, sorted by route id. This is the
/// identity of a solution when comparing or counting designs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct AllocationKey(pub Vec<(usize, usize)>);

impl AllocationKey {
    pub fn routes(&self) -> usize {
        self.0.len()
    }

    pub fn buses(&self) -> usize {
        self.0.iter().map(|(_, k)| k).sum()
    }

    /// e.g. `0-2-0, 0-4-0`; a bus count above one is appended as `x2`.
    pub fn itinerary(&self, net: &Network) -> String {
        if self.0.is_empty() {
            return "walk".into();
        }
        self.0
            .iter()
            .map(|(c, k)| {
                let it = net.itinerary(*c);
                if *k > 1 {
                    format!("{it} x{k}")
                } else {
                    it
                }
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for AllocationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(c, k)| format!("{c}:{k}")).collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteAllocation {
    pub route: usize,
    pub buses: usize,
    pub itinerary: String,
    pub cycle_time: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Flow {
    pub pair: OdPair,
    /// `None` is walking.
    pub route: Option<usize>,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Flow {
    pub route: usize,
    pub buses: usize,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDesign {
    pub allocation: Vec<RouteAllocation>,
    pub stage1: Vec<Stage1Flow>,
    pub stage2: Vec<Stage2Flow>,
    /// Passenger-minutes saved against everyone walking.
    pub objective: f64,
}

impl RouteDesign {
    pub fn key(&self) -> AllocationKey {
        AllocationKey(self.allocation.iter().map(|a| (a.route, a.buses)).collect())
    }

    /// Routes with the indicator set, as `(route, buses)`.
    pub fn indicators(&self) -> Vec<(usize, usize)> {
        self.key().0
    }

    pub fn itinerary(&self) -> String {
        let parts: Vec<String> = self
            .allocation
            .iter()
            .map(|a| {
                if a.buses > 1 {
                    format!("{} x{}", a.itinerary, a.buses)
                } else {
                    a.itinerary.clone()
                }
            })
            .collect();
        if parts.is_empty() {
            "walk".into()
        } else {
            parts.join(", ")
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub(crate) fn tie_tolerance(v: f64) -> f64 {
    1e-9 * v.abs().max(1.0)
}

pub(crate) fn check_demand(net: &Network, demand: &DemandVector) -> Result<Vec<(OdPair, f64)>> {
    let mut out = Vec::with_capacity(demand.len());
    for (pair, v) in demand {
        net.walk_minutes(*pair)?;
        if !(v.is_finite() && *v >= 0.0) {
            return Err(Error::Invalid(format!("demand for pair {pair} must be non-negative, got {v}")));
        }
        out.push((*pair, *v));
    }
    Ok(out)
}

/// Builds the design record for `alloc`; in at-most mode routes without
/// riders are left out.
pub(crate) fn design(
    net: &Network,
    demand: &[(OdPair, f64)],
    alloc: &[(usize, usize)],
    keep_empty: bool,
) -> RouteDesign {
    let a = assign(net, demand, alloc);
    let kept: Vec<usize> = (0..alloc.len())
        .filter(|r| keep_empty || a.route_flow[*r] > 1e-12)
        .collect();
    let (alloc, a): (Vec<(usize, usize)>, Assignment) = if kept.len() == alloc.len() {
        (alloc.to_vec(), a)
    } else {
        let sub: Vec<(usize, usize)> = kept.iter().map(|r| alloc[*r]).collect();
        let a2 = assign(net, demand, &sub);
        (sub, a2)
    };
    let mut stage1 = Vec::new();
    for (p, (pair, lambda)) in demand.iter().enumerate() {
        let mut rode = 0.0;
        for (r, (c, _)) in alloc.iter().enumerate() {
            let x = a.flows[p][r];
            if x > 0.0 {
                stage1.push(Stage1Flow {
                    pair: *pair,
                    route: Some(*c),
                    flow: x,
                });
                rode += x;
            }
        }
        let walk = (lambda - rode).max(0.0);
        if walk > 0.0 {
            stage1.push(Stage1Flow {
                pair: *pair,
                route: None,
                flow: walk,
            });
        }
    }
    RouteDesign {
        allocation: alloc
            .iter()
            .map(|(c, k)| RouteAllocation {
                route: *c,
                buses: *k,
                itinerary: net.itinerary(*c),
                cycle_time: net.routes[*c].cycle_time,
                capacity: net.route_capacity(*c, *k),
            })
            .collect(),
        stage2: alloc
            .iter()
            .zip(&a.route_flow)
            .map(|((c, k), f)| Stage2Flow {
                route: *c,
                buses: *k,
                flow: *f,
            })
            .collect(),
        stage1,
        objective: a.objective,
    }
}

struct Search<'a> {
    net: &'a Network,
    demand: &'a [(OdPair, f64)],
    /// Candidates in branching order with their single-route values by bus
    /// count (index k - 1).
    cands: Vec<(usize, Vec<f64>)>,
    /// `suffix[i][b]`: best single-route value among `cands[i..]` with at
    /// most `b` buses.
    suffix: Vec<Vec<f64>>,
    exact: usize,
    nu: usize,
    best: Option<(f64, AllocationKey)>,
}

impl Search<'_> {
    fn offer(&mut self, value: f64, alloc: &[(usize, usize)]) {
        let mut key = alloc.to_vec();
        key.sort();
        let key = AllocationKey(key);
        let better = match &self.best {
            None => true,
            Some((b, k)) => value > b + tie_tolerance(*b) || (value >= b - tie_tolerance(*b) && key < *k),
        };
        if better {
            self.best = Some((value, key));
        }
    }

    fn dfs(&mut self, i: usize, buses: usize, bound_sum: f64, alloc: &mut Vec<(usize, usize)>) {
        let slots = self.nu - alloc.len();
        if slots == 0 || i == self.cands.len() || buses == 0 {
            return;
        }
        if self.exact > 0 && (self.cands.len() - i < slots || buses < slots) {
            return;
        }
        let bound = bound_sum + slots as f64 * self.suffix[i][buses];
        if let Some((b, _)) = &self.best {
            if bound < b - tie_tolerance(*b) {
                return;
            }
        }
        let (c, values) = self.cands[i].clone();
        let reserve = if self.exact > 0 { slots - 1 } else { 0 };
        for k in 1..=buses - reserve {
            alloc.push((c, k));
            let mut cap = bound_sum + values[k - 1];
            let hopeless = matches!(&self.best, Some((b, _)) if cap < b - tie_tolerance(*b));
            if !hopeless {
                let v = assign(self.net, self.demand, alloc).objective;
                cap = cap.min(v);
                if self.exact == 0 || alloc.len() == self.exact {
                    self.offer(v, alloc);
                }
            }
            self.dfs(i + 1, buses - k, cap, alloc);
            alloc.pop();
        }
        self.dfs(i + 1, buses, bound_sum, alloc);
    }
}

/// Exact optimum of the design problem for demand `lambda`.
///
/// Enumerates allocations by branch and bound. Adding routes to a design
/// gains at most their stand-alone values, which bounds every branch. Each allocation is priced by an exact min-cost flow. Ties go to
/// the smallest [`AllocationKey`].
pub fn solve_instance(net: &Network, lambda: &DemandVector) -> Result<RouteDesign> {
    let demand = check_demand(net, lambda)?;
    let inst = &net.instance;
    let k_max = inst.fleet_size;
    if net.routes.is_empty() {
        return Err(Error::Infeasible("no candidate routes".into()));
    }
    let exact = if inst.exact_routes { inst.max_routes } else { 0 };
    if exact > net.routes.len() || exact > k_max {
        return Err(Error::Infeasible(format!(
            "{exact} routes required but only {} candidates and {k_max} buses",
            net.routes.len()
        )));
    }
    let mut cands: Vec<(usize, Vec<f64>)> = net
        .routes
        .iter()
        .map(|r| {
            let vals = (1..=k_max).map(|k| assign(net, &demand, &[(r.id, k)]).objective).collect();
            (r.id, vals)
        })
        .collect();
    if exact == 0 {
        // a route worth nothing alone adds nothing to any design
        cands.retain(|(_, v)| v.iter().any(|x| *x > 1e-12));
    }
    let top = |v: &Vec<f64>| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    cands.sort_by(|a, b| top(&b.1).total_cmp(&top(&a.1)).then(a.0.cmp(&b.0)));
    let n = cands.len();
    let mut suffix = vec![vec![0.0f64; k_max + 1]; n + 1];
    for i in (0..n).rev() {
        for b in 0..=k_max {
            let own = cands[i].1[..b].iter().cloned().fold(0.0, f64::max);
            suffix[i][b] = suffix[i + 1][b].max(own);
        }
    }
    let mut search = Search {
        net,
        demand: &demand,
        cands,
        suffix,
        exact,
        nu: inst.max_routes,
        best: None,
    };
    if exact == 0 {
        search.best = Some((0.0, AllocationKey::default()));
    }
    search.dfs(0, k_max, 0.0, &mut Vec::new());
    let (_, key) = search
        .best
        .ok_or_else(|| Error::Infeasible("no allocation satisfies the route count".into()))?;
    Ok(design(net, &demand, &key.0, exact > 0))
}

/// Design and objective of a fixed allocation under demand `lambda`. All
/// routes of `key` are kept, riders or not.
pub fn evaluate_allocation(net: &Network, lambda: &DemandVector, key: &AllocationKey) -> Result<RouteDesign> {
    let demand = check_demand(net, lambda)?;
    if let Some((c, _)) = key.0.iter().find(|(c, _)| *c >= net.routes.len()) {
        return Err(Error::Invalid(format!("route {c} is not a candidate")));
    }
    if key.0.iter().any(|(_, k)| *k == 0) || key.buses() > net.instance.fleet_size {
        return Err(Error::Invalid(format!("allocation {key} does not fit the fleet")));
    }
    Ok(design(net, &demand, &key.0, true))
}
