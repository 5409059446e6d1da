use std::path::Path;

use serde::{Deserialize, Serialize};

use super::routes::{enumerate_routes, CandidateRoute};
use crate::data::OdPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub label: String,
    /// meters
    pub x: f64,
    pub y: f64,
}

impl Node {
    pub fn new(label: impl Into<String>, x: f64, y: f64) -> Self {
        Self {
            label: label.into(),
            x,
            y,
        }
    }
}

/// Minutes to walk the Manhattan distance between `a` and `b`.
pub fn walk_time(a: &Node, b: &Node, speed: f64) -> f64 {
    ((a.x - b.x).abs() + (a.y - b.y).abs()) / speed
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaitingRule {
    /// Average wait of `τ / k`.
    #[default]
    FullHeadway,
    /// Average wait of `τ / 2k`.
    HalfHeadway,
}

fn default_dwell() -> f64 {
    0.0
}

/// One network design problem: where people are, where buses can stop, and
/// how much fleet is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInstance {
    pub demand_nodes: Vec<Node>,
    pub bus_stops: Vec<Node>,
    /// meters per minute
    pub walk_speed: f64,
    /// Minutes between consecutive stops; the diagonal is the turnaround of
    /// a single-stop loop.
    pub ride_time: Vec<Vec<f64>>,
    pub fleet_size: usize,
    /// Passengers per bus per cycle.
    pub capacity: f64,
    pub max_routes: usize,
    pub max_route_stops: usize,
    #[serde(default = "default_dwell")]
    pub dwell: f64,
    #[serde(default)]
    pub waiting: WaitingRule,
    /// Require exactly `max_routes` routes instead of at most.
    #[serde(default)]
    pub exact_routes: bool,
}

impl NetworkInstance {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.demand_nodes.len() < 2 {
            return bad("need at least two demand nodes".into());
        }
        if self.bus_stops.is_empty() {
            return bad("need at least one bus stop".into());
        }
        if !(self.walk_speed > 0.0 && self.walk_speed.is_finite()) {
            return bad(format!("walk_speed must be positive, got {}", self.walk_speed));
        }
        if self.fleet_size == 0 {
            return bad("fleet_size must be at least 1".into());
        }
        if !(self.capacity > 0.0) {
            return bad(format!("capacity must be positive, got {}", self.capacity));
        }
        if self.max_routes == 0 || self.max_routes > self.fleet_size {
            return bad(format!(
                "max_routes must lie in 1..={}, got {}",
                self.fleet_size, self.max_routes
            ));
        }
        if self.max_route_stops == 0 {
            return bad("max_route_stops must be at least 1".into());
        }
        if !(self.dwell >= 0.0 && self.dwell.is_finite()) {
            return bad(format!("dwell must be non-negative, got {}", self.dwell));
        }
        let n = self.bus_stops.len();
        if self.ride_time.len() != n || self.ride_time.iter().any(|r| r.len() != n) {
            return bad(format!("ride_time must be {n}x{n}"));
        }
        for (i, row) in self.ride_time.iter().enumerate() {
            for (j, t) in row.iter().enumerate() {
                if !(*t > 0.0 && t.is_finite()) {
                    return bad(format!("ride_time[{i}][{j}] must be positive, got {t}"));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let inst: Self = serde_json::from_str(&text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn demand_id(&self, label: &str) -> Option<usize> {
        self.demand_nodes.iter().position(|n| n.label == label)
    }

    /// Validates and precomputes the candidate routes and per-passenger
    /// utilities.
    pub fn prepare(&self) -> Result<Network> {
        self.validate()?;
        let routes = enumerate_routes(&self.ride_time, self.max_route_stops, self.dwell);
        let n = self.demand_nodes.len();
        let mut walk = vec![0.0; n * n];
        let mut beta1 = vec![Vec::new(); n * n];
        for o in 0..n {
            for d in 0..n {
                if o == d {
                    continue;
                }
                walk[o * n + d] = walk_time(&self.demand_nodes[o], &self.demand_nodes[d], self.walk_speed);
                beta1[o * n + d] = routes.iter().map(|r| self.ride_utility(o, d, r)).collect();
            }
        }
        Ok(Network {
            instance: self.clone(),
            routes,
            walk,
            beta1,
        })
    }

    /// `W_od − min (B + W′)` over boarding and alighting positions on the
    /// loop (the same stop only for single-stop loops).
    fn ride_utility(&self, o: usize, d: usize, route: &CandidateRoute) -> f64 {
        let (on, dn) = (&self.demand_nodes[o], &self.demand_nodes[d]);
        let w = |a: &Node, b: &Node| walk_time(a, b, self.walk_speed);
        let stops = &route.stops;
        let m = stops.len();
        let mut best = f64::INFINITY;
        for i in 0..m {
            for j in 0..m {
                if i == j && m > 1 {
                    continue;
                }
                let ride = route.ride_between(&self.ride_time, i, j, self.dwell);
                let access = w(on, &self.bus_stops[stops[i]]) + w(&self.bus_stops[stops[j]], dn);
                best = best.min(ride + access);
            }
        }
        w(on, dn) - best
    }
}

/// A validated instance with its candidate routes.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub instance: NetworkInstance,
    pub routes: Vec<CandidateRoute>,
    walk: Vec<f64>,
    /// `beta1[o * n + d][route]`
    beta1: Vec<Vec<f64>>,
}

impl Network {
    pub fn n_demand_nodes(&self) -> usize {
        self.instance.demand_nodes.len()
    }

    pub fn all_pairs(&self) -> Vec<OdPair> {
        let n = self.n_demand_nodes();
        (0..n)
            .flat_map(|o| (0..n).filter(move |d| *d != o).map(move |d| OdPair { origin: o, destination: d }))
            .collect()
    }

    fn check_pair(&self, pair: OdPair) -> Result<usize> {
        let n = self.n_demand_nodes();
        if pair.origin >= n || pair.destination >= n || pair.origin == pair.destination {
            return Err(Error::Invalid(format!("pair {pair} is not a demand pair of this network")));
        }
        Ok(pair.origin * n + pair.destination)
    }

    pub fn walk_minutes(&self, pair: OdPair) -> Result<f64> {
        Ok(self.walk[self.check_pair(pair)?])
    }

    /// Minutes saved per passenger of `pair` riding `route` (before waiting).
    pub fn stage1_utility(&self, pair: OdPair, route: usize) -> Result<f64> {
        let i = self.check_pair(pair)?;
        self.beta1[i].get(route).copied().ok_or_else(|| Error::Missing {
            what: "candidate route",
            detail: format!("route id {route}"),
        })
    }

    pub(crate) fn beta1_unchecked(&self, pair: OdPair, route: usize) -> f64 {
        self.beta1[pair.origin * self.n_demand_nodes() + pair.destination][route]
    }

    /// Negative average wait on `route` with `k` buses.
    pub fn stage2_utility(&self, route: usize, k: usize) -> f64 {
        let tau = self.routes[route].cycle_time;
        match self.instance.waiting {
            WaitingRule::FullHeadway => -tau / k as f64,
            WaitingRule::HalfHeadway => -tau / (2 * k) as f64,
        }
    }

    /// Passengers per hour: `60 k / τ` cycles times bus capacity.
    pub fn route_capacity(&self, route: usize, k: usize) -> f64 {
        route_capacity(self.routes[route].cycle_time, k, self.instance.capacity)
    }

    /// Stop labels in visiting order, closed back to the first stop.
    pub fn itinerary(&self, route: usize) -> String {
        let stops = &self.routes[route].stops;
        let mut labels: Vec<&str> = stops.iter().map(|s| self.instance.bus_stops[*s].label.as_str()).collect();
        labels.push(labels[0]);
        labels.join("-")
    }
}

pub fn route_capacity(cycle_time: f64, k: usize, capacity: f64) -> f64 {
    60.0 * k as f64 / cycle_time * capacity
}
