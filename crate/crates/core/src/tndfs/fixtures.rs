//! Seeded random instances for tests and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{DemandVector, NetworkInstance, Node, WaitingRule};
use crate::data::OdPair;

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceShape {
    pub stops: (usize, usize),
    pub demand_nodes: (usize, usize),
    pub fleet: (usize, usize),
    pub max_route_stops: usize,
    /// Largest demand per pair.
    pub max_demand: u32,
    /// Pairs given positive demand (the rest get none).
    pub demand_pairs: (usize, usize),
    /// Integral demands and route capacities, as the brute-force solver
    /// needs.
    pub integral: bool,
}

impl InstanceShape {
    /// Small enough for the brute-force solver.
    pub fn tiny() -> Self {
        Self {
            stops: (2, 3),
            demand_nodes: (2, 3),
            fleet: (1, 2),
            max_route_stops: 3,
            max_demand: 6,
            demand_pairs: (1, 2),
            integral: true,
        }
    }

    pub fn medium() -> Self {
        Self {
            stops: (4, 5),
            demand_nodes: (4, 6),
            fleet: (1, 4),
            max_route_stops: 4,
            max_demand: 40,
            demand_pairs: (1, 30),
            integral: false,
        }
    }
}

fn grid_node<R: Rng>(rng: &mut R, label: String) -> Node {
    Node::new(label, 100.0 * rng.gen_range(0..=20) as f64, 100.0 * rng.gen_range(0..=20) as f64)
}

/// A stop within 200 m of a random demand node.
fn stop_near<R: Rng>(rng: &mut R, nodes: &[Node], label: String) -> Node {
    let n = nodes.choose(rng).expect("demand nodes");
    Node::new(
        label,
        n.x + 100.0 * rng.gen_range(-2..=2) as f64,
        n.y + 100.0 * rng.gen_range(-2..=2) as f64,
    )
}

/// Ride times are 1–3 minutes. In integral mode every loop's cycle time
/// divides 12 and bus capacity is a multiple of 1/5, so `60 k γ / τ` is a
/// whole number.
pub fn random_instance<R: Rng>(rng: &mut R, shape: &InstanceShape) -> NetworkInstance {
    let n_stops = rng.gen_range(shape.stops.0..=shape.stops.1);
    let n_nodes = rng.gen_range(shape.demand_nodes.0..=shape.demand_nodes.1);
    let ride_time = loop {
        let rt: Vec<Vec<f64>> = (0..n_stops)
            .map(|_| (0..n_stops).map(|_| rng.gen_range(1..=3) as f64).collect())
            .collect();
        if !shape.integral {
            break rt;
        }
        let routes = super::enumerate_routes(&rt, shape.max_route_stops, 0.0);
        if routes.iter().all(|r| 12.0 % r.cycle_time == 0.0) {
            break rt;
        }
    };
    let fleet = rng.gen_range(shape.fleet.0..=shape.fleet.1);
    let capacity = if shape.integral {
        rng.gen_range(1..=5) as f64 / 5.0
    } else {
        rng.gen_range(0.2..3.0)
    };
    let demand_nodes: Vec<Node> = (0..n_nodes).map(|i| grid_node(rng, format!("D{i}"))).collect();
    let bus_stops = (0..n_stops).map(|i| stop_near(rng, &demand_nodes, i.to_string())).collect();
    NetworkInstance {
        demand_nodes,
        bus_stops,
        walk_speed: 100.0,
        ride_time,
        fleet_size: fleet,
        capacity,
        max_routes: rng.gen_range(1..=fleet),
        max_route_stops: shape.max_route_stops,
        dwell: 0.0,
        waiting: WaitingRule::FullHeadway,
        exact_routes: false,
    }
}

pub fn random_demand<R: Rng>(rng: &mut R, inst: &NetworkInstance, shape: &InstanceShape) -> DemandVector {
    let n = inst.demand_nodes.len();
    let mut pairs: Vec<OdPair> = (0..n)
        .flat_map(|o| (0..n).filter(move |d| *d != o).map(move |d| OdPair { origin: o, destination: d }))
        .collect();
    pairs.shuffle(rng);
    let hi = shape.demand_pairs.1.min(pairs.len());
    let m = rng.gen_range(shape.demand_pairs.0.min(hi)..=hi);
    pairs
        .into_iter()
        .take(m)
        .map(|p| {
            let v = if shape.integral {
                rng.gen_range(0..=shape.max_demand) as f64
            } else {
                rng.gen_range(0.0..shape.max_demand as f64)
            };
            (p, v)
        })
        .collect()
}

/// Origins `A1..Am` share one spot with stop 0; destinations `B` and `C`
/// sit 100 walking minutes away at stops 1 and 2, and the direct loops to
/// each carry 6 riders per bus. Both buses go to one loop when only one
/// destination has riders; once both do, and neither loop would overflow,
/// one bus per loop wins. Node ids: origins `0..m`, then `B`, then `C`.
pub fn capacity_cliff(origins: usize) -> NetworkInstance {
    let mut demand_nodes: Vec<Node> = (1..=origins).map(|i| Node::new(format!("A{i}"), 0.0, 0.0)).collect();
    demand_nodes.push(Node::new("B", 10_000.0, 0.0));
    demand_nodes.push(Node::new("C", 0.0, 10_000.0));
    NetworkInstance {
        demand_nodes,
        bus_stops: vec![
            Node::new("0", 0.0, 0.0),
            Node::new("1", 10_000.0, 0.0),
            Node::new("2", 0.0, 10_000.0),
        ],
        walk_speed: 100.0,
        ride_time: vec![vec![1.0, 5.0, 5.0], vec![5.0, 1.0, 20.0], vec![5.0, 20.0, 1.0]],
        fleet_size: 2,
        capacity: 1.0,
        max_routes: 2,
        max_route_stops: 3,
        dwell: 0.0,
        waiting: WaitingRule::FullHeadway,
        exact_routes: false,
    }
}

/// Pairs from every origin of [`capacity_cliff`] to `B` and to `C`.
pub fn capacity_cliff_pairs(origins: usize) -> (Vec<OdPair>, Vec<OdPair>) {
    let to = |d: usize| (0..origins).map(|o| OdPair { origin: o, destination: d }).collect();
    (to(origins), to(origins + 1))
}
