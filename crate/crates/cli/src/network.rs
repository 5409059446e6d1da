use transit_predopt::tndfs::{NetworkInstance, Node, WaitingRule};

/// Six campus locations (the synthetic generator's default labels) and five
/// stops. Ride times are Manhattan distance at 400 m/min plus half a
/// minute, rounded to the half minute.
pub fn default_network() -> NetworkInstance {
    let demand_nodes = vec![
        Node::new("L1", 0.0, 0.0),
        Node::new("L2", 800.0, 0.0),
        Node::new("L3", 1600.0, 200.0),
        Node::new("L4", 200.0, 900.0),
        Node::new("L5", 1000.0, 1000.0),
        Node::new("L6", 1800.0, 1100.0),
    ];
    let bus_stops = vec![
        Node::new("S1", 0.0, 0.0),
        Node::new("S2", 800.0, 100.0),
        Node::new("S3", 1600.0, 200.0),
        Node::new("S4", 300.0, 900.0),
        Node::new("S5", 1400.0, 1000.0),
    ];
    let ride_time = bus_stops
        .iter()
        .map(|a| {
            bus_stops
                .iter()
                .map(|b| {
                    if a.label == b.label {
                        2.0
                    } else {
                        let d = (a.x - b.x).abs() + (a.y - b.y).abs();
                        ((d / 400.0 + 0.5) * 2.0).round() / 2.0
                    }
                })
                .collect()
        })
        .collect();
    NetworkInstance {
        demand_nodes,
        bus_stops,
        walk_speed: 80.0,
        ride_time,
        fleet_size: 3,
        capacity: 20.0,
        max_routes: 2,
        max_route_stops: 5,
        dwell: 0.0,
        waiting: WaitingRule::FullHeadway,
        exact_routes: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_network_is_valid() {
        let net = default_network().prepare().unwrap();
        assert_eq!(net.routes.len(), 89);
        assert_eq!(net.instance.ride_time[0][1], 3.0);
    }
}
