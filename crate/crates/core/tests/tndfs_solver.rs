use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use transit_predopt::tndfs::fixtures::{random_demand, random_instance, InstanceShape};
use transit_predopt::tndfs::{oracle_solve, solve_instance, DemandVector, Network, RouteDesign};

fn check_invariants(net: &Network, lambda: &DemandVector, d: &RouteDesign) {
    let inst = &net.instance;
    let tol = 1e-9;
    // at most one bus count per route, fleet and route limits
    let mut routes: Vec<usize> = d.allocation.iter().map(|a| a.route).collect();
    routes.dedup();
    assert_eq!(routes.len(), d.allocation.len());
    assert!(d.allocation.iter().map(|a| a.buses).sum::<usize>() <= inst.fleet_size);
    assert!(d.allocation.len() <= inst.max_routes);
    // demand conservation
    for (pair, l) in lambda {
        let sent: f64 = d.stage1.iter().filter(|f| f.pair == *pair).map(|f| f.flow).sum();
        assert!((sent - l).abs() <= tol * l.max(1.0), "pair {pair}: {sent} vs {l}");
    }
    assert!(d.stage1.iter().all(|f| f.flow >= 0.0));
    // route inflow equals stage-two flow, within capacity
    for s in &d.stage2 {
        let inflow: f64 = d.stage1.iter().filter(|f| f.route == Some(s.route)).map(|f| f.flow).sum();
        assert!((inflow - s.flow).abs() <= tol);
        assert!(s.flow <= net.route_capacity(s.route, s.buses) + tol);
    }
    // reported objective matches the flows
    let recomputed: f64 = d
        .stage1
        .iter()
        .filter_map(|f| {
            let r = f.route?;
            let k = d.allocation.iter().find(|a| a.route == r).unwrap().buses;
            Some(f.flow * (net.stage1_utility(f.pair, r).unwrap() + net.stage2_utility(r, k)))
        })
        .sum();
    assert!((recomputed - d.objective).abs() <= 1e-9 * d.objective.abs().max(1.0));
}

#[test]
fn matches_brute_force_on_tiny_instances() {
    let shape = InstanceShape::tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut checked = 0;
    let mut positive = 0;
    while checked < 200 {
        let inst = random_instance(&mut rng, &shape);
        let net = inst.prepare().unwrap();
        let lambda = random_demand(&mut rng, &inst, &shape);
        let d = solve_instance(&net, &lambda).unwrap();
        let o = oracle_solve(&net, &lambda, 1.0).unwrap();
        assert!(
            (d.objective - o.objective).abs() <= 1e-9,
            "instance {checked}: solver {} oracle {}",
            d.objective,
            o.objective
        );
        check_invariants(&net, &lambda, &d);
        if d.objective > 0.0 {
            positive += 1;
        }
        checked += 1;
    }
    // the fixtures exercise non-trivial designs
    assert!(positive >= 50, "only {positive} instances with a useful bus");
}

#[test]
fn exact_route_count_matches_brute_force() {
    let shape = InstanceShape::tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let mut inst = random_instance(&mut rng, &shape);
        inst.exact_routes = true;
        let net = inst.prepare().unwrap();
        let lambda = random_demand(&mut rng, &inst, &shape);
        let d = solve_instance(&net, &lambda).unwrap();
        let o = oracle_solve(&net, &lambda, 1.0).unwrap();
        assert!((d.objective - o.objective).abs() <= 1e-9);
        assert_eq!(d.allocation.len(), inst.max_routes);
    }
}

#[test]
fn invariants_hold_on_medium_instances() {
    let shape = InstanceShape::medium();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..300 {
        let inst = random_instance(&mut rng, &shape);
        let net = inst.prepare().unwrap();
        let lambda = random_demand(&mut rng, &inst, &shape);
        let d = solve_instance(&net, &lambda).unwrap();
        check_invariants(&net, &lambda, &d);
    }
}

#[test]
fn more_fleet_or_capacity_never_hurts() {
    let shape = InstanceShape::medium();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..60 {
        let inst = random_instance(&mut rng, &shape);
        let lambda = random_demand(&mut rng, &inst, &shape);
        let base = solve_instance(&inst.prepare().unwrap(), &lambda).unwrap().objective;
        let mut bigger = inst.clone();
        bigger.fleet_size += 1;
        let v = solve_instance(&bigger.prepare().unwrap(), &lambda).unwrap().objective;
        assert!(v >= base - 1e-9);
        let mut roomier = inst.clone();
        roomier.capacity *= 2.0;
        let v = solve_instance(&roomier.prepare().unwrap(), &lambda).unwrap().objective;
        assert!(v >= base - 1e-9);
    }
}

#[test]
fn uncapacitated_objective_scales_with_demand() {
    let shape = InstanceShape::medium();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..40 {
        let mut inst = random_instance(&mut rng, &shape);
        inst.capacity = 1e12;
        let net = inst.prepare().unwrap();
        let lambda = random_demand(&mut rng, &inst, &shape);
        let base = solve_instance(&net, &lambda).unwrap().objective;
        for alpha in [0.5, 3.0] {
            let scaled: DemandVector = lambda.iter().map(|(p, v)| (*p, v * alpha)).collect();
            let v = solve_instance(&net, &scaled).unwrap().objective;
            assert!((v - alpha * base).abs() <= 1e-9 * base.abs().max(1.0) * alpha.max(1.0));
        }
    }
}

#[test]
fn oracle_refuses_large_instances() {
    let shape = InstanceShape::medium();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut inst = random_instance(&mut rng, &shape);
    inst.bus_stops.truncate(5);
    while inst.bus_stops.len() < 5 {
        inst.bus_stops.push(inst.bus_stops[0].clone());
        inst.bus_stops.last_mut().unwrap().label = format!("x{}", inst.bus_stops.len());
    }
    inst.ride_time = vec![vec![1.0; 5]; 5];
    let lambda = random_demand(&mut rng, &inst, &shape);
    assert!(oracle_solve(&inst.prepare().unwrap(), &lambda, 1.0).is_err());
}
