use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transit_predopt::copula::GaussianCopula;
use transit_predopt::data::{parse_lag, Lag, OdPair};
use transit_predopt::pipeline::{
    compare_strategies, format_comparison, write_comparison_csv, write_histogram_csv, ForecastSet, ModelForecasts,
    NodeMap, Planner,
};
use transit_predopt::qr::QuantileForecast;
use transit_predopt::tndfs::fixtures::{capacity_cliff, capacity_cliff_pairs, random_demand, random_instance, InstanceShape};
use transit_predopt::tndfs::{oracle_solve, solve_instance, DemandVector, NetworkInstance, Node, WaitingRule};

const LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
/// Per-origin forecasts: steady riders to B, and riders to C in about
/// half the samples.
const TO_B: [f64; 5] = [0.5, 1.0, 1.25, 1.5, 2.0];
const TO_C: [f64; 5] = [0.0, 0.0, 0.0, 1.0, 2.0];
const CLIFF_ORIGINS: usize = 4;

fn lag() -> Lag {
    parse_lag("2018-01-09T08").unwrap()
}

fn forecasts(values: &BTreeMap<OdPair, Vec<f64>>) -> ForecastSet {
    values
        .iter()
        .map(|(p, v)| {
            (
                *p,
                QuantileForecast {
                    pair: *p,
                    lag: lag(),
                    levels: LEVELS.to_vec(),
                    values: v.clone(),
                },
            )
        })
        .collect()
}

fn point_mass(demand: &DemandVector) -> ForecastSet {
    demand
        .iter()
        .map(|(p, v)| (*p, QuantileForecast::constant(*p, lag(), &LEVELS, *v)))
        .collect()
}

fn planner(inst: &NetworkInstance) -> Planner {
    Planner::new(inst.prepare().unwrap(), NodeMap::identity(inst.demand_nodes.len()))
}

fn two_node() -> NetworkInstance {
    NetworkInstance {
        demand_nodes: vec![Node::new("D0", 0.0, 0.0), Node::new("D1", 1000.0, 0.0)],
        bus_stops: vec![Node::new("0", 0.0, 0.0), Node::new("1", 1000.0, 0.0)],
        walk_speed: 100.0,
        ride_time: vec![vec![3.0, 2.0], vec![2.0, 3.0]],
        fleet_size: 2,
        capacity: 1.0,
        max_routes: 1,
        max_route_stops: 2,
        dwell: 0.0,
        waiting: WaitingRule::FullHeadway,
        exact_routes: false,
    }
}

#[test]
fn single_sample_is_chosen() {
    let inst = two_node();
    let pl = planner(&inst);
    let p = OdPair::new(0, 1).unwrap();
    let f = forecasts(&BTreeMap::from([(p, vec![2.0, 4.0, 6.0, 9.0, 14.0])]));
    let cop = GaussianCopula::independent(vec![p]);
    let r = pl.optimize_lag(&cop, &f, 1, 5).unwrap();
    assert_eq!(r.samples.len(), 1);
    assert_eq!(r.histogram.values().sum::<usize>(), 1);
    assert_eq!(r.chosen_key(), r.samples[0].key);
    assert_eq!(r.mean_time_savings, r.samples[0].objective);
    assert!(pl.optimize_lag(&cop, &f, 0, 5).is_err());
}

#[test]
fn degenerate_forecasts_give_one_solution() {
    let inst = two_node();
    let pl = planner(&inst);
    let p = OdPair::new(0, 1).unwrap();
    let q = OdPair::new(1, 0).unwrap();
    let truth = DemandVector::from([(p, 7.0), (q, 3.0)]);
    let f = point_mass(&truth);
    let cop = GaussianCopula::independent(vec![p, q]);
    let r = pl.optimize_lag(&cop, &f, 40, 9).unwrap();
    assert_eq!(r.histogram.len(), 1);
    assert_eq!(r.chosen_count(), 40);
    assert!(r.samples.iter().all(|s| s.objective == r.samples[0].objective));
    assert_eq!(pl.optimize_point(&f, 0.5).unwrap().key(), r.chosen_key());
    let gt = pl.optimize_ground_truth(&truth).unwrap();
    assert_eq!(gt.key(), r.chosen_key());
    assert!((r.chosen_expected_savings - gt.objective).abs() < 1e-9);
    assert!((r.mean_time_savings - gt.objective).abs() < 1e-9);
}

#[test]
fn median_solution_matches_brute_force() {
    let inst = two_node();
    let pl = planner(&inst);
    let p = OdPair::new(0, 1).unwrap();
    let q = OdPair::new(1, 0).unwrap();
    let f = forecasts(&BTreeMap::from([
        (p, vec![1.0, 3.0, 5.0, 7.0, 12.0]),
        (q, vec![0.0, 1.0, 2.0, 6.0, 9.0]),
    ]));
    let m = pl.optimize_point(&f, 0.5).unwrap();
    let o = oracle_solve(&pl.net, &DemandVector::from([(p, 5.0), (q, 2.0)]), 1.0).unwrap();
    assert_eq!(m.key(), o.key());
    assert!((m.objective - o.objective).abs() < 1e-9);
    // the worst case never sees less demand than the median
    for fc in f.values() {
        assert!(fc.require(0.95).unwrap() >= fc.require(0.5).unwrap());
    }
    assert!(pl.optimize_point(&f, 0.4).is_err());
}

fn cliff_forecasts() -> (ForecastSet, Vec<OdPair>) {
    let (to_b, to_c) = capacity_cliff_pairs(CLIFF_ORIGINS);
    let pairs: Vec<OdPair> = to_b.iter().chain(&to_c).copied().collect();
    let values = to_b
        .iter()
        .map(|p| (*p, TO_B.to_vec()))
        .chain(to_c.iter().map(|p| (*p, TO_C.to_vec())))
        .collect();
    (forecasts(&values), pairs)
}

#[test]
fn capacity_cliff_splits_median_from_sampling() {
    let inst = capacity_cliff(CLIFF_ORIGINS);
    let pl = planner(&inst);
    let (f, pairs) = cliff_forecasts();
    let cop = GaussianCopula::independent(pairs);
    let p = pl.optimize_lag(&cop, &f, 100, 2024).unwrap();
    let m = pl.optimize_point(&f, 0.5).unwrap();
    let r = pl.optimize_point(&f, 0.95).unwrap();
    assert_eq!(m.key().routes(), 1, "median: {}", m.itinerary());
    assert_eq!(r.key().routes(), 2, "worst case: {}", r.itinerary());
    assert_eq!(p.chosen_key().routes(), 2, "proposed: {}", p.chosen.itinerary());
    assert_eq!(p.chosen_key(), r.key());
    assert!(p.chosen_count() >= 60, "{:?}", p.ranked());

    // all origins share one spot, so the single-origin instance with
    // aggregated demand is the same problem
    let small = capacity_cliff(1).prepare().unwrap();
    let agg = |q: f64| {
        let i = LEVELS.iter().position(|l| *l == q).unwrap();
        let n = CLIFF_ORIGINS as f64;
        DemandVector::from([(OdPair::new(0, 1).unwrap(), TO_B[i] * n), (OdPair::new(0, 2).unwrap(), TO_C[i] * n)])
    };
    for (design, q) in [(&m, 0.5), (&r, 0.95)] {
        let o = oracle_solve(&small, &agg(q), 1.0).unwrap();
        assert_eq!(o.key(), design.key());
        assert!((o.objective - design.objective).abs() < 1e-9);
    }
}

#[test]
fn point_mass_at_truth_agrees_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, &InstanceShape::medium());
        let truth = random_demand(&mut rng, &inst, &InstanceShape::medium());
        let pl = planner(&inst);
        let f = point_mass(&truth);
        let cop = GaussianCopula::independent(truth.keys().copied().collect());
        let gt = pl.optimize_ground_truth(&truth).unwrap();
        let p = pl.optimize_lag(&cop, &f, 20, rng.gen()).unwrap();
        assert_eq!(p.chosen_key(), gt.key());
        assert_eq!(pl.optimize_point(&f, 0.5).unwrap().key(), gt.key());
        assert_eq!(pl.optimize_point(&f, 0.95).unwrap().key(), gt.key());
        assert_eq!(solve_instance(&pl.net, &truth).unwrap().key(), gt.key());
    }
}

#[test]
fn seeded_runs_repeat_across_thread_pools() {
    let inst = capacity_cliff(CLIFF_ORIGINS);
    let pl = planner(&inst);
    let (f, pairs) = cliff_forecasts();
    let cop = GaussianCopula::independent(pairs);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| pl.optimize_lag(&cop, &f, 60, 77).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, run(1));
    assert_ne!(a.samples, pl.optimize_lag(&cop, &f, 60, 78).unwrap().samples);
}

#[test]
fn comparison_table_layout() {
    let inst = capacity_cliff(CLIFF_ORIGINS);
    let pl = planner(&inst);
    let (f, pairs) = cliff_forecasts();
    let cop = GaussianCopula::independent(pairs.clone());
    let lags = vec![lag(), parse_lag("2018-01-09T09").unwrap()];
    let relabel = |t: Lag| -> ForecastSet {
        f.iter()
            .map(|(p, fc)| (*p, QuantileForecast { lag: t, ..fc.clone() }))
            .collect()
    };
    let skewed = ModelForecasts {
        name: "skewed".into(),
        by_lag: lags.iter().map(|t| (*t, relabel(*t))).collect(),
    };
    let truth_at: BTreeMap<OdPair, f64> = pairs.iter().map(|p| (*p, 3.0)).collect();
    let exact = ModelForecasts {
        name: "exact".into(),
        by_lag: lags
            .iter()
            .map(|t| {
                let set = truth_at
                    .iter()
                    .map(|(p, v)| (*p, QuantileForecast::constant(*p, *t, &LEVELS, *v)))
                    .collect();
                (*t, set)
            })
            .collect(),
    };
    let truth: BTreeMap<Lag, BTreeMap<OdPair, f64>> = lags.iter().map(|t| (*t, truth_at.clone())).collect();
    let rows = compare_strategies(&pl, &lags, &[skewed, exact], &truth, &cop, 50, 3).unwrap();
    assert_eq!(rows.len(), lags.len() * 2);
    for r in rows.iter().filter(|r| r.model == "exact") {
        assert!(r.proposed.matches_truth && r.median.matches_truth && r.robust.matches_truth);
        assert_eq!(r.proposed_count, 50);
    }
    for r in &rows {
        assert_eq!(r.histogram.iter().map(|(_, n)| n).sum::<usize>(), 50);
        assert_eq!(r.histogram[0].1, r.proposed_count);
    }
    let text = format_comparison(&rows);
    assert_eq!(text.lines().count(), rows.len() + 1);
    assert!(text.lines().nth(1).unwrap().contains(&format!("({})", rows[0].proposed_count)));
    assert!(text.contains('*'));

    let mut csv = Vec::new();
    write_comparison_csv(&rows, &mut csv).unwrap();
    let mut rdr = csv::Reader::from_reader(&csv[..]);
    assert_eq!(rdr.headers().unwrap().len(), 20);
    assert_eq!(rdr.records().count(), rows.len());
    let mut hist = Vec::new();
    write_histogram_csv(&rows, &pl.net, &mut hist).unwrap();
    let n_hist: usize = rows.iter().map(|r| r.histogram.len()).sum();
    assert_eq!(csv::Reader::from_reader(&hist[..]).records().count(), n_hist);

    let missing = BTreeMap::new();
    assert!(compare_strategies(&pl, &lags, &[], &missing, &cop, 5, 3).is_err());
}
