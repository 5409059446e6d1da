use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transit_predopt::data::{parse_lag, FeatureConfig, Lag, LocationIndex, OdPair, Panel, WorkingSeries};
use transit_predopt::qr::{
    tilted_loss, FittedQuantileModel, LinearFit, QuantileSet, Scope, ScopedFit, WorkingScale,
};

fn loss(levels: &[f64], y: f64, values: &[f64]) -> f64 {
    levels.iter().zip(values).map(|(q, v)| tilted_loss(*q, y, *v)).sum()
}

#[test]
fn sorting_never_increases_mtl() {
    let levels = QuantileSet::default();
    let q = levels.levels();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut sorted_total, mut raw_total) = (0.0, 0.0);
    for _ in 0..100 {
        let n = rng.gen_range(5..50);
        for _ in 0..n {
            let y: f64 = rng.gen_range(-20.0..20.0);
            let raw: Vec<f64> = (0..q.len()).map(|_| rng.gen_range(-25.0..25.0)).collect();
            let mut sorted = raw.clone();
            sorted.sort_by(f64::total_cmp);
            let (s, r) = (loss(q, y, &sorted), loss(q, y, &raw));
            assert!(s <= r + 1e-9);
            sorted_total += s;
            raw_total += r;
        }
    }
    assert!(sorted_total <= raw_total + 1e-9);
}

/// Panel with one pair whose counts follow a fixed pattern over 3 days of
/// hours 7..22.
fn tiny_panel() -> (Panel, Vec<Lag>) {
    let loc = LocationIndex::new(vec!["a".into(), "b".into()]).unwrap();
    let mut t = Vec::new();
    for day in 1..=3 {
        for h in 7..=22 {
            t.push(parse_lag(&format!("2018-01-{day:02}T{h:02}")).unwrap());
        }
    }
    let count: Vec<f64> = (0..t.len()).map(|i| ((i * 5) % 7) as f64).collect();
    let prev: Vec<f64> = (0..t.len()).map(|i| if i == 0 { 0.0 } else { count[i - 1] }).collect();
    let value = count.iter().zip(&prev).map(|(c, p)| c - p).collect();
    let s = WorkingSeries {
        pair: OdPair::new(0, 1).unwrap(),
        t: t.clone(),
        value,
        prev,
        count,
    };
    (
        Panel {
            locations: loc,
            series: vec![s],
        },
        t,
    )
}

fn linear_model(levels: &[f64], coef: impl Fn(f64) -> Vec<f64>, sort: bool) -> FittedQuantileModel<LinearFit> {
    let pair = OdPair::new(0, 1).unwrap();
    FittedQuantileModel {
        levels: levels.to_vec(),
        features: FeatureConfig::default(),
        scale: WorkingScale::Differenced,
        sort_quantiles: sort,
        pairs: vec![pair],
        fits: levels
            .iter()
            .map(|q| ScopedFit {
                scope: Scope::Pair(pair),
                level: *q,
                regressor: LinearFit {
                    coefficients: coef(*q),
                    converged: true,
                    iterations: 0,
                },
            })
            .collect(),
    }
}

#[test]
fn zero_coefficients_forecast_previous_count() {
    let (panel, t) = tiny_panel();
    let levels = [0.05, 0.5, 0.95];
    let width = FeatureConfig::default().len(1);
    let m = linear_model(&levels, |_| vec![0.0; width], true);
    let pair = OdPair::new(0, 1).unwrap();
    for (i, lag) in t.iter().enumerate().skip(24) {
        let f = m.predict(&panel, pair, lag).unwrap();
        let prev = panel.series[0].prev[i];
        assert!(f.values.iter().all(|v| *v == prev.max(0.0)));
    }
}

#[test]
fn forecasts_are_clipped_and_sorted() {
    let (panel, t) = tiny_panel();
    let levels = [0.05, 0.5, 0.95];
    let width = FeatureConfig::default().len(1);
    // hour-of-day flags are the first 16 entries; put a per-level shift on all of them
    let shift = |q: f64| if q < 0.1 { -50.0 } else if q < 0.6 { 3.0 } else { -1.0 };
    let coef = |q: f64| {
        let mut c = vec![0.0; width];
        c[..16].iter_mut().for_each(|v| *v = shift(q));
        c
    };
    let pair = OdPair::new(0, 1).unwrap();
    let sorted = linear_model(&levels, coef, true);
    let raw = linear_model(&levels, coef, false);
    for (i, lag) in t.iter().enumerate().skip(24) {
        let prev = panel.series[0].prev[i];
        let r = raw.predict(&panel, pair, lag).unwrap();
        assert_eq!(r.values, vec![0.0, prev + 3.0, (prev - 1.0).max(0.0)]);
        let s = sorted.predict(&panel, pair, lag).unwrap();
        assert!(s.is_sorted() && s.values.iter().all(|v| *v >= 0.0));
        let mut expect = r.values.clone();
        expect.sort_by(f64::total_cmp);
        assert_eq!(s.values, expect);
    }
}

#[test]
fn layout_mismatch_is_reported() {
    let (panel, t) = tiny_panel();
    let m = linear_model(&[0.5], |_| vec![0.0; 47], true);
    let mut other = panel.clone();
    other.series[0].pair = OdPair::new(1, 0).unwrap();
    assert!(m.predict(&other, OdPair::new(1, 0).unwrap(), &t[30]).is_err());
}
