use serde::{Deserialize, Serialize};

/// A closed loop over distinct bus stops, stored from its smallest stop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRoute {
    pub id: usize,
    pub stops: Vec<usize>,
    /// Minutes for one full cycle including dwell.
    pub cycle_time: f64,
}

impl CandidateRoute {
    /// Ride minutes from position `i` to position `j` going forward around
    /// the loop, with dwell at each stop passed through.
    pub fn ride_between(&self, ride_time: &[Vec<f64>], i: usize, j: usize, dwell: f64) -> f64 {
        let m = self.stops.len();
        if m == 1 || i == j {
            return 0.0;
        }
        let mut t = 0.0;
        let mut p = i;
        while p != j {
            let next = (p + 1) % m;
            t += ride_time[self.stops[p]][self.stops[next]];
            if next != j {
                t += dwell;
            }
            p = next;
        }
        t
    }
}

fn cycle_time(stops: &[usize], ride_time: &[Vec<f64>], dwell: f64) -> f64 {
    let m = stops.len();
    let legs: f64 = if m == 1 {
        ride_time[stops[0]][stops[0]]
    } else {
        (0..m).map(|i| ride_time[stops[i]][stops[(i + 1) % m]]).sum()
    };
    legs + dwell * m as f64
}

/// Every loop of 1..=`max_stops` distinct stops, one per rotation class.
/// Ordered by length, then by stop sequence.
pub fn enumerate_routes(ride_time: &[Vec<f64>], max_stops: usize, dwell: f64) -> Vec<CandidateRoute> {
    let n = ride_time.len();
    let mut out = Vec::new();
    for len in 1..=max_stops.min(n) {
        let mut seq = Vec::with_capacity(len);
        let mut used = vec![false; n];
        // the smallest stop leads, so each rotation class appears once
        for first in 0..n {
            seq.push(first);
            used[first] = true;
            extend(first, len, &mut seq, &mut used, &mut |s: &[usize]| {
                out.push(CandidateRoute {
                    id: 0,
                    stops: s.to_vec(),
                    cycle_time: cycle_time(s, ride_time, dwell),
                })
            });
            used[first] = false;
            seq.pop();
        }
    }
    for (i, r) in out.iter_mut().enumerate() {
        r.id = i;
    }
    out
}

fn extend(first: usize, len: usize, seq: &mut Vec<usize>, used: &mut [bool], emit: &mut dyn FnMut(&[usize])) {
    if seq.len() == len {
        emit(seq);
        return;
    }
    for s in first + 1..used.len() {
        if !used[s] {
            used[s] = true;
            seq.push(s);
            extend(first, len, seq, used, emit);
            seq.pop();
            used[s] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ride(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| 1.0 + ((i + 2 * j) % 3) as f64).collect()).collect()
    }

    #[test]
    fn counts_modulo_rotation() {
        let r2 = enumerate_routes(&ride(2), 2, 0.0);
        let stops: Vec<Vec<usize>> = r2.iter().map(|r| r.stops.clone()).collect();
        assert_eq!(stops, vec![vec![0], vec![1], vec![0, 1]]);
        assert_eq!(enumerate_routes(&ride(5), 5, 0.0).len(), 89);
        assert_eq!(enumerate_routes(&ride(5), 2, 0.0).len(), 15);
        assert!(enumerate_routes(&ride(5), 5, 0.0).iter().all(|r| r.cycle_time > 0.0));
    }

    #[test]
    fn loops_are_rotation_unique() {
        let routes = enumerate_routes(&ride(5), 5, 0.0);
        let mut canon: Vec<Vec<usize>> = routes
            .iter()
            .map(|r| {
                (0..r.stops.len())
                    .map(|k| {
                        let mut v = r.stops.clone();
                        v.rotate_left(k);
                        v
                    })
                    .min()
                    .unwrap()
            })
            .collect();
        assert!(routes.iter().zip(&canon).all(|(r, c)| &r.stops == c));
        canon.sort();
        canon.dedup();
        assert_eq!(canon.len(), 89);
    }

    #[test]
    fn cycle_and_ride_times() {
        let rt = vec![
            vec![5.0, 2.0, 3.0],
            vec![4.0, 6.0, 1.0],
            vec![2.0, 7.0, 9.0],
        ];
        let routes = enumerate_routes(&rt, 3, 0.5);
        let single = &routes[1];
        assert_eq!(single.stops, vec![1]);
        assert_eq!(single.cycle_time, 6.5);
        let tri = routes.iter().find(|r| r.stops == vec![0, 1, 2]).unwrap();
        assert_eq!(tri.cycle_time, 2.0 + 1.0 + 2.0 + 1.5);
        // 1 -> 0 wraps through stop 2 with one dwell
        assert_eq!(tri.ride_between(&rt, 1, 0, 0.5), 1.0 + 0.5 + 2.0);
        assert_eq!(tri.ride_between(&rt, 0, 1, 0.5), 2.0);
    }
}
