//! Passenger assignment for a fixed set of running routes, as a min-cost
//! flow: source → OD pair (demand) → route (net utility) → sink (route
//! capacity). Demand left unsent walks.

use std::collections::VecDeque;

use super::Network;
use crate::data::OdPair;

const EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
    flow: f64,
    rev: usize,
}

struct Graph {
    adj: Vec<Vec<Edge>>,
}

impl Graph {
    fn new(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n] }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> (usize, usize) {
        let (rf, rt) = (self.adj[to].len(), self.adj[from].len());
        self.adj[from].push(Edge {
            to,
            cap,
            cost,
            flow: 0.0,
            rev: rf,
        });
        self.adj[to].push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
            flow: 0.0,
            rev: rt,
        });
        (from, rt)
    }

    fn residual(e: &Edge) -> f64 {
        e.cap - e.flow
    }

    /// Successive shortest paths while a negative-cost path exists.
    fn min_cost_flow(&mut self, s: usize, t: usize) {
        let n = self.adj.len();
        loop {
            let mut dist = vec![f64::INFINITY; n];
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            let mut in_queue = vec![false; n];
            let mut queue = VecDeque::from([s]);
            dist[s] = 0.0;
            while let Some(u) = queue.pop_front() {
                in_queue[u] = false;
                for (i, e) in self.adj[u].iter().enumerate() {
                    if Self::residual(e) > EPS && dist[u] + e.cost < dist[e.to] - 1e-12 {
                        dist[e.to] = dist[u] + e.cost;
                        prev[e.to] = Some((u, i));
                        if !in_queue[e.to] {
                            in_queue[e.to] = true;
                            queue.push_back(e.to);
                        }
                    }
                }
            }
            if !(dist[t] < -1e-12) {
                return;
            }
            let mut push = f64::INFINITY;
            let mut v = t;
            while let Some((u, i)) = prev[v] {
                push = push.min(Self::residual(&self.adj[u][i]));
                v = u;
            }
            let mut v = t;
            while let Some((u, i)) = prev[v] {
                let rev = self.adj[u][i].rev;
                self.adj[u][i].flow += push;
                self.adj[v][rev].flow -= push;
                v = u;
            }
        }
    }
}

/// Optimal passenger split for one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `flows[p][r]`: riders of `pairs[p]` on the `r`-th allocated route
    pub flows: Vec<Vec<f64>>,
    pub route_flow: Vec<f64>,
    pub objective: f64,
}

/// Best assignment of `demand` to the routes of `alloc` (`(route, buses)`).
pub fn assign(net: &Network, demand: &[(OdPair, f64)], alloc: &[(usize, usize)]) -> Assignment {
    let (np, nr) = (demand.len(), alloc.len());
    let caps: Vec<f64> = alloc.iter().map(|(c, k)| net.route_capacity(*c, *k)).collect();
    let wait: Vec<f64> = alloc.iter().map(|(c, k)| net.stage2_utility(*c, *k)).collect();
    let net_util = |p: usize, r: usize| net.beta1_unchecked(demand[p].0, alloc[r].0) + wait[r];

    let mut flows = vec![vec![0.0; nr]; np];
    if nr == 1 {
        // one route: fill the most valuable pairs first
        let mut order: Vec<usize> = (0..np).filter(|p| net_util(*p, 0) > EPS && demand[*p].1 > 0.0).collect();
        order.sort_by(|a, b| net_util(*b, 0).total_cmp(&net_util(*a, 0)).then(a.cmp(b)));
        let mut left = caps[0];
        for p in order {
            let x = demand[p].1.min(left);
            flows[p][0] = x;
            left -= x;
            if left <= 0.0 {
                break;
            }
        }
    } else if nr > 1 {
        let (s, t) = (0, np + nr + 1);
        let mut g = Graph::new(np + nr + 2);
        let mut od_edges = Vec::new();
        for p in 0..np {
            if demand[p].1 <= 0.0 {
                continue;
            }
            g.add(s, 1 + p, demand[p].1, 0.0);
            for r in 0..nr {
                let u = net_util(p, r);
                if u > EPS {
                    let (from, idx) = g.add(1 + p, 1 + np + r, demand[p].1, -u);
                    od_edges.push((p, r, from, idx));
                }
            }
        }
        for r in 0..nr {
            g.add(1 + np + r, t, caps[r], 0.0);
        }
        g.min_cost_flow(s, t);
        for (p, r, from, idx) in od_edges {
            flows[p][r] = g.adj[from][idx].flow.max(0.0);
        }
    }
    let route_flow: Vec<f64> = (0..nr).map(|r| flows.iter().map(|f| f[r]).sum()).collect();
    let objective = (0..np)
        .flat_map(|p| (0..nr).map(move |r| (p, r)))
        .map(|(p, r)| flows[p][r] * net_util(p, r))
        .sum();
    Assignment {
        flows,
        route_flow,
        objective,
    }
}
