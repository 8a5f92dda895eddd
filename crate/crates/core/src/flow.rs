//! Bipartite flow routines with real-valued supplies: maximum flow
//! (Dinic) and min-cost transport (successive shortest paths with
//! potentials). Middle edges are uncapacitated; only the supplies and
//! demands bound the flow.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

/// Residual amounts at or below `ZERO_FLOW_REL * total` are treated as zero.
const ZERO_FLOW_REL: f64 = 1e-14;

/// Maximum flow from sources to targets along `edges`.
pub(crate) fn max_flow(supply: &[f64], demand: &[f64], edges: &[(usize, usize)]) -> f64 {
    let n = supply.len();
    let m = demand.len();
    let total = supply.iter().sum::<f64>().max(demand.iter().sum());
    let zero = ZERO_FLOW_REL * total;
    let mut net = Dinic::new(n + m + 2);
    let (s, t) = (n + m, n + m + 1);
    for (i, &w) in supply.iter().enumerate() {
        net.add_edge(s, i, w);
    }
    for (j, &w) in demand.iter().enumerate() {
        net.add_edge(n + j, t, w);
    }
    for &(i, j) in edges {
        net.add_edge(i, n + j, f64::INFINITY);
    }
    net.run(s, t, zero)
}

struct Dinic {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    level: Vec<i64>,
    iter: Vec<usize>,
}

impl Dinic {
    fn new(nodes: usize) -> Self {
        Self {
            head: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            level: vec![-1; nodes],
            iter: vec![0; nodes],
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, cap: f64) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(cap);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0.0);
    }

    fn bfs(&mut self, s: usize, zero: f64) {
        self.level.fill(-1);
        self.level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > zero && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    q.push_back(v);
                }
            }
        }
    }

    fn dfs(&mut self, u: usize, t: usize, limit: f64, zero: f64) -> f64 {
        if u == t {
            return limit;
        }
        while self.iter[u] < self.head[u].len() {
            let e = self.head[u][self.iter[u]];
            let v = self.to[e];
            if self.cap[e] > zero && self.level[v] == self.level[u] + 1 {
                let pushed = self.dfs(v, t, limit.min(self.cap[e]), zero);
                if pushed > 0.0 {
                    self.cap[e] -= pushed;
                    self.cap[e ^ 1] += pushed;
                    return pushed;
                }
            }
            self.iter[u] += 1;
        }
        0.0
    }

    fn run(&mut self, s: usize, t: usize, zero: f64) -> f64 {
        let mut flow = 0.0;
        loop {
            self.bfs(s, zero);
            if self.level[t] < 0 {
                return flow;
            }
            self.iter.fill(0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY, zero);
                if f <= zero {
                    break;
                }
                flow += f;
            }
        }
    }
}

pub(crate) struct Transport {
    /// Flow on each input edge, aligned with the `edges` argument.
    pub flows: Vec<f64>,
    /// Source potentials `u_i` and target potentials `v_j` with
    /// `cost - u_i - v_j >= 0` on every edge, `= 0` where flow is positive.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Supply left unrouted because no augmenting path remains.
    pub unrouted: f64,
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    // Reversed for a min-heap; ties go to the lower node index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy)]
enum Via {
    None,
    Source,
    Forward(usize),
    Backward(usize),
    Sink(usize),
}

/// Min-cost transport of `supply` onto `demand` along `edges = (i, j, cost)`
/// with nonnegative costs.
pub(crate) fn min_cost_transport(
    supply: &[f64],
    demand: &[f64],
    edges: &[(usize, usize, f64)],
) -> Transport {
    let n = supply.len();
    let m = demand.len();
    let total = supply.iter().sum::<f64>().max(demand.iter().sum());
    let zero = ZERO_FLOW_REL * total;
    // Node layout: sources 0..n, targets n..n+m, super source s, super sink t.
    let (s, t) = (n + m, n + m + 1);
    let nodes = n + m + 2;

    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut in_edges: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (e, &(i, j, _)) in edges.iter().enumerate() {
        out_edges[i].push(e);
        in_edges[j].push(e);
    }

    let mut flows = vec![0.0; edges.len()];
    let mut supply_left = supply.to_vec();
    let mut demand_left = demand.to_vec();
    let mut potential = vec![0.0; nodes];
    let mut dist = vec![f64::INFINITY; nodes];
    let mut via = vec![Via::None; nodes];

    while supply_left.iter().any(|&r| r > zero) {
        dist.fill(f64::INFINITY);
        via.fill(Via::None);
        dist[s] = 0.0;
        let mut heap = BinaryHeap::from([Item(0.0, s)]);
        while let Some(Item(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            let mut relax = |v: usize, cost: f64, how: Via, heap: &mut BinaryHeap<Item>| {
                // Reduced costs are nonnegative up to rounding.
                let nd = d + (cost + potential[u] - potential[v]).max(0.0);
                if nd < dist[v] {
                    dist[v] = nd;
                    via[v] = how;
                    heap.push(Item(nd, v));
                }
            };
            if u == s {
                for (i, &left) in supply_left.iter().enumerate() {
                    if left > zero {
                        relax(i, 0.0, Via::Source, &mut heap);
                    }
                }
            } else if u < n {
                for &e in &out_edges[u] {
                    relax(n + edges[e].1, edges[e].2, Via::Forward(e), &mut heap);
                }
            } else if u < n + m {
                let j = u - n;
                for &e in &in_edges[j] {
                    if flows[e] > zero {
                        relax(edges[e].0, -edges[e].2, Via::Backward(e), &mut heap);
                    }
                }
                if demand_left[j] > zero {
                    relax(t, 0.0, Via::Sink(j), &mut heap);
                }
            }
        }
        if !dist[t].is_finite() {
            break;
        }
        let cap = dist[t];
        for (p, &d) in potential.iter_mut().zip(&dist) {
            *p += d.min(cap);
        }

        let mut amount = f64::INFINITY;
        let mut v = t;
        while v != s {
            v = match via[v] {
                Via::Sink(j) => {
                    amount = amount.min(demand_left[j]);
                    n + j
                }
                Via::Forward(e) => edges[e].0,
                Via::Backward(e) => {
                    amount = amount.min(flows[e]);
                    n + edges[e].1
                }
                Via::Source => {
                    amount = amount.min(supply_left[v]);
                    s
                }
                Via::None => unreachable!("shortest-path tree is connected"),
            };
        }
        let mut v = t;
        while v != s {
            v = match via[v] {
                Via::Sink(j) => {
                    demand_left[j] -= amount;
                    n + j
                }
                Via::Forward(e) => {
                    flows[e] += amount;
                    edges[e].0
                }
                Via::Backward(e) => {
                    flows[e] -= amount;
                    n + edges[e].1
                }
                Via::Source => {
                    supply_left[v] -= amount;
                    s
                }
                Via::None => unreachable!(),
            };
        }
    }

    for f in flows.iter_mut() {
        if *f <= zero {
            *f = 0.0;
        }
    }
    Transport {
        u: potential[..n].iter().map(|p| -p).collect(),
        v: potential[n..n + m].to_vec(),
        unrouted: supply_left.iter().filter(|&&r| r > zero).sum(),
        flows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_flow_bipartite() {
        // supplies 1,1 ; demands 1,1 ; only x0->y0 and x1->y0
        assert_eq!(max_flow(&[1.0, 1.0], &[1.0, 1.0], &[(0, 0), (1, 0)]), 1.0);
        assert_eq!(
            max_flow(&[1.0, 1.0], &[1.0, 1.0], &[(0, 0), (1, 0), (1, 1)]),
            2.0
        );
        assert_eq!(max_flow(&[0.5], &[0.5], &[]), 0.0);
    }

    #[test]
    fn transport_small() {
        // 2x2 with the anti-diagonal cheaper
        let edges = [(0, 0, 1.0), (0, 1, 0.0), (1, 0, 0.0), (1, 1, 1.0)];
        let sol = min_cost_transport(&[0.5, 0.5], &[0.5, 0.5], &edges);
        assert_eq!(sol.flows, vec![0.0, 0.5, 0.5, 0.0]);
        assert_eq!(sol.unrouted, 0.0);
        for (e, &(i, j, c)) in edges.iter().enumerate() {
            let slack = c - sol.u[i] - sol.v[j];
            assert!(slack >= -1e-12);
            if sol.flows[e] > 0.0 {
                assert!(slack.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transport_needs_rerouting() {
        // Greedy x0->y0 must be undone: x1 can only reach y0.
        let edges = [(0, 0, 0.0), (0, 1, 5.0), (1, 0, 1.0)];
        let sol = min_cost_transport(&[1.0, 1.0], &[1.0, 1.0], &edges);
        assert_eq!(sol.flows, vec![0.0, 1.0, 1.0]);
        let cost: f64 = sol.flows.iter().zip(&edges).map(|(f, e)| f * e.2).sum();
        assert_eq!(cost, 6.0);
    }

    #[test]
    fn transport_reports_shortfall() {
        let sol = min_cost_transport(&[1.0, 1.0], &[1.0, 1.0], &[(0, 0, 0.0), (1, 0, 0.0)]);
        assert!((sol.unrouted - 1.0).abs() < 1e-12);
    }
}
