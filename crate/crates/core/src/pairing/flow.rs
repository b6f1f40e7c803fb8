//! Successive-shortest-path min-cost flow for the capacitated assignment of
//! UEs (unit supplies) to a candidate AN set (capacity `u_max` each).

use nalgebra::DMatrix;

#[derive(Clone, Copy)]
struct Edge {
    to: usize,
    cap: usize,
    cost: f64,
}

struct Network {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Self { edges: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: usize, cost: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0, cost: -cost });
    }

    /// Push up to `want` units from `src` to `dst`, one shortest path at a
    /// time. Returns the flow actually sent.
    fn min_cost_flow(&mut self, src: usize, dst: usize, want: usize) -> usize {
        let n = self.adj.len();
        let mut potential = vec![0.0f64; n];
        let mut sent = 0;
        let mut dist = vec![f64::INFINITY; n];
        let mut prev_edge = vec![usize::MAX; n];
        let mut done = vec![false; n];
        while sent < want {
            dist.fill(f64::INFINITY);
            prev_edge.fill(usize::MAX);
            done.fill(false);
            dist[src] = 0.0;
            // Dense Dijkstra: the graphs here have at most a few hundred nodes.
            // Ties resolve toward the lowest node index.
            loop {
                let mut u = usize::MAX;
                for v in 0..n {
                    if !done[v] && dist[v].is_finite() && (u == usize::MAX || dist[v] < dist[u]) {
                        u = v;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                for &e in &self.adj[u] {
                    let edge = self.edges[e];
                    if edge.cap == 0 || done[edge.to] {
                        continue;
                    }
                    let reduced = (edge.cost + potential[u] - potential[edge.to]).max(0.0);
                    let cand = dist[u] + reduced;
                    if cand < dist[edge.to] {
                        dist[edge.to] = cand;
                        prev_edge[edge.to] = e;
                    }
                }
            }
            if !dist[dst].is_finite() {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }
            let mut v = dst;
            while v != src {
                let e = prev_edge[v];
                self.edges[e].cap -= 1;
                self.edges[e ^ 1].cap += 1;
                v = self.edges[e ^ 1].to;
            }
            sent += 1;
        }
        sent
    }
}

/// Min-cost assignment of every UE to one AN in `allowed`, at most `u_max`
/// UEs per AN. Returns the serving AN per UE and the summed cost, or `None`
/// when capacity is insufficient.
pub fn min_cost_assignment(
    costs: &DMatrix<f64>,
    allowed: &[usize],
    u_max: usize,
) -> Option<(Vec<usize>, f64)> {
    let k = costs.nrows();
    if allowed.len() * u_max < k {
        return None;
    }
    let n_an = allowed.len();
    let src = 0;
    let sink = 1 + k + n_an;
    let mut net = Network::new(sink + 1);
    for ue in 0..k {
        net.add_edge(src, 1 + ue, 1, 0.0);
    }
    let mut ue_edges = vec![Vec::with_capacity(n_an); k];
    for ue in 0..k {
        for (j, &an) in allowed.iter().enumerate() {
            ue_edges[ue].push(net.edges.len());
            net.add_edge(1 + ue, 1 + k + j, 1, costs[(ue, an)]);
        }
    }
    for j in 0..n_an {
        net.add_edge(1 + k + j, sink, u_max, 0.0);
    }
    if net.min_cost_flow(src, sink, k) < k {
        return None;
    }
    let serving: Vec<usize> = (0..k)
        .map(|ue| {
            let j = ue_edges[ue]
                .iter()
                .position(|&e| net.edges[e].cap == 0)
                .expect("every UE carries one unit of flow");
            allowed[j]
        })
        .collect();
    let total = serving.iter().enumerate().map(|(ue, &an)| costs[(ue, an)]).sum();
    Some((serving, total))
}
