//! Primal network simplex for integer transportation problems.
//!
//! Supplies, demands and costs are integers; potentials and objectives are
//! carried in `i128`, so optimality is decided exactly. The spanning tree
//! starts from artificial arcs to an extra root node and pivots follow the
//! strongly-feasible leaving rule, which rules out cycling.

use crate::error::{LabError, Result};

/// A bipartite transportation instance with an explicit arc list.
#[derive(Debug, Clone)]
pub struct Network {
    pub supply: Vec<i64>,
    pub demand: Vec<i64>,
    /// `(source, sink)` pairs.
    pub arcs: Vec<(u32, u32)>,
    pub cost: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSolution {
    /// Flow on each arc of the network, in arc order.
    pub flow: Vec<i64>,
    pub objective: i128,
    pub pi_source: Vec<i128>,
    pub pi_sink: Vec<i128>,
    pub pivots: usize,
}

/// A dense `n × m` transportation problem with integer data.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub supply: Vec<i64>,
    pub demand: Vec<i64>,
    /// Row-major `n × m` cost matrix.
    pub cost: Vec<i64>,
}

/// Result of the two-stage solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexSolution {
    /// Positive entries `(i, j, flow)` in row-major order.
    pub entries: Vec<(usize, usize, i64)>,
    pub primary: i128,
    pub secondary: i128,
    /// Number of arcs with zero reduced cost after the first stage.
    pub face_arcs: usize,
}

impl TransportProblem {
    pub fn new(supply: Vec<i64>, demand: Vec<i64>, cost: Vec<i64>) -> Result<Self> {
        if cost.len() != supply.len() * demand.len() {
            return Err(LabError::Infeasible("cost matrix has the wrong size".into()));
        }
        if supply.iter().chain(&demand).any(|&v| v < 0) {
            return Err(LabError::Infeasible("negative supply or demand".into()));
        }
        let s: i128 = supply.iter().map(|&v| v as i128).sum();
        let d: i128 = demand.iter().map(|&v| v as i128).sum();
        if s != d {
            return Err(LabError::Infeasible(format!("supply {s} != demand {d}")));
        }
        Ok(TransportProblem { supply, demand, cost })
    }

    fn dense_network(&self) -> Network {
        let (n, m) = (self.supply.len(), self.demand.len());
        let mut arcs = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                arcs.push((i as u32, j as u32));
            }
        }
        Network {
            supply: self.supply.clone(),
            demand: self.demand.clone(),
            arcs,
            cost: self.cost.clone(),
        }
    }

    pub fn solve(&self) -> Result<FlowSolution> {
        self.dense_network().solve()
    }

    /// Minimizes `cost`, then minimizes `secondary` over the optimal face
    /// of the first stage. The face is the set of arcs with zero reduced
    /// cost under the first-stage potentials.
    pub fn solve_lexicographic(&self, secondary: &[i64]) -> Result<LexSolution> {
        let m = self.demand.len();
        if secondary.len() != self.cost.len() {
            return Err(LabError::Infeasible("secondary cost matrix has the wrong size".into()));
        }
        let net = self.dense_network();
        let first = net.solve()?;
        let mut face = Network {
            supply: self.supply.clone(),
            demand: self.demand.clone(),
            arcs: Vec::new(),
            cost: Vec::new(),
        };
        let mut primary_cost = Vec::new();
        for (a, &(i, j)) in net.arcs.iter().enumerate() {
            let rc = net.cost[a] as i128 + first.pi_source[i as usize] - first.pi_sink[j as usize];
            if rc == 0 {
                face.arcs.push((i, j));
                face.cost.push(secondary[a]);
                primary_cost.push(net.cost[a]);
            }
        }
        let second = face.solve()?;
        let primary: i128 = second
            .flow
            .iter()
            .zip(&primary_cost)
            .map(|(&f, &c)| f as i128 * c as i128)
            .sum();
        if primary != first.objective {
            return Err(LabError::Infeasible(format!(
                "second stage left the optimal face: {primary} != {}",
                first.objective
            )));
        }
        let mut entries: Vec<(usize, usize, i64)> = face
            .arcs
            .iter()
            .zip(&second.flow)
            .filter(|(_, &f)| f > 0)
            .map(|(&(i, j), &f)| (i as usize, j as usize, f))
            .collect();
        entries.sort_by_key(|&(i, j, _)| i * m + j);
        Ok(LexSolution {
            entries,
            primary,
            secondary: second.objective,
            face_arcs: face.arcs.len(),
        })
    }
}

const NONE: usize = usize::MAX;

struct Simplex<'a> {
    net: &'a Network,
    n_src: usize,
    root: usize,
    n_real: usize,
    // arc data, artificial arcs appended after the real ones
    tail: Vec<usize>,
    head: Vec<usize>,
    cost: Vec<i128>,
    flow: Vec<i64>,
    in_tree: Vec<bool>,
    // tree data
    parent: Vec<usize>,
    pred: Vec<usize>,
    up: Vec<bool>,
    depth: Vec<usize>,
    first_child: Vec<usize>,
    next_sib: Vec<usize>,
    prev_sib: Vec<usize>,
    pi: Vec<i128>,
    next_arc: usize,
    block: usize,
}

impl Network {
    pub fn solve(&self) -> Result<FlowSolution> {
        let s: i128 = self.supply.iter().map(|&v| v as i128).sum();
        let d: i128 = self.demand.iter().map(|&v| v as i128).sum();
        if s != d {
            return Err(LabError::Infeasible(format!("supply {s} != demand {d}")));
        }
        let mut sx = Simplex::new(self);
        let pivots = sx.run();
        sx.finish(pivots)
    }
}

impl<'a> Simplex<'a> {
    fn new(net: &'a Network) -> Self {
        let n_src = net.supply.len();
        let nodes = n_src + net.demand.len();
        let root = nodes;
        let n_real = net.arcs.len();
        let max_cost = net.cost.iter().map(|c| c.unsigned_abs() as i128).max().unwrap_or(0);
        let art = (max_cost + 1) * (nodes as i128 + 1);

        let total = n_real + nodes;
        let mut tail = Vec::with_capacity(total);
        let mut head = Vec::with_capacity(total);
        let mut cost = Vec::with_capacity(total);
        for (a, &(i, j)) in net.arcs.iter().enumerate() {
            tail.push(i as usize);
            head.push(n_src + j as usize);
            cost.push(net.cost[a] as i128);
        }
        let mut flow = vec![0i64; total];
        let mut in_tree = vec![false; total];
        let mut parent = vec![NONE; nodes + 1];
        let mut pred = vec![NONE; nodes + 1];
        let mut up = vec![false; nodes + 1];
        let mut depth = vec![0usize; nodes + 1];
        let mut pi = vec![0i128; nodes + 1];
        let mut first_child = vec![NONE; nodes + 1];
        let mut next_sib = vec![NONE; nodes + 1];
        let mut prev_sib = vec![NONE; nodes + 1];
        for v in 0..nodes {
            let a = n_real + v;
            in_tree[a] = true;
            parent[v] = root;
            pred[v] = a;
            depth[v] = 1;
            let b = if v < n_src { net.supply[v] } else { -net.demand[v - n_src] };
            if b >= 0 {
                tail.push(v);
                head.push(root);
                cost.push(0);
                flow[a] = b;
                up[v] = true;
                pi[v] = 0;
            } else {
                tail.push(root);
                head.push(v);
                cost.push(art);
                flow[a] = -b;
                up[v] = false;
                pi[v] = art;
            }
            // children of the root in node order
            next_sib[v] = if v + 1 < nodes { v + 1 } else { NONE };
            prev_sib[v] = if v > 0 { v - 1 } else { NONE };
        }
        if nodes > 0 {
            first_child[root] = 0;
        }
        let block = ((n_real as f64).sqrt() as usize).max(10).min(n_real.max(1));
        Simplex {
            net,
            n_src,
            root,
            n_real,
            tail,
            head,
            cost,
            flow,
            in_tree,
            parent,
            pred,
            up,
            depth,
            first_child,
            next_sib,
            prev_sib,
            pi,
            next_arc: 0,
            block,
        }
    }

    fn reduced_cost(&self, a: usize) -> i128 {
        self.cost[a] + self.pi[self.tail[a]] - self.pi[self.head[a]]
    }

    /// Block search: scans `block` arcs at a time and returns the most
    /// negative reduced cost of the first block that has one.
    fn entering(&mut self) -> Option<usize> {
        let n = self.n_real;
        if n == 0 {
            return None;
        }
        let mut best = NONE;
        let mut best_rc = 0i128;
        let mut count = 0;
        let mut a = self.next_arc;
        for _ in 0..n {
            if !self.in_tree[a] {
                let rc = self.reduced_cost(a);
                if rc < best_rc {
                    best_rc = rc;
                    best = a;
                }
            }
            count += 1;
            a += 1;
            if a == n {
                a = 0;
            }
            if count == self.block {
                if best != NONE {
                    self.next_arc = a;
                    return Some(best);
                }
                count = 0;
            }
        }
        if best != NONE {
            self.next_arc = a;
            return Some(best);
        }
        None
    }

    fn join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.depth[u] > self.depth[v] {
                u = self.parent[u];
            } else if self.depth[v] > self.depth[u] {
                v = self.parent[v];
            } else {
                u = self.parent[u];
                v = self.parent[v];
            }
        }
        u
    }

    fn remove_child(&mut self, p: usize, c: usize) {
        let (pr, nx) = (self.prev_sib[c], self.next_sib[c]);
        if pr == NONE {
            self.first_child[p] = nx;
        } else {
            self.next_sib[pr] = nx;
        }
        if nx != NONE {
            self.prev_sib[nx] = pr;
        }
        self.prev_sib[c] = NONE;
        self.next_sib[c] = NONE;
    }

    fn add_child(&mut self, p: usize, c: usize) {
        let f = self.first_child[p];
        self.next_sib[c] = f;
        self.prev_sib[c] = NONE;
        if f != NONE {
            self.prev_sib[f] = c;
        }
        self.first_child[p] = c;
    }

    fn pivot(&mut self, e: usize) {
        let first = self.tail[e];
        let second = self.head[e];
        let join = self.join(first, second);

        // leaving arc: flow decreases on up-arcs of the first side and on
        // down-arcs of the second side
        let mut delta = i64::MAX;
        let mut u_out = NONE;
        let mut side = 0;
        let mut u = first;
        while u != join {
            if self.up[u] {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    u_out = u;
                    side = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if !self.up[u] {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    u_out = u;
                    side = 2;
                }
            }
            u = self.parent[u];
        }
        assert!(u_out != NONE, "unbounded transportation problem");

        if delta > 0 {
            self.flow[e] += delta;
            let mut u = first;
            while u != join {
                let a = self.pred[u];
                if self.up[u] {
                    self.flow[a] -= delta;
                } else {
                    self.flow[a] += delta;
                }
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                let a = self.pred[u];
                if self.up[u] {
                    self.flow[a] += delta;
                } else {
                    self.flow[a] -= delta;
                }
                u = self.parent[u];
            }
        }

        let (u_in, v_in) = if side == 1 { (first, second) } else { (second, first) };
        let leaving = self.pred[u_out];
        self.in_tree[leaving] = false;
        self.in_tree[e] = true;

        // reverse the path u_in -> u_out so that u_in becomes the subtree root
        let mut path = vec![u_in];
        while *path.last().unwrap() != u_out {
            let p = self.parent[*path.last().unwrap()];
            path.push(p);
        }
        let old_pred: Vec<usize> = path.iter().map(|&v| self.pred[v]).collect();
        let old_up: Vec<bool> = path.iter().map(|&v| self.up[v]).collect();
        let top_parent = self.parent[u_out];
        self.remove_child(top_parent, u_out);
        for i in 0..path.len() - 1 {
            self.remove_child(path[i + 1], path[i]);
        }
        for i in 0..path.len() - 1 {
            let (c, p) = (path[i + 1], path[i]);
            self.parent[c] = p;
            self.pred[c] = old_pred[i];
            self.up[c] = !old_up[i];
            self.add_child(p, c);
        }
        self.parent[u_in] = v_in;
        self.pred[u_in] = e;
        self.up[u_in] = self.tail[e] == u_in;
        self.add_child(v_in, u_in);

        let target = if self.up[u_in] {
            self.pi[v_in] - self.cost[e]
        } else {
            self.pi[v_in] + self.cost[e]
        };
        let shift = target - self.pi[u_in];
        let base = self.depth[v_in] + 1;
        let mut stack = vec![(u_in, base)];
        while let Some((v, d)) = stack.pop() {
            self.pi[v] += shift;
            self.depth[v] = d;
            let mut c = self.first_child[v];
            while c != NONE {
                stack.push((c, d + 1));
                c = self.next_sib[c];
            }
        }
    }

    fn run(&mut self) -> usize {
        let mut pivots = 0;
        while let Some(e) = self.entering() {
            self.pivot(e);
            pivots += 1;
        }
        pivots
    }

    fn finish(self, pivots: usize) -> Result<FlowSolution> {
        for a in self.n_real..self.flow.len() {
            if self.flow[a] > 0 {
                return Err(LabError::Infeasible("demand cannot be met on the given arcs".into()));
            }
        }
        let flow = self.flow[..self.n_real].to_vec();
        let objective = flow
            .iter()
            .zip(&self.net.cost)
            .map(|(&f, &c)| f as i128 * c as i128)
            .sum();
        let pi_source = self.pi[..self.n_src].to_vec();
        let pi_sink = self.pi[self.n_src..self.root].to_vec();
        Ok(FlowSolution { flow, objective, pi_source, pi_sink, pivots })
    }
}
