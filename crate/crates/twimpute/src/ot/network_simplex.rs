//! Primal network simplex for the dense transportation problem
//!
//! ```text
//! min Σ_ij C_ij X_ij   s.t.   Σ_j X_ij = s_i,  Σ_i X_ij = d_j,  X ≥ 0,
//! ```
//!
//! on the bipartite graph with r source nodes, c sink nodes, and an
//! artificial root. The spanning-tree basis is kept as parent/pred arrays
//! plus explicit children lists; entering arcs are found with a block
//! search over the real arcs (first strict minimum within a block wins, so
//! ties break toward the lowest arc index and runs are deterministic).
//!
//! Costs are normalised by their maximum absolute value internally.
//! Callers pass integer-valued supplies/demands (the uniform wrappers scale
//! masses by r·c), so every flow value stays an exact integer in f64 and
//! the returned marginals are exact up to final division. Potentials are
//! recomputed from the tree after the pivot loop drains and the scan is
//! repeated, which keeps the optimality certificate free of the drift that
//! incremental potential updates accumulate.

use crate::error::{Result, TwiError};

const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;

/// Entering threshold on normalised reduced costs.
const EPS_ENTER: f64 = 1e-12;

/// Solution of one transportation solve, in unscaled flow units.
#[derive(Debug)]
pub(crate) struct SimplexSolution {
    /// Row-major r×c optimal flows (integer-valued for integer supplies).
    pub flow: Vec<f64>,
    /// Σ flow·cost in the caller's cost units.
    pub cost: f64,
    /// Node potentials (row part, column part) in cost units: at optimality
    /// cost[i][j] + u[i] − v[j] ≥ 0 with equality on the support.
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
}

struct NetworkSimplex<'a> {
    r: usize,
    c: usize,
    n_nodes: usize,
    n_real: usize,
    cost: &'a [f64],
    // Per arc: real arcs 0..r·c (arc a joins source a/c to sink a%c), then
    // one artificial arc per non-root node.
    flow: Vec<f64>,
    state: Vec<i8>,
    // Per node; the root is node r+c.
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// Whether the pred arc is oriented node → parent.
    up: Vec<bool>,
    depth: Vec<u32>,
    pi: Vec<f64>,
    children: Vec<Vec<u32>>,
    next_arc: usize,
    block_size: usize,
    dfs_stack: Vec<u32>,
}

const NO_NODE: usize = usize::MAX;

impl<'a> NetworkSimplex<'a> {
    fn new(cost: &'a [f64], r: usize, c: usize, supplies: &[f64], demands: &[f64]) -> Self {
        let n_nodes = r + c + 1;
        let n_real = r * c;
        let root = r + c;
        let big = 2.0 * n_nodes as f64; // dominates any normalised path cost

        let n_arcs = n_real + r + c;
        let mut flow = vec![0.0; n_arcs];
        let mut state = vec![STATE_LOWER; n_arcs];
        let mut parent = vec![NO_NODE; n_nodes];
        let mut pred = vec![usize::MAX; n_nodes];
        let mut up = vec![false; n_nodes];
        let mut depth = vec![0u32; n_nodes];
        let mut pi = vec![0.0; n_nodes];
        let mut children: Vec<Vec<u32>> = vec![Vec::new(); n_nodes];

        children[root] = (0..(r + c) as u32).collect();
        for u in 0..r + c {
            let a = n_real + u;
            parent[u] = root;
            pred[u] = a;
            depth[u] = 1;
            state[a] = STATE_TREE;
            if u < r {
                // supply node: artificial arc u → root carries the supply out
                up[u] = true;
                flow[a] = supplies[u];
                pi[u] = -big;
            } else {
                // demand node: artificial arc root → u carries the demand in
                up[u] = false;
                flow[a] = demands[u - r];
                pi[u] = big;
            }
        }

        let block_size = ((n_real as f64).sqrt().ceil() as usize).max(10);
        Self {
            r,
            c,
            n_nodes,
            n_real,
            cost,
            flow,
            state,
            parent,
            pred,
            up,
            depth,
            pi,
            children,
            next_arc: 0,
            block_size,
            dfs_stack: Vec::new(),
        }
    }

    fn root(&self) -> usize {
        self.r + self.c
    }

    fn arc_tail(&self, a: usize) -> usize {
        if a < self.n_real {
            a / self.c
        } else {
            let u = a - self.n_real;
            if u < self.r {
                u
            } else {
                self.root()
            }
        }
    }

    fn arc_head(&self, a: usize) -> usize {
        if a < self.n_real {
            self.r + a % self.c
        } else {
            let u = a - self.n_real;
            if u < self.r {
                self.root()
            } else {
                u
            }
        }
    }

    fn arc_cost(&self, a: usize) -> f64 {
        if a < self.n_real {
            self.cost[a]
        } else {
            2.0 * self.n_nodes as f64
        }
    }

    /// Block search over the real arcs for the most negative reduced cost.
    fn find_entering(&mut self) -> Option<usize> {
        let m = self.n_real;
        let mut a = self.next_arc;
        let mut i = a / self.c;
        let mut j = a % self.c;
        let mut best = -EPS_ENTER;
        let mut best_arc = None;
        let mut left_in_block = self.block_size;
        for _ in 0..m {
            if self.state[a] == STATE_LOWER {
                let red = self.cost[a] + self.pi[i] - self.pi[self.r + j];
                if red < best {
                    best = red;
                    best_arc = Some(a);
                }
            }
            a += 1;
            j += 1;
            if j == self.c {
                j = 0;
                i += 1;
            }
            if a == m {
                a = 0;
                i = 0;
                j = 0;
            }
            left_in_block -= 1;
            if left_in_block == 0 {
                if best_arc.is_some() {
                    break;
                }
                left_in_block = self.block_size;
            }
        }
        if let Some(e) = best_arc {
            self.next_arc = (e + 1) % m;
        }
        best_arc
    }

    fn find_join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.depth[u] >= self.depth[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        u
    }

    fn remove_child(&mut self, parent: usize, child: usize) {
        let list = &mut self.children[parent];
        let pos = list
            .iter()
            .position(|&x| x as usize == child)
            .expect("basis tree children list out of sync");
        list.swap_remove(pos);
    }

    /// One pivot on entering arc `e_in`. Returns an error only if the pivot
    /// finds an unbounded cycle, which cannot happen on a transportation
    /// polytope with finite supplies.
    fn pivot(&mut self, e_in: usize) -> Result<()> {
        let first = self.arc_tail(e_in);
        let second = self.arc_head(e_in);
        let join = self.find_join(first, second);

        // Leaving-arc search around the cycle closed by e_in. Pushing flow
        // along e_in sends it first → second, up from second to the join and
        // down from the join to first; arcs opposing that direction drain.
        // The `<` / `<=` asymmetry reproduces the classic strongly-feasible
        // tie-breaking, which prevents cycling on degenerate pivots.
        let mut delta = f64::INFINITY;
        let mut u_out = NO_NODE;
        let mut out_on_first_path = true;
        let mut u = first;
        while u != join {
            if self.up[u] {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    u_out = u;
                    out_on_first_path = true;
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
                    out_on_first_path = false;
                }
            }
            u = self.parent[u];
        }
        if u_out == NO_NODE {
            return Err(TwiError::Numerical(
                "network simplex found an unbounded augmenting cycle".into(),
            ));
        }

        // Apply the flow change around the cycle.
        if delta > 0.0 {
            self.flow[e_in] += delta;
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                self.flow[e] += if self.up[u] { -delta } else { delta };
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                let e = self.pred[u];
                self.flow[e] += if self.up[u] { delta } else { -delta };
                u = self.parent[u];
            }
        }

        let e_out = self.pred[u_out];
        debug_assert_eq!(self.flow[e_out], 0.0, "leaving arc must be drained");
        self.state[e_out] = STATE_LOWER;
        self.state[e_in] = STATE_TREE;

        // Re-hang the subtree that e_out cut off: it contains u_in, gets
        // re-rooted there, and attaches below v_in through e_in.
        let (u_in, v_in) = if out_on_first_path { (first, second) } else { (second, first) };
        let red_in = self.arc_cost(e_in) + self.pi[self.arc_tail(e_in)] - self.pi[self.arc_head(e_in)];
        let sigma = if self.arc_tail(e_in) == u_in { -red_in } else { red_in };

        self.remove_child(self.parent[u_out], u_out);
        let mut node = u_in;
        let mut new_parent = v_in;
        let mut carry_pred = e_in;
        let mut carry_up = self.arc_tail(e_in) == u_in;
        loop {
            let old_parent = self.parent[node];
            let old_pred = self.pred[node];
            let old_up = self.up[node];
            self.parent[node] = new_parent;
            self.pred[node] = carry_pred;
            self.up[node] = carry_up;
            self.children[new_parent].push(node as u32);
            if node == u_out {
                break;
            }
            self.remove_child(old_parent, node);
            new_parent = node;
            carry_pred = old_pred;
            carry_up = !old_up;
            node = old_parent;
        }

        // Depths and potentials change only inside the re-hung subtree; the
        // potential shift is the entering arc's reduced cost, constant on it.
        self.dfs_stack.clear();
        self.dfs_stack.push(u_in as u32);
        while let Some(x) = self.dfs_stack.pop() {
            let x = x as usize;
            self.depth[x] = self.depth[self.parent[x]] + 1;
            self.pi[x] += sigma;
            for &ch in &self.children[x] {
                self.dfs_stack.push(ch);
            }
        }
        Ok(())
    }

    /// Recomputes all potentials exactly from the tree.
    fn recompute_pi(&mut self) {
        let root = self.root();
        self.pi[root] = 0.0;
        self.dfs_stack.clear();
        for &ch in &self.children[root] {
            self.dfs_stack.push(ch);
        }
        while let Some(x) = self.dfs_stack.pop() {
            let x = x as usize;
            let e = self.pred[x];
            let cost = self.arc_cost(e);
            self.pi[x] = if self.up[x] {
                // arc x → parent in the basis: cost + pi[x] − pi[parent] = 0
                self.pi[self.parent[x]] - cost
            } else {
                self.pi[self.parent[x]] + cost
            };
            for &ch in &self.children[x] {
                self.dfs_stack.push(ch);
            }
        }
    }

    fn run(&mut self) -> Result<()> {
        let max_pivots = 10_000 + 200 * self.n_nodes * ((self.n_nodes as f64).log2() as usize + 1);
        let mut pivots = 0usize;
        for _refinement in 0..32 {
            while let Some(e) = self.find_entering() {
                self.pivot(e)?;
                pivots += 1;
                if pivots > max_pivots {
                    return Err(TwiError::Numerical(format!(
                        "network simplex exceeded {max_pivots} pivots; cost matrix may be degenerate"
                    )));
                }
            }
            // Rule out termination on drifted potentials: rebuild them from
            // the tree and rescan once from a clean slate.
            self.recompute_pi();
            let improvable = (0..self.n_real).any(|a| {
                self.state[a] == STATE_LOWER
                    && self.cost[a] + self.pi[a / self.c] - self.pi[self.r + a % self.c] < -EPS_ENTER
            });
            if !improvable {
                return Ok(());
            }
        }
        Err(TwiError::Numerical("network simplex failed to certify optimality".into()))
    }
}

/// Neumaier compensated summation of products.
fn dot_compensated(xs: &[f64], ys: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let term = x * y;
        let t = sum + term;
        comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Solves the transportation problem with the given row-major cost matrix.
///
/// `supplies` and `demands` must be positive with equal totals; when they
/// are integer-valued the returned flows are exact integers.
pub(crate) fn solve_transportation(
    cost: &[f64],
    r: usize,
    c: usize,
    supplies: &[f64],
    demands: &[f64],
) -> Result<SimplexSolution> {
    if r == 0 || c == 0 {
        return Err(TwiError::Shape("transportation problem needs r >= 1 and c >= 1".into()));
    }
    if cost.len() != r * c {
        return Err(TwiError::Shape(format!(
            "cost has {} entries, expected {}x{}",
            cost.len(),
            r,
            c
        )));
    }
    if cost.iter().any(|x| !x.is_finite()) {
        return Err(TwiError::Config("cost matrix contains non-finite entries".into()));
    }
    let total_supply: f64 = supplies.iter().sum();
    let total_demand: f64 = demands.iter().sum();
    if (total_supply - total_demand).abs() > 1e-9 * total_supply.max(1.0) {
        return Err(TwiError::Shape(format!(
            "supplies total {total_supply} but demands total {total_demand}"
        )));
    }

    // Normalise costs so the entering tolerance is scale-free.
    let scale = cost.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let normalised: Vec<f64>;
    let cost_view: &[f64] = if scale > 0.0 && scale != 1.0 {
        normalised = cost.iter().map(|&x| x / scale).collect();
        &normalised
    } else {
        cost
    };
    let cost_scale = if scale > 0.0 { scale } else { 1.0 };

    let mut simplex = NetworkSimplex::new(cost_view, r, c, supplies, demands);
    simplex.run()?;

    // A leftover artificial flow would mean the balanced problem was not
    // routed, which the equal-totals check above rules out.
    for u in 0..r + c {
        if simplex.flow[r * c + u] > 1e-9 * total_supply.max(1.0) {
            return Err(TwiError::Numerical(
                "network simplex left flow on an artificial arc".into(),
            ));
        }
    }

    let flow = simplex.flow[..r * c].to_vec();
    let objective = dot_compensated(&flow, cost) /* cost in caller units */;
    let row_potentials: Vec<f64> = simplex.pi[..r].iter().map(|&x| x * cost_scale).collect();
    let col_potentials: Vec<f64> = simplex.pi[r..r + c].iter().map(|&x| x * cost_scale).collect();
    Ok(SimplexSolution { flow, cost: objective, row_potentials, col_potentials })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_units(r: usize, c: usize) -> (Vec<f64>, Vec<f64>) {
        (vec![c as f64; r], vec![r as f64; c])
    }

    #[test]
    fn single_cell_routes_everything() {
        let (s, d) = uniform_units(1, 1);
        let sol = solve_transportation(&[5.0], 1, 1, &s, &d).unwrap();
        assert_eq!(sol.flow, vec![1.0]);
        assert_eq!(sol.cost, 5.0);
    }

    #[test]
    fn zero_cost_matching_is_found() {
        let cost = [0.0, 1.0, 1.0, 0.0];
        let (s, d) = uniform_units(2, 2);
        let sol = solve_transportation(&cost, 2, 2, &s, &d).unwrap();
        assert_eq!(sol.cost, 0.0);
        assert_eq!(sol.flow, vec![2.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn rectangular_flows_satisfy_marginals_exactly() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let r = rng.gen_range(1..12);
            let c = rng.gen_range(1..12);
            let cost: Vec<f64> = (0..r * c).map(|_| rng.gen_range(0.0..10.0)).collect();
            let (s, d) = uniform_units(r, c);
            let sol = solve_transportation(&cost, r, c, &s, &d).unwrap();
            for i in 0..r {
                let row: f64 = sol.flow[i * c..(i + 1) * c].iter().sum();
                assert_eq!(row, c as f64);
            }
            for j in 0..c {
                let col: f64 = (0..r).map(|i| sol.flow[i * c + j]).sum();
                assert_eq!(col, r as f64);
            }
            assert!(sol.flow.iter().all(|&f| f >= 0.0));
        }
    }

    #[test]
    fn duality_certificate_holds_on_random_instances() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..25 {
            let r = rng.gen_range(2..25);
            let c = rng.gen_range(2..25);
            let cost: Vec<f64> = (0..r * c).map(|_| rng.gen_range(0.0..4.0)).collect();
            let (s, d) = uniform_units(r, c);
            let sol = solve_transportation(&cost, r, c, &s, &d).unwrap();
            // Dual feasibility: cost + u_i − v_j ≥ −tol everywhere.
            let mut min_red: f64 = f64::INFINITY;
            for i in 0..r {
                for j in 0..c {
                    min_red =
                        min_red.min(cost[i * c + j] + sol.row_potentials[i] - sol.col_potentials[j]);
                }
            }
            assert!(min_red > -1e-9, "trial {trial}: dual infeasible by {min_red}");
            // Strong duality: Σ d_j v_j − Σ s_i u_i equals the primal cost.
            let dual: f64 = d
                .iter()
                .zip(&sol.col_potentials)
                .map(|(&m, &v)| m * v)
                .sum::<f64>()
                - s.iter().zip(&sol.row_potentials).map(|(&m, &u)| m * u).sum::<f64>();
            let rel = (dual - sol.cost).abs() / sol.cost.abs().max(1.0);
            assert!(rel < 1e-9, "trial {trial}: duality gap {rel}");
        }
    }

    #[test]
    fn unbalanced_totals_are_rejected() {
        let err = solve_transportation(&[1.0], 1, 1, &[2.0], &[1.0]).unwrap_err();
        assert!(matches!(err, TwiError::Shape(_)));
    }
}
