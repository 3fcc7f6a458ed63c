//! Discrete optimal transport between the uniform empirical measures on the
//! pre- and post-cut-off embedding families.
//!
//! The problem is the linear program
//!
//! ```text
//! min_Π Σ_ij π_ij C_ij   s.t.   Σ_j π_ij = 1/r,  Σ_i π_ij = 1/c,  π ≥ 0.
//! ```
//!
//! [`solve_exact`] computes the LP optimum with a network simplex;
//! [`solve_sinkhorn`] solves the entropically regularized problem in the
//! log domain and rounds the result back to exact marginal feasibility.
//! [`solve_1d_monotone`] is the closed-form quantile coupling for scalar
//! supports, used as a test oracle.

mod network_simplex;
mod sinkhorn;

use nalgebra::DMatrix;

use crate::error::{Result, TwiError};

pub use sinkhorn::solve_sinkhorn;

/// A transport plan between uniform marginals: nonnegative r×c matrix with
/// row sums 1/r and column sums 1/c.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub matrix: DMatrix<f64>,
    pub row_mass: f64,
    pub col_mass: f64,
}

impl TransportPlan {
    /// Wraps a matrix as a plan for uniform marginals, clamping entries in
    /// [−1e−12, 0) to zero.
    pub fn from_matrix(mut matrix: DMatrix<f64>) -> Self {
        let (r, c) = matrix.shape();
        for x in matrix.iter_mut() {
            if *x < 0.0 {
                debug_assert!(*x >= -1e-12, "plan entry {} below clamp threshold", *x);
                *x = 0.0;
            }
        }
        Self { matrix, row_mass: 1.0 / r as f64, col_mass: 1.0 / c as f64 }
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Largest absolute deviation of any row/column sum from its uniform
    /// target mass.
    pub fn feasibility_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.nrows() {
            worst = worst.max((self.matrix.row(i).sum() - self.row_mass).abs());
        }
        for j in 0..self.ncols() {
            worst = worst.max((self.matrix.column(j).sum() - self.col_mass).abs());
        }
        worst
    }

    /// ⟨Π, C⟩ for a cost matrix of matching shape.
    pub fn cost_against(&self, cost: &DMatrix<f64>) -> f64 {
        self.matrix.iter().zip(cost.iter()).map(|(&p, &c)| p * c).sum()
    }

    /// Deterministic pseudo-random feasible plan, built from the product
    /// coupling by mass-preserving moves on 2×2 rectangles. Useful for
    /// exercising plan-dependent code on plans that are neither product nor
    /// optimal for anything in particular.
    pub fn random_feasible(r: usize, c: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut matrix = DMatrix::from_element(r, c, 1.0 / (r * c) as f64);
        if r > 1 && c > 1 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 * (r + c) {
                let i1 = rng.gen_range(0..r);
                let i2 = (i1 + rng.gen_range(1..r)) % r;
                let j1 = rng.gen_range(0..c);
                let j2 = (j1 + rng.gen_range(1..c)) % c;
                let delta = rng.gen_range(0.0..=1.0) * matrix[(i1, j1)].min(matrix[(i2, j2)]);
                matrix[(i1, j1)] -= delta;
                matrix[(i2, j2)] -= delta;
                matrix[(i1, j2)] += delta;
                matrix[(i2, j1)] += delta;
            }
        }
        Self { matrix, row_mass: 1.0 / r as f64, col_mass: 1.0 / c as f64 }
    }
}

/// Exact solution of the uniform-marginal transport LP.
///
/// Returns the optimal plan and its cost ⟨Π, C⟩.
pub fn solve_exact(cost: &DMatrix<f64>) -> Result<(TransportPlan, f64)> {
    let (plan, value, _, _) = solve_exact_with_potentials(cost)?;
    Ok((plan, value))
}

/// Exact solve that also returns the optimal dual potentials (u, v), which
/// satisfy C_ij + u_i − v_j ≥ 0 with equality on the support of the plan.
/// Useful for optimality certificates in tests and diagnostics.
pub fn solve_exact_with_potentials(
    cost: &DMatrix<f64>,
) -> Result<(TransportPlan, f64, Vec<f64>, Vec<f64>)> {
    let (r, c) = cost.shape();
    if r == 0 || c == 0 {
        return Err(TwiError::Shape("cost matrix must be nonempty".into()));
    }
    if cost.iter().any(|x| !x.is_finite()) {
        return Err(TwiError::Config("cost matrix contains non-finite entries".into()));
    }
    // Scale masses to integers (each source ships c units, each sink takes r)
    // so simplex flows stay exact; divide back at the end.
    let row_major: Vec<f64> = (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| cost[(i, j)]).collect();
    let supplies = vec![c as f64; r];
    let demands = vec![r as f64; c];
    let sol = network_simplex::solve_transportation(&row_major, r, c, &supplies, &demands)?;
    let scale = (r * c) as f64;
    let matrix = DMatrix::from_fn(r, c, |i, j| sol.flow[i * c + j] / scale);
    let plan = TransportPlan::from_matrix(matrix);
    Ok((plan, sol.cost / scale, sol.row_potentials, sol.col_potentials))
}

/// Exact optimal-transport cost between uniform measures on two sorted
/// families of scalars, via the monotone (quantile) coupling; exact for the
/// convex ground costs |a−b|^k, k ≥ 1.
pub fn solve_1d_monotone(cost_order: f64, a: &[f64], b: &[f64]) -> Result<f64> {
    if !(cost_order >= 1.0) {
        return Err(TwiError::Config(format!("cost order must be >= 1, got {cost_order}")));
    }
    if a.is_empty() || b.is_empty() {
        return Err(TwiError::Shape("supports must be nonempty".into()));
    }
    for (name, xs) in [("a", a), ("b", b)] {
        if xs.windows(2).any(|w| w[0] > w[1]) {
            return Err(TwiError::Config(format!("support {name} is not sorted ascending")));
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(TwiError::Config(format!("support {name} contains non-finite values")));
        }
    }
    let r = a.len();
    let c = b.len();
    // March through both supports in integer mass units of 1/(r·c): point
    // a_i holds c units, point b_j holds r units.
    let mut i = 0usize;
    let mut j = 0usize;
    let mut rem_a = c as u64;
    let mut rem_b = r as u64;
    let mut total = 0.0;
    loop {
        let m = rem_a.min(rem_b);
        let d = (a[i] - b[j]).abs();
        let ground = if cost_order == 2.0 { d * d } else { d.powf(cost_order) };
        total += m as f64 * ground;
        rem_a -= m;
        rem_b -= m;
        if rem_a == 0 {
            i += 1;
            if i == r {
                break;
            }
            rem_a = c as u64;
        }
        if rem_b == 0 {
            j += 1;
            if j == c {
                break;
            }
            rem_b = r as u64;
        }
    }
    Ok(total / (r * c) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_cost(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(0.0..5.0))
    }

    /// Brute-force optimum over permutation couplings; exact for r = c with
    /// uniform marginals because those are the vertices of the Birkhoff
    /// polytope.
    fn permutation_optimum(cost: &DMatrix<f64>) -> f64 {
        let n = cost.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let total: f64 = p.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
            best = best.min(total);
        });
        best / n as f64
    }

    fn permute(xs: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == xs.len() {
            visit(xs);
            return;
        }
        for i in k..xs.len() {
            xs.swap(k, i);
            permute(xs, k + 1, visit);
            xs.swap(k, i);
        }
    }

    #[test]
    fn trivial_single_coupling() {
        let cost = DMatrix::from_row_slice(1, 1, &[5.0]);
        let (plan, value) = solve_exact(&cost).unwrap();
        assert_eq!(plan.matrix[(0, 0)], 1.0);
        assert_eq!(value, 5.0);
    }

    #[test]
    fn zero_cost_matching_is_used() {
        let cost = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (plan, value) = solve_exact(&cost).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(plan.matrix[(0, 0)], 0.5);
        assert_eq!(plan.matrix[(1, 1)], 0.5);
        assert_eq!(plan.matrix[(0, 1)], 0.0);
    }

    #[test]
    fn matches_permutation_enumeration_on_square_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = rng.gen_range(2..=6);
            let cost = random_cost(&mut rng, n, n);
            let (_, value) = solve_exact(&cost).unwrap();
            let oracle = permutation_optimum(&cost);
            assert!((value - oracle).abs() < 1e-10, "{value} vs {oracle}");
        }
    }

    #[test]
    fn cost_shifts_by_alpha_under_constant_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let r = rng.gen_range(2..10);
            let c = rng.gen_range(2..10);
            let cost = random_cost(&mut rng, r, c);
            let alpha = rng.gen_range(0.0..3.0);
            let shifted = cost.map(|x| x + alpha);
            let (_, v0) = solve_exact(&cost).unwrap();
            let (_, v1) = solve_exact(&shifted).unwrap();
            assert!((v1 - (v0 + alpha)).abs() < 1e-10);
        }
    }

    #[test]
    fn monotone_oracle_agrees_with_exact_on_scalar_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &k in &[1.0, 2.0, 3.0] {
            for _ in 0..10 {
                let r = rng.gen_range(1..9);
                let c = rng.gen_range(1..9);
                let mut a: Vec<f64> = (0..r).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let mut b: Vec<f64> = (0..c).map(|_| rng.gen_range(-3.0..3.0)).collect();
                a.sort_by(|x, y| x.partial_cmp(y).unwrap());
                b.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let cost = DMatrix::from_fn(r, c, |i, j| (a[i] - b[j]).abs().powf(k));
                let (_, exact) = solve_exact(&cost).unwrap();
                let monotone = solve_1d_monotone(k, &a, &b).unwrap();
                assert!((exact - monotone).abs() < 1e-10, "k={k}: {exact} vs {monotone}");
            }
        }
    }

    #[test]
    fn monotone_oracle_basics() {
        assert_eq!(solve_1d_monotone(2.0, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(solve_1d_monotone(2.0, &[0.0], &[2.0]).unwrap(), 4.0);
        assert!(solve_1d_monotone(2.0, &[2.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn plans_are_feasible_for_random_rectangles() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let r = rng.gen_range(1..30);
            let c = rng.gen_range(1..30);
            let cost = random_cost(&mut rng, r, c);
            let (plan, _) = solve_exact(&cost).unwrap();
            assert!(plan.feasibility_error() < 1e-12);
            assert!(plan.matrix.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn non_finite_cost_is_rejected() {
        let cost = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(solve_exact(&cost), Err(TwiError::Config(_))));
    }

    #[test]
    fn exact_cost_equals_plan_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cost = random_cost(&mut rng, 13, 9);
        let (plan, value) = solve_exact(&cost).unwrap();
        assert!((plan.cost_against(&cost) - value).abs() < 1e-12);
    }
}
