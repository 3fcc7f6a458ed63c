//! Identification analysis for a stationary two-state Markov chain whose
//! observations are thinned on a periodic grid.
//!
//! Setting: a {0,1}-valued chain with transition probabilities
//! `p = P(x_t = 1 | x_{t-1} = 0)` and `q = P(x_t = 0 | x_{t-1} = 1)` is
//! observed except that every `k1`-th entry is missing before the cut-off
//! and every `k2`-th entry after it. A periodic imputation rule fills a
//! missing slot with 1 with probability `a` when the previous state is 1
//! and with probability `b` when it is 0. Matching the two-dimensional
//! marginals of the imputed series across the cut-off produces a linear
//! system in `(a1, b1, a2, b2)`; this module computes the implied
//! marginals and solves that system in closed form.

use crate::error::{Result, TwiError};

/// A two-state chain together with the missing-data cadences on each side
/// of the cut-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovScenario {
    /// Transition probability P(x_t = 1 | x_{t-1} = 0).
    pub p: f64,
    /// Transition probability P(x_t = 0 | x_{t-1} = 1).
    pub q: f64,
    /// Every `k1`-th observation is missing before the cut-off.
    pub k1: u32,
    /// Every `k2`-th observation is missing after the cut-off.
    pub k2: u32,
}

impl MarkovScenario {
    pub fn new(p: f64, q: f64, k1: u32, k2: u32) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) || !(q > 0.0 && q < 1.0) {
            return Err(TwiError::Config(format!(
                "transition probabilities must lie strictly between 0 and 1, got p = {p}, q = {q}"
            )));
        }
        if k1 <= 2 || k2 <= 2 {
            return Err(TwiError::Config(format!(
                "cadences must exceed 2, got k1 = {k1}, k2 = {k2}"
            )));
        }
        Ok(Self { p, q, k1, k2 })
    }

    /// Stationary probability of state 0.
    pub fn lambda1(&self) -> f64 {
        self.q / (self.p + self.q)
    }

    /// Stationary probability of state 1.
    pub fn lambda2(&self) -> f64 {
        self.p / (self.p + self.q)
    }

    /// Stationary two-dimensional marginal of the fully observed chain,
    /// as probabilities of (x_t, x_{t-1}) = (1,1), (1,0), (0,1), (0,0).
    pub fn true_marginal(&self) -> [f64; 4] {
        let l1 = self.lambda1();
        let l2 = self.lambda2();
        [
            l2 * (1.0 - self.q),
            l1 * self.p,
            l2 * self.q,
            l1 * (1.0 - self.p),
        ]
    }
}

/// Two-dimensional marginal of the imputed series on one side of the
/// cut-off, as probabilities of (w_t, w_{t-1}) = (1,1), (1,0), (0,1),
/// (0,0). `a` and `b` are the imputation parameters (probability of
/// filling a 1 after a 1, resp. after a 0) and `kk` the cadence; a
/// fraction 1/kk of the pairs involves an imputed value, the rest follow
/// the chain.
pub fn implied_marginal(s: &MarkovScenario, a: f64, b: f64, kk: u32) -> [f64; 4] {
    let l1 = s.lambda1();
    let l2 = s.lambda2();
    let imputed = 1.0 / f64::from(kk);
    let observed = 1.0 - imputed;
    [
        observed * l2 * (1.0 - s.q) + imputed * l2 * a,
        observed * l1 * s.p + imputed * l1 * b,
        observed * l2 * s.q + imputed * l2 * (1.0 - a),
        observed * l1 * (1.0 - s.p) + imputed * l1 * (1.0 - b),
    ]
}

/// Solution set of the marginal-matching equations across the cut-off.
#[derive(Debug, Clone, PartialEq)]
pub enum IdentificationOutcome {
    /// Stability (a1 = a2, b1 = b2) with distinct cadences pins the
    /// parameters down to the chain's own transition structure.
    Unique { a: f64, b: f64 },
    /// Equal cadences: every stable pair (a, b) matches the marginals, so
    /// the chain parameters cannot be recovered.
    NonIdentified,
    /// Without stability each equation only ties the two sides together
    /// along an affine line: a1 = slope * a2 + intercept_a and
    /// b1 = slope * b2 + intercept_b.
    Family {
        slope: f64,
        intercept_a: f64,
        intercept_b: f64,
    },
}

impl std::fmt::Display for IdentificationOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IdentificationOutcome::Unique { a, b } => {
                write!(f, "unique solution: a = {a}, b = {b}")
            }
            IdentificationOutcome::NonIdentified => {
                write!(f, "non-identified: any a1 = a2, b1 = b2 matches the marginals")
            }
            IdentificationOutcome::Family {
                slope,
                intercept_a,
                intercept_b,
            } => write!(
                f,
                "solution family: a1 = {slope} * a2 + {intercept_a}, b1 = {slope} * b2 + {intercept_b}"
            ),
        }
    }
}

/// Solves the marginal-matching system across the cut-off.
///
/// Matching the four pair probabilities reduces to
/// `a1/k1 - a2/k2 = (1-q)(1/k1 - 1/k2)` and
/// `b1/k1 - b2/k2 = p(1/k1 - 1/k2)`. With `enforce_stability` the
/// parameters are required not to change at the cut-off (a1 = a2,
/// b1 = b2), which yields the unique solution (1-q, p) when the cadences
/// differ and leaves every stable pair feasible when they coincide.
/// Without stability the full affine solution family is returned.
pub fn solve_identification(s: &MarkovScenario, enforce_stability: bool) -> IdentificationOutcome {
    if !enforce_stability {
        let slope = f64::from(s.k1) / f64::from(s.k2);
        return IdentificationOutcome::Family {
            slope,
            intercept_a: (1.0 - s.q) * (1.0 - slope),
            intercept_b: s.p * (1.0 - slope),
        };
    }
    if s.k1 == s.k2 {
        return IdentificationOutcome::NonIdentified;
    }
    IdentificationOutcome::Unique {
        a: 1.0 - s.q,
        b: s.p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(actual: &[f64; 4], expected: &[f64; 4], tol: f64) {
        for (x, y) in actual.iter().zip(expected) {
            assert!(
                (x - y).abs() < tol,
                "marginals differ: {actual:?} vs {expected:?}"
            );
        }
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(MarkovScenario::new(0.0, 0.5, 3, 5).is_err());
        assert!(MarkovScenario::new(0.5, 1.0, 3, 5).is_err());
        assert!(MarkovScenario::new(0.5, 0.5, 2, 5).is_err());
        assert!(MarkovScenario::new(0.5, 0.5, 5, 2).is_err());
        assert!(MarkovScenario::new(0.5, 0.5, 3, 3).is_ok());
    }

    #[test]
    fn stationary_probabilities_sum_to_one() {
        let s = MarkovScenario::new(0.37, 0.82, 4, 7).unwrap();
        assert!((s.lambda1() + s.lambda2() - 1.0).abs() < 1e-15);
        assert!((s.lambda1() - 0.82 / 1.19).abs() < 1e-15);
    }

    #[test]
    fn correctly_calibrated_parameters_reproduce_the_true_marginal() {
        let s = MarkovScenario::new(0.3, 0.2, 3, 5).unwrap();
        let expected = s.true_marginal();
        let l1 = s.lambda1();
        let l2 = s.lambda2();
        assert_close(
            &expected,
            &[l2 * 0.8, l1 * 0.3, l2 * 0.2, l1 * 0.7],
            1e-15,
        );
        for kk in [s.k1, s.k2] {
            let implied = implied_marginal(&s, 1.0 - s.q, s.p, kk);
            assert_close(&implied, &expected, 1e-12);
        }
    }

    #[test]
    fn implied_marginal_entries_sum_to_one() {
        let s = MarkovScenario::new(0.3, 0.2, 3, 5).unwrap();
        for &(a, b) in &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.37, 0.91), (1.0, 1.0)] {
            for kk in [3, 5, 11] {
                let m = implied_marginal(&s, a, b, kk);
                let total: f64 = m.iter().sum();
                assert!((total - 1.0).abs() < 1e-12, "sum {total} for ({a}, {b})");
                assert!(m.iter().all(|x| *x >= 0.0));
            }
        }
    }

    #[test]
    fn symmetric_chain_with_huge_cadence_approaches_uniform() {
        let s = MarkovScenario::new(0.5, 0.5, 3, 5).unwrap();
        for &(a, b) in &[(0.0, 1.0), (1.0, 0.0), (0.37, 0.91)] {
            let m = implied_marginal(&s, a, b, 1_000_000);
            assert_close(&m, &[0.25, 0.25, 0.25, 0.25], 1e-5);
        }
    }

    #[test]
    fn stability_with_distinct_cadences_recovers_the_chain() {
        let s = MarkovScenario::new(0.3, 0.2, 3, 5).unwrap();
        match solve_identification(&s, true) {
            IdentificationOutcome::Unique { a, b } => {
                assert!((a - 0.8).abs() < 1e-15);
                assert!((b - 0.3).abs() < 1e-15);
            }
            other => panic!("expected a unique solution, got {other:?}"),
        }
    }

    #[test]
    fn equal_cadences_are_non_identified() {
        let s = MarkovScenario::new(0.3, 0.2, 4, 4).unwrap();
        assert_eq!(
            solve_identification(&s, true),
            IdentificationOutcome::NonIdentified
        );
        // Any stable pair indeed matches the marginals across the cut-off.
        for &(a, b) in &[(0.1, 0.9), (0.5, 0.5), (0.99, 0.01)] {
            let before = implied_marginal(&s, a, b, s.k1);
            let after = implied_marginal(&s, a, b, s.k2);
            assert_close(&before, &after, 1e-15);
        }
    }

    #[test]
    fn the_unconstrained_family_matches_marginals_across_cadences() {
        let s = MarkovScenario::new(0.3, 0.2, 3, 5).unwrap();
        let (slope, intercept_a, intercept_b) = match solve_identification(&s, false) {
            IdentificationOutcome::Family {
                slope,
                intercept_a,
                intercept_b,
            } => (slope, intercept_a, intercept_b),
            other => panic!("expected a solution family, got {other:?}"),
        };
        for &(a2, b2) in &[(0.0, 0.0), (1.0, 1.0), (0.25, 0.75), (0.9, 0.1)] {
            let a1 = slope * a2 + intercept_a;
            let b1 = slope * b2 + intercept_b;
            let before = implied_marginal(&s, a1, b1, s.k1);
            let after = implied_marginal(&s, a2, b2, s.k2);
            assert_close(&before, &after, 1e-12);
        }
        // The stable solution lies on the family line.
        let a = 1.0 - s.q;
        let b = s.p;
        assert!((slope * a + intercept_a - a).abs() < 1e-12);
        assert!((slope * b + intercept_b - b).abs() < 1e-12);
    }

    #[test]
    fn random_scenarios_identify_the_chain_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(20240212);
        for _ in 0..100 {
            let p = rng.gen_range(0.01..0.99);
            let q = rng.gen_range(0.01..0.99);
            let k1 = rng.gen_range(3u32..12);
            let mut k2 = rng.gen_range(3u32..12);
            while k2 == k1 {
                k2 = rng.gen_range(3u32..12);
            }
            let s = MarkovScenario::new(p, q, k1, k2).unwrap();
            let (a, b) = match solve_identification(&s, true) {
                IdentificationOutcome::Unique { a, b } => (a, b),
                other => panic!("expected a unique solution, got {other:?}"),
            };
            assert!((a - (1.0 - q)).abs() < 1e-12);
            assert!((b - p).abs() < 1e-12);
            let expected = s.true_marginal();
            for kk in [k1, k2] {
                let implied = implied_marginal(&s, a, b, kk);
                assert_close(&implied, &expected, 1e-12);
            }
        }
    }
}
