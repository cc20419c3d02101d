//! Property-based invariants for the partition utilities, the response
//! function, and the solver.

use proptest::prelude::*;

use cbi_core::hfix::HContext;
use cbi_core::model::{IntervalPartition, Observation, Placement};
use cbi_core::oracle::beta_predictive;
use cbi_core::solver::{
    build_conservative_prior, objective_value, solve_general, worst_case_phi, Branch,
    SolverOptions,
};

/// Strictly increasing interior breakpoints in (1e-6, 0.3], separated by at
/// least a factor 1.5.
fn interior_breakpoints(count: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-6.0..-0.53f64, count).prop_filter_map(
        "breakpoints too close",
        |exps| {
            let mut bps: Vec<f64> = exps.iter().map(|e| 10f64.powf(*e)).collect();
            bps.sort_by(f64::total_cmp);
            bps.windows(2).all(|w| w[1] > w[0] * 1.5).then_some(bps)
        },
    )
}

fn uniform_consistent(count: usize) -> impl Strategy<Value = IntervalPartition> {
    interior_breakpoints(count).prop_map(|interior| {
        let mut bps = vec![0.0];
        bps.extend(interior);
        bps.push(1.0);
        IntervalPartition::uniform_consistent(&bps).unwrap()
    })
}

/// Round-trip tolerance floored at what one ulp of the root can resolve:
/// `|h'(x)| ulp(x)`, with `|h'| = phi * (log-derivative bound)`.
fn root_tolerance(c: &HContext, x: f64, phi: f64, floor: f64) -> f64 {
    let (m, k, r) = (c.m() as f64, c.k(), c.r());
    let dlog = m / (1.0 - x).max(f64::MIN_POSITIVE)
        + (r + m + k) / (x * (r + m + k) - r).abs().max(f64::MIN_POSITIVE)
        + (r + k) / (x * (r + k) - r).abs().max(f64::MIN_POSITIVE);
    (8.0 * phi * dlog * x * f64::EPSILON).max(floor * phi.max(1.0))
}

proptest! {
    /// Validated partitions keep their masses in (0,1) summing to 1, with
    /// strictly increasing breakpoints.
    #[test]
    fn partition_invariants(p in (2usize..=4).prop_flat_map(uniform_consistent)) {
        let sum: f64 = p.masses().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        for &m in p.masses() {
            prop_assert!(m > 0.0 && m < 1.0);
        }
        prop_assert!(p.breakpoints().windows(2).all(|w| w[1] > w[0]));
    }

    /// Refinement preserves the mass sum and uniform-consistency.
    #[test]
    fn refine_preserves_uniform_consistency(
        p in (2usize..=4).prop_flat_map(uniform_consistent),
        factor in 2usize..=5,
    ) {
        let r = p.refine(factor).unwrap();
        prop_assert_eq!(r.len(), p.len() * factor);
        let sum: f64 = r.masses().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        for i in 0..r.len() {
            let len = r.upper(i) - r.lower(i);
            prop_assert!((r.mass(i) - len).abs() <= 1e-12);
        }
    }

    /// Branch inversion round-trips through evaluation on both monotone
    /// branches.
    #[test]
    fn h_branch_round_trips(
        m in 1u32..=200,
        k in 1.0..1e4f64,
        r in 0.5..50.0f64,
        phi in 0.01..1.0f64,
    ) {
        let c = HContext::new(m, k, r).unwrap();
        // The achievable upper-branch residual is |h'(root)| ulp(root),
        // roughly eps (r+k) / ((1-pole)^m m); keep it two orders below the
        // asserted tolerance.
        let mf = m as f64;
        prop_assume!(mf * (-c.pole()).ln_1p() + mf.ln() - (r + k).ln() > -10.7);
        let upper = c.invert_upper(phi).unwrap();
        prop_assert!(upper > c.pole());
        let tol = root_tolerance(&c, upper, phi, 1e-10);
        prop_assert!((c.eval(upper).unwrap() - phi).abs() <= tol);
        let lower = c.invert_lower(phi).unwrap();
        prop_assert!(lower <= c.lower_zero());
        let tol = root_tolerance(&c, lower, phi, 1e-12);
        prop_assert!((c.eval(lower).unwrap() - phi).abs() <= tol);
    }

    /// The uniform-prior posterior predictive is strictly monotone in each
    /// count argument.
    #[test]
    fn beta_predictive_monotone(m in 1u32..=500, k in 0.0..1e5f64, r in 0.0..100.0f64) {
        let base = beta_predictive(m, k, r);
        prop_assert!(base > 0.0 && base < 1.0);
        prop_assert!(beta_predictive(m, k + 1.0, r) > base);
        prop_assert!(beta_predictive(m, k, r + 1.0) < base);
        prop_assert!(beta_predictive(m + 1, k, r) < base);
    }

    /// The worst case over the constrained prior set can never beat the
    /// uniform prior when the uniform prior satisfies the constraints.
    #[test]
    fn worst_case_dominated_by_uniform_member(
        p in (2usize..=4).prop_flat_map(uniform_consistent),
        r in 1.0..50.0f64,
        k in 1.0..1e4f64,
        m in 1u32..=300,
    ) {
        let obs = Observation::new(r, k).unwrap();
        let phi = worst_case_phi(&p, &obs, m, &SolverOptions::default()).unwrap();
        let baseline = beta_predictive(m, k, r);
        prop_assert!(phi <= baseline + 1e-12, "{phi} > {baseline}");
    }

    /// The assembled worst-case prior reproduces the infimum when read back
    /// as a placement, with unit total mass and ordered atoms.
    #[test]
    fn prior_reproduces_infimum(
        p in (3usize..=4).prop_flat_map(uniform_consistent),
        r in 1.0..50.0f64,
        k in 10.0..1e4f64,
        m in 1u32..=100,
    ) {
        let c = HContext::new(m, k, r).unwrap();
        let mf = m as f64;
        prop_assume!(mf * (-c.pole()).ln_1p() + mf.ln() - (r + k).ln() > -10.7);
        let obs = Observation::new(r, k).unwrap();
        let sol = solve_general(&p, &obs, m, &SolverOptions::default()).unwrap();
        prop_assume!(sol.branch != Branch::DegenerateZero);
        let prior = build_conservative_prior(&sol, &p, &obs, m).unwrap();
        prop_assert!((prior.total_mass() - 1.0).abs() <= 1e-12);
        let locs: Vec<f64> = prior.atoms.iter().map(|a| a.location).collect();
        prop_assert!(locs.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(prior.atoms.len() <= p.len() + 1);
    }

    /// Placing every mass at one common admissible point collapses the
    /// objective to the single-point posterior predictive.
    #[test]
    fn objective_common_point_collapses(
        x in 0.01..0.99f64,
        r in 0.0..20.0f64,
        k in 0.0..100.0f64,
        m in 1u32..=50,
    ) {
        let p = IntervalPartition::new(&[0.0, x, 1.0], &[0.5, 0.5], false).unwrap();
        let placement = Placement::new(&p, vec![x, x]).unwrap();
        let obs = Observation::new(r, k).unwrap();
        let phi = objective_value(&p, &placement, &obs, m).unwrap();
        let expect = (m as f64 * (-x).ln_1p()).exp();
        prop_assert!((phi - expect).abs() <= 1e-12 * expect.max(1e-300));
    }
}
