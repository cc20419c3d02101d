//! Worst-case posterior predictive solver.
//!
//! Given a validated partition, observed failures/successes `(r, k)` and a
//! future-demand count `m`, finds the infimum `phi*` of
//!
//! ```text
//!   sum_i p_i x_i^r (1-x_i)^(m+k)  /  sum_i p_i x_i^r (1-x_i)^k
//! ```
//!
//! over all placements `x_i` in the interval closures, together with the
//! attractor/repeller pair `(y*, y**)` on the response function `h` and the
//! discrete prior attaining the infimum. All likelihood terms are computed in
//! log space so that demand counts up to ~1e7 never underflow.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hfix::{HContext, HfixError};
use crate::model::{IntervalPartition, ModelError, Observation, Placement};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid regime: {0}")]
    InvalidRegime(&'static str),
    #[error("iteration did not converge after {iterations} steps (last phi {last_phi}, residual {residual})")]
    NoConvergence {
        iterations: usize,
        last_phi: f64,
        residual: f64,
    },
    #[error("all denominator terms vanish for this placement")]
    ZeroDenominator,
    #[error("prior reproduction check failed: objective {got} vs phi* {expected}")]
    InconsistentSolution { expected: f64, got: f64 },
    #[error(
        "the attractor for phi* = {phi_star} lies between the pole and the guard band edge \
         and is not representable in double precision"
    )]
    AttractorUnrepresentable { phi_star: f64 },
    #[error("objective underflowed double precision")]
    ObjectiveUnderflow,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hfix(#[from] HfixError),
}

/// Which functional form attains the minimum: mass `p_{j1}` at its lower
/// endpoint (`Phi1`) or at its upper/attractor location (`Phi2`). Exact ties
/// report `Phi1`. `DegenerateZero` marks configurations whose infimum is 0
/// regardless of the observation counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Phi1,
    Phi2,
    DegenerateZero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointSolution {
    /// The worst-case posterior predictive probability of `m` failure-free
    /// future demands.
    pub phi_star: f64,
    /// Attractor location: the upper-branch root of `h = phi*`.
    pub y_star: f64,
    /// Repeller location: the lower-branch root of `h = phi*` (absent when
    /// r = 0, where the lower branch collapses).
    pub y_star_star: Option<f64>,
    /// 0-based interval index containing `y**`.
    pub j1: Option<usize>,
    /// 0-based interval index containing `y*` (lower index on a shared
    /// breakpoint).
    pub j2: usize,
    pub branch: Branch,
    /// Map applications performed by the driver.
    pub iterations: usize,
    /// `|h(y*) - phi*|` for converged solutions; the last step displacement
    /// otherwise.
    pub residual: f64,
    pub converged: bool,
}

/// An atom of the worst-case prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorAtom {
    pub location: f64,
    pub mass: f64,
}

/// The discrete prior attaining `phi*`; feasible as a limit of priors in the
/// constrained set (atoms may sit on open interval endpoints).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePrior {
    pub atoms: Vec<PriorAtom>,
}

impl DiscretePrior {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative stopping tolerance on successive iterates.
    pub tol: f64,
    /// Cap on map applications.
    pub max_iter: usize,
    /// Starting value `phi_hat_1` in (0, 1].
    pub start: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 200,
            start: 1.0,
        }
    }
}

/// One recorded step of the parametric iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    /// 1-based step number.
    pub t: usize,
    /// Parameter value the placement was computed at.
    pub phi_hat: f64,
    /// The minimizing placement for `phi_hat`.
    pub placement: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateTrace {
    pub steps: Vec<TraceStep>,
    pub converged: bool,
    /// Whether the sequence was nonincreasing from the second value on (it
    /// may jump up once when started below the fixed point).
    pub monotone_after_first: bool,
}

// ---------------------------------------------------------------------------
// Log-space objective machinery
// ---------------------------------------------------------------------------

/// `ln(p x^r (1-x)^e)` with the conventions `x^0 = 1` at `x = 0` and
/// `(1-x)^0 = 1` at `x = 1`.
fn log_term(log_p: f64, x: f64, r: f64, e: f64) -> f64 {
    let mut t = log_p;
    if r > 0.0 {
        if x == 0.0 {
            return f64::NEG_INFINITY;
        }
        t += r * x.ln();
    }
    if e > 0.0 {
        if x == 1.0 {
            return f64::NEG_INFINITY;
        }
        t += e * (-x).ln_1p();
    }
    t
}

/// `exp(LSE(num) - LSE(den))` with a shift shared between the two sums, so
/// the ratio depends on the term logs only through differences: adding a
/// common constant to every term leaves the result bit-identical.
pub(crate) fn log_space_ratio(num: &[f64], den: &[f64]) -> Result<f64, SolverError> {
    let shift = den.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(SolverError::ZeroDenominator);
    }
    let sn: f64 = num.iter().map(|&t| (t - shift).exp()).sum();
    let sd: f64 = den.iter().map(|&t| (t - shift).exp()).sum();
    Ok(sn / sd)
}

fn objective_raw(
    p: &IntervalPartition,
    xs: &[f64],
    r: f64,
    k: f64,
    m: u32,
) -> Result<f64, SolverError> {
    let mk = m as f64 + k;
    let mut num = Vec::with_capacity(xs.len());
    let mut den = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let lp = p.mass(i).ln();
        num.push(log_term(lp, x, r, mk));
        den.push(log_term(lp, x, r, k));
    }
    log_space_ratio(&num, &den)
}

/// Posterior predictive probability of `m` failure-free demands under the
/// prior that places each interval's mass at the given position.
pub fn objective_value(
    partition: &IntervalPartition,
    placement: &Placement,
    obs: &Observation,
    m: u32,
) -> Result<f64, SolverError> {
    objective_raw(partition, placement.positions(), obs.r, obs.k, m)
}

// ---------------------------------------------------------------------------
// Parametric map
// ---------------------------------------------------------------------------

/// The per-interval parametric term `q(x) = p x^r (1-x)^k ((1-x)^m - phi)`
/// as a comparable (sign, log magnitude) pair.
fn q_score(log_p: f64, x: f64, r: f64, k: f64, m: u32, phi: f64) -> (i8, f64) {
    if (r > 0.0 && x == 0.0) || (k > 0.0 && x == 1.0) {
        return (0, f64::NEG_INFINITY);
    }
    let one_minus_pow = if x >= 1.0 {
        0.0
    } else {
        (m as f64 * (-x).ln_1p()).exp()
    };
    let diff = one_minus_pow - phi;
    if diff == 0.0 {
        return (0, f64::NEG_INFINITY);
    }
    let mag = log_term(log_p, x, r, k) + diff.abs().ln();
    (if diff > 0.0 { 1 } else { -1 }, mag)
}

/// Strict "q(a) < q(b)" on score pairs.
fn q_less(a: (i8, f64), b: (i8, f64)) -> bool {
    if a.0 != b.0 {
        return a.0 < b.0;
    }
    match a.0 {
        -1 => a.1 > b.1,
        1 => a.1 < b.1,
        _ => false,
    }
}

struct Setup<'a> {
    partition: &'a IntervalPartition,
    r: f64,
    k: f64,
    m: u32,
    /// Leading interval count whose mass is pinned at x = 0 (their terms
    /// vanish when r > 0; the minimizing prior always places them there).
    pinned: usize,
}

impl Setup<'_> {
    /// Endpoint minimizing `q` over the interval closure; exact ties keep the
    /// lower endpoint.
    fn endpoint_argmin(&self, i: usize, phi: f64) -> f64 {
        let lp = self.partition.mass(i).ln();
        let lo = self.partition.lower(i);
        let hi = self.partition.upper(i);
        let q_lo = q_score(lp, lo, self.r, self.k, self.m, phi);
        let q_hi = q_score(lp, hi, self.r, self.k, self.m, phi);
        if q_less(q_hi, q_lo) {
            hi
        } else {
            lo
        }
    }

    /// Attractor root of `h = phi_hat`, clamped to the guard band edge when
    /// the root falls between it and the pole (`h` blows up there and no
    /// representable point carries the exact root).
    fn sink_for(&self, h: &HContext, phi_hat: f64) -> Result<(f64, bool), SolverError> {
        match h.invert_upper(phi_hat) {
            Ok(x) => Ok((x, false)),
            Err(HfixError::OutOfBranchRange { .. }) => Ok((h.upper_branch_floor(), true)),
            Err(e) => Err(e.into()),
        }
    }

    /// One application of the parametric map: place the attractor root of
    /// `h = phi_hat` in its interval, all other masses at their minimizing
    /// endpoints (pinned intervals at 0), and return the objective there.
    ///
    /// The attractor's own interval still compares the attractor against its
    /// endpoint minimum: when the interval straddles the pole, its lower
    /// endpoint (on the repeller side) can beat the attractor, which is the
    /// all-lower-endpoints functional form.
    fn step(&self, h: &HContext, phi_hat: f64, xs: &mut [f64]) -> Result<f64, SolverError> {
        let (sink, _) = self.sink_for(h, phi_hat)?;
        let j2 = self.partition.interval_containing(sink);
        for i in 0..self.partition.len() {
            xs[i] = if i < self.pinned {
                0.0
            } else if i == j2 {
                let lp = self.partition.mass(i).ln();
                let endpoint = self.endpoint_argmin(i, phi_hat);
                let q_endpoint = q_score(lp, endpoint, self.r, self.k, self.m, phi_hat);
                let q_sink = q_score(lp, sink, self.r, self.k, self.m, phi_hat);
                if q_less(q_endpoint, q_sink) {
                    endpoint
                } else {
                    sink
                }
            } else {
                self.endpoint_argmin(i, phi_hat)
            };
        }
        objective_raw(self.partition, xs, self.r, self.k, self.m)
    }
}

struct DriveOutcome {
    phi: f64,
    iterations: usize,
    converged: bool,
    last_delta: f64,
}

/// Plain steps taken before the driver starts probing its bracket.
const PURE_STEPS: usize = 5;
/// Relative bracket width accepted as pinning the fixed point. Below this
/// the sign of the map displacement drowns in evaluation round-off for
/// slowly contracting maps, so no method driven by the map can localize the
/// fixed point further.
const BRACKET_REL: f64 = 1e-12;

/// Fixed-point driver.
///
/// Runs the parametric iteration from `opts.start` and accepts per the
/// successive-iterate rule. Every map output is an objective value, hence an
/// upper bound on `phi*`, and a map output above its input certifies the
/// input lies below `phi*`; the driver maintains that bracket. Plain
/// iteration contracts at rate `1 - m/(r+m+k)` while the attractor crawls
/// through a mass-dominating interval, which can dwarf any iteration budget,
/// so after a few plain steps the driver probes the bracket geometrically
/// (log-space bisection on the displacement sign) and accepts when either
/// the successive-iterate rule fires or the bracket width certifies the
/// fixed point to `BRACKET_REL`.
fn drive(setup: &Setup, h: &HContext, opts: &SolverOptions) -> Result<DriveOutcome, SolverError> {
    let n = setup.partition.len();
    let mut xs = vec![0.0; n];
    let mut phi = opts.start;
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut iterations = 0usize;
    let mut last_delta = f64::INFINITY;

    while iterations < opts.max_iter {
        let next = setup.step(h, phi, &mut xs)?;
        iterations += 1;
        if next <= f64::MIN_POSITIVE {
            return Err(SolverError::ObjectiveUnderflow);
        }
        if next < hi {
            hi = next;
        }
        if next > phi && phi > lo {
            lo = phi;
        }
        last_delta = (next - phi).abs();
        if last_delta <= opts.tol * next.abs().max(1.0) {
            return Ok(DriveOutcome {
                phi: next,
                iterations,
                converged: true,
                last_delta,
            });
        }
        if lo > 0.0 && hi - lo <= BRACKET_REL.max(0.1 * opts.tol) * hi.max(1.0) {
            return Ok(DriveOutcome {
                phi: hi,
                iterations,
                converged: true,
                last_delta: hi - lo,
            });
        }
        // Keep stepping plainly while each step makes fast progress AND
        // lowers the running upper bound; a probe that bounced below the
        // fixed point maps back above it and must not restart the descent.
        let fast = last_delta >= 0.25 * phi.max(next) && next == hi;
        phi = if iterations < PURE_STEPS || fast {
            next
        } else if lo == 0.0 {
            // Exponential descent until some probe lands below phi*.
            hi * 1e-8
        } else {
            let mid = (0.5 * (lo.ln() + hi.ln())).exp();
            if mid > lo && mid < hi {
                mid
            } else {
                hi
            }
        };
    }
    Ok(DriveOutcome {
        phi: hi,
        iterations,
        converged: false,
        last_delta,
    })
}

// ---------------------------------------------------------------------------
// Canonical placements and solution assembly
// ---------------------------------------------------------------------------

/// Placement realizing one of the two candidate functional forms for r > 0:
/// pinned masses at 0; below the repeller interval at lower endpoints;
/// between repeller and attractor at upper endpoints; attractor interval at
/// `y*`; above it at lower endpoints. The repeller interval takes its lower
/// endpoint under `Phi1` and its upper (or `y*` when shared) under `Phi2`.
fn canonical_r_positive(
    p: &IntervalPartition,
    pinned: usize,
    j1: usize,
    j2: usize,
    y_star: f64,
    branch: Branch,
) -> Vec<f64> {
    let n = p.len();
    let mut xs = vec![0.0; n];
    for i in pinned..n {
        xs[i] = if i < j1 || i > j2 {
            p.lower(i)
        } else if i > j1 && i < j2 {
            p.upper(i)
        } else {
            0.0 // filled below
        };
    }
    if j2 >= pinned {
        xs[j2] = y_star;
    }
    if j1 >= pinned {
        xs[j1] = match branch {
            Branch::Phi1 => p.lower(j1),
            Branch::Phi2 => {
                if j1 < j2 {
                    p.upper(j1)
                } else {
                    y_star
                }
            }
            Branch::DegenerateZero => unreachable!(),
        };
    }
    xs
}

/// Placement realizing the r = 0 form: everything below the attractor at
/// upper endpoints, the attractor interval at `y*`, everything above at
/// lower endpoints.
fn canonical_no_failure(p: &IntervalPartition, j: usize, y_star: f64) -> Vec<f64> {
    let n = p.len();
    let mut xs = vec![0.0; n];
    for i in 0..n {
        xs[i] = if i < j {
            p.upper(i)
        } else if i > j {
            p.lower(i)
        } else {
            y_star
        };
    }
    xs
}

fn degenerate_zero_solution(n: usize) -> FixedPointSolution {
    FixedPointSolution {
        phi_star: 0.0,
        y_star: 1.0,
        y_star_star: None,
        j1: None,
        j2: n - 1,
        branch: Branch::DegenerateZero,
        iterations: 0,
        residual: 0.0,
        converged: true,
    }
}

/// Canonical two-branch evaluation at a driven value: smaller branch wins,
/// exact ties report `Phi1`.
struct CanonicalValue {
    phi_star: f64,
    branch: Branch,
    /// The attractor root was clamped to the guard band edge.
    clamped: bool,
}

fn canonical_value(
    p: &IntervalPartition,
    setup: &Setup,
    h: &HContext,
    phi_drive: f64,
) -> Result<CanonicalValue, SolverError> {
    if setup.r == 0.0 {
        let y_star = h.invert_upper(phi_drive)?;
        let j = p.interval_containing(y_star);
        let xs = canonical_no_failure(p, j, y_star);
        return Ok(CanonicalValue {
            phi_star: objective_raw(p, &xs, 0.0, setup.k, setup.m)?,
            branch: Branch::Phi1,
            clamped: false,
        });
    }
    let (y_star, clamped) = setup.sink_for(h, phi_drive)?;
    let j2 = p.interval_containing(y_star);
    let y_ss = h.invert_lower(phi_drive)?;
    let j1 = p.interval_containing(y_ss);
    let (branch, phi_star) = if j1 >= setup.pinned {
        let xs1 = canonical_r_positive(p, setup.pinned, j1, j2, y_star, Branch::Phi1);
        let xs2 = canonical_r_positive(p, setup.pinned, j1, j2, y_star, Branch::Phi2);
        let phi1 = objective_raw(p, &xs1, setup.r, setup.k, setup.m)?;
        let phi2 = objective_raw(p, &xs2, setup.r, setup.k, setup.m)?;
        if phi1 <= phi2 {
            (Branch::Phi1, phi1)
        } else {
            (Branch::Phi2, phi2)
        }
    } else {
        let xs = canonical_r_positive(p, setup.pinned, j1, j2, y_star, Branch::Phi1);
        (Branch::Phi1, objective_raw(p, &xs, setup.r, setup.k, setup.m)?)
    };
    Ok(CanonicalValue {
        phi_star,
        branch,
        clamped,
    })
}

fn check_finished(canonical: f64, outcome: &DriveOutcome) -> Result<(), SolverError> {
    let consistent = (canonical - outcome.phi).abs() <= 1e-9 * outcome.phi.max(1.0);
    if !(outcome.converged && consistent) {
        return Err(SolverError::NoConvergence {
            iterations: outcome.iterations,
            last_phi: canonical,
            residual: outcome.last_delta,
        });
    }
    Ok(())
}

fn finish_r_positive(
    p: &IntervalPartition,
    setup: &Setup,
    h: &HContext,
    outcome: DriveOutcome,
) -> Result<FixedPointSolution, SolverError> {
    let value = canonical_value(p, setup, h, outcome.phi)?;
    check_finished(value.phi_star, &outcome)?;
    // Re-anchor the roots on the canonical value; the attractor must be a
    // genuine representable root for the solution's identities to hold.
    let (y_star, clamped) = setup.sink_for(h, value.phi_star)?;
    if value.clamped || clamped {
        return Err(SolverError::AttractorUnrepresentable {
            phi_star: value.phi_star,
        });
    }
    let y_ss = h.invert_lower(value.phi_star)?;
    let residual = (h.eval(y_star)? - value.phi_star).abs();
    Ok(FixedPointSolution {
        phi_star: value.phi_star,
        y_star,
        y_star_star: Some(y_ss),
        j1: Some(p.interval_containing(y_ss)),
        j2: p.interval_containing(y_star),
        branch: value.branch,
        iterations: outcome.iterations,
        residual,
        converged: true,
    })
}

fn finish_no_failure(
    p: &IntervalPartition,
    setup: &Setup,
    h: &HContext,
    outcome: DriveOutcome,
) -> Result<FixedPointSolution, SolverError> {
    let value = canonical_value(p, setup, h, outcome.phi)?;
    check_finished(value.phi_star, &outcome)?;
    let y_star = h.invert_upper(value.phi_star)?;
    let residual = (h.eval(y_star)? - value.phi_star).abs();
    Ok(FixedPointSolution {
        phi_star: value.phi_star,
        y_star,
        y_star_star: None,
        j1: None,
        j2: p.interval_containing(y_star),
        branch: Branch::Phi1,
        iterations: outcome.iterations,
        residual,
        converged: true,
    })
}

// ---------------------------------------------------------------------------
// Public solvers
// ---------------------------------------------------------------------------

/// Solves the general regime r > 0, k > 0 on a partition without the
/// fault-free point mass.
///
/// With one or two intervals the infimum is 0 regardless of `k` (the first
/// interval's mass is forced to 0 and the rest can slide to 1), reported as
/// `DegenerateZero`. Three or more intervals give a positive fixed point.
pub fn solve_general(
    partition: &IntervalPartition,
    obs: &Observation,
    m: u32,
    opts: &SolverOptions,
) -> Result<FixedPointSolution, SolverError> {
    if partition.fault_free_mass_at_zero() {
        return Err(SolverError::InvalidRegime(
            "partition carries a fault-free point mass; use solve_fault_free",
        ));
    }
    if obs.r <= 0.0 {
        return Err(SolverError::InvalidRegime("r = 0; use solve_no_failure"));
    }
    if obs.k <= 0.0 {
        return Err(SolverError::InvalidRegime("k = 0 is not supported"));
    }
    check_opts(opts)?;
    let n = partition.len();
    if n <= 2 {
        return Ok(degenerate_zero_solution(n));
    }
    let h = HContext::new(m, obs.k, obs.r)?;
    let setup = Setup {
        partition,
        r: obs.r,
        k: obs.k,
        m,
        pinned: 1,
    };
    let outcome = drive(&setup, &h, opts)?;
    finish_r_positive(partition, &setup, &h, outcome)
}

/// Solves the no-failure regime (r = 0, k > 0): the fixed point couples
/// `phi* = (1-y*)^m (m+k)/k` with the endpoint form of the objective.
///
/// A single interval `[0, 1]` yields `phi* = 0` at `y* = 1`.
pub fn solve_no_failure(
    partition: &IntervalPartition,
    successes: f64,
    m: u32,
    opts: &SolverOptions,
) -> Result<FixedPointSolution, SolverError> {
    if successes.is_nan() || successes <= 0.0 {
        return Err(SolverError::InvalidRegime("k must be positive"));
    }
    check_opts(opts)?;
    let n = partition.len();
    if n == 1 {
        return Ok(degenerate_zero_solution(n));
    }
    let h = HContext::new(m, successes, 0.0)?;
    let setup = Setup {
        partition,
        r: 0.0,
        k: successes,
        m,
        pinned: 0,
    };
    let outcome = drive(&setup, &h, opts)?;
    finish_no_failure(partition, &setup, &h, outcome)
}

/// Solves partitions carrying the fault-free point mass at 0.
///
/// With r = 0 this is the no-failure fixed point with the first "interval"
/// collapsed to `{0}`. With r > 0 the point mass and the first genuine
/// interval's mass both pin to 0 and only the remaining intervals matter;
/// fewer than three genuine intervals leave `phi* = 0`.
pub fn solve_fault_free(
    partition: &IntervalPartition,
    obs: &Observation,
    m: u32,
    opts: &SolverOptions,
) -> Result<FixedPointSolution, SolverError> {
    if !partition.fault_free_mass_at_zero() {
        return Err(SolverError::InvalidRegime(
            "partition has no fault-free point mass",
        ));
    }
    if obs.k <= 0.0 {
        return Err(SolverError::InvalidRegime("k must be positive"));
    }
    if obs.r == 0.0 {
        return solve_no_failure(partition, obs.k, m, opts);
    }
    check_opts(opts)?;
    let n = partition.len();
    if n <= 3 {
        return Ok(degenerate_zero_solution(n));
    }
    let h = HContext::new(m, obs.k, obs.r)?;
    let setup = Setup {
        partition,
        r: obs.r,
        k: obs.k,
        m,
        pinned: 2,
    };
    let outcome = drive(&setup, &h, opts)?;
    finish_r_positive(partition, &setup, &h, outcome)
}

/// Regime dispatcher.
pub fn solve(
    partition: &IntervalPartition,
    obs: &Observation,
    m: u32,
    opts: &SolverOptions,
) -> Result<FixedPointSolution, SolverError> {
    if partition.fault_free_mass_at_zero() {
        solve_fault_free(partition, obs, m, opts)
    } else if obs.r == 0.0 {
        solve_no_failure(partition, obs.k, m, opts)
    } else {
        solve_general(partition, obs, m, opts)
    }
}

/// The infimum value alone, without the attractor/repeller pair.
///
/// Unlike [`solve`], this succeeds even when the attractor lies inside the
/// pole guard band (heavily failure-dominated observations): the value is
/// still accurate to the guard band width. Demand-budget searches probe
/// through such regimes on their way to the answer.
pub fn worst_case_phi(
    partition: &IntervalPartition,
    obs: &Observation,
    m: u32,
    opts: &SolverOptions,
) -> Result<f64, SolverError> {
    if obs.k <= 0.0 {
        return Err(SolverError::InvalidRegime("k must be positive"));
    }
    check_opts(opts)?;
    let n = partition.len();
    let pinned = pinned_count(partition, obs.r);
    if n - pinned < 2 {
        return Ok(0.0);
    }
    let h = HContext::new(m, obs.k, obs.r)?;
    let setup = Setup {
        partition,
        r: obs.r,
        k: obs.k,
        m,
        pinned,
    };
    let outcome = drive(&setup, &h, opts)?;
    let value = canonical_value(partition, &setup, &h, outcome.phi)?;
    check_finished(value.phi_star, &outcome)?;
    Ok(value.phi_star)
}

fn check_opts(opts: &SolverOptions) -> Result<(), SolverError> {
    let start_ok = opts.start > 0.0 && opts.start <= 1.0;
    let tol_ok = opts.tol > 0.0;
    if !start_ok || !tol_ok || opts.max_iter == 0 {
        return Err(SolverError::InvalidRegime(
            "solver options: start in (0,1], tol > 0, max_iter >= 1",
        ));
    }
    Ok(())
}

/// Number of leading intervals whose mass the minimizing prior pins at 0.
fn pinned_count(partition: &IntervalPartition, r: f64) -> usize {
    if r > 0.0 && partition.len() >= 2 {
        1 + usize::from(partition.fault_free_mass_at_zero())
    } else {
        0
    }
}

/// Assembles the discrete prior attaining `phi_star` from a solved fixed
/// point, and verifies that the objective under it reproduces `phi_star`.
///
/// Degenerate-zero solutions return the limiting prior (pinned masses at 0,
/// the remaining mass at 1); its objective is a limit, not evaluable, so no
/// reproduction check applies there.
pub fn build_conservative_prior(
    solution: &FixedPointSolution,
    partition: &IntervalPartition,
    obs: &Observation,
    m: u32,
) -> Result<DiscretePrior, SolverError> {
    let n = partition.len();
    let positions = match solution.branch {
        Branch::DegenerateZero => {
            // The infimum is approached with the last mass sliding to 1 and
            // every earlier mass pinned at 0.
            let pinned = pinned_count(partition, obs.r).min(n - 1);
            let mut xs = vec![0.0; n];
            for x in xs.iter_mut().skip(pinned) {
                *x = 1.0;
            }
            xs
        }
        _ if obs.r == 0.0 => canonical_no_failure(partition, solution.j2, solution.y_star),
        _ => canonical_r_positive(
            partition,
            pinned_count(partition, obs.r),
            solution.j1.unwrap_or(0),
            solution.j2,
            solution.y_star,
            solution.branch,
        ),
    };

    if solution.branch != Branch::DegenerateZero {
        let got = objective_raw(partition, &positions, obs.r, obs.k, m)?;
        if (got - solution.phi_star).abs() > 1e-10 * solution.phi_star.max(1.0) {
            return Err(SolverError::InconsistentSolution {
                expected: solution.phi_star,
                got,
            });
        }
    }

    let mut atoms: Vec<PriorAtom> = Vec::with_capacity(n);
    for (i, &location) in positions.iter().enumerate() {
        let mass = partition.mass(i);
        match atoms.last_mut() {
            Some(last) if last.location == location => last.mass += mass,
            _ => atoms.push(PriorAtom { location, mass }),
        }
    }
    Ok(DiscretePrior { atoms })
}

/// Runs the plain parametric iteration, recording every step. No bracketing
/// acceleration is applied, so long plateaus hit `max_iter` and are reported
/// unconverged rather than extrapolated.
pub fn iterate_trace(
    partition: &IntervalPartition,
    obs: &Observation,
    m: u32,
    opts: &SolverOptions,
) -> Result<IterateTrace, SolverError> {
    check_opts(opts)?;
    let n = partition.len();
    let pinned = pinned_count(partition, obs.r);
    if obs.k <= 0.0 {
        return Err(SolverError::InvalidRegime("k must be positive"));
    }
    if n - pinned < 2 {
        return Err(SolverError::InvalidRegime(
            "degenerate configuration has no iteration to trace",
        ));
    }
    let h = HContext::new(m, obs.k, obs.r)?;
    let setup = Setup {
        partition,
        r: obs.r,
        k: obs.k,
        m,
        pinned,
    };
    let mut xs = vec![0.0; n];
    let mut steps = Vec::new();
    let mut phi = opts.start;
    let mut converged = false;
    let mut monotone_after_first = true;
    for t in 1..=opts.max_iter {
        let next = setup.step(&h, phi, &mut xs)?;
        steps.push(TraceStep {
            t,
            phi_hat: phi,
            placement: xs.clone(),
        });
        if t >= 2 && next > phi + 1e-15 * phi.max(1.0) {
            monotone_after_first = false;
        }
        if (next - phi).abs() <= opts.tol * next.abs().max(1.0) {
            converged = true;
            phi = next;
            break;
        }
        phi = next;
    }
    let _ = phi;
    Ok(IterateTrace {
        steps,
        converged,
        monotone_after_first,
    })
}
