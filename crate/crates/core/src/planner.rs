//! Demand-budget planning: how many failure-free demands are needed before
//! the posterior predictive probability of `m` further successes reaches
//! `1 - alpha`, under the uniform-prior baseline and under the worst-case
//! prior, plus the asymptotic limits of both as failures accumulate.

use serde::Serialize;
use thiserror::Error;

use crate::model::{IntervalPartition, Observation};
use crate::oracle::beta_predictive;
use crate::solver::{solve, worst_case_phi, FixedPointSolution, SolverError, SolverOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("alpha={0} must lie strictly in (0, 1)")]
    InvalidAlpha(f64),
    #[error("objective not monotone at the search boundary k={k}: phi({})={phi_low} > phi({k})={phi_high}", k - 1)]
    MonotonicityViolation { k: u64, phi_low: f64, phi_high: f64 },
}

/// Outcome of a demand-budget search.
///
/// `Infeasible` is analytic: the posterior target exceeds the supremum of
/// the worst-case posterior over all success counts, so no amount of
/// failure-free operation suffices. `InfeasibleNumeric` means the search hit
/// its budget cap before crossing the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PlanResult {
    Feasible {
        /// Minimal success count whose posterior meets the target.
        k_required: u64,
        /// `k_required + r`, counting the failed demands.
        total_demands: u64,
        /// Posterior predictive value at `k_required`.
        phi_at_k: f64,
    },
    Infeasible,
    InfeasibleNumeric,
}

impl PlanResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, PlanResult::Feasible { .. })
    }

    pub fn total_demands(&self) -> Option<u64> {
        match self {
            PlanResult::Feasible { total_demands, .. } => Some(*total_demands),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerOptions {
    /// Success-count cap for the bracketing search.
    pub max_k: u64,
    pub solver: SolverOptions,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            max_k: 1_000_000_000,
            solver: SolverOptions::default(),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<f64, PlannerError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PlannerError::InvalidAlpha(alpha));
    }
    Ok(1.0 - alpha)
}

/// Smallest integer `k` in `[k_min, max_k]` with `phi(k) >= target`, by
/// exponential bracketing then binary search. `phi` must be nondecreasing.
fn search_min_k<F>(
    mut phi: F,
    target: f64,
    k_min: u64,
    max_k: u64,
) -> Result<Option<(u64, f64)>, PlannerError>
where
    F: FnMut(u64) -> Result<f64, PlannerError>,
{
    let mut hi = k_min;
    let mut phi_hi = phi(hi)?;
    let mut lo = 0u64; // exclusive: phi(lo) < target or lo < k_min
    while phi_hi < target {
        if hi >= max_k {
            return Ok(None);
        }
        lo = hi;
        hi = (hi * 2).min(max_k).max(hi + 1);
        phi_hi = phi(hi)?;
    }
    while hi - lo > 1 && hi > k_min {
        let mid = lo + (hi - lo) / 2;
        if mid < k_min {
            break;
        }
        let v = phi(mid)?;
        if v >= target {
            hi = mid;
            phi_hi = v;
        } else {
            lo = mid;
        }
    }
    // Do not trust monotonicity blindly: re-verify at the final boundary.
    if hi > k_min {
        let phi_low = phi(hi - 1)?;
        if phi_low > phi_hi {
            return Err(PlannerError::MonotonicityViolation {
                k: hi,
                phi_low,
                phi_high: phi_hi,
            });
        }
        debug_assert!(phi_low < target);
    }
    Ok(Some((hi, phi_hi)))
}

/// Demands needed under the uniform-prior baseline: smallest `k` with
/// `beta_predictive(m, k, r) >= 1 - alpha`. Always feasible (the predictive
/// tends to 1 in `k`), up to the numeric cap.
pub fn plan_demands_beta(
    m: u32,
    alpha: f64,
    r: u64,
    opts: &PlannerOptions,
) -> Result<PlanResult, PlannerError> {
    let target = check_alpha(alpha)?;
    let rf = r as f64;
    let found = search_min_k(|k| Ok(beta_predictive(m, k as f64, rf)), target, 0, opts.max_k)?;
    Ok(match found {
        Some((k_required, phi_at_k)) => PlanResult::Feasible {
            k_required,
            total_demands: k_required + r,
            phi_at_k,
        },
        None => PlanResult::InfeasibleNumeric,
    })
}

/// Supremum of the worst-case posterior over all success counts: the target
/// must lie strictly below it for a finite budget to exist.
///
/// With failures, the masses pinned at 0 drop out and the limit is
/// `(1 - u)^m` where `u` is the upper endpoint of the first contributing
/// interval; one contributing interval or fewer leaves the infimum at 0.
/// With no failures nothing is pinned, so the first interval's own upper
/// endpoint governs, and a fault-free point mass drives the limit to 1.
pub fn phi_supremum(partition: &IntervalPartition, r: u64, m: u32) -> f64 {
    let pow = |y: f64| (m as f64 * (-y).ln_1p()).exp();
    let n = partition.len();
    if r > 0 {
        let pinned = 1 + usize::from(partition.fault_free_mass_at_zero());
        if n - pinned < 2 {
            return 0.0;
        }
        pow(partition.upper(pinned))
    } else if partition.fault_free_mass_at_zero() {
        1.0
    } else {
        pow(partition.upper(0))
    }
}

/// Demands needed under the worst-case prior: smallest `k >= 1` with
/// `phi*(k) >= 1 - alpha`, using the monotonicity of `phi*` in `k`.
pub fn plan_demands_cbi(
    partition: &IntervalPartition,
    m: u32,
    alpha: f64,
    r: u64,
    opts: &PlannerOptions,
) -> Result<PlanResult, PlannerError> {
    let target = check_alpha(alpha)?;
    if phi_supremum(partition, r, m) <= target {
        return Ok(PlanResult::Infeasible);
    }
    let rf = r as f64;
    let found = search_min_k(
        |k| {
            let obs = Observation::new(rf, k as f64).map_err(SolverError::Model)?;
            Ok(worst_case_phi(partition, &obs, m, &opts.solver)?)
        },
        target,
        1,
        opts.max_k,
    )?;
    Ok(match found {
        Some((k_required, phi_at_k)) => PlanResult::Feasible {
            k_required,
            total_demands: k_required + r,
            phi_at_k,
        },
        None => PlanResult::InfeasibleNumeric,
    })
}

/// One failure count's comparison between the two planners.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioPoint {
    pub r: u64,
    pub beta: PlanResult,
    pub cbi: PlanResult,
    /// `beta_total / cbi_total`, present only when both sides are feasible.
    pub ratio: Option<f64>,
}

/// Ratio of baseline to worst-case demand budgets across failure counts.
/// Infeasible entries are kept in the series with an empty ratio.
pub fn ratio_curve(
    partition: &IntervalPartition,
    m: u32,
    alpha: f64,
    rs: &[u64],
    opts: &PlannerOptions,
) -> Result<Vec<RatioPoint>, PlannerError> {
    let mut out = Vec::with_capacity(rs.len());
    for &r in rs {
        let beta = plan_demands_beta(m, alpha, r, opts)?;
        let cbi = plan_demands_cbi(partition, m, alpha, r, opts)?;
        let ratio = match (beta.total_demands(), cbi.total_demands()) {
            (Some(b), Some(c)) => Some(b as f64 / c as f64),
            _ => None,
        };
        out.push(RatioPoint {
            r,
            beta,
            cbi,
            ratio,
        });
    }
    Ok(out)
}

/// Attractor/repeller positions at the planned budget for one failure count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryPoint {
    pub r: u64,
    pub k_c: u64,
    pub y_star: f64,
    pub y_star_star: Option<f64>,
    /// `r / (r + k_c)`.
    pub pole: f64,
    /// `1 - (1-alpha)^(1/m)`, the candidate limit of the attractor.
    pub x_star: f64,
}

/// For each failure count, plans the worst-case budget and reports where the
/// fixed-point pair sits relative to its two candidate limits.
pub fn stationary_convergence_curve(
    partition: &IntervalPartition,
    m: u32,
    alpha: f64,
    rs: &[u64],
    opts: &PlannerOptions,
) -> Result<Vec<StationaryPoint>, PlannerError> {
    check_alpha(alpha)?;
    let x_star = attractor_limit(m, alpha);
    let mut out = Vec::with_capacity(rs.len());
    for &r in rs {
        let plan = plan_demands_cbi(partition, m, alpha, r, opts)?;
        let PlanResult::Feasible { k_required, .. } = plan else {
            continue;
        };
        let obs = Observation::new(r as f64, k_required as f64).map_err(SolverError::Model)?;
        let sol: FixedPointSolution = solve(partition, &obs, m, &opts.solver)?;
        out.push(StationaryPoint {
            r,
            k_c: k_required,
            y_star: sol.y_star,
            y_star_star: sol.y_star_star,
            pole: r as f64 / (r as f64 + k_required as f64),
            x_star,
        });
    }
    Ok(out)
}

/// Which limit the repeller tracks as failures grow without bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "tracks", rename_all = "snake_case")]
pub enum RepellerLimit {
    /// `y** -> r/(r+k)` along the planned path; the attractor then tracks
    /// `1 - (1-alpha)^(1/m)`. This is the generic case: the worst-case
    /// budget dominates the baseline one, pushing the pole below the
    /// attractor limit.
    Pole,
    /// The switched assignment: `y**` tracks the attractor limit instead.
    XStar { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticLimits {
    /// `lim k_beta / r = (1-alpha)^(1/m) / (1 - (1-alpha)^(1/m))`.
    pub kbeta_over_r: f64,
    /// `1 - (1-alpha)^(1/m)`.
    pub y_star_limit: f64,
    pub y_star_star_limit: RepellerLimit,
}

fn attractor_limit(m: u32, alpha: f64) -> f64 {
    -((1.0 - alpha).ln() / m as f64).exp_m1()
}

/// Closed-form limits of the planners as the failure count grows.
pub fn asymptotic_limits(m: u32, alpha: f64) -> Result<AsymptoticLimits, PlannerError> {
    check_alpha(alpha)?;
    let x_star = attractor_limit(m, alpha);
    Ok(AsymptoticLimits {
        kbeta_over_r: (1.0 - x_star) / x_star,
        y_star_limit: x_star,
        y_star_star_limit: RepellerLimit::Pole,
    })
}

/// `phi*` sampled along a ladder of success counts.
pub fn phi_growth_curve(
    partition: &IntervalPartition,
    r: u64,
    m: u32,
    ks: &[u64],
    opts: &PlannerOptions,
) -> Result<Vec<(u64, f64)>, PlannerError> {
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let obs = Observation::new(r as f64, k as f64).map_err(SolverError::Model)?;
        out.push((k, worst_case_phi(partition, &obs, m, &opts.solver)?));
    }
    Ok(out)
}
