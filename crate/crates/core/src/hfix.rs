//! The response function `h(x) = (1-x)^m (r - x(m+k+r)) / (r - x(k+r))`.
//!
//! Level sets of `h` locate the stationary placements of the worst-case
//! posterior objective: the two roots of `h(x) = phi` act as a repeller
//! (lower branch) and an attractor (upper branch) for probability mass.
//! This module evaluates `h`, inverts its two monotone branches, and finds
//! its stationary points and unit crossing.

use thiserror::Error;

/// Half-width of the guard band around the pole `r/(r+k)` inside which
/// evaluation is refused.
pub const POLE_GUARD: f64 = 1e-14;

/// Bisection iteration cap for branch inversion.
const BISECT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HfixError {
    #[error("h is undefined at the pole x = {x} (within the {POLE_GUARD} guard band)")]
    PoleEvaluation { x: f64 },
    #[error("h degenerates when r = k = 0")]
    DegenerateContext,
    #[error("phi = {phi} is outside the branch range")]
    OutOfBranchRange { phi: f64 },
}

/// Frozen (m, k, r) context for evaluating `h` and its branch inverses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HContext {
    m: u32,
    k: f64,
    r: f64,
    /// `r / (r + k)`, where the denominator of `h` vanishes.
    pole: f64,
    /// `r / (r + m + k)`, the upper zero of the lower branch.
    lower_zero: f64,
}

impl HContext {
    pub fn new(m: u32, k: f64, r: f64) -> Result<Self, HfixError> {
        if m == 0 || !k.is_finite() || !r.is_finite() || k < 0.0 || r < 0.0 {
            return Err(HfixError::DegenerateContext);
        }
        if r == 0.0 && k == 0.0 {
            return Err(HfixError::DegenerateContext);
        }
        let pole = r / (r + k);
        let lower_zero = r / (r + m as f64 + k);
        Ok(Self {
            m,
            k,
            r,
            pole,
            lower_zero,
        })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `r / (r + k)`; equals 0 when r = 0 and 1 when k = 0.
    pub fn pole(&self) -> f64 {
        self.pole
    }

    /// `r / (r + m + k)`.
    pub fn lower_zero(&self) -> f64 {
        self.lower_zero
    }

    /// `(1 - x)^m` via `exp(m log1p(-x))`, which keeps precision for large
    /// exponents and x near 0.
    fn pow1m(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return 0.0;
        }
        (self.m as f64 * (-x).ln_1p()).exp()
    }

    /// Evaluates `h(x)` for `x` in `[0, 1]` away from the pole.
    ///
    /// For r = 0 the limit form `(1-x)^m (m+k)/k` applies on `(0, 1]`, with
    /// `h(0) = (m+k)/k` by continuity. Requires k > 0 when r = 0.
    pub fn eval(&self, x: f64) -> Result<f64, HfixError> {
        let (m, k, r) = (self.m as f64, self.k, self.r);
        if r == 0.0 {
            // k > 0 guaranteed by the constructor.
            return Ok(self.pow1m(x) * (m + k) / k);
        }
        if x == 0.0 {
            return Ok(1.0);
        }
        if (x - self.pole).abs() <= POLE_GUARD {
            return Err(HfixError::PoleEvaluation { x });
        }
        // Factored linear terms keep the zeros at lower_zero (and the pole
        // sign change) exact in floating point.
        let num = (r + m + k) * (self.lower_zero - x);
        let den = (r + k) * (self.pole - x);
        Ok(self.pow1m(x) * num / den)
    }

    /// Inverts the decreasing upper branch: the unique `x` with `h(x) = phi`
    /// on `(pole, 1]` (on `(0, 1]` when r = 0), by bisection.
    ///
    /// For r = 0, `phi` equal to the branch supremum `(m+k)/k` returns the
    /// boundary point 0.
    pub fn invert_upper(&self, phi: f64) -> Result<f64, HfixError> {
        if phi.is_nan() || phi <= 0.0 || !phi.is_finite() {
            return Err(HfixError::OutOfBranchRange { phi });
        }
        let (mut lo, mut hi);
        if self.r == 0.0 {
            let sup = (self.m as f64 + self.k) / self.k;
            if phi > sup {
                return Err(HfixError::OutOfBranchRange { phi });
            }
            if phi == sup {
                // Attained only in the x -> 0 limit.
                return Ok(0.0);
            }
            lo = 0.0;
            hi = 1.0;
        } else {
            lo = self.upper_branch_floor();
            hi = 1.0;
            let at_lo = self.eval(lo)?;
            if phi > at_lo {
                // Root sits between the pole and the guard band edge, where
                // h climbs toward the singularity but is not evaluable.
                return Err(HfixError::OutOfBranchRange { phi });
            }
        }
        for _ in 0..BISECT_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid)? >= phi {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Inverts the decreasing lower branch: the unique `x` with `h(x) = phi`
    /// on `[0, lower_zero]`, which runs from `h(0) = 1` down to 0.
    ///
    /// The branch collapses when r = 0.
    pub fn invert_lower(&self, phi: f64) -> Result<f64, HfixError> {
        if self.r == 0.0 {
            return Err(HfixError::DegenerateContext);
        }
        if !(0.0..=1.0).contains(&phi) {
            return Err(HfixError::OutOfBranchRange { phi });
        }
        if phi == 1.0 {
            return Ok(0.0);
        }
        let mut lo = 0.0;
        let mut hi = self.lower_zero;
        for _ in 0..BISECT_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid)? >= phi {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(if phi == 0.0 { self.lower_zero } else { lo })
    }

    /// The stationary points of `h`, when real: both lie strictly inside
    /// `(lower_zero, pole)` where `h` is negative. Requires r > 0.
    pub fn stationary_points(&self) -> Result<Option<(f64, f64)>, HfixError> {
        if self.r == 0.0 {
            return Err(HfixError::DegenerateContext);
        }
        let (m, k, r) = (self.m as f64, self.k, self.r);
        let disc = -4.0 * r * k * k - 4.0 * k * r * (m + r) + r * r * (m - 1.0) * (m - 1.0);
        if disc < 0.0 {
            return Ok(None);
        }
        let root = disc.sqrt();
        let denom = 2.0 * (r + k) * (r + m + k);
        let base = 2.0 * r * r + (2.0 * k + m + 1.0) * r;
        Ok(Some(((base - root) / denom, (base + root) / denom)))
    }

    /// The unit crossing `x*` on the upper branch, where `h(x*) = 1`.
    pub fn unit_crossing(&self) -> Result<f64, HfixError> {
        if self.r == 0.0 {
            return Err(HfixError::DegenerateContext);
        }
        self.invert_upper(1.0)
    }

    /// Smallest evaluable point of the upper branch: just past the pole
    /// guard band (0 when r = 0). Upper-branch roots falling between the
    /// pole and this point are not representable.
    pub fn upper_branch_floor(&self) -> f64 {
        if self.r == 0.0 {
            0.0
        } else {
            next_above(self.pole + POLE_GUARD)
        }
    }
}

/// Smallest float strictly greater than `x` (for positive finite `x`).
fn next_above(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(m: u32, k: f64, r: f64) -> HContext {
        HContext::new(m, k, r).unwrap()
    }

    #[test]
    fn h_at_zero_is_one() {
        assert_eq!(ctx(3, 2.0, 1.0).eval(0.0).unwrap(), 1.0);
    }

    #[test]
    fn h_at_one_is_zero() {
        assert_eq!(ctx(3, 2.0, 1.0).eval(1.0).unwrap(), 0.0);
    }

    #[test]
    fn h_at_half_hand_value() {
        // (1-0.5)^3 (1 - 0.5*6)/(1 - 0.5*3) = 0.125 * (-2)/(-0.5) = 0.5
        let v = ctx(3, 2.0, 1.0).eval(0.5).unwrap();
        assert!((v - 0.5).abs() < 1e-15, "got {v}");
    }

    #[test]
    fn h_zero_at_lower_zero() {
        let c = ctx(3, 2.0, 1.0);
        assert_eq!(c.eval(c.lower_zero()).unwrap(), 0.0);
    }

    #[test]
    fn pole_evaluation_rejected() {
        let c = ctx(3, 2.0, 1.0);
        assert!(matches!(
            c.eval(c.pole()).unwrap_err(),
            HfixError::PoleEvaluation { .. }
        ));
    }

    #[test]
    fn degenerate_context_rejected() {
        assert_eq!(
            HContext::new(3, 0.0, 0.0).unwrap_err(),
            HfixError::DegenerateContext
        );
    }

    #[test]
    fn r_zero_limit_form() {
        let c = ctx(3, 2.0, 0.0);
        assert_eq!(c.eval(0.0).unwrap(), 2.5);
        let v = c.eval(0.5).unwrap();
        assert!((v - 0.125 * 2.5).abs() < 1e-15);
    }

    #[test]
    fn invert_upper_round_trip() {
        let c = ctx(3, 2.0, 1.0);
        // Deterministic sample of phi values across (0, 1].
        for i in 1..=100 {
            let phi = i as f64 / 100.0;
            let x = c.invert_upper(phi).unwrap();
            assert!(x > c.pole() && x <= 1.0);
            let back = c.eval(x).unwrap();
            assert!(
                (back - phi).abs() <= 1e-12 * phi.max(1.0),
                "phi={phi} x={x} back={back}"
            );
        }
    }

    #[test]
    fn invert_upper_rejects_nonpositive() {
        let c = ctx(3, 2.0, 1.0);
        assert!(matches!(
            c.invert_upper(0.0).unwrap_err(),
            HfixError::OutOfBranchRange { .. }
        ));
        assert!(matches!(
            c.invert_upper(-0.5).unwrap_err(),
            HfixError::OutOfBranchRange { .. }
        ));
    }

    #[test]
    fn invert_upper_r_zero_boundary() {
        let c = ctx(3, 2.0, 0.0);
        // Branch supremum (m+k)/k = 2.5 is attained at the x -> 0 boundary.
        let x = c.invert_upper(2.5).unwrap();
        assert_eq!(x, 0.0);
        assert!(matches!(
            c.invert_upper(2.5 + 1e-9).unwrap_err(),
            HfixError::OutOfBranchRange { .. }
        ));
    }

    #[test]
    fn invert_lower_endpoints() {
        let c = ctx(3, 2.0, 1.0);
        assert_eq!(c.invert_lower(1.0).unwrap(), 0.0);
        assert_eq!(c.invert_lower(0.0).unwrap(), c.lower_zero());
    }

    #[test]
    fn invert_lower_round_trip_mid() {
        let c = ctx(3, 2.0, 1.0);
        let x = c.invert_lower(0.5).unwrap();
        assert!(x > 0.0 && x < c.lower_zero());
        assert!(x < 1.0 / 6.0);
        let back = c.eval(x).unwrap();
        assert!((back - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn invert_lower_requires_failures() {
        let c = ctx(3, 2.0, 0.0);
        assert_eq!(c.invert_lower(0.5).unwrap_err(), HfixError::DegenerateContext);
    }

    #[test]
    fn stationary_points_absent_for_small_m() {
        // Discriminant -16 - 32 + 4 = -44 < 0.
        assert_eq!(ctx(3, 2.0, 1.0).stationary_points().unwrap(), None);
    }

    #[test]
    fn stationary_points_present_and_bracketed() {
        // Discriminant -4 - 44 + 81 = 33 > 0.
        let c = ctx(10, 1.0, 1.0);
        let (x_lo, x_hi) = c.stationary_points().unwrap().unwrap();
        assert!(c.lower_zero() < x_lo && x_lo < x_hi && x_hi < c.pole());
        assert!(x_lo > 1.0 / 12.0 && x_hi < 0.5);
    }

    #[test]
    fn stationary_points_kill_central_difference() {
        let c = ctx(10, 1.0, 1.0);
        let (x_lo, x_hi) = c.stationary_points().unwrap().unwrap();
        for x in [x_lo, x_hi] {
            let d = 1e-7 * x;
            let fd = (c.eval(x + d).unwrap() - c.eval(x - d).unwrap()) / (2.0 * d);
            assert!(fd.abs() <= 1e-9 * (1.0 / x), "derivative {fd} at {x}");
        }
    }

    #[test]
    fn unit_crossing_examples() {
        let c = ctx(3, 2.0, 1.0);
        let x = c.unit_crossing().unwrap();
        assert!(x > c.pole());
        assert!(x > 1.0 / 3.0 && x < 1.0);
        assert!((c.eval(x).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn unit_crossing_round_trip_grid() {
        // 50+ deterministic (m, k, r) combinations. The achievable residual
        // is conditioning-limited: |h'(x*)| ulp(x*) when the crossing hugs
        // the pole, so the tolerance scales with the log-derivative bound.
        let mut checked = 0;
        for m in [1u32, 2, 5, 20, 100, 463] {
            for (k, r) in [
                (1.0, 1.0),
                (2.0, 1.0),
                (10.0, 3.0),
                (50.0, 1.0),
                (100.0, 7.0),
                (317.0, 11.0),
                (1e3, 5.0),
                (1e4, 2.0),
                (2.5e4, 13.0),
                (1e5, 1.0),
            ] {
                let c = ctx(m, k, r);
                // The crossing sits roughly (1-pole)^m m r / (r+k)^2 above
                // the pole; skip combinations where that gap falls toward
                // the guard band and the root stops being representable.
                let mf = m as f64;
                let ln_gap =
                    mf * (-c.pole()).ln_1p() + (mf * r).ln() - 2.0 * (r + k).ln();
                if ln_gap < -27.6 {
                    continue;
                }
                let x = c.unit_crossing().unwrap();
                assert!(x > c.pole());
                let back = c.eval(x).unwrap();
                let dlog = mf / (1.0 - x)
                    + (r + mf + k) / (x * (r + mf + k) - r).abs()
                    + (r + k) / (x * (r + k) - r).abs();
                let tol = (8.0 * dlog * x * f64::EPSILON).max(1e-12);
                assert!(
                    (back - 1.0).abs() <= tol,
                    "m={m} k={k} r={r}: {back} (tol {tol})"
                );
                checked += 1;
            }
        }
        assert!(checked >= 50, "only {checked} combinations checked");
    }

    #[test]
    fn unit_crossing_unrepresentable_near_pole() {
        // (1 - 1/2)^100 ~ 8e-31: the crossing lies within one ulp of the
        // pole, inside the guard band, and is reported out of range.
        let c = ctx(100, 1.0, 1.0);
        assert!(matches!(
            c.unit_crossing().unwrap_err(),
            HfixError::OutOfBranchRange { .. }
        ));
    }

    #[test]
    fn monotone_on_outer_branches() {
        let c = ctx(7, 11.0, 3.0);
        let (bz, pole) = (c.lower_zero(), c.pole());
        let mut prev = f64::INFINITY;
        for i in 0..=200 {
            let x = bz * i as f64 / 200.0;
            let v = c.eval(x).unwrap();
            assert!(v <= prev + 1e-14);
            assert!(v >= -1e-15);
            prev = v;
        }
        let mut prev = f64::INFINITY;
        for i in 0..=200 {
            let x = (pole + 1e-6) + (1.0 - pole - 1e-6) * i as f64 / 200.0;
            let v = c.eval(x).unwrap();
            assert!(v <= prev);
            assert!(v >= 0.0);
            prev = v;
        }
        // Negative between the lower zero and the pole.
        for i in 1..200 {
            let x = bz + (pole - bz) * i as f64 / 200.0;
            if (x - pole).abs() <= POLE_GUARD {
                continue;
            }
            assert!(c.eval(x).unwrap() < 0.0);
        }
    }
}
