//! Domain types: interval-constrained prior specifications, observations,
//! reliability targets, and mass placements.
//!
//! A partial prior specification pins the probability `p_i` that the
//! failure-probability parameter lies in each interval `I_i` of a partition
//! of `[0, 1]`. All downstream computations operate on these validated types.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for `sum(p_i) == 1` checks on user-supplied masses.
pub const MASS_SUM_TOL: f64 = 1e-12;

/// Default cap on the interval count produced by [`IntervalPartition::refine`].
pub const REFINE_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("breakpoints must be strictly increasing")]
    NonIncreasingBreakpoints,
    #[error("mass {value} at index {index} is outside (0, 1)")]
    MassOutOfRange { index: usize, value: f64 },
    #[error("masses sum to {sum}, not 1 (tolerance {MASS_SUM_TOL})")]
    MassSumMismatch { sum: f64 },
    #[error("breakpoints must start at 0 and end at 1")]
    EndpointMismatch,
    #[error("expected {expected} breakpoints for {masses} masses, got {got}")]
    BreakpointCountMismatch {
        expected: usize,
        got: usize,
        masses: usize,
    },
    #[error("refinement factor must be at least 2, got {factor}")]
    RefinementFactorTooSmall { factor: usize },
    #[error("refinement would produce {resulting} intervals, above the cap {cap}")]
    RefinementOverflow { resulting: usize, cap: usize },
    #[error("observation counts must be finite and nonnegative (r={r}, k={k})")]
    InvalidObservation { r: f64, k: f64 },
    #[error("future-demand count m must be at least 1")]
    InvalidDemandCount,
    #[error("confidence parameter alpha={0} must lie strictly in (0, 1)")]
    InvalidAlpha(f64),
    #[error("placement position {value} at index {index} is outside its interval")]
    PlacementOutOfInterval { index: usize, value: f64 },
    #[error("placement has {got} positions for {expected} intervals")]
    PlacementLengthMismatch { expected: usize, got: usize },
}

/// A partition of `[0, 1]` into `n` contiguous intervals with a probability
/// mass pinned on each: the partial prior specification.
///
/// Internally the breakpoints are stored as `n + 1` values
/// `0 = y_0 <= y_1 < y_2 < ... < y_n = 1`. When `fault_free_mass_at_zero` is
/// set, the first interval degenerates to the point `{0}` (`y_1 = 0`, read as
/// the `y_1 -> 0` limit): mass `p_1` is the probability that the software is
/// fault-free. Callers construct that form by passing the breakpoints of the
/// non-degenerate intervals only, `[0, y_2, ..., 1]`, one per mass.
///
/// Open/half-open endpoints are not distinguished: worst-case priors may sit
/// on any closure point, as limits of feasible priors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalPartition {
    breakpoints: Vec<f64>,
    masses: Vec<f64>,
    fault_free_mass_at_zero: bool,
}

impl IntervalPartition {
    /// Validates raw breakpoints and masses. No silent renormalization: any
    /// violation is a structured rejection.
    pub fn new(
        breakpoints: &[f64],
        masses: &[f64],
        fault_free_mass_at_zero: bool,
    ) -> Result<Self, ModelError> {
        let n = masses.len();
        let expected = if fault_free_mass_at_zero { n } else { n + 1 };
        if breakpoints.len() != expected || n == 0 {
            return Err(ModelError::BreakpointCountMismatch {
                expected,
                got: breakpoints.len(),
                masses: n,
            });
        }
        let mut bps = Vec::with_capacity(n + 1);
        bps.push(breakpoints[0]);
        if fault_free_mass_at_zero {
            // Implicit y_1 = 0+: interval 0 is the point {0}.
            bps.push(0.0);
        }
        bps.extend_from_slice(&breakpoints[1..]);

        if bps[0] != 0.0 || *bps.last().unwrap() != 1.0 {
            return Err(ModelError::EndpointMismatch);
        }
        // Strictly increasing, except the collapsed y_0 = y_1 = 0 pair above.
        let start = if fault_free_mass_at_zero { 1 } else { 0 };
        for i in start..n {
            let (a, b) = (bps[i], bps[i + 1]);
            if a.is_nan() || b.is_nan() || a >= b {
                return Err(ModelError::NonIncreasingBreakpoints);
            }
        }
        let mut sum = 0.0;
        for (index, &value) in masses.iter().enumerate() {
            // A single interval is the trivial specification: its mass is
            // forced to exactly 1. Genuine multi-interval specifications
            // require every mass strictly inside (0, 1).
            let upper_ok = if n == 1 { value <= 1.0 } else { value < 1.0 };
            if value.is_nan() || value <= 0.0 || !upper_ok {
                return Err(ModelError::MassOutOfRange { index, value });
            }
            sum += value;
        }
        if (sum - 1.0).abs() > MASS_SUM_TOL {
            return Err(ModelError::MassSumMismatch { sum });
        }
        Ok(Self {
            breakpoints: bps,
            masses: masses.to_vec(),
            fault_free_mass_at_zero,
        })
    }

    /// Builds the partition whose masses equal the interval lengths, so the
    /// uniform prior is a member of the constrained set. A single interval
    /// is rejected: it would force the mass 1 and constrain nothing.
    pub fn uniform_consistent(breakpoints: &[f64]) -> Result<Self, ModelError> {
        if breakpoints.len() < 2 {
            return Err(ModelError::BreakpointCountMismatch {
                expected: 2,
                got: breakpoints.len(),
                masses: breakpoints.len().saturating_sub(1),
            });
        }
        if breakpoints.len() == 2 {
            return Err(ModelError::MassOutOfRange {
                index: 0,
                value: 1.0,
            });
        }
        let masses: Vec<f64> = breakpoints.windows(2).map(|w| w[1] - w[0]).collect();
        Self::new(breakpoints, &masses, false)
    }

    /// Splits every interval into `factor` equal-length pieces, dividing each
    /// mass evenly. Uniform-consistency is preserved. A degenerate first
    /// interval (fault-free point mass) is kept as is.
    pub fn refine(&self, factor: usize) -> Result<Self, ModelError> {
        if factor < 2 {
            return Err(ModelError::RefinementFactorTooSmall { factor });
        }
        let genuine = self.len() - usize::from(self.fault_free_mass_at_zero);
        let resulting = genuine * factor + usize::from(self.fault_free_mass_at_zero);
        if resulting > REFINE_CAP {
            return Err(ModelError::RefinementOverflow {
                resulting,
                cap: REFINE_CAP,
            });
        }
        let mut bps = vec![0.0];
        let mut masses = Vec::with_capacity(resulting);
        let mut first = 0;
        if self.fault_free_mass_at_zero {
            masses.push(self.masses[0]);
            first = 1;
        }
        for i in first..self.len() {
            let (lo, hi) = (self.lower(i), self.upper(i));
            for s in 1..=factor {
                let t = s as f64 / factor as f64;
                bps.push(if s == factor { hi } else { lo + (hi - lo) * t });
                masses.push(self.masses[i] / factor as f64);
            }
        }
        Self::new(&bps, &masses, self.fault_free_mass_at_zero)
    }

    /// Number of intervals (including a degenerate fault-free point).
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    /// Validation guarantees at least one interval.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lower endpoint of interval `i` (0-based).
    pub fn lower(&self, i: usize) -> f64 {
        self.breakpoints[i]
    }

    /// Upper endpoint of interval `i` (0-based).
    pub fn upper(&self, i: usize) -> f64 {
        self.breakpoints[i + 1]
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// The `n + 1` effective breakpoints (fault-free form includes the
    /// collapsed `y_1 = 0`).
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn fault_free_mass_at_zero(&self) -> bool {
        self.fault_free_mass_at_zero
    }

    /// Index of the interval whose closure contains `x`; on a shared
    /// breakpoint the lower index wins.
    pub fn interval_containing(&self, x: f64) -> usize {
        debug_assert!((0.0..=1.0).contains(&x));
        let n = self.len();
        for i in 0..n {
            if x <= self.upper(i) {
                return i;
            }
        }
        n - 1
    }
}

/// Operational evidence: `r` observed failures and `k` observed successes.
///
/// Counts are real-valued here (the solver's monotonicity arguments perturb
/// them continuously); planners restrict to integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub r: f64,
    pub k: f64,
}

impl Observation {
    pub fn new(r: f64, k: f64) -> Result<Self, ModelError> {
        if !(r.is_finite() && k.is_finite() && r >= 0.0 && k >= 0.0) {
            return Err(ModelError::InvalidObservation { r, k });
        }
        Ok(Self { r, k })
    }
}

/// What must be demonstrated: `m` future failure-free demands, optionally at
/// posterior confidence `1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityTarget {
    pub m: u32,
    pub alpha: Option<f64>,
}

impl ReliabilityTarget {
    pub fn new(m: u32, alpha: Option<f64>) -> Result<Self, ModelError> {
        if m == 0 {
            return Err(ModelError::InvalidDemandCount);
        }
        if let Some(a) = alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(ModelError::InvalidAlpha(a));
            }
        }
        Ok(Self { m, alpha })
    }
}

/// One candidate position per interval, each within its interval's closure.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement(Vec<f64>);

impl Placement {
    pub fn new(partition: &IntervalPartition, positions: Vec<f64>) -> Result<Self, ModelError> {
        if positions.len() != partition.len() {
            return Err(ModelError::PlacementLengthMismatch {
                expected: partition.len(),
                got: positions.len(),
            });
        }
        for (index, &value) in positions.iter().enumerate() {
            if !(value >= partition.lower(index) && value <= partition.upper(index)) {
                return Err(ModelError::PlacementOutOfInterval { index, value });
            }
        }
        Ok(Self(positions))
    }

    pub fn positions(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_three_interval_specification() {
        let p = IntervalPartition::new(&[0.0, 1e-6, 1e-4, 1.0], &[1e-6, 9.9e-5, 0.9999], false)
            .unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.lower(0), 0.0);
        assert_eq!(p.upper(2), 1.0);
    }

    #[test]
    fn accepts_symmetric_split() {
        let p = IntervalPartition::new(&[0.0, 0.5, 1.0], &[0.5, 0.5], false).unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn rejects_unordered_breakpoints() {
        let err = IntervalPartition::new(&[0.0, 0.5, 0.4, 1.0], &[0.3, 0.3, 0.4], false);
        assert_eq!(err.unwrap_err(), ModelError::NonIncreasingBreakpoints);
    }

    #[test]
    fn rejects_bad_endpoints() {
        let err = IntervalPartition::new(&[0.1, 0.5, 1.0], &[0.5, 0.5], false);
        assert_eq!(err.unwrap_err(), ModelError::EndpointMismatch);
        let err = IntervalPartition::new(&[0.0, 0.5, 0.9], &[0.5, 0.5], false);
        assert_eq!(err.unwrap_err(), ModelError::EndpointMismatch);
    }

    #[test]
    fn rejects_mass_sum_mismatch() {
        let err = IntervalPartition::new(&[0.0, 0.5, 1.0], &[0.5, 0.5 + 1e-9], false);
        assert!(matches!(err.unwrap_err(), ModelError::MassSumMismatch { .. }));
    }

    #[test]
    fn rejects_out_of_range_mass() {
        let err = IntervalPartition::new(&[0.0, 0.5, 0.7, 1.0], &[0.5, 0.5, 0.0], false);
        assert!(matches!(err.unwrap_err(), ModelError::MassOutOfRange { index: 2, .. }));
    }

    #[test]
    fn uniform_consistent_table_partition() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 1e-6, 1e-4, 1.0]).unwrap();
        assert!((p.mass(0) - 1e-6).abs() < 1e-18);
        assert!((p.mass(1) - 9.9e-5).abs() < 1e-18);
        assert!((p.mass(2) - 0.9999).abs() < 1e-15);
    }

    #[test]
    fn uniform_consistent_equal_lengths() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        for i in 0..4 {
            assert!((p.mass(i) - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_consistent_single_interval_rejected() {
        // p_1 = 1 violates the strict (0, 1) mass constraint.
        let err = IntervalPartition::uniform_consistent(&[0.0, 1.0]);
        assert!(matches!(err.unwrap_err(), ModelError::MassOutOfRange { .. }));
    }

    #[test]
    fn single_interval_trivial_specification() {
        let p = IntervalPartition::new(&[0.0, 1.0], &[1.0], false).unwrap();
        assert_eq!(p.len(), 1);
        // Multi-interval specifications still require strict masses.
        let err = IntervalPartition::new(&[0.0, 0.5, 1.0], &[1.0, 1e-13], false);
        assert!(matches!(err.unwrap_err(), ModelError::MassOutOfRange { .. }));
    }

    #[test]
    fn fault_free_partition_shape() {
        let p = IntervalPartition::new(
            &[0.0, 1e-6, 1e-5, 1.0],
            &[0.9, 0.09, 0.009, 0.001],
            true,
        )
        .unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!((p.lower(0), p.upper(0)), (0.0, 0.0));
        assert_eq!((p.lower(1), p.upper(1)), (0.0, 1e-6));
        assert_eq!((p.lower(3), p.upper(3)), (1e-5, 1.0));
    }

    #[test]
    fn refine_splits_proportionally() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 0.5, 1.0]).unwrap();
        let r = p.refine(2).unwrap();
        assert_eq!(r.breakpoints(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        for i in 0..4 {
            assert!((r.mass(i) - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn refine_rejects_factor_one() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 0.5, 1.0]).unwrap();
        assert!(matches!(
            p.refine(1).unwrap_err(),
            ModelError::RefinementFactorTooSmall { factor: 1 }
        ));
    }

    #[test]
    fn refine_factor_ten_keeps_mass_sum() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 1e-4, 1.0]).unwrap();
        let r = p.refine(10).unwrap();
        assert_eq!(r.len(), 20);
        let sum: f64 = r.masses().iter().sum();
        assert!((sum - 1.0).abs() <= MASS_SUM_TOL);
    }

    #[test]
    fn refine_overflow_guard() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 0.5, 1.0]).unwrap();
        let mut cur = p;
        let mut hit_cap = false;
        for _ in 0..20 {
            match cur.refine(10) {
                Ok(next) => cur = next,
                Err(ModelError::RefinementOverflow { .. }) => {
                    hit_cap = true;
                    break;
                }
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
        assert!(hit_cap);
    }

    #[test]
    fn interval_containing_breakpoint_takes_lower_index() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert_eq!(p.interval_containing(0.25), 0);
        assert_eq!(p.interval_containing(0.3), 1);
        assert_eq!(p.interval_containing(1.0), 3);
        assert_eq!(p.interval_containing(0.0), 0);
    }

    #[test]
    fn observation_rejects_negative_counts() {
        assert!(Observation::new(-1.0, 2.0).is_err());
        assert!(Observation::new(1.0, f64::NAN).is_err());
        assert!(Observation::new(0.0, 0.0).is_ok());
    }

    #[test]
    fn target_validates_alpha() {
        assert!(ReliabilityTarget::new(0, None).is_err());
        assert!(ReliabilityTarget::new(10, Some(0.0)).is_err());
        assert!(ReliabilityTarget::new(10, Some(1.0)).is_err());
        assert!(ReliabilityTarget::new(10, Some(0.5)).is_ok());
    }

    #[test]
    fn placement_must_stay_in_intervals() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 0.5, 1.0]).unwrap();
        assert!(Placement::new(&p, vec![0.2, 0.7]).is_ok());
        assert!(Placement::new(&p, vec![0.6, 0.7]).is_err());
        assert!(Placement::new(&p, vec![0.2]).is_err());
    }
}
