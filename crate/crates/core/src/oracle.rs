//! Independent verification: brute-force multi-resolution grid minimization
//! of the reduced objective (including the capped-future-failures variant),
//! and the closed-form uniform-prior baseline.
//!
//! Not a production solver: the grid search costs grow with `2^n` corner
//! restarts and are guarded accordingly.

use thiserror::Error;

use crate::model::IntervalPartition;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("cost guard: {0}")]
    CostGuard(&'static str),
    #[error("capped objective requires l < m (got l={l}, m={m})")]
    InvalidCap { l: u32, m: u32 },
    #[error("no evaluable placement on the grid")]
    EmptyGrid,
}

/// Which objective the grid minimizes: the all-future-successes form, or the
/// variant tolerating at most `l` failures among the `m` future demands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Standard,
    Capped { l: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    /// Grid points per interval, endpoints included.
    pub density: usize,
    /// Total rounds: one full-interval pass with corner restarts, then
    /// `levels - 1` window refinements around the best point.
    pub levels: usize,
    /// Window shrink factor per refinement round.
    pub shrink: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            density: 2000,
            levels: 3,
            shrink: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub phi: f64,
    pub placement: Vec<f64>,
}

const MAX_INTERVALS: usize = 6;
const MAX_DENSITY: usize = 100_000;
const MAX_SWEEPS: usize = 60;

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn log_pow_term(x: f64, r: f64, e: f64) -> f64 {
    let mut t = 0.0;
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

/// `ln C(m, s)` by direct log summation.
fn ln_choose(m: u32, s: u32) -> f64 {
    let mut acc = 0.0;
    for j in 1..=s {
        acc += ((m - s + j) as f64).ln() - (j as f64).ln();
    }
    acc
}

/// Log numerator term for one mass: the probability that position `x`
/// produces an acceptable future outcome, times the observed likelihood.
fn num_term(kind: ObjectiveKind, log_p: f64, x: f64, r: f64, k: f64, m: u32) -> f64 {
    let mk = m as f64 + k;
    match kind {
        ObjectiveKind::Standard => log_p + log_pow_term(x, r, mk),
        ObjectiveKind::Capped { l } => {
            let mut acc = f64::NEG_INFINITY;
            for s in 0..=l {
                let t = log_p + ln_choose(m, s) + log_pow_term(x, r + s as f64, mk - s as f64);
                acc = log_add(acc, t);
            }
            acc
        }
    }
}

fn den_term(log_p: f64, x: f64, r: f64, k: f64) -> f64 {
    log_p + log_pow_term(x, r, k)
}

/// Log objective at a full placement; `None` when every denominator term
/// vanishes.
fn log_objective(
    p: &IntervalPartition,
    kind: ObjectiveKind,
    xs: &[f64],
    r: f64,
    k: f64,
    m: u32,
) -> Option<f64> {
    let mut num = f64::NEG_INFINITY;
    let mut den = f64::NEG_INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        let lp = p.mass(i).ln();
        num = log_add(num, num_term(kind, lp, x, r, k, m));
        den = log_add(den, den_term(lp, x, r, k));
    }
    if den == f64::NEG_INFINITY {
        None
    } else {
        Some(num - den)
    }
}

struct Sweeper<'a> {
    p: &'a IntervalPartition,
    kind: ObjectiveKind,
    r: f64,
    k: f64,
    m: u32,
    density: usize,
    windows: Vec<(f64, f64)>,
}

impl Sweeper<'_> {
    /// One pass of coordinate sweeps from `xs`; returns the (possibly
    /// improved) log objective, or `None` if nothing was evaluable.
    fn descend(&self, xs: &mut [f64]) -> Option<f64> {
        let n = self.p.len();
        let mut best = log_objective(self.p, self.kind, xs, self.r, self.k, self.m);
        for _ in 0..MAX_SWEEPS {
            let mut moved = false;
            for i in 0..n {
                // Log-sum terms of all other coordinates stay fixed during
                // the sweep of coordinate i.
                let mut num_rest = f64::NEG_INFINITY;
                let mut den_rest = f64::NEG_INFINITY;
                for (j, &x) in xs.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let lp = self.p.mass(j).ln();
                    num_rest = log_add(num_rest, num_term(self.kind, lp, x, self.r, self.k, self.m));
                    den_rest = log_add(den_rest, den_term(lp, x, self.r, self.k));
                }
                let lp = self.p.mass(i).ln();
                let (lo, hi) = self.windows[i];
                let points = if hi > lo { self.density.max(2) } else { 1 };
                let mut local_best: Option<(f64, f64)> = None;
                for s in 0..points {
                    let x = if points == 1 {
                        lo
                    } else if s == points - 1 {
                        hi
                    } else {
                        lo + (hi - lo) * s as f64 / (points - 1) as f64
                    };
                    let num = log_add(num_rest, num_term(self.kind, lp, x, self.r, self.k, self.m));
                    let den = log_add(den_rest, den_term(lp, x, self.r, self.k));
                    if den == f64::NEG_INFINITY {
                        continue;
                    }
                    let value = num - den;
                    if local_best.is_none_or(|(v, _)| value < v) {
                        local_best = Some((value, x));
                    }
                }
                if let Some((value, x)) = local_best {
                    if best.is_none_or(|b| value < b) {
                        if xs[i] != x {
                            moved = true;
                        }
                        xs[i] = x;
                        best = Some(value);
                    }
                }
            }
            if !moved {
                break;
            }
        }
        best
    }
}

/// Multi-resolution coordinate-descent minimization of the reduced objective.
///
/// Round one sweeps full intervals, restarted from every corner of the
/// endpoint hypercube; each later round shrinks the per-coordinate search
/// window by `shrink` around the incumbent and descends again.
pub fn grid_minimize(
    partition: &IntervalPartition,
    kind: ObjectiveKind,
    r: f64,
    k: f64,
    m: u32,
    opts: &GridOptions,
) -> Result<GridSolution, OracleError> {
    let n = partition.len();
    if n > MAX_INTERVALS {
        return Err(OracleError::CostGuard("more than 6 intervals"));
    }
    if opts.density < 50 || opts.density > MAX_DENSITY {
        return Err(OracleError::CostGuard("density outside [50, 100000]"));
    }
    if opts.levels < 1 || opts.levels > 10 {
        return Err(OracleError::CostGuard("levels outside [1, 10]"));
    }
    if let ObjectiveKind::Capped { l } = kind {
        if l >= m {
            return Err(OracleError::InvalidCap { l, m });
        }
    }

    let full: Vec<(f64, f64)> = (0..n)
        .map(|i| (partition.lower(i), partition.upper(i)))
        .collect();
    let mut sweeper = Sweeper {
        p: partition,
        kind,
        r,
        k,
        m,
        density: opts.density,
        windows: full.clone(),
    };

    // Round one: corner restarts over full intervals.
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    for mask in 0..(1usize << n) {
        let mut xs: Vec<f64> = (0..n)
            .map(|i| {
                if mask >> i & 1 == 1 {
                    full[i].1
                } else {
                    full[i].0
                }
            })
            .collect();
        if let Some(value) = sweeper.descend(&mut xs) {
            if incumbent.as_ref().is_none_or(|(v, _)| value < *v) {
                incumbent = Some((value, xs));
            }
        }
    }
    let (mut best_value, mut best_xs) = incumbent.ok_or(OracleError::EmptyGrid)?;

    // Refinement rounds: shrink windows around the incumbent.
    for level in 1..opts.levels {
        let scale = opts.shrink.powi(level as i32);
        sweeper.windows = (0..n)
            .map(|i| {
                let half = 0.5 * (full[i].1 - full[i].0) / scale;
                let lo = (best_xs[i] - half).max(full[i].0);
                let hi = (best_xs[i] + half).min(full[i].1);
                (lo, hi)
            })
            .collect();
        let mut xs = best_xs.clone();
        if let Some(value) = sweeper.descend(&mut xs) {
            if value < best_value {
                best_value = value;
                best_xs = xs;
            }
        }
    }

    Ok(GridSolution {
        phi: best_value.exp(),
        placement: best_xs,
    })
}

/// Posterior predictive probability of `m` failure-free demands under the
/// uniform prior: `prod_{i=1..m} (k+i) / (r+k+1+i)`, evaluated as a sum of
/// `ln1p` terms so that boundary demand counts stay exact to ~1e-14.
pub fn beta_predictive(m: u32, k: f64, r: f64) -> f64 {
    let mut acc = 0.0;
    for i in 1..=m {
        acc += (-(r + 1.0) / (r + k + 1.0 + i as f64)).ln_1p();
    }
    acc.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IntervalPartition;

    #[test]
    fn beta_predictive_single_factor() {
        // m = 1 reduces to (k+1)/(r+k+2).
        for (k, r) in [(0.0, 0.0), (10.0, 2.0), (4601.0, 0.0)] {
            let got = beta_predictive(1, k, r);
            let expect = (k + 1.0) / (r + k + 2.0);
            assert!((got - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn beta_predictive_laplace_rule() {
        assert!((beta_predictive(1, 0.0, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn beta_predictive_boundary_cell() {
        // Telescoping product for r = 0: (k+1)/(k+m+1).
        let target = 1.0 - 0.009895;
        let at = beta_predictive(46, 4602.0, 0.0);
        let below = beta_predictive(46, 4601.0, 0.0);
        assert!((at - 4603.0 / 4649.0).abs() < 1e-14);
        assert!((below - 4602.0 / 4648.0).abs() < 1e-14);
        assert!(at >= target && below < target);
    }

    #[test]
    fn beta_predictive_monotonicity() {
        let base = beta_predictive(46, 1000.0, 3.0);
        assert!(beta_predictive(46, 1001.0, 3.0) > base);
        assert!(beta_predictive(46, 1000.0, 4.0) < base);
        assert!(beta_predictive(47, 1000.0, 3.0) < base);
    }

    #[test]
    fn grid_single_interval_r_zero_goes_to_one() {
        let p = IntervalPartition::new(&[0.0, 1.0], &[1.0], false).unwrap();
        let opts = GridOptions {
            density: 200,
            levels: 2,
            shrink: 50.0,
        };
        let m = 5u32;
        let sol = grid_minimize(&p, ObjectiveKind::Standard, 0.0, 10.0, m, &opts).unwrap();
        // x = 1 itself is inadmissible (0/0); the grid stops one step short.
        let step = 1.0 / (200.0 * 50.0 - 1.0);
        assert!(sol.placement[0] >= 1.0 - 2.0 * step);
        assert!(sol.phi <= (2.0 * step).powi(m as i32));
    }

    #[test]
    fn capped_with_zero_cap_is_bitwise_standard() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 0.2, 0.6, 1.0]).unwrap();
        let opts = GridOptions {
            density: 120,
            levels: 2,
            shrink: 50.0,
        };
        let std = grid_minimize(&p, ObjectiveKind::Standard, 2.0, 30.0, 7, &opts).unwrap();
        let cap = grid_minimize(&p, ObjectiveKind::Capped { l: 0 }, 2.0, 30.0, 7, &opts).unwrap();
        assert_eq!(std.phi.to_bits(), cap.phi.to_bits());
        assert_eq!(std.placement, cap.placement);
    }

    #[test]
    fn capped_value_nondecreasing_in_cap() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 0.2, 0.6, 1.0]).unwrap();
        let opts = GridOptions {
            density: 120,
            levels: 2,
            shrink: 50.0,
        };
        let mut prev = 0.0;
        for l in 0..4 {
            let sol =
                grid_minimize(&p, ObjectiveKind::Capped { l }, 2.0, 30.0, 7, &opts).unwrap();
            assert!(sol.phi >= prev - 1e-15, "l={l}: {} < {prev}", sol.phi);
            prev = sol.phi;
        }
    }

    #[test]
    fn capped_requires_l_below_m() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 0.2, 0.6, 1.0]).unwrap();
        let err = grid_minimize(
            &p,
            ObjectiveKind::Capped { l: 7 },
            2.0,
            30.0,
            7,
            &GridOptions::default(),
        );
        assert_eq!(err.unwrap_err(), OracleError::InvalidCap { l: 7, m: 7 });
    }

    #[test]
    fn refinement_levels_never_increase_the_minimum() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 0.1, 0.4, 1.0]).unwrap();
        let mut prev = f64::INFINITY;
        for levels in 1..=4 {
            let opts = GridOptions {
                density: 200,
                levels,
                shrink: 50.0,
            };
            let sol = grid_minimize(&p, ObjectiveKind::Standard, 3.0, 40.0, 9, &opts).unwrap();
            assert!(sol.phi <= prev, "levels={levels}: {} > {prev}", sol.phi);
            prev = sol.phi;
        }
    }

    #[test]
    fn cost_guards() {
        let p = IntervalPartition::uniform_consistent(&[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 1.0])
            .unwrap();
        assert!(matches!(
            grid_minimize(&p, ObjectiveKind::Standard, 1.0, 1.0, 2, &GridOptions::default()),
            Err(OracleError::CostGuard(_))
        ));
        let p = IntervalPartition::uniform_consistent(&[0.0, 0.5, 1.0]).unwrap();
        let opts = GridOptions {
            density: 10,
            ..Default::default()
        };
        assert!(matches!(
            grid_minimize(&p, ObjectiveKind::Standard, 1.0, 1.0, 2, &opts),
            Err(OracleError::CostGuard(_))
        ));
    }
}
