//! Self-contained dense-tableau simplex.
//!
//! Maximizes `c.z` subject to `A z <= b`, `z >= 0`, `b >= 0`, so the all-slack
//! basis is feasible and no phase-1 is needed. Entering columns follow
//! Dantzig's rule (largest reduced cost) until a degenerate stall, then
//! Bland's rule takes over permanently, which rules out cycling without
//! perturbation. Arithmetic is exact rational; a run exceeding the pivot
//! budget restarts once in double precision.

use crate::rational::{to_f64, Rational};
use num_traits::{Signed, Zero};

pub const EXACT_PIVOT_BUDGET: usize = 10_000;
const APPROX_PIVOT_BUDGET: usize = 200_000;
const APPROX_EPS: f64 = 1e-9;
/// Consecutive zero-progress pivots tolerated before switching to Bland.
const STALL_LIMIT: usize = 32;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub num_vars: usize,
    /// Maximization objective, dense over the variables.
    pub objective: Vec<Rational>,
    /// Each row: sparse coefficients and a nonnegative right-hand side.
    pub rows: Vec<(Vec<(usize, Rational)>, Rational)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpValue {
    Exact(Rational),
    /// Exact arithmetic gave up on the pivot budget; value is approximate.
    Approx(f64),
}

impl LpValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            LpValue::Exact(r) => to_f64(r),
            LpValue::Approx(x) => *x,
        }
    }

    pub fn exact(&self) -> Option<&Rational> {
        match self {
            LpValue::Exact(r) => Some(r),
            LpValue::Approx(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimplexError {
    Unbounded,
    NegativeRhs,
    PivotBudgetExhausted,
}

impl std::fmt::Display for SimplexError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimplexError::Unbounded => write!(f, "unbounded"),
            SimplexError::NegativeRhs => write!(f, "negative right-hand side"),
            SimplexError::PivotBudgetExhausted => write!(f, "pivot budget exhausted"),
        }
    }
}

impl std::error::Error for SimplexError {}

impl LinearProgram {
    pub fn solve(&self) -> Result<LpValue, SimplexError> {
        match self.solve_exact() {
            Ok(v) => Ok(LpValue::Exact(v)),
            Err(SimplexError::PivotBudgetExhausted) => {
                self.solve_approx().map(LpValue::Approx)
            }
            Err(e) => Err(e),
        }
    }

    fn solve_exact(&self) -> Result<Rational, SimplexError> {
        let n = self.num_vars;
        let m = self.rows.len();
        let width = n + m + 1;
        let mut rows: Vec<Vec<Rational>> = Vec::with_capacity(m);
        for (i, (coeffs, rhs)) in self.rows.iter().enumerate() {
            if rhs.is_negative() {
                return Err(SimplexError::NegativeRhs);
            }
            let mut row = vec![Rational::zero(); width];
            for (j, a) in coeffs {
                row[*j] = a.clone();
            }
            row[n + i] = Rational::from_integer(1.into());
            row[width - 1] = rhs.clone();
            rows.push(row);
        }
        let mut obj = vec![Rational::zero(); width];
        obj[..n].clone_from_slice(&self.objective);
        let mut basis: Vec<usize> = (n..n + m).collect();
        let mut stall = 0usize;

        for _ in 0..EXACT_PIVOT_BUDGET {
            let enter = if stall < STALL_LIMIT {
                // Dantzig: largest reduced cost.
                let mut best: Option<usize> = None;
                for j in 0..width - 1 {
                    if obj[j].is_positive()
                        && best.map_or(true, |b| obj[j] > obj[b])
                    {
                        best = Some(j);
                    }
                }
                best
            } else {
                // Bland: smallest improving column; cannot cycle.
                (0..width - 1).find(|&j| obj[j].is_positive())
            };
            let Some(enter) = enter else {
                return Ok(-obj[width - 1].clone());
            };
            let mut leave: Option<(usize, Rational)> = None;
            for i in 0..m {
                if !rows[i][enter].is_positive() {
                    continue;
                }
                let ratio = &rows[i][width - 1] / &rows[i][enter];
                let better = match &leave {
                    None => true,
                    Some((li, best)) => {
                        ratio < *best || (ratio == *best && basis[i] < basis[*li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            let Some((li, step)) = leave else {
                return Err(SimplexError::Unbounded);
            };
            if step.is_zero() {
                stall += 1;
            } else {
                stall = 0;
            }
            let pivot = rows[li][enter].clone();
            for x in rows[li].iter_mut() {
                if !x.is_zero() {
                    *x /= &pivot;
                }
            }
            for i in 0..m {
                if i == li || rows[i][enter].is_zero() {
                    continue;
                }
                let factor = rows[i][enter].clone();
                for j in 0..width {
                    if rows[li][j].is_zero() {
                        continue;
                    }
                    let delta = &factor * &rows[li][j];
                    rows[i][j] -= delta;
                }
            }
            if !obj[enter].is_zero() {
                let factor = obj[enter].clone();
                for j in 0..width {
                    if rows[li][j].is_zero() {
                        continue;
                    }
                    let delta = &factor * &rows[li][j];
                    obj[j] -= delta;
                }
            }
            basis[li] = enter;
        }
        Err(SimplexError::PivotBudgetExhausted)
    }

    fn solve_approx(&self) -> Result<f64, SimplexError> {
        let n = self.num_vars;
        let m = self.rows.len();
        let width = n + m + 1;
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
        for (i, (coeffs, rhs)) in self.rows.iter().enumerate() {
            let mut row = vec![0.0; width];
            for (j, a) in coeffs {
                row[*j] = to_f64(a);
            }
            row[n + i] = 1.0;
            row[width - 1] = to_f64(rhs);
            rows.push(row);
        }
        let mut obj = vec![0.0; width];
        for (j, c) in self.objective.iter().enumerate() {
            obj[j] = to_f64(c);
        }
        let mut basis: Vec<usize> = (n..n + m).collect();
        for _ in 0..APPROX_PIVOT_BUDGET {
            let Some(enter) = (0..width - 1).find(|&j| obj[j] > APPROX_EPS) else {
                return Ok(-obj[width - 1]);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                if rows[i][enter] <= APPROX_EPS {
                    continue;
                }
                let ratio = rows[i][width - 1] / rows[i][enter];
                let better = match &leave {
                    None => true,
                    Some((li, best)) => {
                        ratio < *best || (ratio == *best && basis[i] < basis[*li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            let Some((li, _)) = leave else {
                return Err(SimplexError::Unbounded);
            };
            let pivot = rows[li][enter];
            for x in rows[li].iter_mut() {
                *x /= pivot;
            }
            for i in 0..m {
                if i == li || rows[i][enter] == 0.0 {
                    continue;
                }
                let factor = rows[i][enter];
                for j in 0..width {
                    rows[i][j] -= factor * rows[li][j];
                }
            }
            let factor = obj[enter];
            if factor != 0.0 {
                for j in 0..width {
                    obj[j] -= factor * rows[li][j];
                }
            }
            basis[li] = enter;
        }
        Err(SimplexError::PivotBudgetExhausted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    fn lp(
        num_vars: usize,
        objective: Vec<Rational>,
        rows: Vec<(Vec<(usize, Rational)>, Rational)>,
    ) -> LinearProgram {
        LinearProgram {
            num_vars,
            objective,
            rows,
        }
    }

    #[test]
    fn one_dimensional_cap() {
        // max x s.t. x <= 3/2.
        let p = lp(
            1,
            vec![rat_int(1)],
            vec![(vec![(0, rat_int(1))], rat(3, 2))],
        );
        assert_eq!(p.solve().unwrap(), LpValue::Exact(rat(3, 2)));
    }

    #[test]
    fn classic_two_var() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36.
        let p = lp(
            2,
            vec![rat_int(3), rat_int(5)],
            vec![
                (vec![(0, rat_int(1))], rat_int(4)),
                (vec![(1, rat_int(2))], rat_int(12)),
                (vec![(0, rat_int(3)), (1, rat_int(2))], rat_int(18)),
            ],
        );
        assert_eq!(p.solve().unwrap(), LpValue::Exact(rat_int(36)));
    }

    #[test]
    fn unbounded_detected() {
        let p = lp(2, vec![rat_int(1), rat_int(0)], vec![(vec![(1, rat_int(1))], rat_int(1))]);
        assert_eq!(p.solve().unwrap_err(), SimplexError::Unbounded);
    }

    #[test]
    fn degenerate_rows_terminate() {
        // Zero rhs rows exercise Bland's anti-cycling path.
        let p = lp(
            2,
            vec![rat_int(1), rat_int(1)],
            vec![
                (vec![(0, rat_int(1)), (1, rat_int(-1))], rat_int(0)),
                (vec![(0, rat_int(-1)), (1, rat_int(1))], rat_int(0)),
                (vec![(0, rat_int(1)), (1, rat_int(1))], rat_int(2)),
            ],
        );
        assert_eq!(p.solve().unwrap(), LpValue::Exact(rat_int(2)));
    }

    #[test]
    fn value_is_replay_stable() {
        let p = lp(
            3,
            vec![rat_int(2), rat_int(1), rat_int(1)],
            vec![
                (vec![(0, rat_int(1)), (1, rat_int(1))], rat_int(3)),
                (vec![(1, rat_int(1)), (2, rat_int(1))], rat_int(2)),
                (vec![(0, rat_int(1)), (2, rat_int(1))], rat(5, 2)),
            ],
        );
        let a = p.solve().unwrap();
        let b = p.solve().unwrap();
        assert_eq!(a, b);
    }
}
