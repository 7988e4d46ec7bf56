//! Mutable allocation state shared by every strategy.
//!
//! Tracks per-(bidder, dimension) earned revenue `R_u^(k)`, per-constraint
//! utilization, the assignment log, and the running primal objective. All
//! checks are exact: an `earn` that would push any constraint past its budget
//! is rejected before any mutation.

use crate::instance::{Impression, Instance};
use crate::rational::Rational;
use num_traits::{Signed, Zero};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentRecord {
    pub impression: String,
    /// `None` means the impression was rejected.
    pub bidder: Option<usize>,
    /// Per-dimension earned amounts, sorted by dimension; zero rows allowed.
    pub earned: Vec<(usize, Rational)>,
}

#[derive(Debug, Clone)]
pub struct AllocationState {
    /// earned[u][k] = revenue earned on dimension k for bidder u.
    earned: Vec<Vec<Rational>>,
    /// constraint_earned[u][ci] = sum of earned over the constraint's dims.
    constraint_earned: Vec<Vec<Rational>>,
    log: Vec<AssignmentRecord>,
    primal_total: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AllocError {
    BudgetOverflow {
        bidder: String,
        constraint: String,
    },
    BidExceeded {
        bidder: String,
        dim: usize,
    },
    UnknownConstraint(String),
}

impl std::fmt::Display for AllocError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AllocError::BudgetOverflow { bidder, constraint } => {
                write!(f, "budget overflow: bidder {bidder} constraint {constraint}")
            }
            AllocError::BidExceeded { bidder, dim } => {
                write!(f, "earned amount exceeds bid: bidder {bidder} dim {dim}")
            }
            AllocError::UnknownConstraint(id) => write!(f, "unknown constraint id: {id}"),
        }
    }
}

impl std::error::Error for AllocError {}

impl AllocationState {
    pub fn new(instance: &Instance) -> Self {
        AllocationState {
            earned: instance
                .bidders
                .iter()
                .map(|_| vec![Rational::zero(); instance.num_dimensions])
                .collect(),
            constraint_earned: instance
                .bidders
                .iter()
                .map(|b| vec![Rational::zero(); b.constraints.len()])
                .collect(),
            log: Vec::new(),
            primal_total: Rational::zero(),
        }
    }

    pub fn earned(&self, bidder: usize, dim: usize) -> &Rational {
        &self.earned[bidder][dim]
    }

    pub fn constraint_earned(&self, bidder: usize, constraint: usize) -> &Rational {
        &self.constraint_earned[bidder][constraint]
    }

    pub fn primal_total(&self) -> &Rational {
        &self.primal_total
    }

    pub fn log(&self) -> &[AssignmentRecord] {
        &self.log
    }

    /// Utilization `kappa_u^(s)` in `[0, 1]`.
    pub fn kappa(&self, instance: &Instance, bidder: usize, constraint: usize) -> Rational {
        &self.constraint_earned[bidder][constraint]
            / &instance.bidders[bidder].constraints[constraint].budget
    }

    pub fn is_tight(&self, instance: &Instance, bidder: usize, constraint: usize) -> bool {
        self.constraint_earned[bidder][constraint]
            == instance.bidders[bidder].constraints[constraint].budget
    }

    /// `B_u^(s)` minus revenue already earned over the constraint's dims.
    pub fn remaining_capacity(
        &self,
        instance: &Instance,
        bidder: usize,
        constraint_id: &str,
    ) -> Result<Rational, AllocError> {
        let b = &instance.bidders[bidder];
        let ci = b
            .constraints
            .iter()
            .position(|c| c.id == constraint_id)
            .ok_or_else(|| AllocError::UnknownConstraint(constraint_id.to_string()))?;
        Ok(self.remaining_by_index(instance, bidder, ci))
    }

    pub fn remaining_by_index(
        &self,
        instance: &Instance,
        bidder: usize,
        constraint: usize,
    ) -> Rational {
        let rem = &instance.bidders[bidder].constraints[constraint].budget
            - &self.constraint_earned[bidder][constraint];
        debug_assert!(!rem.is_negative());
        rem
    }

    /// The most an additional earn on `dim` may be without overflowing any
    /// constraint of `bidder` containing it. `None` when no constraint caps
    /// the dimension.
    pub fn headroom(&self, instance: &Instance, bidder: usize, dim: usize) -> Option<Rational> {
        instance.bidders[bidder]
            .constraints_of_dim
            .get(&dim)
            .map(|cis| {
                cis.iter()
                    .map(|&ci| self.remaining_by_index(instance, bidder, ci))
                    .min()
                    .expect("constraint list nonempty")
            })
    }

    /// Records an assignment of `imp` to `bidder`, earning `amounts` per
    /// dimension. Fails without mutating if any amount exceeds the bid or any
    /// constraint would overflow. The impression is passed by reference so
    /// adaptive drivers can stream impressions that are not part of a stored
    /// instance yet.
    pub fn earn(
        &mut self,
        instance: &Instance,
        bidder: usize,
        imp: &Impression,
        amounts: &[(usize, Rational)],
    ) -> Result<(), AllocError> {
        let b = &instance.bidders[bidder];
        for (dim, amount) in amounts {
            if amount.is_negative() {
                return Err(AllocError::BidExceeded {
                    bidder: b.id.clone(),
                    dim: *dim,
                });
            }
            let bid = imp.bid(bidder, *dim).cloned().unwrap_or_else(Rational::zero);
            if *amount > bid {
                return Err(AllocError::BidExceeded {
                    bidder: b.id.clone(),
                    dim: *dim,
                });
            }
        }
        for (ci, c) in b.constraints.iter().enumerate() {
            let mut add = Rational::zero();
            for (dim, amount) in amounts {
                if c.contains(*dim) {
                    add += amount;
                }
            }
            if add.is_zero() {
                continue;
            }
            if &self.constraint_earned[bidder][ci] + &add > c.budget {
                return Err(AllocError::BudgetOverflow {
                    bidder: b.id.clone(),
                    constraint: c.id.clone(),
                });
            }
        }
        for (dim, amount) in amounts {
            if amount.is_zero() {
                continue;
            }
            self.earned[bidder][*dim] += amount;
            self.primal_total += amount;
            for &ci in b.constraints_of_dim.get(dim).into_iter().flatten() {
                self.constraint_earned[bidder][ci] += amount;
            }
        }
        self.log.push(AssignmentRecord {
            impression: imp.id.clone(),
            bidder: Some(bidder),
            earned: amounts.to_vec(),
        });
        Ok(())
    }

    pub fn record_reject(&mut self, imp: &Impression) {
        self.log.push(AssignmentRecord {
            impression: imp.id.clone(),
            bidder: None,
            earned: Vec::new(),
        });
    }

    /// Ledger consistency: the primal total recomputed from the log.
    pub fn recompute_primal_from_log(&self) -> Rational {
        self.log
            .iter()
            .flat_map(|rec| rec.earned.iter().map(|(_, r)| r))
            .fold(Rational::zero(), |acc, r| acc + r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{InstanceBuilder, Mode};
    use crate::rational::{rat, rat_int};

    fn fig1_like() -> Instance {
        // Dimension-1 budget nested in an overall budget, plus free dims.
        let mut b = InstanceBuilder::new(Mode::Laminar, 4);
        let u = b.bidder("u0");
        b.constraint(u, "age_30_39", &[1, 2], rat_int(1000));
        b.constraint(u, "overall", &[0, 1, 2, 3], rat_int(2500));
        b.impression("warmup", &[(u, 0, rat_int(500))]);
        b.impression("v", &[(u, 0, rat_int(10))]);
        b.build().unwrap()
    }

    #[test]
    fn earn_accumulates_per_dimension() {
        let inst = fig1_like();
        let mut st = AllocationState::new(&inst);
        st.earn(&inst, 0, &inst.impressions[0], &[(0, rat_int(500))]).unwrap();
        st.earn(&inst, 0, &inst.impressions[1], &[(0, rat_int(10))]).unwrap();
        assert_eq!(st.earned(0, 0), &rat_int(510));
        assert_eq!(st.primal_total(), &rat_int(510));
    }

    #[test]
    fn zero_earn_only_logs() {
        let inst = fig1_like();
        let mut st = AllocationState::new(&inst);
        st.earn(&inst, 0, &inst.impressions[0], &[(0, rat_int(0))]).unwrap();
        assert_eq!(st.primal_total(), &rat_int(0));
        assert_eq!(st.log().len(), 1);
    }

    #[test]
    fn overflow_is_rejected_without_mutation() {
        let mut b = InstanceBuilder::new(Mode::Laminar, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(5));
        b.impression("v0", &[(u, 0, rat_int(2))]);
        b.impression("v1", &[(u, 0, rat_int(4))]);
        let inst = b.build().unwrap();
        let mut st = AllocationState::new(&inst);
        st.earn(&inst, 0, &inst.impressions[0], &[(0, rat_int(2))]).unwrap();
        assert_eq!(st.remaining_capacity(&inst, 0, "s").unwrap(), rat_int(3));
        let err = st.earn(&inst, 0, &inst.impressions[1], &[(0, rat_int(4))]).unwrap_err();
        assert!(matches!(err, AllocError::BudgetOverflow { .. }));
        assert_eq!(st.primal_total(), &rat_int(2));
        // Earning exactly the remaining capacity is fine.
        st.earn(&inst, 0, &inst.impressions[1], &[(0, rat_int(3))]).unwrap();
        assert_eq!(st.remaining_capacity(&inst, 0, "s").unwrap(), rat_int(0));
        assert_eq!(st.kappa(&inst, 0, 0), rat_int(1));
    }

    #[test]
    fn unknown_constraint_id_errors() {
        let inst = fig1_like();
        let st = AllocationState::new(&inst);
        assert!(st.remaining_capacity(&inst, 0, "nope").is_err());
    }

    #[test]
    fn primal_total_matches_log_replay() {
        let inst = fig1_like();
        let mut st = AllocationState::new(&inst);
        st.earn(&inst, 0, &inst.impressions[0], &[(0, rat(500, 1))]).unwrap();
        st.record_reject(&inst.impressions[1]);
        assert_eq!(st.recompute_primal_from_log(), *st.primal_total());
    }
}
