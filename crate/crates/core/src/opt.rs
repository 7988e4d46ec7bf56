//! Offline optimum oracles.
//!
//! `opt_lp` solves a polynomial-size fractional relaxation: assignment
//! variables `x_uv` in [0, 1] and earned-revenue variables `e_uvk`, with
//! `e_uvk <= r_uv^(k) x_uv`, one unit of assignment per impression, and the
//! budget rows. Identical impressions are merged into one variable with an
//! assignment bound equal to their multiplicity, which preserves the LP value
//! and keeps adversary transcripts (thousands of clone impressions) tractable.
//!
//! `opt_brute` enumerates integral assignments for tiny instances and is the
//! ground-truth oracle in tests: "partial" semantics maximizes earnings per
//! assignment (laminar: exact bottom-up water-fill; general: a per-bidder LP
//! over aggregated bids), "aon" requires every full bid to fit.

use crate::forest::LaminarForest;
use crate::instance::{Instance, Mode};
use crate::rational::Rational;
use crate::simplex::{LinearProgram, LpValue, SimplexError};
use num_traits::Zero;
use std::collections::BTreeMap;

#[derive(Debug)]
pub enum OptError {
    TooLarge(String),
    Simplex(SimplexError),
}

impl std::fmt::Display for OptError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptError::TooLarge(s) => write!(f, "instance too large: {s}"),
            OptError::Simplex(e) => write!(f, "lp: {e}"),
        }
    }
}

impl std::error::Error for OptError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BruteSemantics {
    Partial,
    AllOrNothing,
}

/// Fractional offline optimum. Upper-bounds every feasible online outcome.
pub fn opt_lp(instance: &Instance) -> Result<LpValue, OptError> {
    let lp = build_offline_lp(instance);
    match lp.solve() {
        Ok(v) => Ok(v),
        // Budgets and bid caps bound the objective.
        Err(SimplexError::Unbounded) => unreachable!("offline LP is always bounded"),
        Err(e) => Err(OptError::Simplex(e)),
    }
}

fn build_offline_lp(instance: &Instance) -> LinearProgram {
    // Merge identical impressions: same sparse bid structure, any ids.
    let mut classes: BTreeMap<String, (usize, usize)> = BTreeMap::new(); // key -> (rep, mult)
    for (vi, imp) in instance.impressions.iter().enumerate() {
        let key = format!("{:?}", imp.bids);
        classes
            .entry(key)
            .and_modify(|e| e.1 += 1)
            .or_insert((vi, 1));
    }
    let classes: Vec<(usize, usize)> = classes.into_values().collect();

    let mut objective: Vec<Rational> = Vec::new();
    let mut rows: Vec<(Vec<(usize, Rational)>, Rational)> = Vec::new();
    let mut x_vars: Vec<Vec<Option<usize>>> = Vec::new(); // [class][bidder]
    let mut next = 0usize;
    for (rep, _) in &classes {
        let imp = &instance.impressions[*rep];
        let mut per_bidder = Vec::with_capacity(instance.bidders.len());
        for u in 0..instance.bidders.len() {
            if imp.bids[u].is_empty() {
                per_bidder.push(None);
            } else {
                per_bidder.push(Some(next));
                objective.push(Rational::zero());
                next += 1;
            }
        }
        x_vars.push(per_bidder);
    }
    // e-variables plus their bid-cap rows.
    let mut e_vars: Vec<Vec<Vec<usize>>> = Vec::new(); // [class][bidder][bid index]
    for (ci, (rep, _)) in classes.iter().enumerate() {
        let imp = &instance.impressions[*rep];
        let mut per_bidder = Vec::new();
        for u in 0..instance.bidders.len() {
            let mut vars = Vec::new();
            if let Some(x) = x_vars[ci][u] {
                for (_, r) in &imp.bids[u] {
                    let e = next;
                    next += 1;
                    objective.push(Rational::from_integer(1.into()));
                    rows.push((
                        vec![(e, Rational::from_integer(1.into())), (x, -r.clone())],
                        Rational::zero(),
                    ));
                    vars.push(e);
                }
            }
            per_bidder.push(vars);
        }
        e_vars.push(per_bidder);
    }
    // One unit of assignment per impression, multiplicity-aggregated.
    for (ci, (_, mult)) in classes.iter().enumerate() {
        let coeffs: Vec<(usize, Rational)> = x_vars[ci]
            .iter()
            .flatten()
            .map(|&x| (x, Rational::from_integer(1.into())))
            .collect();
        if !coeffs.is_empty() {
            rows.push((coeffs, Rational::from_integer((*mult as i64).into())));
        }
    }
    // Budget rows.
    for (u, bidder) in instance.bidders.iter().enumerate() {
        for c in &bidder.constraints {
            let mut coeffs: Vec<(usize, Rational)> = Vec::new();
            for (ci, (rep, _)) in classes.iter().enumerate() {
                let imp = &instance.impressions[*rep];
                for (bi, (dim, _)) in imp.bids[u].iter().enumerate() {
                    if c.contains(*dim) {
                        coeffs.push((e_vars[ci][u][bi], Rational::from_integer(1.into())));
                    }
                }
            }
            if !coeffs.is_empty() {
                rows.push((coeffs, c.budget.clone()));
            }
        }
    }
    LinearProgram {
        num_vars: next,
        objective,
        rows,
    }
}

/// Exhaustive integral search. Hard limits: at most 12 impressions and 4
/// bidders.
pub fn opt_brute(instance: &Instance, semantics: BruteSemantics) -> Result<Rational, OptError> {
    let nv = instance.impressions.len();
    let nu = instance.bidders.len();
    if nv > 12 || nu > 4 {
        return Err(OptError::TooLarge(format!(
            "{nv} impressions, {nu} bidders (limits: 12, 4)"
        )));
    }
    let forests: Vec<LaminarForest> = instance
        .bidders
        .iter()
        .map(|b| LaminarForest::build(b, instance.num_dimensions))
        .collect();
    let mut memo: Vec<BTreeMap<u16, Option<Rational>>> = vec![BTreeMap::new(); nu];
    let mut assignment = vec![usize::MAX; nv];
    let mut best = Rational::zero();
    search(
        instance,
        &forests,
        semantics,
        0,
        &mut assignment,
        &mut memo,
        &mut best,
    )?;
    Ok(best)
}

fn search(
    instance: &Instance,
    forests: &[LaminarForest],
    semantics: BruteSemantics,
    vi: usize,
    assignment: &mut Vec<usize>,
    memo: &mut Vec<BTreeMap<u16, Option<Rational>>>,
    best: &mut Rational,
) -> Result<(), OptError> {
    let nv = instance.impressions.len();
    let nu = instance.bidders.len();
    if vi == nv {
        let mut total = Rational::zero();
        for u in 0..nu {
            let mut mask: u16 = 0;
            for (v, &a) in assignment.iter().enumerate() {
                if a == u {
                    mask |= 1 << v;
                }
            }
            match bidder_value(instance, forests, semantics, u, mask, memo)? {
                Some(val) => total += val,
                None => return Ok(()), // infeasible under all-or-nothing
            }
        }
        if total > *best {
            *best = total;
        }
        return Ok(());
    }
    assignment[vi] = usize::MAX; // reject
    search(instance, forests, semantics, vi + 1, assignment, memo, best)?;
    for u in 0..nu {
        if instance.impressions[vi].bids[u].is_empty() {
            continue;
        }
        assignment[vi] = u;
        search(instance, forests, semantics, vi + 1, assignment, memo, best)?;
        assignment[vi] = usize::MAX;
    }
    Ok(())
}

fn bidder_value(
    instance: &Instance,
    forests: &[LaminarForest],
    semantics: BruteSemantics,
    u: usize,
    mask: u16,
    memo: &mut Vec<BTreeMap<u16, Option<Rational>>>,
) -> Result<Option<Rational>, OptError> {
    if let Some(v) = memo[u].get(&mask) {
        return Ok(v.clone());
    }
    // Aggregate bids over the assigned set; earnings decompose freely.
    let mut agg: BTreeMap<usize, Rational> = BTreeMap::new();
    for (vi, imp) in instance.impressions.iter().enumerate() {
        if mask & (1 << vi) == 0 {
            continue;
        }
        for (dim, r) in &imp.bids[u] {
            *agg.entry(*dim).or_insert_with(Rational::zero) += r;
        }
    }
    let value = match semantics {
        BruteSemantics::AllOrNothing => {
            let mut feasible = true;
            for c in &instance.bidders[u].constraints {
                let mut sum = Rational::zero();
                for (dim, r) in &agg {
                    if c.contains(*dim) {
                        sum += r;
                    }
                }
                if sum > c.budget {
                    feasible = false;
                    break;
                }
            }
            if feasible {
                Some(agg.values().fold(Rational::zero(), |acc, r| acc + r))
            } else {
                None
            }
        }
        BruteSemantics::Partial => Some(match instance.mode {
            Mode::Laminar => laminar_flow_value(&forests[u], &agg),
            Mode::General => general_partial_value(instance, u, &agg)?,
        }),
    };
    memo[u].insert(mask, value.clone());
    Ok(value)
}

/// Maximum earnings under a laminar family: bottom-up min of budget versus
/// the children's deliverable flow plus direct bid mass.
fn laminar_flow_value(forest: &LaminarForest, agg: &BTreeMap<usize, Rational>) -> Rational {
    fn flow(forest: &LaminarForest, agg: &BTreeMap<usize, Rational>, node: usize) -> Rational {
        let n = &forest.nodes[node];
        let mut sum = Rational::zero();
        let mut covered: Vec<usize> = Vec::new();
        for &c in &n.children {
            sum += flow(forest, agg, c);
            covered.extend(forest.nodes[c].dims.iter().copied());
        }
        covered.sort_unstable();
        for d in &n.dims {
            if covered.binary_search(d).is_err() {
                if let Some(r) = agg.get(d) {
                    sum += r;
                }
            }
        }
        sum.min(n.budget.clone())
    }
    let mut total = Rational::zero();
    let mut covered: Vec<usize> = Vec::new();
    for &root in &forest.roots {
        total += flow(forest, agg, root);
        covered.extend(forest.nodes[root].dims.iter().copied());
    }
    covered.sort_unstable();
    for (d, r) in agg {
        if covered.binary_search(d).is_err() {
            total += r; // dimension outside every constraint: uncapped
        }
    }
    total
}

/// Maximum earnings under an arbitrary family via a small exact LP over
/// aggregated per-dimension earnings.
fn general_partial_value(
    instance: &Instance,
    u: usize,
    agg: &BTreeMap<usize, Rational>,
) -> Result<Rational, OptError> {
    if agg.is_empty() {
        return Ok(Rational::zero());
    }
    let dims: Vec<usize> = agg.keys().copied().collect();
    let mut rows: Vec<(Vec<(usize, Rational)>, Rational)> = Vec::new();
    for (i, d) in dims.iter().enumerate() {
        rows.push((
            vec![(i, Rational::from_integer(1.into()))],
            agg[d].clone(),
        ));
    }
    for c in &instance.bidders[u].constraints {
        let coeffs: Vec<(usize, Rational)> = dims
            .iter()
            .enumerate()
            .filter(|(_, d)| c.contains(**d))
            .map(|(i, _)| (i, Rational::from_integer(1.into())))
            .collect();
        if !coeffs.is_empty() {
            rows.push((coeffs, c.budget.clone()));
        }
    }
    let lp = LinearProgram {
        num_vars: dims.len(),
        objective: vec![Rational::from_integer(1.into()); dims.len()],
        rows,
    };
    match lp.solve().map_err(OptError::Simplex)? {
        LpValue::Exact(v) => Ok(v),
        LpValue::Approx(_) => unreachable!("per-bidder LP is tiny"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{InstanceBuilder, Mode};
    use crate::rational::{rat, rat_int};

    #[test]
    fn lp_caps_at_budget() {
        let mut b = InstanceBuilder::new(Mode::Laminar, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(1));
        b.impression("v", &[(u, 0, rat_int(3))]);
        let inst = b.build().unwrap();
        assert_eq!(opt_lp(&inst).unwrap().exact().unwrap(), &rat_int(1));
    }

    #[test]
    fn lp_merges_identical_impressions() {
        let mut b = InstanceBuilder::new(Mode::Laminar, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(1));
        b.impression("v0", &[(u, 0, rat_int(1))]);
        b.impression("v1", &[(u, 0, rat_int(1))]);
        let inst = b.build().unwrap();
        let lp = build_offline_lp(&inst);
        // One x var and one e var after merging.
        assert_eq!(lp.num_vars, 2);
        assert_eq!(opt_lp(&inst).unwrap().exact().unwrap(), &rat_int(1));
    }

    #[test]
    fn brute_rejects_oversized() {
        let mut b = InstanceBuilder::new(Mode::General, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(1));
        for i in 0..13 {
            b.impression(&format!("v{i}"), &[(u, 0, rat(1, 100))]);
        }
        let inst = b.build().unwrap();
        assert!(matches!(
            opt_brute(&inst, BruteSemantics::Partial),
            Err(OptError::TooLarge(_))
        ));
    }

    #[test]
    fn empty_instance_is_zero() {
        let mut b = InstanceBuilder::new(Mode::General, 1);
        b.bidder("u0");
        let inst = b.build().unwrap();
        assert_eq!(opt_brute(&inst, BruteSemantics::Partial).unwrap(), rat_int(0));
        assert_eq!(opt_lp(&inst).unwrap().exact().unwrap(), &rat_int(0));
    }

    #[test]
    fn aon_never_exceeds_partial() {
        let mut b = InstanceBuilder::new(Mode::General, 2);
        let u = b.bidder("u0");
        b.constraint(u, "s01", &[0, 1], rat_int(1));
        b.impression("v0", &[(u, 0, rat(3, 4))]);
        b.impression("v1", &[(u, 1, rat(3, 4))]);
        let inst = b.build().unwrap();
        let partial = opt_brute(&inst, BruteSemantics::Partial).unwrap();
        let aon = opt_brute(&inst, BruteSemantics::AllOrNothing).unwrap();
        assert_eq!(partial, rat_int(1));
        assert_eq!(aon, rat(3, 4));
        assert!(aon <= partial);
    }

    #[test]
    fn laminar_flow_matches_lp_on_small_cases() {
        let mut b = InstanceBuilder::new(Mode::Laminar, 2);
        let u = b.bidder("u0");
        b.constraint(u, "s0", &[0], rat_int(1));
        b.constraint(u, "s1", &[1], rat_int(2));
        b.constraint(u, "root", &[0, 1], rat(5, 2));
        b.impression("v0", &[(u, 0, rat_int(1)), (u, 1, rat_int(1))]);
        b.impression("v1", &[(u, 1, rat_int(1))]);
        let inst = b.build().unwrap();
        let brute = opt_brute(&inst, BruteSemantics::Partial).unwrap();
        let lp = opt_lp(&inst).unwrap();
        assert_eq!(&brute, lp.exact().unwrap());
        assert_eq!(brute, rat(5, 2));
    }
}
