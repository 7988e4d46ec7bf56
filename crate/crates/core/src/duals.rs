//! Dual solutions and certificate auditors.
//!
//! Two dual forms are used. The transformed dual D' carries one monotone
//! variable `gamma_u^(s) = (e^(g) - 1)/(e - 1)` per constraint, where `g` is
//! the running maximum label over the constraint's ancestors; its objective
//! telescopes over the laminar forest. The natural dual D with 0/1 `alpha`
//! variables is only used for the greedy dual-fitting certificate.
//!
//! Exponentials force `sigma` and `gamma` into doubles, but the `g` arguments
//! stay exact rationals, so the monotonicity and worst-type selections below
//! are exact.

use crate::forest::LaminarForest;
use crate::instance::Instance;
use crate::rational::{to_f64, Rational};
use num_traits::{One, Zero};

/// e / (e - 1), the AdLaminar competitive ratio.
pub fn rho() -> f64 {
    std::f64::consts::E / (std::f64::consts::E - 1.0)
}

/// Dual state for the transformed formulation D'.
#[derive(Debug, Clone)]
pub struct DualPrime {
    /// One entry per impression, in arrival order.
    pub sigma: Vec<f64>,
    /// g[bidder][node]: exact max-ancestor-label per forest node.
    pub g: Vec<Vec<Rational>>,
}

/// `gamma = (e^g - 1) / (e - 1)`; 0 at g = 0 and 1 at g = 1.
pub fn gamma_of_g(g: &Rational) -> f64 {
    (to_f64(g).exp() - 1.0) / (std::f64::consts::E - 1.0)
}

/// D' objective: `sum_v sigma_v + sum_u sum_s B(s) (gamma(s) - gamma(p(s)))`
/// with `gamma(p(s)) = 0` for roots.
pub fn dual_prime_objective(
    instance: &Instance,
    forests: &[LaminarForest],
    dual: &DualPrime,
) -> f64 {
    let mut obj: f64 = dual.sigma.iter().sum();
    for (u, forest) in forests.iter().enumerate() {
        for (ni, node) in forest.nodes.iter().enumerate() {
            let g_here = gamma_of_g(&dual.g[u][ni]);
            let g_parent = node
                .parent
                .map(|p| gamma_of_g(&dual.g[u][p]))
                .unwrap_or(0.0);
            obj += to_f64(&instance.bidders[u].constraints[node.constraint].budget)
                * (g_here - g_parent);
        }
    }
    obj
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioAudit {
    pub pass: bool,
    pub dual_objective: f64,
    pub bound: f64,
    /// `dual - rho * primal`, positive when the certificate overshoots.
    pub residual: f64,
}

/// Checks `dual <= rho * primal` within a relative tolerance.
pub fn audit_ratio(primal_total: &Rational, dual_objective: f64, tol: f64) -> RatioAudit {
    let primal = to_f64(primal_total);
    let scale = primal.max(1.0);
    let bound = rho() * primal * (1.0 + tol) + tol * scale;
    RatioAudit {
        pass: dual_objective <= bound,
        dual_objective,
        bound,
        residual: dual_objective - rho() * primal,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityAudit {
    pub pass: bool,
    /// Worst relative residual of the D' bid constraint over all (u, v).
    pub worst_residual: f64,
    /// Eq. gamma(s) >= gamma(parent(s)) for every constraint, checked exactly.
    pub monotone_ok: bool,
}

/// End-of-run feasibility of D'. For each (bidder, impression) the binding
/// assignment type is `t* = {k : g(singleton k) < 1}`; the residual there
/// dominates every other type, which `worst_type_residual_brute` cross-checks
/// on small instances.
pub fn audit_feasibility_dprime(
    instance: &Instance,
    forests: &[LaminarForest],
    dual: &DualPrime,
    tol: f64,
) -> FeasibilityAudit {
    let one = Rational::one();
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut monotone_ok = true;
    for (u, forest) in forests.iter().enumerate() {
        for (ni, node) in forest.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                if dual.g[u][ni] < dual.g[u][p] {
                    monotone_ok = false;
                }
            }
        }
    }
    // All-types brute force cross-checks the t* shortcut on small instances.
    let brute = instance.num_dimensions <= 12;
    for (vi, imp) in instance.impressions.iter().enumerate() {
        for (u, forest) in forests.iter().enumerate() {
            let mut lhs_gap = 0.0; // sum over t* of (1 - gamma) r
            let mut scale = 1.0f64;
            for (dim, r) in &imp.bids[u] {
                let Some(leaf) = forest.singleton_of_dim(*dim) else {
                    continue;
                };
                if dual.g[u][leaf] < one {
                    let r = to_f64(r);
                    lhs_gap += (1.0 - gamma_of_g(&dual.g[u][leaf])) * r;
                    scale += r;
                }
            }
            let mut residual = (lhs_gap - dual.sigma[vi]) / scale;
            if brute {
                let gaps: Vec<f64> = imp.bids[u]
                    .iter()
                    .map(|(dim, r)| {
                        let gamma = forest
                            .singleton_of_dim(*dim)
                            .map(|leaf| gamma_of_g(&dual.g[u][leaf]))
                            .unwrap_or(0.0);
                        (1.0 - gamma) * to_f64(r)
                    })
                    .collect();
                for mask in 0u32..(1 << gaps.len()) {
                    let gap: f64 = gaps
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(_, g)| g)
                        .sum();
                    residual = residual.max((gap - dual.sigma[vi]) / scale);
                }
            }
            if residual > worst {
                worst = residual;
            }
        }
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0; // vacuous: no impressions
    }
    FeasibilityAudit {
        pass: monotone_ok && worst <= tol,
        worst_residual: worst,
        monotone_ok,
    }
}

/// Residual of the D' bid constraint maximized by brute force over all
/// assignment types `t`. Test-only cross-check of the `t*` shortcut;
/// exponential in the number of bid dimensions.
pub fn worst_type_residual_brute(
    instance: &Instance,
    forests: &[LaminarForest],
    dual: &DualPrime,
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (vi, imp) in instance.impressions.iter().enumerate() {
        for (u, forest) in forests.iter().enumerate() {
            let bids = &imp.bids[u];
            assert!(bids.len() <= 12, "brute force over types needs few dims");
            for mask in 0u32..(1 << bids.len()) {
                let mut gap = 0.0;
                for (i, (dim, r)) in bids.iter().enumerate() {
                    if mask & (1 << i) == 0 {
                        continue;
                    }
                    let gamma = forest
                        .singleton_of_dim(*dim)
                        .map(|leaf| gamma_of_g(&dual.g[u][leaf]))
                        .unwrap_or(0.0);
                    gap += (1.0 - gamma) * to_f64(r);
                }
                worst = worst.max(gap - dual.sigma[vi]);
            }
        }
    }
    worst
}

/// Dual-fitting certificate for the greedy algorithm, in the natural dual D.
#[derive(Debug, Clone)]
pub struct DualFit {
    /// sigma[v] = revenue the greedy run earned from impression v, exact.
    pub sigma: Vec<Rational>,
    /// alpha[bidder][constraint] in {0, 1}.
    pub alpha: Vec<Vec<bool>>,
}

/// Sets `alpha = 1` exactly on constraints at capacity whose ancestors are
/// all slack, and `sigma_v` to the earned revenue per impression.
pub fn greedy_dual_fit(
    instance: &Instance,
    forests: &[LaminarForest],
    constraint_earned: impl Fn(usize, usize) -> Rational,
    sigma: Vec<Rational>,
) -> DualFit {
    let mut alpha: Vec<Vec<bool>> = instance
        .bidders
        .iter()
        .map(|b| vec![false; b.constraints.len()])
        .collect();
    for (u, forest) in forests.iter().enumerate() {
        let tight: Vec<bool> = (0..forest.len())
            .map(|ni| {
                let ci = forest.nodes[ni].constraint;
                constraint_earned(u, ci) == instance.bidders[u].constraints[ci].budget
            })
            .collect();
        for ni in 0..forest.len() {
            if !tight[ni] {
                continue;
            }
            let mut anc = forest.nodes[ni].parent;
            let mut shadowed = false;
            while let Some(a) = anc {
                if tight[a] {
                    shadowed = true;
                    break;
                }
                anc = forest.nodes[a].parent;
            }
            if !shadowed {
                alpha[u][forest.nodes[ni].constraint] = true;
            }
        }
    }
    DualFit { sigma, alpha }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualFitAudit {
    pub feasible: bool,
    pub ratio_ok: bool,
    pub dual_objective: Rational,
}

/// Exact check of the D constraints at the full type `t = K` (which dominates
/// for 0/1 alpha with at most one counted ancestor per dimension) and of the
/// factor-2 objective bound.
pub fn audit_dualfit(instance: &Instance, dual: &DualFit, primal_total: &Rational) -> DualFitAudit {
    let mut feasible = true;
    for (vi, imp) in instance.impressions.iter().enumerate() {
        for (u, bidder) in instance.bidders.iter().enumerate() {
            let mut lhs = dual.sigma[vi].clone();
            let mut rhs = Rational::zero();
            for (dim, r) in &imp.bids[u] {
                rhs += r;
                for &ci in bidder.constraints_of_dim.get(dim).into_iter().flatten() {
                    if dual.alpha[u][ci] {
                        lhs += r;
                    }
                }
            }
            if lhs < rhs {
                feasible = false;
            }
        }
    }
    let mut obj = dual
        .sigma
        .iter()
        .fold(Rational::zero(), |acc, s| acc + s);
    for (u, bidder) in instance.bidders.iter().enumerate() {
        for (ci, c) in bidder.constraints.iter().enumerate() {
            if dual.alpha[u][ci] {
                obj += &c.budget;
            }
        }
    }
    let two = Rational::from_integer(2.into());
    DualFitAudit {
        feasible,
        ratio_ok: obj <= two * primal_total,
        dual_objective: obj,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioBoundAudit {
    pub pass: bool,
    pub factor: f64,
    pub bound: f64,
}

/// AdGeneral upper-bound certificate: `OPT <= (1 + 4 lg(2p+2)) * ALG`.
pub fn adgeneral_ratio_bound(
    p: usize,
    primal_total: &Rational,
    opt_value: f64,
    tol: f64,
) -> RatioBoundAudit {
    let factor = 1.0 + 4.0 * ((2 * p as u64 + 2).max(2) as f64).log2();
    let bound = factor * to_f64(primal_total) * (1.0 + tol);
    RatioBoundAudit {
        pass: opt_value <= bound,
        factor,
        bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{InstanceBuilder, Mode};
    use crate::rational::{rat, rat_int};

    #[test]
    fn rho_identity() {
        // rho * (1 - 1/e) = 1.
        assert!((rho() * (1.0 - (-1.0f64).exp()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_endpoints() {
        assert_eq!(gamma_of_g(&Rational::zero()), 0.0);
        assert!((gamma_of_g(&Rational::one()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn objective_telescopes_on_chains() {
        // Chain {0} in {0,1} with equal gamma: the child contributes zero.
        let mut b = InstanceBuilder::new(Mode::Laminar, 2);
        let u = b.bidder("u0");
        b.constraint(u, "s0", &[0], rat_int(1));
        b.constraint(u, "s1", &[1], rat_int(2));
        b.constraint(u, "all", &[0, 1], rat_int(2));
        let inst = b.build().unwrap();
        let forest = LaminarForest::build(&inst.bidders[0], 2);
        let g_equal = vec![vec![rat(1, 2); forest.len()]];
        let dual = DualPrime {
            sigma: vec![],
            g: g_equal,
        };
        let obj = dual_prime_objective(&inst, &[forest], &dual);
        // Only the root term survives: B(root) * gamma(1/2).
        let expected = 2.0 * gamma_of_g(&rat(1, 2));
        assert!((obj - expected).abs() < 1e-12);
    }

    #[test]
    fn ratio_audit_boundary() {
        let one = rat_int(1);
        assert!(audit_ratio(&one, 0.0, 1e-9).pass);
        assert!(audit_ratio(&one, rho(), 1e-9).pass);
        assert!(!audit_ratio(&one, 2.0, 1e-9).pass);
        assert!(audit_ratio(&rat_int(0), 0.0, 1e-9).pass);
    }

    #[test]
    fn ratio_bound_factor_at_p1() {
        // 1 + 4 lg 4 = 9.
        let audit = adgeneral_ratio_bound(1, &rat_int(1), 8.9, 1e-6);
        assert!((audit.factor - 9.0).abs() < 1e-12);
        assert!(audit.pass);
        assert!(!adgeneral_ratio_bound(1, &rat_int(1), 9.1, 1e-6).pass);
    }

    #[test]
    fn dualfit_boundary_case() {
        // One bidder, budget 1, bid 1, fully earned: sigma = 1, alpha = 1,
        // dual objective 2 = 2 x primal.
        let mut b = InstanceBuilder::new(Mode::Laminar, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(1));
        b.impression("v0", &[(u, 0, rat_int(1))]);
        let inst = b.build().unwrap();
        let forest = LaminarForest::build(&inst.bidders[0], 1);
        let dual = greedy_dual_fit(&inst, &[forest], |_, _| rat_int(1), vec![rat_int(1)]);
        assert!(dual.alpha[0][0]);
        let audit = audit_dualfit(&inst, &dual, &rat_int(1));
        assert!(audit.feasible);
        assert!(audit.ratio_ok);
        assert_eq!(audit.dual_objective, rat_int(2));
    }

    #[test]
    fn alpha_skips_tight_constraints_with_tight_ancestors() {
        let mut b = InstanceBuilder::new(Mode::Laminar, 2);
        let u = b.bidder("u0");
        b.constraint(u, "s0", &[0], rat_int(1));
        b.constraint(u, "root", &[0, 1], rat_int(1));
        b.impression("v0", &[(u, 0, rat_int(1))]);
        let inst = b.build().unwrap();
        let forest = LaminarForest::build(&inst.bidders[0], 2);
        // Both s0 and root are at capacity; only root gets alpha = 1.
        let earned = |_u: usize, ci: usize| {
            if inst.bidders[0].constraints[ci].is_singleton() && !inst.bidders[0].constraints[ci].synthesized {
                rat_int(1)
            } else if inst.bidders[0].constraints[ci].id == "root" {
                rat_int(1)
            } else {
                rat_int(0)
            }
        };
        let dual = greedy_dual_fit(&inst, &[forest], earned, vec![rat_int(1)]);
        let idx = |id: &str| {
            inst.bidders[0]
                .constraints
                .iter()
                .position(|c| c.id == id)
                .unwrap()
        };
        assert!(dual.alpha[0][idx("root")]);
        assert!(!dual.alpha[0][idx("s0")]);
    }

    #[test]
    fn zeroed_alpha_fails_feasibility_with_blocked_impression() {
        // Budget tight after v0; v1 can earn nothing, so sigma(v1) = 0 and a
        // zeroed alpha cannot cover its bid.
        let mut b = InstanceBuilder::new(Mode::Laminar, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(1));
        b.impression("v0", &[(u, 0, rat_int(1))]);
        b.impression("v1", &[(u, 0, rat_int(1))]);
        let inst = b.build().unwrap();
        let dual = DualFit {
            sigma: vec![rat_int(1), rat_int(0)],
            alpha: vec![vec![false]],
        };
        assert!(!audit_dualfit(&inst, &dual, &rat_int(1)).feasible);
    }
}
