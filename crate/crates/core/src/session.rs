//! Online strategies behind a single session interface.
//!
//! A session owns the mutable run state for one (instance, strategy) pair.
//! `offer` must be called exactly once per impression in arrival order; the
//! adversary drivers rely on that contract to interleave observation and
//! construction. Assignments are deterministic: argmax with ties broken to
//! the lowest bidder index, then earnings in increasing dimension order.

use crate::alloc::{AllocationState, AllocError};
use crate::duals::{self, DualFit, DualPrime, FeasibilityAudit, RatioAudit};
use crate::forest::LaminarForest;
use crate::instance::{Impression, Instance, InstanceStats, Mode};
use crate::labels::{init_labels, LabelError, LabelState};
use crate::rational::{inv_log2_f64, render_money, scale_bid_toward_zero, to_f64, Rational};
use num_traits::{One, Signed, Zero};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    AdLaminar,
    AdGeneral,
    AdGenAon,
    AdGenP,
    GreedyLaminar,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::AdLaminar => "adlaminar",
            Strategy::AdGeneral => "adgeneral",
            Strategy::AdGenAon => "adgen-aon",
            Strategy::AdGenP => "adgen-p",
            Strategy::GreedyLaminar => "greedy-laminar",
        }
    }

    pub fn from_name(name: &str) -> Option<Strategy> {
        match name {
            "adlaminar" => Some(Strategy::AdLaminar),
            "adgeneral" => Some(Strategy::AdGeneral),
            "adgen-aon" => Some(Strategy::AdGenAon),
            "adgen-p" => Some(Strategy::AdGenP),
            "greedy-laminar" => Some(Strategy::GreedyLaminar),
            _ => None,
        }
    }

    pub fn all() -> [Strategy; 5] {
        [
            Strategy::AdLaminar,
            Strategy::AdGeneral,
            Strategy::AdGenAon,
            Strategy::AdGenP,
            Strategy::GreedyLaminar,
        ]
    }

    pub fn needs_laminar(&self) -> bool {
        matches!(self, Strategy::AdLaminar | Strategy::GreedyLaminar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditMode {
    Off,
    End,
    Paranoid,
}

#[derive(Debug, Clone, Copy)]
pub struct AuditOptions {
    pub mode: AuditMode,
    /// Relative tolerance of the primal-dual ratio audit. Finite bids leave a
    /// second-order discretization residual of order max_bid/capacity on the
    /// dual side, so run-level audits default looser than exact arithmetic.
    pub ratio_tol: f64,
    pub feas_tol: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            mode: AuditMode::End,
            ratio_tol: 1e-6,
            feas_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub audit: AuditOptions,
    /// Overrides the instance-derived maximum bid-to-budget ratio; adaptive
    /// adversaries know epsilon before any impression exists.
    pub eps_override: Option<Rational>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            audit: AuditOptions::default(),
            eps_override: None,
        }
    }
}

#[derive(Debug)]
pub enum SessionError {
    IncompatibleMode { strategy: &'static str, mode: Mode },
    EpsTooLarge(String),
    FeasibilityLemmaViolated { impression: String, constraint: String },
    Alloc(AllocError),
    Label(LabelError),
    AuditFailed(String),
}

impl std::fmt::Display for SessionError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SessionError::IncompatibleMode { strategy, mode } => {
                write!(f, "strategy {strategy} cannot run on a {mode} instance")
            }
            SessionError::EpsTooLarge(s) => write!(f, "eps precondition violated: {s}"),
            SessionError::FeasibilityLemmaViolated { impression, constraint } => write!(
                f,
                "feasibility lemma violated at impression {impression}, constraint {constraint}"
            ),
            SessionError::Alloc(e) => write!(f, "{e}"),
            SessionError::Label(e) => write!(f, "{e}"),
            SessionError::AuditFailed(s) => write!(f, "audit failed: {s}"),
        }
    }
}

impl std::error::Error for SessionError {}

impl From<AllocError> for SessionError {
    fn from(e: AllocError) -> Self {
        SessionError::Alloc(e)
    }
}

impl From<LabelError> for SessionError {
    fn from(e: LabelError) -> Self {
        SessionError::Label(e)
    }
}

/// Outcome of one `offer` call.
#[derive(Debug, Clone)]
pub struct Decision {
    pub impression_id: String,
    pub bidder: Option<usize>,
    pub earned: Vec<(usize, Rational)>,
    pub earned_total: Rational,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PotentialKind {
    General,
    Aon,
    Partial,
}

enum Aux {
    Laminar {
        labels: Vec<LabelState>,
        sigma: Vec<f64>,
        /// g snapshot per (bidder, node), refreshed post-assignment; exact,
        /// so the monotonicity audit needs no tolerance. The f64 mirror
        /// feeds the per-impression scores without rational divisions.
        g: Vec<Vec<Rational>>,
        g_f64: Vec<Vec<f64>>,
    },
    Potential {
        kind: PotentialKind,
        /// Exponent divisor 1 - eps; 1.0 for plain AdGeneral.
        one_minus_eps: f64,
        /// Earn scale for the partial variant, None otherwise.
        scale: Option<f64>,
    },
    Greedy {
        sigma: Vec<Rational>,
    },
}

pub struct Session<'a> {
    pub instance: &'a Instance,
    pub strategy: Strategy,
    pub stats: InstanceStats,
    pub alloc: AllocationState,
    forests: Vec<LaminarForest>,
    aux: Aux,
    config: SessionConfig,
    warnings: Vec<String>,
    decisions: Vec<Decision>,
    next_impression: usize,
}

impl<'a> Session<'a> {
    pub fn new(
        instance: &'a Instance,
        strategy: Strategy,
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        if strategy.needs_laminar() && instance.mode != Mode::Laminar {
            return Err(SessionError::IncompatibleMode {
                strategy: strategy.name(),
                mode: instance.mode,
            });
        }
        let mut stats = instance.stats();
        if let Some(eps) = &config.eps_override {
            stats.eps = eps.clone();
        }
        let forests: Vec<LaminarForest> = instance
            .bidders
            .iter()
            .map(|b| LaminarForest::build(b, instance.num_dimensions))
            .collect();
        let mut warnings = Vec::new();
        let aux = match strategy {
            Strategy::AdLaminar => {
                if !stats.small_bids_ok {
                    warnings.push("small bids assumption violated".into());
                }
                let labels = forests
                    .iter()
                    .map(|f| init_labels(f, instance.num_dimensions))
                    .collect::<Vec<_>>();
                let g = forests.iter().map(|f| vec![Rational::zero(); f.len()]).collect();
                let g_f64 = forests.iter().map(|f| vec![0.0; f.len()]).collect();
                Aux::Laminar {
                    labels,
                    sigma: Vec::new(),
                    g,
                    g_f64,
                }
            }
            Strategy::AdGeneral => {
                if !stats.small_bids_ok {
                    warnings.push("small bids assumption violated".into());
                }
                Aux::Potential {
                    kind: PotentialKind::General,
                    one_minus_eps: 1.0,
                    scale: None,
                }
            }
            Strategy::AdGenAon => {
                if stats.eps >= Rational::one() {
                    return Err(SessionError::EpsTooLarge(format!(
                        "adgen-aon requires max bid-to-budget ratio < 1, got {}",
                        render_money(&stats.eps)
                    )));
                }
                Aux::Potential {
                    kind: PotentialKind::Aon,
                    one_minus_eps: 1.0 - to_f64(&stats.eps),
                    scale: None,
                }
            }
            Strategy::AdGenP => {
                // Scaled earnings move any utilization by at most the scale
                // factor, so ratio exactly 1 (unit-demand reductions) is
                // still safe; only ratios above 1 are refused.
                if stats.eps > Rational::one() {
                    return Err(SessionError::EpsTooLarge(format!(
                        "adgen-p assumes max bid-to-budget ratio <= 1, got {}",
                        render_money(&stats.eps)
                    )));
                }
                let eps_param = inv_log2_f64((2 * stats.p as u64 + 2).max(2));
                Aux::Potential {
                    kind: PotentialKind::Partial,
                    one_minus_eps: 1.0 - eps_param,
                    scale: Some(eps_param),
                }
            }
            Strategy::GreedyLaminar => Aux::Greedy { sigma: Vec::new() },
        };
        Ok(Session {
            alloc: AllocationState::new(instance),
            instance,
            strategy,
            stats,
            forests,
            aux,
            config,
            warnings,
            decisions: Vec::new(),
            next_impression: 0,
        })
    }

    pub fn forests(&self) -> &[LaminarForest] {
        &self.forests
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn labels(&self) -> Option<&[LabelState]> {
        match &self.aux {
            Aux::Laminar { labels, .. } => Some(labels),
            _ => None,
        }
    }

    /// Snapshot of the D' dual (AdLaminar only).
    pub fn dual_prime(&self) -> Option<DualPrime> {
        match &self.aux {
            Aux::Laminar { sigma, g, .. } => Some(DualPrime {
                sigma: sigma.clone(),
                g: g.clone(),
            }),
            _ => None,
        }
    }

    /// Earned-revenue sigma log of the greedy run.
    pub fn greedy_sigma(&self) -> Option<&[Rational]> {
        match &self.aux {
            Aux::Greedy { sigma } => Some(sigma),
            _ => None,
        }
    }

    /// Dimensions on which `bidder` can still earn: every containing
    /// constraint strictly below capacity. Restricted to dims the impression
    /// actually bids on.
    fn active_bid_dims(&self, bidder: usize, imp: &Impression) -> Vec<(usize, Rational)> {
        imp.bids[bidder]
            .iter()
            .filter(|(dim, r)| {
                !r.is_zero()
                    && self.instance.bidders[bidder]
                        .constraints_of_dim
                        .get(dim)
                        .map(|cis| {
                            cis.iter().all(|&ci| {
                                !self.alloc.is_tight(self.instance, bidder, ci)
                            })
                        })
                        .unwrap_or(true)
            })
            .cloned()
            .collect()
    }

    /// Potential of one constraint, `(B/p) (base^(kappa/(1-eps)) - 1)`.
    fn phi(&self, bidder: usize, ci: usize) -> f64 {
        let Aux::Potential { kind, one_minus_eps, .. } = &self.aux else {
            unreachable!("phi queried outside a potential strategy");
        };
        let p = self.stats.p.max(1) as f64;
        let base = match kind {
            PotentialKind::General => 2.0 * p + 2.0,
            PotentialKind::Aon | PotentialKind::Partial => p + 1.0,
        };
        let b = to_f64(&self.instance.bidders[bidder].constraints[ci].budget);
        let kappa = to_f64(&self.alloc.kappa(self.instance, bidder, ci));
        (b / p) * (base.powf(kappa / one_minus_eps) - 1.0)
    }

    /// Active set under the potential threshold, for the whole dimension
    /// range (potential strategies only).
    pub fn adgeneral_active_dims(&self, bidder: usize) -> Vec<usize> {
        (0..self.instance.num_dimensions)
            .filter(|&dim| self.potential_active(bidder, dim))
            .collect()
    }

    /// Potential-threshold activity test: `sum_{s : k in s} phi/B <= 1`.
    fn potential_active(&self, bidder: usize, dim: usize) -> bool {
        let Some(cis) = self.instance.bidders[bidder].constraints_of_dim.get(&dim) else {
            return true;
        };
        let mut sum = 0.0;
        for &ci in cis {
            let b = to_f64(&self.instance.bidders[bidder].constraints[ci].budget);
            sum += self.phi(bidder, ci) / b;
        }
        sum <= 1.0
    }

    /// Offers the next impression to the strategy. The impression must match
    /// the session's arrival cursor when the instance carries impressions;
    /// adaptive drivers append to their own transcript instead.
    pub fn offer(&mut self, imp: &Impression) -> Result<Decision, SessionError> {
        debug_assert_eq!(imp.bids.len(), self.instance.bidders.len());
        self.next_impression += 1;
        let decision = match self.strategy {
            Strategy::AdLaminar => self.adlaminar_step(imp)?,
            Strategy::AdGeneral | Strategy::AdGenAon | Strategy::AdGenP => {
                self.potential_step(imp)?
            }
            Strategy::GreedyLaminar => self.greedy_step(imp)?,
        };
        self.decisions.push(decision.clone());
        if self.config.audit.mode == AuditMode::Paranoid {
            self.paranoid_checks(&decision);
        }
        Ok(decision)
    }

    fn adlaminar_step(&mut self, imp: &Impression) -> Result<Decision, SessionError> {
        let rho = duals::rho();
        let num_bidders = self.instance.bidders.len();
        // Score D_uv over arrival-time active dims and labels.
        let mut best: Option<(usize, f64)> = None;
        for u in 0..num_bidders {
            let active = self.active_bid_dims(u, imp);
            if active.is_empty() {
                continue;
            }
            // The g snapshot is current at arrival: only assignments move
            // labels, and each assignment refreshes its bidder's snapshot.
            let g_f64 = match &self.aux {
                Aux::Laminar { g_f64, .. } => &g_f64[u],
                _ => unreachable!(),
            };
            let mut score = 0.0;
            for (dim, r) in &active {
                let g = self.forests[u]
                    .singleton_of_dim(*dim)
                    .map_or(0.0, |leaf| g_f64[leaf]);
                score += (1.0 - (g - 1.0).exp()) * to_f64(r);
            }
            match best {
                Some((_, s)) if score <= s => {}
                _ => best = Some((u, score)),
            }
        }
        let Some((chosen, score)) = best else {
            self.alloc.record_reject(imp);
            return Ok(self.reject_decision(imp, 0.0));
        };
        let sigma = rho * score;
        // Earn full bids on active dims, increasing dimension order, capped
        // at exact remaining capacity (a small-bids violation when it fires).
        let mut amounts: Vec<(usize, Rational)> = Vec::new();
        let mut planned = self.active_bid_dims(chosen, imp);
        planned.sort_by_key(|(d, _)| *d);
        for (dim, r) in planned {
            // Headroom shrinks as earlier dims of this impression earn.
            let room = self
                .exact_headroom(chosen, dim, &amounts)
                .expect("laminar bid dims have singleton budgets");
            let amount = if r <= room {
                r.clone()
            } else {
                self.warnings.push(format!(
                    "impression {}: bid on dim {dim} capped at remaining capacity",
                    imp.id
                ));
                room
            };
            if amount.is_positive() {
                amounts.push((dim, amount));
            }
        }
        self.alloc.earn(self.instance, chosen, imp, &amounts)?;
        {
            let Aux::Laminar { labels, .. } = &mut self.aux else {
                unreachable!()
            };
            for (dim, amount) in &amounts {
                labels[chosen].increment_revenue(&self.forests[chosen], *dim, amount)?;
            }
        }
        self.refresh_g(chosen)?;
        let total = amounts
            .iter()
            .fold(Rational::zero(), |acc, (_, a)| acc + a);
        let Aux::Laminar { sigma: sig, .. } = &mut self.aux else {
            unreachable!()
        };
        sig.push(sigma);
        Ok(Decision {
            impression_id: imp.id.clone(),
            bidder: Some(chosen),
            earned: amounts,
            earned_total: total,
            sigma,
        })
    }

    /// Tightest remaining capacity for `dim` after the amounts already
    /// planned for this impression, exact. `None` means uncapped.
    fn exact_headroom(
        &self,
        bidder: usize,
        dim: usize,
        planned: &[(usize, Rational)],
    ) -> Option<Rational> {
        let b = &self.instance.bidders[bidder];
        let mut room: Option<Rational> = None;
        for &ci in b.constraints_of_dim.get(&dim).into_iter().flatten() {
            let mut rem = self.alloc.remaining_by_index(self.instance, bidder, ci);
            for (d, a) in planned {
                if b.constraints[ci].contains(*d) {
                    rem -= a;
                }
            }
            room = Some(match room {
                None => rem,
                Some(r) => r.min(rem),
            });
        }
        room.map(|r| r.max(Rational::zero()))
    }

    fn refresh_g(&mut self, bidder: usize) -> Result<(), SessionError> {
        // Top-down: g(n) = max(label(n), g(parent(n))).
        let forest = &self.forests[bidder];
        let Aux::Laminar { labels, g, g_f64, .. } = &mut self.aux else {
            unreachable!()
        };
        let mut stack: Vec<usize> = forest.roots.clone();
        while let Some(ni) = stack.pop() {
            let mut new_g = labels[bidder].label(forest, ni)?;
            if let Some(p) = forest.nodes[ni].parent {
                let pg = &g[bidder][p];
                if *pg > new_g {
                    new_g = pg.clone();
                }
            }
            debug_assert!(new_g >= g[bidder][ni], "g must be monotone over the run");
            g_f64[bidder][ni] = to_f64(&new_g);
            g[bidder][ni] = new_g;
            stack.extend(forest.nodes[ni].children.iter().copied());
        }
        Ok(())
    }

    fn potential_step(&mut self, imp: &Impression) -> Result<Decision, SessionError> {
        let num_bidders = self.instance.bidders.len();
        // Greedy on the exact bid sum over potential-active dims.
        let mut best: Option<(usize, Rational, Vec<(usize, Rational)>)> = None;
        for u in 0..num_bidders {
            let active: Vec<(usize, Rational)> = imp.bids[u]
                .iter()
                .filter(|(dim, r)| !r.is_zero() && self.potential_active(u, *dim))
                .cloned()
                .collect();
            if active.is_empty() {
                continue;
            }
            let total = active
                .iter()
                .fold(Rational::zero(), |acc, (_, r)| acc + r);
            if total.is_zero() {
                continue;
            }
            match &best {
                Some((_, t, _)) if &total <= t => {}
                _ => best = Some((u, total, active)),
            }
        }
        let Some((chosen, _, active)) = best else {
            self.alloc.record_reject(imp);
            return Ok(self.reject_decision(imp, 0.0));
        };
        let (kind, scale) = match &self.aux {
            Aux::Potential { kind, scale, .. } => (*kind, *scale),
            _ => unreachable!(),
        };
        let mut amounts: Vec<(usize, Rational)> = Vec::new();
        for (dim, r) in &active {
            let amount = match kind {
                PotentialKind::Partial => {
                    scale_bid_toward_zero(r, scale.expect("partial scale"))
                }
                _ => r.clone(),
            };
            if amount.is_positive() {
                amounts.push((*dim, amount));
            }
        }
        // The feasibility lemma promises this earn cannot overflow when the
        // bids precondition holds; a violation there is an implementation
        // bug, otherwise cap and warn (AdGeneral), or refuse (all-or-nothing).
        match self.alloc.earn(self.instance, chosen, imp, &amounts) {
            Ok(()) => {}
            Err(AllocError::BudgetOverflow { constraint, .. }) => {
                let precondition_met = match kind {
                    PotentialKind::General => self.stats.small_bids_ok,
                    PotentialKind::Aon => self.stats.eps < Rational::one(),
                    // Scaled earnings stay feasible up to ratio exactly 1.
                    PotentialKind::Partial => self.stats.eps <= Rational::one(),
                };
                if precondition_met {
                    return Err(SessionError::FeasibilityLemmaViolated {
                        impression: imp.id.clone(),
                        constraint,
                    });
                }
                if kind == PotentialKind::General {
                    self.warnings.push(format!(
                        "impression {}: earning capped at remaining capacity (bids precondition violated)",
                        imp.id
                    ));
                    let mut capped: Vec<(usize, Rational)> = Vec::new();
                    for (dim, r) in &amounts {
                        let amount = match self.exact_headroom(chosen, *dim, &capped) {
                            Some(room) => r.clone().min(room),
                            None => r.clone(),
                        };
                        if amount.is_positive() {
                            capped.push((*dim, amount));
                        }
                    }
                    self.alloc.earn(self.instance, chosen, imp, &capped)?;
                    amounts = capped;
                } else {
                    return Err(SessionError::FeasibilityLemmaViolated {
                        impression: imp.id.clone(),
                        constraint,
                    });
                }
            }
            Err(e) => return Err(e.into()),
        }
        let total = amounts
            .iter()
            .fold(Rational::zero(), |acc, (_, a)| acc + a);
        Ok(Decision {
            impression_id: imp.id.clone(),
            bidder: Some(chosen),
            earned: amounts,
            earned_total: total,
            sigma: 0.0,
        })
    }

    fn greedy_step(&mut self, imp: &Impression) -> Result<Decision, SessionError> {
        let num_bidders = self.instance.bidders.len();
        let mut best: Option<(usize, Rational, Vec<(usize, Rational)>)> = None;
        for u in 0..num_bidders {
            let amounts = max_earnable_laminar(self.instance, &self.alloc, &self.forests[u], u, imp);
            let total = amounts
                .iter()
                .fold(Rational::zero(), |acc, (_, a)| acc + a);
            if total.is_zero() {
                continue;
            }
            match &best {
                Some((_, t, _)) if &total <= t => {}
                _ => best = Some((u, total, amounts)),
            }
        }
        let Aux::Greedy { sigma } = &mut self.aux else {
            unreachable!()
        };
        let Some((chosen, total, amounts)) = best else {
            sigma.push(Rational::zero());
            self.alloc.record_reject(imp);
            return Ok(self.reject_decision(imp, 0.0));
        };
        sigma.push(total.clone());
        self.alloc.earn(self.instance, chosen, imp, &amounts)?;
        Ok(Decision {
            impression_id: imp.id.clone(),
            bidder: Some(chosen),
            earned: amounts,
            earned_total: total,
            sigma: 0.0,
        })
    }

    fn reject_decision(&mut self, imp: &Impression, sigma: f64) -> Decision {
        if let Aux::Laminar { sigma: sig, .. } = &mut self.aux {
            sig.push(sigma);
        }
        Decision {
            impression_id: imp.id.clone(),
            bidder: None,
            earned: Vec::new(),
            earned_total: Rational::zero(),
            sigma,
        }
    }

    fn paranoid_checks(&mut self, decision: &Decision) {
        // Utilization stays within [0, 1] on every constraint, exactly.
        for (u, b) in self.instance.bidders.iter().enumerate() {
            for ci in 0..b.constraints.len() {
                let kappa = self.alloc.kappa(self.instance, u, ci);
                assert!(
                    !kappa.is_negative() && kappa <= Rational::one(),
                    "kappa out of range"
                );
            }
        }
        if let Aux::Laminar { labels, sigma, g, .. } = &self.aux {
            for (u, forest) in self.forests.iter().enumerate() {
                if let Some(err) = crate::labels::check_properties(&labels[u], forest) {
                    panic!("label properties violated after {}: {err}", decision.impression_id);
                }
                for ni in 0..forest.len() {
                    let cur = labels[u].g_value(forest, ni).expect("labels valid");
                    assert!(g[u][ni] <= cur, "g snapshot ahead of labels");
                }
            }
            // Opportunistic mid-run ratio check; only the end-of-run bound is
            // certified, so mid-run excursions are warnings, not errors.
            let dual = DualPrime {
                sigma: sigma.clone(),
                g: g.clone(),
            };
            let obj = duals::dual_prime_objective(self.instance, &self.forests, &dual);
            let audit = duals::audit_ratio(self.alloc.primal_total(), obj, self.config.audit.ratio_tol);
            if !audit.pass {
                self.warnings.push(format!(
                    "mid-run ratio audit above bound after {} (residual {:.3e})",
                    decision.impression_id, audit.residual
                ));
            }
        }
    }
}

/// Dimensions on which `bidder` can still earn under exact utilization:
/// every containing constraint strictly below capacity. Dimensions outside
/// all constraints are vacuously active.
pub fn adlaminar_active_dims(
    instance: &Instance,
    alloc: &AllocationState,
    bidder: usize,
) -> Vec<usize> {
    (0..instance.num_dimensions)
        .filter(|dim| {
            instance.bidders[bidder]
                .constraints_of_dim
                .get(dim)
                .map(|cis| cis.iter().all(|&ci| !alloc.is_tight(instance, bidder, ci)))
                .unwrap_or(true)
        })
        .collect()
}

/// Score of assigning `imp` to `bidder` at the current labels:
/// `D_uv = sum over active bid dims of (1 - e^(g-1)) r`.
pub fn adlaminar_score(
    instance: &Instance,
    alloc: &AllocationState,
    labels: &LabelState,
    forest: &LaminarForest,
    bidder: usize,
    imp: &Impression,
) -> Result<f64, SessionError> {
    let mut score = 0.0;
    for (dim, r) in &imp.bids[bidder] {
        if r.is_zero() {
            continue;
        }
        let active = instance.bidders[bidder]
            .constraints_of_dim
            .get(dim)
            .map(|cis| cis.iter().all(|&ci| !alloc.is_tight(instance, bidder, ci)))
            .unwrap_or(true);
        if !active {
            continue;
        }
        let g = labels.g_of_dim(forest, *dim)?;
        score += (1.0 - (to_f64(&g) - 1.0).exp()) * to_f64(r);
    }
    Ok(score)
}

/// Maximum total revenue earnable by `bidder` from `imp` under current
/// remaining capacities: start from the full bids and sweep the forest
/// bottom-up, trimming dimensions in decreasing index order wherever a node's
/// sum exceeds its remaining capacity. Exact and total-optimal on laminar
/// families.
pub fn max_earnable_laminar(
    instance: &Instance,
    alloc: &AllocationState,
    forest: &LaminarForest,
    bidder: usize,
    imp: &Impression,
) -> Vec<(usize, Rational)> {
    let mut earn: Vec<(usize, Rational)> = imp.bids[bidder]
        .iter()
        .filter(|(_, r)| !r.is_zero())
        .cloned()
        .collect();
    if earn.is_empty() {
        return earn;
    }
    let mut order: Vec<usize> = (0..forest.len()).collect();
    order.sort_by_key(|&ni| forest.nodes[ni].dims.len());
    for ni in order {
        let node = &forest.nodes[ni];
        let rem = alloc.remaining_by_index(instance, bidder, node.constraint);
        let mut sum = Rational::zero();
        for (d, a) in &earn {
            if node.dims.binary_search(d).is_ok() {
                sum += a;
            }
        }
        if sum <= rem {
            continue;
        }
        let mut excess = sum - rem;
        for (d, a) in earn.iter_mut().rev() {
            if excess.is_zero() {
                break;
            }
            if node.dims.binary_search(d).is_err() {
                continue;
            }
            let cut = a.clone().min(excess.clone());
            *a -= &cut;
            excess -= cut;
        }
        debug_assert!(excess.is_zero());
    }
    earn.retain(|(_, a)| a.is_positive());
    earn
}

/// Full run report for one (instance, strategy) pair.
#[derive(Debug, Clone)]
pub struct Report {
    pub strategy: &'static str,
    pub primal_total: Rational,
    pub decisions: Vec<Decision>,
    pub final_kappa: Vec<Vec<Rational>>,
    pub warnings: Vec<String>,
    pub dual_objective: Option<f64>,
    pub ratio_audit: Option<RatioAudit>,
    pub feasibility: Option<FeasibilityAudit>,
    pub dualfit: Option<DualFit>,
    pub dualfit_feasible: Option<bool>,
    pub dualfit_objective: Option<Rational>,
    pub dualfit_ratio_ok: Option<bool>,
}

impl Report {
    /// True when every audit that ran passed.
    pub fn audits_pass(&self) -> bool {
        self.ratio_audit.as_ref().map_or(true, |a| a.pass)
            && self.feasibility.as_ref().map_or(true, |a| a.pass)
            && self.dualfit_feasible.unwrap_or(true)
            && self.dualfit_ratio_ok.unwrap_or(true)
    }
}

/// Runs `strategy` over the instance's impressions in order, with audits per
/// the audit mode. End-of-run audit failures surface in the report; hard
/// failures (overflow where a lemma forbids it) abort with an error.
pub fn run_online(
    instance: &Instance,
    strategy: Strategy,
    audit: AuditOptions,
) -> Result<Report, SessionError> {
    let config = SessionConfig {
        audit,
        eps_override: None,
    };
    let mut session = Session::new(instance, strategy, config)?;
    for imp in &instance.impressions {
        session.offer(imp)?;
    }
    finish_report(session, audit)
}

pub fn finish_report(session: Session<'_>, audit: AuditOptions) -> Result<Report, SessionError> {
    let instance = session.instance;
    let final_kappa = instance
        .bidders
        .iter()
        .enumerate()
        .map(|(u, b)| {
            (0..b.constraints.len())
                .map(|ci| session.alloc.kappa(instance, u, ci))
                .collect()
        })
        .collect();
    let mut report = Report {
        strategy: session.strategy.name(),
        primal_total: session.alloc.primal_total().clone(),
        decisions: session.decisions.clone(),
        final_kappa,
        warnings: session.warnings().to_vec(),
        dual_objective: None,
        ratio_audit: None,
        feasibility: None,
        dualfit: None,
        dualfit_feasible: None,
        dualfit_objective: None,
        dualfit_ratio_ok: None,
    };
    let run_audits = audit.mode != AuditMode::Off;
    if let Some(dual) = session.dual_prime() {
        let obj = duals::dual_prime_objective(instance, session.forests(), &dual);
        report.dual_objective = Some(obj);
        if run_audits {
            report.ratio_audit = Some(duals::audit_ratio(
                &report.primal_total,
                obj,
                audit.ratio_tol,
            ));
            report.feasibility = Some(duals::audit_feasibility_dprime(
                instance,
                session.forests(),
                &dual,
                audit.feas_tol,
            ));
        }
    }
    if let Some(sigma) = session.greedy_sigma() {
        let alloc = &session.alloc;
        let dual = duals::greedy_dual_fit(
            instance,
            session.forests(),
            |u, ci| alloc.constraint_earned(u, ci).clone(),
            sigma.to_vec(),
        );
        if run_audits {
            let audit_fit = duals::audit_dualfit(instance, &dual, &report.primal_total);
            report.dualfit_feasible = Some(audit_fit.feasible);
            report.dualfit_ratio_ok = Some(audit_fit.ratio_ok);
            report.dualfit_objective = Some(audit_fit.dual_objective);
        }
        report.dualfit = Some(dual);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{InstanceBuilder, Mode};
    use crate::rational::{rat, rat_int};

    fn laminar_two_bidders() -> Instance {
        let mut b = InstanceBuilder::new(Mode::Laminar, 2);
        let u0 = b.bidder("a");
        let u1 = b.bidder("b");
        for u in [u0, u1] {
            b.constraint(u, &format!("s0_{u}"), &[0], rat_int(1));
            b.constraint(u, &format!("s1_{u}"), &[1], rat_int(1));
            b.constraint(u, &format!("root_{u}"), &[0, 1], rat_int(2));
        }
        b.impression("v0", &[(u0, 0, rat(3, 10)), (u1, 0, rat(5, 10))]);
        b.impression("v1", &[(u0, 1, rat(1, 10))]);
        b.build().unwrap()
    }

    #[test]
    fn adlaminar_assigns_to_argmax_score() {
        let inst = laminar_two_bidders();
        // Fresh labels: score is (1 - 1/e) * bid, so bidder b wins v0.
        let report = run_online(&inst, Strategy::AdLaminar, AuditOptions::default()).unwrap();
        assert_eq!(report.decisions[0].bidder, Some(1));
        assert_eq!(report.decisions[1].bidder, Some(0));
        assert_eq!(report.primal_total, rat(6, 10));
        // Bids at half the budget are far outside the small-bids regime, so
        // only the exact-sided audits are promised here.
        assert!(report.feasibility.as_ref().unwrap().pass);
    }

    #[test]
    fn adlaminar_sigma_equals_bid_on_fresh_labels() {
        // rho * (1 - 1/e) = 1, so sigma of the first assignment is the bid.
        let mut b = InstanceBuilder::new(Mode::Laminar, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(1));
        b.impression("v", &[(u, 0, rat(1, 4))]);
        let inst = b.build().unwrap();
        let report = run_online(&inst, Strategy::AdLaminar, AuditOptions::default()).unwrap();
        assert!((report.decisions[0].sigma - 0.25).abs() < 1e-12);
    }

    #[test]
    fn adlaminar_rejects_only_all_zero() {
        let mut b = InstanceBuilder::new(Mode::Laminar, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(1));
        b.impression("v", &[]);
        let inst = b.build().unwrap();
        let report = run_online(&inst, Strategy::AdLaminar, AuditOptions::default()).unwrap();
        assert_eq!(report.decisions[0].bidder, None);
        assert_eq!(report.decisions[0].sigma, 0.0);
    }

    #[test]
    fn laminar_strategy_requires_laminar_mode() {
        let mut b = InstanceBuilder::new(Mode::General, 3);
        let u = b.bidder("u0");
        b.constraint(u, "s12", &[0, 1], rat_int(1));
        b.constraint(u, "s23", &[1, 2], rat_int(1));
        let inst = b.build().unwrap();
        assert!(matches!(
            Session::new(&inst, Strategy::AdLaminar, SessionConfig::default()),
            Err(SessionError::IncompatibleMode { .. })
        ));
    }

    #[test]
    fn adgeneral_threshold_example() {
        // p = 1, single constraint B = 1: a dim stays active until
        // 4^kappa - 1 > 1, i.e. kappa > 1/2.
        let mut b = InstanceBuilder::new(Mode::General, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(1));
        for i in 0..10 {
            b.impression(&format!("v{i}"), &[(u, 0, rat(1, 10))]);
        }
        let inst = b.build().unwrap();
        let report = run_online(&inst, Strategy::AdGeneral, AuditOptions::default()).unwrap();
        // Accepts exactly while kappa <= 1/2 at arrival: 6 impressions.
        assert_eq!(report.primal_total, rat(6, 10));
        let accepted = report.decisions.iter().filter(|d| d.bidder.is_some()).count();
        assert_eq!(accepted, 6);
    }

    #[test]
    fn adgeneral_greedy_on_active_sums() {
        let mut b = InstanceBuilder::new(Mode::General, 2);
        let u0 = b.bidder("a");
        let u1 = b.bidder("b");
        b.constraint(u0, "sa", &[0, 1], rat_int(10));
        b.constraint(u1, "sb", &[0, 1], rat_int(10));
        b.impression("v", &[(u0, 0, rat(3, 10)), (u1, 0, rat(1, 10))]);
        let inst = b.build().unwrap();
        let report = run_online(&inst, Strategy::AdGeneral, AuditOptions::default()).unwrap();
        assert_eq!(report.decisions[0].bidder, Some(0));
    }

    #[test]
    fn adgen_p_scales_earnings_by_inverse_log() {
        // p = 1: scale = 1 / lg 4 = 1/2; a bid of 0.4 earns 0.2.
        let mut b = InstanceBuilder::new(Mode::General, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(1));
        b.impression("v", &[(u, 0, rat(2, 5))]);
        let inst = b.build().unwrap();
        let report = run_online(&inst, Strategy::AdGenP, AuditOptions::default()).unwrap();
        assert_eq!(report.primal_total, rat(1, 5));
    }

    #[test]
    fn greedy_takes_max_earnable_and_caps() {
        let mut b = InstanceBuilder::new(Mode::Laminar, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(3));
        b.impression("v0", &[(u, 0, rat_int(5))]);
        let inst = b.build().unwrap();
        let report = run_online(&inst, Strategy::GreedyLaminar, AuditOptions::default()).unwrap();
        assert_eq!(report.primal_total, rat_int(3));
        assert!(report.dualfit_feasible.unwrap());
        assert!(report.dualfit_ratio_ok.unwrap());
    }

    #[test]
    fn water_fill_reduces_in_decreasing_index_order() {
        let mut b = InstanceBuilder::new(Mode::Laminar, 2);
        let u = b.bidder("u0");
        b.constraint(u, "s0", &[0], rat_int(1));
        b.constraint(u, "s1", &[1], rat_int(1));
        b.constraint(u, "root", &[0, 1], rat(3, 2));
        b.impression("v", &[(u, 0, rat_int(1)), (u, 1, rat_int(1))]);
        let inst = b.build().unwrap();
        let alloc = AllocationState::new(&inst);
        let forest = LaminarForest::build(&inst.bidders[0], 2);
        let amounts = max_earnable_laminar(&inst, &alloc, &forest, 0, &inst.impressions[0]);
        assert_eq!(amounts, vec![(0, rat_int(1)), (1, rat(1, 2))]);
    }

    #[test]
    fn empty_impression_list_reports_zero() {
        let mut b = InstanceBuilder::new(Mode::Laminar, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(1));
        let inst = b.build().unwrap();
        for strat in Strategy::all() {
            let report = run_online(&inst, strat, AuditOptions::default()).unwrap();
            assert_eq!(report.primal_total, rat_int(0));
        }
    }

    #[test]
    fn active_dims_follow_exact_utilization() {
        let mut b = InstanceBuilder::new(Mode::Laminar, 3);
        let u = b.bidder("u0");
        b.constraint(u, "s0", &[0], rat_int(1));
        b.constraint(u, "s1", &[1], rat_int(1));
        b.constraint(u, "both", &[0, 1], rat_int(1));
        b.impression("v", &[(u, 0, rat_int(1))]);
        let inst = b.build().unwrap();
        let mut alloc = AllocationState::new(&inst);
        // Fresh state: everything active (dim 2 has no constraints at all).
        assert_eq!(adlaminar_active_dims(&inst, &alloc, 0), vec![0, 1, 2]);
        // Filling {0,1} knocks out both covered dims, not dim 2.
        alloc.earn(&inst, 0, &inst.impressions[0], &[(0, rat_int(1))]).unwrap();
        assert_eq!(adlaminar_active_dims(&inst, &alloc, 0), vec![2]);
    }

    #[test]
    fn adlaminar_score_examples() {
        let mut b = InstanceBuilder::new(Mode::Laminar, 2);
        let u = b.bidder("u0");
        b.constraint(u, "s0", &[0], rat_int(1));
        b.constraint(u, "s1", &[1], rat_int(1));
        b.impression("v", &[(u, 0, rat(1, 2))]);
        let inst = b.build().unwrap();
        let forest = LaminarForest::build(&inst.bidders[0], 2);
        let mut labels = crate::labels::init_labels(&forest, 2);
        let alloc = AllocationState::new(&inst);
        // All labels zero: score is (1 - 1/e) * bid.
        let s0 = adlaminar_score(&inst, &alloc, &labels, &forest, 0, &inst.impressions[0]).unwrap();
        assert!((s0 - (1.0 - (-1.0f64).exp()) * 0.5).abs() < 1e-12);
        // g = 1 on the only bid dimension: score drops to zero.
        labels.increment_revenue(&forest, 0, &rat_int(1)).unwrap();
        let s1 = adlaminar_score(&inst, &alloc, &labels, &forest, 0, &inst.impressions[0]).unwrap();
        assert!(s1.abs() < 1e-12);
    }

    #[test]
    fn adlaminar_score_ignores_inactive_dims() {
        let mut b = InstanceBuilder::new(Mode::Laminar, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s0", &[0], rat(1, 2));
        b.impression("fill", &[(u, 0, rat(1, 2))]);
        b.impression("v", &[(u, 0, rat(1, 4))]);
        let inst = b.build().unwrap();
        let forest = LaminarForest::build(&inst.bidders[0], 1);
        let labels = crate::labels::init_labels(&forest, 1);
        let mut alloc = AllocationState::new(&inst);
        alloc
            .earn(&inst, 0, &inst.impressions[0], &[(0, rat(1, 2))])
            .unwrap();
        // The only bid dim sits under a full budget: no active dims, score 0.
        let s = adlaminar_score(&inst, &alloc, &labels, &forest, 0, &inst.impressions[1]).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn adgeneral_active_threshold_examples() {
        // p = 1, single constraint B = 1: active iff 4^kappa - 1 <= 1.
        let mut b = InstanceBuilder::new(Mode::General, 1);
        let u = b.bidder("u0");
        b.constraint(u, "s", &[0], rat_int(1));
        b.impression("v0", &[(u, 0, rat(1, 2))]);
        b.impression("v1", &[(u, 0, rat(1, 100))]);
        let inst = b.build().unwrap();
        let mut session = Session::new(&inst, Strategy::AdGeneral, SessionConfig::default()).unwrap();
        assert_eq!(session.adgeneral_active_dims(0), vec![0]);
        session.offer(&inst.impressions[0]).unwrap(); // kappa = 1/2 exactly
        assert_eq!(session.adgeneral_active_dims(0), vec![0], "boundary stays active");
        session.offer(&inst.impressions[1]).unwrap(); // kappa just past 1/2
        assert!(session.adgeneral_active_dims(0).is_empty());
    }

    #[test]
    fn replay_is_deterministic() {
        let inst = laminar_two_bidders();
        let a = run_online(&inst, Strategy::AdLaminar, AuditOptions::default()).unwrap();
        let b = run_online(&inst, Strategy::AdLaminar, AuditOptions::default()).unwrap();
        assert_eq!(a.primal_total, b.primal_total);
        let pick = |r: &Report| -> Vec<Option<usize>> {
            r.decisions.iter().map(|d| d.bidder).collect()
        };
        assert_eq!(pick(&a), pick(&b));
    }
}
