//! Per-bidder label machine over a laminar forest.
//!
//! Every budget constraint `s` carries a label
//!
//! ```text
//!   l(s) = sum_{ {k} in L(s) } R(k)  /  ( B(s) - sum_{ s' in T(s) } B(s') )
//! ```
//!
//! where `L(s)` holds the singleton dimensions currently counted by `s` and
//! `T(s)` holds the closest descendants whose label exceeds `l(s)`. The two
//! sets partition the descendant singletons of `s`. A valid state satisfies:
//!
//! * Property 1: for `{k} in L(s)`, every node on the path from `{k}` to `s`
//!   has label at most `l(s)`.
//! * Property 2: every `s' in T(s)` has label strictly above `l(s)`, and
//!   nodes strictly between `s'` and `s` have label at most `l(s)`.
//! * Property 3: the identity above, as an exact rational.
//!
//! Revenue increments on a dimension `k` raise exactly the labels of nodes
//! with `{k} in L(s)`, each affine in the added amount with slope `1/D(s)`.
//! Instead of stepping, the machine solves for the first crossing where the
//! relative label order would change and applies the corresponding event at
//! the exact transition point:
//!
//! * Event 1: a faster descendant `s'` catches `l(s)` from below; `s'` moves
//!   into `T(s)` and its singletons leave `L(s)`.
//! * Event 2: `l(s)` catches a member `s'` of `T(s)`; `s'` leaves `T(s)` and
//!   its own `L`/`T` contents merge into `s`.
//!
//! Both events leave the affected label numerically unchanged, which the
//! machine asserts. Labels are therefore non-decreasing over any run.
//!
//! Simultaneous events at one transition are settled one at a time, deepest
//! `s` first, Event 2 before Event 1 for the same `s`, widest `s'` first,
//! revalidating after every application. Deepest-first matters: an event on a
//! descendant can freeze a mid-path label and thereby cancel a shallower
//! candidate that would otherwise capture the wrong node into `T`.

use crate::forest::LaminarForest;
use crate::rational::Rational;
use num_traits::{Signed, Zero};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelState {
    /// Earned revenue per dimension (the `R_u^(k)` view).
    pub revenue: Vec<Rational>,
    /// l_sets[node] = singleton dimensions counted by the node's label.
    l_sets: Vec<BTreeSet<usize>>,
    /// t_sets[node] = forest nodes shielding their subtrees from the label.
    t_sets: Vec<BTreeSet<usize>>,
    /// Cached `sum_{k in L(s)} R(k)` per node; events and increments keep it
    /// current, `check_properties` recomputes it from the sets.
    num: Vec<Rational>,
    /// Cached `B(s) - sum_{T(s)} B` per node.
    den: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelError {
    ZeroDenominator { node: usize },
    NotAtTransition { s: usize, s_prime: usize },
    NotInT { s: usize, s_prime: usize },
    NotADescendant { s: usize, s_prime: usize },
}

impl std::fmt::Display for LabelError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelError::ZeroDenominator { node } => {
                write!(f, "zero denominator at node {node}")
            }
            LabelError::NotAtTransition { s, s_prime } => {
                write!(f, "not at transition: labels of {s} and {s_prime} differ")
            }
            LabelError::NotInT { s, s_prime } => write!(f, "{s_prime} not in T({s})"),
            LabelError::NotADescendant { s, s_prime } => {
                write!(f, "{s_prime} is not a strict descendant of {s}")
            }
        }
    }
}

impl std::error::Error for LabelError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Event1,
    Event2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventCandidate {
    pub kind: EventKind,
    pub s: usize,
    pub s_prime: usize,
}

/// All labels zero: `T(s)` empty and `L(s)` the full set of descendant
/// singletons.
pub fn init_labels(forest: &LaminarForest, num_dimensions: usize) -> LabelState {
    let l_sets: Vec<BTreeSet<usize>> = (0..forest.len())
        .map(|i| forest.singleton_dims_under(i).into_iter().collect())
        .collect();
    let den = forest.nodes.iter().map(|n| n.budget.clone()).collect();
    LabelState {
        revenue: vec![Rational::zero(); num_dimensions],
        l_sets,
        t_sets: vec![BTreeSet::new(); forest.len()],
        num: vec![Rational::zero(); forest.len()],
        den,
    }
}

impl LabelState {
    pub fn l_set(&self, node: usize) -> &BTreeSet<usize> {
        &self.l_sets[node]
    }

    pub fn t_set(&self, node: usize) -> &BTreeSet<usize> {
        &self.t_sets[node]
    }

    pub fn numerator(&self, node: usize) -> &Rational {
        &self.num[node]
    }

    pub fn denominator(&self, node: usize) -> &Rational {
        &self.den[node]
    }

    /// `sum_{k in L(s)} R(k)` recomputed from the sets, for audits.
    pub fn numerator_from_sets(&self, node: usize) -> Rational {
        self.l_sets[node]
            .iter()
            .fold(Rational::zero(), |acc, &k| acc + &self.revenue[k])
    }

    /// `B(s) - sum_{T(s)} B` recomputed from the sets, for audits.
    pub fn denominator_from_sets(&self, forest: &LaminarForest, node: usize) -> Rational {
        let mut d = forest.nodes[node].budget.clone();
        for &w in &self.t_sets[node] {
            d -= &forest.nodes[w].budget;
        }
        d
    }

    /// The Property-3 quotient, exactly.
    pub fn label(&self, forest: &LaminarForest, node: usize) -> Result<Rational, LabelError> {
        debug_assert!(node < forest.len());
        if !self.den[node].is_positive() {
            return Err(LabelError::ZeroDenominator { node });
        }
        Ok(&self.num[node] / &self.den[node])
    }

    /// Maximum label over the ancestors of `node`, including itself.
    pub fn g_value(&self, forest: &LaminarForest, node: usize) -> Result<Rational, LabelError> {
        let mut best: Option<Rational> = None;
        for anc in forest.ancestors(node) {
            let l = self.label(forest, anc)?;
            best = Some(match best {
                None => l,
                Some(b) => b.max(l),
            });
        }
        Ok(best.expect("ancestors include self"))
    }

    /// `g` for a dimension, through its singleton node. Dimensions without a
    /// singleton (never bid on) report 0.
    pub fn g_of_dim(&self, forest: &LaminarForest, dim: usize) -> Result<Rational, LabelError> {
        match forest.singleton_of_dim(dim) {
            Some(node) => self.g_value(forest, node),
            None => Ok(Rational::zero()),
        }
    }

    /// Nodes whose label grows while dimension `k` is incremented, i.e. the
    /// ancestors of `{k}` with `k` in their `L` set.
    fn growing_nodes(&self, forest: &LaminarForest, dim: usize) -> Vec<usize> {
        match forest.singleton_of_dim(dim) {
            Some(leaf) => forest
                .ancestors(leaf)
                .into_iter()
                .filter(|&s| self.l_sets[s].contains(&dim))
                .collect(),
            None => Vec::new(),
        }
    }

    /// Smallest `x >= 0` at which adding `x` of revenue to `dim` reaches an
    /// event transition, together with every candidate at that point.
    pub fn next_crossing(
        &self,
        forest: &LaminarForest,
        dim: usize,
    ) -> Result<Option<(Rational, Vec<EventCandidate>)>, LabelError> {
        let growing = self.growing_nodes(forest, dim);
        let mut best: Option<Rational> = None;
        let mut events: Vec<EventCandidate> = Vec::new();
        let consider = |x: Rational, cand: EventCandidate, events: &mut Vec<EventCandidate>, best: &mut Option<Rational>| {
            debug_assert!(!x.is_negative(), "crossing in the past: invalid state");
            match best {
                Some(b) if x > *b => {}
                Some(b) if x == *b => events.push(cand),
                _ => {
                    *best = Some(x);
                    events.clear();
                    events.push(cand);
                }
            }
        };
        for &s in &growing {
            let n_s = &self.num[s];
            let d_s = &self.den[s];
            if !d_s.is_positive() {
                return Err(LabelError::ZeroDenominator { node: s });
            }
            // Event 1: a strictly faster growing descendant meets l(s).
            for &sp in &growing {
                if sp == s || !forest.is_strict_descendant(sp, s) {
                    continue;
                }
                let d_sp = &self.den[sp];
                if !d_sp.is_positive() {
                    return Err(LabelError::ZeroDenominator { node: sp });
                }
                if d_sp >= d_s {
                    continue; // equal or slower rate: lines never cross
                }
                let n_sp = &self.num[sp];
                let x = (n_s * d_sp - n_sp * d_s) / (d_s - d_sp);
                consider(
                    x,
                    EventCandidate {
                        kind: EventKind::Event1,
                        s,
                        s_prime: sp,
                    },
                    &mut events,
                    &mut best,
                );
            }
            // Event 2: l(s) meets a frozen member of T(s).
            for &sp in &self.t_sets[s] {
                let l_sp = self.label(forest, sp)?;
                let x = l_sp * d_s - n_s;
                consider(
                    x,
                    EventCandidate {
                        kind: EventKind::Event2,
                        s,
                        s_prime: sp,
                    },
                    &mut events,
                    &mut best,
                );
            }
        }
        Ok(best.map(|x| (x, events)))
    }

    /// Event 1 at the transition point `l(s) == l(s')`: `s'` enters `T(s)`,
    /// its descendant singletons leave `L(s)`, its descendants leave `T(s)`.
    pub fn apply_event1(
        &mut self,
        forest: &LaminarForest,
        s: usize,
        s_prime: usize,
    ) -> Result<(), LabelError> {
        if !forest.is_strict_descendant(s_prime, s) {
            return Err(LabelError::NotADescendant { s, s_prime });
        }
        let before = self.label(forest, s)?;
        if before != self.label(forest, s_prime)? {
            return Err(LabelError::NotAtTransition { s, s_prime });
        }
        let under: BTreeSet<usize> = forest.singleton_dims_under(s_prime).into_iter().collect();
        let mut removed_rev = Rational::zero();
        for &k in self.l_sets[s].iter() {
            if under.contains(&k) {
                removed_rev += &self.revenue[k];
            }
        }
        self.l_sets[s].retain(|k| !under.contains(k));
        self.num[s] -= removed_rev;
        let mut den_back = Rational::zero();
        for &w in self.t_sets[s].iter() {
            if forest.is_strict_descendant(w, s_prime) {
                den_back += &forest.nodes[w].budget;
            }
        }
        let t = &mut self.t_sets[s];
        t.retain(|&w| !forest.is_strict_descendant(w, s_prime));
        t.insert(s_prime);
        self.den[s] += den_back;
        self.den[s] -= &forest.nodes[s_prime].budget;
        let after = self.label(forest, s)?;
        assert_eq!(before, after, "event 1 must not move the label");
        Ok(())
    }

    /// Event 2 at the transition point: `s'` leaves `T(s)`; `T(s')` merges
    /// into `T(s)` and `L(s')` into `L(s)`.
    pub fn apply_event2(
        &mut self,
        forest: &LaminarForest,
        s: usize,
        s_prime: usize,
    ) -> Result<(), LabelError> {
        if !self.t_sets[s].contains(&s_prime) {
            return Err(LabelError::NotInT { s, s_prime });
        }
        let before = self.label(forest, s)?;
        if before != self.label(forest, s_prime)? {
            return Err(LabelError::NotAtTransition { s, s_prime });
        }
        self.t_sets[s].remove(&s_prime);
        let merge_t: Vec<usize> = self.t_sets[s_prime].iter().copied().collect();
        let merge_l: Vec<usize> = self.l_sets[s_prime].iter().copied().collect();
        self.t_sets[s].extend(merge_t);
        self.l_sets[s].extend(merge_l);
        // L and T of s' partition its subtree, so its cached aggregates are
        // exactly what s gains: +B(s') for leaving T, -sum B over T(s') for
        // the members that enter, i.e. +den(s'); the numerator gains num(s').
        let gained_num = self.num[s_prime].clone();
        let gained_den = self.den[s_prime].clone();
        self.num[s] += gained_num;
        self.den[s] += gained_den;
        let after = self.label(forest, s)?;
        assert_eq!(before, after, "event 2 must not move the label");
        Ok(())
    }

    /// Zero-displacement candidates for the settle loop: pairs currently at
    /// exact label equality that would strictly cross under further growth of
    /// `dim`.
    fn instant_events(
        &self,
        forest: &LaminarForest,
        dim: usize,
    ) -> Result<Vec<EventCandidate>, LabelError> {
        let growing = self.growing_nodes(forest, dim);
        let mut out = Vec::new();
        for &s in &growing {
            let l_s = self.label(forest, s)?;
            for &sp in &growing {
                if sp == s || !forest.is_strict_descendant(sp, s) {
                    continue;
                }
                if self.den[sp] < self.den[s] && self.label(forest, sp)? == l_s {
                    out.push(EventCandidate {
                        kind: EventKind::Event1,
                        s,
                        s_prime: sp,
                    });
                }
            }
            for &sp in &self.t_sets[s] {
                if self.label(forest, sp)? == l_s {
                    out.push(EventCandidate {
                        kind: EventKind::Event2,
                        s,
                        s_prime: sp,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Applies instant events until quiescent. Order: deepest `s` first
    /// (smaller dimension set), Event 2 before Event 1, then wider `s'`
    /// first; remaining candidates are recomputed after every application.
    fn settle_events(&mut self, forest: &LaminarForest, dim: usize) -> Result<(), LabelError> {
        let budget = 4 * (forest.len() + 1) * (forest.len() + 1);
        for _ in 0..budget {
            let mut cands = self.instant_events(forest, dim)?;
            if cands.is_empty() {
                return Ok(());
            }
            cands.sort_by_key(|c| {
                (
                    forest.nodes[c.s].dims.len(),
                    match c.kind {
                        EventKind::Event2 => 0usize,
                        EventKind::Event1 => 1,
                    },
                    usize::MAX - forest.nodes[c.s_prime].dims.len(),
                    c.s,
                    c.s_prime,
                )
            });
            let c = cands.remove(0);
            match c.kind {
                EventKind::Event1 => self.apply_event1(forest, c.s, c.s_prime)?,
                EventKind::Event2 => self.apply_event2(forest, c.s, c.s_prime)?,
            }
        }
        panic!("event settling did not quiesce: internal invariant broken");
    }

    /// Adds `amount` of revenue to `dim`, firing every event crossed on the
    /// way. Events exactly at the end of the increment do not fire; the next
    /// increment of the same dimension will fire them at zero displacement.
    pub fn increment_revenue(
        &mut self,
        forest: &LaminarForest,
        dim: usize,
        amount: &Rational,
    ) -> Result<(), LabelError> {
        debug_assert!(!amount.is_negative());
        let mut remaining = amount.clone();
        if remaining.is_zero() {
            return Ok(());
        }
        loop {
            match self.next_crossing(forest, dim)? {
                Some((x, _)) if x < remaining => {
                    self.add_revenue(forest, dim, &x);
                    remaining -= &x;
                    self.settle_events(forest, dim)?;
                }
                _ => {
                    self.add_revenue(forest, dim, &remaining);
                    return Ok(());
                }
            }
        }
    }

    /// Raw revenue add: bumps `R(dim)` and the numerators of every node whose
    /// `L` set contains the dimension.
    fn add_revenue(&mut self, forest: &LaminarForest, dim: usize, amount: &Rational) {
        if amount.is_zero() {
            return;
        }
        let growing = self.growing_nodes(forest, dim);
        self.revenue[dim] += amount;
        for s in growing {
            self.num[s] += amount;
        }
    }

    /// Debug dump, one line per node: `id | label(p/q) | L={..} | T={..}`.
    pub fn dump(&self, forest: &LaminarForest, ids: &[String]) -> String {
        let mut out = String::new();
        for i in 0..forest.len() {
            let label = self
                .label(forest, i)
                .map(|l| format!("{}/{}", l.numer(), l.denom()))
                .unwrap_or_else(|_| "!".into());
            let l: Vec<String> = self.l_sets[i].iter().map(|k| format!("{{{k}}}")).collect();
            let t: Vec<String> = self.t_sets[i]
                .iter()
                .map(|&w| ids[forest.nodes[w].constraint].clone())
                .collect();
            out.push_str(&format!(
                "{} | label({}) | L={{{}}} | T={{{}}}\n",
                ids[forest.nodes[i].constraint],
                label,
                l.join(","),
                t.join(",")
            ));
        }
        out
    }
}

/// Exact validity check of Properties 1-3 plus the partition invariant.
/// Returns the first violated property as text; `None` means valid.
pub fn check_properties(state: &LabelState, forest: &LaminarForest) -> Option<String> {
    let mut labels = Vec::with_capacity(forest.len());
    for i in 0..forest.len() {
        // Property 3 as a literal identity: the cached quotient must equal
        // the one recomputed from the sets and raw revenues.
        let num = state.numerator_from_sets(i);
        let den = state.denominator_from_sets(forest, i);
        if !den.is_positive() {
            return Some(format!("property 3: non-positive denominator at node {i}"));
        }
        match state.label(forest, i) {
            Ok(l) => {
                if l != &num / &den {
                    return Some(format!("property 3: cached label diverges at node {i}"));
                }
                labels.push(l);
            }
            Err(e) => return Some(format!("property 3: {e}")),
        }
    }
    for s in 0..forest.len() {
        for &k in state.l_set(s) {
            let leaf = forest
                .singleton_of_dim(k)
                .expect("L members are singleton dims");
            if !forest.is_ancestor_or_self(s, leaf) {
                return Some(format!("partition: dim {k} in L({s}) but not under {s}"));
            }
            let mut cur = leaf;
            while cur != s {
                if labels[cur] > labels[s] {
                    return Some(format!(
                        "property 1: node {cur} on path {k}->{s} has larger label"
                    ));
                }
                cur = forest.nodes[cur].parent.expect("path to ancestor");
            }
        }
        for &sp in state.t_set(s) {
            if !forest.is_strict_descendant(sp, s) {
                return Some(format!("partition: {sp} in T({s}) but not a descendant"));
            }
            if labels[sp] <= labels[s] {
                return Some(format!("property 2: T({s}) member {sp} not above"));
            }
            let mut cur = forest.nodes[sp].parent.expect("strict descendant");
            while cur != s {
                if labels[cur] > labels[s] {
                    return Some(format!(
                        "property 2: intermediate {cur} between {sp} and {s} above label"
                    ));
                }
                cur = forest.nodes[cur].parent.expect("path to ancestor");
            }
        }
        // Partition: every descendant singleton accounted exactly once.
        let mut covered: BTreeSet<usize> = state.l_set(s).iter().copied().collect();
        let mut count = covered.len();
        for &sp in state.t_set(s) {
            for k in forest.singleton_dims_under(sp) {
                covered.insert(k);
                count += 1;
            }
        }
        let all = forest.singleton_dims_under(s);
        if count != all.len() || covered != all.into_iter().collect::<BTreeSet<_>>() {
            return Some(format!("partition: descendant singletons of {s} not covered once"));
        }
    }
    None
}
