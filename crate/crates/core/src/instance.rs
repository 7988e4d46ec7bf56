//! Instance model: bidders, multi-tier budget constraints, impressions.
//!
//! An instance is immutable once loaded. In laminar mode the loader
//! additionally guarantees that every dimension carrying a nonzero bid for a
//! bidder has a singleton constraint `{k}` in that bidder's family,
//! synthesizing missing singletons with a budget equal to the tightest
//! enclosing budget (the enclosing constraint binds first, so semantics are
//! unchanged).

use crate::rational::{
    inv_log2_lower_bound, parse_money, render_money, Rational,
};
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Laminar,
    General,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Laminar => write!(f, "laminar"),
            Mode::General => write!(f, "general"),
        }
    }
}

/// Caps the revenue earned over the dimension subset `dims` at `budget`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetConstraint {
    pub id: String,
    /// Sorted, deduplicated dimension indices.
    pub dims: Vec<usize>,
    pub budget: Rational,
    /// True when the loader synthesized this singleton.
    pub synthesized: bool,
}

impl BudgetConstraint {
    pub fn contains(&self, dim: usize) -> bool {
        self.dims.binary_search(&dim).is_ok()
    }

    pub fn is_singleton(&self) -> bool {
        self.dims.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bidder {
    pub id: String,
    pub constraints: Vec<BudgetConstraint>,
    /// dim -> indices into `constraints` that contain it.
    pub constraints_of_dim: BTreeMap<usize, Vec<usize>>,
}

impl Bidder {
    fn rebuild_index(&mut self) {
        self.constraints_of_dim.clear();
        for (ci, c) in self.constraints.iter().enumerate() {
            for &d in &c.dims {
                self.constraints_of_dim.entry(d).or_default().push(ci);
            }
        }
    }

    /// Index of the singleton constraint `{dim}`, if present.
    pub fn singleton_of(&self, dim: usize) -> Option<usize> {
        self.constraints_of_dim
            .get(&dim)?
            .iter()
            .copied()
            .find(|&ci| self.constraints[ci].is_singleton())
    }
}

/// One online arrival. `bids[u]` is the sparse bid vector of bidder `u`,
/// sorted by dimension; absent entries are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Impression {
    pub id: String,
    pub bids: Vec<Vec<(usize, Rational)>>,
}

impl Impression {
    pub fn bid(&self, bidder: usize, dim: usize) -> Option<&Rational> {
        self.bids[bidder]
            .binary_search_by_key(&dim, |(d, _)| *d)
            .ok()
            .map(|i| &self.bids[bidder][i].1)
    }

    pub fn total_bid(&self, bidder: usize) -> Rational {
        self.bids[bidder]
            .iter()
            .fold(Rational::zero(), |acc, (_, r)| acc + r)
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub mode: Mode,
    pub num_dimensions: usize,
    pub bidders: Vec<Bidder>,
    pub impressions: Vec<Impression>,
}

/// Structural statistics of an instance.
///
/// `p` is the maximum, over bidders and dimensions, of the number of budget
/// constraints of that bidder containing the dimension. `eps` is the maximum
/// bid-to-budget ratio `sum_{k in K_s} r_uv^(k) / B_u^(s)`. `small_bids_ok`
/// holds when every such ratio is at most `1 / lg(2p + 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceStats {
    pub p: usize,
    pub eps: Rational,
    pub small_bids_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub what: String,
    pub where_: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.what, self.where_)
    }
}

#[derive(Debug)]
pub enum InstanceError {
    Parse(String),
    Invalid(Vec<Violation>),
}

impl std::fmt::Display for InstanceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InstanceError::Parse(s) => write!(f, "parse error: {s}"),
            InstanceError::Invalid(vs) => {
                write!(f, "invalid instance:")?;
                for v in vs {
                    write!(f, " [{v}]")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for InstanceError {}

impl Instance {
    pub fn bidder_index(&self, id: &str) -> Option<usize> {
        self.bidders.iter().position(|b| b.id == id)
    }

    /// Returns every violated type invariant; empty means the instance is
    /// well formed for its mode. Violations are returned, never thrown.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bidder_ids = BTreeMap::new();
        for (ui, b) in self.bidders.iter().enumerate() {
            if let Some(prev) = bidder_ids.insert(b.id.clone(), ui) {
                out.push(Violation {
                    what: "duplicate bidder id".into(),
                    where_: format!("bidders {prev} and {ui}"),
                });
            }
            let mut cids = BTreeMap::new();
            for (ci, c) in b.constraints.iter().enumerate() {
                if let Some(prev) = cids.insert(c.id.clone(), ci) {
                    out.push(Violation {
                        what: "duplicate constraint id".into(),
                        where_: format!("bidder {} constraints {prev} and {ci}", b.id),
                    });
                }
                if c.dims.is_empty() {
                    out.push(Violation {
                        what: "empty dimension set".into(),
                        where_: format!("bidder {} constraint {}", b.id, c.id),
                    });
                }
                if !c.budget.is_positive() {
                    out.push(Violation {
                        what: "non-positive budget".into(),
                        where_: format!("bidder {} constraint {}", b.id, c.id),
                    });
                }
                if c.dims.windows(2).any(|w| w[0] >= w[1]) {
                    out.push(Violation {
                        what: "unsorted or duplicate dims".into(),
                        where_: format!("bidder {} constraint {}", b.id, c.id),
                    });
                }
                if c.dims.iter().any(|&d| d >= self.num_dimensions) {
                    out.push(Violation {
                        what: "dimension out of range".into(),
                        where_: format!("bidder {} constraint {}", b.id, c.id),
                    });
                }
            }
            if self.mode == Mode::Laminar {
                for i in 0..b.constraints.len() {
                    for j in (i + 1)..b.constraints.len() {
                        if !laminar_pair(&b.constraints[i].dims, &b.constraints[j].dims) {
                            out.push(Violation {
                                what: "non-laminar pair".into(),
                                where_: format!(
                                    "bidder {} constraints {} and {}",
                                    b.id, b.constraints[i].id, b.constraints[j].id
                                ),
                            });
                        }
                    }
                }
            }
        }
        for (vi, v) in self.impressions.iter().enumerate() {
            if v.bids.len() != self.bidders.len() {
                out.push(Violation {
                    what: "bid vector count mismatch".into(),
                    where_: format!("impression {}", v.id),
                });
                continue;
            }
            for (ui, bids) in v.bids.iter().enumerate() {
                for (d, r) in bids {
                    if *d >= self.num_dimensions {
                        out.push(Violation {
                            what: "bid dimension out of range".into(),
                            where_: format!("impression {} bidder {}", v.id, self.bidders[ui].id),
                        });
                    }
                    if r.is_negative() {
                        out.push(Violation {
                            what: "negative bid".into(),
                            where_: format!("impression {} bidder {}", v.id, self.bidders[ui].id),
                        });
                    }
                    if self.mode == Mode::Laminar
                        && !r.is_zero()
                        && self.bidders[ui].singleton_of(*d).is_none()
                    {
                        out.push(Violation {
                            what: "missing singleton budget for bid dimension".into(),
                            where_: format!(
                                "impression {} bidder {} dim {}",
                                v.id, self.bidders[ui].id, d
                            ),
                        });
                    }
                }
            }
            let _ = vi;
        }
        out
    }

    /// `(p, eps, small_bids_ok)`. `eps` is 0 on an instance without bids.
    pub fn stats(&self) -> InstanceStats {
        let p = self.p_stat();
        let mut eps = Rational::zero();
        let base = 2 * p as u64 + 2;
        let threshold = inv_log2_lower_bound(base.max(2));
        let mut small = true;
        for v in &self.impressions {
            for (ui, bids) in v.bids.iter().enumerate() {
                if bids.is_empty() {
                    continue;
                }
                for c in &self.bidders[ui].constraints {
                    let mut sum = Rational::zero();
                    for (d, r) in bids {
                        if c.contains(*d) {
                            sum += r;
                        }
                    }
                    if sum.is_zero() {
                        continue;
                    }
                    let ratio = sum / &c.budget;
                    if ratio > threshold {
                        small = false;
                    }
                    if ratio > eps {
                        eps = ratio;
                    }
                }
            }
        }
        InstanceStats {
            p,
            eps,
            small_bids_ok: small,
        }
    }

    /// Maximum number of budget constraints of one bidder that any single
    /// dimension belongs to.
    pub fn p_stat(&self) -> usize {
        self.bidders
            .iter()
            .flat_map(|b| b.constraints_of_dim.values().map(|v| v.len()))
            .max()
            .unwrap_or(0)
    }
}

fn laminar_pair(a: &[usize], b: &[usize]) -> bool {
    let inter = intersection_size(a, b);
    inter == 0 || inter == a.len() || inter == b.len()
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// `a` strictly contains `b`.
pub fn strictly_contains(a: &[usize], b: &[usize]) -> bool {
    a.len() > b.len() && intersection_size(a, b) == b.len()
}

// ---------------------------------------------------------------------------
// Builder and file format
// ---------------------------------------------------------------------------

/// Raw, pre-index form used to assemble instances programmatically.
pub struct InstanceBuilder {
    pub mode: Mode,
    pub num_dimensions: usize,
    bidders: Vec<(String, Vec<(String, Vec<usize>, Rational)>)>,
    impressions: Vec<(String, BTreeMap<String, BTreeMap<usize, Rational>>)>,
}

impl InstanceBuilder {
    pub fn new(mode: Mode, num_dimensions: usize) -> Self {
        InstanceBuilder {
            mode,
            num_dimensions,
            bidders: Vec::new(),
            impressions: Vec::new(),
        }
    }

    pub fn bidder(&mut self, id: &str) -> usize {
        self.bidders.push((id.to_string(), Vec::new()));
        self.bidders.len() - 1
    }

    pub fn constraint(&mut self, bidder: usize, id: &str, dims: &[usize], budget: Rational) {
        let mut dims = dims.to_vec();
        dims.sort_unstable();
        dims.dedup();
        self.bidders[bidder].1.push((id.to_string(), dims, budget));
    }

    pub fn impression(&mut self, id: &str, bids: &[(usize, usize, Rational)]) {
        let mut map: BTreeMap<String, BTreeMap<usize, Rational>> = BTreeMap::new();
        for (bidder, dim, r) in bids {
            let bid = self.bidders[*bidder].0.clone();
            map.entry(bid).or_default().insert(*dim, r.clone());
        }
        self.impressions.push((id.to_string(), map));
    }

    /// Resolves ids, synthesizes laminar singletons, and validates.
    pub fn build(self) -> Result<Instance, InstanceError> {
        let mode = self.mode;
        let mut bidders: Vec<Bidder> = self
            .bidders
            .into_iter()
            .map(|(id, cs)| {
                let mut b = Bidder {
                    id,
                    constraints: cs
                        .into_iter()
                        .map(|(id, dims, budget)| BudgetConstraint {
                            id,
                            dims,
                            budget,
                            synthesized: false,
                        })
                        .collect(),
                    constraints_of_dim: BTreeMap::new(),
                };
                b.rebuild_index();
                b
            })
            .collect();

        let impressions: Vec<Impression> = self
            .impressions
            .into_iter()
            .map(|(id, map)| {
                let mut bids = vec![Vec::new(); bidders.len()];
                for (bid_id, dims) in map {
                    if let Some(ui) = bidders.iter().position(|b| b.id == bid_id) {
                        let mut v: Vec<(usize, Rational)> = dims.into_iter().collect();
                        v.retain(|(_, r)| !r.is_zero());
                        v.sort_by_key(|(d, _)| *d);
                        bids[ui] = v;
                    } else {
                        return Err(InstanceError::Parse(format!(
                            "impression {id} bids on unknown bidder {bid_id}"
                        )));
                    }
                }
                Ok(Impression { id, bids })
            })
            .collect::<Result<_, _>>()?;

        if mode == Mode::Laminar {
            synthesize_singletons(&mut bidders, &impressions);
        }

        let instance = Instance {
            mode,
            num_dimensions: self.num_dimensions,
            bidders,
            impressions,
        };
        let violations = instance.validate();
        if violations.is_empty() {
            Ok(instance)
        } else {
            Err(InstanceError::Invalid(violations))
        }
    }
}

/// Adds a singleton `{k}` for every bid-carrying dimension that lacks one.
/// The budget is the tightest enclosing budget; with no enclosing constraint
/// the singleton gets the total bid volume on the dimension plus one, which
/// can never bind.
fn synthesize_singletons(bidders: &mut [Bidder], impressions: &[Impression]) {
    for (ui, bidder) in bidders.iter_mut().enumerate() {
        let mut bid_dims: BTreeMap<usize, Rational> = BTreeMap::new();
        for v in impressions {
            for (d, r) in &v.bids[ui] {
                if !r.is_zero() {
                    *bid_dims.entry(*d).or_insert_with(Rational::zero) += r;
                }
            }
        }
        for (&dim, total) in &bid_dims {
            if bidder.singleton_of(dim).is_some() {
                continue;
            }
            let enclosing = bidder
                .constraints
                .iter()
                .filter(|c| c.contains(dim))
                .map(|c| c.budget.clone())
                .min();
            let budget = enclosing.unwrap_or_else(|| total.clone() + Rational::one_budget());
            bidder.constraints.push(BudgetConstraint {
                id: format!("__singleton_{dim}"),
                dims: vec![dim],
                budget,
                synthesized: true,
            });
        }
        bidder.rebuild_index();
    }
}

trait OneBudget {
    fn one_budget() -> Rational;
}

impl OneBudget for Rational {
    fn one_budget() -> Rational {
        Rational::from_integer(1.into())
    }
}

// Serde layer for the on-disk format. Money values travel as strings.

#[derive(Serialize, Deserialize)]
struct FileConstraint {
    id: String,
    dims: Vec<usize>,
    budget: String,
}

#[derive(Serialize, Deserialize)]
struct FileBidder {
    id: String,
    constraints: Vec<FileConstraint>,
}

#[derive(Serialize, Deserialize)]
struct FileImpression {
    id: String,
    bids: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Serialize, Deserialize)]
struct FileInstance {
    mode: Mode,
    num_dimensions: usize,
    bidders: Vec<FileBidder>,
    impressions: Vec<FileImpression>,
}

pub fn from_json(text: &str) -> Result<Instance, InstanceError> {
    let file: FileInstance =
        serde_json::from_str(text).map_err(|e| InstanceError::Parse(e.to_string()))?;
    let mut builder = InstanceBuilder::new(file.mode, file.num_dimensions);
    for b in &file.bidders {
        let ui = builder.bidder(&b.id);
        for c in &b.constraints {
            let budget = parse_money(&c.budget)
                .map_err(|e| InstanceError::Parse(format!("constraint {}: {e}", c.id)))?;
            builder.constraint(ui, &c.id, &c.dims, budget);
        }
    }
    for v in &file.impressions {
        let mut flat = Vec::new();
        for (bid_id, dims) in &v.bids {
            let Some(ui) = file.bidders.iter().position(|b| &b.id == bid_id) else {
                return Err(InstanceError::Parse(format!(
                    "impression {} bids on unknown bidder {bid_id}",
                    v.id
                )));
            };
            for (dim_s, money) in dims {
                let dim: usize = dim_s
                    .parse()
                    .map_err(|_| InstanceError::Parse(format!("bad dim key {dim_s}")))?;
                let r = parse_money(money)
                    .map_err(|e| InstanceError::Parse(format!("impression {}: {e}", v.id)))?;
                flat.push((ui, dim, r));
            }
        }
        builder.impression(&v.id, &flat);
    }
    builder.build()
}

/// Serializes without synthesized singletons, so a load/store round trip of a
/// hand-written file is stable.
pub fn to_json(instance: &Instance) -> String {
    let file = FileInstance {
        mode: instance.mode,
        num_dimensions: instance.num_dimensions,
        bidders: instance
            .bidders
            .iter()
            .map(|b| FileBidder {
                id: b.id.clone(),
                constraints: b
                    .constraints
                    .iter()
                    .filter(|c| !c.synthesized)
                    .map(|c| FileConstraint {
                        id: c.id.clone(),
                        dims: c.dims.clone(),
                        budget: render_money(&c.budget),
                    })
                    .collect(),
            })
            .collect(),
        impressions: instance
            .impressions
            .iter()
            .map(|v| FileImpression {
                id: v.id.clone(),
                bids: v
                    .bids
                    .iter()
                    .enumerate()
                    .filter(|(_, bids)| !bids.is_empty())
                    .map(|(ui, bids)| {
                        (
                            instance.bidders[ui].id.clone(),
                            bids.iter()
                                .map(|(d, r)| (d.to_string(), render_money(r)))
                                .collect(),
                        )
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("serializable")
}
