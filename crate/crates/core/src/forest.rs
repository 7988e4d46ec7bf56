//! Laminar forest representation of one bidder's budget family.
//!
//! Each node is a budget constraint; the parent of a node is the minimal
//! strict superset in the family. Singleton budgets are the leaves that the
//! label machine cares about.

use crate::instance::{strictly_contains, Bidder};
use crate::rational::Rational;

#[derive(Debug, Clone)]
pub struct ForestNode {
    /// Index into the bidder's constraint list.
    pub constraint: usize,
    pub dims: Vec<usize>,
    pub budget: Rational,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
    /// `Some(k)` when this node is the singleton `{k}`.
    pub singleton: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct LaminarForest {
    pub nodes: Vec<ForestNode>,
    pub roots: Vec<usize>,
    /// dim -> singleton node, for bid-carrying dimensions.
    singleton_node: Vec<Option<usize>>,
}

impl LaminarForest {
    /// Builds the containment forest of a laminar family. Assumes the family
    /// already validated as laminar. Node order follows the constraint list.
    pub fn build(bidder: &Bidder, num_dimensions: usize) -> LaminarForest {
        let n = bidder.constraints.len();
        let mut nodes: Vec<ForestNode> = bidder
            .constraints
            .iter()
            .enumerate()
            .map(|(ci, c)| ForestNode {
                constraint: ci,
                dims: c.dims.clone(),
                budget: c.budget.clone(),
                parent: None,
                children: Vec::new(),
                depth: 0,
                singleton: if c.dims.len() == 1 {
                    Some(c.dims[0])
                } else {
                    None
                },
            })
            .collect();

        // Parent = minimal superset. Constraints over the same dimension set
        // are legal (the tighter budget binds); they form a chain ordered by
        // constraint index, with the highest index innermost, so singletons
        // hang below every equal-set node.
        for i in 0..n {
            let mut best: Option<usize> = None;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let can_parent = strictly_contains(&nodes[j].dims, &nodes[i].dims)
                    || (nodes[j].dims == nodes[i].dims && j < i);
                if !can_parent {
                    continue;
                }
                best = match best {
                    None => Some(j),
                    Some(b) if nodes[j].dims.len() < nodes[b].dims.len() => Some(j),
                    // Same size: prefer the later index, the innermost link.
                    Some(b) if nodes[j].dims.len() == nodes[b].dims.len() && j > b => Some(j),
                    Some(b) => Some(b),
                };
            }
            nodes[i].parent = best;
        }
        let mut roots = Vec::new();
        for i in 0..n {
            match nodes[i].parent {
                Some(p) => nodes[p].children.push(i),
                None => roots.push(i),
            }
        }
        // Depths via iteration from roots; the forest is shallow.
        let mut stack: Vec<usize> = roots.clone();
        while let Some(i) = stack.pop() {
            let d = nodes[i].parent.map_or(0, |p| nodes[p].depth + 1);
            nodes[i].depth = d;
            stack.extend(nodes[i].children.iter().copied());
        }
        // With duplicate singleton constraints the innermost (deepest) node
        // carries the dimension; it is the one whose ancestors cover the
        // whole chain.
        let mut singleton_node = vec![None; num_dimensions];
        for (i, node) in nodes.iter().enumerate() {
            if let Some(k) = node.singleton {
                match singleton_node[k] {
                    Some(prev) if nodes[i].depth <= nodes[prev as usize].depth => {}
                    _ => singleton_node[k] = Some(i),
                }
            }
        }
        LaminarForest {
            nodes,
            roots,
            singleton_node,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn singleton_of_dim(&self, dim: usize) -> Option<usize> {
        self.singleton_node.get(dim).copied().flatten()
    }

    /// Ancestors of `node` including itself, leaf to root.
    pub fn ancestors(&self, node: usize) -> Vec<usize> {
        let mut out = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out
    }

    /// True if `anc` lies on the path from `node` to the root (inclusive).
    pub fn is_ancestor_or_self(&self, anc: usize, node: usize) -> bool {
        let mut cur = Some(node);
        while let Some(i) = cur {
            if i == anc {
                return true;
            }
            cur = self.nodes[i].parent;
        }
        false
    }

    pub fn is_strict_descendant(&self, desc: usize, of: usize) -> bool {
        desc != of && self.is_ancestor_or_self(of, desc)
    }

    /// Singleton dimensions in the subtree rooted at `node` (including the
    /// node itself when it is a singleton).
    pub fn singleton_dims_under(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(i) = stack.pop() {
            if let Some(k) = self.nodes[i].singleton {
                out.push(k);
            }
            stack.extend(self.nodes[i].children.iter().copied());
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}
