//! Shared helpers for integration tests.

use adalloc::forest::LaminarForest;
use adalloc::instance::{Instance, InstanceBuilder, Mode};
use adalloc::rational::{rat, Rational};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

/// One-bidder laminar instance with an explicit singleton for every
/// dimension, random nesting up to `max_depth` constraint levels, and dyadic
/// budgets. Returns the instance and the bidder's forest.
pub fn random_label_tree(rng: &mut ChaCha20Rng, max_dims: usize, max_depth: usize) -> (Instance, LaminarForest) {
    let dims = rng.gen_range(2..=max_dims);
    let mut b = InstanceBuilder::new(Mode::Laminar, dims);
    let u = b.bidder("u0");
    for k in 0..dims {
        b.constraint(u, &format!("d{k}"), &[k], money(rng));
    }
    let mut next_id = 0usize;
    // Recursive contiguous partition; a level-0 root is skipped sometimes so
    // forests with several roots get exercised too.
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    if rng.gen_bool(0.7) || dims <= 2 {
        stack.push((0, dims, 1));
    } else {
        let cut = rng.gen_range(1..dims);
        stack.push((0, cut, 1));
        stack.push((cut, dims, 1));
    }
    while let Some((lo, hi, level)) = stack.pop() {
        if hi - lo <= 1 {
            continue;
        }
        let span: Vec<usize> = (lo..hi).collect();
        b.constraint(u, &format!("g{next_id}"), &span, money(rng));
        next_id += 1;
        if level + 2 >= max_depth {
            continue; // children are the singletons
        }
        let parts = rng.gen_range(2..=3.min(hi - lo));
        let mut cuts: Vec<usize> = (0..parts - 1)
            .map(|_| rng.gen_range(lo + 1..hi))
            .collect();
        cuts.push(lo);
        cuts.push(hi);
        cuts.sort_unstable();
        cuts.dedup();
        for w in cuts.windows(2) {
            stack.push((w[0], w[1], level + 1));
        }
    }
    let inst = b.build().expect("random label tree validates");
    let forest = LaminarForest::build(&inst.bidders[0], dims);
    (inst, forest)
}

fn money(rng: &mut ChaCha20Rng) -> Rational {
    rat(rng.gen_range(4..=32), 8) // [1/2, 4] in eighths
}

pub fn dyadic_amount(rng: &mut ChaCha20Rng) -> Rational {
    rat(rng.gen_range(0..=2048), 1024) // [0, 2] in 1/1024 steps
}
