//! Seeded random instance generators.
//!
//! All randomness flows through one ChaCha stream per call, so a seed fully
//! determines the generated instance. Bids are dyadic rationals `k/2^20`
//! scaled against the tightest containing budget, keeping exact arithmetic
//! cheap over long runs.

use crate::instance::{Instance, InstanceBuilder, Mode};
use crate::rational::{rat, Rational};
use num_traits::{One, Zero};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct RandomLaminarSpec {
    pub bidders: usize,
    pub dimensions: usize,
    /// Constraint levels including the root and the singleton leaves.
    pub depth: usize,
    pub branching: usize,
    pub impressions: usize,
    /// Bid cap as a fraction of the tightest containing budget.
    pub bid_fraction: Rational,
    /// Nonzero bid dimensions per (bidder, impression), at most.
    pub bids_per_impression: usize,
    /// Each impression bids for exactly one (random) bidder. Under exclusive
    /// bids the greedy dual-fitting certificate is sound even with large
    /// bids: a capped earn always fills the outermost cutting constraint.
    pub exclusive_bids: bool,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RandomGeneralSpec {
    pub bidders: usize,
    pub dimensions: usize,
    /// Target maximum number of constraints containing one dimension.
    pub p_max: usize,
    pub constraints_per_bidder: usize,
    pub impressions: usize,
    /// When true, bids are rescaled so the small-bids test holds exactly.
    pub small_bids: bool,
    /// Bid scale relative to the small-bids threshold (or to the budget when
    /// `small_bids` is off).
    pub bid_scale: Rational,
    pub bids_per_impression: usize,
    pub seed: u64,
}

fn rng_for(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn dyadic_unit(rng: &mut impl Rng) -> Rational {
    // Uniform in (0, 1] with denominator 2^20.
    rat(rng.gen_range(1..=(1i64 << 20)), 1 << 20)
}

fn coarse_money(rng: &mut impl Rng, lo_q: i64, hi_q: i64, den: i64) -> Rational {
    rat(rng.gen_range(lo_q..=hi_q), den)
}

/// Hierarchical partition of the dimension range per bidder, budgets drawn
/// so parents sit between 60% and 140% of their children's total.
pub fn random_laminar(spec: &RandomLaminarSpec) -> Instance {
    let mut rng = rng_for(spec.seed);
    let mut b = InstanceBuilder::new(Mode::Laminar, spec.dimensions);
    let mut tightest: Vec<Vec<Rational>> = Vec::new();
    for ui in 0..spec.bidders {
        let u = b.bidder(&format!("u{ui}"));
        // Build the tree bottom-up: singleton budgets first.
        let singles: Vec<Rational> = (0..spec.dimensions)
            .map(|_| coarse_money(&mut rng, 512, 2048, 1024)) // [1/2, 2]
            .collect();
        let mut tight = singles.clone();
        for (k, budget) in singles.iter().enumerate() {
            b.constraint(u, &format!("u{ui}_d{k}"), &[k], budget.clone());
        }
        // Internal levels: contiguous blocks shrink by the branching factor.
        let mut level_blocks: Vec<(usize, usize, Rational)> = singles
            .iter()
            .enumerate()
            .map(|(k, v)| (k, k + 1, v.clone()))
            .collect();
        let mut level = spec.depth.saturating_sub(1);
        let mut group_id = 0usize;
        while level >= 1 && level_blocks.len() > 1 {
            let mut next: Vec<(usize, usize, Rational)> = Vec::new();
            for chunk in level_blocks.chunks(spec.branching) {
                let lo = chunk[0].0;
                let hi = chunk[chunk.len() - 1].1;
                let child_sum: Rational = chunk
                    .iter()
                    .map(|(_, _, v)| v.clone())
                    .fold(Rational::zero(), |a, v| a + v);
                let factor = coarse_money(&mut rng, 614, 1434, 1024); // [0.6, 1.4]
                let budget = &child_sum * factor;
                if hi - lo > 1 {
                    let dims: Vec<usize> = (lo..hi).collect();
                    b.constraint(u, &format!("u{ui}_g{group_id}"), &dims, budget.clone());
                    group_id += 1;
                    for k in lo..hi {
                        if budget < tight[k] {
                            tight[k] = budget.clone();
                        }
                    }
                }
                next.push((lo, hi, budget));
            }
            level_blocks = next;
            level -= 1;
        }
        tightest.push(tight);
    }
    for vi in 0..spec.impressions {
        let mut bids = Vec::new();
        let solo = rng.gen_range(0..spec.bidders);
        for ui in 0..spec.bidders {
            if spec.exclusive_bids {
                if ui != solo {
                    continue;
                }
            } else if rng.gen_bool(0.2) {
                continue;
            }
            let count = rng.gen_range(1..=spec.bids_per_impression.max(1));
            for _ in 0..count {
                let dim = rng.gen_range(0..spec.dimensions);
                let bid = dyadic_unit(&mut rng) * &spec.bid_fraction * &tightest[ui][dim];
                bids.push((ui, dim, bid));
            }
        }
        b.impression(&format!("v{vi}"), &bids);
    }
    b.build().expect("generated laminar instance validates")
}

/// Random overlapping families with per-dimension membership capped at
/// `p_max`; bids optionally rescaled into the small-bids regime, exactly.
pub fn random_general(spec: &RandomGeneralSpec) -> Instance {
    let mut rng = rng_for(spec.seed);
    let mut b = InstanceBuilder::new(Mode::General, spec.dimensions);
    let mut families: Vec<Vec<(Vec<usize>, Rational)>> = Vec::new();
    for ui in 0..spec.bidders {
        let u = b.bidder(&format!("u{ui}"));
        let mut membership = vec![0usize; spec.dimensions];
        let mut family = Vec::new();
        for ci in 0..spec.constraints_per_bidder {
            let size = rng.gen_range(1..=3usize.min(spec.dimensions));
            let mut dims: Vec<usize> = Vec::new();
            for _ in 0..(size * 3) {
                let d = rng.gen_range(0..spec.dimensions);
                if membership[d] < spec.p_max && !dims.contains(&d) {
                    dims.push(d);
                    if dims.len() == size {
                        break;
                    }
                }
            }
            if dims.is_empty() {
                continue;
            }
            dims.sort_unstable();
            for &d in &dims {
                membership[d] += 1;
            }
            let budget = coarse_money(&mut rng, 1024, 2048, 1024); // [1, 2]
            b.constraint(u, &format!("u{ui}_c{ci}"), &dims, budget.clone());
            family.push((dims, budget));
        }
        families.push(family);
    }
    // Raw bids, then exact per-pair rescale into the small-bids regime.
    let p = families
        .iter()
        .flat_map(|f| {
            let mut counts = vec![0usize; spec.dimensions];
            for (dims, _) in f {
                for &d in dims {
                    counts[d] += 1;
                }
            }
            counts
        })
        .max()
        .unwrap_or(1)
        .max(1);
    let threshold = crate::rational::inv_log2_lower_bound((2 * p as u64 + 2).max(2));
    for vi in 0..spec.impressions {
        let mut bids: Vec<(usize, usize, Rational)> = Vec::new();
        for ui in 0..spec.bidders {
            if rng.gen_bool(0.2) {
                continue;
            }
            let count = rng.gen_range(1..=spec.bids_per_impression.max(1));
            let mut pair: Vec<(usize, Rational)> = Vec::new();
            for _ in 0..count {
                let dim = rng.gen_range(0..spec.dimensions);
                if pair.iter().any(|(d, _)| *d == dim) {
                    continue;
                }
                pair.push((dim, dyadic_unit(&mut rng) * &spec.bid_scale));
            }
            if spec.small_bids {
                // factor = min over constraints of threshold * B / bid mass.
                let mut factor = Rational::one();
                for (dims, budget) in &families[ui] {
                    let mass: Rational = pair
                        .iter()
                        .filter(|(d, _)| dims.contains(d))
                        .map(|(_, r)| r.clone())
                        .fold(Rational::zero(), |a, r| a + r);
                    if mass.is_zero() {
                        continue;
                    }
                    let allowed = &threshold * budget / mass;
                    if allowed < factor {
                        factor = allowed;
                    }
                }
                for (_, r) in pair.iter_mut() {
                    *r *= &factor;
                }
            }
            for (d, r) in pair {
                bids.push((ui, d, r));
            }
        }
        b.impression(&format!("v{vi}"), &bids);
    }
    let inst = b.build().expect("generated general instance validates");
    if spec.small_bids {
        debug_assert!(inst.stats().small_bids_ok);
    }
    inst
}

/// Tiny instances for oracle agreement. Every impression bids for exactly
/// one bidder, which keeps the fractional LP optimum integrally achievable
/// under partial earnings.
pub fn random_tiny(seed: u64, impressions: usize, bidders: usize, laminar: bool) -> Instance {
    let mut rng = rng_for(seed);
    let dims = 4usize;
    if laminar {
        random_tiny_from(
            &mut rng,
            Mode::Laminar,
            dims,
            impressions,
            bidders,
        )
    } else {
        random_tiny_from(&mut rng, Mode::General, dims, impressions, bidders)
    }
}

fn random_tiny_from(
    rng: &mut ChaCha20Rng,
    mode: Mode,
    dims: usize,
    impressions: usize,
    bidders: usize,
) -> Instance {
    let mut b = InstanceBuilder::new(mode, dims);
    for ui in 0..bidders {
        let u = b.bidder(&format!("u{ui}"));
        match mode {
            Mode::Laminar => {
                for k in 0..dims {
                    b.constraint(u, &format!("u{ui}_d{k}"), &[k], coarse_money(rng, 4, 16, 8));
                }
                let all: Vec<usize> = (0..dims).collect();
                b.constraint(u, &format!("u{ui}_root"), &all, coarse_money(rng, 8, 32, 8));
            }
            Mode::General => {
                for ci in 0..3 {
                    let size = rng.gen_range(1..=2usize);
                    let mut d: Vec<usize> = Vec::new();
                    while d.len() < size {
                        let x = rng.gen_range(0..dims);
                        if !d.contains(&x) {
                            d.push(x);
                        }
                    }
                    b.constraint(u, &format!("u{ui}_c{ci}"), &d, coarse_money(rng, 4, 16, 8));
                }
            }
        }
    }
    for vi in 0..impressions {
        let ui = rng.gen_range(0..bidders);
        let count = rng.gen_range(1..=2usize);
        let mut bids = Vec::new();
        for _ in 0..count {
            let dim = rng.gen_range(0..dims);
            if bids.iter().any(|(_, d, _)| *d == dim) {
                continue;
            }
            bids.push((ui, dim, coarse_money(rng, 1, 16, 8)));
        }
        b.impression(&format!("v{vi}"), &bids);
    }
    b.build().expect("tiny instance validates")
}

/// Deterministic seed stream for multi-trial experiments.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    let mut rng = StdRng::seed_from_u64(base ^ (trial.wrapping_mul(0x9e3779b97f4a7c15)));
    rng.gen()
}
