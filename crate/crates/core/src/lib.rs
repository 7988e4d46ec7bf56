//! Online budgeted allocation with multi-tier advertiser budgets.
//!
//! A bidder's spend is capped not by one number but by a family of budget
//! constraints over subsets of user-attribute dimensions. This crate
//! implements the online strategies for that model (a primal-dual algorithm
//! for laminar families, exponential-potential algorithms for general
//! families with small, partial, and all-or-nothing earnings, and greedy with
//! a dual-fitting certificate), the runtime certificates that accompany them,
//! adaptive adversaries that realize the known lower bounds, and offline
//! optimum oracles for measuring competitive ratios at desk scale.
//!
//! Money is exact rational arithmetic end to end; only scores, potentials,
//! and dual values pass through `f64` exponentials.

pub mod adversary;
pub mod alloc;
pub mod duals;
pub mod forest;
pub mod gen;
pub mod instance;
pub mod labels;
pub mod opt;
pub mod rational;
pub mod session;
pub mod simplex;

pub use alloc::{AllocationState, AllocError};
pub use forest::LaminarForest;
pub use instance::{Bidder, BudgetConstraint, Impression, Instance, InstanceStats, Mode};
pub use labels::{init_labels, LabelState};
pub use rational::Rational;
pub use session::{
    adlaminar_active_dims, adlaminar_score, max_earnable_laminar, run_online, AuditMode,
    AuditOptions, Decision, Report, Session, SessionConfig, Strategy,
};
