//! Exact analysis toolkit for maximum-entropy reinforcement learning on
//! interval-action MDPs.
//!
//! The crate provides four layers:
//!
//! * [`mdp`] — the data model: states whose actions are weighted, disjoint
//!   intervals (*atoms*) with per-atom rewards and transitions, plus
//!   validation and refinement utilities;
//! * [`solvers`] — exact soft (entropy-augmented) and plain value iteration,
//!   Boltzmann policy extraction, policy evaluation, and KL divergence;
//! * [`bifurcation`] — construction and verification of bifurcation
//!   extensions: inserted two-branch states that steer the soft-optimal
//!   policy at a chosen state to an arbitrary target distribution while
//!   provably leaving plain optima unchanged;
//! * [`learners`] / [`envs`] — tabular soft/plain/adaptive Q-learners and
//!   the desk-scale environments they are benchmarked on.
//!
//! The crate is `no_std` (with `alloc`); file formats, CSV export, and the
//! command-line front end live in the companion `entropy-trap-cli` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bifurcation;
pub mod envs;
pub mod learners;
pub mod mdp;
mod numerics;
pub mod solvers;

pub use bifurcation::{
    backward_q, build_extension, forward_solve, verify_extension, worst_case_transform,
    BifurcationError, BifurcationOptions, BifurcationParams, ExtensionReport, TargetPolicySpec,
    WorstCaseTransform,
};
pub use mdp::{
    ActionAtom, Mdp, MdpError, PiecewisePolicy, StateSpec, TerminalTiming, ValidationReport,
    Violation,
};
pub use solvers::{
    boltzmann_policy, kl_divergence, min_value_iteration, plain_value_iteration,
    policy_evaluation, soft_state_value, soft_value_iteration, PlainSolution, PolicyEvaluation,
    SoftSolution, SolverError, DEFAULT_MAX_ITER, DEFAULT_TIE_TOL, DEFAULT_TOL,
};
