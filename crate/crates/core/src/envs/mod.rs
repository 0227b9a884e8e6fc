//! Desk-scale environments: the two-branch toy MDP, a squashed-Gaussian
//! branch evaluator, 2D obstacle navigation with a grid discretizer, and
//! synthetic trap chains / random MDPs for benchmarks and property tests.

mod gaussian;
mod obstacle;
mod random;
mod toy;
mod trap_chain;

pub use gaussian::{toy_gaussian_values, GaussianPolicyParams};
pub use obstacle::{Obstacle2D, Obstacle2DState, Outcome};
pub use random::{random_deterministic_mdp, random_positive_target};
pub use toy::{alpha_scaled_toy, build_toy, misleading_reward_interval};
pub use trap_chain::{build_trap_chain, TrapChain};

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum EnvError {
    NotToyShaped(String),
    EmptyInterval { lo: f64, hi: f64 },
    ActionOutOfBounds { x: f64, y: f64, bound: f64 },
    EpisodeFinished,
    BadGrid(usize),
}

impl fmt::Display for EnvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvError::NotToyShaped(m) => write!(f, "not toy-shaped: {}", m),
            EnvError::EmptyInterval { lo, hi } => {
                write!(f, "empty misleading-reward interval ({}, {})", lo, hi)
            }
            EnvError::ActionOutOfBounds { x, y, bound } => {
                write!(f, "action ({}, {}) outside [-{b}, {b}]^2", x, y, b = bound)
            }
            EnvError::EpisodeFinished => write!(f, "episode already finished"),
            EnvError::BadGrid(n) => write!(f, "grid size {} below minimum 4", n),
        }
    }
}
