//! Deterministic reward chains plus their worst-case bifurcation transform:
//! the benchmark on which soft learners chase the detour atoms while plain
//! learners keep the full return.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::bifurcation::{worst_case_transform, BifurcationError, BifurcationParams, ExtensionReport};
use crate::mdp::{ActionAtom, Mdp, StateSpec, TerminalTiming};
use crate::numerics::next_in_range;

/// A chain benchmark: the original MDP, its worst-case extension at
/// concentration 0.99, and the certificate (including the return gap).
#[derive(Debug, Clone)]
pub struct TrapChain {
    pub original: Mdp,
    pub extended: Mdp,
    pub params: Vec<BifurcationParams>,
    pub report: ExtensionReport,
    pub seed: u64,
}

/// `length` states in a row, each with an `advance` atom (reward
/// `good_reward`) and a `detour` atom (reward `bad_reward`), both moving to
/// the next state; the last state feeds a zero-reward terminal. The seed
/// jitters atom measures in [0.5, 2] (which moves soft values but not plain
/// returns), then applies the worst-case transform with eta = 0.99.
pub fn build_trap_chain(
    length: usize,
    good_reward: f64,
    bad_reward: f64,
    seed: u64,
) -> Result<TrapChain, BifurcationError> {
    let length = length.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mdp = Mdp::new("c000", 0.99, 1.0, TerminalTiming::OnEntry)
        .add_state("end", StateSpec::terminal(0.0));
    for i in 0..length {
        let next = if i + 1 == length {
            "end".into()
        } else {
            format!("c{:03}", i + 1)
        };
        let w_adv = next_in_range(&mut rng, 0.5, 2.0);
        let w_det = next_in_range(&mut rng, 0.5, 2.0);
        let atoms = vec![
            ActionAtom::new("advance", 0.0, w_adv, good_reward).goes_to(&next),
            ActionAtom::new("detour", w_adv, w_adv + w_det, bad_reward).goes_to(&next),
        ];
        mdp = mdp.add_state(&format!("c{:03}", i), StateSpec::with_atoms(atoms));
    }
    let wc = worst_case_transform(&mdp, 0.99)?;
    Ok(TrapChain {
        original: mdp,
        extended: wc.extended,
        params: wc.params,
        report: wc.report,
        seed,
    })
}
