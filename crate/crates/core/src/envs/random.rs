//! Seeded random MDPs with deterministic successors, used by property tests
//! and certificate sweeps.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::bifurcation::TargetPolicySpec;
use crate::mdp::{ActionAtom, Mdp, StateSpec, TerminalTiming};
use crate::numerics::{next_f64, next_in_range};

/// Random MDP with 2..=`max_states` non-terminal states, 1..=`max_atoms`
/// atoms per state, one or two terminals, rewards in [-2, 2], and every
/// atom leading deterministically to a random state. Timing and temperature
/// vary with the seed.
pub fn random_deterministic_mdp(seed: u64, max_states: usize, max_atoms: usize) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_states = 2 + (rng.next_u64() as usize) % max_states.saturating_sub(1).max(1);
    let n_terminals = 1 + (rng.next_u64() as usize) % 2;
    let alpha = next_in_range(&mut rng, 0.5, 2.0);
    let timing = if rng.next_u64() % 2 == 0 {
        TerminalTiming::OnEntry
    } else {
        TerminalTiming::Discounted
    };
    let mut mdp = Mdp::new("s000", 0.95, alpha, timing);
    let mut targets: Vec<String> = Vec::new();
    for t in 0..n_terminals {
        let id = format!("t{:02}", t);
        mdp = mdp.add_state(&id, StateSpec::terminal(next_in_range(&mut rng, -2.0, 2.0)));
        targets.push(id);
    }
    for s in 0..n_states {
        targets.push(format!("s{:03}", s));
    }
    for s in 0..n_states {
        let n_atoms = 1 + (rng.next_u64() as usize) % max_atoms.max(1);
        let mut atoms = Vec::with_capacity(n_atoms);
        let mut lo = next_in_range(&mut rng, -1.0, 0.0);
        for k in 0..n_atoms {
            let width = next_in_range(&mut rng, 0.25, 2.0);
            let succ = &targets[(rng.next_u64() as usize) % targets.len()];
            atoms.push(
                ActionAtom::new(
                    &format!("a{}", k),
                    lo,
                    lo + width,
                    next_in_range(&mut rng, -2.0, 2.0),
                )
                .goes_to(succ),
            );
            lo += width;
        }
        mdp = mdp.add_state(&format!("s{:03}", s), StateSpec::with_atoms(atoms));
    }
    mdp
}

/// Strictly positive random target over a random non-terminal state's atoms.
pub fn random_positive_target(mdp: &Mdp, seed: u64) -> TargetPolicySpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let non_terminal: Vec<_> = mdp.non_terminal_states().collect();
    let (sid, spec) = non_terminal[(rng.next_u64() as usize) % non_terminal.len()];
    let mut masses: Vec<f64> = (0..spec.atoms.len())
        .map(|_| 0.05 + next_f64(&mut rng))
        .collect();
    let total: f64 = masses.iter().sum();
    for m in &mut masses {
        *m /= total;
    }
    TargetPolicySpec::new(sid, masses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_mdps_are_valid_and_deterministic() {
        for seed in 0..20 {
            let a = random_deterministic_mdp(seed, 6, 4);
            assert!(a.validate().is_valid(), "seed {}: {}", seed, a.validate());
            assert_eq!(a, random_deterministic_mdp(seed, 6, 4));
            let t = random_positive_target(&a, seed);
            let sum: f64 = t.masses.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(t.masses.iter().all(|&m| m > 0.0));
        }
    }
}
