//! The six-state toy MDP: one decision state whose two action intervals lead
//! to a precise high-reward branch and a wide low-reward branch. The wide
//! branch's larger action measure inflates its soft value, so the Boltzmann
//! policy prefers it even though the plain optimum does not.

use crate::envs::EnvError;
use crate::mdp::{ActionAtom, Mdp, StateSpec, TerminalTiming};
use crate::numerics::FloatExt;
use crate::solvers::soft_state_value;

use alloc::format;
use alloc::vec;

/// Six states, gamma 0.99, alpha 1, terminal rewards collected on entry.
///
/// * `s_0`: `A_1 = [-1, 0)` to `s_g`, `A_2 = [0, 1]` to `s_b`;
/// * `s_g`: `[-0.1, 0.1]` (weight 0.2) to the +1 terminal, the remaining
///   measure (two atoms of weight 0.9) to the -20 terminal;
/// * `s_b`: all of `[-1, 1]` (weight 2) to the -1 terminal.
pub fn build_toy() -> Mdp {
    Mdp::new("s_0", 0.99, 1.0, TerminalTiming::OnEntry)
        .add_state(
            "s_0",
            StateSpec::with_atoms(vec![
                ActionAtom::new("A_1", -1.0, 0.0, 0.0).goes_to("s_g"),
                ActionAtom::new("A_2", 0.0, 1.0, 0.0).goes_to("s_b"),
            ]),
        )
        .add_state(
            "s_g",
            StateSpec::with_atoms(vec![
                ActionAtom::new("mid", -0.1, 0.1, 0.0).goes_to("s_T_plus"),
                ActionAtom::new("left", -1.0, -0.1, 0.0).goes_to("s_gT_minus"),
                ActionAtom::new("right", 0.1, 1.0, 0.0).goes_to("s_gT_minus"),
            ]),
        )
        .add_state(
            "s_b",
            StateSpec::with_atoms(vec![ActionAtom::new("all", -1.0, 1.0, 0.0).goes_to("s_bT_minus")]),
        )
        .add_state("s_T_plus", StateSpec::terminal(1.0))
        .add_state("s_gT_minus", StateSpec::terminal(-20.0))
        .add_state("s_bT_minus", StateSpec::terminal(-1.0))
}

/// The toy with all three terminal rewards scaled by `alpha_new` and the
/// temperature set to match. Scaling rewards with the temperature leaves
/// `Z_{Q/alpha}` unchanged, so the soft-preferred atom at `s_0` stays the
/// wide branch for any positive temperature.
pub fn alpha_scaled_toy(alpha_new: f64) -> Mdp {
    let mut mdp = build_toy();
    mdp.alpha = alpha_new;
    for spec in mdp.states.values_mut() {
        if spec.terminal {
            spec.terminal_reward *= alpha_new;
        }
    }
    mdp
}

/// The open interval of `s_b`-terminal rewards that mislead the soft
/// preference at `s_0` toward `A_2` while the plain optimum keeps `A_1`:
/// `( [alpha ln Z(s_g) - alpha ln |A_b|] / c , r_plus )` where `Z(s_g)`
/// sums `w exp(Q/alpha)` over the precise branch, `|A_b|` is the wide
/// branch's total action measure, `r_plus` its best terminal reward, and
/// `c` is 1 under on-entry timing or `gamma` under discounted timing.
pub fn misleading_reward_interval(mdp: &Mdp, alpha: f64) -> Result<(f64, f64), EnvError> {
    let s_g = mdp
        .state("s_g")
        .filter(|s| !s.terminal)
        .ok_or_else(|| EnvError::NotToyShaped("missing non-terminal `s_g`".into()))?;
    let s_b = mdp
        .state("s_b")
        .filter(|s| !s.terminal)
        .ok_or_else(|| EnvError::NotToyShaped("missing non-terminal `s_b`".into()))?;

    let mut pairs = vec::Vec::with_capacity(s_g.atoms.len());
    let mut r_plus = f64::NEG_INFINITY;
    for atom in &s_g.atoms {
        let succ = atom
            .deterministic_successor()
            .ok_or_else(|| EnvError::NotToyShaped(format!("atom `{}` of s_g is stochastic", atom.id)))?;
        let spec = &mdp.states[succ];
        if !spec.terminal {
            return Err(EnvError::NotToyShaped(format!(
                "s_g atom `{}` leads to non-terminal `{}`",
                atom.id, succ
            )));
        }
        r_plus = r_plus.max(spec.terminal_reward);
        pairs.push((atom.weight, mdp.terminal_bonus(spec.terminal_reward)));
    }
    let z_log = soft_state_value(&pairs, alpha)
        .map_err(|e| EnvError::NotToyShaped(format!("{}", e)))?;

    let measure: f64 = s_b.atoms.iter().map(|a| a.weight).sum();
    let scale = match mdp.terminal_timing {
        TerminalTiming::OnEntry => 1.0,
        TerminalTiming::Discounted => mdp.gamma,
    };
    let lo = (z_log - alpha * measure.ln()) / scale;
    let hi = r_plus;
    if !(lo < hi) {
        return Err(EnvError::EmptyInterval { lo, hi });
    }
    Ok((lo, hi))
}
