//! Exact soft and plain dynamic programming over interval-action MDPs.
//!
//! The soft backup is
//! `Q(s,k) = r_k + [terminal bonus] + gamma * sum_{s'} P(s'|s,k) V(s')` with
//! `V(s) = alpha * ln sum_k w_k exp(Q_k / alpha)`, which at the Boltzmann
//! fixed point equals `E_pi[Q] + alpha * H(pi)`. The plain solver replaces
//! the log-partition with a hard max. Sweeps are synchronous (Jacobi), so
//! results are independent of state enumeration order.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::mdp::{Mdp, PiecewisePolicy};
use crate::numerics::{neumaier_sum, weighted_log_sum_exp_scaled, FloatExt};

/// Default sup-norm convergence threshold on V.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Default sweep cap.
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Default tolerance for greedy-set ties.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    EmptyAtoms,
    NonpositiveAlpha(f64),
    NonpositiveWeight(f64),
    LengthMismatch { left: usize, right: usize },
    InvalidMdp(String),
    PolicyMisaligned(String),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::EmptyAtoms => write!(f, "empty atom list"),
            SolverError::NonpositiveAlpha(a) => write!(f, "nonpositive alpha {}", a),
            SolverError::NonpositiveWeight(w) => write!(f, "nonpositive weight {}", w),
            SolverError::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {} vs {}", left, right)
            }
            SolverError::InvalidMdp(m) => write!(f, "invalid mdp: {}", m),
            SolverError::PolicyMisaligned(m) => write!(f, "policy misaligned: {}", m),
        }
    }
}

/// Converged soft solution: values, per-atom Q, and the Boltzmann policy of
/// the final Q. `values` and `q` cover non-terminal states.
#[derive(Debug, Clone)]
pub struct SoftSolution {
    pub alpha: f64,
    pub values: BTreeMap<String, f64>,
    pub q: BTreeMap<String, Vec<f64>>,
    pub policy: PiecewisePolicy,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Plain (entropy-free) optimal solution. `greedy` holds, per state, the
/// indices of every atom whose Q is within `tie_tol` of the best.
#[derive(Debug, Clone)]
pub struct PlainSolution {
    pub values: BTreeMap<String, f64>,
    pub q: BTreeMap<String, Vec<f64>>,
    pub greedy: BTreeMap<String, Vec<usize>>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Result of evaluating a fixed policy: per-state values plus the return
/// from the start state.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub values: BTreeMap<String, f64>,
    pub j: f64,
}

/// `alpha * ln sum_k w_k exp(q_k / alpha)` over `(weight, q)` pairs.
pub fn soft_state_value(atoms: &[(f64, f64)], alpha: f64) -> Result<f64, SolverError> {
    check_atoms(atoms, alpha)?;
    Ok(alpha * weighted_log_sum_exp_scaled(atoms, alpha))
}

/// Boltzmann masses `p_k = w_k exp(q_k/alpha) / Z` over `(weight, q)` pairs.
pub fn boltzmann_policy(atoms: &[(f64, f64)], alpha: f64) -> Result<Vec<f64>, SolverError> {
    check_atoms(atoms, alpha)?;
    let m = atoms
        .iter()
        .map(|&(_, q)| q)
        .fold(f64::NEG_INFINITY, f64::max);
    let unnormalized: Vec<f64> = atoms
        .iter()
        .map(|&(w, q)| w * ((q - m) / alpha).exp())
        .collect();
    let z = neumaier_sum(unnormalized.iter().copied());
    Ok(unnormalized.into_iter().map(|u| u / z).collect())
}

fn check_atoms(atoms: &[(f64, f64)], alpha: f64) -> Result<(), SolverError> {
    if atoms.is_empty() {
        return Err(SolverError::EmptyAtoms);
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(SolverError::NonpositiveAlpha(alpha));
    }
    if let Some(&(w, _)) = atoms.iter().find(|&&(w, _)| !(w.is_finite() && w > 0.0)) {
        return Err(SolverError::NonpositiveWeight(w));
    }
    Ok(())
}

/// Differential entropy of a piecewise-constant density given as masses over
/// weighted atoms: `-sum_k p_k ln(p_k / w_k)`. Uniform density over total
/// weight `W` yields `ln W`.
pub fn policy_entropy(masses: &[f64], weights: &[f64]) -> f64 {
    neumaier_sum(
        masses
            .iter()
            .zip(weights)
            .filter(|(&p, _)| p > 0.0)
            .map(|(&p, &w)| -p * (p / w).ln()),
    )
}

/// Mass-based KL divergence `sum_k p_k ln(p_k / q_k)`. For masses over the
/// same atom partition the base-measure weights cancel; they are accepted
/// only to check alignment. Absolute-continuity failure (`q_k = 0 < p_k`)
/// returns `f64::INFINITY` rather than an error so that verification
/// reports stay total.
pub fn kl_divergence(p: &[f64], q: &[f64], weights: &[f64]) -> Result<f64, SolverError> {
    if p.len() != q.len() {
        return Err(SolverError::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    if weights.len() != p.len() {
        return Err(SolverError::LengthMismatch {
            left: weights.len(),
            right: p.len(),
        });
    }
    let mut acc = 0.0;
    for (&pk, &qk) in p.iter().zip(q) {
        if pk == 0.0 {
            continue;
        }
        if qk == 0.0 {
            return Ok(f64::INFINITY);
        }
        acc += pk * (pk / qk).ln();
    }
    // Clamp the tiny negative values that finite precision can produce.
    Ok(acc.max(0.0))
}

// ---------------------------------------------------------------------------
// Compiled form: string-keyed maps flattened to indices for the sweep loops.
// ---------------------------------------------------------------------------

pub(crate) struct CompiledAtom {
    pub weight: f64,
    /// Reward plus terminal-successor contribution (timing applied).
    pub base: f64,
    /// Non-terminal successors as (state index, probability).
    pub succ: Vec<(usize, f64)>,
}

pub(crate) struct CompiledMdp {
    pub ids: Vec<String>,
    pub terminal: Vec<bool>,
    pub atoms: Vec<Vec<CompiledAtom>>,
    pub gamma: f64,
    pub start: usize,
}

impl CompiledMdp {
    pub fn build(mdp: &Mdp) -> Result<Self, SolverError> {
        let report = mdp.validate();
        if !report.is_valid() {
            return Err(SolverError::InvalidMdp(report.to_string()));
        }
        let ids: Vec<String> = mdp.states.keys().cloned().collect();
        let index: BTreeMap<String, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let mut terminal = Vec::with_capacity(ids.len());
        let mut atoms = Vec::with_capacity(ids.len());
        for id in &ids {
            let spec = &mdp.states[id];
            terminal.push(spec.terminal);
            let mut compiled = Vec::with_capacity(spec.atoms.len());
            for atom in &spec.atoms {
                let mut base = atom.reward;
                let mut succ = Vec::new();
                for (target, &p) in &atom.transitions {
                    let t = &mdp.states[target];
                    if t.terminal {
                        base += p * mdp.terminal_bonus(t.terminal_reward);
                    } else if p > 0.0 {
                        succ.push((index[target], p));
                    }
                }
                compiled.push(CompiledAtom {
                    weight: atom.weight,
                    base,
                    succ,
                });
            }
            atoms.push(compiled);
        }
        Ok(Self {
            ids,
            terminal,
            atoms,
            gamma: mdp.gamma,
            start: index[&mdp.start_state],
        })
    }

    fn q_of(&self, s: usize, k: usize, v: &[f64]) -> f64 {
        let atom = &self.atoms[s][k];
        atom.base + self.gamma * atom.succ.iter().map(|&(t, p)| p * v[t]).sum::<f64>()
    }
}

enum Backup {
    Soft(f64),
    Max,
    Min,
}

fn value_sweeps(
    c: &CompiledMdp,
    backup: &Backup,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, Vec<Vec<f64>>, f64, usize, bool) {
    let n = c.ids.len();
    let mut v = alloc::vec![0.0_f64; n];
    let mut v_next = alloc::vec![0.0_f64; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut scratch: Vec<(f64, f64)> = Vec::new();
    while iterations < max_iter {
        residual = 0.0;
        for s in 0..n {
            if c.terminal[s] {
                continue;
            }
            scratch.clear();
            for k in 0..c.atoms[s].len() {
                scratch.push((c.atoms[s][k].weight, c.q_of(s, k, &v)));
            }
            let value = match backup {
                Backup::Soft(alpha) => alpha * weighted_log_sum_exp_scaled(&scratch, *alpha),
                Backup::Max => scratch.iter().map(|&(_, q)| q).fold(f64::NEG_INFINITY, f64::max),
                Backup::Min => scratch.iter().map(|&(_, q)| q).fold(f64::INFINITY, f64::min),
            };
            residual = residual.max((value - v[s]).abs());
            v_next[s] = value;
        }
        core::mem::swap(&mut v, &mut v_next);
        iterations += 1;
        if residual < tol {
            converged = true;
            break;
        }
    }
    let q: Vec<Vec<f64>> = (0..n)
        .map(|s| (0..c.atoms[s].len()).map(|k| c.q_of(s, k, &v)).collect())
        .collect();
    // Rebuild V from the final Q so the reported solution satisfies
    // V = max_k Q_k (plain) and V = alpha ln sum w exp(Q/alpha) (soft)
    // exactly, not just within the sweep tolerance.
    for s in 0..n {
        if c.terminal[s] {
            continue;
        }
        let pairs: Vec<(f64, f64)> = c.atoms[s]
            .iter()
            .zip(&q[s])
            .map(|(a, &qk)| (a.weight, qk))
            .collect();
        v[s] = match backup {
            Backup::Soft(alpha) => alpha * weighted_log_sum_exp_scaled(&pairs, *alpha),
            Backup::Max => pairs.iter().map(|&(_, q)| q).fold(f64::NEG_INFINITY, f64::max),
            Backup::Min => pairs.iter().map(|&(_, q)| q).fold(f64::INFINITY, f64::min),
        };
    }
    (v, q, residual, iterations, converged)
}

/// Soft (entropy-augmented) value iteration at temperature `alpha`.
/// Non-convergence within `max_iter` is flagged, not thrown.
pub fn soft_value_iteration(
    mdp: &Mdp,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SoftSolution, SolverError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(SolverError::NonpositiveAlpha(alpha));
    }
    let c = CompiledMdp::build(mdp)?;
    let (v, q, residual, iterations, converged) =
        value_sweeps(&c, &Backup::Soft(alpha), tol, max_iter);

    let mut values = BTreeMap::new();
    let mut q_map = BTreeMap::new();
    let mut masses = BTreeMap::new();
    for s in 0..c.ids.len() {
        if c.terminal[s] {
            continue;
        }
        let pairs: Vec<(f64, f64)> = c.atoms[s]
            .iter()
            .zip(&q[s])
            .map(|(a, &qk)| (a.weight, qk))
            .collect();
        values.insert(c.ids[s].clone(), v[s]);
        masses.insert(c.ids[s].clone(), boltzmann_policy(&pairs, alpha)?);
        q_map.insert(c.ids[s].clone(), q[s].clone());
    }
    Ok(SoftSolution {
        alpha,
        values,
        q: q_map,
        policy: PiecewisePolicy { masses },
        residual,
        iterations,
        converged,
    })
}

/// Standard optimal value iteration (hard max), with tie-tolerant greedy sets.
pub fn plain_value_iteration(
    mdp: &Mdp,
    tol: f64,
    tie_tol: f64,
) -> Result<PlainSolution, SolverError> {
    extremal_value_iteration(mdp, tol, tie_tol, Backup::Max)
}

/// Value iteration for the return-minimizing policy; greedy sets hold argmin
/// atoms. Used to locate worst atoms for the worst-case transform.
pub fn min_value_iteration(
    mdp: &Mdp,
    tol: f64,
    tie_tol: f64,
) -> Result<PlainSolution, SolverError> {
    extremal_value_iteration(mdp, tol, tie_tol, Backup::Min)
}

fn extremal_value_iteration(
    mdp: &Mdp,
    tol: f64,
    tie_tol: f64,
    backup: Backup,
) -> Result<PlainSolution, SolverError> {
    let c = CompiledMdp::build(mdp)?;
    let (v, q, residual, iterations, converged) = value_sweeps(&c, &backup, tol, DEFAULT_MAX_ITER);
    let mut values = BTreeMap::new();
    let mut q_map = BTreeMap::new();
    let mut greedy = BTreeMap::new();
    for s in 0..c.ids.len() {
        if c.terminal[s] {
            continue;
        }
        let set: Vec<usize> = match backup {
            Backup::Min => q[s]
                .iter()
                .enumerate()
                .filter(|(_, &qk)| qk <= v[s] + tie_tol)
                .map(|(k, _)| k)
                .collect(),
            _ => q[s]
                .iter()
                .enumerate()
                .filter(|(_, &qk)| qk >= v[s] - tie_tol)
                .map(|(k, _)| k)
                .collect(),
        };
        values.insert(c.ids[s].clone(), v[s]);
        q_map.insert(c.ids[s].clone(), q[s].clone());
        greedy.insert(c.ids[s].clone(), set);
    }
    Ok(PlainSolution {
        values,
        q: q_map,
        greedy,
        residual,
        iterations,
        converged,
    })
}

/// Fixed-point evaluation of a given policy.
///
/// `V(s) = sum_k p_k Q(s,k) + [alpha * H(pi(s)) if with_entropy]` with the
/// differential entropy `H = -sum p_k ln(p_k / w_k)`. Returns per-state
/// values and `j = V(start)` (0 if the start state is terminal).
pub fn policy_evaluation(
    mdp: &Mdp,
    policy: &PiecewisePolicy,
    alpha: f64,
    with_entropy: bool,
    tol: f64,
) -> Result<PolicyEvaluation, SolverError> {
    policy
        .check_against(mdp)
        .map_err(|e| SolverError::PolicyMisaligned(e.to_string()))?;
    let c = CompiledMdp::build(mdp)?;
    let n = c.ids.len();

    // Per-state masses and entropy bonus, aligned with compiled indices.
    let mut mass_rows: Vec<Vec<f64>> = alloc::vec![Vec::new(); n];
    let mut bonus = alloc::vec![0.0_f64; n];
    for s in 0..n {
        if c.terminal[s] {
            continue;
        }
        let row = policy.masses_at(&c.ids[s]).unwrap().to_vec();
        if with_entropy && alpha != 0.0 {
            let weights: Vec<f64> = c.atoms[s].iter().map(|a| a.weight).collect();
            bonus[s] = alpha * policy_entropy(&row, &weights);
        }
        mass_rows[s] = row;
    }

    let mut v = alloc::vec![0.0_f64; n];
    let mut v_next = alloc::vec![0.0_f64; n];
    for _ in 0..DEFAULT_MAX_ITER {
        let mut residual = 0.0_f64;
        for s in 0..n {
            if c.terminal[s] {
                continue;
            }
            let expected: f64 = mass_rows[s]
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(k, &p)| p * c.q_of(s, k, &v))
                .sum();
            let value = expected + bonus[s];
            residual = residual.max((value - v[s]).abs());
            v_next[s] = value;
        }
        core::mem::swap(&mut v, &mut v_next);
        if residual < tol {
            break;
        }
    }
    let mut values = BTreeMap::new();
    for s in 0..n {
        if !c.terminal[s] {
            values.insert(c.ids[s].clone(), v[s]);
        }
    }
    let j = if c.terminal[c.start] { 0.0 } else { v[c.start] };
    Ok(PolicyEvaluation { values, j })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::build_toy;
    use crate::mdp::{ActionAtom, Mdp, StateSpec, TerminalTiming};
    use alloc::vec;

    const LN_HALF_TOY_ZG: f64 = -0.609437905609796; // ln(0.2e + 1.8e^-20)

    #[test]
    fn soft_state_value_single_atom_identity() {
        for &(c, a) in &[(0.0, 1.0), (-3.5, 0.25), (7.0, 10.0)] {
            let v = soft_state_value(&[(1.0, c)], a).unwrap();
            assert!((v - c).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_state_value_toy_branches() {
        let vg = soft_state_value(&[(0.2, 1.0), (1.8, -20.0)], 1.0).unwrap();
        assert!((vg - LN_HALF_TOY_ZG).abs() < 1e-12);
        let vb = soft_state_value(&[(2.0, -1.0)], 1.0).unwrap();
        assert!((vb - (2.0_f64.ln() - 1.0)).abs() < 1e-12);
        assert!(matches!(
            soft_state_value(&[], 1.0),
            Err(SolverError::EmptyAtoms)
        ));
    }

    #[test]
    fn boltzmann_matches_direct_formula() {
        // weights (0.2, 1.8), q (1, -20): p1 = 0.2e / (0.2e + 1.8e^-20)
        let p = boltzmann_policy(&[(0.2, 1.0), (1.8, -20.0)], 1.0).unwrap();
        let z = 0.2 * libm::exp(1.0) + 1.8 * libm::exp(-20.0);
        assert!((p[0] - 0.2 * libm::exp(1.0) / z).abs() < 1e-15);
        assert!((p[1] - 1.8 * libm::exp(-20.0) / z).abs() < 1e-22);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boltzmann_high_temperature_limit() {
        let p = boltzmann_policy(&[(0.5, 3.0), (1.5, -2.0)], 1e6).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-6);
        assert!((p[1] - 0.75).abs() < 1e-6);
        // equal Q exactly: energies cancel at any temperature
        let p = boltzmann_policy(&[(0.5, 2.0), (1.5, 2.0)], 0.7).unwrap();
        assert_eq!(p, vec![0.25, 0.75]);
    }

    #[test]
    fn toy_soft_values_match_direct_calculation() {
        let sol = soft_value_iteration(&build_toy(), 1.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(sol.converged);
        let q0 = &sol.q["s_0"];
        assert!((q0[0] - 0.99 * LN_HALF_TOY_ZG).abs() < 1e-9, "q0[0]={}", q0[0]);
        assert!((q0[1] - 0.99 * (2.0_f64.ln() - 1.0)).abs() < 1e-9);
        // The misleading ordering: the trap branch scores higher.
        assert!(q0[1] > q0[0]);
    }

    #[test]
    fn self_loop_fixed_point_is_zero() {
        let mdp = Mdp::new("s", 0.9, 1.0, TerminalTiming::OnEntry).add_state(
            "s",
            StateSpec::with_atoms(vec![ActionAtom::new("a", 0.0, 1.0, 0.0).goes_to("s")]),
        );
        let sol = soft_value_iteration(&mdp, 1.0, 1e-13, DEFAULT_MAX_ITER).unwrap();
        assert!(sol.values["s"].abs() < 1e-11);
    }

    #[test]
    fn toy_plain_values_and_greedy() {
        let sol = plain_value_iteration(&build_toy(), DEFAULT_TOL, DEFAULT_TIE_TOL).unwrap();
        assert!((sol.q["s_0"][0] - 0.99).abs() < 1e-10);
        assert!((sol.q["s_0"][1] + 0.99).abs() < 1e-10);
        assert_eq!(sol.greedy["s_0"], vec![0]);
        assert_eq!(sol.greedy["s_g"], vec![0]); // the [-0.1, 0.1] atom
    }

    #[test]
    fn exact_ties_share_the_greedy_set() {
        let mdp = Mdp::new("s", 0.9, 1.0, TerminalTiming::OnEntry)
            .add_state(
                "s",
                StateSpec::with_atoms(vec![
                    ActionAtom::new("a", 0.0, 1.0, 0.5).goes_to("t"),
                    ActionAtom::new("b", 1.0, 2.0, 0.5).goes_to("t"),
                ]),
            )
            .add_state("t", StateSpec::terminal(0.0));
        let sol = plain_value_iteration(&mdp, DEFAULT_TOL, DEFAULT_TIE_TOL).unwrap();
        assert_eq!(sol.greedy["s"], vec![0, 1]);
    }

    #[test]
    fn policy_evaluation_hand_backups() {
        let toy = build_toy();
        let mut choices = BTreeMap::new();
        choices.insert("s_0".to_string(), 0usize); // A_1
        choices.insert("s_g".to_string(), 0usize); // mid
        let pi = PiecewisePolicy::deterministic(&toy, &choices);
        let eval = policy_evaluation(&toy, &pi, 1.0, false, DEFAULT_TOL).unwrap();
        assert!((eval.j - 0.99).abs() < 1e-10);

        choices.insert("s_0".to_string(), 1usize); // A_2
        let pi = PiecewisePolicy::deterministic(&toy, &choices);
        let eval = policy_evaluation(&toy, &pi, 1.0, false, DEFAULT_TOL).unwrap();
        assert!((eval.j + 0.99).abs() < 1e-10);
    }

    #[test]
    fn entropy_term_vanishes_at_zero_alpha() {
        let toy = build_toy();
        let pi = PiecewisePolicy::uniform_density(&toy);
        let with = policy_evaluation(&toy, &pi, 0.0, true, DEFAULT_TOL).unwrap();
        let without = policy_evaluation(&toy, &pi, 0.0, false, DEFAULT_TOL).unwrap();
        assert_eq!(with.j, without.j);
    }

    #[test]
    fn policy_misalignment_is_an_error() {
        let toy = build_toy();
        let mut pi = PiecewisePolicy::uniform_density(&toy);
        pi.masses.get_mut("s_0").unwrap().pop();
        assert!(matches!(
            policy_evaluation(&toy, &pi, 1.0, false, DEFAULT_TOL),
            Err(SolverError::PolicyMisaligned(_))
        ));
    }

    #[test]
    fn kl_divergence_cases() {
        let w = [1.0, 1.0];
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7], &w).unwrap(), 0.0);
        let v = kl_divergence(&[1.0, 0.0], &[0.5, 0.5], &w).unwrap();
        assert!((v - 2.0_f64.ln()).abs() < 1e-12);
        assert_eq!(
            kl_divergence(&[0.5, 0.5], &[1.0, 0.0], &w).unwrap(),
            f64::INFINITY
        );
        assert!(matches!(
            kl_divergence(&[1.0], &[0.5, 0.5], &w),
            Err(SolverError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn uniform_entropy_is_log_total_weight() {
        let h = policy_entropy(&[0.25, 0.75], &[0.5, 1.5]);
        assert!((h - 2.0_f64.ln()).abs() < 1e-12);
    }
}
