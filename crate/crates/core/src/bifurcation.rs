//! Bifurcation extensions: inserting intermediate two-branch states that
//! steer the soft-optimal (Boltzmann) policy at a chosen state to an
//! arbitrary strictly-positive target distribution while leaving every
//! plain-optimal Q value on the original states unchanged.
//!
//! The construction solves two equations per rewired atom:
//!
//! * backward: `Q_k = alpha * ln(p_k / w_k) + v_s` shapes the Q landscape at
//!   the target state so its Boltzmann policy equals the target and its soft
//!   value stays `v_s`;
//! * forward: `q2 = alpha * ln((exp(v/alpha) - w1 exp(q1/alpha)) / w2)`
//!   realizes the required soft value `v` at the inserted state through the
//!   trap branch's terminal reward.
//!
//! Setting the re-entry reward to `(1-gamma) * V_plain(s')` makes the
//! inserted state's plain value equal the successor's, so plain optima are
//! untouched; a weight lower bound keeps the trap branch's plain Q below
//! re-entry by a margin `delta`, which forces the extra soft value to come
//! from action-space measure (entropy) rather than reward.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::mdp::{ActionAtom, Mdp, PiecewisePolicy, StateSpec, TerminalTiming};
use crate::numerics::FloatExt;
use crate::solvers::{
    kl_divergence, min_value_iteration, plain_value_iteration, policy_evaluation,
    soft_value_iteration, PlainSolution, SoftSolution, SolverError, DEFAULT_MAX_ITER,
    DEFAULT_TIE_TOL, DEFAULT_TOL,
};

/// Headroom required on `v/alpha - (ln w1 + q1/alpha)` before the forward
/// solve is attempted; keeps `ln(e^v - w1 e^q1)` well away from `ln 0`.
const FEASIBILITY_EPS: f64 = 1e-9;
/// Maximum number of times `w1` is halved to restore feasibility.
const MAX_W1_HALVINGS: u32 = 60;

/// Target distribution (strictly positive masses) over one state's atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPolicySpec {
    pub state_id: String,
    pub masses: Vec<f64>,
}

impl TargetPolicySpec {
    pub fn new(state_id: &str, masses: Vec<f64>) -> Self {
        Self {
            state_id: state_id.to_string(),
            masses,
        }
    }
}

/// Knobs for [`build_extension`].
#[derive(Debug, Clone, Copy)]
pub struct BifurcationOptions {
    /// Measure of the re-entry branch (halved automatically if infeasible).
    pub w1: f64,
    /// Lower bound on the trap branch measure.
    pub w2_min: f64,
    /// Required plain-Q margin of re-entry over trap.
    pub margin: f64,
}

impl Default for BifurcationOptions {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2_min: 1.0,
            margin: 0.1,
        }
    }
}

/// Solved parameters for one inserted bifurcating state.
#[derive(Debug, Clone)]
pub struct BifurcationParams {
    /// Id of the inserted state.
    pub state_id: String,
    /// Original state and atom whose transition was rewired through it.
    pub source_state: String,
    pub source_atom: String,
    /// Original successor the re-entry branch returns to.
    pub successor: String,
    pub w1: f64,
    pub w2: f64,
    pub r_loop: f64,
    pub r_trap: f64,
    pub v_target: f64,
    pub q1: f64,
    pub q2: f64,
}

/// Certificate comparing an extension against its original MDP.
#[derive(Debug, Clone)]
pub struct ExtensionReport {
    /// KL(extended Boltzmann policy at the target state || target masses).
    pub kl_at_target: f64,
    /// Max |Q_plain change| over all original (state, atom) pairs.
    pub plain_q_residual: f64,
    /// Max |V_soft change| over all original states.
    pub soft_v_residual: f64,
    /// Min over inserted states of plain-Q(re-entry) - plain-Q(trap);
    /// +inf when the extension inserted no states.
    pub trap_avoidance_margin: f64,
    pub j_plus: Option<f64>,
    pub j_minus: Option<f64>,
    pub j_maxent: Option<f64>,
}

/// Output of [`worst_case_transform`].
#[derive(Debug, Clone)]
pub struct WorstCaseTransform {
    pub extended: Mdp,
    pub params: Vec<BifurcationParams>,
    pub report: ExtensionReport,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BifurcationError {
    UnknownState(String),
    TerminalTarget(String),
    MassesMisaligned { expected: usize, got: usize },
    NonpositiveMass { atom: String, mass: f64 },
    MassesNotNormalized(f64),
    NonDeterministicAtom { state: String, atom: String },
    Infeasible { state: String, atom: String, detail: String },
    IdCollision(String),
    StateMismatch(String),
    InvalidConcentration(f64),
    Solver(SolverError),
}

impl From<SolverError> for BifurcationError {
    fn from(e: SolverError) -> Self {
        BifurcationError::Solver(e)
    }
}

impl fmt::Display for BifurcationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BifurcationError::UnknownState(s) => write!(f, "unknown state `{}`", s),
            BifurcationError::TerminalTarget(s) => {
                write!(f, "target state `{}` is terminal", s)
            }
            BifurcationError::MassesMisaligned { expected, got } => {
                write!(f, "target has {} masses for {} atoms", got, expected)
            }
            BifurcationError::NonpositiveMass { atom, mass } => {
                write!(f, "target mass {} on atom `{}` must be > 0", mass, atom)
            }
            BifurcationError::MassesNotNormalized(s) => {
                write!(f, "target masses sum to {}", s)
            }
            BifurcationError::NonDeterministicAtom { state, atom } => write!(
                f,
                "atom `{}` of state `{}` has no deterministic successor",
                atom, state
            ),
            BifurcationError::Infeasible { state, atom, detail } => write!(
                f,
                "infeasible extension at state `{}` atom `{}`: {}",
                state, atom, detail
            ),
            BifurcationError::IdCollision(s) => {
                write!(f, "generated state id `{}` already exists", s)
            }
            BifurcationError::StateMismatch(m) => write!(f, "state mismatch: {}", m),
            BifurcationError::InvalidConcentration(e) => {
                write!(f, "concentration {} outside (0, 1)", e)
            }
            BifurcationError::Solver(e) => write!(f, "{}", e),
        }
    }
}

/// Q landscape realizing a target policy at soft value `v_s`:
/// `Q_k = alpha * ln(p_k / w_k) + v_s`. Plugging the result back into the
/// log-partition recovers `v_s`, and its Boltzmann policy is the target.
pub fn backward_q(
    target_masses: &[f64],
    weights: &[f64],
    v_s: f64,
    alpha: f64,
) -> Result<Vec<f64>, BifurcationError> {
    if target_masses.len() != weights.len() {
        return Err(BifurcationError::MassesMisaligned {
            expected: weights.len(),
            got: target_masses.len(),
        });
    }
    for (k, &p) in target_masses.iter().enumerate() {
        if !(p.is_finite() && p > 0.0) {
            return Err(BifurcationError::NonpositiveMass {
                atom: format!("#{}", k),
                mass: p,
            });
        }
    }
    Ok(target_masses
        .iter()
        .zip(weights)
        .map(|(&p, &w)| alpha * (p / w).ln() + v_s)
        .collect())
}

/// Trap branch parameters produced by [`forward_solve`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardBranch {
    pub q2: f64,
    pub r_trap: f64,
}

/// Solves the trap branch so the bifurcating state's soft value equals
/// `v_target` given the re-entry branch `(w1, q1)`:
/// `q2 = alpha * ln((exp(v/alpha) - w1 exp(q1/alpha)) / w2)`, computed in
/// log space. The trap terminal's reward follows the terminal timing.
pub fn forward_solve(
    v_target: f64,
    q1: f64,
    alpha: f64,
    gamma: f64,
    w1: f64,
    w2: f64,
    timing: TerminalTiming,
) -> Result<ForwardBranch, BifurcationError> {
    let d = v_target / alpha;
    let b = w1.ln() + q1 / alpha;
    if !(d - b >= FEASIBILITY_EPS) {
        return Err(BifurcationError::Infeasible {
            state: String::new(),
            atom: String::new(),
            detail: format!(
                "exp(v/alpha) must exceed w1*exp(q1/alpha): v/alpha = {}, ln(w1) + q1/alpha = {}",
                d, b
            ),
        });
    }
    // ln(e^d - e^b) = d + ln(1 - e^(b - d))
    let log_excess = d + (-((b - d).exp())).ln_1p();
    let q2 = alpha * (log_excess - w2.ln());
    let r_trap = match timing {
        TerminalTiming::OnEntry => q2,
        TerminalTiming::Discounted => q2 / gamma,
    };
    Ok(ForwardBranch { q2, r_trap })
}

/// Continuation value of stepping into `succ`: the terminal bonus for
/// terminal successors, otherwise `gamma * V(succ)`.
fn continuation(mdp: &Mdp, values: &BTreeMap<String, f64>, succ: &str) -> f64 {
    let spec = &mdp.states[succ];
    if spec.terminal {
        mdp.terminal_bonus(spec.terminal_reward)
    } else {
        mdp.gamma * values[succ]
    }
}

fn check_target(mdp: &Mdp, target: &TargetPolicySpec) -> Result<(), BifurcationError> {
    let spec = mdp
        .state(&target.state_id)
        .ok_or_else(|| BifurcationError::UnknownState(target.state_id.clone()))?;
    if spec.terminal {
        return Err(BifurcationError::TerminalTarget(target.state_id.clone()));
    }
    if target.masses.len() != spec.atoms.len() {
        return Err(BifurcationError::MassesMisaligned {
            expected: spec.atoms.len(),
            got: target.masses.len(),
        });
    }
    for (atom, &p) in spec.atoms.iter().zip(&target.masses) {
        if !(p.is_finite() && p > 0.0) {
            return Err(BifurcationError::NonpositiveMass {
                atom: atom.id.clone(),
                mass: p,
            });
        }
    }
    let sum: f64 = target.masses.iter().sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(BifurcationError::MassesNotNormalized(sum));
    }
    Ok(())
}

/// Builds the extension at `target.state_id`. Each atom of the target state
/// gets its own bifurcating state (two atoms sharing a successor cannot in
/// general share one, since their target densities differ while `r(s,a)` is
/// fixed per atom). Returns the extended MDP plus the solved parameters.
pub fn build_extension(
    mdp: &Mdp,
    target: &TargetPolicySpec,
    opts: &BifurcationOptions,
) -> Result<(Mdp, Vec<BifurcationParams>), BifurcationError> {
    let soft = soft_value_iteration(mdp, mdp.alpha, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let plain = plain_value_iteration(mdp, DEFAULT_TOL, DEFAULT_TIE_TOL)?;
    build_extension_with(mdp, target, opts, &soft, &plain)
}

/// As [`build_extension`] but reusing already-computed solutions of `mdp`.
fn build_extension_with(
    mdp: &Mdp,
    target: &TargetPolicySpec,
    opts: &BifurcationOptions,
    soft: &SoftSolution,
    plain: &PlainSolution,
) -> Result<(Mdp, Vec<BifurcationParams>), BifurcationError> {
    check_target(mdp, target)?;
    let alpha = mdp.alpha;
    let gamma = mdp.gamma;
    let sid = &target.state_id;
    let spec = &mdp.states[sid];
    let v_s = soft.values[sid];

    let weights = spec.weights();
    let q_target = backward_q(&target.masses, &weights, v_s, alpha)?;

    let mut out = mdp.clone();
    let mut params = Vec::with_capacity(spec.atoms.len());
    for (k, atom) in spec.atoms.iter().enumerate() {
        let succ = atom
            .deterministic_successor()
            .ok_or_else(|| BifurcationError::NonDeterministicAtom {
                state: sid.clone(),
                atom: atom.id.clone(),
            })?
            .to_string();

        let v_target = (q_target[k] - atom.reward) / gamma;
        let plain_cont = continuation(mdp, &plain.values, &succ);
        let soft_cont = continuation(mdp, &soft.values, &succ);
        // Re-entry reward making the inserted state's plain value equal the
        // plain continuation the original atom had.
        let r_loop = (1.0 - gamma) / gamma * plain_cont;
        let q1 = r_loop + soft_cont;
        // Plain Q of the re-entry branch; the trap must stay below it.
        let v_plain_eff = r_loop + plain_cont;

        let mut w1 = opts.w1;
        let mut halvings = 0;
        while v_target / alpha - (w1.ln() + q1 / alpha) < FEASIBILITY_EPS {
            if halvings >= MAX_W1_HALVINGS {
                return Err(BifurcationError::Infeasible {
                    state: sid.clone(),
                    atom: atom.id.clone(),
                    detail: format!(
                        "after {} halvings of w1, exp(v_target/alpha) <= w1*exp(q1/alpha) \
                         (v_target = {}, q1 = {})",
                        halvings, v_target, q1
                    ),
                });
            }
            w1 *= 0.5;
            halvings += 1;
        }

        // ln(e^{v/a} - w1 e^{q1/a}), then the trap-measure lower bound that
        // pins q2 <= v_plain_eff - margin.
        let d = v_target / alpha;
        let b = w1.ln() + q1 / alpha;
        let log_excess = d + (-((b - d).exp())).ln_1p();
        let w2_bound = (log_excess - (v_plain_eff - opts.margin) / alpha).exp();
        let w2 = opts.w2_min.max(w2_bound);
        let branch = forward_solve(v_target, q1, alpha, gamma, w1, w2, mdp.terminal_timing)
            .map_err(|e| match e {
                BifurcationError::Infeasible { detail, .. } => BifurcationError::Infeasible {
                    state: sid.clone(),
                    atom: atom.id.clone(),
                    detail,
                },
                other => other,
            })?;

        let mu_id = format!("{}::{}::mu", sid, atom.id);
        let trap_id = format!("{}::{}::muT", sid, atom.id);
        if mdp.states.contains_key(&mu_id) {
            return Err(BifurcationError::IdCollision(mu_id));
        }
        if mdp.states.contains_key(&trap_id) {
            return Err(BifurcationError::IdCollision(trap_id));
        }

        let resume = ActionAtom::new("resume", 0.0, w1, r_loop)
            .with_weight(w1)
            .goes_to(&succ);
        let trap = ActionAtom::new("trap", w1, w1 + w2, 0.0)
            .with_weight(w2)
            .goes_to(&trap_id);
        out = out
            .add_state(&mu_id, StateSpec::with_atoms(alloc::vec![resume, trap]))
            .add_state(&trap_id, StateSpec::terminal(branch.r_trap));
        out.states.get_mut(sid).unwrap().atoms[k] = atom.clone().goes_to(&mu_id);

        params.push(BifurcationParams {
            state_id: mu_id,
            source_state: sid.clone(),
            source_atom: atom.id.clone(),
            successor: succ,
            w1,
            w2,
            r_loop,
            r_trap: branch.r_trap,
            v_target,
            q1,
            q2: branch.q2,
        });
    }
    Ok((out, params))
}

/// Re-solves both MDPs and certifies the extension around `target`.
pub fn verify_extension(
    original: &Mdp,
    extended: &Mdp,
    target: &TargetPolicySpec,
    tol: f64,
) -> Result<ExtensionReport, BifurcationError> {
    verify_targets(original, extended, core::slice::from_ref(target), tol)
}

fn verify_targets(
    original: &Mdp,
    extended: &Mdp,
    targets: &[TargetPolicySpec],
    tol: f64,
) -> Result<ExtensionReport, BifurcationError> {
    for (sid, spec) in &original.states {
        let ext = extended
            .state(sid)
            .ok_or_else(|| BifurcationError::StateMismatch(format!("state `{}` missing", sid)))?;
        if spec.terminal != ext.terminal
            || spec.atoms.len() != ext.atoms.len()
            || spec
                .atoms
                .iter()
                .zip(&ext.atoms)
                .any(|(a, b)| a.id != b.id)
        {
            return Err(BifurcationError::StateMismatch(format!(
                "state `{}` atoms differ between original and extended",
                sid
            )));
        }
    }
    for t in targets {
        check_target(original, t)?;
    }

    let soft_orig = soft_value_iteration(original, original.alpha, tol, DEFAULT_MAX_ITER)?;
    let plain_orig = plain_value_iteration(original, tol, DEFAULT_TIE_TOL)?;
    let soft_ext = soft_value_iteration(extended, extended.alpha, tol, DEFAULT_MAX_ITER)?;
    let plain_ext = plain_value_iteration(extended, tol, DEFAULT_TIE_TOL)?;

    let mut kl_at_target = 0.0_f64;
    for t in targets {
        let masses = soft_ext.policy.masses_at(&t.state_id).unwrap();
        let weights = original.states[&t.state_id].weights();
        kl_at_target = kl_at_target.max(kl_divergence(masses, &t.masses, &weights)?);
    }

    let mut plain_q_residual = 0.0_f64;
    let mut soft_v_residual = 0.0_f64;
    for (sid, spec) in original.non_terminal_states() {
        soft_v_residual =
            soft_v_residual.max((soft_ext.values[sid] - soft_orig.values[sid]).abs());
        for k in 0..spec.atoms.len() {
            plain_q_residual =
                plain_q_residual.max((plain_ext.q[sid][k] - plain_orig.q[sid][k]).abs());
        }
    }

    let mut trap_avoidance_margin = f64::INFINITY;
    for (sid, spec) in extended.non_terminal_states() {
        if original.states.contains_key(sid) {
            continue;
        }
        // Inserted states have exactly two atoms: resume then trap.
        debug_assert_eq!(spec.atoms.len(), 2);
        let q = &plain_ext.q[sid];
        trap_avoidance_margin = trap_avoidance_margin.min(q[0] - q[1]);
    }

    Ok(ExtensionReport {
        kl_at_target,
        plain_q_residual,
        soft_v_residual,
        trap_avoidance_margin,
        j_plus: None,
        j_minus: None,
        j_maxent: None,
    })
}

/// Extends every non-terminal state with mass `eta` on its plain-worst atom
/// (located by min-value iteration) and `(1 - eta)/(n - 1)` elsewhere, then
/// reports the return gap: `j_plus`/`j_minus` are the best/worst returns of
/// the original MDP, and `j_maxent` evaluates the extended MDP's
/// MaxEnt-optimal policy restricted to the original states (re-entering
/// through every bifurcation) on the original MDP, without entropy.
pub fn worst_case_transform(
    mdp: &Mdp,
    eta: f64,
) -> Result<WorstCaseTransform, BifurcationError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(BifurcationError::InvalidConcentration(eta));
    }
    let plain = plain_value_iteration(mdp, DEFAULT_TOL, DEFAULT_TIE_TOL)?;
    let worst = min_value_iteration(mdp, DEFAULT_TOL, DEFAULT_TIE_TOL)?;
    let start_spec = mdp
        .state(&mdp.start_state)
        .ok_or_else(|| BifurcationError::UnknownState(mdp.start_state.clone()))?;
    if start_spec.terminal {
        return Err(BifurcationError::TerminalTarget(mdp.start_state.clone()));
    }
    let j_plus = plain.values[&mdp.start_state];
    let j_minus = worst.values[&mdp.start_state];

    let mut targets = Vec::new();
    for (sid, spec) in mdp.non_terminal_states() {
        let n = spec.atoms.len();
        let worst_atom = worst.greedy[sid][0];
        let masses = if n == 1 {
            alloc::vec![1.0]
        } else {
            let mut m = alloc::vec![(1.0 - eta) / (n - 1) as f64; n];
            m[worst_atom] = eta;
            m
        };
        targets.push(TargetPolicySpec::new(sid, masses));
    }

    let opts = BifurcationOptions::default();
    let mut extended = mdp.clone();
    let mut params = Vec::new();
    for t in &targets {
        // Original-state values are invariant under each extension, so
        // re-solving the running MDP reproduces them for the next target.
        let (next, mut p) = build_extension(&extended, t, &opts)?;
        extended = next;
        params.append(&mut p);
    }

    let mut report = verify_targets(mdp, &extended, &targets, DEFAULT_TOL)?;

    // Restrict the extended soft-optimal policy to the original states and
    // evaluate it (plainly) on the original MDP.
    let soft_ext = soft_value_iteration(&extended, extended.alpha, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let mut masses = BTreeMap::new();
    for (sid, _) in mdp.non_terminal_states() {
        masses.insert(
            sid.clone(),
            soft_ext.policy.masses_at(sid).unwrap().to_vec(),
        );
    }
    let restricted = PiecewisePolicy { masses };
    let eval = policy_evaluation(mdp, &restricted, mdp.alpha, false, DEFAULT_TOL)?;

    report.j_plus = Some(j_plus);
    report.j_minus = Some(j_minus);
    report.j_maxent = Some(eval.j);
    Ok(WorstCaseTransform {
        extended,
        params,
        report,
    })
}
