//! Interval-action MDP data model.
//!
//! States carry a finite set of *action atoms*: disjoint intervals of the
//! action space over which reward and transition kernel are constant. Each
//! atom has a Lebesgue weight `|I|`, so discrete actions (weight 1) and
//! continuous intervals (weight = length) share one math path; the partition
//! function at a state is `Z = sum_k w_k exp(Q_k / alpha)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

/// Probability mass tolerance for transition rows.
pub const TRANSITION_SUM_TOL: f64 = 1e-12;
/// Mass tolerance for per-state policy vectors.
pub const POLICY_SUM_TOL: f64 = 1e-10;

/// How a terminal successor's reward enters the backup of `Q(s, a)`.
///
/// `OnEntry` adds `P * r_T` undiscounted; `Discounted` adds `gamma * P * r_T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalTiming {
    OnEntry,
    Discounted,
}

/// One interval of the action space: constant reward, constant next-state
/// distribution, and a Lebesgue weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionAtom {
    pub id: String,
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
    pub reward: f64,
    pub transitions: BTreeMap<String, f64>,
}

impl ActionAtom {
    /// Atom over `[lo, hi]` with the weight defaulted to `hi - lo`.
    pub fn new(id: &str, lo: f64, hi: f64, reward: f64) -> Self {
        Self {
            id: id.to_string(),
            lo,
            hi,
            weight: hi - lo,
            reward,
            transitions: BTreeMap::new(),
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Deterministic successor: replaces the transition row with `{state: 1}`.
    pub fn goes_to(mut self, state: &str) -> Self {
        self.transitions.clear();
        self.transitions.insert(state.to_string(), 1.0);
        self
    }

    pub fn with_transition(mut self, state: &str, prob: f64) -> Self {
        self.transitions.insert(state.to_string(), prob);
        self
    }

    /// The single successor if this atom is deterministic.
    pub fn deterministic_successor(&self) -> Option<&str> {
        if self.transitions.len() == 1 {
            let (id, &p) = self.transitions.iter().next().unwrap();
            if (p - 1.0).abs() <= TRANSITION_SUM_TOL {
                return Some(id);
            }
        }
        None
    }
}

/// A state: either terminal (reward on entry, no atoms) or a non-empty
/// ordered list of atoms. Atom order is the canonical order for every
/// aligned vector (policies, Q-vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpec {
    pub terminal: bool,
    pub terminal_reward: f64,
    pub atoms: Vec<ActionAtom>,
}

impl StateSpec {
    pub fn terminal(reward: f64) -> Self {
        Self {
            terminal: true,
            terminal_reward: reward,
            atoms: Vec::new(),
        }
    }

    pub fn with_atoms(atoms: Vec<ActionAtom>) -> Self {
        Self {
            terminal: false,
            terminal_reward: 0.0,
            atoms,
        }
    }

    pub fn atom_index(&self, atom_id: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a.id == atom_id)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }
}

/// Discrete-state MDP over weighted action atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    pub states: BTreeMap<String, StateSpec>,
    pub start_state: String,
    pub gamma: f64,
    /// Default entropy temperature; solvers take an explicit override.
    pub alpha: f64,
    pub terminal_timing: TerminalTiming,
}

impl Mdp {
    pub fn new(start_state: &str, gamma: f64, alpha: f64, timing: TerminalTiming) -> Self {
        Self {
            states: BTreeMap::new(),
            start_state: start_state.to_string(),
            gamma,
            alpha,
            terminal_timing: timing,
        }
    }

    pub fn add_state(mut self, id: &str, spec: StateSpec) -> Self {
        self.states.insert(id.to_string(), spec);
        self
    }

    pub fn state(&self, id: &str) -> Option<&StateSpec> {
        self.states.get(id)
    }

    /// Non-terminal states in canonical (id) order.
    pub fn non_terminal_states(&self) -> impl Iterator<Item = (&String, &StateSpec)> {
        self.states.iter().filter(|(_, s)| !s.terminal)
    }

    /// Contribution of entering a terminal with the given reward, per the
    /// MDP's terminal timing.
    pub fn terminal_bonus(&self, terminal_reward: f64) -> f64 {
        match self.terminal_timing {
            TerminalTiming::OnEntry => terminal_reward,
            TerminalTiming::Discounted => self.gamma * terminal_reward,
        }
    }

    /// Checks every structural invariant and reports all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        if !(self.gamma.is_finite() && (0.0..1.0).contains(&self.gamma)) {
            v.push(Violation::global(format!(
                "gamma {} outside [0, 1)",
                self.gamma
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            v.push(Violation::global(format!("nonpositive alpha {}", self.alpha)));
        }
        if !self.states.contains_key(&self.start_state) {
            v.push(Violation::global(format!(
                "start state `{}` not defined",
                self.start_state
            )));
        }
        for (sid, spec) in &self.states {
            self.validate_state(sid, spec, &mut v);
        }
        ValidationReport(v)
    }

    fn validate_state(&self, sid: &str, spec: &StateSpec, v: &mut Vec<Violation>) {
        if spec.terminal {
            if !spec.atoms.is_empty() {
                v.push(Violation::state(sid, "terminal state has atoms"));
            }
            if !spec.terminal_reward.is_finite() {
                v.push(Violation::state(sid, "non-finite terminal reward"));
            }
            return;
        }
        if spec.atoms.is_empty() {
            v.push(Violation::state(sid, "non-terminal state has no atoms"));
            return;
        }
        for (k, atom) in spec.atoms.iter().enumerate() {
            if spec.atoms[..k].iter().any(|other| other.id == atom.id) {
                v.push(Violation::atom(sid, &atom.id, "duplicate atom id"));
            }
            self.validate_atom(sid, atom, v);
        }
        // Positive-measure overlap between atoms is forbidden; shared
        // endpoints (zero-dimensional contact) are fine.
        let mut order: Vec<usize> = (0..spec.atoms.len()).collect();
        order.sort_by(|&a, &b| spec.atoms[a].lo.total_cmp(&spec.atoms[b].lo));
        for pair in order.windows(2) {
            let (a, b) = (&spec.atoms[pair[0]], &spec.atoms[pair[1]]);
            if b.lo < a.hi {
                v.push(Violation::atom(
                    sid,
                    &b.id,
                    format!("overlaps atom `{}`", a.id),
                ));
            }
        }
    }

    fn validate_atom(&self, sid: &str, atom: &ActionAtom, v: &mut Vec<Violation>) {
        if !(atom.lo.is_finite() && atom.hi.is_finite() && atom.hi > atom.lo) {
            v.push(Violation::atom(
                sid,
                &atom.id,
                format!("degenerate interval [{}, {}]", atom.lo, atom.hi),
            ));
        }
        if !(atom.weight.is_finite() && atom.weight > 0.0) {
            v.push(Violation::atom(sid, &atom.id, "nonpositive weight"));
        }
        if !atom.reward.is_finite() {
            v.push(Violation::atom(sid, &atom.id, "non-finite reward"));
        }
        if atom.transitions.is_empty() {
            v.push(Violation::atom(sid, &atom.id, "no transitions"));
            return;
        }
        let mut sum = 0.0;
        for (target, &p) in &atom.transitions {
            if !(p.is_finite() && p >= 0.0) {
                v.push(Violation::atom(
                    sid,
                    &atom.id,
                    format!("negative probability {} for target `{}`", p, target),
                ));
            }
            if !self.states.contains_key(target) {
                v.push(Violation::atom(
                    sid,
                    &atom.id,
                    format!("unknown transition target `{}`", target),
                ));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > TRANSITION_SUM_TOL {
            v.push(Violation::atom(
                sid,
                &atom.id,
                format!("probabilities sum to {}", sum),
            ));
        }
    }

    /// Splits an atom into `parts` equal-width atoms of weight `weight/parts`
    /// each, preserving reward and transitions. Returns a new MDP.
    pub fn refine_atom(
        &self,
        state_id: &str,
        atom_id: &str,
        parts: usize,
    ) -> Result<Mdp, MdpError> {
        if parts < 2 {
            return Err(MdpError::TooFewParts(parts));
        }
        let spec = self
            .states
            .get(state_id)
            .ok_or_else(|| MdpError::UnknownState(state_id.to_string()))?;
        let k = spec.atom_index(atom_id).ok_or_else(|| MdpError::UnknownAtom {
            state: state_id.to_string(),
            atom: atom_id.to_string(),
        })?;
        let mut out = self.clone();
        let spec = out.states.get_mut(state_id).unwrap();
        let atom = spec.atoms.remove(k);
        let step = (atom.hi - atom.lo) / parts as f64;
        let part_weight = atom.weight / parts as f64;
        for i in 0..parts {
            let lo = atom.lo + i as f64 * step;
            let hi = if i + 1 == parts {
                atom.hi
            } else {
                atom.lo + (i + 1) as f64 * step
            };
            let piece = ActionAtom {
                id: format!("{}#{}", atom.id, i),
                lo,
                hi,
                weight: part_weight,
                reward: atom.reward,
                transitions: atom.transitions.clone(),
            };
            spec.atoms.insert(k + i, piece);
        }
        Ok(out)
    }
}

/// Per-state masses over atoms, aligned with each state's atom order.
/// The density over atom `k` is `mass_k / weight_k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PiecewisePolicy {
    pub masses: BTreeMap<String, Vec<f64>>,
}

impl PiecewisePolicy {
    /// Uniform density: mass proportional to atom weight.
    pub fn uniform_density(mdp: &Mdp) -> Self {
        let mut masses = BTreeMap::new();
        for (sid, spec) in mdp.non_terminal_states() {
            let total: f64 = spec.atoms.iter().map(|a| a.weight).sum();
            masses.insert(
                sid.clone(),
                spec.atoms.iter().map(|a| a.weight / total).collect(),
            );
        }
        Self { masses }
    }

    /// All mass on one atom per state; `choices` maps state id to atom index.
    /// States absent from `choices` put all mass on atom 0.
    pub fn deterministic(mdp: &Mdp, choices: &BTreeMap<String, usize>) -> Self {
        let mut masses = BTreeMap::new();
        for (sid, spec) in mdp.non_terminal_states() {
            let pick = choices.get(sid).copied().unwrap_or(0);
            let mut row = alloc::vec![0.0; spec.atoms.len()];
            row[pick] = 1.0;
            masses.insert(sid.clone(), row);
        }
        Self { masses }
    }

    pub fn masses_at(&self, state_id: &str) -> Option<&[f64]> {
        self.masses.get(state_id).map(|m| m.as_slice())
    }

    /// Alignment and simplex checks against an MDP.
    pub fn check_against(&self, mdp: &Mdp) -> Result<(), MdpError> {
        for (sid, spec) in mdp.non_terminal_states() {
            let row = self
                .masses
                .get(sid)
                .ok_or_else(|| MdpError::PolicyMisaligned(format!("state `{}` missing", sid)))?;
            if row.len() != spec.atoms.len() {
                return Err(MdpError::PolicyMisaligned(format!(
                    "state `{}` has {} atoms but policy has {} masses",
                    sid,
                    spec.atoms.len(),
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for (&p, atom) in row.iter().zip(&spec.atoms) {
                if !(p.is_finite() && p >= 0.0) {
                    return Err(MdpError::PolicyMisaligned(format!(
                        "state `{}` atom `{}` has invalid mass {}",
                        sid, atom.id, p
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > POLICY_SUM_TOL {
                return Err(MdpError::PolicyMisaligned(format!(
                    "state `{}` masses sum to {}",
                    sid, sum
                )));
            }
        }
        Ok(())
    }
}

/// A single violated invariant, tagged with the state/atom it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub state: Option<String>,
    pub atom: Option<String>,
    pub message: String,
}

impl Violation {
    fn global(message: String) -> Self {
        Self {
            state: None,
            atom: None,
            message,
        }
    }
    fn state(state: &str, message: impl Into<String>) -> Self {
        Self {
            state: Some(state.to_string()),
            atom: None,
            message: message.into(),
        }
    }
    fn atom(state: &str, atom: &str, message: impl Into<String>) -> Self {
        Self {
            state: Some(state.to_string()),
            atom: Some(atom.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.state, &self.atom) {
            (Some(s), Some(a)) => write!(f, "state `{}` atom `{}`: {}", s, a, self.message),
            (Some(s), None) => write!(f, "state `{}`: {}", s, self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

/// Every violation found by [`Mdp::validate`]. Empty means valid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport(pub Vec<Violation>);

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.0.is_empty()
    }
    pub fn violations(&self) -> &[Violation] {
        &self.0
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}", v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MdpError {
    UnknownState(String),
    UnknownAtom { state: String, atom: String },
    TooFewParts(usize),
    PolicyMisaligned(String),
}

impl fmt::Display for MdpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdpError::UnknownState(s) => write!(f, "unknown state `{}`", s),
            MdpError::UnknownAtom { state, atom } => {
                write!(f, "unknown atom `{}` in state `{}`", atom, state)
            }
            MdpError::TooFewParts(n) => write!(f, "refinement needs parts >= 2, got {}", n),
            MdpError::PolicyMisaligned(m) => write!(f, "policy misaligned: {}", m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::build_toy;

    #[test]
    fn toy_is_valid() {
        assert!(build_toy().validate().is_valid());
    }

    #[test]
    fn negative_weight_is_reported() {
        let mut toy = build_toy();
        toy.states.get_mut("s_b").unwrap().atoms[0].weight = -1.0;
        let report = toy.validate();
        assert_eq!(report.violations().len(), 1);
        assert!(report.violations()[0].message.contains("nonpositive weight"));
        assert_eq!(report.violations()[0].atom.as_deref(), Some("all"));
    }

    #[test]
    fn bad_probability_sum_is_reported() {
        let mut toy = build_toy();
        let atom = &mut toy.states.get_mut("s_0").unwrap().atoms[0];
        atom.transitions.clear();
        atom.transitions.insert("s_g".into(), 0.5);
        atom.transitions.insert("s_b".into(), 0.4);
        let report = toy.validate();
        assert_eq!(report.violations().len(), 1);
        assert!(report.violations()[0].message.contains("sum to 0.9"));
    }

    #[test]
    fn unknown_target_and_overlap_are_reported() {
        let mut toy = build_toy();
        toy.states.get_mut("s_0").unwrap().atoms[0]
            .transitions
            .insert("s_x".into(), 0.0);
        toy.states.get_mut("s_g").unwrap().atoms[1].hi = 0.0; // left now overlaps mid
        let report = toy.validate();
        let messages: Vec<_> = report.violations().iter().map(|v| v.message.clone()).collect();
        assert!(messages
            .iter()
            .any(|m| m.contains("unknown transition target `s_x`")));
        assert!(messages.iter().any(|m| m.contains("overlaps")));
    }

    #[test]
    fn terminal_atom_rules() {
        let mdp = Mdp::new("a", 0.9, 1.0, TerminalTiming::OnEntry)
            .add_state("a", StateSpec::with_atoms(alloc::vec![]))
            .add_state(
                "t",
                StateSpec {
                    terminal: true,
                    terminal_reward: 0.0,
                    atoms: alloc::vec![ActionAtom::new("x", 0.0, 1.0, 0.0).goes_to("t")],
                },
            );
        let report = mdp.validate();
        assert!(report
            .violations()
            .iter()
            .any(|v| v.message.contains("no atoms")));
        assert!(report
            .violations()
            .iter()
            .any(|v| v.message.contains("terminal state has atoms")));
    }

    #[test]
    fn refine_preserves_weight_and_geometry() {
        let toy = build_toy();
        let refined = toy.refine_atom("s_b", "all", 2).unwrap();
        let atoms = &refined.states["s_b"].atoms;
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0].weight, 1.0);
        assert_eq!(atoms[1].weight, 1.0);
        assert_eq!(atoms[0].lo, -1.0);
        assert_eq!(atoms[0].hi, 0.0);
        assert_eq!(atoms[1].hi, 1.0);
        assert_eq!(atoms[0].reward, atoms[1].reward);
        assert_eq!(atoms[0].transitions, atoms[1].transitions);
        assert!(refined.validate().is_valid());

        assert!(matches!(
            toy.refine_atom("s_b", "all", 1),
            Err(MdpError::TooFewParts(1))
        ));
        assert!(matches!(
            toy.refine_atom("nope", "all", 2),
            Err(MdpError::UnknownState(_))
        ));
        assert!(matches!(
            toy.refine_atom("s_b", "nope", 2),
            Err(MdpError::UnknownAtom { .. })
        ));
    }
}
