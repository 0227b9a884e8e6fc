//! Tabular sampled-update learners over MDP environments.
//!
//! Every transition updates two tables at once: `q_soft` bootstraps through
//! the log-partition value of the next state (the tabular fixed point of the
//! expectation-plus-entropy target) and `q_plain` through a hard max. The
//! behavior policy reads `q_soft`, `q_plain`, or — in the adaptive mode — a
//! per-state gate that falls back to `q_plain` whenever the two Q vectors at
//! the state disagree by cosine similarity.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mdp::Mdp;
use crate::numerics::next_f64;
use crate::solvers::{boltzmann_policy, soft_state_value, SolverError};

#[derive(Debug, Clone, PartialEq)]
pub enum LearnerError {
    LengthMismatch { left: usize, right: usize },
    InvalidConfig(String),
    Diverged { state: String, atom: usize, episode: usize },
    Solver(SolverError),
}

impl From<SolverError> for LearnerError {
    fn from(e: SolverError) -> Self {
        LearnerError::Solver(e)
    }
}

impl fmt::Display for LearnerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerError::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {} vs {}", left, right)
            }
            LearnerError::InvalidConfig(m) => write!(f, "invalid config: {}", m),
            LearnerError::Diverged { state, atom, episode } => write!(
                f,
                "non-finite table entry at state `{}` atom {} (episode {})",
                state, atom, episode
            ),
            LearnerError::Solver(e) => write!(f, "{}", e),
        }
    }
}

/// Cosine similarity in [-1, 1]. Vectors with norm below 1e-12 are treated
/// as agreeing (uninitialized states should stay on the exploratory path).
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, LearnerError> {
    if u.len() != v.len() || u.is_empty() {
        return Err(LearnerError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>();
    let (nu, nv) = (sqrt(nu), sqrt(nv));
    if nu < 1e-12 || nv < 1e-12 {
        return Ok(1.0);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behavior {
    /// Sample from the Boltzmann masses of the active table.
    Boltzmann,
    /// Greedy on the active table, uniform over atoms with the given rate.
    EpsilonGreedy(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// `lr / (1 + visits)` per (state, atom) pair; `lr` scales the schedule.
    InverseVisits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Soft,
    Plain,
    AdaEnt,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Soft => write!(f, "soft"),
            Mode::Plain => write!(f, "plain"),
            Mode::AdaEnt => write!(f, "adaent"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub lr: f64,
    pub episodes: usize,
    pub max_steps: usize,
    /// Gate threshold: the soft table drives behavior while
    /// `cos(q_soft(s), q_plain(s)) > epsilon_gate`.
    pub epsilon_gate: f64,
    pub behavior: Behavior,
    pub seed: u64,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub lr_schedule: LrSchedule,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lr: 0.2,
            episodes: 10_000,
            max_steps: 100,
            epsilon_gate: 0.95,
            behavior: Behavior::Boltzmann,
            seed: 0,
            eval_every: 1_000,
            eval_episodes: 20,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

/// Soft and plain Q tables plus visit counts, indexed like the environment's
/// states (see [`MdpEnv::state_ids`]); rows are atom-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct DualQTables {
    pub q_soft: Vec<Vec<f64>>,
    pub q_plain: Vec<Vec<f64>>,
    pub visits: Vec<Vec<u64>>,
}

impl DualQTables {
    fn zeros(env: &MdpEnv) -> Self {
        let shape = |_: ()| -> Vec<Vec<f64>> {
            env.atoms
                .iter()
                .map(|a| alloc::vec![0.0; a.len()])
                .collect()
        };
        Self {
            q_soft: shape(()),
            q_plain: shape(()),
            visits: env
                .atoms
                .iter()
                .map(|a| alloc::vec![0u64; a.len()])
                .collect(),
        }
    }

    pub fn max_abs_q(&self) -> f64 {
        let scan = |t: &Vec<Vec<f64>>| {
            t.iter()
                .flat_map(|row| row.iter())
                .fold(0.0_f64, |m, &q| m.max(q.abs()))
        };
        scan(&self.q_soft).max(scan(&self.q_plain))
    }
}

/// Table used for action selection at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    GreedySoft,
    GreedyPlain,
    /// Per-state gate: soft table while the two Q vectors agree
    /// (cosine similarity above the threshold), plain otherwise.
    Gated { epsilon_gate: f64 },
}

/// One logged evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub episode: usize,
    pub mode: Mode,
    pub eval_return: f64,
    /// Fraction of behavior decisions since the previous row that read the
    /// soft table.
    pub gate_soft_fraction: f64,
    pub max_abs_q: f64,
}

pub type TrainingLog = Vec<LogRow>;

/// Rollout statistics; `stderr` is the sample standard error (0 for a
/// single episode).
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStats {
    pub mean: f64,
    pub stderr: f64,
    pub episodes: usize,
    /// How many episodes ended in each terminal state.
    pub terminal_visits: BTreeMap<String, usize>,
}

struct EnvAtom {
    reward: f64,
    /// (successor index, cumulative probability); reward bonus and terminal
    /// flags live on the successor entry.
    transitions: Vec<(usize, f64)>,
}

/// Sampling view of an MDP: indexed states, cumulative transition rows, and
/// step rewards that already include the terminal bonus of the successor.
pub struct MdpEnv {
    ids: Vec<String>,
    terminal: Vec<bool>,
    bonus: Vec<f64>,
    atoms: Vec<Vec<EnvAtom>>,
    weights: Vec<Vec<f64>>,
    start: usize,
    gamma: f64,
}

impl MdpEnv {
    pub fn new(mdp: &Mdp) -> Result<Self, LearnerError> {
        let report = mdp.validate();
        if !report.is_valid() {
            return Err(LearnerError::InvalidConfig(report.to_string()));
        }
        let ids: Vec<String> = mdp.states.keys().cloned().collect();
        let index: BTreeMap<String, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let mut terminal = Vec::new();
        let mut bonus = Vec::new();
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for id in &ids {
            let spec = &mdp.states[id];
            terminal.push(spec.terminal);
            bonus.push(if spec.terminal {
                mdp.terminal_bonus(spec.terminal_reward)
            } else {
                0.0
            });
            let mut row = Vec::with_capacity(spec.atoms.len());
            for atom in &spec.atoms {
                let mut cumulative = 0.0;
                let mut transitions = Vec::with_capacity(atom.transitions.len());
                for (target, &p) in &atom.transitions {
                    if p <= 0.0 {
                        continue;
                    }
                    cumulative += p;
                    transitions.push((index[target], cumulative));
                }
                row.push(EnvAtom {
                    reward: atom.reward,
                    transitions,
                });
            }
            weights.push(spec.atoms.iter().map(|a| a.weight).collect());
            atoms.push(row);
        }
        Ok(Self {
            ids,
            terminal,
            bonus,
            atoms,
            weights,
            start: index[&mdp.start_state],
            gamma: mdp.gamma,
        })
    }

    pub fn state_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    pub fn start_state(&self) -> usize {
        self.start
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn atom_weights(&self, state: usize) -> &[f64] {
        &self.weights[state]
    }

    /// Samples a transition. The reward includes the successor's terminal
    /// bonus, so discounted rollout sums match the solvers' Q convention.
    pub fn step(
        &self,
        state: usize,
        atom: usize,
        rng: &mut ChaCha8Rng,
    ) -> (f64, usize, bool) {
        let a = &self.atoms[state][atom];
        let u = next_f64(rng);
        let mut next = a.transitions.last().map(|&(t, _)| t).unwrap_or(state);
        for &(t, cum) in &a.transitions {
            if u < cum {
                next = t;
                break;
            }
        }
        let done = self.terminal[next];
        (a.reward + self.bonus[next], next, done)
    }
}

fn greedy_atom(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &q) in row.iter().enumerate() {
        if q > row[best] {
            best = k;
        }
    }
    best
}

/// True when the gate keeps the soft table active at this state.
fn gate_is_soft(tables: &DualQTables, state: usize, epsilon_gate: f64) -> bool {
    let sim = cosine_similarity(&tables.q_soft[state], &tables.q_plain[state])
        .unwrap_or(1.0);
    sim > epsilon_gate
}

fn active_is_soft(mode: Mode, tables: &DualQTables, state: usize, epsilon_gate: f64) -> bool {
    match mode {
        Mode::Soft => true,
        Mode::Plain => false,
        Mode::AdaEnt => gate_is_soft(tables, state, epsilon_gate),
    }
}

fn behave(
    env: &MdpEnv,
    tables: &DualQTables,
    state: usize,
    soft: bool,
    config: &LearnerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<usize, LearnerError> {
    let row = if soft {
        &tables.q_soft[state]
    } else {
        &tables.q_plain[state]
    };
    match config.behavior {
        Behavior::Boltzmann => {
            let pairs: Vec<(f64, f64)> = env.atom_weights(state)
                .iter()
                .zip(row)
                .map(|(&w, &q)| (w, q))
                .collect();
            let masses = boltzmann_policy(&pairs, config.alpha)?;
            let u = next_f64(rng);
            let mut acc = 0.0;
            for (k, &p) in masses.iter().enumerate() {
                acc += p;
                if u < acc {
                    return Ok(k);
                }
            }
            Ok(masses.len() - 1)
        }
        Behavior::EpsilonGreedy(eps) => {
            if next_f64(rng) < eps {
                Ok((next_f64(rng) * row.len() as f64) as usize % row.len())
            } else {
                Ok(greedy_atom(row))
            }
        }
    }
}

/// Trains both tables on sampled transitions. Behavior follows `mode`; the
/// training log records an evaluation every `eval_every` episodes (and at
/// the end) using the mode's own selection rule. Identical
/// `(config, mode)` runs produce bit-identical logs.
pub fn q_learning(
    env: &MdpEnv,
    config: &LearnerConfig,
    mode: Mode,
) -> Result<(DualQTables, TrainingLog), LearnerError> {
    if !(config.lr > 0.0 && config.lr <= 1.0) {
        return Err(LearnerError::InvalidConfig(format_lr(config.lr)));
    }
    if config.episodes == 0 {
        return Err(LearnerError::InvalidConfig("episodes must be >= 1".into()));
    }
    let mut tables = DualQTables::zeros(env);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = TrainingLog::new();
    let mut soft_decisions = 0u64;
    let mut decisions = 0u64;

    for episode in 0..config.episodes {
        let mut state = env.start_state();
        for _ in 0..config.max_steps {
            if env.is_terminal(state) {
                break;
            }
            let soft_active = active_is_soft(mode, &tables, state, config.epsilon_gate);
            decisions += 1;
            soft_decisions += soft_active as u64;
            let atom = behave(env, &tables, state, soft_active, config, &mut rng)?;
            let (reward, next, done) = env.step(state, atom, &mut rng);

            let visits = tables.visits[state][atom];
            let lr = match config.lr_schedule {
                LrSchedule::Constant => config.lr,
                LrSchedule::InverseVisits => config.lr / (1.0 + visits as f64),
            };
            let (soft_next, plain_next) = if done {
                (0.0, 0.0)
            } else {
                let pairs: Vec<(f64, f64)> = env.atom_weights(next)
                    .iter()
                    .zip(&tables.q_soft[next])
                    .map(|(&w, &q)| (w, q))
                    .collect();
                let v_soft = soft_state_value(&pairs, config.alpha)?;
                let v_plain = tables.q_plain[next]
                    .iter()
                    .fold(f64::NEG_INFINITY, |m, &q| m.max(q));
                (v_soft, v_plain)
            };
            let target_soft = reward + env.gamma() * soft_next;
            let target_plain = reward + env.gamma() * plain_next;
            tables.q_soft[state][atom] += lr * (target_soft - tables.q_soft[state][atom]);
            tables.q_plain[state][atom] += lr * (target_plain - tables.q_plain[state][atom]);
            tables.visits[state][atom] = visits + 1;
            if !(tables.q_soft[state][atom].is_finite()
                && tables.q_plain[state][atom].is_finite())
            {
                return Err(LearnerError::Diverged {
                    state: env.state_ids()[state].clone(),
                    atom,
                    episode,
                });
            }
            state = next;
            if done {
                break;
            }
        }

        let last = episode + 1 == config.episodes;
        if (episode + 1) % config.eval_every.max(1) == 0 || last {
            let selection = match mode {
                Mode::Soft => Selection::GreedySoft,
                Mode::Plain => Selection::GreedyPlain,
                Mode::AdaEnt => Selection::Gated {
                    epsilon_gate: config.epsilon_gate,
                },
            };
            let stats = evaluate_rollouts(
                env,
                &tables,
                selection,
                config.eval_episodes,
                config.max_steps,
                config.seed ^ 0x9e37_79b9_7f4a_7c15 ^ (episode as u64) << 1,
            );
            log.push(LogRow {
                episode: episode + 1,
                mode,
                eval_return: stats.mean,
                gate_soft_fraction: if decisions == 0 {
                    0.0
                } else {
                    soft_decisions as f64 / decisions as f64
                },
                max_abs_q: tables.max_abs_q(),
            });
            soft_decisions = 0;
            decisions = 0;
            if last {
                break;
            }
        }
    }
    Ok((tables, log))
}

fn format_lr(lr: f64) -> String {
    let mut s = String::from("learning rate ");
    s.push_str(&alloc::format!("{}", lr));
    s.push_str(" outside (0, 1]");
    s
}

/// Discounted-return rollouts under a greedy/gated selection rule; ties
/// break toward the lowest atom index. Deterministic for a fixed seed.
pub fn evaluate_rollouts(
    env: &MdpEnv,
    tables: &DualQTables,
    selection: Selection,
    n_episodes: usize,
    max_steps: usize,
    seed: u64,
) -> RolloutStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(n_episodes);
    let mut terminal_visits: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..n_episodes {
        let mut state = env.start_state();
        let mut discount = 1.0;
        let mut total = 0.0;
        for _ in 0..max_steps {
            if env.is_terminal(state) {
                break;
            }
            let soft = match selection {
                Selection::GreedySoft => true,
                Selection::GreedyPlain => false,
                Selection::Gated { epsilon_gate } => gate_is_soft(tables, state, epsilon_gate),
            };
            let row = if soft {
                &tables.q_soft[state]
            } else {
                &tables.q_plain[state]
            };
            let atom = greedy_atom(row);
            let (reward, next, done) = env.step(state, atom, &mut rng);
            total += discount * reward;
            discount *= env.gamma();
            state = next;
            if done {
                *terminal_visits
                    .entry(env.state_ids()[state].clone())
                    .or_insert(0) += 1;
                break;
            }
        }
        returns.push(total);
    }
    let n = returns.len().max(1);
    let mean = returns.iter().sum::<f64>() / n as f64;
    let stderr = if returns.len() < 2 {
        0.0
    } else {
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
            / (returns.len() - 1) as f64;
        sqrt(var / returns.len() as f64)
    };
    RolloutStats {
        mean,
        stderr,
        episodes: returns.len(),
        terminal_visits,
    }
}
