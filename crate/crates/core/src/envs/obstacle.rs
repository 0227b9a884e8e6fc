//! 2D obstacle navigation: reach the goal behind a vertical wall segment.
//! Progress rewards shape each step; hitting the wall or reaching the goal
//! terminates the episode. A grid discretizer turns the continuous dynamics
//! into an interval-action MDP for the tabular learners.

use alloc::format;
use alloc::vec::Vec;

use crate::envs::EnvError;
use crate::mdp::{ActionAtom, Mdp, StateSpec, TerminalTiming};
use crate::numerics::FloatExt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Running,
    Goal,
    Wall,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle2DState {
    pub position: (f64, f64),
    pub steps: u32,
    pub done: bool,
    pub outcome: Outcome,
}

/// World geometry and episode limits. Defaults: start (0,0), goal (3,0)
/// with radius 0.1, wall at x = 2 spanning y in [-2, 2], positions clamped
/// to [-1, 4] x [-4, 4], actions in [-3, 3]^2, 50 steps per episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle2D {
    pub start: (f64, f64),
    pub goal: (f64, f64),
    pub goal_radius: f64,
    pub wall_x: f64,
    pub wall_y: (f64, f64),
    pub bounds_x: (f64, f64),
    pub bounds_y: (f64, f64),
    pub action_bound: f64,
    pub max_steps: u32,
    pub goal_reward: f64,
    pub wall_penalty: f64,
}

impl Default for Obstacle2D {
    fn default() -> Self {
        Self {
            start: (0.0, 0.0),
            goal: (3.0, 0.0),
            goal_radius: 0.1,
            wall_x: 2.0,
            wall_y: (-2.0, 2.0),
            bounds_x: (-1.0, 4.0),
            bounds_y: (-4.0, 4.0),
            action_bound: 3.0,
            max_steps: 50,
            goal_reward: 500.0,
            wall_penalty: -200.0,
        }
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

impl Obstacle2D {
    pub fn initial_state(&self) -> Obstacle2DState {
        Obstacle2DState {
            position: self.start,
            steps: 0,
            done: false,
            outcome: Outcome::Running,
        }
    }

    /// Closed-segment test: does the move from `p` to `q` touch the wall?
    /// Touching the wall line at |y| inside the span counts as a hit, so
    /// the test is symmetric in `p` and `q`.
    pub fn crosses_wall(&self, p: (f64, f64), q: (f64, f64)) -> bool {
        let dp = p.0 - self.wall_x;
        let dq = q.0 - self.wall_x;
        if dp == 0.0 && dq == 0.0 {
            // Moving along the wall line: overlap of y ranges.
            let (lo, hi) = (p.1.min(q.1), p.1.max(q.1));
            return hi >= self.wall_y.0 && lo <= self.wall_y.1;
        }
        if (dp > 0.0 && dq > 0.0) || (dp < 0.0 && dq < 0.0) {
            return false;
        }
        let t = dp / (dp - dq);
        let y = p.1 + t * (q.1 - p.1);
        (self.wall_y.0..=self.wall_y.1).contains(&y)
    }

    fn clamp(&self, p: (f64, f64)) -> (f64, f64) {
        (
            p.0.max(self.bounds_x.0).min(self.bounds_x.1),
            p.1.max(self.bounds_y.0).min(self.bounds_y.1),
        )
    }

    /// One straight-line move. Wall hits dominate, then goal contact, then
    /// a progress reward equal to the decrease in goal distance. Positions
    /// leaving the world bounds are clamped.
    pub fn step(
        &self,
        state: &Obstacle2DState,
        action: (f64, f64),
    ) -> Result<(Obstacle2DState, f64), EnvError> {
        if state.done {
            return Err(EnvError::EpisodeFinished);
        }
        if action.0.abs() > self.action_bound || action.1.abs() > self.action_bound {
            return Err(EnvError::ActionOutOfBounds {
                x: action.0,
                y: action.1,
                bound: self.action_bound,
            });
        }
        let p = state.position;
        let raw = (p.0 + action.0, p.1 + action.1);
        let steps = state.steps + 1;
        if self.crosses_wall(p, raw) {
            return Ok((
                Obstacle2DState {
                    position: self.clamp(raw),
                    steps,
                    done: true,
                    outcome: Outcome::Wall,
                },
                self.wall_penalty,
            ));
        }
        let q = self.clamp(raw);
        if dist(q, self.goal) <= self.goal_radius {
            return Ok((
                Obstacle2DState {
                    position: q,
                    steps,
                    done: true,
                    outcome: Outcome::Goal,
                },
                self.goal_reward,
            ));
        }
        let reward = dist(p, self.goal) - dist(q, self.goal);
        let timeout = steps >= self.max_steps;
        Ok((
            Obstacle2DState {
                position: q,
                steps,
                done: timeout,
                outcome: if timeout { Outcome::Timeout } else { Outcome::Running },
            },
            reward,
        ))
    }

    /// Tabular MDP over an `grid_n x grid_n` cell grid of the world bounds.
    /// Each cell has one unit-weight atom per action, stepped from the cell
    /// center; wall hits and goal contacts feed two absorbing terminals
    /// (`wall`, `goal`) with the step reward carried on the atom.
    pub fn discretize(&self, grid_n: usize, actions: &[(f64, f64)]) -> Result<Mdp, EnvError> {
        if grid_n < 4 {
            return Err(EnvError::BadGrid(grid_n));
        }
        for &(ax, ay) in actions {
            if ax.abs() > self.action_bound || ay.abs() > self.action_bound {
                return Err(EnvError::ActionOutOfBounds {
                    x: ax,
                    y: ay,
                    bound: self.action_bound,
                });
            }
        }
        let dx = (self.bounds_x.1 - self.bounds_x.0) / grid_n as f64;
        let dy = (self.bounds_y.1 - self.bounds_y.0) / grid_n as f64;
        let cell_id = |i: usize, j: usize| format!("c{:03}_{:03}", i, j);
        let cell_of = |p: (f64, f64)| {
            let i = (((p.0 - self.bounds_x.0) / dx) as isize).clamp(0, grid_n as isize - 1);
            let j = (((p.1 - self.bounds_y.0) / dy) as isize).clamp(0, grid_n as isize - 1);
            (i as usize, j as usize)
        };
        let center = |i: usize, j: usize| {
            (
                self.bounds_x.0 + (i as f64 + 0.5) * dx,
                self.bounds_y.0 + (j as f64 + 0.5) * dy,
            )
        };

        let (si, sj) = cell_of(self.start);
        let mut mdp = Mdp::new(&cell_id(si, sj), 0.99, 1.0, TerminalTiming::OnEntry)
            .add_state("goal", StateSpec::terminal(0.0))
            .add_state("wall", StateSpec::terminal(0.0));
        for i in 0..grid_n {
            for j in 0..grid_n {
                let origin = Obstacle2DState {
                    position: center(i, j),
                    steps: 0,
                    done: false,
                    outcome: Outcome::Running,
                };
                let mut atoms = Vec::with_capacity(actions.len());
                for (k, &a) in actions.iter().enumerate() {
                    let (next, reward) = self.step(&origin, a)?;
                    let target = match next.outcome {
                        Outcome::Goal => "goal".into(),
                        Outcome::Wall => "wall".into(),
                        _ => {
                            let (ni, nj) = cell_of(next.position);
                            cell_id(ni, nj)
                        }
                    };
                    atoms.push(
                        ActionAtom::new(&format!("a{}", k), k as f64, k as f64 + 1.0, reward)
                            .goes_to(&target),
                    );
                }
                mdp = mdp.add_state(&cell_id(i, j), StateSpec::with_atoms(atoms));
            }
        }
        Ok(mdp)
    }
}
