//! ATOM executions: atomic look-compute-move rounds with one Byzantine robot.

use serde::{Deserialize, Serialize};

use crate::algorithms::absolute_move;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::model::{Configuration, LocalState, RobotAlgorithm};

/// Activation sets per round plus the Byzantine robot's realized positions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub rounds: Vec<Vec<usize>>,
    pub byzantine_moves: Vec<Option<Point>>,
}

impl Schedule {
    /// Centralized schedule activating only correct robots.
    pub fn centralized(order: &[usize]) -> Schedule {
        Schedule {
            rounds: order.iter().map(|&i| vec![i]).collect(),
            byzantine_moves: vec![None; order.len()],
        }
    }

    pub fn push(&mut self, activated: Vec<usize>, byz: Option<Point>) {
        self.rounds.push(activated);
        self.byzantine_moves.push(byz);
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Every round activates exactly one robot.
    pub fn is_centralized(&self) -> bool {
        self.rounds.iter().all(|r| r.len() == 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub n: usize,
    pub configs: Vec<Configuration>,
    pub schedule: Schedule,
}

/// One ATOM round: every activated correct robot observes `c` and moves;
/// the Byzantine robot, if activated, is placed at `byz_pos`.
pub fn step(
    c: &Configuration,
    activated: &[usize],
    byz_pos: Option<&Point>,
    alg: &dyn RobotAlgorithm,
) -> Result<Configuration> {
    let n = c.n();
    let mut next = c.clone();
    for &i in activated {
        if i > n {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: c.len(),
            });
        }
        if i == n {
            let b = byz_pos.ok_or(Error::MissingByzantinePosition)?;
            next.set(n, LocalState::at(b.clone()))?;
        } else {
            let (location, state) = absolute_move(alg, c, i)?;
            next.set(i, LocalState { state, location })?;
        }
    }
    Ok(next)
}

/// Outcome of [`check_step`]; `diagnostic` names the first mismatch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCheck {
    pub ok: bool,
    pub diagnostic: Option<String>,
}

impl StepCheck {
    fn pass() -> Self {
        StepCheck {
            ok: true,
            diagnostic: None,
        }
    }

    fn fail(msg: String) -> Self {
        StepCheck {
            ok: false,
            diagnostic: Some(msg),
        }
    }
}

/// Decides `c ->x next`: robot `x` observes `c` and moves, then the
/// Byzantine robot jumps to `next[n]`. Entries other than `x` and `n` must
/// be unchanged.
pub fn check_step(
    c: &Configuration,
    next: &Configuration,
    x: usize,
    alg: &dyn RobotAlgorithm,
) -> StepCheck {
    let n = c.n();
    if next.len() != c.len() {
        return StepCheck::fail(format!("size mismatch: {} vs {}", c.len(), next.len()));
    }
    if x >= n {
        return StepCheck::fail(format!("robot {x} is not a correct robot"));
    }
    let (location, state) = match absolute_move(alg, c, x) {
        Ok(m) => m,
        Err(e) => return StepCheck::fail(e.to_string()),
    };
    for i in 0..n {
        let want = if i == x {
            LocalState {
                state: state.clone(),
                location: location.clone(),
            }
        } else {
            c.robots()[i].clone()
        };
        let got = &next.robots()[i];
        if got.location != want.location {
            return StepCheck::fail(format!(
                "entry {i}: location {} expected {}",
                got.location, want.location
            ));
        }
        if got.state != want.state {
            return StepCheck::fail(format!("entry {i}: internal state differs"));
        }
    }
    StepCheck::pass()
}

pub fn run(
    alg: &dyn RobotAlgorithm,
    c0: &Configuration,
    schedule: &Schedule,
) -> Result<ExecutionTrace> {
    if schedule.byzantine_moves.len() != schedule.rounds.len() {
        return Err(Error::Config(
            "schedule needs one Byzantine entry per round".into(),
        ));
    }
    let mut configs = Vec::with_capacity(schedule.len() + 1);
    configs.push(c0.clone());
    for (round, byz) in schedule.rounds.iter().zip(&schedule.byzantine_moves) {
        let last = configs.last().expect("starts non-empty");
        let next = step(last, round, byz.as_ref(), alg)?;
        configs.push(next);
    }
    Ok(ExecutionTrace {
        n: c0.n(),
        configs,
        schedule: schedule.clone(),
    })
}

/// Rounds in which the Byzantine robot `byz` changed position. The first
/// Byzantine activation always counts.
fn effective_activations(schedule: &Schedule, byz: usize) -> Vec<Vec<usize>> {
    let mut last: Option<&Point> = None;
    schedule
        .rounds
        .iter()
        .zip(&schedule.byzantine_moves)
        .map(|(round, mv)| {
            round
                .iter()
                .copied()
                .filter(|&i| {
                    if i != byz {
                        return true;
                    }
                    let moved = match (last, mv) {
                        (_, None) => true,
                        (None, Some(_)) => true,
                        (Some(p), Some(q)) => p != q,
                    };
                    if let Some(q) = mv {
                        last = Some(q);
                    }
                    moved
                })
                .collect()
        })
        .collect()
}

/// Smallest `k` such that between two consecutive activations of any correct
/// robot no robot is activated more than `k` times. Robot `n` is Byzantine and
/// counts only when it changes position. Returns at least 1.
pub fn check_k_bounded(schedule: &Schedule, n: usize) -> usize {
    let rounds = effective_activations(schedule, n);
    let robots = rounds
        .iter()
        .flatten()
        .copied()
        .max()
        .map_or(0, |m| m + 1)
        .max(n + 1);
    let mut k = 1;
    // since[i][j]: activations of j since i's latest activation.
    let mut since = vec![vec![0usize; robots]; robots];
    let mut seen = vec![false; robots];
    for round in &rounds {
        for &i in round {
            if i != n && seen[i] {
                k = k.max(since[i].iter().copied().max().unwrap_or(0));
            }
        }
        for &i in round {
            seen[i] = true;
            since[i].iter_mut().for_each(|c| *c = 0);
        }
        for &j in round {
            for (i, row) in since.iter_mut().enumerate() {
                if seen[i] && !round.contains(&i) {
                    row[j] += 1;
                }
            }
        }
    }
    k
}
