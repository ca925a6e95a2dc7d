//! Two simulator processes that run a robot algorithm over slot objects and
//! decide consensus by decoding the pattern the simulated robots reach.
//!
//! Slot `j` stores the local state of robot `α(j) = j mod n`. The first `n`
//! slots hold the initial configuration encoding each proposal; every later
//! slot holds the result of one simulated activation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algorithms::{absolute_move, algorithm_by_name};
use crate::engine::step;
use crate::error::{Error, Result};
use crate::formations::{best_fit_with_arity, FormationKind, FormationSpec, Support};
use crate::geometry::{LocationMultiset, Point};
use crate::memory::{
    execute, snapshot_view, EventKind, EventLog, InterleavingAdversary, Memory, Primitive, Program,
};
use crate::model::{
    is_legitimate_now, max_multiplicity, Configuration, LocalState, RobotAlgorithm,
};
use crate::slot::{decode_cell, read_status, SlotCell, Submit};

pub type Cell = SlotCell<LocalState>;

/// Default slot budget per process, as a multiple of `n`.
pub const DEFAULT_SLOTS_PER_ROBOT: usize = 64;

/// Translations tried, in order, when choosing a formation witness.
pub const WITNESS_CANDIDATES: [(i64, i64); 5] = [(0, 1), (1, 0), (1, 1), (1, -1), (2, 1)];

pub fn alpha(slot: usize, n: usize) -> usize {
    slot % n
}

/// What the simulated robots must reach.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Target {
    Gathering,
    Formation {
        family: FormationKind,
        witness: Point,
    },
}

/// The pattern reached by the proposal-0 benign run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Point(Point),
    Support(Support),
}

impl Target {
    fn spec(&self, n: usize) -> Option<FormationSpec> {
        match self {
            Target::Gathering => None,
            Target::Formation { family, .. } => Some(FormationSpec {
                kind: *family,
                arity: n + 1,
            }),
        }
    }

    /// Location of robot `robot` in the initial configuration for `proposal`.
    pub fn initial_location(&self, robot: usize, proposal: u8) -> Point {
        match self {
            Target::Gathering => Point::int(proposal as i64, 0),
            Target::Formation { witness, .. } => {
                let base = Point::int(robot as i64, 0);
                if proposal == 1 {
                    &base + witness
                } else {
                    base
                }
            }
        }
    }

    /// Where the Byzantine entry is placed when every slot of a window is
    /// committed: `m(C)` for gathering, the best-fit completion point otherwise.
    pub fn helper(&self, correct: &LocationMultiset) -> Result<Point> {
        match self {
            Target::Gathering => max_multiplicity(correct).map(|(p, _)| p),
            Target::Formation { family, .. } => {
                let fit = best_fit_with_arity(*family, correct.len() + 1, correct)?;
                fit.helper.ok_or(Error::EmptyMultiset)
            }
        }
    }

    pub fn is_legitimate(&self, c: &Configuration) -> bool {
        match self {
            Target::Gathering => is_legitimate_now(c),
            Target::Formation { family, .. } => {
                let correct = c.correct_locations();
                match best_fit_with_arity(*family, c.len(), &correct) {
                    Ok(fit) => fit.count == correct.len() && fit.support.is_some(),
                    Err(_) => false,
                }
            }
        }
    }

    /// The class marker of a legitimate configuration.
    pub fn reached(&self, c: &Configuration) -> Result<Reference> {
        match self {
            Target::Gathering => Ok(Reference::Point(max_multiplicity(&c.locations())?.0)),
            Target::Formation { .. } => {
                let spec = self.spec(c.n()).expect("formation");
                let mut pts = c.correct_locations().into_vec();
                pts.push(self.helper(&c.correct_locations())?);
                spec.invariant(&LocationMultiset::new(pts))?
                    .map(Reference::Support)
                    .ok_or_else(|| Error::NotInExtension("reached pattern has no support".into()))
            }
        }
    }
}

/// 0 iff the reached marker equals the proposal-0 reference.
pub fn decode(reached: &Reference, reference: &Reference) -> u8 {
    u8::from(reached != reference)
}

/// Configuration whose correct entries come from `correct` and whose
/// Byzantine entry sits at the helper location.
fn with_helper(target: &Target, correct: Vec<LocalState>) -> Result<Configuration> {
    let locs: LocationMultiset = correct.iter().map(|s| s.location.clone()).collect();
    let h = target.helper(&locs)?;
    let mut robots = correct;
    robots.push(LocalState::at(h));
    Configuration::new(robots)
}

/// The fault-free deterministic execution: round-robin over correct robots,
/// Byzantine entry at the helper location, until legitimate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenignRun {
    pub configs: Vec<Configuration>,
    pub reached: Reference,
}

pub fn benign_run(
    alg: &dyn RobotAlgorithm,
    n: usize,
    target: &Target,
    proposal: u8,
    max_rounds: usize,
) -> Result<BenignRun> {
    if n < 3 {
        return Err(Error::InvalidSystemSize(n));
    }
    let init = (0..n)
        .map(|k| LocalState {
            state: alg.initial_state(k),
            location: target.initial_location(k, proposal),
        })
        .collect();
    let mut c = with_helper(target, init)?;
    let mut configs = vec![c.clone()];
    for round in 0..=max_rounds {
        if target.is_legitimate(&c) {
            let reached = target.reached(&c)?;
            return Ok(BenignRun { configs, reached });
        }
        if round == max_rounds {
            break;
        }
        let moved = step(&c, &[round % n], None, alg)?;
        c = with_helper(target, moved.robots()[..n].to_vec())?;
        configs.push(c.clone());
    }
    Err(Error::ReferenceDiverged(max_rounds))
}

/// The gathering point of the benign run from the all-`(proposal, 0)` start.
pub fn reference_run(
    alg: &dyn RobotAlgorithm,
    n: usize,
    proposal: u8,
    max_rounds: usize,
) -> Result<Point> {
    match benign_run(alg, n, &Target::Gathering, proposal, max_rounds)?.reached {
        Reference::Point(p) => Ok(p),
        Reference::Support(_) => unreachable!("gathering reaches a point"),
    }
}

/// First candidate translation that moves the reference pattern's support.
pub fn choose_witness(family: FormationKind, n: usize, reference: &BenignRun) -> Result<Point> {
    let Reference::Support(s) = &reference.reached else {
        return Err(Error::NotBivalent(family.name().into()));
    };
    WITNESS_CANDIDATES
        .iter()
        .map(|&(x, y)| Point::int(x, y))
        .find(|x| &s.translate(x) != s)
        .ok_or_else(|| Error::NotBivalent(format!("{} at n = {n}", family.name())))
}

/// Everything both processes know before running.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionSetup {
    pub n: usize,
    pub algorithm: String,
    pub proposals: [u8; 2],
    pub target: Target,
    pub reference: Reference,
    pub max_slots: usize,
}

impl ReductionSetup {
    pub fn gathering(
        n: usize,
        proposals: [u8; 2],
        algorithm: &str,
        max_slots: Option<usize>,
    ) -> Result<Self> {
        check_params(n, proposals)?;
        let alg = algorithm_by_name(algorithm)?;
        let max_slots = max_slots.unwrap_or(DEFAULT_SLOTS_PER_ROBOT * n);
        let reference = Reference::Point(reference_run(alg.as_ref(), n, 0, max_slots)?);
        Ok(ReductionSetup {
            n,
            algorithm: algorithm.to_string(),
            proposals,
            target: Target::Gathering,
            reference,
            max_slots,
        })
    }

    /// Formation variant; rejects families without a supporting curve.
    pub fn formation(
        n: usize,
        proposals: [u8; 2],
        algorithm: &str,
        family: FormationKind,
        max_slots: Option<usize>,
    ) -> Result<Self> {
        check_params(n, proposals)?;
        if family.kernel_bound().is_none() {
            return Err(Error::NotBivalent(format!(
                "{}: every pattern and its translates lie in one class",
                family.name()
            )));
        }
        let alg = algorithm_by_name(algorithm)?;
        let max_slots = max_slots.unwrap_or(DEFAULT_SLOTS_PER_ROBOT * n);
        let placeholder = Target::Formation {
            family,
            witness: Point::origin(),
        };
        let base = benign_run(alg.as_ref(), n, &placeholder, 0, max_slots)?;
        let witness = choose_witness(family, n, &base)?;
        Ok(ReductionSetup {
            n,
            algorithm: algorithm.to_string(),
            proposals,
            target: Target::Formation { family, witness },
            reference: base.reached,
            max_slots,
        })
    }
}

fn check_params(n: usize, proposals: [u8; 2]) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidSystemSize(n));
    }
    if proposals.iter().any(|p| *p > 1) {
        return Err(Error::Config(format!(
            "proposals must be 0 or 1, got {proposals:?}"
        )));
    }
    Ok(())
}

/// Result of `getview`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View {
    /// Every slot of the window is committed.
    pub q: bool,
    pub config: Configuration,
    /// The uncommitted slot of the window, if any.
    pub uncommitted: Option<usize>,
}

/// Builds the configuration process `i` sees before entering slot `u`: each
/// slot of the window `u-n..u-1` lands at its robot index. An uncommitted
/// slot contributes `i`'s own value to its robot and the other value to the
/// Byzantine entry.
pub fn getview(i: usize, u: usize, n: usize, mem: &Memory<Cell>, target: &Target) -> Result<View> {
    if u < n {
        return Err(Error::CorruptedTrace(format!("getview at slot {u} < n")));
    }
    let mut entries: Vec<Option<LocalState>> = vec![None; n];
    let mut byz = None;
    let mut uncommitted = None;
    for slot in u - n..u {
        let st = read_status(mem, slot);
        let a = alpha(slot, n);
        match st.committed() {
            Some(v) => entries[a] = Some(v.clone()),
            None => {
                if uncommitted.is_some() {
                    return Err(Error::CorruptedTrace(format!(
                        "p{i} sees two uncommitted slots before slot {u}"
                    )));
                }
                let own = st.value(i).cloned().ok_or_else(|| {
                    Error::CorruptedTrace(format!(
                        "p{i} has no submission in uncommitted slot {slot}"
                    ))
                })?;
                let other = st.value(1 - i).cloned().ok_or_else(|| {
                    Error::CorruptedTrace(format!("uncommitted slot {slot} lacks the peer's value"))
                })?;
                entries[a] = Some(own);
                byz = Some(other);
                uncommitted = Some(slot);
            }
        }
    }
    let correct: Vec<LocalState> = entries
        .into_iter()
        .map(|e| e.expect("window covers every robot"))
        .collect();
    let config = match byz {
        Some(b) => {
            let mut robots = correct;
            robots.push(b);
            Configuration::new(robots)?
        }
        None => with_helper(target, correct)?,
    };
    Ok(View {
        q: uncommitted.is_none(),
        config,
        uncommitted,
    })
}

#[derive(Clone, Debug)]
enum Next {
    Submit(Submit<LocalState>),
    GetView,
    Done,
}

/// One simulator process as a shared-memory program.
#[derive(Clone)]
pub struct Simulator {
    pub id: usize,
    setup: Arc<ReductionSetup>,
    alg: Arc<dyn RobotAlgorithm>,
    u: usize,
    next: Next,
    pub decision: Option<Outcome>,
    pub exhausted: bool,
    pub error: Option<Error>,
}

/// A decision together with what was decoded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub value: u8,
    /// Slot whose getview found the legitimate configuration.
    pub slot: usize,
    pub reached: Reference,
}

impl Simulator {
    pub fn new(id: usize, setup: Arc<ReductionSetup>, alg: Arc<dyn RobotAlgorithm>) -> Self {
        let mut s = Simulator {
            id,
            setup,
            alg,
            u: 0,
            next: Next::Done,
            decision: None,
            exhausted: false,
            error: None,
        };
        s.next = s.initial_submit(0);
        s
    }

    fn initial_submit(&self, slot: usize) -> Next {
        let value = LocalState {
            state: self.alg.initial_state(slot),
            location: self
                .setup
                .target
                .initial_location(slot, self.setup.proposals[self.id]),
        };
        Next::Submit(Submit::new(self.id, slot, value))
    }

    fn after_submit(&mut self) {
        self.u += 1;
        self.next = if self.u < self.setup.n {
            self.initial_submit(self.u)
        } else if self.u >= self.setup.max_slots {
            self.exhausted = true;
            Next::Done
        } else {
            Next::GetView
        };
    }

    fn on_view(&mut self, mem: &Memory<Cell>) -> Result<Next> {
        let n = self.setup.n;
        let view = getview(self.id, self.u, n, mem, &self.setup.target)?;
        if view.q && self.setup.target.is_legitimate(&view.config) {
            let reached = self.setup.target.reached(&view.config)?;
            self.decision = Some(Outcome {
                value: decode(&reached, &self.setup.reference),
                slot: self.u,
                reached,
            });
            return Ok(Next::Done);
        }
        let (location, state) = absolute_move(self.alg.as_ref(), &view.config, alpha(self.u, n))?;
        Ok(Next::Submit(Submit::new(
            self.id,
            self.u,
            LocalState { state, location },
        )))
    }
}

impl Program<Cell> for Simulator {
    fn pending(&self) -> Option<Primitive<Cell>> {
        match &self.next {
            Next::Submit(s) => s.pending(),
            Next::GetView => Some(Primitive::Snapshot),
            Next::Done => None,
        }
    }

    fn complete(&mut self, view: Option<&Memory<Cell>>) {
        match &mut self.next {
            Next::Submit(s) => {
                s.complete(view);
                if s.is_done() {
                    self.after_submit();
                }
            }
            Next::GetView => {
                let mem = view.expect("snapshot delivers a view");
                self.next = match self.on_view(mem) {
                    Ok(next) => next,
                    Err(e) => {
                        self.error = Some(e);
                        Next::Done
                    }
                };
            }
            Next::Done => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub value: LocalState,
    pub b: usize,
    pub e: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub index: usize,
    pub robot: usize,
    pub submissions: [Option<SubmissionRecord>; 2],
    /// Final status index, `None` if the slot never committed.
    pub status: Option<usize>,
    /// Final status, or the only process whose submission completed.
    pub committer: Option<usize>,
}

/// Per-slot metadata recomputed from the event log.
pub fn derive_slots(n: usize, log: &EventLog<Cell>) -> Result<Vec<SlotRecord>> {
    let mut slots: Vec<SlotRecord> = Vec::new();
    for e in &log.events {
        let EventKind::Write { cell, value } = &e.kind else {
            continue;
        };
        let (j, is_flag) = decode_cell(cell);
        while slots.len() <= j {
            let index = slots.len();
            slots.push(SlotRecord {
                index,
                robot: alpha(index, n),
                submissions: [None, None],
                status: None,
                committer: None,
            });
        }
        let sub = &mut slots[j].submissions[cell.owner];
        match (is_flag, value) {
            (false, SlotCell::Val(v)) => {
                if sub.is_some() {
                    return Err(Error::DoubleSubmission(j));
                }
                *sub = Some(SubmissionRecord {
                    value: v.clone(),
                    b: e.timestamp,
                    e: None,
                });
            }
            (true, SlotCell::Flag(_)) => match sub {
                Some(s) if s.e.is_none() => s.e = Some(e.timestamp),
                _ => {
                    return Err(Error::MalformedLog(format!(
                        "flag without value in slot {j}"
                    )))
                }
            },
            _ => return Err(Error::MalformedLog(format!("mistyped cell in slot {j}"))),
        }
    }
    let fin = snapshot_view(log, log.len())?;
    for s in &mut slots {
        s.status = read_status(&fin, s.index).s;
        s.committer = s.status.or_else(|| {
            let done: Vec<usize> = (0..2)
                .filter(|&i| s.submissions[i].as_ref().is_some_and(|x| x.e.is_some()))
                .collect();
            (done.len() == 1).then(|| done[0])
        });
    }
    Ok(slots)
}

/// A finished run of the reduction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionTrace {
    pub setup: ReductionSetup,
    pub adversary: InterleavingAdversary,
    pub events: EventLog<Cell>,
    pub slots: Vec<SlotRecord>,
    pub decisions: [Option<Outcome>; 2],
    pub exhausted: [bool; 2],
    pub crashed: Option<usize>,
}

impl ReductionTrace {
    pub fn decision_values(&self) -> [Option<u8>; 2] {
        [
            self.decisions[0].as_ref().map(|o| o.value),
            self.decisions[1].as_ref().map(|o| o.value),
        ]
    }

    /// A live process ran out of slots without deciding.
    pub fn hit_bound(&self) -> bool {
        (0..2).any(|i| self.exhausted[i] && self.decisions[i].is_none() && self.crashed != Some(i))
    }
}

/// Runs both simulators under `adversary`.
pub fn run_reduction(
    setup: &ReductionSetup,
    adversary: &InterleavingAdversary,
) -> Result<ReductionTrace> {
    let alg: Arc<dyn RobotAlgorithm> = Arc::from(algorithm_by_name(&setup.algorithm)?);
    let shared = Arc::new(setup.clone());
    let programs = [
        Simulator::new(0, shared.clone(), alg.clone()),
        Simulator::new(1, shared, alg),
    ];
    let max_events = 8 * (setup.max_slots + 1);
    let ex = execute(programs, adversary, max_events)?;
    for p in &ex.programs {
        if let Some(e) = &p.error {
            return Err(e.clone());
        }
    }
    let slots = derive_slots(setup.n, &ex.log)?;
    let [p0, p1] = ex.programs;
    Ok(ReductionTrace {
        setup: setup.clone(),
        adversary: adversary.clone(),
        crashed: ex.log.crashed(),
        slots,
        decisions: [p0.decision, p1.decision],
        exhausted: [p0.exhausted, p1.exhausted],
        events: ex.log,
    })
}

/// Gathering reduction with a registered algorithm.
pub fn run_consensus(
    proposals: [u8; 2],
    n: usize,
    algorithm: &str,
    adversary: &InterleavingAdversary,
    max_slots: Option<usize>,
) -> Result<ReductionTrace> {
    run_reduction(
        &ReductionSetup::gathering(n, proposals, algorithm, max_slots)?,
        adversary,
    )
}

/// Formation reduction with a registered algorithm.
pub fn run_formation_consensus(
    proposals: [u8; 2],
    n: usize,
    algorithm: &str,
    family: FormationKind,
    adversary: &InterleavingAdversary,
    max_slots: Option<usize>,
) -> Result<ReductionTrace> {
    run_reduction(
        &ReductionSetup::formation(n, proposals, algorithm, family, max_slots)?,
        adversary,
    )
}
