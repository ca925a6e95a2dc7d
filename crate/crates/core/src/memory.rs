//! Two-process asynchronous shared memory with single-writer cells, atomic
//! snapshots and at most one crash, driven by an explicit adversary.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on primitives for exhaustive enumeration.
pub const MAX_ENUMERATION_EVENTS: usize = 24;

/// A cell is owned by exactly one process; only the owner writes it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub owner: usize,
    pub index: usize,
}

/// Cell contents; absent cells read as ⊥.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Memory<V> {
    pub cells: BTreeMap<CellId, V>,
}

impl<V> Default for Memory<V> {
    fn default() -> Self {
        Memory {
            cells: BTreeMap::new(),
        }
    }
}

impl<V> Memory<V> {
    pub fn get(&self, cell: &CellId) -> Option<&V> {
        self.cells.get(cell)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind<V> {
    Write {
        cell: CellId,
        value: V,
    },
    /// `seen` is the number of writes preceding the snapshot; the view itself
    /// is recovered with [`snapshot_view`].
    Snapshot {
        seen: usize,
    },
    Crash,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event<V> {
    pub timestamp: usize,
    pub process: usize,
    #[serde(flatten)]
    pub kind: EventKind<V>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventLog<V> {
    pub events: Vec<Event<V>>,
}

impl<V> Default for EventLog<V> {
    fn default() -> Self {
        EventLog { events: Vec::new() }
    }
}

impl<V: Clone> EventLog<V> {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks timestamps, single-writer ownership, crash monotonicity and
    /// snapshot write counts.
    pub fn validate(&self) -> Result<()> {
        let mut crashed = [false; 2];
        let mut writes = 0;
        for (i, e) in self.events.iter().enumerate() {
            let bad = |m: String| Err(Error::MalformedLog(format!("event {i}: {m}")));
            if e.timestamp != i {
                return bad(format!("timestamp {} out of order", e.timestamp));
            }
            if e.process > 1 {
                return bad(format!("unknown process {}", e.process));
            }
            if crashed[e.process] {
                return bad(format!("process {} acts after crashing", e.process));
            }
            match &e.kind {
                EventKind::Write { cell, .. } => {
                    if cell.owner != e.process {
                        return Err(Error::NotOwner {
                            owner: cell.owner,
                            writer: e.process,
                        });
                    }
                    writes += 1;
                }
                EventKind::Snapshot { seen } => {
                    if *seen != writes {
                        return bad(format!("snapshot saw {seen} writes, {writes} precede it"));
                    }
                }
                EventKind::Crash => {
                    if crashed.iter().any(|c| *c) {
                        return bad("second crash".into());
                    }
                    crashed[e.process] = true;
                }
            }
        }
        Ok(())
    }

    pub fn crashed(&self) -> Option<usize> {
        self.events
            .iter()
            .find(|e| matches!(e.kind, EventKind::Crash))
            .map(|e| e.process)
    }

    /// Events of one process, in order.
    pub fn of_process(&self, p: usize) -> impl Iterator<Item = &Event<V>> {
        self.events.iter().filter(move |e| e.process == p)
    }
}

/// Memory produced by every write with timestamp `< t`; `t` may also be the
/// log length (the final state).
pub fn snapshot_view<V: Clone>(log: &EventLog<V>, t: usize) -> Result<Memory<V>> {
    if t > log.events.len() {
        return Err(Error::UnknownTimestamp(t));
    }
    let mut m = Memory::default();
    for e in &log.events[..t] {
        if let EventKind::Write { cell, value } = &e.kind {
            m.cells.insert(*cell, value.clone());
        }
    }
    Ok(m)
}

/// Incremental replay for scanning many timestamps in increasing order.
pub struct Replay<'a, V> {
    log: &'a EventLog<V>,
    at: usize,
    memory: Memory<V>,
}

impl<'a, V: Clone> Replay<'a, V> {
    pub fn new(log: &'a EventLog<V>) -> Self {
        Replay {
            log,
            at: 0,
            memory: Memory::default(),
        }
    }

    /// View at `t`; `t` must not decrease between calls.
    pub fn view_at(&mut self, t: usize) -> Result<&Memory<V>> {
        if t > self.log.events.len() || t < self.at {
            return Err(Error::UnknownTimestamp(t));
        }
        for e in &self.log.events[self.at..t] {
            if let EventKind::Write { cell, value } = &e.kind {
                self.memory.cells.insert(*cell, value.clone());
            }
        }
        self.at = t;
        Ok(&self.memory)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Primitive<V> {
    Write(CellId, V),
    Snapshot,
}

/// A deterministic coroutine emitting one shared-memory primitive at a time.
/// Local computation happens inside [`Program::complete`] and is free.
pub trait Program<V> {
    /// The next primitive, or `None` once the program has finished.
    fn pending(&self) -> Option<Primitive<V>>;

    /// Called after the pending primitive executed; snapshots receive the
    /// current memory.
    fn complete(&mut self, view: Option<&Memory<V>>);
}

/// Crash process `process` once it has executed `after` primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashPoint {
    pub process: usize,
    pub after: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform choice among enabled processes.
    SeededRandom { seed: u64 },
    /// Runs one process for 1..=max_burst primitives before choosing again.
    Bursty { seed: u64, max_burst: usize },
    /// Fixed prefix of process ids, then alternating round-robin.
    Explicit { sequence: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterleavingAdversary {
    pub strategy: Strategy,
    pub crash: Option<CrashPoint>,
}

impl InterleavingAdversary {
    pub fn seeded(seed: u64) -> Self {
        InterleavingAdversary {
            strategy: Strategy::SeededRandom { seed },
            crash: None,
        }
    }

    pub fn explicit(sequence: Vec<usize>) -> Self {
        InterleavingAdversary {
            strategy: Strategy::Explicit { sequence },
            crash: None,
        }
    }

    pub fn with_crash(mut self, process: usize, after: usize) -> Self {
        self.crash = Some(CrashPoint { process, after });
        self
    }
}

/// The outcome of [`execute`]: the log plus the programs' final states.
#[derive(Clone, Debug)]
pub struct Execution<V, P> {
    pub log: EventLog<V>,
    pub programs: [P; 2],
    pub primitives: [usize; 2],
}

struct Machine<V, P> {
    memory: Memory<V>,
    log: EventLog<V>,
    programs: [P; 2],
    primitives: [usize; 2],
    crashed: Option<usize>,
    writes: usize,
}

impl<V: Clone, P: Program<V>> Machine<V, P> {
    fn new(programs: [P; 2]) -> Self {
        Machine {
            memory: Memory::default(),
            log: EventLog::default(),
            programs,
            primitives: [0; 2],
            crashed: None,
            writes: 0,
        }
    }

    fn enabled(&self, p: usize) -> bool {
        self.crashed != Some(p) && self.programs[p].pending().is_some()
    }

    fn push(&mut self, process: usize, kind: EventKind<V>) {
        let timestamp = self.log.events.len();
        self.log.events.push(Event {
            timestamp,
            process,
            kind,
        });
    }

    fn crash(&mut self, p: usize) {
        self.crashed = Some(p);
        self.push(p, EventKind::Crash);
    }

    fn exec(&mut self, p: usize) -> Result<()> {
        let prim = self.programs[p]
            .pending()
            .ok_or(Error::ProcessNotEnabled(p))?;
        match prim {
            Primitive::Write(cell, value) => {
                if cell.owner != p {
                    return Err(Error::NotOwner {
                        owner: cell.owner,
                        writer: p,
                    });
                }
                self.memory.cells.insert(cell, value.clone());
                self.push(p, EventKind::Write { cell, value });
                self.writes += 1;
                self.programs[p].complete(None);
            }
            Primitive::Snapshot => {
                self.push(p, EventKind::Snapshot { seen: self.writes });
                self.programs[p].complete(Some(&self.memory));
            }
        }
        self.primitives[p] += 1;
        Ok(())
    }

    fn finish(self) -> Execution<V, P> {
        Execution {
            log: self.log,
            programs: self.programs,
            primitives: self.primitives,
        }
    }
}

/// Runs two programs under `adversary` until both finish or crash, or
/// `max_events` events have been logged.
pub fn execute<V: Clone, P: Program<V>>(
    programs: [P; 2],
    adversary: &InterleavingAdversary,
    max_events: usize,
) -> Result<Execution<V, P>> {
    let mut m = Machine::new(programs);
    let crash = adversary.crash;
    if let Some(c) = crash {
        if c.process > 1 {
            return Err(Error::Config(format!("no process {}", c.process)));
        }
    }
    let mut rng = match &adversary.strategy {
        Strategy::SeededRandom { seed } | Strategy::Bursty { seed, .. } => {
            Some(ChaCha8Rng::seed_from_u64(*seed))
        }
        Strategy::Explicit { .. } => None,
    };
    let mut burst: (usize, usize) = (0, 0);
    let mut explicit_at = 0;
    let mut last = 1;
    loop {
        if let Some(c) = crash {
            if m.crashed.is_none() && m.primitives[c.process] == c.after && m.enabled(c.process) {
                m.crash(c.process);
            }
        }
        let enabled: Vec<usize> = (0..2).filter(|&p| m.enabled(p)).collect();
        if enabled.is_empty() || m.log.len() >= max_events {
            break;
        }
        let p = match &adversary.strategy {
            Strategy::SeededRandom { .. } => {
                enabled[rng.as_mut().expect("seeded").random_range(0..enabled.len())]
            }
            Strategy::Bursty { max_burst, .. } => {
                let rng = rng.as_mut().expect("seeded");
                if burst.1 == 0 || !enabled.contains(&burst.0) {
                    burst = (
                        enabled[rng.random_range(0..enabled.len())],
                        rng.random_range(1..=(*max_burst).max(1)),
                    );
                }
                burst.1 -= 1;
                burst.0
            }
            Strategy::Explicit { sequence } => {
                if explicit_at < sequence.len() {
                    let p = sequence[explicit_at];
                    explicit_at += 1;
                    if p > 1 || !m.enabled(p) {
                        return Err(Error::ProcessNotEnabled(p));
                    }
                    p
                } else {
                    let next = 1 - last;
                    if enabled.contains(&next) {
                        next
                    } else {
                        enabled[0]
                    }
                }
            }
        };
        last = p;
        m.exec(p)?;
    }
    Ok(m.finish())
}

/// Calls `visit` on every distinct interleaving of the two programs, and, if
/// `with_crashes`, on every interleaving where one process crashes after any
/// number of its primitives short of finishing.
pub fn for_each_interleaving<V, P, F>(
    programs: [P; 2],
    max_events: usize,
    with_crashes: bool,
    mut visit: F,
) -> Result<usize>
where
    V: Clone,
    P: Program<V> + Clone,
    F: FnMut(&Execution<V, P>),
{
    if max_events > MAX_ENUMERATION_EVENTS {
        return Err(Error::BoundExceeded {
            total: max_events,
            limit: MAX_ENUMERATION_EVENTS,
        });
    }
    let mut count = 0;
    dfs(
        Machine::new(programs),
        max_events,
        with_crashes,
        &mut visit,
        &mut count,
    )?;
    Ok(count)
}

fn dfs<V, P, F>(
    m: Machine<V, P>,
    max_events: usize,
    with_crashes: bool,
    visit: &mut F,
    count: &mut usize,
) -> Result<()>
where
    V: Clone,
    P: Program<V> + Clone,
    F: FnMut(&Execution<V, P>),
{
    let enabled: Vec<usize> = (0..2).filter(|&p| m.enabled(p)).collect();
    if enabled.is_empty() {
        *count += 1;
        visit(&m.finish());
        return Ok(());
    }
    let events = m.log.len();
    if events >= max_events {
        return Err(Error::BoundExceeded {
            total: events + 1,
            limit: max_events,
        });
    }
    for &p in &enabled {
        let mut next = clone_machine(&m);
        next.exec(p)?;
        dfs(next, max_events, with_crashes, visit, count)?;
    }
    if with_crashes && m.crashed.is_none() {
        for &p in &enabled {
            let mut next = clone_machine(&m);
            next.crash(p);
            dfs(next, max_events, with_crashes, visit, count)?;
        }
    }
    Ok(())
}

fn clone_machine<V: Clone, P: Clone>(m: &Machine<V, P>) -> Machine<V, P> {
    Machine {
        memory: m.memory.clone(),
        log: m.log.clone(),
        programs: m.programs.clone(),
        primitives: m.primitives,
        crashed: m.crashed,
        writes: m.writes,
    }
}

/// Every distinct interleaving's log, crash-free and crash-augmented.
pub fn enumerate_interleavings<V, P>(
    programs: [P; 2],
    max_events: usize,
    with_crashes: bool,
) -> Result<Vec<EventLog<V>>>
where
    V: Clone,
    P: Program<V> + Clone,
{
    let mut out = Vec::new();
    for_each_interleaving(programs, max_events, with_crashes, |e| {
        out.push(e.log.clone())
    })?;
    Ok(out)
}

/// A straight-line program: writes and snapshots in a fixed order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Script<V> {
    ops: Vec<Primitive<V>>,
    at: usize,
    pub views: Vec<Memory<V>>,
}

impl<V> Script<V> {
    pub fn new(ops: Vec<Primitive<V>>) -> Self {
        Script {
            ops,
            at: 0,
            views: Vec::new(),
        }
    }
}

impl<V: Clone> Program<V> for Script<V> {
    fn pending(&self) -> Option<Primitive<V>> {
        self.ops.get(self.at).cloned()
    }

    fn complete(&mut self, view: Option<&Memory<V>>) {
        if let Some(v) = view {
            self.views.push(v.clone());
        }
        self.at += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn cell(owner: usize, index: usize) -> CellId {
        CellId { owner, index }
    }

    fn writer(p: usize, k: usize) -> Script<i64> {
        Script::new(
            (0..k)
                .map(|i| Primitive::Write(cell(p, i), (10 * p + i) as i64))
                .collect(),
        )
    }

    #[test]
    fn single_write_logs_one_event() {
        let ex = execute(
            [writer(0, 1), writer(1, 0)],
            &InterleavingAdversary::seeded(1),
            100,
        )
        .unwrap();
        assert_eq!(ex.log.len(), 1);
        assert!(matches!(ex.log.events[0].kind, EventKind::Write { .. }));
    }

    #[test]
    fn explicit_alternation() {
        let ex = execute(
            [writer(0, 2), writer(1, 2)],
            &InterleavingAdversary::explicit(vec![0, 1, 0, 1]),
            100,
        )
        .unwrap();
        let procs: Vec<usize> = ex.log.events.iter().map(|e| e.process).collect();
        assert_eq!(procs, vec![0, 1, 0, 1]);
        let err = execute(
            [writer(0, 1), writer(1, 2)],
            &InterleavingAdversary::explicit(vec![0, 0]),
            100,
        );
        assert_eq!(err.unwrap_err(), Error::ProcessNotEnabled(0));
    }

    #[test]
    fn seeded_runs_are_byte_identical() {
        let run = |seed| {
            let ex = execute(
                [writer(0, 5), writer(1, 5)],
                &InterleavingAdversary::seeded(seed),
                100,
            )
            .unwrap();
            serde_json::to_vec(&ex.log).unwrap()
        };
        assert_eq!(run(42), run(42));
    }

    #[test]
    fn crash_stops_the_process() {
        let adv = InterleavingAdversary::seeded(3).with_crash(1, 1);
        let ex = execute([writer(0, 3), writer(1, 3)], &adv, 100).unwrap();
        ex.log.validate().unwrap();
        assert_eq!(ex.log.crashed(), Some(1));
        assert_eq!(ex.primitives, [3, 1]);
    }

    #[test]
    fn non_owner_write_is_rejected() {
        let bad = Script::new(vec![Primitive::Write(cell(1, 0), 5)]);
        let err = execute([bad, writer(1, 0)], &InterleavingAdversary::seeded(0), 10);
        assert_eq!(
            err.unwrap_err(),
            Error::NotOwner {
                owner: 1,
                writer: 0
            }
        );
        let log = EventLog {
            events: vec![Event {
                timestamp: 0,
                process: 0,
                kind: EventKind::Write {
                    cell: cell(1, 0),
                    value: 1,
                },
            }],
        };
        assert!(log.validate().is_err());
    }

    #[test]
    fn enumeration_counts_are_binomial() {
        let n = |a, b| {
            enumerate_interleavings([writer(0, a), writer(1, b)], 24, false)
                .unwrap()
                .len()
        };
        assert_eq!(n(2, 1), 3);
        assert_eq!(n(3, 3), 20);
        assert_eq!(n(4, 2), 15);
        let logs = enumerate_interleavings([writer(0, 3), writer(1, 3)], 24, false).unwrap();
        let distinct: HashSet<String> = logs
            .iter()
            .map(|l| serde_json::to_string(l).unwrap())
            .collect();
        assert_eq!(distinct.len(), 20);
    }

    #[test]
    fn crash_augmented_enumeration_is_duplicate_free() {
        let logs = enumerate_interleavings([writer(0, 2), writer(1, 1)], 24, true).unwrap();
        // Crash-free C(3,1)=3; p0 crashing after k∈{0,1}: C(2,1)+C(3,1)=5;
        // p1 crashing after 0: C(3,1)=3.
        assert_eq!(logs.len(), 3 + 5 + 3);
        let distinct: HashSet<String> = logs
            .iter()
            .map(|l| serde_json::to_string(l).unwrap())
            .collect();
        assert_eq!(distinct.len(), logs.len());
        for l in &logs {
            l.validate().unwrap();
        }
    }

    #[test]
    fn enumeration_bound_is_enforced() {
        assert!(matches!(
            enumerate_interleavings([writer(0, 1), writer(1, 1)], 25, false),
            Err(Error::BoundExceeded { .. })
        ));
        assert!(matches!(
            enumerate_interleavings([writer(0, 3), writer(1, 3)], 5, false),
            Err(Error::BoundExceeded { .. })
        ));
    }

    #[test]
    fn snapshot_view_examples() {
        let log = EventLog {
            events: vec![
                Event {
                    timestamp: 0,
                    process: 0,
                    kind: EventKind::Write {
                        cell: cell(0, 0),
                        value: 5,
                    },
                },
                Event {
                    timestamp: 1,
                    process: 1,
                    kind: EventKind::Write {
                        cell: cell(1, 1),
                        value: 7,
                    },
                },
                Event {
                    timestamp: 2,
                    process: 0,
                    kind: EventKind::Snapshot { seen: 2 },
                },
            ],
        };
        assert!(snapshot_view(&log, 0).unwrap().cells.is_empty());
        let v = snapshot_view(&log, 2).unwrap();
        assert_eq!(v.get(&cell(0, 0)), Some(&5));
        assert_eq!(v.get(&cell(1, 1)), Some(&7));
        assert_eq!(snapshot_view(&log, 4), Err(Error::UnknownTimestamp(4)));
    }

    fn mixed(p: usize, ops: &[bool]) -> Script<i64> {
        Script::new(
            ops.iter()
                .enumerate()
                .map(|(i, w)| {
                    if *w {
                        Primitive::Write(cell(p, i % 3), (100 * p + i) as i64)
                    } else {
                        Primitive::Snapshot
                    }
                })
                .collect(),
        )
    }

    proptest! {
        #[test]
        fn snapshots_match_naive_replay(
            a in prop::collection::vec(any::<bool>(), 0..8),
            b in prop::collection::vec(any::<bool>(), 0..8),
            seed in any::<u64>(),
        ) {
            let ex = execute([mixed(0, &a), mixed(1, &b)], &InterleavingAdversary::seeded(seed), 100).unwrap();
            ex.log.validate().unwrap();
            let mut replay = Replay::new(&ex.log);
            let mut k = [0usize; 2];
            for e in &ex.log.events {
                if let EventKind::Snapshot { .. } = e.kind {
                    // Naive oracle: fold every earlier write from scratch.
                    let mut naive: BTreeMap<CellId, i64> = BTreeMap::new();
                    for w in &ex.log.events[..e.timestamp] {
                        if let EventKind::Write { cell, value } = &w.kind {
                            naive.insert(*cell, *value);
                        }
                    }
                    let view = snapshot_view(&ex.log, e.timestamp).unwrap();
                    prop_assert_eq!(&view.cells, &naive);
                    prop_assert_eq!(replay.view_at(e.timestamp).unwrap(), &view);
                    prop_assert_eq!(&ex.programs[e.process].views[k[e.process]], &view);
                    k[e.process] += 1;
                }
            }
        }
    }
}
