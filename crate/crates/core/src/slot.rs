//! The write-once two-process slot object over single-writer cells.
//!
//! Each slot has cells `val_i` and `flag_i` per process. `submit_i(v)` writes
//! `val_i`, takes a snapshot, and writes `flag_i = CLAIM` if the other value
//! was still absent, `DEFER` otherwise. Reads are computed from a snapshot.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{
    for_each_interleaving, CellId, EventKind, EventLog, Memory, Primitive, Program, Replay,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Flag {
    Claim,
    Defer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotCell<V> {
    Val(V),
    Flag(Flag),
}

pub fn val_cell(slot: usize, process: usize) -> CellId {
    CellId {
        owner: process,
        index: 2 * slot,
    }
}

pub fn flag_cell(slot: usize, process: usize) -> CellId {
    CellId {
        owner: process,
        index: 2 * slot + 1,
    }
}

/// Slot index and kind of a cell.
pub fn decode_cell(cell: &CellId) -> (usize, bool) {
    (cell.index / 2, cell.index % 2 == 1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotStatus<V> {
    pub v0: Option<V>,
    pub v1: Option<V>,
    pub s: Option<usize>,
}

impl<V> SlotStatus<V> {
    pub fn value(&self, i: usize) -> Option<&V> {
        if i == 0 {
            self.v0.as_ref()
        } else {
            self.v1.as_ref()
        }
    }

    /// The committed value, if any.
    pub fn committed(&self) -> Option<&V> {
        self.s.and_then(|s| self.value(s))
    }
}

/// Status rule; `NoClaimCommit` is a deliberately broken variant for
/// negative tests (a lone CLAIM no longer commits).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatusRule {
    #[default]
    Standard,
    NoClaimCommit,
}

fn flag_of<V>(mem: &Memory<SlotCell<V>>, slot: usize, i: usize) -> Option<Flag> {
    match mem.get(&flag_cell(slot, i)) {
        Some(SlotCell::Flag(f)) => Some(*f),
        _ => None,
    }
}

fn val_of<V: Clone>(mem: &Memory<SlotCell<V>>, slot: usize, i: usize) -> Option<V> {
    match mem.get(&val_cell(slot, i)) {
        Some(SlotCell::Val(v)) => Some(v.clone()),
        _ => None,
    }
}

pub fn read_status<V: Clone + PartialEq>(mem: &Memory<SlotCell<V>>, slot: usize) -> SlotStatus<V> {
    read_status_with(StatusRule::Standard, mem, slot)
}

pub fn read_status_with<V: Clone + PartialEq>(
    rule: StatusRule,
    mem: &Memory<SlotCell<V>>,
    slot: usize,
) -> SlotStatus<V> {
    let v0 = val_of(mem, slot, 0);
    let v1 = val_of(mem, slot, 1);
    let f = [flag_of(mem, slot, 0), flag_of(mem, slot, 1)];
    let claim = f.iter().position(|x| *x == Some(Flag::Claim));
    let defers = f.iter().filter(|x| **x == Some(Flag::Defer)).count();
    let s = match (claim, rule) {
        (Some(i), StatusRule::Standard) => Some(i),
        _ if defers == 2 => Some(0),
        _ if defers == 1 && claim.is_none() && v0.is_some() && v0 == v1 => Some(0),
        _ => None,
    };
    SlotStatus { v0, v1, s }
}

/// One submit: write the value, snapshot, write the flag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submit<V> {
    pub process: usize,
    pub slot: usize,
    pub value: V,
    phase: u8,
    flag: Option<Flag>,
}

impl<V: Clone> Submit<V> {
    pub fn new(process: usize, slot: usize, value: V) -> Self {
        Submit {
            process,
            slot,
            value,
            phase: 0,
            flag: None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.phase == 3
    }

    pub fn pending(&self) -> Option<Primitive<SlotCell<V>>> {
        match self.phase {
            0 => Some(Primitive::Write(
                val_cell(self.slot, self.process),
                SlotCell::Val(self.value.clone()),
            )),
            1 => Some(Primitive::Snapshot),
            2 => Some(Primitive::Write(
                flag_cell(self.slot, self.process),
                SlotCell::Flag(self.flag.expect("set by snapshot")),
            )),
            _ => None,
        }
    }

    pub fn complete(&mut self, view: Option<&Memory<SlotCell<V>>>) {
        if self.phase == 1 {
            let view = view.expect("snapshot delivers a view");
            let other = view.get(&val_cell(self.slot, 1 - self.process));
            self.flag = Some(if other.is_none() {
                Flag::Claim
            } else {
                Flag::Defer
            });
        }
        self.phase += 1;
    }
}

/// A process submitting to a sequence of distinct slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubmitProgram<V> {
    queue: Vec<Submit<V>>,
    at: usize,
}

impl<V: Clone> SubmitProgram<V> {
    pub fn new(process: usize, submissions: Vec<(usize, V)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (slot, _) in &submissions {
            if !seen.insert(*slot) {
                return Err(Error::DoubleSubmission(*slot));
            }
        }
        Ok(SubmitProgram {
            queue: submissions
                .into_iter()
                .map(|(slot, v)| Submit::new(process, slot, v))
                .collect(),
            at: 0,
        })
    }

    pub fn idle() -> Self {
        SubmitProgram {
            queue: Vec::new(),
            at: 0,
        }
    }
}

impl<V: Clone> Program<SlotCell<V>> for SubmitProgram<V> {
    fn pending(&self) -> Option<Primitive<SlotCell<V>>> {
        self.queue.get(self.at).and_then(|s| s.pending())
    }

    fn complete(&mut self, view: Option<&Memory<SlotCell<V>>>) {
        let s = &mut self.queue[self.at];
        s.complete(view);
        if s.is_done() {
            self.at += 1;
        }
    }
}

/// Begin and end timestamps of each process's submission to one slot.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitTimes {
    pub b: [Option<usize>; 2],
    pub e: [Option<usize>; 2],
}

pub fn submit_times<V: Clone>(log: &EventLog<SlotCell<V>>, slot: usize) -> SubmitTimes {
    let mut t = SubmitTimes::default();
    for ev in &log.events {
        if let EventKind::Write { cell, .. } = &ev.kind {
            let (s, is_flag) = decode_cell(cell);
            if s == slot {
                if is_flag {
                    t.e[cell.owner] = Some(ev.timestamp);
                } else {
                    t.b[cell.owner] = Some(ev.timestamp);
                }
            }
        }
    }
    t
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotProperty {
    Validity,
    ContendedValueDetection,
    Persistency,
    Commitment,
    NoContentionCommitment,
    CommonValueCommitment,
}

impl SlotProperty {
    pub const ALL: [SlotProperty; 6] = [
        SlotProperty::Validity,
        SlotProperty::ContendedValueDetection,
        SlotProperty::Persistency,
        SlotProperty::Commitment,
        SlotProperty::NoContentionCommitment,
        SlotProperty::CommonValueCommitment,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyVerdict {
    pub property: SlotProperty,
    pub pass: bool,
    /// Reads the property constrained (zero means vacuous).
    pub reads_checked: usize,
    /// Read point (number of events applied) of the first violation.
    pub violation_at: Option<usize>,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotReport {
    pub slot: usize,
    pub times: SubmitTimes,
    pub verdicts: Vec<PropertyVerdict>,
}

impl SlotReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, p: SlotProperty) -> &PropertyVerdict {
        self.verdicts
            .iter()
            .find(|v| v.property == p)
            .expect("all properties reported")
    }
}

/// Evaluates the six slot properties on `log`, reading the slot at every
/// inter-event point. `values` are the values each process submits.
pub fn check_slot_properties<V: Clone + PartialEq + std::fmt::Debug>(
    log: &EventLog<SlotCell<V>>,
    slot: usize,
    values: [&V; 2],
    rule: StatusRule,
) -> Result<SlotReport> {
    log.validate()?;
    let times = submit_times(log, slot);
    let mut replay = Replay::new(log);
    let mut reads = Vec::with_capacity(log.len() + 1);
    for r in 0..=log.len() {
        reads.push(read_status_with(rule, replay.view_at(r)?, slot));
    }
    let inf = usize::MAX;
    let e = [times.e[0].unwrap_or(inf), times.e[1].unwrap_or(inf)];
    let b = [times.b[0].unwrap_or(inf), times.b[1].unwrap_or(inf)];
    // A read at point r has seen exactly the events with timestamp < r.
    let after = |r: usize, t: usize| t != inf && r > t;

    let mut verdicts = Vec::new();
    let mut v = |property, checked, first: Option<(usize, String)>| {
        verdicts.push(PropertyVerdict {
            property,
            pass: first.is_none(),
            reads_checked: checked,
            violation_at: first.as_ref().map(|f| f.0),
            detail: first.map(|f| f.1),
        });
    };

    let mut first = None;
    for (r, st) in reads.iter().enumerate() {
        for (i, &want) in values.iter().enumerate() {
            if let Some(w) = st.value(i) {
                if w != want && first.is_none() {
                    first = Some((r, format!("w{i} = {w:?} was never submitted by p{i}")));
                }
            }
        }
        if let Some(s) = st.s {
            if st.value(s).is_none() && first.is_none() {
                first = Some((r, format!("status {s} selects an absent value")));
            }
        }
    }
    v(SlotProperty::Validity, reads.len(), first);

    // Only readers whose own submission has completed.
    let (mut checked, mut first) = (0, None);
    for (r, st) in reads.iter().enumerate() {
        if (0..2).any(|i| after(r, e[i])) {
            checked += 1;
            if st.s.is_none() && (st.v0.is_none() || st.v1.is_none()) && first.is_none() {
                first = Some((r, "uncommitted read with a missing value".into()));
            }
        }
    }
    v(SlotProperty::ContendedValueDetection, checked, first);

    let distinct_values = values[0] != values[1];
    let (mut checked, mut first) = (0, None);
    if let Some(r0) = reads.iter().position(|st| st.s.is_some()) {
        let s0 = reads[r0].s.expect("committed");
        let v0 = reads[r0].value(s0).cloned();
        for (r, st) in reads.iter().enumerate().skip(r0 + 1) {
            checked += 1;
            let bad = match st.s {
                None => Some("status reverted to ⊥".to_string()),
                Some(s) if distinct_values && s != s0 => Some(format!("index changed {s0} -> {s}")),
                Some(s) if st.value(s).cloned() != v0 => {
                    Some("committed value changed".to_string())
                }
                _ => None,
            };
            if let (Some(d), None) = (bad, &first) {
                first = Some((r, d));
            }
        }
    }
    v(SlotProperty::Persistency, checked, first);

    let (mut checked, mut first) = (0, None);
    for (r, st) in reads.iter().enumerate() {
        if after(r, e[0]) && after(r, e[1]) {
            checked += 1;
            if st.s.is_none() && first.is_none() {
                first = Some((r, "both submissions ended, status ⊥".into()));
            }
        }
    }
    v(SlotProperty::Commitment, checked, first);

    let (mut checked, mut first) = (0, None);
    for i in 0..2 {
        if e[i] != inf && e[i] < b[1 - i] {
            for (r, st) in reads.iter().enumerate() {
                if after(r, e[i]) {
                    checked += 1;
                    if st.s != Some(i) && first.is_none() {
                        first = Some((
                            r,
                            format!("p{i} finished uncontended, read returned {:?}", st.s),
                        ));
                    }
                }
            }
        }
    }
    v(SlotProperty::NoContentionCommitment, checked, first);

    let (mut checked, mut first) = (0, None);
    let both_submitted = times.b[0].is_some() && times.b[1].is_some();
    if !distinct_values && both_submitted {
        let m = e[0].min(e[1]);
        for (r, st) in reads.iter().enumerate() {
            if after(r, m) {
                checked += 1;
                if st.s.is_none() && first.is_none() {
                    first = Some((r, "equal values, one submission ended, status ⊥".into()));
                }
            }
        }
    }
    v(SlotProperty::CommonValueCommitment, checked, first);

    Ok(SlotReport {
        slot,
        times,
        verdicts,
    })
}

/// Aggregate of the exhaustive slot check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExhaustiveSlotReport {
    pub value_pairs: Vec<(i64, i64)>,
    pub schedules: usize,
    pub crash_free_schedules: usize,
    /// Schedules passing each property, in [`SlotProperty::ALL`] order.
    pub passes: Vec<(SlotProperty, usize)>,
    /// Schedules where the property constrained at least one read.
    pub exercised: Vec<(SlotProperty, usize)>,
    pub max_claims: usize,
    pub first_failure: Option<(SlotProperty, EventLog<SlotCell<i64>>, usize, String)>,
}

impl ExhaustiveSlotReport {
    pub fn all_pass(&self) -> bool {
        self.passes.iter().all(|(_, c)| *c == self.schedules) && self.max_claims <= 1
    }
}

/// Runs every interleaving, with and without a crash, of two single-slot
/// submits for each value pair and checks all properties at every read point.
pub fn check_slot_exhaustive(
    value_pairs: &[(i64, i64)],
    max_events: usize,
    rule: StatusRule,
) -> Result<ExhaustiveSlotReport> {
    let mut report = ExhaustiveSlotReport {
        value_pairs: value_pairs.to_vec(),
        schedules: 0,
        crash_free_schedules: 0,
        passes: SlotProperty::ALL.iter().map(|p| (*p, 0)).collect(),
        exercised: SlotProperty::ALL.iter().map(|p| (*p, 0)).collect(),
        max_claims: 0,
        first_failure: None,
    };
    for &(a, b) in value_pairs {
        let programs = [
            SubmitProgram::new(0, vec![(0, a)])?,
            SubmitProgram::new(1, vec![(0, b)])?,
        ];
        let mut err = None;
        for_each_interleaving(programs, max_events, true, |ex| {
            if err.is_some() {
                return;
            }
            report.schedules += 1;
            if ex.log.crashed().is_none() {
                report.crash_free_schedules += 1;
            }
            let claims = ex
                .log
                .events
                .iter()
                .filter(|e| {
                    matches!(
                        &e.kind,
                        EventKind::Write {
                            value: SlotCell::Flag(Flag::Claim),
                            ..
                        }
                    )
                })
                .count();
            report.max_claims = report.max_claims.max(claims);
            match check_slot_properties(&ex.log, 0, [&a, &b], rule) {
                Ok(r) => {
                    for (k, v) in r.verdicts.iter().enumerate() {
                        if v.pass {
                            report.passes[k].1 += 1;
                        } else if report.first_failure.is_none() {
                            report.first_failure = Some((
                                v.property,
                                ex.log.clone(),
                                v.violation_at.unwrap_or(0),
                                v.detail.clone().unwrap_or_default(),
                            ));
                        }
                        if v.reads_checked > 0 {
                            report.exercised[k].1 += 1;
                        }
                    }
                }
                Err(e) => err = Some(e),
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(report)
}
