//! Post-hoc analysis of reduction traces: committers, critical slots,
//! validators, simulated configurations, and the checks that the simulated
//! robot execution is admissible and that consensus properties hold.
//!
//! All checks are witnesses for one trace, not proofs of the general claims.
//!
//! Conventions. `t^i_j` is the timestamp of process `i`'s getview snapshot
//! before slot `j` (defined for `j >= n`) and `C^i_j` the configuration that
//! getview built from it. `c(j)` is the slot's final status index, or the
//! only process whose submission completed if the slot never committed.
//! Slot `j` is critical when it was still uncommitted in the getview of
//! `p_{c(j+n)}` before slot `j + n` and `c(j) != c(j+n)`; the last `n` slots
//! of the horizon are provisionally non-critical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::algorithms::algorithm_by_name;
use crate::engine::{check_k_bounded, check_step, ExecutionTrace, Schedule};
use crate::error::{Error, Result};
use crate::memory::{EventKind, Replay};

use crate::model::{swap, Configuration, LocalState, RobotAlgorithm};
use crate::reduction::{alpha, decode, derive_slots, getview, ReductionTrace, SlotRecord, View};
use crate::slot::{decode_cell, SlotCell};

pub const REPORT_HEADER: &str =
    "Checks below are per-trace witnesses of the admissibility and consensus lemmas, not proofs of them.";

/// Timestamps of each process's getview snapshots, keyed by slot.
pub fn getview_times(trace: &ReductionTrace) -> Result<[BTreeMap<usize, usize>; 2]> {
    let n = trace.setup.n;
    let mut out = [BTreeMap::new(), BTreeMap::new()];
    for (i, times) in out.iter_mut().enumerate() {
        let mut prev_was_val_write = false;
        let mut next_slot = n;
        for e in trace.events.of_process(i) {
            match &e.kind {
                EventKind::Snapshot { .. } => {
                    if !prev_was_val_write {
                        times.insert(next_slot, e.timestamp);
                        next_slot += 1;
                    }
                    prev_was_val_write = false;
                }
                EventKind::Write { cell, value } => {
                    let (j, is_flag) = decode_cell(cell);
                    prev_was_val_write = !is_flag;
                    if !is_flag && j >= n && times.get(&j).is_none() {
                        return Err(Error::CorruptedTrace(format!(
                            "p{i} submitted to slot {j} without a getview"
                        )));
                    }
                    if matches!(
                        (is_flag, value),
                        (false, SlotCell::Flag(_)) | (true, SlotCell::Val(_))
                    ) {
                        return Err(Error::CorruptedTrace(format!("mistyped cell in slot {j}")));
                    }
                }
                EventKind::Crash => {}
            }
        }
    }
    Ok(out)
}

/// Everything derived from one trace.
pub struct TraceAnalysis<'a> {
    pub trace: &'a ReductionTrace,
    pub n: usize,
    pub slots: Vec<SlotRecord>,
    pub times: [BTreeMap<usize, usize>; 2],
    /// `C^i_j` for every getview in the log.
    pub views: [BTreeMap<usize, View>; 2],
    /// Largest slot with a committer.
    pub horizon: Option<usize>,
    alg: Box<dyn RobotAlgorithm>,
}

impl<'a> TraceAnalysis<'a> {
    pub fn new(trace: &'a ReductionTrace) -> Result<Self> {
        trace.events.validate()?;
        let n = trace.setup.n;
        let alg = algorithm_by_name(&trace.setup.algorithm)?;
        let slots = derive_slots(n, &trace.events)?;
        let times = getview_times(trace)?;
        let mut order: Vec<(usize, usize, usize)> = Vec::new();
        for (i, t) in times.iter().enumerate() {
            order.extend(t.iter().map(|(&j, &ts)| (ts, i, j)));
        }
        order.sort_unstable();
        let mut replay = Replay::new(&trace.events);
        let mut views = [BTreeMap::new(), BTreeMap::new()];
        for (ts, i, j) in order {
            let mem = replay.view_at(ts)?;
            views[i].insert(j, getview(i, j, n, mem, &trace.setup.target)?);
        }
        let horizon = slots.iter().rposition(|s| s.committer.is_some());
        Ok(TraceAnalysis {
            trace,
            n,
            slots,
            times,
            views,
            horizon,
            alg,
        })
    }

    pub fn committer(&self, j: usize) -> Result<usize> {
        self.slots
            .get(j)
            .and_then(|s| s.committer)
            .ok_or_else(|| Error::CorruptedTrace(format!("slot {j} has no committer")))
    }

    fn view(&self, i: usize, j: usize) -> Result<&View> {
        self.views[i]
            .get(&j)
            .ok_or_else(|| Error::CorruptedTrace(format!("p{i} took no getview before slot {j}")))
    }

    fn submission(&self, i: usize, j: usize) -> Result<&LocalState> {
        self.slots
            .get(j)
            .and_then(|s| s.submissions[i].as_ref())
            .map(|s| &s.value)
            .ok_or_else(|| Error::CorruptedTrace(format!("p{i} never submitted to slot {j}")))
    }

    /// Criticality of slot `j` against `horizon`.
    pub fn critical(&self, j: usize, horizon: usize) -> Result<bool> {
        if j + self.n > horizon {
            return Err(Error::CriticalityUndefined { slot: j, horizon });
        }
        let later = self.committer(j + self.n)?;
        let uncommitted = self.view(later, j + self.n)?.uncommitted == Some(j);
        Ok(uncommitted && self.committer(j)? != later)
    }

    /// `val(j)` for `0 <= j <= horizon`, by backward recursion; the last `n`
    /// slots fall back to their committers.
    pub fn validators(&self, horizon: usize) -> Result<Vec<usize>> {
        let mut val = vec![0; horizon + 1];
        for j in (0..=horizon).rev() {
            let crit = j + self.n <= horizon && self.critical(j, horizon)?;
            val[j] = if crit {
                val[j + self.n]
            } else {
                self.committer(j)?
            };
        }
        Ok(val)
    }

    /// `C_j`: the validator's getview, with the uncommitted slot's two values
    /// swapped when the validator's own value is not the one that counts.
    pub fn simulated_configuration(
        &self,
        j: usize,
        val: &[usize],
    ) -> Result<(Configuration, usize)> {
        let i = val[j];
        let v = self.view(i, j)?;
        let gamma = match v.uncommitted {
            Some(k) if val[k] != i => alpha(k, self.n),
            _ => self.n,
        };
        Ok((swap(&v.config, gamma)?.with_normalized_byzantine(), gamma))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotMeta {
    pub index: usize,
    pub robot: usize,
    pub committer: Option<usize>,
    pub entry: [Option<usize>; 2],
    pub critical: bool,
    pub provisional: bool,
    pub validator: Option<usize>,
    pub swap: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub slot: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl Check {
    fn new(name: &str) -> Self {
        Check {
            name: name.to_string(),
            pass: true,
            checked: 0,
            violations: Vec::new(),
        }
    }

    fn test(&mut self, ok: bool, slot: Option<usize>, detail: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.pass = false;
            if self.violations.len() < 16 {
                self.violations.push(Violation {
                    slot,
                    detail: detail(),
                });
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub horizon: Option<usize>,
    pub slots: Vec<SlotMeta>,
    pub checks: Vec<Check>,
    pub derived: Option<ExecutionTrace>,
    pub centralized: bool,
    pub k: usize,
    pub k_within_n: bool,
    pub k_within_n_minus_1: bool,
    pub critical_slots: Vec<usize>,
    pub reassigned_slots: Vec<usize>,
}

impl AdmissibilityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Recomputes the simulated execution and checks `C_j ->α(j) C_{j+1}`,
/// `C_{j+1}[α(j)] = v_j` and `t_j < t_{j+1}` for every step, plus the helper
/// placement at fully committed windows and the scheduler bound.
pub fn check_lemma_admissible(trace: &ReductionTrace) -> Result<AdmissibilityReport> {
    let a = TraceAnalysis::new(trace)?;
    let n = a.n;
    let mut metadata = Check::new("metadata");
    for (j, s) in a.slots.iter().enumerate() {
        let recorded = trace.slots.get(j);
        metadata.test(recorded == Some(s), Some(j), || {
            format!("slot {j}: recorded metadata disagrees with the event log")
        });
    }
    metadata.test(trace.slots.len() == a.slots.len(), None, || {
        format!(
            "{} slots recorded, {} in the log",
            trace.slots.len(),
            a.slots.len()
        )
    });

    let mut step_check = Check::new("admissible-step");
    let mut submission = Check::new("validator-submission");
    let mut entry_order = Check::new("entry-order");
    let mut helper = Check::new("byzantine-helper");
    let mut meta = Vec::new();
    let mut configs = Vec::new();
    let mut critical_slots = Vec::new();
    let mut reassigned = Vec::new();

    let val = match a.horizon {
        Some(h) => a.validators(h)?,
        None => Vec::new(),
    };
    for (j, s) in a.slots.iter().enumerate() {
        let h = a.horizon.unwrap_or(0);
        let defined = a.horizon.is_some() && j + n <= h;
        let critical = defined && a.critical(j, h)?;
        if critical {
            critical_slots.push(j);
        }
        if val.get(j).is_some_and(|v| Some(*v) != s.committer) {
            reassigned.push(j);
        }
        meta.push(SlotMeta {
            index: j,
            robot: s.robot,
            committer: s.committer,
            entry: [a.times[0].get(&j).copied(), a.times[1].get(&j).copied()],
            critical,
            provisional: !defined,
            validator: val.get(j).copied(),
            swap: None,
        });
    }

    if let Some(h) = a.horizon.filter(|h| *h >= n) {
        for j in n..=h {
            let (c, gamma) = a.simulated_configuration(j, &val)?;
            meta[j].swap = Some(gamma);
            let v = a.view(val[j], j)?;
            if v.q {
                let want = trace.setup.target.helper(&c.correct_locations())?;
                helper.test(c.location(n)? == &want, Some(j), || {
                    format!(
                        "slot {j}: Byzantine entry {} instead of helper {want}",
                        c.location(n).unwrap()
                    )
                });
            }
            configs.push(c);
        }
        for j in n..h {
            let (cj, cn) = (&configs[j - n], &configs[j + 1 - n]);
            let chk = check_step(cj, cn, alpha(j, n), a.alg.as_ref());
            step_check.test(chk.ok, Some(j), || {
                format!(
                    "C_{j} -> C_{}: {}",
                    j + 1,
                    chk.diagnostic.clone().unwrap_or_default()
                )
            });
            let vj = a.submission(val[j], j)?;
            let got = &cn.robots()[alpha(j, n)];
            submission.test(got == vj, Some(j), || {
                format!(
                    "C_{}[{}] = {} but v_{j} = {}",
                    j + 1,
                    alpha(j, n),
                    got.location,
                    vj.location
                )
            });
            let tj = a.times[val[j]][&j];
            let tn = a.times[val[j + 1]][&(j + 1)];
            entry_order.test(tj < tn, Some(j), || {
                format!("t_{j} = {tj} is not before t_{} = {tn}", j + 1)
            });
        }
    }

    let derived =
        (!configs.is_empty()).then(|| derive_execution(n, a.horizon.unwrap_or(0), &configs));
    let (k, centralized) = derived
        .as_ref()
        .map(|d| (check_k_bounded(&d.schedule, n), d.schedule.is_centralized()))
        .unwrap_or((1, true));
    let mut sched = Check::new("scheduler-bound");
    sched.test(centralized, None, || {
        "derived schedule is not centralized".into()
    });
    sched.test(k <= n, None, || {
        format!("derived schedule is {k}-bounded, more than n = {n}")
    });

    Ok(AdmissibilityReport {
        horizon: a.horizon,
        slots: meta,
        checks: vec![metadata, step_check, submission, entry_order, helper, sched],
        derived,
        centralized,
        k,
        k_within_n: k <= n,
        k_within_n_minus_1: k < n,
        critical_slots,
        reassigned_slots: reassigned,
    })
}

/// Execution trace over `C_n ..= C_h`: one round per correct activation and
/// one per Byzantine relocation.
fn derive_execution(n: usize, h: usize, configs: &[Configuration]) -> ExecutionTrace {
    let mut out = vec![configs[0].clone()];
    let mut schedule = Schedule::default();
    for (idx, w) in configs.windows(2).enumerate() {
        let j = n + idx;
        let x = alpha(j, n);
        let (cur, next) = (&w[0], &w[1]);
        let moved = next.location(n).ok() != cur.location(n).ok();
        if moved {
            let mut mid = cur.clone();
            mid.set(x, next.robots()[x].clone()).expect("in range");
            out.push(mid);
            schedule.push(vec![x], None);
            out.push(next.clone());
            schedule.push(vec![n], next.location(n).ok().cloned());
        } else {
            out.push(next.clone());
            schedule.push(vec![x], None);
        }
    }
    debug_assert_eq!(configs.len(), h + 1 - n);
    ExecutionTrace {
        n,
        configs: out,
        schedule,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Every live process decided.
    Decided,
    /// A live process ran out of slots.
    BoundReached,
    /// A live process stopped without deciding or exhausting its budget.
    Incomplete,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub decisions: [Option<u8>; 2],
    pub crashed: Option<usize>,
    pub checks: Vec<Check>,
    pub termination: Termination,
}

impl ConsensusReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Agreement, validity, and a replay of each decision from its getview;
/// termination is reported, not required.
pub fn check_consensus_properties(trace: &ReductionTrace) -> Result<ConsensusReport> {
    let a = TraceAnalysis::new(trace)?;
    let d = trace.decision_values();
    let mut agreement = Check::new("agreement");
    if let [Some(x), Some(y)] = d {
        agreement.test(x == y, None, || format!("p0 decided {x}, p1 decided {y}"));
    }
    let mut validity = Check::new("validity");
    let [p0, p1] = trace.setup.proposals;
    if p0 == p1 {
        for (i, v) in d.iter().enumerate() {
            if let Some(v) = v {
                validity.test(*v == p0, None, || {
                    format!("p{i} decided {v}, both proposed {p0}")
                });
            }
        }
    }
    let mut replay = Check::new("decision-replay");
    for (i, dec) in trace.decisions.iter().enumerate() {
        let Some(out) = dec else { continue };
        let ok = match a.views[i].get(&out.slot) {
            Some(v) => {
                let legit = v.q && trace.setup.target.is_legitimate(&v.config);
                let reached = trace.setup.target.reached(&v.config).ok();
                legit
                    && reached.as_ref() == Some(&out.reached)
                    && decode(&out.reached, &trace.setup.reference) == out.value
                    && a.times[i].keys().next_back() == Some(&out.slot)
            }
            None => false,
        };
        replay.test(ok, Some(out.slot), || {
            format!("p{i}'s decision does not follow from its last getview")
        });
    }
    let live: Vec<usize> = (0..2).filter(|i| trace.crashed != Some(*i)).collect();
    let termination = if live.iter().all(|&i| d[i].is_some()) {
        Termination::Decided
    } else if live.iter().any(|&i| d[i].is_none() && trace.exhausted[i]) {
        Termination::BoundReached
    } else {
        Termination::Incomplete
    };
    let mut complete = Check::new("run-complete");
    complete.test(termination != Termination::Incomplete, None, || {
        "a live process stopped without deciding or exhausting its slots".into()
    });
    Ok(ConsensusReport {
        decisions: d,
        crashed: trace.crashed,
        checks: vec![agreement, validity, replay, complete],
        termination,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub header: String,
    pub pass: bool,
    pub admissibility: AdmissibilityReport,
    pub consensus: ConsensusReport,
}

/// All checks on one trace.
pub fn verify_trace(trace: &ReductionTrace) -> Result<VerificationReport> {
    let admissibility = check_lemma_admissible(trace)?;
    let consensus = check_consensus_properties(trace)?;
    Ok(VerificationReport {
        header: REPORT_HEADER.to_string(),
        pass: admissibility.all_pass() && consensus.all_pass(),
        admissibility,
        consensus,
    })
}

/// Committed values of all slots, as seen at the end of the trace.
pub fn committed_sequence(trace: &ReductionTrace) -> Vec<Option<LocalState>> {
    trace
        .slots
        .iter()
        .map(|s| {
            s.status
                .and_then(|i| s.submissions[i].as_ref().map(|x| x.value.clone()))
        })
        .collect()
}
