//! Command implementations behind the `bgsim` binary. Each command returns an
//! exit code and the text it prints; files are written with stable field
//! order so identical invocations produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::algorithms::algorithm_by_name;
use crate::analysis::{verify_trace, REPORT_HEADER};
use crate::engine::{check_k_bounded, step, ExecutionTrace, Schedule};
use crate::error::{Error, Result};
use crate::formations::{check_bivalency_witness, FormationKind, FormationSpec, WitnessOptions};
use crate::geometry::{rat, LocationMultiset, Point};
use crate::memory::{CrashPoint, InterleavingAdversary, Strategy};
use crate::model::{is_legitimate_now, Configuration};
use crate::reduction::{run_reduction, ReductionSetup, ReductionTrace};
use crate::slot::{check_slot_exhaustive, StatusRule};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_BOUND: u8 = 3;

/// Exit code plus printed output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommandResult {
    pub exit: u8,
    pub stdout: String,
}

impl CommandResult {
    fn json(exit: u8, value: &impl Serialize) -> Result<Self> {
        Ok(CommandResult {
            exit,
            stdout: to_json(value)?,
        })
    }

    /// Usage or parse failure.
    pub fn usage(err: &Error) -> Self {
        CommandResult {
            exit: EXIT_USAGE,
            stdout: format!("error: {err}\n"),
        }
    }
}

/// Exit code for an error raised before any property was checked.
pub fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::ReferenceDiverged(_) => EXIT_BOUND,
        Error::CorruptedTrace(_)
        | Error::MalformedLog(_)
        | Error::DoubleSubmission(_)
        | Error::UnknownTimestamp(_) => EXIT_VIOLATION,
        _ => EXIT_USAGE,
    }
}

pub fn to_json(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Parses `a,b` with both entries in {0, 1}.
pub fn parse_proposals(s: &str) -> Result<[u8; 2]> {
    let bad = || Error::Parse(format!("proposals must look like `0,1`, got `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let a: u8 = a.trim().parse().map_err(|_| bad())?;
    let b: u8 = b.trim().parse().map_err(|_| bad())?;
    if a > 1 || b > 1 {
        return Err(Error::Config(format!(
            "proposals must be 0 or 1, got {a},{b}"
        )));
    }
    Ok([a, b])
}

/// Parses `p:k`: process `p` crashes after `k` primitives.
pub fn parse_crash(s: &str) -> Result<CrashPoint> {
    let bad = || Error::Parse(format!("crash must look like `1:3`, got `{s}`"));
    let (p, k) = s.split_once(':').ok_or_else(bad)?;
    let process: usize = p.trim().parse().map_err(|_| bad())?;
    if process > 1 {
        return Err(Error::Config(format!(
            "no process {process}; processes are 0 and 1"
        )));
    }
    Ok(CrashPoint {
        process,
        after: k.trim().parse().map_err(|_| bad())?,
    })
}

/// Parses `5:7,9:9` into value pairs.
pub fn parse_value_pairs(s: &str) -> Result<Vec<(i64, i64)>> {
    s.split(',')
        .map(|pair| {
            let bad = || Error::Parse(format!("value pair must look like `5:7`, got `{pair}`"));
            let (a, b) = pair.split_once(':').ok_or_else(bad)?;
            Ok((
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

/// One reduction run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub proposals: [u8; 2],
    pub algorithm: String,
    pub seed: u64,
    /// Longest burst for the bursty scheduler; `None` picks uniformly.
    pub max_burst: Option<usize>,
    pub crash: Option<CrashPoint>,
    pub formation: Option<FormationKind>,
    pub max_slots: Option<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 4,
            proposals: [0, 1],
            algorithm: "move-to-max".into(),
            seed: 0,
            max_burst: None,
            crash: None,
            formation: None,
            max_slots: None,
        }
    }
}

impl ScenarioConfig {
    pub fn adversary(&self) -> InterleavingAdversary {
        let strategy = match self.max_burst {
            Some(max_burst) => Strategy::Bursty {
                seed: self.seed,
                max_burst,
            },
            None => Strategy::SeededRandom { seed: self.seed },
        };
        InterleavingAdversary {
            strategy,
            crash: self.crash,
        }
    }

    pub fn setup(&self) -> Result<ReductionSetup> {
        match self.formation {
            None => {
                ReductionSetup::gathering(self.n, self.proposals, &self.algorithm, self.max_slots)
            }
            Some(f) => ReductionSetup::formation(
                self.n,
                self.proposals,
                &self.algorithm,
                f,
                self.max_slots,
            ),
        }
    }

    pub fn run(&self) -> Result<ReductionTrace> {
        if self.n <= 2 {
            return Err(Error::InvalidSystemSize(self.n));
        }
        run_reduction(&self.setup()?, &self.adversary())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReduceSummary {
    pub decisions: [Option<u8>; 2],
    pub crashed: Option<usize>,
    pub survivor_decided: Option<bool>,
    pub exhausted: [bool; 2],
    pub events: usize,
    pub slots: usize,
    pub committed: usize,
    pub uncommitted: usize,
    pub trace: Option<String>,
}

pub fn summarize(trace: &ReductionTrace, out: Option<&Path>) -> ReduceSummary {
    let committed = trace.slots.iter().filter(|s| s.status.is_some()).count();
    ReduceSummary {
        decisions: trace.decision_values(),
        crashed: trace.crashed,
        survivor_decided: trace.crashed.map(|c| trace.decisions[1 - c].is_some()),
        exhausted: trace.exhausted,
        events: trace.events.len(),
        slots: trace.slots.len(),
        committed,
        uncommitted: trace.slots.len() - committed,
        trace: out.map(|p| p.display().to_string()),
    }
}

/// Runs one reduction, optionally writing the trace; exit 3 if a live
/// process ran out of slots.
pub fn cmd_reduce(cfg: &ScenarioConfig, out: Option<&Path>) -> CommandResult {
    let run = || -> Result<CommandResult> {
        let trace = cfg.run()?;
        if let Some(p) = out {
            write_file(p, &to_json(&trace)?)?;
        }
        let exit = if trace.hit_bound() {
            EXIT_BOUND
        } else {
            EXIT_PASS
        };
        CommandResult::json(exit, &summarize(&trace, out))
    };
    run().unwrap_or_else(|e| CommandResult {
        exit: exit_code_for(&e),
        stdout: format!("error: {e}\n"),
    })
}

/// Where `verify-trace` writes its report.
pub fn report_path(trace: &Path) -> PathBuf {
    trace.with_extension("report.json")
}

/// Checks a trace file; exit 0 iff every check passes.
pub fn cmd_verify_trace(path: &Path, out: Option<&Path>) -> CommandResult {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            return CommandResult::usage(&Error::Parse(format!(
                "cannot read {}: {e}",
                path.display()
            )))
        }
    };
    let trace: ReductionTrace = match serde_json::from_str(&text) {
        Ok(t) => t,
        Err(e) => return CommandResult::usage(&Error::Parse(format!("{}: {e}", path.display()))),
    };
    let report_file = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| report_path(path));
    let (exit, body) = match verify_trace(&trace) {
        Ok(r) => {
            let exit = if r.pass { EXIT_PASS } else { EXIT_VIOLATION };
            (
                exit,
                serde_json::to_value(&r).map_err(|e| Error::Parse(e.to_string())),
            )
        }
        Err(e) => {
            let exit = exit_code_for(&e);
            if exit == EXIT_USAGE {
                return CommandResult::usage(&e);
            }
            (
                exit,
                Ok(json!({ "header": REPORT_HEADER, "pass": false, "error": e.to_string() })),
            )
        }
    };
    let result = body.and_then(|b| {
        let text = to_json(&b)?;
        write_file(&report_file, &text)?;
        Ok(verify_summary(&b, &report_file))
    });
    match result {
        Ok(stdout) => CommandResult { exit, stdout },
        Err(e) => CommandResult::usage(&e),
    }
}

fn verify_summary(report: &serde_json::Value, file: &Path) -> String {
    let mut s = format!("{}\n", REPORT_HEADER);
    for part in ["admissibility", "consensus"] {
        if let Some(checks) = report[part]["checks"].as_array() {
            for c in checks {
                let pass = c["pass"].as_bool().unwrap_or(false);
                s.push_str(&format!(
                    "{} {} ({} checked)",
                    if pass { "PASS" } else { "FAIL" },
                    c["name"].as_str().unwrap_or("?"),
                    c["checked"]
                ));
                if let Some(v) = c["violations"].as_array().and_then(|v| v.first()) {
                    s.push_str(&format!(": {}", v["detail"].as_str().unwrap_or("")));
                }
                s.push('\n');
            }
        }
    }
    if let Some(k) = report["admissibility"]["k"].as_u64() {
        s.push_str(&format!("observed k = {k}\n"));
    }
    if let Some(e) = report["error"].as_str() {
        s.push_str(&format!("FAIL trace: {e}\n"));
    }
    s.push_str(&format!("report: {}\n", file.display()));
    s
}

/// Exhaustive slot check over all schedules of two single-slot submits.
pub fn cmd_check_slot(
    max_events: usize,
    pairs: &[(i64, i64)],
    rule: StatusRule,
    out: Option<&Path>,
) -> CommandResult {
    let run = || -> Result<CommandResult> {
        let r = check_slot_exhaustive(pairs, max_events, rule)?;
        let text = to_json(&r)?;
        if let Some(p) = out {
            write_file(p, &text)?;
        }
        let exit = if r.all_pass() {
            EXIT_PASS
        } else {
            EXIT_VIOLATION
        };
        let mut s = format!(
            "{} schedules ({} crash-free) over {} value pairs\n",
            r.schedules,
            r.crash_free_schedules,
            r.value_pairs.len()
        );
        for ((p, passed), (_, ex)) in r.passes.iter().zip(&r.exercised) {
            s.push_str(&format!(
                "{:?}: {passed}/{} pass, exercised in {ex}\n",
                p, r.schedules
            ));
        }
        if let Some((p, _, at, why)) = &r.first_failure {
            s.push_str(&format!("first failure: {p:?} at read point {at}: {why}\n"));
        }
        Ok(CommandResult { exit, stdout: s })
    };
    run().unwrap_or_else(|e| CommandResult::usage(&e))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub algorithm: String,
    pub seed: u64,
    pub rounds: usize,
    pub gathered: bool,
    pub k: usize,
    pub trace: ExecutionTrace,
}

fn grid_point(rng: &mut ChaCha8Rng) -> Point {
    Point::new(rat(rng.random_range(0..8)), rat(rng.random_range(0..8)))
}

/// Raw robot run: random integer start, correct robots activated in
/// round-robin order, and every `n` rounds the Byzantine robot jumps to a
/// random grid point. Stops once the correct robots gather.
pub fn simulate(
    n: usize,
    algorithm: &str,
    seed: u64,
    max_rounds: usize,
) -> Result<SimulationReport> {
    if n <= 2 {
        return Err(Error::InvalidSystemSize(n));
    }
    let alg = algorithm_by_name(algorithm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0 = Configuration::from_points((0..=n).map(|_| grid_point(&mut rng)).collect())?;
    let mut configs = vec![c0];
    let mut schedule = Schedule::default();
    for round in 0..max_rounds {
        let last = configs.last().expect("non-empty");
        if is_legitimate_now(last) {
            break;
        }
        let (activated, byz) = if round % (n + 1) == n {
            (vec![n], Some(grid_point(&mut rng)))
        } else {
            (vec![round % (n + 1)], None)
        };
        let next = step(last, &activated, byz.as_ref(), alg.as_ref())?;
        schedule.push(activated, byz);
        configs.push(next);
    }
    let gathered = is_legitimate_now(configs.last().expect("non-empty"));
    Ok(SimulationReport {
        algorithm: algorithm.to_string(),
        seed,
        rounds: schedule.len(),
        gathered,
        k: check_k_bounded(&schedule, n),
        trace: ExecutionTrace {
            n,
            configs,
            schedule,
        },
    })
}

/// Exit 3 if the robots did not gather within `max_rounds`.
pub fn cmd_simulate(
    n: usize,
    algorithm: &str,
    seed: u64,
    max_rounds: usize,
    out: Option<&Path>,
) -> CommandResult {
    let run = || -> Result<CommandResult> {
        let r = simulate(n, algorithm, seed, max_rounds)?;
        if let Some(p) = out {
            write_file(p, &to_json(&r)?)?;
        }
        let exit = if r.gathered { EXIT_PASS } else { EXIT_BOUND };
        CommandResult::json(
            exit,
            &json!({ "algorithm": r.algorithm, "seed": r.seed, "rounds": r.rounds, "gathered": r.gathered, "k": r.k }),
        )
    };
    run().unwrap_or_else(|e| CommandResult::usage(&e))
}

/// Default witness pattern and translation for a family at `arity` robots.
/// Circles support up to twelve robots.
pub fn default_witness(kind: FormationKind, arity: usize) -> Result<(LocationMultiset, Point)> {
    if kind == FormationKind::Circle && arity > 12 {
        return Err(Error::Config(format!(
            "no default circle witness for {arity} robots"
        )));
    }
    Ok(match kind {
        FormationKind::Line => (
            (0..arity as i64).map(|x| Point::int(x, 0)).collect(),
            Point::int(0, 1),
        ),
        FormationKind::Circle => {
            let ring = [
                (5, 0),
                (0, 5),
                (-5, 0),
                (0, -5),
                (3, 4),
                (-3, 4),
                (-3, -4),
                (3, -4),
                (4, 3),
                (-4, 3),
                (-4, -3),
                (4, -3),
            ];
            let pts = ring
                .iter()
                .take(arity)
                .map(|&(x, y)| Point::int(x, y))
                .collect();
            (pts, Point::int(0, 1))
        }
        FormationKind::TwoGathering => (
            (0..arity)
                .map(|i| {
                    if i < arity / 2 {
                        Point::int(1, 1)
                    } else {
                        Point::origin()
                    }
                })
                .collect(),
            Point::int(3, 0),
        ),
    })
}

/// Bivalency witness check for one family; exit 0 iff the family behaves as
/// a bivalent family (certified witness) or, for 2-gathering, the pattern and
/// its translate are joined by a verified chain.
pub fn cmd_formations(
    kind: FormationKind,
    arity: usize,
    opts: &WitnessOptions,
    out: Option<&Path>,
) -> CommandResult {
    let run = || -> Result<CommandResult> {
        let spec = FormationSpec::new(kind, arity)?;
        let (p, x) = default_witness(kind, arity)?;
        let r = check_bivalency_witness(&spec, &p, &x, opts)?;
        let ok = match kind {
            FormationKind::TwoGathering => match &r.chain {
                Some(c) => c.verify(&spec).is_ok(),
                None => false,
            },
            _ => r.certified,
        };
        let text = to_json(&r)?;
        if let Some(path) = out {
            write_file(path, &text)?;
        }
        Ok(CommandResult {
            exit: if ok { EXIT_PASS } else { EXIT_VIOLATION },
            stdout: text,
        })
    };
    run().unwrap_or_else(|e| CommandResult::usage(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsers() {
        assert_eq!(parse_proposals("0, 1").unwrap(), [0, 1]);
        assert!(matches!(parse_proposals("0,2"), Err(Error::Config(_))));
        assert!(matches!(parse_proposals("01"), Err(Error::Parse(_))));
        assert_eq!(
            parse_crash("1:3").unwrap(),
            CrashPoint {
                process: 1,
                after: 3
            }
        );
        assert!(parse_crash("2:3").is_err());
        assert_eq!(parse_value_pairs("5:7,9:9").unwrap(), vec![(5, 7), (9, 9)]);
        assert!(parse_value_pairs("5").is_err());
    }

    #[test]
    fn reduce_rejects_small_n() {
        let cfg = ScenarioConfig {
            n: 2,
            ..Default::default()
        };
        let r = cmd_reduce(&cfg, None);
        assert_eq!(r.exit, EXIT_USAGE);
        assert!(r.stdout.contains("n > 2"), "{}", r.stdout);
    }

    #[test]
    fn default_witnesses_are_members() {
        for kind in [
            FormationKind::Line,
            FormationKind::Circle,
            FormationKind::TwoGathering,
        ] {
            for arity in 4..=9 {
                let (p, _) = default_witness(kind, arity).unwrap();
                let spec = FormationSpec::new(kind, arity).unwrap();
                assert_eq!(p.len(), arity);
                assert!(spec.membership(&p).unwrap(), "{kind} {arity}");
            }
        }
    }

    #[test]
    fn simulate_move_to_max_gathers() {
        let r = simulate(4, "move-to-max", 3, 200).unwrap();
        assert!(r.gathered);
        assert_eq!(r.trace.configs.len(), r.rounds + 1);
        let again = simulate(4, "move-to-max", 3, 200).unwrap();
        assert_eq!(to_json(&r).unwrap(), to_json(&again).unwrap());
        assert!(!simulate(4, "stay-put", 3, 50).unwrap().gathered);
    }
}
