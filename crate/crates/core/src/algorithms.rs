//! Demonstration robot algorithms. None of them tolerates a Byzantine robot;
//! they exist to drive the simulator.

use crate::error::{Error, Result};
use crate::formations::{best_fit, FormationKind};
use crate::geometry::{rat, LocationMultiset, Point};
use crate::model::{max_multiplicity, InternalState, RobotAlgorithm};

/// Never moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct StayPut;

impl RobotAlgorithm for StayPut {
    fn name(&self) -> &str {
        "stay-put"
    }

    fn compute(
        &self,
        _: usize,
        _: &LocationMultiset,
        state: &InternalState,
    ) -> (Point, InternalState) {
        (Point::origin(), state.clone())
    }
}

/// Moves to the most populated observed point.
#[derive(Debug, Clone, Copy, Default)]
pub struct MoveToMax;

impl RobotAlgorithm for MoveToMax {
    fn name(&self) -> &str {
        "move-to-max"
    }

    fn compute(
        &self,
        _: usize,
        obs: &LocationMultiset,
        state: &InternalState,
    ) -> (Point, InternalState) {
        let dest = max_multiplicity(obs)
            .map(|(p, _)| p)
            .unwrap_or_else(|_| Point::origin());
        (dest, state.clone())
    }
}

/// Moves to the barycenter of all observed robots.
#[derive(Debug, Clone, Copy, Default)]
pub struct CenterOfGravity;

impl RobotAlgorithm for CenterOfGravity {
    fn name(&self) -> &str {
        "center-of-gravity"
    }

    fn compute(
        &self,
        _: usize,
        obs: &LocationMultiset,
        state: &InternalState,
    ) -> (Point, InternalState) {
        if obs.is_empty() {
            return (Point::origin(), state.clone());
        }
        let k = rat(obs.len() as i64);
        let (sx, sy) = obs
            .iter()
            .fold((rat(0), rat(0)), |(sx, sy), p| (sx + &p.x, sy + &p.y));
        let dest = Point::new(sx / &k, sy / &k);
        (dest, state.clone())
    }
}

/// Stays when it sits alone on the best-fitting line of the observation,
/// otherwise moves to that line's canonical free point.
#[derive(Debug, Clone, Copy, Default)]
pub struct LineFormer;

impl RobotAlgorithm for LineFormer {
    fn name(&self) -> &str {
        "line-former"
    }

    fn compute(
        &self,
        _: usize,
        obs: &LocationMultiset,
        state: &InternalState,
    ) -> (Point, InternalState) {
        let fit = best_fit(FormationKind::Line, obs).expect("line family always has a fit");
        let me = Point::origin();
        let on_fit = fit.pattern.contains(&me) && obs.multiplicity(&me) == 1;
        if on_fit {
            return (me, state.clone());
        }
        let support = fit.support.expect("line fits carry a support");
        let seeds: Vec<Point> = obs
            .distinct()
            .into_iter()
            .filter(|p| support.contains(p))
            .collect();
        let dest = support.completion_point(&seeds, obs);
        (dest, state.clone())
    }
}

pub const ALGORITHM_NAMES: [&str; 4] = [
    "stay-put",
    "move-to-max",
    "center-of-gravity",
    "line-former",
];

/// Looks up a shipped algorithm by its registered name.
pub fn algorithm_by_name(name: &str) -> Result<Box<dyn RobotAlgorithm>> {
    match name {
        "stay-put" => Ok(Box::new(StayPut)),
        "move-to-max" => Ok(Box::new(MoveToMax)),
        "center-of-gravity" => Ok(Box::new(CenterOfGravity)),
        "line-former" => Ok(Box::new(LineFormer)),
        other => Err(Error::UnknownAlgorithm(other.to_string())),
    }
}

/// Absolute destination and post-state of robot `i` activated in `config`.
pub(crate) fn absolute_move(
    alg: &dyn RobotAlgorithm,
    config: &crate::model::Configuration,
    i: usize,
) -> Result<(Point, InternalState)> {
    let obs = crate::model::observe(config, i)?;
    let me = config.get(i)?;
    let (dest, state) = alg.compute(i, &obs, &me.state);
    Ok((&me.location + &dest, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{observe, Configuration};

    #[test]
    fn move_to_max_heads_for_crowd() {
        let c = Configuration::from_points(vec![
            Point::int(0, 0),
            Point::int(0, 0),
            Point::int(0, 0),
            Point::int(5, 5),
        ])
        .unwrap();
        let obs = observe(&c, 3).unwrap();
        let (dest, _) = MoveToMax.compute(3, &obs, &InternalState::empty());
        assert_eq!(&Point::int(5, 5) + &dest, Point::int(0, 0));
    }

    #[test]
    fn center_of_gravity_is_exact() {
        let c = Configuration::from_points(vec![
            Point::int(0, 0),
            Point::int(1, 0),
            Point::int(0, 1),
            Point::int(0, 0),
        ])
        .unwrap();
        let (p, _) = absolute_move(&CenterOfGravity, &c, 0).unwrap();
        assert_eq!(
            p,
            Point::new(crate::geometry::ratio(1, 4), crate::geometry::ratio(1, 4))
        );
    }

    #[test]
    fn line_former_keeps_a_formed_line() {
        let c = Configuration::from_points((0..5).map(|i| Point::int(i, 0)).collect()).unwrap();
        for i in 0..5 {
            let (p, _) = absolute_move(&LineFormer, &c, i).unwrap();
            assert_eq!(&p, c.location(i).unwrap());
        }
    }

    #[test]
    fn registry_knows_every_name() {
        for name in ALGORITHM_NAMES {
            assert_eq!(algorithm_by_name(name).unwrap().name(), name);
        }
        assert!(algorithm_by_name("teleport").is_err());
    }
}
