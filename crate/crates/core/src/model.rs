//! Robot local states, configurations and the observation semantics of the
//! ATOM model with one Byzantine robot.
//!
//! A configuration holds `n + 1` local states; index `n` is the Byzantine
//! robot. Observations are taken in the observer's local frame: the origin
//! is the observer's own position and the axes are shared by all robots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LocationMultiset, Point};

/// Algorithm-defined robot memory. Opaque to the model; compared by value and
/// serialized deterministically (object keys are kept sorted).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InternalState(pub serde_json::Value);

impl InternalState {
    pub fn empty() -> Self {
        InternalState(serde_json::Value::Null)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.0).expect("json values always serialize")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalState {
    pub state: InternalState,
    pub location: Point,
}

impl LocalState {
    pub fn at(location: Point) -> Self {
        LocalState {
            state: InternalState::empty(),
            location,
        }
    }
}

/// An `(n + 1)`-tuple of local states.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    robots: Vec<LocalState>,
}

impl Configuration {
    /// Builds a configuration; needs `n > 2` correct robots plus the Byzantine one.
    pub fn new(robots: Vec<LocalState>) -> Result<Self> {
        if robots.len() < 4 {
            return Err(Error::InvalidSystemSize(robots.len().saturating_sub(1)));
        }
        Ok(Configuration { robots })
    }

    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        Configuration::new(points.into_iter().map(LocalState::at).collect())
    }

    /// Number of correct robots; the Byzantine robot sits at index `n`.
    pub fn n(&self) -> usize {
        self.robots.len() - 1
    }

    pub fn len(&self) -> usize {
        self.robots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.robots.is_empty()
    }

    pub fn robots(&self) -> &[LocalState] {
        &self.robots
    }

    pub fn get(&self, i: usize) -> Result<&LocalState> {
        self.robots.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.robots.len(),
        })
    }

    pub fn set(&mut self, i: usize, s: LocalState) -> Result<()> {
        let len = self.robots.len();
        let slot = self
            .robots
            .get_mut(i)
            .ok_or(Error::IndexOutOfRange { index: i, len })?;
        *slot = s;
        Ok(())
    }

    pub fn location(&self, i: usize) -> Result<&Point> {
        self.get(i).map(|s| &s.location)
    }

    /// L(C) as a multiset.
    pub fn locations(&self) -> LocationMultiset {
        self.robots.iter().map(|r| r.location.clone()).collect()
    }

    /// Locations of the correct robots only (indices `0..n`).
    pub fn correct_locations(&self) -> LocationMultiset {
        self.robots[..self.n()]
            .iter()
            .map(|r| r.location.clone())
            .collect()
    }

    pub fn translate(&self, t: &Point) -> Configuration {
        Configuration {
            robots: self
                .robots
                .iter()
                .map(|r| LocalState {
                    state: r.state.clone(),
                    location: &r.location + t,
                })
                .collect(),
        }
    }

    /// Same configuration with the Byzantine entry's internal state cleared;
    /// the Byzantine robot runs no algorithm, so only its location matters.
    pub fn with_normalized_byzantine(mut self) -> Configuration {
        let n = self.n();
        self.robots[n].state = InternalState::empty();
        self
    }
}

/// A deterministic robot algorithm. Robots may be non-uniform, so the robot
/// index is passed in; the observation is always in the robot's local frame.
pub trait RobotAlgorithm: Send + Sync {
    fn name(&self) -> &str;

    /// INIT state of robot `robot`.
    fn initial_state(&self, _robot: usize) -> InternalState {
        InternalState::empty()
    }

    /// Returns the destination in the local frame and the post-state.
    fn compute(
        &self,
        robot: usize,
        observation: &LocationMultiset,
        state: &InternalState,
    ) -> (Point, InternalState);
}

/// The multiset of positions of all robots relative to robot `i`.
pub fn observe(config: &Configuration, i: usize) -> Result<LocationMultiset> {
    let me = config.location(i)?;
    Ok(config.robots.iter().map(|r| &r.location - me).collect())
}

/// The most populated point of `l` and its multiplicity; ties go to the
/// lexicographically smallest point.
pub fn max_multiplicity(l: &LocationMultiset) -> Result<(Point, usize)> {
    let mut best: Option<(&Point, usize)> = None;
    // counts() iterates in lexicographic order, so strict > keeps the smallest.
    for (p, c) in l.counts() {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((p, c));
        }
    }
    best.map(|(p, c)| (p.clone(), c))
        .ok_or(Error::EmptyMultiset)
}

/// The swap operator: exchanges entries `k` and `n`.
pub fn swap(config: &Configuration, k: usize) -> Result<Configuration> {
    let n = config.n();
    if k > n {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: config.len(),
        });
    }
    let mut out = config.clone();
    out.robots.swap(k, n);
    Ok(out)
}

/// All correct robots currently share one location.
pub fn is_legitimate_now(config: &Configuration) -> bool {
    let n = config.n();
    let first = &config.robots[0].location;
    config.robots[1..n].iter().all(|r| &r.location == first)
}

/// At least `n` of the `n + 1` entries are co-located.
pub fn is_semi_legitimate(config: &Configuration) -> bool {
    max_multiplicity(&config.locations())
        .map(|(_, c)| c >= config.n())
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(i64, i64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::int(x, y)).collect()
    }

    fn config(v: &[(i64, i64)]) -> Configuration {
        Configuration::from_points(pts(v)).unwrap()
    }

    #[test]
    fn observe_colocated_maps_to_origin() {
        let c = config(&[(5, 5); 5]);
        let obs = observe(&c, 0).unwrap();
        assert_eq!(obs, LocationMultiset::new(vec![Point::origin(); 5]));
    }

    #[test]
    fn observe_translates_by_observer() {
        let c = config(&[(0, 0), (1, 0), (1, 0), (2, 3)]);
        let obs = observe(&c, 1).unwrap();
        assert_eq!(
            obs,
            LocationMultiset::new(pts(&[(-1, 0), (0, 0), (0, 0), (1, 3)]))
        );
        assert!(observe(&c, 4).is_err());
    }

    #[test]
    fn max_multiplicity_examples() {
        let l = LocationMultiset::new(pts(&[(0, 0), (0, 0), (0, 0), (1, 0)]));
        assert_eq!(max_multiplicity(&l).unwrap(), (Point::int(0, 0), 3));
        let l = LocationMultiset::new(pts(&[(1, 0), (1, 0), (0, 0), (0, 0)]));
        assert_eq!(max_multiplicity(&l).unwrap(), (Point::int(0, 0), 2));
        assert_eq!(
            max_multiplicity(&LocationMultiset::default()),
            Err(Error::EmptyMultiset)
        );
    }

    #[test]
    fn swap_examples() {
        let c = config(&[(0, 0), (1, 0), (2, 0), (3, 0)]);
        assert_eq!(swap(&c, 3).unwrap(), c);
        assert_eq!(
            swap(&c, 1).unwrap(),
            config(&[(0, 0), (3, 0), (2, 0), (1, 0)])
        );
        assert!(swap(&c, 4).is_err());
    }

    #[test]
    fn legitimacy_examples() {
        let c = config(&[(2, 2), (2, 2), (2, 2), (2, 2), (9, 9)]);
        assert!(is_legitimate_now(&c));
        let c = config(&[(2, 2), (3, 2), (2, 2), (2, 2), (9, 9)]);
        assert!(!is_legitimate_now(&c));
        assert!(!is_semi_legitimate(&c));
        let c = config(&[(2, 2), (3, 2), (2, 2), (2, 2), (2, 2)]);
        assert!(is_semi_legitimate(&c));
        let c = config(&[(2, 2), (3, 2), (3, 2), (2, 2), (9, 9)]);
        assert!(!is_semi_legitimate(&c));
    }

    #[test]
    fn small_systems_are_rejected() {
        assert_eq!(
            Configuration::from_points(pts(&[(0, 0), (0, 0), (0, 0)])),
            Err(Error::InvalidSystemSize(2))
        );
    }

    fn arb_config() -> impl Strategy<Value = Configuration> {
        prop::collection::vec((-3i64..4, -3i64..4), 4..8)
            .prop_map(|v| Configuration::from_points(pts(&v)).unwrap())
    }

    proptest! {
        #[test]
        fn observe_is_translation_invariant(c in arb_config(), tx in -50i64..50, ty in -50i64..50, den in 1i64..7, i in 0usize..8) {
            let i = i % c.len();
            let t = Point::new(crate::geometry::ratio(tx, den), crate::geometry::ratio(ty, den));
            prop_assert_eq!(observe(&c, i).unwrap(), observe(&c.translate(&t), i).unwrap());
            prop_assert_eq!(observe(&c, i).unwrap().len(), c.len());
            prop_assert!(observe(&c, i).unwrap().contains(&Point::origin()));
        }

        #[test]
        fn swap_is_an_involution(c in arb_config(), k in 0usize..8) {
            let k = k % c.len();
            prop_assert_eq!(swap(&swap(&c, k).unwrap(), k).unwrap(), c);
        }

        #[test]
        fn semi_legitimate_iff_some_swap_is_legitimate(c in arb_config()) {
            let brute = (0..=c.n()).any(|g| is_legitimate_now(&swap(&c, g).unwrap()));
            prop_assert_eq!(is_semi_legitimate(&c), brute);
            if is_legitimate_now(&c) {
                prop_assert!(is_semi_legitimate(&c));
            }
        }

        #[test]
        fn max_multiplicity_matches_naive_scan(v in prop::collection::vec((0i64..4, 0i64..4), 1..9)) {
            let points = pts(&v);
            let l = LocationMultiset::new(points.clone());
            let (p, c) = max_multiplicity(&l).unwrap();
            let mut best: Option<(Point, usize)> = None;
            for q in &points {
                let cnt = points.iter().filter(|r| *r == q).count();
                let better = match &best {
                    None => true,
                    Some((bp, bc)) => cnt > *bc || (cnt == *bc && q < bp),
                };
                if better {
                    best = Some((q.clone(), cnt));
                }
            }
            prop_assert_eq!((p, c), best.unwrap());
            let distinct = l.distinct().len();
            prop_assert!(c >= l.len().div_ceil(distinct));
        }
    }
}
