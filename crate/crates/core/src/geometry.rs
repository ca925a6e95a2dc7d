//! Exact planar geometry over rationals.
//!
//! Every coordinate is a [`BigRational`], so co-location, collinearity and
//! co-circularity are decided exactly. Nothing in this module touches floats.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
pub use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Shorthand for building an integer rational.
pub fn rat(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Shorthand for `num / den`.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Formats a rational as `p/q`, always with an explicit denominator.
pub fn format_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `p/q` or a bare integer `p`.
pub fn parse_rational(s: &str) -> Result<BigRational, Error> {
    let s = s.trim();
    let bad = || Error::Parse(format!("invalid rational `{s}`"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
            let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => Ok(BigRational::from_integer(
            BigInt::from_str(s).map_err(|_| bad())?,
        )),
    }
}

/// A point of the plane in global coordinates.
///
/// Ordering is lexicographic (x first, then y); it is the tie-break order used
/// wherever a deterministic choice among points is needed.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Point {
    pub x: BigRational,
    pub y: BigRational,
}

impl Point {
    pub fn new(x: BigRational, y: BigRational) -> Self {
        Point { x, y }
    }

    pub fn int(x: i64, y: i64) -> Self {
        Point::new(rat(x), rat(y))
    }

    pub fn origin() -> Self {
        Point::int(0, 0)
    }

    pub fn is_origin(&self) -> bool {
        self.x.is_zero() && self.y.is_zero()
    }

    /// Squared euclidean distance.
    pub fn dist2(&self, other: &Point) -> BigRational {
        let dx = &self.x - &other.x;
        let dy = &self.y - &other.y;
        &dx * &dx + &dy * &dy
    }

    pub fn scale(&self, k: &BigRational) -> Point {
        Point::new(&self.x * k, &self.y * k)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Add for &Point {
    type Output = Point;
    fn add(self, rhs: &Point) -> Point {
        Point::new(&self.x + &rhs.x, &self.y + &rhs.y)
    }
}

impl Sub for &Point {
    type Output = Point;
    fn sub(self, rhs: &Point) -> Point {
        Point::new(&self.x - &rhs.x, &self.y - &rhs.y)
    }
}

impl Neg for &Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-&self.x, -&self.y)
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [format_rational(&self.x), format_rational(&self.y)].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y] = <[String; 2]>::deserialize(d)?;
        let x = parse_rational(&x).map_err(serde::de::Error::custom)?;
        let y = parse_rational(&y).map_err(serde::de::Error::custom)?;
        Ok(Point { x, y })
    }
}

/// A multiset of points, stored sorted so that equality and serialization
/// are canonical.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocationMultiset {
    points: Vec<Point>,
}

impl LocationMultiset {
    pub fn new(mut points: Vec<Point>) -> Self {
        points.sort();
        LocationMultiset { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point> {
        self.points.iter()
    }

    pub fn as_slice(&self) -> &[Point] {
        &self.points
    }

    pub fn counts(&self) -> BTreeMap<&Point, usize> {
        let mut m = BTreeMap::new();
        for p in &self.points {
            *m.entry(p).or_insert(0) += 1;
        }
        m
    }

    pub fn multiplicity(&self, p: &Point) -> usize {
        self.points.iter().filter(|q| *q == p).count()
    }

    /// Distinct points in lexicographic order.
    pub fn distinct(&self) -> Vec<Point> {
        let mut v = self.points.clone();
        v.dedup();
        v
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.points.binary_search(p).is_ok()
    }

    /// Cardinality of the multiset intersection (minimum multiplicities).
    pub fn intersection_size(&self, other: &LocationMultiset) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.points.len() && j < other.points.len() {
            match self.points[i].cmp(&other.points[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn translate(&self, t: &Point) -> LocationMultiset {
        LocationMultiset::new(self.points.iter().map(|p| p + t).collect())
    }

    /// Returns a copy with one occurrence of `old` replaced by `new`.
    pub fn replace_one(&self, old: &Point, new: Point) -> Option<LocationMultiset> {
        let idx = self.points.iter().position(|p| p == old)?;
        let mut pts = self.points.clone();
        pts[idx] = new;
        Some(LocationMultiset::new(pts))
    }

    pub fn into_vec(self) -> Vec<Point> {
        self.points
    }
}

impl FromIterator<Point> for LocationMultiset {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        LocationMultiset::new(iter.into_iter().collect())
    }
}

/// Twice the signed area of triangle `abc`.
pub fn orient(a: &Point, b: &Point, c: &Point) -> BigRational {
    (&b.x - &a.x) * (&c.y - &a.y) - (&b.y - &a.y) * (&c.x - &a.x)
}

pub fn collinear(a: &Point, b: &Point, c: &Point) -> bool {
    orient(a, b, c).is_zero()
}

/// Exact in-circle determinant; zero iff the four points are concyclic or
/// collinear.
pub fn incircle(a: &Point, b: &Point, c: &Point, d: &Point) -> BigRational {
    let row = |p: &Point| {
        let dx = &p.x - &d.x;
        let dy = &p.y - &d.y;
        let w = &dx * &dx + &dy * &dy;
        (dx, dy, w)
    };
    let (ax, ay, aw) = row(a);
    let (bx, by, bw) = row(b);
    let (cx, cy, cw) = row(c);
    &ax * (&by * &cw - &bw * &cy) - &ay * (&bx * &cw - &bw * &cx) + &aw * (&bx * &cy - &by * &cx)
}

/// A genuine circle in canonical form (center, squared radius).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point,
    #[serde(with = "rational_str")]
    pub radius2: BigRational,
}

impl Circle {
    /// The circumcircle of three non-collinear points.
    pub fn through(a: &Point, b: &Point, c: &Point) -> Option<Circle> {
        let d = orient(a, b, c) * rat(2);
        if d.is_zero() {
            return None;
        }
        let a2 = &a.x * &a.x + &a.y * &a.y;
        let b2 = &b.x * &b.x + &b.y * &b.y;
        let c2 = &c.x * &c.x + &c.y * &c.y;
        let ux = (&a2 * (&b.y - &c.y) + &b2 * (&c.y - &a.y) + &c2 * (&a.y - &b.y)) / &d;
        let uy = (&a2 * (&c.x - &b.x) + &b2 * (&a.x - &c.x) + &c2 * (&b.x - &a.x)) / &d;
        let center = Point::new(ux, uy);
        let radius2 = center.dist2(a);
        Some(Circle { center, radius2 })
    }

    /// Circle having segment `ab` as a diameter.
    pub fn with_diameter(a: &Point, b: &Point) -> Option<Circle> {
        if a == b {
            return None;
        }
        let half = ratio(1, 2);
        let center = (a + b).scale(&half);
        let radius2 = center.dist2(a);
        Some(Circle { center, radius2 })
    }

    /// Unit circle whose leftmost point is `a`.
    pub fn unit_through(a: &Point) -> Circle {
        Circle {
            center: a + &Point::int(1, 0),
            radius2: rat(1),
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.center.dist2(p) == self.radius2
    }

    /// Rational points on the circle not in `avoid`, in a fixed order: the
    /// antipodes of the `seeds`, then rotations of the smallest seed by the
    /// Pythagorean angles (k^2-1, 2k)/(k^2+1).
    pub fn completion_point(&self, seeds: &[Point], avoid: &LocationMultiset) -> Point {
        let mut antipodes: Vec<Point> = seeds
            .iter()
            .map(|p| &self.center.scale(&rat(2)) - p)
            .filter(|p| !avoid.contains(p))
            .collect();
        antipodes.sort();
        if let Some(p) = antipodes.into_iter().next() {
            return p;
        }
        let base = seeds
            .iter()
            .min()
            .cloned()
            .expect("completion needs at least one point on the circle");
        let rel = &base - &self.center;
        let mut k = 2i64;
        loop {
            let den = rat(k * k + 1);
            let cos = rat(k * k - 1) / &den;
            let sin = rat(2 * k) / &den;
            let rotated = Point::new(&rel.x * &cos - &rel.y * &sin, &rel.x * &sin + &rel.y * &cos);
            let p = &self.center + &rotated;
            if !avoid.contains(&p) {
                return p;
            }
            k += 1;
        }
    }
}

/// A line `a x + b y + c = 0`, normalized so that the first non-zero of
/// `(a, b)` equals one.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Line {
    #[serde(with = "rational_str")]
    pub a: BigRational,
    #[serde(with = "rational_str")]
    pub b: BigRational,
    #[serde(with = "rational_str")]
    pub c: BigRational,
}

impl Line {
    pub fn through(p: &Point, q: &Point) -> Option<Line> {
        if p == q {
            return None;
        }
        let a = &q.y - &p.y;
        let b = &p.x - &q.x;
        let c = -(&a * &p.x + &b * &p.y);
        let k = if !a.is_zero() { a.clone() } else { b.clone() };
        Some(Line {
            a: a / &k,
            b: b / &k,
            c: c / &k,
        })
    }

    /// The horizontal line through `p`.
    pub fn horizontal(p: &Point) -> Line {
        Line {
            a: rat(0),
            b: rat(1),
            c: -p.y.clone(),
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        (&self.a * &p.x + &self.b * &p.y + &self.c).is_zero()
    }

    /// A direction vector of the line.
    pub fn direction(&self) -> Point {
        Point::new(-self.b.clone(), self.a.clone())
    }

    /// First point `lo - k * dir` (k = 1, 2, ...) outside `avoid`, where `lo`
    /// is the smallest of `seeds` and `dir` the unit-step direction between
    /// the two smallest seeds (or the line's own direction).
    pub fn completion_point(&self, seeds: &[Point], avoid: &LocationMultiset) -> Point {
        let mut s = seeds.to_vec();
        s.sort();
        s.dedup();
        let lo = s.first().cloned().unwrap_or_else(|| {
            if self.b.is_zero() {
                Point::new(-&self.c / &self.a, rat(0))
            } else {
                Point::new(rat(0), -&self.c / &self.b)
            }
        });
        let dir = if s.len() >= 2 {
            &s[1] - &s[0]
        } else {
            let d = self.direction();
            if d < Point::origin() {
                -&d
            } else {
                d
            }
        };
        let mut k = 1i64;
        loop {
            let p = &lo - &dir.scale(&rat(k));
            if !avoid.contains(&p) {
                return p;
            }
            k += 1;
        }
    }
}

pub(crate) mod rational_str {
    use super::{format_rational, parse_rational};
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

/// True when `r` is a non-negative integer; used by grid samplers.
pub fn is_nonneg_integer(r: &BigRational) -> bool {
    r.is_integer() && !r.is_negative()
}

/// `1/2`, handy in tests and samplers.
pub fn half() -> BigRational {
    BigRational::one() / rat(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_text_round_trip() {
        let r = ratio(-6, 4);
        assert_eq!(format_rational(&r), "-3/2");
        assert_eq!(parse_rational("-3/2").unwrap(), r);
        assert_eq!(parse_rational("7").unwrap(), rat(7));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn point_json_is_pair_of_fraction_strings() {
        let p = Point::new(ratio(1, 2), rat(-3));
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"["1/2","-3/1"]"#);
        let back: Point = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn multiset_intersection_counts_multiplicity() {
        let a = LocationMultiset::new(vec![Point::int(0, 0), Point::int(0, 0), Point::int(1, 0)]);
        let b = LocationMultiset::new(vec![Point::int(0, 0), Point::int(1, 0), Point::int(1, 0)]);
        assert_eq!(a.intersection_size(&b), 2);
        assert_eq!(a.intersection_size(&a), 3);
    }

    #[test]
    fn circumcircle_of_right_triangle() {
        let c = Circle::through(&Point::int(0, 0), &Point::int(2, 0), &Point::int(0, 2)).unwrap();
        assert_eq!(c.center, Point::int(1, 1));
        assert_eq!(c.radius2, rat(2));
        assert!(c.contains(&Point::int(2, 2)));
        assert!(Circle::through(&Point::int(0, 0), &Point::int(1, 1), &Point::int(2, 2)).is_none());
    }

    #[test]
    fn incircle_agrees_with_circumcircle() {
        let (a, b, c) = (Point::int(0, 0), Point::int(4, 0), Point::int(0, 2));
        let circle = Circle::through(&a, &b, &c).unwrap();
        assert!(incircle(&a, &b, &c, &Point::int(4, 2)).is_zero());
        assert!(circle.contains(&Point::int(4, 2)));
        assert!(!incircle(&a, &b, &c, &Point::int(1, 1)).is_zero());
    }

    #[test]
    fn line_normalization_is_canonical() {
        let l1 = Line::through(&Point::int(0, 0), &Point::int(2, 2)).unwrap();
        let l2 = Line::through(&Point::int(3, 3), &Point::int(-1, -1)).unwrap();
        assert_eq!(l1, l2);
        assert!(l1.contains(&Point::int(7, 7)));
    }

    #[test]
    fn completion_points_avoid_existing() {
        let c = Circle::through(&Point::int(1, 0), &Point::int(0, 1), &Point::int(-1, 0)).unwrap();
        let taken = LocationMultiset::new(vec![
            Point::int(1, 0),
            Point::int(0, 1),
            Point::int(-1, 0),
            Point::int(0, -1),
        ]);
        let p = c.completion_point(taken.as_slice(), &taken);
        assert!(c.contains(&p));
        assert!(!taken.contains(&p));

        let l = Line::horizontal(&Point::int(0, 0));
        let taken = LocationMultiset::new(vec![Point::int(0, 0), Point::int(1, 0)]);
        assert_eq!(
            l.completion_point(taken.as_slice(), &taken),
            Point::int(-1, 0)
        );
    }
}
