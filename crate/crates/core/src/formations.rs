//! Formation families with one Byzantine robot: membership, the
//! 1-neighborhood relation, connecting chains, bivalency witnesses and the
//! best-fit functions used by the generalized reduction.
//!
//! Patterns have cardinality `n + 1`. A pattern `Q` belongs to the extension
//! F¹ when it shares at least `n` points with some member of F; the
//! supporting circle (or line) of such a `Q` is its invariant.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{collinear, rat, ratio, Circle, Line, LocationMultiset, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormationKind {
    Circle,
    Line,
    #[serde(rename = "2-gathering")]
    TwoGathering,
}

impl FormationKind {
    pub fn name(self) -> &'static str {
        match self {
            FormationKind::Circle => "circle",
            FormationKind::Line => "line",
            FormationKind::TwoGathering => "2-gathering",
        }
    }

    /// Most points two distinct supports can share; `None` when the family has
    /// no supporting curve.
    pub fn kernel_bound(self) -> Option<usize> {
        match self {
            FormationKind::Circle => Some(2),
            FormationKind::Line => Some(1),
            FormationKind::TwoGathering => None,
        }
    }
}

impl fmt::Display for FormationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(FormationKind::Circle),
            "line" => Ok(FormationKind::Line),
            "2-gathering" | "two-gathering" => Ok(FormationKind::TwoGathering),
            other => Err(Error::UnsupportedFamily(other.to_string())),
        }
    }
}

/// The curve carrying a circle or line pattern.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Circle(Circle),
    Line(Line),
}

impl Support {
    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Support::Circle(c) => c.contains(p),
            Support::Line(l) => l.contains(p),
        }
    }

    pub fn translate(&self, t: &Point) -> Support {
        match self {
            Support::Circle(c) => Support::Circle(Circle {
                center: &c.center + t,
                radius2: c.radius2.clone(),
            }),
            Support::Line(l) => Support::Line(Line {
                a: l.a.clone(),
                b: l.b.clone(),
                c: &l.c - (&l.a * &t.x + &l.b * &t.y),
            }),
        }
    }

    /// Canonical point of the support outside `avoid`; `seeds` must lie on it.
    pub fn completion_point(&self, seeds: &[Point], avoid: &LocationMultiset) -> Point {
        match self {
            Support::Circle(c) => c.completion_point(seeds, avoid),
            Support::Line(l) => l.completion_point(seeds, avoid),
        }
    }

    fn distinct_on(&self, pts: &[Point]) -> usize {
        pts.iter().filter(|p| self.contains(p)).count()
    }
}

/// A formation family at a fixed arity `n + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormationSpec {
    pub kind: FormationKind,
    pub arity: usize,
}

impl FormationSpec {
    pub fn new(kind: FormationKind, arity: usize) -> Result<Self> {
        if arity < 4 {
            return Err(Error::InvalidSystemSize(arity.saturating_sub(1)));
        }
        Ok(FormationSpec { kind, arity })
    }

    /// Number of correct robots.
    pub fn n(&self) -> usize {
        self.arity - 1
    }

    fn check_len(&self, p: &LocationMultiset) -> Result<()> {
        if p.len() != self.arity {
            return Err(Error::Cardinality {
                expected: self.arity,
                got: p.len(),
            });
        }
        Ok(())
    }

    /// Membership in F.
    pub fn membership(&self, p: &LocationMultiset) -> Result<bool> {
        self.check_len(p)?;
        Ok(match self.kind {
            FormationKind::Circle => circle_membership(p),
            FormationKind::Line => line_membership(p),
            FormationKind::TwoGathering => two_gathering_membership(p),
        })
    }

    /// Membership in F¹: `p` shares at least `n` points with a member of F.
    pub fn in_extension(&self, p: &LocationMultiset) -> Result<bool> {
        self.check_len(p)?;
        Ok(match self.kind {
            FormationKind::TwoGathering => {
                let mut counts: Vec<usize> = p.counts().values().copied().collect();
                counts.sort_unstable_by(|a, b| b.cmp(a));
                counts.iter().take(2).sum::<usize>() >= self.n()
            }
            _ => self.invariant(p)?.is_some(),
        })
    }

    /// The supporting curve of an F¹ pattern: the canonical smallest curve
    /// carrying at least `n` distinct points of `p`.
    pub fn invariant(&self, p: &LocationMultiset) -> Result<Option<Support>> {
        self.check_len(p)?;
        if self.kind == FormationKind::TwoGathering {
            return Ok(None);
        }
        let d = p.distinct();
        let need = self.n();
        if d.len() < need {
            return Ok(None);
        }
        Ok(supports_carrying(self.kind, &d, need).into_iter().min())
    }

    /// `|P ∩ P'| ≥ n` as multisets.
    pub fn one_neighbor(&self, p: &LocationMultiset, q: &LocationMultiset) -> Result<bool> {
        self.check_len(p)?;
        self.check_len(q)?;
        Ok(p.intersection_size(q) >= self.n())
    }
}

pub fn circle_membership(p: &LocationMultiset) -> bool {
    let d = p.distinct();
    if d.len() != p.len() || d.len() < 3 {
        return false;
    }
    let Some(third) = d[2..].iter().find(|c| !collinear(&d[0], &d[1], c)) else {
        return false;
    };
    let c = Circle::through(&d[0], &d[1], third).expect("non-collinear");
    d.iter().all(|q| c.contains(q))
}

pub fn line_membership(p: &LocationMultiset) -> bool {
    let d = p.distinct();
    if d.len() != p.len() {
        return false;
    }
    match Line::through(&d[0], d.get(1).unwrap_or(&d[0])) {
        Some(l) => d.iter().all(|q| l.contains(q)),
        None => true,
    }
}

pub fn two_gathering_membership(p: &LocationMultiset) -> bool {
    p.distinct().len() <= 2
}

/// Points scaled by the common denominator, as integers; concyclicity and
/// collinearity are preserved.
fn integer_points(d: &[Point]) -> Vec<[BigInt; 2]> {
    let l = d
        .iter()
        .flat_map(|p| [p.x.denom(), p.y.denom()])
        .fold(BigInt::one(), |acc, q| acc.lcm(q));
    d.iter()
        .map(|p| {
            [
                p.x.numer() * (&l / p.x.denom()),
                p.y.numer() * (&l / p.y.denom()),
            ]
        })
        .collect()
}

fn int_orient(a: &[BigInt; 2], b: &[BigInt; 2], c: &[BigInt; 2]) -> BigInt {
    (&b[0] - &a[0]) * (&c[1] - &a[1]) - (&b[1] - &a[1]) * (&c[0] - &a[0])
}

fn int_incircle(a: &[BigInt; 2], b: &[BigInt; 2], c: &[BigInt; 2], d: &[BigInt; 2]) -> BigInt {
    let row = |p: &[BigInt; 2]| {
        let dx = &p[0] - &d[0];
        let dy = &p[1] - &d[1];
        let w = &dx * &dx + &dy * &dy;
        (dx, dy, w)
    };
    let (ax, ay, aw) = row(a);
    let (bx, by, bw) = row(b);
    let (cx, cy, cw) = row(c);
    &ax * (&by * &cw - &bw * &cy) - &ay * (&bx * &cw - &bw * &cx) + &aw * (&bx * &cy - &by * &cx)
}

/// Supports through at least `need` of the distinct points `d`, filtered
/// with integer orientation and incircle predicates before any curve is built.
fn supports_carrying(kind: FormationKind, d: &[Point], need: usize) -> BTreeSet<Support> {
    let mut out = BTreeSet::new();
    let z = integer_points(d);
    let m = d.len();
    match kind {
        FormationKind::Circle => {
            for i in 0..m {
                for j in i + 1..m {
                    for k in j + 1..m {
                        if int_orient(&z[i], &z[j], &z[k]).is_zero() {
                            continue;
                        }
                        let extra = (0..m)
                            .filter(|&l| {
                                l != i
                                    && l != j
                                    && l != k
                                    && int_incircle(&z[i], &z[j], &z[k], &z[l]).is_zero()
                            })
                            .count();
                        if extra + 3 >= need {
                            out.insert(Support::Circle(
                                Circle::through(&d[i], &d[j], &d[k]).expect("non-collinear"),
                            ));
                        }
                    }
                }
            }
        }
        FormationKind::Line => {
            for i in 0..m {
                for j in i + 1..m {
                    let extra = (0..m)
                        .filter(|&l| l != i && l != j && int_orient(&z[i], &z[j], &z[l]).is_zero())
                        .count();
                    if extra + 2 >= need {
                        out.insert(Support::Line(
                            Line::through(&d[i], &d[j]).expect("distinct"),
                        ));
                    }
                }
            }
        }
        FormationKind::TwoGathering => {}
    }
    out
}

/// Every circle through three distinct non-collinear points of `d`, or every
/// line through two distinct points, deduplicated.
fn candidate_supports(kind: FormationKind, d: &[Point]) -> BTreeSet<Support> {
    let mut out = BTreeSet::new();
    match kind {
        FormationKind::Circle => {
            for i in 0..d.len() {
                for j in i + 1..d.len() {
                    for k in j + 1..d.len() {
                        if let Some(c) = Circle::through(&d[i], &d[j], &d[k]) {
                            out.insert(Support::Circle(c));
                        }
                    }
                }
            }
        }
        FormationKind::Line => {
            for i in 0..d.len() {
                for j in i + 1..d.len() {
                    out.insert(Support::Line(
                        Line::through(&d[i], &d[j]).expect("distinct"),
                    ));
                }
            }
        }
        FormationKind::TwoGathering => {}
    }
    out
}

/// A sequence of patterns, consecutive ones 1-neighbors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    pub patterns: Vec<LocationMultiset>,
}

impl Chain {
    /// Re-checks every element's F¹ membership and every edge.
    pub fn verify(&self, spec: &FormationSpec) -> Result<()> {
        for (i, p) in self.patterns.iter().enumerate() {
            if !spec.in_extension(p)? {
                return Err(Error::NotInExtension(format!("chain element {i}")));
            }
        }
        for (i, w) in self.patterns.windows(2).enumerate() {
            if !spec.one_neighbor(&w[0], &w[1])? {
                return Err(Error::NotInExtension(format!(
                    "chain edge {i} -> {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

/// Moves every robot of `p` to its most populated point, one at a time,
/// stragglers off the two main locations first.
fn collapse_path(p: &LocationMultiset) -> Vec<LocationMultiset> {
    let counts = p.counts();
    let mut order: Vec<(&Point, usize)> = counts.iter().map(|(q, c)| (*q, *c)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let target = order[0].0.clone();
    let mut path = vec![p.clone()];
    let mut cur = p.clone();
    for (q, c) in order.iter().skip(1).rev() {
        for _ in 0..*c {
            cur = cur.replace_one(q, target.clone()).expect("present");
            path.push(cur.clone());
        }
    }
    path
}

/// Connects `p` to `q` inside the 1-neighborhood closure, or returns `None`
/// within the search bound. 2-gathering uses the explicit collapse chain;
/// other families run a bounded breadth-first search that replaces one point
/// at a time by a point of `q`.
pub fn same_class_chain(
    spec: &FormationSpec,
    p: &LocationMultiset,
    q: &LocationMultiset,
    max_nodes: usize,
) -> Result<Option<Chain>> {
    for (name, x) in [("source", p), ("target", q)] {
        if !spec.in_extension(x)? {
            return Err(Error::NotInExtension(format!("{name} pattern")));
        }
    }
    if p == q {
        return Ok(Some(Chain {
            patterns: vec![p.clone()],
        }));
    }
    if spec.kind == FormationKind::TwoGathering {
        let mut a = collapse_path(p);
        let mut b = collapse_path(q);
        b.reverse();
        let from = a.last().expect("non-empty").as_slice()[0].clone();
        let to = b[0].as_slice()[0].clone();
        let mut cur = a.last().expect("non-empty").clone();
        if from != to {
            for _ in 0..spec.arity {
                cur = cur.replace_one(&from, to.clone()).expect("present");
                a.push(cur.clone());
            }
        }
        a.pop();
        a.extend(b);
        let chain = Chain { patterns: a };
        chain.verify(spec)?;
        return Ok(Some(chain));
    }

    let targets = q.distinct();
    let mut parent: HashMap<LocationMultiset, Option<LocationMultiset>> = HashMap::new();
    let mut queue = VecDeque::from([p.clone()]);
    parent.insert(p.clone(), None);
    while let Some(cur) = queue.pop_front() {
        if &cur == q {
            let mut patterns = vec![cur.clone()];
            let mut at = cur;
            while let Some(Some(prev)) = parent.get(&at) {
                patterns.push(prev.clone());
                at = prev.clone();
            }
            patterns.reverse();
            let chain = Chain { patterns };
            chain.verify(spec)?;
            return Ok(Some(chain));
        }
        for old in cur.distinct() {
            for t in &targets {
                if *t == old {
                    continue;
                }
                let next = cur.replace_one(&old, t.clone()).expect("present");
                if parent.contains_key(&next) || !spec.in_extension(&next)? {
                    continue;
                }
                if parent.len() >= max_nodes {
                    return Ok(None);
                }
                parent.insert(next.clone(), Some(cur.clone()));
                queue.push_back(next);
            }
        }
    }
    Ok(None)
}

/// Result of sampling neighbor pairs or enumerating them on a grid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInvarianceReport {
    pub pairs_checked: usize,
    pub invariant_changes: usize,
    pub witness: Option<(LocationMultiset, LocationMultiset)>,
}

impl StepInvarianceReport {
    fn record(&mut self, q: &LocationMultiset, q2: &LocationMultiset, same: bool) {
        self.pairs_checked += 1;
        if !same {
            self.invariant_changes += 1;
            if self.witness.is_none() {
                self.witness = Some((q.clone(), q2.clone()));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessOptions {
    pub fuzz_samples: usize,
    pub seed: u64,
    /// Side of the integer grid for exhaustive enumeration; `None` skips it.
    pub grid: Option<usize>,
}

impl Default for WitnessOptions {
    fn default() -> Self {
        WitnessOptions {
            fuzz_samples: 10_000,
            seed: 0,
            grid: Some(5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BivalencyReport {
    pub family: FormationKind,
    pub arity: usize,
    pub pattern: LocationMultiset,
    pub translation: Point,
    pub invariant: Option<Support>,
    pub translated_invariant: Option<Support>,
    /// The two supports differ.
    pub separated: bool,
    pub kernel_bound: Option<usize>,
    /// Shared points of 1-neighbors force equal supports: `n - 2` exceeds the
    /// kernel bound.
    pub analytic_step_invariance: bool,
    pub fuzz: Option<StepInvarianceReport>,
    pub exhaustive: Option<StepInvarianceReport>,
    /// A chain joining the pattern to its translate, when one was found.
    pub chain: Option<Chain>,
    pub certified: bool,
    pub reason: String,
}

/// Checks that `p` and `p + x` lie in different classes: separated supports
/// plus step-invariance of the support along 1-neighbor edges.
pub fn check_bivalency_witness(
    spec: &FormationSpec,
    p: &LocationMultiset,
    x: &Point,
    opts: &WitnessOptions,
) -> Result<BivalencyReport> {
    if !spec.membership(p)? {
        return Err(Error::NotInExtension(
            "pattern is not a member of the family".into(),
        ));
    }
    let px = p.translate(x);
    let mut report = BivalencyReport {
        family: spec.kind,
        arity: spec.arity,
        pattern: p.clone(),
        translation: x.clone(),
        invariant: None,
        translated_invariant: None,
        separated: false,
        kernel_bound: spec.kind.kernel_bound(),
        analytic_step_invariance: false,
        fuzz: None,
        exhaustive: None,
        chain: None,
        certified: false,
        reason: String::new(),
    };
    let Some(bound) = spec.kind.kernel_bound() else {
        report.chain = same_class_chain(spec, p, &px, 10_000)?;
        report.reason = match report.chain {
            Some(_) => "no invariant; pattern and translate are connected by a chain".into(),
            None => "no invariant to certify separation".into(),
        };
        return Ok(report);
    };
    report.invariant = spec.invariant(p)?;
    report.translated_invariant = spec.invariant(&px)?;
    report.separated = report.invariant != report.translated_invariant;
    report.analytic_step_invariance = spec.n() > 2 + bound;
    if opts.fuzz_samples > 0 {
        report.fuzz = Some(fuzz_step_invariance(spec, opts.fuzz_samples, opts.seed));
    }
    if let Some(side) = opts.grid {
        report.exhaustive = Some(grid_step_invariance(spec, side));
    }
    let clean =
        |r: &Option<StepInvarianceReport>| r.as_ref().is_none_or(|r| r.invariant_changes == 0);
    report.certified = report.separated
        && report.analytic_step_invariance
        && clean(&report.fuzz)
        && clean(&report.exhaustive);
    report.reason = if !report.separated {
        "translation keeps the supporting curve".into()
    } else if !report.analytic_step_invariance {
        format!(
            "1-neighbors share only n - 2 = {} points on both supports, not more than the kernel bound {bound}",
            spec.n().saturating_sub(2)
        )
    } else if !clean(&report.fuzz) || !clean(&report.exhaustive) {
        "a 1-neighbor pair changes the supporting curve".into()
    } else {
        "separated supports, step-invariant".into()
    };
    Ok(report)
}

fn random_rational(rng: &mut ChaCha8Rng) -> num_rational::BigRational {
    ratio(rng.random_range(-12..=12), rng.random_range(1..=3))
}

fn random_point(rng: &mut ChaCha8Rng) -> Point {
    Point::new(random_rational(rng), random_rational(rng))
}

/// Second intersection of the line through `p` with direction `d` and the
/// support; `p` itself must lie on it.
fn along_support(s: &Support, p: &Point, d: &Point) -> Point {
    match s {
        Support::Line(_) => p + d,
        Support::Circle(c) => {
            let rel = p - &c.center;
            let dd = &d.x * &d.x + &d.y * &d.y;
            let k = -(rat(2) * (&d.x * &rel.x + &d.y * &rel.y)) / dd;
            p + &d.scale(&k)
        }
    }
}

fn random_on(s: &Support, base: &Point, rng: &mut ChaCha8Rng) -> Point {
    let d = match s {
        Support::Line(l) => l.direction().scale(&random_rational(rng)),
        Support::Circle(_) => Point::new(rat(rng.random_range(1..=6)), random_rational(rng)),
    };
    along_support(s, base, &d)
}

/// Point of the circle with the given center and radius at rational
/// parameter `t`, keeping coordinates small.
fn circle_point(center: &Point, r: i64, t: &num_rational::BigRational) -> Point {
    let one = rat(1);
    let den = &one + t * t;
    let unit = Point::new((&one - t * t) / &den, (rat(2) * t) / &den);
    center + &unit.scale(&rat(r))
}

/// A random F¹ pattern: `n` distinct points on a random support plus one
/// arbitrary point.
fn random_extension_pattern(
    spec: &FormationSpec,
    rng: &mut ChaCha8Rng,
) -> (LocationMultiset, Support) {
    loop {
        let a = random_point(rng);
        let mut on: Box<dyn FnMut(&mut ChaCha8Rng) -> Point> = match spec.kind {
            FormationKind::Circle => {
                let r = rng.random_range(1..=5);
                let center = a.clone();
                Box::new(move |rng| circle_point(&center, r, &random_rational(rng)))
            }
            _ => {
                let d = Point::new(rat(rng.random_range(-3..=3)), rat(rng.random_range(-3..=3)));
                if d.is_origin() {
                    continue;
                }
                let base = a.clone();
                Box::new(move |rng| &base + &d.scale(&random_rational(rng)))
            }
        };
        let mut pts: BTreeSet<Point> = BTreeSet::new();
        let mut guard = 0;
        while pts.len() < spec.n() && guard < 64 {
            pts.insert(on(rng));
            guard += 1;
        }
        if pts.len() < spec.n() {
            continue;
        }
        let mut v: Vec<Point> = pts.into_iter().collect();
        v.push(if rng.random_bool(0.2) {
            v[0].clone()
        } else {
            random_point(rng)
        });
        let q = LocationMultiset::new(v);
        if let Ok(Some(inv)) = spec.invariant(&q) {
            return (q, inv);
        }
    }
}

/// Samples 1-neighbor pairs inside F¹ and compares their supports.
/// Replacement points come from the grid, from the pattern's own support, and
/// from supports through other points of the pattern.
pub fn fuzz_step_invariance(
    spec: &FormationSpec,
    samples: usize,
    seed: u64,
) -> StepInvarianceReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = StepInvarianceReport::default();
    while report.pairs_checked < samples {
        let (q, inv) = random_extension_pattern(spec, &mut rng);
        let pts = q.as_slice();
        let old = pts[rng.random_range(0..pts.len())].clone();
        let new = match rng.random_range(0..3) {
            0 => random_point(&mut rng),
            1 => random_on(&inv, &pts[0], &mut rng),
            _ => {
                let d = q.distinct();
                let pick = |rng: &mut ChaCha8Rng| d[rng.random_range(0..d.len())].clone();
                let (a, b, c) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
                let other = match spec.kind {
                    FormationKind::Circle => Circle::through(&a, &b, &c).map(Support::Circle),
                    _ => Line::through(&a, &b).map(Support::Line),
                };
                match other {
                    Some(s) => random_on(&s, &a, &mut rng),
                    None => random_point(&mut rng),
                }
            }
        };
        let q2 = q.replace_one(&old, new).expect("present");
        let Some(inv2) = spec.invariant(&q2).expect("arity") else {
            continue;
        };
        report.record(&q, &q2, inv2 == inv);
    }
    report
}

/// Supports through enough points of the `side × side` integer grid, with the
/// bitmask of grid points on each.
pub fn grid_supports(kind: FormationKind, side: usize, min_points: usize) -> Vec<(Support, u64)> {
    let grid: Vec<Point> = (0..side * side)
        .map(|i| Point::int((i / side) as i64, (i % side) as i64))
        .collect();
    candidate_supports(kind, &grid)
        .into_iter()
        .map(|s| {
            let mask = grid
                .iter()
                .enumerate()
                .filter(|(_, p)| s.contains(p))
                .fold(0u64, |m, (i, _)| m | 1 << i);
            (s, mask)
        })
        .filter(|(_, m)| m.count_ones() as usize >= min_points)
        .collect()
}

/// Every 1-neighbor pair of F¹ patterns drawn from the grid, compared by
/// support. Patterns are multisets of grid points of the spec's arity.
pub fn grid_step_invariance(spec: &FormationSpec, side: usize) -> StepInvarianceReport {
    assert!(
        side * side <= 32 && spec.arity <= 6,
        "grid too large for packed keys"
    );
    let n = spec.n();
    let supports = grid_supports(spec.kind, side, n);
    let cells = side * side;
    let inv_of = |ms: &[usize]| -> Option<usize> {
        let mask = ms.iter().fold(0u64, |m, &i| m | 1 << i);
        supports
            .iter()
            .position(|(_, s)| (s & mask).count_ones() as usize >= n)
    };
    let pack = |ms: &[usize]| ms.iter().fold(0u64, |k, &i| k << 5 | i as u64);
    let mut all: Vec<Vec<usize>> = Vec::new();
    let mut cur = Vec::with_capacity(spec.arity);
    multisets(cells, spec.arity, 0, &mut cur, &mut all);
    let table: HashMap<u64, Option<usize>> = all.iter().map(|ms| (pack(ms), inv_of(ms))).collect();
    let to_points = |ms: &[usize]| {
        LocationMultiset::new(
            ms.iter()
                .map(|&i| Point::int((i / side) as i64, (i % side) as i64))
                .collect(),
        )
    };
    let mut report = StepInvarianceReport::default();
    for ms in &all {
        let Some(inv) = table[&pack(ms)] else {
            continue;
        };
        for pos in 0..ms.len() {
            if pos > 0 && ms[pos] == ms[pos - 1] {
                continue;
            }
            for g in 0..cells {
                if g == ms[pos] {
                    continue;
                }
                let mut other = ms.clone();
                other[pos] = g;
                other.sort_unstable();
                let Some(inv2) = table[&pack(&other)] else {
                    continue;
                };
                report.record(&to_points(ms), &to_points(&other), inv == inv2);
            }
        }
    }
    report
}

fn multisets(cells: usize, k: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in from..cells {
        cur.push(i);
        multisets(cells, k, i, cur, out);
        cur.pop();
    }
}

/// Largest number of grid points two distinct supports share, over every
/// support through at least two (lines) or three (circles) points of the
/// `side × side` grid.
pub fn grid_kernel_max_shared(kind: FormationKind, side: usize) -> usize {
    let min = if kind == FormationKind::Circle { 3 } else { 2 };
    let s = grid_supports(kind, side, min);
    let mut best = 0;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            best = best.max((s[i].1 & s[j].1).count_ones() as usize);
        }
    }
    best
}

/// The best pattern of the family for observed locations `l`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BestFit {
    pub support: Option<Support>,
    /// A member of F (cardinality `arity`) maximizing the overlap with `l`.
    pub pattern: LocationMultiset,
    /// `|l ∩ pattern|`.
    pub count: usize,
    /// The smallest point of `pattern \ l`, if any.
    pub helper: Option<Point>,
}

/// Best fit of an arity-`arity` pattern of `kind` to the locations `l`.
pub fn best_fit_with_arity(
    kind: FormationKind,
    arity: usize,
    l: &LocationMultiset,
) -> Result<BestFit> {
    if l.is_empty() {
        return Err(Error::EmptyMultiset);
    }
    let d = l.distinct();
    let (support, pattern) = match kind {
        FormationKind::TwoGathering => {
            let mut order: Vec<(&Point, usize)> = l.counts().into_iter().collect();
            order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            let p0 = order[0].0.clone();
            let a = order[0].1.min(arity);
            let mut pts = vec![p0.clone(); a];
            let p1 = order.get(1).map(|x| x.0.clone()).unwrap_or(p0);
            pts.extend(std::iter::repeat_n(p1, arity - a));
            (None, LocationMultiset::new(pts))
        }
        _ => {
            let support = candidate_supports(kind, &d)
                .into_iter()
                .map(|s| (std::cmp::Reverse(s.distinct_on(&d)), s))
                .min()
                .map(|(_, s)| s)
                .unwrap_or_else(|| degenerate_support(kind, &d));
            let mut on: Vec<Point> = d.iter().filter(|p| support.contains(p)).cloned().collect();
            on.truncate(arity);
            let seeds = on.clone();
            while on.len() < arity {
                let avoid = LocationMultiset::new(d.iter().chain(on.iter()).cloned().collect());
                on.push(support.completion_point(&seeds, &avoid));
            }
            (Some(support), LocationMultiset::new(on))
        }
    };
    let count = l.intersection_size(&pattern);
    let helper = multiset_difference(&pattern, l).into_iter().min();
    Ok(BestFit {
        support,
        pattern,
        count,
        helper,
    })
}

/// Best fit for `l` at arity `|l|`, the shape used by robot algorithms.
pub fn best_fit(kind: FormationKind, l: &LocationMultiset) -> Result<BestFit> {
    best_fit_with_arity(kind, l.len(), l)
}

/// Support used when no triple (or pair) of distinct points exists.
fn degenerate_support(kind: FormationKind, d: &[Point]) -> Support {
    match (kind, d) {
        (FormationKind::Circle, [a, b, ..]) => {
            Support::Circle(Circle::with_diameter(a, b).expect("distinct"))
        }
        (FormationKind::Circle, [a]) => Support::Circle(Circle::unit_through(a)),
        (_, [a, ..]) => Support::Line(Line::horizontal(a)),
        _ => unreachable!("non-empty input"),
    }
}

fn multiset_difference(a: &LocationMultiset, b: &LocationMultiset) -> Vec<Point> {
    let bc = b.counts();
    let mut out = Vec::new();
    for (p, c) in a.counts() {
        let have = bc.get(p).copied().unwrap_or(0);
        out.extend(std::iter::repeat_n(p.clone(), c.saturating_sub(have)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::incircle;
    use proptest::prelude::*;

    fn ms(v: &[(i64, i64)]) -> LocationMultiset {
        v.iter().map(|&(x, y)| Point::int(x, y)).collect()
    }

    fn spec(kind: FormationKind) -> FormationSpec {
        FormationSpec::new(kind, 5).unwrap()
    }

    fn unit_circle_points() -> LocationMultiset {
        LocationMultiset::new(vec![
            Point::new(ratio(3, 5), ratio(4, 5)),
            Point::new(ratio(-3, 5), ratio(4, 5)),
            Point::int(1, 0),
            Point::int(0, 1),
            Point::int(0, -1),
        ])
    }

    #[test]
    fn membership_examples() {
        let c = spec(FormationKind::Circle);
        let l = spec(FormationKind::Line);
        let g = spec(FormationKind::TwoGathering);
        assert!(c.membership(&unit_circle_points()).unwrap());
        let line = ms(&[(0, 0), (1, 0), (2, 0), (3, 0), (4, 0)]);
        assert!(l.membership(&line).unwrap());
        assert!(!c.membership(&line).unwrap());
        let dup = ms(&[(0, 0), (0, 0), (1, 1), (1, 1), (1, 1)]);
        assert!(g.membership(&dup).unwrap());
        assert!(!c.membership(&dup).unwrap());
        assert!(!l.membership(&dup).unwrap());
        assert!(matches!(
            c.membership(&ms(&[(0, 0)])),
            Err(Error::Cardinality {
                expected: 5,
                got: 1
            })
        ));
    }

    #[test]
    fn one_neighbor_examples() {
        let s = spec(FormationKind::Circle);
        let p = unit_circle_points();
        assert!(s.one_neighbor(&p, &p).unwrap());
        let q = p.replace_one(&Point::int(1, 0), Point::int(9, 9)).unwrap();
        assert!(s.one_neighbor(&p, &q).unwrap());
        assert!(!s.one_neighbor(&p, &p.translate(&Point::int(1, 0))).unwrap());
    }

    #[test]
    fn extension_invariants() {
        let s = spec(FormationKind::Circle);
        let q = ms(&[(0, 0), (2, 0), (0, 2), (2, 2), (7, 7)]);
        let inv = s.invariant(&q).unwrap().unwrap();
        assert_eq!(
            inv,
            Support::Circle(Circle {
                center: Point::int(1, 1),
                radius2: rat(2)
            })
        );
        assert!(!s
            .in_extension(&ms(&[(0, 0), (1, 0), (2, 0), (3, 0), (3, 3)]))
            .unwrap());
        let l = spec(FormationKind::Line);
        assert!(l
            .in_extension(&ms(&[(0, 0), (1, 0), (2, 0), (3, 0), (3, 3)]))
            .unwrap());
        assert!(!l
            .in_extension(&ms(&[(0, 0), (0, 0), (2, 0), (3, 0), (3, 3)]))
            .unwrap());
    }

    #[test]
    fn five_point_circle_extension_is_not_step_invariant() {
        // Hand-built pair: four points on x²+y² circle around (1,1), four on
        // the circle around (1,2), sharing four of five entries.
        let s = spec(FormationKind::Circle);
        let q = ms(&[(0, 0), (2, 0), (0, 2), (2, 2), (3, 1)]);
        let q2 = ms(&[(0, 0), (2, 0), (3, 1), (0, 4), (0, 2)]);
        assert!(s.one_neighbor(&q, &q2).unwrap());
        assert!(s.in_extension(&q).unwrap() && s.in_extension(&q2).unwrap());
        assert_ne!(s.invariant(&q).unwrap(), s.invariant(&q2).unwrap());
    }

    #[test]
    fn two_gathering_chain_is_short_and_valid() {
        let s = spec(FormationKind::TwoGathering);
        let p = ms(&[(0, 0), (0, 0), (0, 0), (1, 1), (1, 1)]);
        let q = ms(&[(5, 5), (7, 2), (7, 2), (7, 2), (7, 2)]);
        let chain = same_class_chain(&s, &p, &q, 100).unwrap().unwrap();
        chain.verify(&s).unwrap();
        assert_eq!(chain.patterns.first(), Some(&p));
        assert_eq!(chain.patterns.last(), Some(&q));
        assert!(chain.len() <= 2 * 5 + 2);
        assert_eq!(same_class_chain(&s, &p, &p, 1).unwrap().unwrap().len(), 1);
    }

    #[test]
    fn line_chain_search_connects_collinear_patterns() {
        let s = spec(FormationKind::Line);
        let p = ms(&[(0, 0), (1, 0), (2, 0), (3, 0), (4, 0)]);
        let q = ms(&[(5, 0), (6, 0), (7, 0), (8, 0), (9, 0)]);
        let chain = same_class_chain(&s, &p, &q, 10_000).unwrap().unwrap();
        assert_eq!(chain.len(), 6);
        let far = p.translate(&Point::int(0, 1));
        assert_eq!(same_class_chain(&s, &p, &far, 10_000).unwrap(), None);
    }

    #[test]
    fn witness_outcomes() {
        let quick = WitnessOptions {
            fuzz_samples: 300,
            seed: 1,
            grid: None,
        };
        let line = ms(&[(0, 0), (1, 0), (2, 0), (3, 0), (4, 0)]);
        let r =
            check_bivalency_witness(&spec(FormationKind::Line), &line, &Point::int(0, 1), &quick)
                .unwrap();
        assert!(
            r.separated && r.analytic_step_invariance && r.certified,
            "{r:?}"
        );
        let r =
            check_bivalency_witness(&spec(FormationKind::Line), &line, &Point::int(1, 0), &quick)
                .unwrap();
        assert!(!r.separated && !r.certified);
        let g = ms(&[(0, 0), (0, 0), (0, 0), (1, 1), (1, 1)]);
        let r = check_bivalency_witness(
            &spec(FormationKind::TwoGathering),
            &g,
            &Point::int(3, 0),
            &quick,
        )
        .unwrap();
        assert!(!r.certified);
        r.chain
            .unwrap()
            .verify(&spec(FormationKind::TwoGathering))
            .unwrap();
        let six = FormationSpec::new(FormationKind::Circle, 6).unwrap();
        let mut pts = unit_circle_points().into_vec();
        pts.push(Point::int(-1, 0));
        let r = check_bivalency_witness(
            &six,
            &LocationMultiset::new(pts),
            &Point::int(1_000_000, 0),
            &quick,
        )
        .unwrap();
        assert!(r.certified, "{r:?}");
    }

    #[test]
    fn best_fit_examples() {
        let l = ms(&[(0, 0), (1, 0), (2, 0), (5, 7)]);
        let fit = best_fit(FormationKind::Line, &l).unwrap();
        assert_eq!(fit.count, 3);
        assert_eq!(
            fit.support,
            Some(Support::Line(Line::horizontal(&Point::origin())))
        );
        assert_eq!(fit.helper, Some(Point::int(-1, 0)));

        let mut pts = unit_circle_points().into_vec();
        pts[4] = Point::int(3, 3);
        let fit = best_fit(FormationKind::Circle, &LocationMultiset::new(pts)).unwrap();
        assert_eq!(fit.count, 4);

        let fit = best_fit(FormationKind::Circle, &unit_circle_points()).unwrap();
        assert_eq!(fit.count, 5);
        assert_eq!(fit.helper, None);

        let fit = best_fit_with_arity(
            FormationKind::TwoGathering,
            5,
            &ms(&[(0, 0), (0, 0), (3, 3), (4, 4)]),
        )
        .unwrap();
        assert_eq!(fit.count, 3);
        assert_eq!(fit.helper, Some(Point::int(3, 3)));
    }

    #[test]
    fn kernel_facts_on_small_grid() {
        assert!(grid_kernel_max_shared(FormationKind::Circle, 4) <= 2);
        assert_eq!(grid_kernel_max_shared(FormationKind::Line, 4), 1);
    }

    /// Naive oracle: incircle / orientation determinants over all triples.
    fn naive_count(kind: FormationKind, l: &LocationMultiset) -> usize {
        let d = l.distinct();
        let mut best = d.len().min(2);
        for i in 0..d.len() {
            for j in i + 1..d.len() {
                for k in j + 1..d.len() {
                    let cnt = match kind {
                        FormationKind::Line => {
                            if !collinear(&d[i], &d[j], &d[k]) {
                                continue;
                            }
                            d.iter().filter(|p| collinear(&d[i], &d[j], p)).count()
                        }
                        _ => {
                            if collinear(&d[i], &d[j], &d[k]) {
                                continue;
                            }
                            d.iter()
                                .filter(|p| incircle(&d[i], &d[j], &d[k], p).is_zero())
                                .count()
                        }
                    };
                    best = best.max(cnt);
                }
            }
        }
        best
    }

    fn naive_two_gathering(l: &LocationMultiset) -> usize {
        let d = l.distinct();
        let mut best = 0;
        for a in &d {
            for b in &d {
                let extra = if a == b { 0 } else { l.multiplicity(b) };
                best = best.max(l.multiplicity(a) + extra);
            }
        }
        best
    }

    proptest! {
        #[test]
        fn best_fit_matches_naive_oracle(v in prop::collection::vec((0i64..4, 0i64..4), 1..7)) {
            let l = ms(&v);
            for kind in [FormationKind::Circle, FormationKind::Line] {
                let fit = best_fit(kind, &l).unwrap();
                prop_assert_eq!(fit.count, naive_count(kind, &l));
                prop_assert_eq!(fit.pattern.len(), l.len());
                let member = FormationSpec { kind, arity: l.len() }.membership(&fit.pattern).unwrap();
                prop_assert!(member || l.len() < 3);
            }
            let fit = best_fit(FormationKind::TwoGathering, &l).unwrap();
            prop_assert_eq!(fit.count, naive_two_gathering(&l));
        }

        #[test]
        fn one_neighbor_is_reflexive_and_symmetric(
            a in prop::collection::vec((0i64..3, 0i64..3), 5),
            b in prop::collection::vec((0i64..3, 0i64..3), 5),
        ) {
            let s = spec(FormationKind::TwoGathering);
            let (p, q) = (ms(&a), ms(&b));
            prop_assert!(s.one_neighbor(&p, &p).unwrap());
            prop_assert_eq!(s.one_neighbor(&p, &q).unwrap(), s.one_neighbor(&q, &p).unwrap());
        }

        #[test]
        fn support_translation_commutes(v in prop::collection::vec((-4i64..5, -4i64..5), 5), tx in -5i64..5, ty in -5i64..5) {
            let t = Point::int(tx, ty);
            let l = ms(&v);
            for kind in [FormationKind::Circle, FormationKind::Line] {
                let s = spec(kind);
                let a = s.invariant(&l).unwrap().map(|x| x.translate(&t));
                prop_assert_eq!(a, s.invariant(&l.translate(&t)).unwrap());
            }
        }
    }
}
