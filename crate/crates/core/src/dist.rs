//! Distributions on `[0, 1]`: finite-support, and atoms plus piecewise-uniform
//! segments. Generalized quantiles and CDF mixtures.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Quantile convention: the reported quantile is `r * sup Q + (1 - r) * inf Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileSpec<S> {
    pub alpha: S,
    pub r: S,
}

impl<S: Scalar> QuantileSpec<S> {
    pub fn new(alpha: S, r: S) -> Result<Self> {
        if !alpha.in_unit_interval() {
            return Err(Error::InvalidSpec("alpha must lie in [0, 1]".into()));
        }
        if !r.in_unit_interval() {
            return Err(Error::InvalidSpec("r must lie in [0, 1]".into()));
        }
        if alpha.is_zero_tol() && !r.approx_eq(&S::one()) {
            return Err(Error::InvalidSpec("alpha = 0 requires r = 1".into()));
        }
        if alpha.approx_eq(&S::one()) && !r.is_zero_tol() {
            return Err(Error::InvalidSpec("alpha = 1 requires r = 0".into()));
        }
        Ok(QuantileSpec { alpha, r })
    }

    /// Lower quantile (`r = 0`), or `r = 1` when `alpha = 0`.
    pub fn lower(alpha: S) -> Result<Self> {
        let r = if alpha.is_zero_tol() { S::one() } else { S::zero() };
        Self::new(alpha, r)
    }
}

/// Finite-support distribution. Support is strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDist<S> {
    support: Vec<S>,
    masses: Vec<S>,
}

/// Uniform density on `(lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment<S> {
    pub lo: S,
    pub hi: S,
    pub density: S,
}

/// Atoms plus non-overlapping constant-density segments.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedDist<S> {
    points: Vec<S>,
    masses: Vec<S>,
    segments: Vec<Segment<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dist<S> {
    Discrete(DiscreteDist<S>),
    Mixed(MixedDist<S>),
}

fn check_point<S: Scalar>(x: &S) -> Result<()> {
    if x.to_f64().is_nan() || !x.in_unit_interval() {
        return Err(Error::InvalidDistribution(format!(
            "point {} outside [0, 1]",
            x.to_fraction_string()
        )));
    }
    Ok(())
}

fn check_total<S: Scalar>(total: &S) -> Result<()> {
    if !total.approx_eq(&S::one()) {
        return Err(Error::InvalidDistribution(format!(
            "total mass {} != 1",
            total.to_fraction_string()
        )));
    }
    Ok(())
}

fn sort_scalars<S: Scalar>(v: &mut [S]) {
    v.sort_by(|a, b| a.partial_cmp(b).expect("validated scalars are ordered"));
}

/// Sorts pairs by point, merges equal points and drops zero masses.
fn canonical_atoms<S: Scalar>(mut pairs: Vec<(S, S)>) -> (Vec<S>, Vec<S>) {
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("validated scalars are ordered"));
    let mut points: Vec<S> = Vec::with_capacity(pairs.len());
    let mut masses: Vec<S> = Vec::with_capacity(pairs.len());
    for (x, m) in pairs {
        match points.last() {
            Some(last) if last.approx_eq(&x) => {
                let top = masses.last_mut().expect("parallel vectors");
                *top = top.clone() + m;
            }
            _ => {
                points.push(x);
                masses.push(m);
            }
        }
    }
    let mut out_p = Vec::with_capacity(points.len());
    let mut out_m = Vec::with_capacity(points.len());
    for (x, m) in points.into_iter().zip(masses) {
        if m > S::zero() && !m.is_zero_tol() {
            out_p.push(x);
            out_m.push(m);
        }
    }
    (out_p, out_m)
}

impl<S: Scalar> DiscreteDist<S> {
    /// Validating constructor. Zero masses are kept.
    pub fn new(support: Vec<S>, masses: Vec<S>) -> Result<Self> {
        if support.len() != masses.len() {
            return Err(Error::InvalidDistribution(
                "support and masses differ in length".into(),
            ));
        }
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let mut total = S::zero();
        for (i, (x, m)) in support.iter().zip(&masses).enumerate() {
            check_point(x)?;
            if i > 0 && support[i - 1] >= *x {
                return Err(Error::InvalidDistribution(
                    "support must be strictly increasing".into(),
                ));
            }
            if m.lt_tol(&S::zero()) || m.to_f64().is_nan() {
                return Err(Error::InvalidDistribution("negative mass".into()));
            }
            total = total + m.clone();
        }
        check_total(&total)?;
        Ok(DiscreteDist { support, masses })
    }

    /// Builds from unordered `(point, mass)` pairs, merging repeats and
    /// dropping zero masses.
    pub fn from_pairs(pairs: Vec<(S, S)>) -> Result<Self> {
        for (x, m) in &pairs {
            check_point(x)?;
            if m.lt_tol(&S::zero()) {
                return Err(Error::InvalidDistribution("negative mass".into()));
            }
        }
        let (points, masses) = canonical_atoms(pairs);
        Self::new(points, masses)
    }

    pub fn point_mass(x: S) -> Result<Self> {
        Self::new(vec![x], vec![S::one()])
    }

    /// Bernoulli on `{0, 1}` with `P(X = 0) = a`.
    pub fn bernoulli(a: S) -> Result<Self> {
        if !a.in_unit_interval() {
            return Err(Error::InvalidDistribution(
                "Bernoulli parameter outside [0, 1]".into(),
            ));
        }
        let b = S::one() - a.clone();
        Self::from_pairs(vec![(S::zero(), a), (S::one(), b)])
    }

    /// Empirical distribution of a sample: mass `1/len` per listed point.
    pub fn empirical(ys: &[S]) -> Result<Self> {
        if ys.is_empty() {
            return Err(Error::EmptySample);
        }
        let w = S::one() / S::from_usize(ys.len());
        Self::from_pairs(ys.iter().map(|y| (y.clone(), w.clone())).collect())
    }

    pub fn support(&self) -> &[S] {
        &self.support
    }

    pub fn masses(&self) -> &[S] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, &S)> {
        self.support.iter().zip(self.masses.iter())
    }

    /// Mass at `x` (zero when `x` is not in the support).
    pub fn mass_at(&self, x: &S) -> S {
        self.iter()
            .find(|(p, _)| p.approx_eq(x))
            .map(|(_, m)| m.clone())
            .unwrap_or_else(S::zero)
    }

    /// `true` when every support point with positive mass is 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.iter().all(|(p, m)| {
            m.is_zero_tol() || p.is_zero_tol() || p.approx_eq(&S::one())
        })
    }

    pub fn cdf(&self, q: &S) -> Result<S> {
        check_point(q).map_err(|_| Error::Domain("cdf argument outside [0, 1]".into()))?;
        Ok(sweep_cdf(&self.support, &self.masses, &[], q, false))
    }

    pub fn quantile(&self, spec: &QuantileSpec<S>) -> S {
        quantile_of(&self.support, &self.masses, &[], spec)
    }

    pub fn into_mixed(self) -> MixedDist<S> {
        MixedDist {
            points: self.support,
            masses: self.masses,
            segments: Vec::new(),
        }
    }
}

impl<S: Scalar> MixedDist<S> {
    pub fn new(atoms: Vec<(S, S)>, segments: Vec<Segment<S>>) -> Result<Self> {
        let mut total = S::zero();
        for (x, m) in &atoms {
            check_point(x)?;
            if m.lt_tol(&S::zero()) {
                return Err(Error::InvalidDistribution("negative atom mass".into()));
            }
            total = total + m.clone();
        }
        let mut segs: Vec<Segment<S>> = Vec::with_capacity(segments.len());
        for s in segments {
            check_point(&s.lo)?;
            check_point(&s.hi)?;
            if s.lo >= s.hi {
                return Err(Error::InvalidDistribution("segment with lo >= hi".into()));
            }
            if s.density.lt_tol(&S::zero()) {
                return Err(Error::InvalidDistribution("negative density".into()));
            }
            total = total + s.density.clone() * (s.hi.clone() - s.lo.clone());
            if !s.density.is_zero_tol() {
                segs.push(s);
            }
        }
        segs.sort_by(|a, b| a.lo.partial_cmp(&b.lo).expect("validated scalars are ordered"));
        for pair in segs.windows(2) {
            if pair[0].hi.gt_tol(&pair[1].lo) {
                return Err(Error::InvalidDistribution("overlapping segments".into()));
            }
        }
        check_total(&total)?;
        let (points, masses) = canonical_atoms(atoms);
        Ok(MixedDist {
            points,
            masses,
            segments: segs,
        })
    }

    /// Density `alpha/q0` on `[0, q0]` and `(1-alpha)/(1-q0)` on `(q0, 1]`.
    /// Its lower alpha-quantile is `q0`.
    pub fn choice2(alpha: S, q0: S) -> Result<Self> {
        if !alpha.in_unit_interval() {
            return Err(Error::InvalidDistribution("alpha outside [0, 1]".into()));
        }
        if q0.le_tol(&S::zero()) || q0.ge_tol(&S::one()) {
            return Err(Error::InvalidDistribution(
                "choice II requires 0 < q0 < 1".into(),
            ));
        }
        let lower = Segment {
            lo: S::zero(),
            hi: q0.clone(),
            density: alpha.clone() / q0.clone(),
        };
        let upper = Segment {
            lo: q0.clone(),
            hi: S::one(),
            density: (S::one() - alpha) / (S::one() - q0),
        };
        Self::new(Vec::new(), vec![lower, upper])
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&S, &S)> {
        self.points.iter().zip(self.masses.iter())
    }

    pub fn segments(&self) -> &[Segment<S>] {
        &self.segments
    }

    pub fn is_discrete(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn cdf(&self, q: &S) -> Result<S> {
        check_point(q).map_err(|_| Error::Domain("cdf argument outside [0, 1]".into()))?;
        Ok(sweep_cdf(&self.points, &self.masses, &self.segments, q, false))
    }

    /// `P(X < q)`.
    pub fn cdf_left(&self, q: &S) -> Result<S> {
        check_point(q).map_err(|_| Error::Domain("cdf argument outside [0, 1]".into()))?;
        Ok(sweep_cdf(&self.points, &self.masses, &self.segments, q, true))
    }

    pub fn quantile(&self, spec: &QuantileSpec<S>) -> S {
        quantile_of(&self.points, &self.masses, &self.segments, spec)
    }

    /// `[inf Q, sup Q]` for level `alpha`.
    pub fn quantile_set(&self, alpha: &S) -> (S, S) {
        (
            first_crossing(&self.points, &self.masses, &self.segments, alpha, false),
            first_crossing(&self.points, &self.masses, &self.segments, alpha, true),
        )
    }

    /// Converts to a finite-support distribution when there are no segments.
    pub fn to_discrete(&self) -> Option<DiscreteDist<S>> {
        if !self.segments.is_empty() {
            return None;
        }
        Some(DiscreteDist {
            support: self.points.clone(),
            masses: self.masses.clone(),
        })
    }
}

impl<S: Scalar> Dist<S> {
    pub fn cdf(&self, q: &S) -> Result<S> {
        match self {
            Dist::Discrete(d) => d.cdf(q),
            Dist::Mixed(m) => m.cdf(q),
        }
    }

    pub fn quantile(&self, spec: &QuantileSpec<S>) -> S {
        match self {
            Dist::Discrete(d) => d.quantile(spec),
            Dist::Mixed(m) => m.quantile(spec),
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteDist<S>> {
        match self {
            Dist::Discrete(d) => Some(d),
            Dist::Mixed(_) => None,
        }
    }

    /// Finite-support view, converting segment-free mixed distributions.
    pub fn to_discrete(&self) -> Option<DiscreteDist<S>> {
        match self {
            Dist::Discrete(d) => Some(d.clone()),
            Dist::Mixed(m) => m.to_discrete(),
        }
    }

    pub fn to_mixed(&self) -> MixedDist<S> {
        match self {
            Dist::Discrete(d) => d.clone().into_mixed(),
            Dist::Mixed(m) => m.clone(),
        }
    }

    fn parts(&self) -> (&[S], &[S], &[Segment<S>]) {
        match self {
            Dist::Discrete(d) => (&d.support, &d.masses, &[]),
            Dist::Mixed(m) => (&m.points, &m.masses, &m.segments),
        }
    }

    pub fn point_mass(x: S) -> Result<Self> {
        DiscreteDist::point_mass(x).map(Dist::Discrete)
    }

    pub fn bernoulli(a: S) -> Result<Self> {
        DiscreteDist::bernoulli(a).map(Dist::Discrete)
    }
}

impl<S> From<DiscreteDist<S>> for Dist<S> {
    fn from(d: DiscreteDist<S>) -> Self {
        Dist::Discrete(d)
    }
}

impl<S> From<MixedDist<S>> for Dist<S> {
    fn from(m: MixedDist<S>) -> Self {
        Dist::Mixed(m)
    }
}

/// Sorted union of 0, 1, atom positions and segment endpoints.
fn breakpoints<S: Scalar>(points: &[S], segments: &[Segment<S>]) -> Vec<S> {
    let mut bps: Vec<S> = Vec::with_capacity(points.len() + 2 * segments.len() + 2);
    bps.push(S::zero());
    bps.push(S::one());
    bps.extend(points.iter().cloned());
    for s in segments {
        bps.push(s.lo.clone());
        bps.push(s.hi.clone());
    }
    sort_scalars(&mut bps);
    bps.dedup_by(|a, b| a.approx_eq(b));
    bps
}

/// Density on the elementary interval `(a, b)` between adjacent breakpoints.
fn density_between<S: Scalar>(segments: &[Segment<S>], a: &S, b: &S) -> S {
    let mid = (a.clone() + b.clone()) * S::half();
    segments
        .iter()
        .filter(|s| s.lo < mid && mid < s.hi)
        .fold(S::zero(), |acc, s| acc + s.density.clone())
}

fn sweep_cdf<S: Scalar>(
    points: &[S],
    masses: &[S],
    segments: &[Segment<S>],
    q: &S,
    left: bool,
) -> S {
    let mut total = S::zero();
    for (x, m) in points.iter().zip(masses) {
        let counted = if left { x < q && !x.approx_eq(q) } else { x <= q || x.approx_eq(q) };
        if counted {
            total = total + m.clone();
        }
    }
    for s in segments {
        if *q <= s.lo {
            continue;
        }
        let top = if *q < s.hi { q.clone() } else { s.hi.clone() };
        total = total + s.density.clone() * (top - s.lo.clone());
    }
    total
}

/// Smallest `q` in `[0, 1]` with `F(q) >= t` (or `F(q) > t` when `strict`),
/// capped at 1 when no such point exists.
fn first_crossing<S: Scalar>(
    points: &[S],
    masses: &[S],
    segments: &[Segment<S>],
    t: &S,
    strict: bool,
) -> S {
    let meets = |f: &S| if strict { f.gt_tol(t) } else { f.ge_tol(t) };
    let bps = breakpoints(points, segments);
    let mut atom_idx = 0;
    let mut f_prev = S::zero();
    let mut prev: Option<&S> = None;
    for b in &bps {
        let mut f = f_prev.clone();
        if let Some(p) = prev {
            let d = density_between(segments, p, b);
            if d > S::zero() {
                let candidate = p.clone() + (t.clone() - f_prev.clone()) / d.clone();
                if candidate >= *p && candidate < *b {
                    return candidate;
                }
                f = f + d * (b.clone() - p.clone());
            }
        }
        while atom_idx < points.len() && (points[atom_idx] < *b || points[atom_idx].approx_eq(b)) {
            f = f + masses[atom_idx].clone();
            atom_idx += 1;
        }
        if meets(&f) {
            return b.clone();
        }
        prev = Some(b);
        f_prev = f;
    }
    S::one()
}

fn quantile_of<S: Scalar>(
    points: &[S],
    masses: &[S],
    segments: &[Segment<S>],
    spec: &QuantileSpec<S>,
) -> S {
    let r = &spec.r;
    if r.is_zero_tol() {
        return first_crossing(points, masses, segments, &spec.alpha, false);
    }
    let sup = first_crossing(points, masses, segments, &spec.alpha, true);
    if r.approx_eq(&S::one()) {
        return sup;
    }
    let inf = first_crossing(points, masses, segments, &spec.alpha, false);
    r.clone() * sup + (S::one() - r.clone()) * inf
}

/// Distribution whose CDF is `(1 - w) F0 + w F1`.
pub fn mix<S: Scalar>(d0: &Dist<S>, d1: &Dist<S>, weight_on_d1: &S) -> Result<MixedDist<S>> {
    if !weight_on_d1.in_unit_interval() {
        return Err(Error::Domain("mixture weight outside [0, 1]".into()));
    }
    let w1 = weight_on_d1.clone();
    let w0 = S::one() - w1.clone();
    let (p0, m0, s0) = d0.parts();
    let (p1, m1, s1) = d1.parts();

    let mut atoms = Vec::with_capacity(p0.len() + p1.len());
    for (x, m) in p0.iter().zip(m0) {
        atoms.push((x.clone(), w0.clone() * m.clone()));
    }
    for (x, m) in p1.iter().zip(m1) {
        atoms.push((x.clone(), w1.clone() * m.clone()));
    }
    let (points, masses) = canonical_atoms(atoms);

    let mut segments = Vec::new();
    if !s0.is_empty() || !s1.is_empty() {
        let mut cuts: Vec<S> = Vec::new();
        for s in s0.iter().chain(s1) {
            cuts.push(s.lo.clone());
            cuts.push(s.hi.clone());
        }
        sort_scalars(&mut cuts);
        cuts.dedup_by(|a, b| a.approx_eq(b));
        for pair in cuts.windows(2) {
            let d = w0.clone() * density_between(s0, &pair[0], &pair[1])
                + w1.clone() * density_between(s1, &pair[0], &pair[1]);
            if d > S::zero() && !d.is_zero_tol() {
                segments.push(Segment {
                    lo: pair[0].clone(),
                    hi: pair[1].clone(),
                    density: d,
                });
            }
        }
    }
    Ok(MixedDist {
        points,
        masses,
        segments,
    })
}

impl<S: Scalar> fmt::Display for DiscreteDist<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "discrete: [")?;
        for (i, (x, m)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({}, {})", x.to_fraction_string(), m.to_fraction_string())?;
        }
        write!(f, "]")
    }
}

impl<S: Scalar> fmt::Display for MixedDist<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mixed: atoms [")?;
        for (i, (x, m)) in self.atoms().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({}, {})", x.to_fraction_string(), m.to_fraction_string())?;
        }
        write!(f, "] segments [")?;
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(
                f,
                "({}, {}, {})",
                s.lo.to_fraction_string(),
                s.hi.to_fraction_string(),
                s.density.to_fraction_string()
            )?;
        }
        write!(f, "]")
    }
}

impl<S: Scalar> fmt::Display for Dist<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dist::Discrete(d) => d.fmt(f),
            Dist::Mixed(m) => m.fmt(f),
        }
    }
}

/// Parses `discrete: [(point, mass), ...]` or `choice2: {alpha, q0}`.
///
/// The choice-II form also accepts named fields, `{alpha: 1/2, q0: 3/5}`.
pub fn parse_dist<S: Scalar>(input: &str) -> Result<Dist<S>> {
    let text = input.trim();
    if let Some(body) = text.strip_prefix("discrete:") {
        let body = body.trim();
        let inner = body
            .strip_prefix('[')
            .and_then(|b| b.strip_suffix(']'))
            .ok_or_else(|| Error::parse(input, "expected [...] after `discrete:`"))?;
        let mut pairs = Vec::new();
        let mut rest = inner.trim();
        while !rest.is_empty() {
            let open = rest
                .strip_prefix('(')
                .ok_or_else(|| Error::parse(input, "expected `(`"))?;
            let close = open
                .find(')')
                .ok_or_else(|| Error::parse(input, "unbalanced parenthesis"))?;
            let (x, m) = open[..close]
                .split_once(',')
                .ok_or_else(|| Error::parse(input, "expected `(point, mass)`"))?;
            pairs.push((S::parse_literal(x)?, S::parse_literal(m)?));
            rest = open[close + 1..].trim_start();
            rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
        }
        return DiscreteDist::from_pairs(pairs).map(Dist::Discrete);
    }
    if let Some(body) = text.strip_prefix("choice2:") {
        let inner = body
            .trim()
            .strip_prefix('{')
            .and_then(|b| b.strip_suffix('}'))
            .ok_or_else(|| Error::parse(input, "expected {...} after `choice2:`"))?;
        let mut alpha = None;
        let mut q0 = None;
        for (pos, field) in inner.split(',').enumerate() {
            let field = field.trim();
            let (key, value) = match field.split_once([':', '=']) {
                Some((k, v)) => (k.trim(), v.trim()),
                None if pos == 0 => ("alpha", field),
                None if pos == 1 => ("q0", field),
                None => return Err(Error::parse(input, "too many fields")),
            };
            let v = S::parse_literal(value)?;
            match key {
                "alpha" => alpha = Some(v),
                "q0" => q0 = Some(v),
                _ => return Err(Error::parse(input, "unknown field")),
            }
        }
        let alpha = alpha.ok_or_else(|| Error::parse(input, "missing alpha"))?;
        let q0 = q0.ok_or_else(|| Error::parse(input, "missing q0"))?;
        return MixedDist::choice2(alpha, q0).map(Dist::Mixed);
    }
    Err(Error::parse(input, "expected `discrete:` or `choice2:`"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    fn lower(alpha: Exact) -> QuantileSpec<Exact> {
        QuantileSpec::lower(alpha).unwrap()
    }

    #[test]
    fn bernoulli_cdf_at_zero() {
        let d = DiscreteDist::bernoulli(q(985, 1000)).unwrap();
        assert_eq!(d.cdf(&q(0, 1)).unwrap(), q(985, 1000));
        assert!(d.cdf(&q(11, 10)).is_err());
    }

    #[test]
    fn point_mass_cdf_before_atom() {
        let d = DiscreteDist::point_mass(q(3, 10)).unwrap();
        assert_eq!(d.cdf(&q(2, 10)).unwrap(), q(0, 1));
        assert_eq!(d.cdf(&q(3, 10)).unwrap(), q(1, 1));
    }

    #[test]
    fn choice2_cdf_inside_lower_segment() {
        let d = MixedDist::choice2(q(1, 2), q(3, 5)).unwrap();
        assert_eq!(d.cdf(&q(3, 10)).unwrap(), q(1, 4));
        assert_eq!(d.cdf_left(&q(3, 5)).unwrap(), q(1, 2));
    }

    #[test]
    fn quantiles_of_bernoulli_near_one() {
        let a = QuantileSpec::new(q(99, 100), q(1, 2)).unwrap();
        let d = DiscreteDist::bernoulli(q(985, 1000)).unwrap();
        assert_eq!(d.quantile(&a), q(1, 1));
        let d = DiscreteDist::bernoulli(q(9925, 10000)).unwrap();
        assert_eq!(d.quantile(&a), q(0, 1));
    }

    #[test]
    fn fair_coin_selects_by_r() {
        let d = DiscreteDist::bernoulli(q(1, 2)).unwrap();
        for (r, expected) in [(q(0, 1), q(0, 1)), (q(1, 1), q(1, 1)), (q(1, 2), q(1, 2))] {
            let spec = QuantileSpec::new(q(1, 2), r).unwrap();
            assert_eq!(d.quantile(&spec), expected);
        }
    }

    #[test]
    fn point_mass_quantile() {
        let d = DiscreteDist::point_mass(q(3, 10)).unwrap();
        for r in [q(0, 1), q(1, 3), q(1, 1)] {
            let spec = QuantileSpec::new(q(7, 10), r).unwrap();
            assert_eq!(d.quantile(&spec), q(3, 10));
        }
    }

    #[test]
    fn spec_requires_endpoint_conventions() {
        assert!(QuantileSpec::new(q(0, 1), q(0, 1)).is_err());
        assert!(QuantileSpec::new(q(1, 1), q(1, 1)).is_err());
        assert!(QuantileSpec::new(q(0, 1), q(1, 1)).is_ok());
        assert_eq!(QuantileSpec::lower(q(0, 1)).unwrap().r, q(1, 1));
    }

    #[test]
    fn alpha_zero_and_one_extremes() {
        let d: Dist<Exact> = DiscreteDist::from_pairs(vec![(q(1, 5), q(1, 2)), (q(4, 5), q(1, 2))])
            .unwrap()
            .into();
        assert_eq!(d.quantile(&lower(q(0, 1))), q(1, 5));
        assert_eq!(d.quantile(&lower(q(1, 1))), q(4, 5));
    }

    #[test]
    fn mix_degenerate_weight_returns_d1() {
        let d0: Dist<Exact> = MixedDist::choice2(q(1, 2), q(3, 5)).unwrap().into();
        let d1: Dist<Exact> = DiscreteDist::bernoulli(q(1, 3)).unwrap().into();
        let m = mix(&d0, &d1, &q(1, 1)).unwrap();
        assert_eq!(m.to_discrete().unwrap(), d1.to_discrete().unwrap());
    }

    #[test]
    fn mix_of_point_masses() {
        let d0 = Dist::point_mass(q(1, 1)).unwrap();
        let d1 = Dist::point_mass(q(0, 1)).unwrap();
        let m = mix(&d0, &d1, &q(1, 2)).unwrap().to_discrete().unwrap();
        assert_eq!(m.support(), &[q(0, 1), q(1, 1)]);
        assert_eq!(m.masses(), &[q(1, 2), q(1, 2)]);
    }

    #[test]
    fn mix_mass_at_zero() {
        let d0 = Dist::bernoulli(q(1, 4)).unwrap();
        let d1 = Dist::point_mass(q(0, 1)).unwrap();
        let m = mix(&d0, &d1, &q(1, 2)).unwrap();
        assert_eq!(m.cdf(&q(0, 1)).unwrap(), q(5, 8));
    }

    #[test]
    fn mix_splits_segments() {
        let d0: Dist<Exact> = MixedDist::choice2(q(1, 2), q(3, 5)).unwrap().into();
        let d1: Dist<Exact> = MixedDist::choice2(q(1, 10), q(9, 10)).unwrap().into();
        let w = q(1, 3);
        let m = mix(&d0, &d1, &w).unwrap();
        for x in [q(0, 1), q(1, 10), q(3, 5), q(7, 10), q(9, 10), q(19, 20), q(1, 1)] {
            let expected =
                (q(1, 1) - w.clone()) * d0.cdf(&x).unwrap() + w.clone() * d1.cdf(&x).unwrap();
            assert_eq!(m.cdf(&x).unwrap(), expected);
        }
    }

    #[test]
    fn quantile_inside_segment() {
        let d = MixedDist::choice2(q(1, 10), q(9, 10)).unwrap();
        assert_eq!(d.quantile(&lower(q(1, 10))), q(9, 10));
        assert_eq!(d.quantile(&lower(q(1, 20))), q(9, 20));
        assert_eq!(d.quantile_set(&q(1, 10)), (q(9, 10), q(9, 10)));
    }

    #[test]
    fn flat_region_gives_interval() {
        let d = MixedDist::new(
            vec![],
            vec![
                Segment { lo: q(0, 1), hi: q(1, 4), density: q(2, 1) },
                Segment { lo: q(3, 4), hi: q(1, 1), density: q(2, 1) },
            ],
        )
        .unwrap();
        assert_eq!(d.quantile_set(&q(1, 2)), (q(1, 4), q(3, 4)));
    }

    #[test]
    fn rejects_invalid_distributions() {
        assert!(DiscreteDist::new(vec![q(1, 2), q(1, 4)], vec![q(1, 2), q(1, 2)]).is_err());
        assert!(DiscreteDist::new(vec![q(1, 2)], vec![q(1, 3)]).is_err());
        assert!(DiscreteDist::new(vec![q(3, 2)], vec![q(1, 1)]).is_err());
        assert!(MixedDist::<Exact>::choice2(q(1, 2), q(1, 1)).is_err());
    }

    #[test]
    fn parses_literals() {
        let d: Dist<Exact> = parse_dist("discrete: [(0, 3/10), (0.6, 2/5), (1, 3/10)]").unwrap();
        assert_eq!(d.cdf(&q(3, 5)).unwrap(), q(7, 10));
        let c: Dist<Exact> = parse_dist("choice2: {alpha: 1/2, q0: 3/5}").unwrap();
        assert_eq!(c.cdf(&q(3, 10)).unwrap(), q(1, 4));
        let c2: Dist<Exact> = parse_dist("choice2: {0.5, 0.6}").unwrap();
        assert_eq!(c, c2);
        assert!(parse_dist::<Exact>("beta: {1, 2}").is_err());
        let round: Dist<Exact> = parse_dist(&d.to_string()).unwrap();
        assert_eq!(round, d);
    }

    #[test]
    fn float_backend_matches() {
        let d = MixedDist::choice2(0.5f64, 0.6).unwrap();
        assert!((d.cdf(&0.3).unwrap() - 0.25).abs() < 1e-12);
        let spec = QuantileSpec::lower(0.5f64).unwrap();
        assert!((d.quantile(&spec) - 0.6).abs() < 1e-12);
    }
}
