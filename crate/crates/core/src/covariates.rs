//! Discrete covariates: rules that output one treatment probability per
//! covariate value, the exact outcome quantile of the resulting mixture, and
//! worst-case states at small sample sizes.
//!
//! Every sample unit carries a covariate drawn from the known `F_X`. For a
//! rule `delta`, `e_k = E[delta_k(w)]` is obtained by enumerating covariate
//! draws, outcomes and treatment statuses, and the outcome distribution is
//! `sum_k F_X(x_k) [e_k Y_{1,x_k} + (1 - e_k) Y_{0,x_k}]`.
//!
//! The benchmark is the best quantile over all rules. Its superlevel sets in
//! `e` are half-spaces, so the maximum is attained at one of the `2^K`
//! deterministic per-covariate rules.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::{epsilons, lemma1_y1, same, two_point_y0, Branch, EPSILON_STEPS};
use crate::dist::{mix, DiscreteDist, Dist, MixedDist, QuantileSpec};
use crate::engine::{snap_zero, Design, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::rules::{bits_index, index_bits, RandomTableParams, Sample, TreatmentRule};
use crate::scalar::Scalar;

/// Largest number of covariate values a table rule may use.
pub const MAX_COVARIATES: usize = 10;

/// Treatment status, covariate index and outcome of one sampled unit.
#[derive(Clone, Debug, PartialEq)]
pub struct CovUnit<S> {
    pub treated: bool,
    pub x: usize,
    pub y: S,
}

/// Sampled units. In the fixed design the untreated units come first.
#[derive(Clone, Debug, PartialEq)]
pub struct CovSample<S> {
    pub units: Vec<CovUnit<S>>,
}

impl<S: Scalar> CovSample<S> {
    pub fn covariates(&self) -> Vec<usize> {
        self.units.iter().map(|u| u.x).collect()
    }

    /// The sample with covariates dropped.
    pub fn to_plain(&self, design: &Design<S>) -> Sample<S> {
        let ys = |treated: bool| -> Vec<S> {
            self.units
                .iter()
                .filter(|u| u.treated == treated)
                .map(|u| u.y.clone())
                .collect()
        };
        match design {
            Design::Fixed { .. } => Sample::Fixed { y0: ys(false), y1: ys(true) },
            Design::Random { .. } => Sample::Random {
                t: self.units.iter().map(|u| u.treated).collect(),
                y: self.units.iter().map(|u| u.y.clone()).collect(),
            },
            Design::Innovation { .. } => Sample::Innovation { y1: ys(true) },
        }
    }

    fn from_parts(design: &Design<S>, xs: &[usize], bits: &[bool]) -> Result<Self> {
        let plain = Sample::from_bits(design, bits)?;
        let units = match plain {
            Sample::Fixed { y0, y1 } => y0
                .into_iter()
                .map(|y| (false, y))
                .chain(y1.into_iter().map(|y| (true, y)))
                .collect::<Vec<_>>(),
            Sample::Random { t, y } => t.into_iter().zip(y).collect(),
            Sample::Innovation { y1 } => y1.into_iter().map(|y| (true, y)).collect(),
        };
        Ok(CovSample {
            units: units
                .into_iter()
                .zip(xs)
                .map(|((treated, y), &x)| CovUnit { treated, x, y })
                .collect(),
        })
    }
}

fn sample_size<S>(design: &Design<S>) -> usize {
    match design {
        Design::Fixed { n0, n1 } => n0 + n1,
        Design::Random { n, .. } | Design::Innovation { n, .. } => *n,
    }
}

/// Treatment probabilities for every covariate value, every covariate
/// sequence and every binary outcome pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateTable<S> {
    k: usize,
    n: usize,
    bits: usize,
    values: Vec<S>,
}

impl<S: Scalar> CovariateTable<S> {
    fn block(&self) -> usize {
        self.k.pow(self.n as u32) << self.bits
    }

    fn offset(&self, k: usize, xs: &[usize], bits: &[bool]) -> usize {
        let xi = xs.iter().fold(0usize, |acc, &x| acc * self.k + x);
        k * self.block() + (xi << self.bits) + bits_index(bits)
    }

    fn check_shape(k: usize, n: usize, bits: usize) -> Result<usize> {
        if k == 0 || k > MAX_COVARIATES {
            return Err(Error::Rule(format!("covariate tables need 1 to {MAX_COVARIATES} values")));
        }
        (k as u128)
            .checked_pow(n as u32)
            .and_then(|c| c.checked_mul(k as u128))
            .and_then(|c| c.checked_mul(1u128 << bits.min(100)))
            .filter(|&c| c <= DEFAULT_BUDGET)
            .map(|c| c as usize)
            .ok_or_else(|| Error::Rule("covariate table is too large".into()))
    }

    /// Table over `k` covariate values for samples of `design`.
    pub fn from_fn(k: usize, design: &Design<S>, f: impl Fn(usize, &[usize], &[bool]) -> S) -> Result<Self> {
        let n = sample_size(design);
        let bits = design.table_bits();
        let total = Self::check_shape(k, n, bits)?;
        let mut values = Vec::with_capacity(total);
        for kk in 0..k {
            for xi in 0..k.pow(n as u32) {
                let xs = covariate_digits(xi, k, n);
                for b in 0..1usize << bits {
                    values.push(f(kk, &xs, &index_bits(b, bits)));
                }
            }
        }
        if let Some(v) = values.iter().find(|v| !v.in_unit_interval()) {
            return Err(Error::Rule(format!("table entry {} outside [0, 1]", v.to_fraction_string())));
        }
        Ok(CovariateTable { k, n, bits, values })
    }

    pub fn covariates(&self) -> usize {
        self.k
    }

    pub fn get(&self, k: usize, xs: &[usize], bits: &[bool]) -> &S {
        &self.values[self.offset(k, xs, bits)]
    }

    /// Parses `k xs bits -> value` lines: `k` is the covariate the value
    /// applies to, `xs` the sampled covariate digits and `bits` the binary
    /// sample in the plain table encoding. `-` stands for an empty field and
    /// `#` starts a comment. Every key must appear exactly once.
    pub fn parse(text: &str, k: usize, design: &Design<S>) -> Result<Self> {
        let n = sample_size(design);
        let bits = design.table_bits();
        let total = Self::check_shape(k, n, bits)?;
        let mut slots: Vec<Option<S>> = vec![None; total];
        let shell: CovariateTable<S> = CovariateTable { k, n, bits, values: Vec::new() };
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line
                .split_once("->")
                .ok_or_else(|| Error::parse(raw, "expected `k xs bits -> value`"))?;
            let fields: Vec<&str> = key.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::parse(raw, "key must have three fields"));
            }
            let kk: usize = fields[0].parse().map_err(|_| Error::parse(raw, "bad covariate index"))?;
            if kk >= k {
                return Err(Error::parse(raw, "covariate index out of range"));
            }
            let xs: Vec<usize> = digits(fields[1])
                .chars()
                .map(|c| match c.to_digit(10) {
                    Some(d) if (d as usize) < k => Ok(d as usize),
                    _ => Err(Error::parse(raw, "bad covariate digit")),
                })
                .collect::<Result<_>>()?;
            let key_bits: Vec<bool> = digits(fields[2])
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    _ => Err(Error::parse(raw, "bits must be 0 or 1")),
                })
                .collect::<Result<_>>()?;
            if xs.len() != n || key_bits.len() != bits {
                return Err(Error::parse(raw, &format!("expected {n} covariate digits and {bits} bits")));
            }
            let slot = &mut slots[shell.offset(kk, &xs, &key_bits)];
            if slot.is_some() {
                return Err(Error::parse(raw, "duplicate key"));
            }
            *slot = Some(S::parse_literal(val)?);
        }
        let missing = slots.iter().position(Option::is_none);
        if let Some(pos) = missing {
            return Err(Error::Rule(format!("table is missing entry {pos}")));
        }
        let values: Vec<S> = slots.into_iter().flatten().collect();
        let table = CovariateTable { k, n, bits, values };
        Self::from_fn(k, design, |kk, xs, b| table.get(kk, xs, b).clone())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for kk in 0..self.k {
            for xi in 0..self.k.pow(self.n as u32) {
                let xs = covariate_digits(xi, self.k, self.n);
                let xs_text: String = xs.iter().map(|d| char::from_digit(*d as u32, 10).expect("digit")).collect();
                for b in 0..1usize << self.bits {
                    let bits = index_bits(b, self.bits);
                    let bits_text: String = bits.iter().map(|x| if *x { '1' } else { '0' }).collect();
                    out.push_str(&format!(
                        "{kk} {} {} -> {}\n",
                        dash_if_empty(&xs_text),
                        dash_if_empty(&bits_text),
                        self.get(kk, &xs, &bits).to_fraction_string()
                    ));
                }
            }
        }
        out
    }
}

fn digits(field: &str) -> &str {
    if field == "-" {
        ""
    } else {
        field
    }
}

fn dash_if_empty(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

fn covariate_digits(mut index: usize, k: usize, n: usize) -> Vec<usize> {
    let mut xs = vec![0; n];
    for pos in (0..n).rev() {
        xs[pos] = index % k;
        index /= k;
    }
    xs
}

type CovFn<S> = Arc<dyn Fn(&CovSample<S>) -> Vec<S> + Send + Sync>;

/// A rule mapping a sample with covariates to one probability per value.
#[derive(Clone)]
pub enum CovariateRule<S> {
    Constant(Vec<S>),
    Table(CovariateTable<S>),
    /// A covariate-blind rule, applied to every value.
    Plain { k: usize, rule: TreatmentRule<S> },
    Custom { name: String, k: usize, f: CovFn<S> },
}

impl<S: Scalar> fmt::Debug for CovariateRule<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl<S: Scalar> CovariateRule<S> {
    pub fn constant(values: Vec<S>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Rule("a covariate rule needs at least one value".into()));
        }
        if values.iter().any(|v| !v.in_unit_interval()) {
            return Err(Error::Rule("constant entries must lie in [0, 1]".into()));
        }
        Ok(CovariateRule::Constant(values))
    }

    pub fn covariates(&self) -> usize {
        match self {
            CovariateRule::Constant(v) => v.len(),
            CovariateRule::Table(t) => t.k,
            CovariateRule::Plain { k, .. } | CovariateRule::Custom { k, .. } => *k,
        }
    }

    pub fn evaluate(&self, sample: &CovSample<S>, design: &Design<S>) -> Result<Vec<S>> {
        let k = self.covariates();
        if sample.units.iter().any(|u| u.x >= k) {
            return Err(Error::Rule("sample covariate out of range".into()));
        }
        let out = match self {
            CovariateRule::Constant(v) => v.clone(),
            CovariateRule::Table(t) => {
                let bits = sample
                    .to_plain(design)
                    .bits()
                    .ok_or_else(|| Error::Rule("table rule evaluated on a non-binary sample".into()))?;
                let xs = sample.covariates();
                if xs.len() != t.n || bits.len() != t.bits {
                    return Err(Error::Rule("sample does not match the table shape".into()));
                }
                (0..k).map(|kk| t.get(kk, &xs, &bits).clone()).collect()
            }
            CovariateRule::Plain { rule, .. } => {
                let v = rule.evaluate(&sample.to_plain(design))?;
                vec![v; k]
            }
            CovariateRule::Custom { name, f, .. } => {
                let v = f(sample);
                if v.len() != k || v.iter().any(|x| !x.in_unit_interval()) {
                    return Err(Error::Rule(format!("rule {name} returned an invalid vector")));
                }
                v
            }
        };
        Ok(out)
    }

    pub fn label(&self) -> String {
        match self {
            CovariateRule::Constant(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_fraction_string()).collect();
                format!("const:({})", parts.join(","))
            }
            CovariateRule::Table(t) => format!("cov-table[K={}, {} bits]", t.k, t.bits),
            CovariateRule::Plain { k, rule } => format!("{}@K={k}", rule.label()),
            CovariateRule::Custom { name, .. } => name.clone(),
        }
    }
}

/// Deterministic pseudo-random covariate table, entries drawn as in
/// [`crate::rules::random_tabular_rule`].
pub fn random_covariate_rule<S: Scalar>(
    k: usize,
    design: &Design<S>,
    seed: u64,
    params: RandomTableParams,
) -> Result<CovariateRule<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sample_size(design);
    let total = CovariateTable::<S>::check_shape(k, n, design.table_bits())?;
    let draws: Vec<S> = (0..total)
        .map(|_| {
            let u: f64 = rng.random();
            if u < params.p_one {
                S::one()
            } else if u < params.p_one + params.p_zero {
                S::zero()
            } else {
                S::from_ratio(rng.random_range(0..=params.denominator), params.denominator)
            }
        })
        .collect();
    let block = k.pow(n as u32) << design.table_bits();
    let bits = design.table_bits();
    CovariateTable::from_fn(k, design, |kk, xs, b| {
        let xi = xs.iter().fold(0usize, |acc, &x| acc * k + x);
        draws[kk * block + (xi << bits) + bits_index(b)].clone()
    })
    .map(CovariateRule::Table)
}

/// Known covariate distribution and per-covariate marginals
/// `marginals[k] = (Y_{0,x_k}, Y_{1,x_k})`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateState<S> {
    pub fx: Vec<S>,
    pub marginals: Vec<(Dist<S>, Dist<S>)>,
}

impl<S: Scalar> CovariateState<S> {
    pub fn new(fx: Vec<S>, marginals: Vec<(Dist<S>, Dist<S>)>) -> Result<Self> {
        if fx.is_empty() || fx.len() != marginals.len() {
            return Err(Error::InvalidDistribution(
                "need one pair of marginals per covariate value".into(),
            ));
        }
        if fx.iter().any(|m| m.le_tol(&S::zero())) {
            return Err(Error::InvalidDistribution("every covariate value needs positive mass".into()));
        }
        let total = fx.iter().cloned().fold(S::zero(), |a, b| a + b);
        if !total.approx_eq(&S::one()) {
            return Err(Error::InvalidDistribution("covariate masses must sum to 1".into()));
        }
        Ok(CovariateState { fx, marginals })
    }

    /// The same marginals at every covariate value.
    pub fn homogeneous(fx: Vec<S>, y0: Dist<S>, y1: Dist<S>) -> Result<Self> {
        let marginals = vec![(y0, y1); fx.len()];
        Self::new(fx, marginals)
    }

    /// Bernoulli marginals `P(Y_{0,x} = 0) = a0`, `P(Y_{1,x} = 0) = a1` for every `x`.
    pub fn bernoulli(fx: Vec<S>, a0: S, a1: S) -> Result<Self> {
        Self::homogeneous(fx, Dist::bernoulli(a0)?, Dist::bernoulli(a1)?)
    }

    pub fn k(&self) -> usize {
        self.fx.len()
    }

    /// Outcome distribution when covariate value `k` is treated with
    /// probability `e[k]`.
    pub fn mixture(&self, e: &[S]) -> Result<MixedDist<S>> {
        if e.len() != self.k() {
            return Err(Error::Domain("one assignment probability per covariate value".into()));
        }
        let mut acc: Option<(MixedDist<S>, S)> = None;
        for ((w, (y0, y1)), ek) in self.fx.iter().zip(&self.marginals).zip(e) {
            let part = mix(y0, y1, ek)?;
            acc = Some(match acc {
                None => (part, w.clone()),
                Some((m, total)) => {
                    let new_total = total + w.clone();
                    let share = w.clone() / new_total.clone();
                    (mix(&m.into(), &part.into(), &share)?, new_total)
                }
            });
        }
        Ok(acc.expect("at least one covariate value").0)
    }

    /// `Y_{t,X}`: the outcome when everyone gets treatment `t`.
    pub fn marginal(&self, treated: bool) -> Result<MixedDist<S>> {
        let t = if treated { S::one() } else { S::zero() };
        self.mixture(&vec![t; self.k()])
    }

    fn sampled<'a>(&'a self, k: usize, treated: bool) -> Result<&'a DiscreteDist<S>> {
        let d = if treated { &self.marginals[k].1 } else { &self.marginals[k].0 };
        d.as_discrete().ok_or_else(|| {
            Error::Domain("sampled marginals must have finite support for exact evaluation".into())
        })
    }
}

/// One letter per possible unit: `(treated, x, y)` and its probability.
type Letter<S> = (bool, usize, S, S);

fn letters<S: Scalar>(s: &CovariateState<S>, treated: Option<bool>, p: Option<&S>) -> Result<Vec<Letter<S>>> {
    let mut out = Vec::new();
    let statuses: Vec<bool> = match treated {
        Some(t) => vec![t],
        None => vec![false, true],
    };
    for t in statuses {
        let pt = match p {
            Some(p) if t => p.clone(),
            Some(p) => S::one() - p.clone(),
            None => S::one(),
        };
        for (k, fk) in s.fx.iter().enumerate() {
            for (y, m) in s.sampled(k, t)?.iter() {
                out.push((t, k, y.clone(), pt.clone() * fk.clone() * m.clone()));
            }
        }
    }
    Ok(out)
}

fn unit_alphabets<S: Scalar>(s: &CovariateState<S>, d: &Design<S>) -> Result<Vec<Vec<Letter<S>>>> {
    Ok(match d {
        Design::Fixed { n0, n1 } => {
            let a0 = if *n0 > 0 { letters(s, Some(false), None)? } else { Vec::new() };
            let a1 = if *n1 > 0 { letters(s, Some(true), None)? } else { Vec::new() };
            let mut v = vec![a0; *n0];
            v.extend(std::iter::repeat_n(a1, *n1));
            v
        }
        Design::Random { n, p } => vec![letters(s, None, Some(p))?; *n],
        Design::Innovation { n, .. } => vec![letters(s, Some(true), None)?; *n],
    })
}

fn check_budget<S>(alphabets: &[Vec<S>], factor: u128, budget: u128) -> Result<()> {
    let count = alphabets
        .iter()
        .try_fold(factor, |acc, a| acc.checked_mul(a.len() as u128));
    match count {
        Some(c) if c <= budget => Ok(()),
        other => Err(Error::BudgetExceeded {
            needed: other.unwrap_or(u128::MAX),
            budget,
        }),
    }
}

/// Visits every sample with its probability.
fn for_each_sample<S: Scalar>(
    alphabets: &[Vec<Letter<S>>],
    mut f: impl FnMut(&CovSample<S>, &S) -> Result<()>,
) -> Result<()> {
    let len = alphabets.len();
    if alphabets.iter().any(|a| a.is_empty()) {
        return Ok(());
    }
    let mut idx = vec![0usize; len];
    loop {
        let mut w = S::one();
        let mut units = Vec::with_capacity(len);
        for (pos, &i) in idx.iter().enumerate() {
            let (t, x, y, m) = &alphabets[pos][i];
            w = w * m.clone();
            units.push(CovUnit { treated: *t, x: *x, y: y.clone() });
        }
        if !w.is_zero_tol() {
            f(&CovSample { units }, &w)?;
        }
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < alphabets[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn check_inputs<S: Scalar>(rule: &CovariateRule<S>, s: &CovariateState<S>, d: &Design<S>) -> Result<()> {
    d.validate()?;
    if rule.covariates() != s.k() {
        return Err(Error::Domain(format!(
            "rule has {} covariate values, state has {}",
            rule.covariates(),
            s.k()
        )));
    }
    Ok(())
}

/// `e_k = E[delta_k(w)]` for every covariate value.
pub fn expected_assignments_cov<S: Scalar>(
    rule: &CovariateRule<S>,
    s: &CovariateState<S>,
    d: &Design<S>,
) -> Result<Vec<S>> {
    check_inputs(rule, s, d)?;
    if let CovariateRule::Constant(v) = rule {
        return Ok(v.clone());
    }
    let alphabets = unit_alphabets(s, d)?;
    check_budget(&alphabets, 1, DEFAULT_BUDGET)?;
    let mut e = vec![S::zero(); s.k()];
    for_each_sample(&alphabets, |w, p| {
        for (acc, v) in e.iter_mut().zip(rule.evaluate(w, d)?) {
            *acc = acc.clone() + p.clone() * v;
        }
        Ok(())
    })?;
    Ok(e)
}

/// Distribution of `Y_{B(delta_X(w)), X}`.
pub fn outcome_distribution_cov<S: Scalar>(
    rule: &CovariateRule<S>,
    s: &CovariateState<S>,
    d: &Design<S>,
) -> Result<MixedDist<S>> {
    let e = expected_assignments_cov(rule, s, d)?;
    s.mixture(&e)
}

pub fn outcome_quantile_cov<S: Scalar>(
    rule: &CovariateRule<S>,
    s: &CovariateState<S>,
    d: &Design<S>,
    spec: &QuantileSpec<S>,
) -> Result<S> {
    Ok(outcome_distribution_cov(rule, s, d)?.quantile(spec))
}

/// Brute-force outcome distribution over sample, new covariate, treatment
/// and outcome jointly. Needs finite-support marginals everywhere.
pub fn outcome_distribution_cov_oracle<S: Scalar>(
    rule: &CovariateRule<S>,
    s: &CovariateState<S>,
    d: &Design<S>,
) -> Result<DiscreteDist<S>> {
    check_inputs(rule, s, d)?;
    let alphabets = unit_alphabets(s, d)?;
    let mut outcomes = 0u128;
    for k in 0..s.k() {
        outcomes += (s.sampled(k, false)?.len() + s.sampled(k, true)?.len()) as u128;
    }
    check_budget(&alphabets, outcomes, DEFAULT_BUDGET)?;
    let mut pairs: Vec<(S, S)> = Vec::new();
    for_each_sample(&alphabets, |w, p| {
        let delta = rule.evaluate(w, d)?;
        for (k, fk) in s.fx.iter().enumerate() {
            for (treated, pb) in [(true, delta[k].clone()), (false, S::one() - delta[k].clone())] {
                if pb.is_zero_tol() {
                    continue;
                }
                for (y, m) in s.sampled(k, treated)?.iter() {
                    pairs.push((y.clone(), p.clone() * fk.clone() * pb.clone() * m.clone()));
                }
            }
        }
        Ok(())
    })?;
    if pairs.is_empty() {
        return Err(Error::Domain("the oracle needs a non-empty sample alphabet".into()));
    }
    DiscreteDist::from_pairs(pairs)
}

/// Best quantile over all rules, taken over the deterministic
/// per-covariate rules. In the innovation design the never-treat rule
/// contributes the known quantile.
pub fn benchmark_cov<S: Scalar>(s: &CovariateState<S>, d: &Design<S>, spec: &QuantileSpec<S>) -> Result<S> {
    let k = s.k();
    if k > MAX_COVARIATES {
        return Err(Error::Domain("too many covariate values for the vertex benchmark".into()));
    }
    let mut best: Option<S> = None;
    for v in 0..1usize << k {
        let q = match d {
            Design::Innovation { q0, .. } if v == 0 => q0.clone(),
            _ => {
                let e: Vec<S> = index_bits(v, k).into_iter().map(|b| if b { S::one() } else { S::zero() }).collect();
                s.mixture(&e)?.quantile(spec)
            }
        };
        best = Some(match best {
            Some(b) => S::max_of(b, q),
            None => q,
        });
    }
    Ok(best.expect("at least one vertex"))
}

pub fn regret_cov<S: Scalar>(
    rule: &CovariateRule<S>,
    s: &CovariateState<S>,
    d: &Design<S>,
    spec: &QuantileSpec<S>,
) -> Result<S> {
    let qb = outcome_quantile_cov(rule, s, d, spec)?;
    Ok(snap_zero(benchmark_cov(s, d, spec)? - qb))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovariateCertificate<S> {
    pub branch: Branch,
    pub state: CovariateState<S>,
    pub epsilon: Option<S>,
    pub achieved_regret: S,
}

impl<S: Scalar> CovariateCertificate<S> {
    pub fn verify(&self, rule: &CovariateRule<S>, design: &Design<S>, spec: &QuantileSpec<S>) -> Result<()> {
        let r = regret_cov(rule, &self.state, design, spec)?;
        if same(&r, &self.achieved_regret) {
            Ok(())
        } else {
            Err(Error::Certification(format!(
                "certificate claims regret {} but the engine gives {}",
                self.achieved_regret.to_fraction_string(),
                r.to_fraction_string()
            )))
        }
    }

    pub fn to_record(&self) -> String {
        let fx: Vec<String> = self.state.fx.iter().map(|m| m.to_fraction_string()).collect();
        let mut out = format!("branch: {}\nfx: [{}]\n", self.branch, fx.join(", "));
        for (k, (y0, y1)) in self.state.marginals.iter().enumerate() {
            out.push_str(&format!("y0[{k}]: {y0}\ny1[{k}]: {y1}\n"));
        }
        let eps = self
            .epsilon
            .as_ref()
            .map(|e| e.to_fraction_string())
            .unwrap_or_else(|| "none".into());
        out.push_str(&format!(
            "epsilon: {eps}\nregret: {}\n",
            self.achieved_regret.to_fraction_string()
        ));
        out
    }
}

fn ensure_interior_alpha<S: Scalar>(spec: &QuantileSpec<S>) -> Result<()> {
    if spec.alpha.le_tol(&S::zero()) || spec.alpha.ge_tol(&S::one()) {
        return Err(Error::Domain("covariate adversaries require alpha in (0, 1)".into()));
    }
    Ok(())
}

/// Every binary sample with every covariate sequence.
fn binary_cov_samples<S: Scalar>(k: usize, d: &Design<S>) -> Result<Vec<CovSample<S>>> {
    let n = sample_size(d);
    let bits = d.table_bits();
    CovariateTable::<S>::check_shape(k, n, bits)?;
    let mut out = Vec::new();
    for xi in 0..k.pow(n as u32) {
        let xs = covariate_digits(xi, k, n);
        for b in 0..1usize << bits {
            out.push(CovSample::from_parts(d, &xs, &index_bits(b, bits))?);
        }
    }
    Ok(out)
}

/// Bernoulli state with regret 1 in the fixed or random design.
fn worst_case_cov_bernoulli<S: Scalar>(
    rule: &CovariateRule<S>,
    d: &Design<S>,
    fx: &[S],
    spec: &QuantileSpec<S>,
) -> Result<CovariateCertificate<S>> {
    let alpha = spec.alpha.clone();
    let mut always_treats_zeros = true;
    for w in binary_cov_samples(rule.covariates(), d)? {
        let untreated_zero = w.units.iter().all(|u| u.treated || u.y.is_zero_tol());
        if untreated_zero && rule.evaluate(&w, d)?.iter().any(|v| !v.approx_eq(&S::one())) {
            always_treats_zeros = false;
            break;
        }
    }
    let (branch, make): (Branch, Box<dyn Fn(&S) -> (S, S)>) = if always_treats_zeros {
        (Branch::TreatedAtZero, Box::new(|e: &S| (alpha.clone() - e.clone(), S::one())))
    } else {
        (Branch::UntreatedAtZero, Box::new(|e: &S| (S::one(), alpha.clone() - e.clone())))
    };
    for eps in epsilons::<S>() {
        if eps.gt_tol(&alpha) {
            continue;
        }
        let (a0, a1) = make(&eps);
        let state = CovariateState::bernoulli(fx.to_vec(), a0, a1)?;
        let p_zero = outcome_distribution_cov(rule, &state, d)?.cdf(&S::zero())?;
        if p_zero <= alpha {
            continue;
        }
        let r = regret_cov(rule, &state, d, spec)?;
        if same(&r, &S::one()) {
            return Ok(CovariateCertificate {
                branch,
                state,
                epsilon: Some(eps),
                achieved_regret: r,
            });
        }
    }
    Err(Error::Certification(format!(
        "no epsilon down to 1e-{EPSILON_STEPS} certifies branch {branch}"
    )))
}

/// Binary sample on which some component of the rule is positive.
fn find_cov_witness<S: Scalar>(rule: &CovariateRule<S>, d: &Design<S>) -> Result<CovSample<S>> {
    for w in binary_cov_samples(rule.covariates(), d)? {
        if rule.evaluate(&w, d)?.iter().any(|v| v.gt_tol(&S::zero())) {
            return Ok(w);
        }
    }
    Err(Error::RuleIsZero)
}

/// Regret `q0` for a rule that treats some sample in the innovation design.
pub fn covariate_lemma_state<S: Scalar>(
    rule: &CovariateRule<S>,
    n: usize,
    q0: S,
    fx: &[S],
    spec: &QuantileSpec<S>,
) -> Result<CovariateCertificate<S>> {
    ensure_interior_alpha(spec)?;
    let d = Design::Innovation { n, q0: q0.clone() };
    d.validate()?;
    let alpha = spec.alpha.clone();
    let witness = find_cov_witness(rule, &d)?;
    let ys: Vec<S> = witness.units.iter().map(|u| u.y.clone()).collect();
    let y1: Dist<S> = lemma1_y1(&alpha, &ys)?.into();
    if q0.is_zero_tol() {
        let state = CovariateState::homogeneous(fx.to_vec(), Dist::point_mass(S::zero())?, y1)?;
        let r = regret_cov(rule, &state, &d, spec)?;
        return cov_certified(Branch::Lemma1, state, None, r, &q0);
    }
    for eps in epsilons::<S>() {
        if eps >= alpha {
            continue;
        }
        let y0: Dist<S> = two_point_y0(&q0, &alpha, &eps)?.into();
        let state = CovariateState::homogeneous(fx.to_vec(), y0, y1.clone())?;
        let p_zero = outcome_distribution_cov(rule, &state, &d)?.cdf(&S::zero())?;
        if p_zero <= alpha {
            continue;
        }
        let r = regret_cov(rule, &state, &d, spec)?;
        return cov_certified(Branch::Lemma1, state, Some(eps), r, &q0);
    }
    Err(Error::Certification(format!(
        "no epsilon down to 1e-{EPSILON_STEPS} pushes P(Y_B = 0) above alpha"
    )))
}

fn cov_certified<S: Scalar>(
    branch: Branch,
    state: CovariateState<S>,
    epsilon: Option<S>,
    r: S,
    target: &S,
) -> Result<CovariateCertificate<S>> {
    if !same(&r, target) {
        return Err(Error::Certification(format!(
            "branch {branch} reached regret {} instead of {}",
            r.to_fraction_string(),
            target.to_fraction_string()
        )));
    }
    Ok(CovariateCertificate {
        branch,
        state,
        epsilon,
        achieved_regret: r,
    })
}

/// Treated outcomes at 1 for every covariate value against the two-point
/// untreated distribution with quantile `q0`.
pub fn covariate_q1_equals_one<S: Scalar>(
    rule: &CovariateRule<S>,
    n: usize,
    q0: S,
    fx: &[S],
    spec: &QuantileSpec<S>,
) -> Result<CovariateCertificate<S>> {
    ensure_interior_alpha(spec)?;
    let d = Design::Innovation { n, q0: q0.clone() };
    d.validate()?;
    let eps = S::parse_literal("0.000001")?;
    let alpha = spec.alpha.clone();
    if eps > alpha {
        return Err(Error::Domain("alpha is smaller than the untreated perturbation".into()));
    }
    let perturbed = !q0.is_zero_tol();
    let y0: Dist<S> = two_point_y0(&q0, &alpha, &eps)?.into();
    let state = CovariateState::homogeneous(fx.to_vec(), y0, Dist::point_mass(S::one())?)?;
    let r = regret_cov(rule, &state, &d, spec)?;
    Ok(CovariateCertificate {
        branch: Branch::Q1EqualsOne,
        state,
        epsilon: perturbed.then_some(eps),
        achieved_regret: r,
    })
}

/// Worst-case state for a covariate rule.
///
/// Fixed and random designs give a Bernoulli state with regret 1. In the
/// innovation design the better of the treating-rule construction (regret
/// `q0`) and the treated-at-one state is returned.
pub fn worst_case_cov<S: Scalar>(
    rule: &CovariateRule<S>,
    d: &Design<S>,
    fx: &[S],
    spec: &QuantileSpec<S>,
) -> Result<CovariateCertificate<S>> {
    d.validate()?;
    ensure_interior_alpha(spec)?;
    if fx.len() != rule.covariates() {
        return Err(Error::Domain("covariate masses do not match the rule".into()));
    }
    match d {
        Design::Fixed { .. } | Design::Random { .. } => worst_case_cov_bernoulli(rule, d, fx, spec),
        Design::Innovation { n, q0 } => {
            let high = covariate_q1_equals_one(rule, *n, q0.clone(), fx, spec)?;
            match covariate_lemma_state(rule, *n, q0.clone(), fx, spec) {
                Ok(low) if low.achieved_regret > high.achieved_regret => Ok(low),
                Ok(_) | Err(Error::RuleIsZero) => Ok(high),
                Err(e) => Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{outcome_distribution, regret, StateOfNature};
    use crate::rules::{constant_rule, empirical_success_rule, random_tabular_rule};
    use crate::scalar::Exact;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    fn lower(a: Exact) -> QuantileSpec<Exact> {
        QuantileSpec::lower(a).unwrap()
    }

    fn halves() -> Vec<Exact> {
        vec![q(1, 2), q(1, 2)]
    }

    #[test]
    fn single_covariate_matches_the_engine() {
        let spec = lower(q(1, 2));
        for (seed, design) in [
            (1, Design::Fixed { n0: 1, n1: 2 }),
            (2, Design::Random { n: 2, p: q(1, 3) }),
            (3, Design::Innovation { n: 3, q0: q(2, 5) }),
        ] {
            let plain = random_tabular_rule(&design, seed, RandomTableParams::default()).unwrap();
            let rule = CovariateRule::Plain { k: 1, rule: plain.clone() };
            let y0: Dist<Exact> = Dist::bernoulli(q(1, 3)).unwrap();
            let y1: Dist<Exact> = DiscreteDist::from_pairs(vec![(q(0, 1), q(1, 4)), (q(1, 1), q(3, 4))])
                .unwrap()
                .into();
            let cs = CovariateState::homogeneous(vec![q(1, 1)], y0.clone(), y1.clone()).unwrap();
            let s = StateOfNature::new(y0, y1);
            assert_eq!(
                outcome_distribution_cov(&rule, &cs, &design).unwrap(),
                outcome_distribution(&plain, &s, &design).unwrap()
            );
            assert_eq!(
                regret_cov(&rule, &cs, &design, &spec).unwrap(),
                regret(&plain, &s, &design, &spec).unwrap()
            );
        }
    }

    #[test]
    fn treat_everyone_gives_the_treated_mixture() {
        let rule = CovariateRule::constant(vec![q(1, 1), q(1, 1)]).unwrap();
        let s = CovariateState::new(
            vec![q(1, 4), q(3, 4)],
            vec![
                (Dist::point_mass(q(1, 1)).unwrap(), Dist::point_mass(q(1, 5)).unwrap()),
                (Dist::point_mass(q(1, 1)).unwrap(), Dist::point_mass(q(3, 5)).unwrap()),
            ],
        )
        .unwrap();
        let d = Design::Fixed { n0: 1, n1: 1 };
        assert_eq!(outcome_quantile_cov(&rule, &s, &d, &lower(q(1, 5))).unwrap(), q(1, 5));
        assert_eq!(outcome_quantile_cov(&rule, &s, &d, &lower(q(1, 2))).unwrap(), q(3, 5));
    }

    #[test]
    fn hand_built_table_matches_the_oracle() {
        let d: Design<Exact> = Design::Fixed { n0: 0, n1: 1 };
        // Treat x_0 when the treated unit had x_0 and succeeded, x_1 half the time otherwise.
        let table = CovariateTable::from_fn(2, &d, |k, xs, bits| match (k, xs[0], bits[0]) {
            (0, 0, true) => q(1, 1),
            (1, 0, true) => q(0, 1),
            (1, _, _) => q(1, 2),
            _ => q(1, 4),
        })
        .unwrap();
        let rule = CovariateRule::Table(table);
        let s = CovariateState::new(
            vec![q(1, 3), q(2, 3)],
            vec![
                (Dist::bernoulli(q(1, 2)).unwrap(), Dist::bernoulli(q(1, 5)).unwrap()),
                (Dist::bernoulli(q(3, 4)).unwrap(), Dist::bernoulli(q(2, 5)).unwrap()),
            ],
        )
        .unwrap();
        let e = expected_assignments_cov(&rule, &s, &d).unwrap();
        // P(x = 0, y = 1) = 1/3 * 4/5 = 4/15.
        assert_eq!(e[0], q(4, 15) + q(11, 15) * q(1, 4));
        assert_eq!(e[1], q(11, 15) * q(1, 2));
        let oracle = outcome_distribution_cov_oracle(&rule, &s, &d).unwrap();
        let fast = outcome_distribution_cov(&rule, &s, &d).unwrap().to_discrete().unwrap();
        assert_eq!(oracle, fast);
    }

    #[test]
    fn table_text_round_trip() {
        let d: Design<Exact> = Design::Random { n: 1, p: q(1, 2) };
        let rule = random_covariate_rule(2, &d, 9, RandomTableParams::default()).unwrap();
        let CovariateRule::Table(t) = rule else { panic!("table") };
        let text = t.to_text();
        assert!(text.starts_with("0 0 00 -> "));
        assert_eq!(CovariateTable::parse(&text, 2, &d).unwrap(), t);
        let missing: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(CovariateTable::<Exact>::parse(&missing, 2, &d).is_err());
        let empty: Design<Exact> = Design::Fixed { n0: 0, n1: 0 };
        let t0 = CovariateTable::parse("0 - - -> 1/3\n1 - - -> 1\n", 2, &empty).unwrap();
        assert_eq!(t0.get(0, &[], &[]), &q(1, 3));
    }

    #[test]
    fn no_data_half_rule_has_regret_one() {
        let rule = CovariateRule::constant(vec![q(1, 2), q(1, 2)]).unwrap();
        let d = Design::Fixed { n0: 0, n1: 0 };
        let spec = lower(q(1, 2));
        let cert = worst_case_cov(&rule, &d, &halves(), &spec).unwrap();
        assert_eq!(cert.achieved_regret, q(1, 1));
        assert_eq!(cert.branch, Branch::UntreatedAtZero);
        cert.verify(&rule, &d, &spec).unwrap();
    }

    #[test]
    fn treat_all_takes_the_other_branch() {
        let rule = CovariateRule::constant(vec![q(1, 1), q(1, 1)]).unwrap();
        let d = Design::Random { n: 1, p: q(1, 2) };
        let cert = worst_case_cov(&rule, &d, &[q(1, 3), q(2, 3)], &lower(q(1, 2))).unwrap();
        assert_eq!(cert.branch, Branch::TreatedAtZero);
        assert_eq!(cert.achieved_regret, q(1, 1));
    }

    #[test]
    fn innovation_never_treat() {
        let rule = CovariateRule::constant(vec![q(0, 1), q(0, 1)]).unwrap();
        let d = Design::Innovation { n: 2, q0: q(9, 10) };
        let cert = worst_case_cov(&rule, &d, &halves(), &lower(q(1, 2))).unwrap();
        assert_eq!(cert.branch, Branch::Q1EqualsOne);
        assert_eq!(cert.achieved_regret, q(1, 10));
        assert_eq!(
            covariate_lemma_state(&rule, 2, q(9, 10), &halves(), &lower(q(1, 2))).unwrap_err(),
            Error::RuleIsZero
        );
    }

    #[test]
    fn innovation_always_treat() {
        let rule = CovariateRule::constant(vec![q(1, 1), q(1, 1)]).unwrap();
        let d = Design::Innovation { n: 2, q0: q(3, 10) };
        let cert = worst_case_cov(&rule, &d, &halves(), &lower(q(1, 2))).unwrap();
        assert_eq!(cert.branch, Branch::Lemma1);
        assert_eq!(cert.achieved_regret, q(3, 10));
        cert.verify(&rule, &d, &lower(q(1, 2))).unwrap();
    }

    #[test]
    fn blind_esr_is_pushed_to_q0() {
        let esr = empirical_success_rule(q(2, 5), lower(q(1, 2)), q(1, 100));
        let rule = CovariateRule::Plain { k: 3, rule: esr };
        let fx = vec![q(1, 5), q(3, 10), q(1, 2)];
        let cert = covariate_lemma_state(&rule, 2, q(2, 5), &fx, &lower(q(1, 2))).unwrap();
        assert_eq!(cert.achieved_regret, q(2, 5));
    }

    #[test]
    fn targeting_can_beat_both_pooled_marginals() {
        let s = CovariateState::new(
            halves(),
            vec![
                (Dist::point_mass(q(0, 1)).unwrap(), Dist::point_mass(q(1, 1)).unwrap()),
                (Dist::point_mass(q(1, 1)).unwrap(), Dist::point_mass(q(0, 1)).unwrap()),
            ],
        )
        .unwrap();
        let spec = lower(q(1, 2));
        assert_eq!(s.marginal(false).unwrap().quantile(&spec), q(0, 1));
        assert_eq!(s.marginal(true).unwrap().quantile(&spec), q(0, 1));
        let targeted = CovariateRule::constant(vec![q(1, 1), q(0, 1)]).unwrap();
        let d = Design::Fixed { n0: 0, n1: 0 };
        assert_eq!(outcome_quantile_cov(&targeted, &s, &d, &spec).unwrap(), q(1, 1));
        assert_eq!(benchmark_cov(&s, &d, &spec).unwrap(), q(1, 1));
    }

    #[test]
    fn budget_and_shape_errors() {
        let rule = CovariateRule::constant(vec![q(1, 2)]).unwrap();
        let s = CovariateState::bernoulli(halves(), q(1, 2), q(1, 2)).unwrap();
        assert!(expected_assignments_cov(&rule, &s, &Design::Fixed { n0: 1, n1: 0 }).is_err());
        assert!(CovariateState::<Exact>::bernoulli(vec![q(1, 1), q(0, 1)], q(1, 2), q(1, 2)).is_err());
        let plain = CovariateRule::Plain { k: 2, rule: constant_rule(q(1, 2)).unwrap() };
        let err = expected_assignments_cov(&plain, &s, &Design::Fixed { n0: 12, n1: 12 }).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
        let d = Design::Fixed { n0: 1, n1: 1 };
        assert!(worst_case_cov(&plain, &d, &halves(), &lower(q(0, 1))).is_err());
    }

    #[test]
    fn float_backend_agrees() {
        let rule: CovariateRule<f64> =
            random_covariate_rule(2, &Design::Fixed { n0: 1, n1: 1 }, 4, RandomTableParams::default()).unwrap();
        let d = Design::Fixed { n0: 1, n1: 1 };
        let cert = worst_case_cov(&rule, &d, &[0.4, 0.6], &QuantileSpec::lower(0.5).unwrap()).unwrap();
        assert!((cert.achieved_regret - 1.0).abs() < 1e-12);
    }
}
