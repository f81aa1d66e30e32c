//! Exact expected assignment, outcome distribution and regret.
//!
//! Regret depends on the state only through the two marginals and on the rule
//! only through `e = E[rule(sample)]`, so everything reduces to computing `e`.
//! Tabular rules with binary marginals aggregate over sufficient statistics;
//! the empirical success rule uses order-statistic probabilities; anything
//! else falls back to full enumeration under a budget.

use crate::dist::{mix, DiscreteDist, Dist, MixedDist, QuantileSpec};
use crate::error::{Error, Result};
use crate::rules::{index_bits, EmpiricalSuccess, RuleTable, Sample, TreatmentRule};
use crate::scalar::{binomial, Scalar};

/// Maximum number of samples a full enumeration may visit.
pub const DEFAULT_BUDGET: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub enum Design<S> {
    /// `n0` untreated and `n1` treated observations.
    Fixed { n0: usize, n1: usize },
    /// `n` units, each treated independently with probability `p`.
    Random { n: usize, p: S },
    /// `n` treated observations; the untreated quantile `q0` is known.
    Innovation { n: usize, q0: S },
}

impl<S: Scalar> Design<S> {
    pub fn validate(&self) -> Result<()> {
        match self {
            Design::Fixed { .. } => Ok(()),
            Design::Random { p, .. } => {
                if p.le_tol(&S::zero()) || p.ge_tol(&S::one()) {
                    Err(Error::Domain("treatment probability must lie in (0, 1)".into()))
                } else {
                    Ok(())
                }
            }
            Design::Innovation { q0, .. } => {
                if q0.in_unit_interval() {
                    Ok(())
                } else {
                    Err(Error::Domain("known quantile must lie in [0, 1]".into()))
                }
            }
        }
    }

    /// Number of bits in the tabular encoding of a binary sample.
    pub fn table_bits(&self) -> usize {
        match self {
            Design::Fixed { n0, n1 } => n0 + n1,
            Design::Random { n, .. } => 2 * n,
            Design::Innovation { n, .. } => *n,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Design::Fixed { .. } => "fixed",
            Design::Random { .. } => "random",
            Design::Innovation { .. } => "innovation",
        }
    }
}

/// Independent marginals of the untreated and treated outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateOfNature<S> {
    pub y0: Dist<S>,
    pub y1: Dist<S>,
}

impl<S: Scalar> StateOfNature<S> {
    pub fn new(y0: impl Into<Dist<S>>, y1: impl Into<Dist<S>>) -> Self {
        StateOfNature {
            y0: y0.into(),
            y1: y1.into(),
        }
    }

    /// Bernoulli marginals with `P(Y0 = 0) = a0`, `P(Y1 = 0) = a1`.
    pub fn bernoulli(a0: S, a1: S) -> Result<Self> {
        Ok(StateOfNature {
            y0: Dist::bernoulli(a0)?,
            y1: Dist::bernoulli(a1)?,
        })
    }
}

fn binary_zero_mass<S: Scalar>(d: &Dist<S>) -> Option<S> {
    let disc = d.as_discrete()?;
    if disc.is_binary() {
        Some(disc.mass_at(&S::zero()))
    } else {
        None
    }
}

fn sampled_discrete<'a, S: Scalar>(d: &'a Dist<S>, which: &str) -> Result<&'a DiscreteDist<S>> {
    d.as_discrete().ok_or_else(|| {
        Error::Domain(format!(
            "{which} is sampled and must have finite support for exact evaluation"
        ))
    })
}

fn powers<S: Scalar>(base: &S, n: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(S::one());
    for k in 0..n {
        out.push(out[k].clone() * base.clone());
    }
    out
}

/// Sums of table values grouped by sufficient statistics.
#[derive(Clone, Debug, PartialEq)]
pub enum TableAggregates<S> {
    /// `d[i][j]`: sum over samples with `i` ones among the untreated and `j`
    /// ones among the treated.
    Fixed { n0: usize, n1: usize, d: Vec<Vec<S>> },
    /// `d[t][i][j]`: sum over samples with `t` treated units, `i` zeros among
    /// the untreated and `j` zeros among the treated.
    Random { n: usize, d: Vec<Vec<Vec<S>>> },
    /// `d[j]`: sum over samples with `j` zeros.
    Innovation { n: usize, d: Vec<S> },
}

impl<S: Scalar> TableAggregates<S> {
    pub fn from_table(table: &RuleTable<S>, design: &Design<S>) -> Result<Self> {
        if table.bits() != design.table_bits() {
            return Err(Error::Rule("table does not fit the design".into()));
        }
        let bits = table.bits();
        match design {
            Design::Fixed { n0, n1 } => {
                let mut d = vec![vec![S::zero(); n1 + 1]; n0 + 1];
                for (idx, v) in table.values().iter().enumerate() {
                    let b = index_bits(idx, bits);
                    let i = b[..*n0].iter().filter(|x| **x).count();
                    let j = b[*n0..].iter().filter(|x| **x).count();
                    d[i][j] = d[i][j].clone() + v.clone();
                }
                Ok(TableAggregates::Fixed { n0: *n0, n1: *n1, d })
            }
            Design::Random { n, .. } => {
                let mut d = vec![vec![vec![S::zero(); n + 1]; n + 1]; n + 1];
                for (idx, v) in table.values().iter().enumerate() {
                    let b = index_bits(idx, bits);
                    let (t, y) = b.split_at(*n);
                    let treated = t.iter().filter(|x| **x).count();
                    let mut zeros_untreated = 0;
                    let mut zeros_treated = 0;
                    for (ti, yi) in t.iter().zip(y) {
                        if !yi {
                            if *ti {
                                zeros_treated += 1;
                            } else {
                                zeros_untreated += 1;
                            }
                        }
                    }
                    let cell = &mut d[treated][zeros_untreated][zeros_treated];
                    *cell = cell.clone() + v.clone();
                }
                Ok(TableAggregates::Random { n: *n, d })
            }
            Design::Innovation { n, .. } => {
                let mut d = vec![S::zero(); n + 1];
                for (idx, v) in table.values().iter().enumerate() {
                    let zeros = index_bits(idx, bits).iter().filter(|x| !**x).count();
                    d[zeros] = d[zeros].clone() + v.clone();
                }
                Ok(TableAggregates::Innovation { n: *n, d })
            }
        }
    }

    /// `E[rule]` given `a0 = P(Y0 = 0)`, `a1 = P(Y1 = 0)` and, for the random
    /// design, the treatment probability `p`.
    pub fn expected(&self, a0: &S, a1: &S, p: Option<&S>) -> S {
        match self {
            TableAggregates::Fixed { n0, n1, d } => {
                let z0 = powers(a0, *n0);
                let o0 = powers(&(S::one() - a0.clone()), *n0);
                let z1 = powers(a1, *n1);
                let o1 = powers(&(S::one() - a1.clone()), *n1);
                let mut e = S::zero();
                for (i, row) in d.iter().enumerate() {
                    let wi = o0[i].clone() * z0[n0 - i].clone();
                    for (j, v) in row.iter().enumerate() {
                        if v.is_zero_tol() {
                            continue;
                        }
                        e = e + v.clone() * wi.clone() * o1[j].clone() * z1[n1 - j].clone();
                    }
                }
                e
            }
            TableAggregates::Random { n, d } => {
                let p = p.cloned().unwrap_or_else(S::half);
                let pt = powers(&p, *n);
                let pu = powers(&(S::one() - p), *n);
                let z0 = powers(a0, *n);
                let o0 = powers(&(S::one() - a0.clone()), *n);
                let z1 = powers(a1, *n);
                let o1 = powers(&(S::one() - a1.clone()), *n);
                let mut e = S::zero();
                for (t, block) in d.iter().enumerate() {
                    let wt = pt[t].clone() * pu[n - t].clone();
                    for (i, row) in block.iter().enumerate() {
                        if i > n - t {
                            break;
                        }
                        let wi = z0[i].clone() * o0[n - t - i].clone();
                        for (j, v) in row.iter().enumerate() {
                            if j > t || v.is_zero_tol() {
                                continue;
                            }
                            e = e + v.clone() * wt.clone() * wi.clone() * z1[j].clone() * o1[t - j].clone();
                        }
                    }
                }
                e
            }
            TableAggregates::Innovation { n, d } => {
                let z1 = powers(a1, *n);
                let o1 = powers(&(S::one() - a1.clone()), *n);
                d.iter()
                    .enumerate()
                    .fold(S::zero(), |e, (j, v)| e + v.clone() * z1[j].clone() * o1[n - j].clone())
            }
        }
    }
}

/// Probabilities that the empirical success rule treats, ties, or does not
/// treat, for `n` i.i.d. draws from `y1`.
#[derive(Clone, Debug, PartialEq)]
pub struct EsrOutcome<S> {
    pub treat: S,
    pub tie: S,
    pub no: S,
}

impl<S: Scalar> EsrOutcome<S> {
    pub fn expected(&self) -> S {
        self.treat.clone() + S::half() * self.tie.clone()
    }
}

/// `P(Bin(n, f) >= k)`.
fn binomial_upper_tail<S: Scalar>(n: usize, f: &S, k: usize) -> S {
    if k == 0 {
        return S::one();
    }
    if k > n {
        return S::zero();
    }
    let g = S::one() - f.clone();
    let fp = powers(f, n);
    let gp = powers(&g, n);
    (k..=n).fold(S::zero(), |acc, j| {
        acc + binomial::<S>(n, j) * fp[j].clone() * gp[n - j].clone()
    })
}

/// Order-statistic index `ceil(alpha * n)` computed without rounding.
fn ceil_index<S: Scalar>(alpha: &S, n: usize) -> usize {
    let target = alpha.clone() * S::from_usize(n);
    let mut k = target.to_f64().floor().max(0.0) as usize;
    while k > 0 && S::from_usize(k - 1).ge_tol(&target) {
        k -= 1;
    }
    while S::from_usize(k).lt_tol(&target) {
        k += 1;
    }
    k.min(n)
}

/// Distribution of the empirical `spec`-quantile of `n` draws from `y1`, as
/// `(value, probability)` pairs.
pub fn sample_quantile_distribution<S: Scalar>(
    y1: &DiscreteDist<S>,
    n: usize,
    spec: &QuantileSpec<S>,
) -> Result<Vec<(S, S)>> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let support = y1.support();
    let mut cum = Vec::with_capacity(support.len() + 1);
    cum.push(S::zero());
    for m in y1.masses() {
        let last = cum.last().cloned().expect("non-empty");
        cum.push(last + m.clone());
    }
    // Guard against float drift in the upper tail.
    *cum.last_mut().expect("non-empty") = S::one();

    let k = ceil_index(&spec.alpha, n);
    let exact_multiple = S::from_usize(k).approx_eq(&(spec.alpha.clone() * S::from_usize(n)));
    // sup Q is X_(m) with m = floor(alpha n) + 1; X_(n+1) is read as 1.
    let m = if exact_multiple { k + 1 } else { k };

    let marginal = |order: usize| -> Vec<(S, S)> {
        if order == 0 {
            return vec![(S::zero(), S::one())];
        }
        if order > n {
            return vec![(S::one(), S::one())];
        }
        let tails: Vec<S> = cum.iter().map(|f| binomial_upper_tail(n, f, order)).collect();
        support
            .iter()
            .enumerate()
            .map(|(i, x)| (x.clone(), tails[i + 1].clone() - tails[i].clone()))
            .collect()
    };

    let r = &spec.r;
    if r.is_zero_tol() {
        return Ok(marginal(k));
    }
    if r.approx_eq(&S::one()) || m == k {
        return Ok(marginal(m));
    }
    if m > n {
        // Only reachable for alpha = 1, where X_(n+1) reads as 1.
        return Ok(marginal(k)
            .into_iter()
            .map(|(x, p)| (r.clone() + (S::one() - r.clone()) * x, p))
            .collect());
    }

    // Joint law of (X_(k), X_(k+1)).
    let l = support.len();
    let coef = binomial::<S>(n, k);
    let lower: Vec<S> = (0..l)
        .map(|i| cum[i + 1].pow(k as u32) - cum[i].pow(k as u32))
        .collect();
    let upper: Vec<S> = (0..l)
        .map(|j| {
            (S::one() - cum[j].clone()).pow((n - k) as u32)
                - (S::one() - cum[j + 1].clone()).pow((n - k) as u32)
        })
        .collect();
    let marg = marginal(k);
    let mut out = Vec::new();
    for i in 0..l {
        let mut off_diag = S::zero();
        for j in i + 1..l {
            let pij = coef.clone() * lower[i].clone() * upper[j].clone();
            if !pij.is_zero_tol() {
                let value = r.clone() * support[j].clone() + (S::one() - r.clone()) * support[i].clone();
                out.push((value, pij.clone()));
            }
            off_diag = off_diag + pij;
        }
        let diag = marg[i].1.clone() - off_diag;
        if !diag.is_zero_tol() {
            out.push((support[i].clone(), diag));
        }
    }
    Ok(out)
}

pub fn esr_outcome_probabilities<S: Scalar>(
    esr: &EmpiricalSuccess<S>,
    y1: &DiscreteDist<S>,
    n: usize,
) -> Result<EsrOutcome<S>> {
    let mut out = EsrOutcome {
        treat: S::zero(),
        tie: S::zero(),
        no: S::zero(),
    };
    if n == 0 {
        return Err(Error::EmptySample);
    }
    for (value, p) in sample_quantile_distribution(y1, n, &esr.spec)? {
        let d = esr.decide(&value);
        if d.approx_eq(&S::one()) {
            out.treat = out.treat + p;
        } else if d.is_zero_tol() {
            out.no = out.no + p;
        } else {
            out.tie = out.tie + p;
        }
    }
    Ok(out)
}

/// `E[rule(sample)]` under state `s` and design `d`.
pub fn expected_assignment<S: Scalar>(
    rule: &TreatmentRule<S>,
    s: &StateOfNature<S>,
    d: &Design<S>,
) -> Result<S> {
    expected_assignment_with_budget(rule, s, d, DEFAULT_BUDGET)
}

pub fn expected_assignment_with_budget<S: Scalar>(
    rule: &TreatmentRule<S>,
    s: &StateOfNature<S>,
    d: &Design<S>,
    budget: u128,
) -> Result<S> {
    d.validate()?;
    if let TreatmentRule::Constant(c) = rule {
        return Ok(c.clone());
    }
    if let TreatmentRule::Table(table) = rule {
        if let Some(e) = table_fast_path(table, s, d)? {
            return Ok(e);
        }
    }
    if let (TreatmentRule::EmpiricalSuccess(esr), Design::Innovation { n, .. }) = (rule, d) {
        if *n > 0 {
            let y1 = sampled_discrete(&s.y1, "Y1")?;
            return Ok(esr_outcome_probabilities(esr, y1, *n)?.expected());
        }
    }
    enumerate_oracle_with_budget(rule, s, d, budget)
}

fn table_fast_path<S: Scalar>(
    table: &RuleTable<S>,
    s: &StateOfNature<S>,
    d: &Design<S>,
) -> Result<Option<S>> {
    let a1 = match binary_zero_mass(&s.y1) {
        Some(a) => a,
        None => return Ok(None),
    };
    let (a0, p) = match d {
        Design::Innovation { .. } => (S::zero(), None),
        Design::Fixed { n0: 0, .. } => (S::zero(), None),
        Design::Fixed { .. } => match binary_zero_mass(&s.y0) {
            Some(a) => (a, None),
            None => return Ok(None),
        },
        Design::Random { p, .. } => match binary_zero_mass(&s.y0) {
            Some(a) => (a, Some(p)),
            None => return Ok(None),
        },
    };
    let agg = TableAggregates::from_table(table, d)?;
    Ok(Some(agg.expected(&a0, &a1, p)))
}

fn check_budget(count: Option<u128>, budget: u128) -> Result<u128> {
    match count {
        Some(c) if c <= budget => Ok(c),
        Some(c) => Err(Error::BudgetExceeded { needed: c, budget }),
        None => Err(Error::BudgetExceeded {
            needed: u128::MAX,
            budget,
        }),
    }
}

/// Brute-force `E[rule(sample)]` by visiting every sample. No aggregation.
pub fn enumerate_oracle<S: Scalar>(
    rule: &TreatmentRule<S>,
    s: &StateOfNature<S>,
    d: &Design<S>,
) -> Result<S> {
    enumerate_oracle_with_budget(rule, s, d, DEFAULT_BUDGET)
}

pub fn enumerate_oracle_with_budget<S: Scalar>(
    rule: &TreatmentRule<S>,
    s: &StateOfNature<S>,
    d: &Design<S>,
    budget: u128,
) -> Result<S> {
    d.validate()?;
    match d {
        Design::Fixed { n0, n1 } => {
            let y0 = sampled_discrete(&s.y0, "Y0")?;
            let y1 = sampled_discrete(&s.y1, "Y1")?;
            let count = (y0.len() as u128)
                .checked_pow(*n0 as u32)
                .and_then(|a| (y1.len() as u128).checked_pow(*n1 as u32).and_then(|b| a.checked_mul(b)));
            check_budget(count, budget)?;
            let mut alphabet: Vec<Vec<(S, S)>> = Vec::with_capacity(n0 + n1);
            let pairs = |dd: &DiscreteDist<S>| -> Vec<(S, S)> {
                dd.iter().map(|(x, m)| (x.clone(), m.clone())).collect()
            };
            alphabet.extend(std::iter::repeat_n(pairs(y0), *n0));
            alphabet.extend(std::iter::repeat_n(pairs(y1), *n1));
            sum_over_sequences(&alphabet, |xs| {
                let y0s = xs[..*n0].to_vec();
                let y1s = xs[*n0..].to_vec();
                rule.evaluate(&Sample::Fixed { y0: y0s, y1: y1s })
            })
        }
        Design::Random { n, p } => {
            let y0 = sampled_discrete(&s.y0, "Y0")?;
            let y1 = sampled_discrete(&s.y1, "Y1")?;
            let count = ((y0.len() + y1.len()) as u128).checked_pow(*n as u32);
            check_budget(count, budget)?;
            // Letters encode (treated, outcome) as an outcome offset by 2 for
            // treated units so both halves share one alphabet.
            let mut letters: Vec<(S, S)> = Vec::new();
            let mut treated_flags: Vec<bool> = Vec::new();
            let q = S::one() - p.clone();
            for (x, m) in y0.iter() {
                letters.push((x.clone(), q.clone() * m.clone()));
                treated_flags.push(false);
            }
            for (x, m) in y1.iter() {
                letters.push((x.clone(), p.clone() * m.clone()));
                treated_flags.push(true);
            }
            sum_over_indices(&letters, *n, |idx| {
                let t = idx.iter().map(|&i| treated_flags[i]).collect();
                let y = idx.iter().map(|&i| letters[i].0.clone()).collect();
                rule.evaluate(&Sample::Random { t, y })
            })
        }
        Design::Innovation { n, .. } => {
            let y1 = sampled_discrete(&s.y1, "Y1")?;
            let count = (y1.len() as u128).checked_pow(*n as u32);
            check_budget(count, budget)?;
            let letters: Vec<(S, S)> = y1.iter().map(|(x, m)| (x.clone(), m.clone())).collect();
            sum_over_indices(&letters, *n, |idx| {
                let y1s = idx.iter().map(|&i| letters[i].0.clone()).collect();
                rule.evaluate(&Sample::Innovation { y1: y1s })
            })
        }
    }
}

/// `sum over sequences x of prod P(x_i) * f(x)` where position `i` draws
/// from `alphabet[i]`.
fn sum_over_sequences<S: Scalar>(
    alphabet: &[Vec<(S, S)>],
    mut f: impl FnMut(&[S]) -> Result<S>,
) -> Result<S> {
    let len = alphabet.len();
    let mut idx = vec![0usize; len];
    let mut total = S::zero();
    let mut buf: Vec<S> = alphabet.iter().map(|a| a[0].0.clone()).collect();
    loop {
        let mut w = S::one();
        for (pos, &i) in idx.iter().enumerate() {
            w = w * alphabet[pos][i].1.clone();
            buf[pos] = alphabet[pos][i].0.clone();
        }
        if !w.is_zero_tol() {
            total = total + w * f(&buf)?;
        }
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(total);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < alphabet[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn sum_over_indices<S: Scalar>(
    letters: &[(S, S)],
    len: usize,
    mut f: impl FnMut(&[usize]) -> Result<S>,
) -> Result<S> {
    let mut idx = vec![0usize; len];
    let mut total = S::zero();
    loop {
        let w = idx
            .iter()
            .fold(S::one(), |acc, &i| acc * letters[i].1.clone());
        if !w.is_zero_tol() {
            total = total + w * f(&idx)?;
        }
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(total);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < letters.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

pub fn outcome_distribution<S: Scalar>(
    rule: &TreatmentRule<S>,
    s: &StateOfNature<S>,
    d: &Design<S>,
) -> Result<MixedDist<S>> {
    let e = expected_assignment(rule, s, d)?;
    mix(&s.y0, &s.y1, &e)
}

/// `max{q(Y0), q(Y1)}`, with the known `q0` standing in for `q(Y0)` in the
/// innovation design.
pub fn benchmark<S: Scalar>(s: &StateOfNature<S>, d: &Design<S>, spec: &QuantileSpec<S>) -> S {
    let q0 = match d {
        Design::Innovation { q0, .. } => q0.clone(),
        _ => s.y0.quantile(spec),
    };
    S::max_of(q0, s.y1.quantile(spec))
}

/// Regret of any rule whose expected assignment under `s` is `e`.
pub fn regret_at_assignment<S: Scalar>(
    s: &StateOfNature<S>,
    d: &Design<S>,
    spec: &QuantileSpec<S>,
    e: &S,
) -> Result<S> {
    let qb = mix(&s.y0, &s.y1, e)?.quantile(spec);
    Ok(snap_zero(benchmark(s, d, spec) - qb))
}

/// Clears float residue below the comparison tolerance.
pub(crate) fn snap_zero<S: Scalar>(x: S) -> S {
    if x.is_zero_tol() {
        S::zero()
    } else {
        x
    }
}

pub fn regret<S: Scalar>(
    rule: &TreatmentRule<S>,
    s: &StateOfNature<S>,
    d: &Design<S>,
    spec: &QuantileSpec<S>,
) -> Result<S> {
    let e = expected_assignment(rule, s, d)?;
    regret_at_assignment(s, d, spec, &e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{constant_rule, empirical_success_rule, RuleTable};
    use crate::scalar::Exact;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    #[test]
    fn constant_rule_assignment_is_the_constant() {
        let s = StateOfNature::bernoulli(q(1, 3), q(2, 3)).unwrap();
        let rule = constant_rule(q(2, 5)).unwrap();
        for d in [
            Design::Fixed { n0: 3, n1: 2 },
            Design::Random { n: 3, p: q(1, 2) },
            Design::Innovation { n: 4, q0: q(1, 2) },
        ] {
            assert_eq!(expected_assignment(&rule, &s, &d).unwrap(), q(2, 5));
        }
    }

    #[test]
    fn fixed_design_single_cell_table() {
        let table = RuleTable::from_fn(2, |b| if !b[0] && !b[1] { q(1, 1) } else { q(0, 1) }).unwrap();
        let rule = TreatmentRule::Table(table);
        let s = StateOfNature::bernoulli(q(1, 2), q(1, 2)).unwrap();
        let d = Design::Fixed { n0: 1, n1: 1 };
        assert_eq!(expected_assignment(&rule, &s, &d).unwrap(), q(1, 4));
        assert_eq!(enumerate_oracle(&rule, &s, &d).unwrap(), q(1, 4));
    }

    #[test]
    fn random_design_single_unit() {
        // Bits are (t, y): treat only an untreated zero.
        let table = RuleTable::from_fn(2, |b| if !b[0] && !b[1] { q(1, 1) } else { q(0, 1) }).unwrap();
        let rule = TreatmentRule::Table(table);
        let s = StateOfNature::bernoulli(q(1, 1), q(1, 1)).unwrap();
        let d = Design::Random { n: 1, p: q(1, 2) };
        assert_eq!(expected_assignment(&rule, &s, &d).unwrap(), q(1, 2));
        assert_eq!(enumerate_oracle(&rule, &s, &d).unwrap(), q(1, 2));
    }

    #[test]
    fn no_data_half_rule_has_regret_one() {
        let s = StateOfNature::bernoulli(q(1, 4), q(1, 1)).unwrap();
        let rule = constant_rule(q(1, 2)).unwrap();
        let d = Design::Fixed { n0: 0, n1: 0 };
        let spec = QuantileSpec::lower(q(1, 2)).unwrap();
        let outcome = outcome_distribution(&rule, &s, &d).unwrap();
        assert_eq!(outcome.cdf(&q(0, 1)).unwrap(), q(5, 8));
        assert_eq!(regret(&rule, &s, &d, &spec).unwrap(), q(1, 1));
    }

    #[test]
    fn treating_when_y1_dominates_has_zero_regret() {
        let s = StateOfNature::bernoulli(q(2, 3), q(1, 3)).unwrap();
        let spec = QuantileSpec::lower(q(1, 2)).unwrap();
        let d = Design::Fixed { n0: 2, n1: 2 };
        assert_eq!(regret(&constant_rule(q(1, 1)).unwrap(), &s, &d, &spec).unwrap(), q(0, 1));
    }

    #[test]
    fn innovation_never_treat_against_top_outcomes() {
        let s = StateOfNature::new(
            DiscreteDist::from_pairs(vec![(q(0, 1), q(1, 4)), (q(3, 10), q(3, 4))]).unwrap(),
            DiscreteDist::point_mass(q(1, 1)).unwrap(),
        );
        let d = Design::Innovation { n: 3, q0: q(3, 10) };
        let spec = QuantileSpec::lower(q(1, 2)).unwrap();
        assert_eq!(regret(&constant_rule(q(0, 1)).unwrap(), &s, &d, &spec).unwrap(), q(7, 10));
    }

    #[test]
    fn esr_order_statistics_match_enumeration() {
        let y1 = DiscreteDist::from_pairs(vec![(q(0, 1), q(1, 4)), (q(1, 2), q(1, 4)), (q(1, 1), q(1, 2))]).unwrap();
        let s = StateOfNature::new(DiscreteDist::point_mass(q(1, 2)).unwrap(), y1);
        let xi = Exact::parse_literal("1e-8").unwrap();
        for n in 1..=4 {
            for (alpha, r) in [(q(1, 2), q(0, 1)), (q(1, 2), q(1, 1)), (q(1, 2), q(1, 3)), (q(1, 3), q(1, 2)), (q(0, 1), q(1, 1))] {
                let spec = QuantileSpec::new(alpha, r).unwrap();
                let rule = empirical_success_rule(q(1, 2), spec, xi.clone());
                let d = Design::Innovation { n, q0: q(1, 2) };
                assert_eq!(
                    expected_assignment(&rule, &s, &d).unwrap(),
                    enumerate_oracle(&rule, &s, &d).unwrap(),
                    "n={n}"
                );
            }
        }
    }

    #[test]
    fn ceil_index_is_exact() {
        assert_eq!(ceil_index(&q(1, 10), 30), 3);
        assert_eq!(ceil_index(&0.1f64, 30), 3);
        assert_eq!(ceil_index(&q(9, 10), 30), 27);
        assert_eq!(ceil_index(&q(1, 2), 3), 2);
        assert_eq!(ceil_index(&q(0, 1), 3), 0);
    }

    #[test]
    fn budget_is_enforced() {
        let y1 = DiscreteDist::from_pairs((0..10).map(|i| (q(i, 9), q(1, 10))).collect()).unwrap();
        let s = StateOfNature::new(y1.clone(), y1);
        let rule = TreatmentRule::Custom {
            name: "half".into(),
            f: std::sync::Arc::new(|_| q(1, 2)),
        };
        let d = Design::Innovation { n: 8, q0: q(1, 2) };
        assert!(matches!(
            expected_assignment_with_budget(&rule, &s, &d, 1000),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
