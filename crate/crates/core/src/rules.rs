//! Treatment rules: constant, tabular over binary samples, and the empirical
//! success rule for the innovation design.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::{DiscreteDist, QuantileSpec};
use crate::engine::Design;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default tie buffer of the empirical success rule.
pub const DEFAULT_XI: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum Sample<S> {
    /// Outcomes of `N0` untreated and `N1` treated units.
    Fixed { y0: Vec<S>, y1: Vec<S> },
    /// Treatment status and outcome of each of `N` units.
    Random { t: Vec<bool>, y: Vec<S> },
    /// Treated outcomes only.
    Innovation { y1: Vec<S> },
}

impl<S: Scalar> Sample<S> {
    fn outcomes(&self) -> Box<dyn Iterator<Item = &S> + '_> {
        match self {
            Sample::Fixed { y0, y1 } => Box::new(y0.iter().chain(y1.iter())),
            Sample::Random { y, .. } => Box::new(y.iter()),
            Sample::Innovation { y1 } => Box::new(y1.iter()),
        }
    }

    pub fn is_binary(&self) -> bool {
        self.outcomes()
            .all(|y| y.is_zero_tol() || y.approx_eq(&S::one()))
    }

    /// Bit encoding used by rule tables: fixed `y0 ++ y1`, random `t ++ y`,
    /// innovation `y1`. `None` for non-binary samples.
    pub fn bits(&self) -> Option<Vec<bool>> {
        if !self.is_binary() {
            return None;
        }
        let bit = |y: &S| y.approx_eq(&S::one());
        Some(match self {
            Sample::Fixed { y0, y1 } => y0.iter().chain(y1).map(bit).collect(),
            Sample::Random { t, y } => t.iter().copied().chain(y.iter().map(bit)).collect(),
            Sample::Innovation { y1 } => y1.iter().map(bit).collect(),
        })
    }

    /// Inverse of [`Sample::bits`] for a given design.
    pub fn from_bits(design: &Design<S>, bits: &[bool]) -> Result<Self> {
        let val = |b: &bool| if *b { S::one() } else { S::zero() };
        if bits.len() != design.table_bits() {
            return Err(Error::Rule(format!(
                "expected {} bits, got {}",
                design.table_bits(),
                bits.len()
            )));
        }
        Ok(match design {
            Design::Fixed { n0, .. } => Sample::Fixed {
                y0: bits[..*n0].iter().map(val).collect(),
                y1: bits[*n0..].iter().map(val).collect(),
            },
            Design::Random { n, .. } => Sample::Random {
                t: bits[..*n].to_vec(),
                y: bits[*n..].iter().map(val).collect(),
            },
            Design::Innovation { .. } => Sample::Innovation {
                y1: bits.iter().map(val).collect(),
            },
        })
    }

    pub fn matches(&self, design: &Design<S>) -> bool {
        match (self, design) {
            (Sample::Fixed { y0, y1 }, Design::Fixed { n0, n1 }) => y0.len() == *n0 && y1.len() == *n1,
            (Sample::Random { t, y }, Design::Random { n, .. }) => t.len() == *n && y.len() == *n,
            (Sample::Innovation { y1 }, Design::Innovation { n, .. }) => y1.len() == *n,
            _ => false,
        }
    }
}

/// Treatment probabilities for every binary sample of a design.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleTable<S> {
    bits: usize,
    values: Vec<S>,
}

impl<S: Scalar> RuleTable<S> {
    /// `values[i]` is the probability for the sample whose bits, read most
    /// significant first, spell `i`.
    pub fn new(bits: usize, values: Vec<S>) -> Result<Self> {
        if bits >= usize::BITS as usize || values.len() != 1usize << bits {
            return Err(Error::Rule(format!(
                "table over {bits} bits needs {} entries",
                1u128 << bits.min(127)
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.in_unit_interval()) {
            return Err(Error::Rule(format!(
                "table entry {} outside [0, 1]",
                v.to_fraction_string()
            )));
        }
        Ok(RuleTable { bits, values })
    }

    pub fn from_fn(bits: usize, f: impl Fn(&[bool]) -> S) -> Result<Self> {
        let values = (0..1usize << bits).map(|i| f(&index_bits(i, bits))).collect();
        Self::new(bits, values)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn get(&self, bits: &[bool]) -> &S {
        &self.values[bits_index(bits)]
    }

    /// Parses `bits -> value` lines. `|` and spaces inside the bit string are
    /// ignored; `#` starts a comment.
    pub fn parse(text: &str, bits: usize) -> Result<Self> {
        let mut values: Vec<Option<S>> = vec![None; 1usize << bits];
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line
                .split_once("->")
                .ok_or_else(|| Error::parse(raw, "expected `bits -> value`"))?;
            let key: Vec<bool> = key
                .chars()
                .filter(|c| !c.is_whitespace() && *c != '|')
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    _ => Err(Error::parse(raw, "bits must be 0 or 1")),
                })
                .collect::<Result<_>>()?;
            if key.len() != bits {
                return Err(Error::parse(raw, &format!("expected {bits} bits")));
            }
            let idx = bits_index(&key);
            if values[idx].is_some() {
                return Err(Error::parse(raw, "duplicate key"));
            }
            values[idx] = Some(S::parse_literal(val)?);
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    let key: String = index_bits(i, bits).iter().map(|b| if *b { '1' } else { '0' }).collect();
                    Error::Rule(format!("table is missing key {key}"))
                })
            })
            .collect::<Result<Vec<S>>>()?;
        Self::new(bits, values)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.values.iter().enumerate() {
            let key: String = index_bits(i, self.bits)
                .iter()
                .map(|b| if *b { '1' } else { '0' })
                .collect();
            out.push_str(&format!("{key} -> {}\n", v.to_fraction_string()));
        }
        out
    }
}

pub(crate) fn bits_index(bits: &[bool]) -> usize {
    bits.iter().fold(0usize, |acc, b| (acc << 1) | usize::from(*b))
}

pub(crate) fn index_bits(index: usize, len: usize) -> Vec<bool> {
    (0..len).map(|k| (index >> (len - 1 - k)) & 1 == 1).collect()
}

/// The empirical success rule: treat when the sample quantile of treated
/// outcomes exceeds `q0 + xi`, randomize evenly within `[q0 - xi, q0 + xi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalSuccess<S> {
    pub q0: S,
    pub spec: QuantileSpec<S>,
    pub xi: S,
}

impl<S: Scalar> EmpiricalSuccess<S> {
    pub fn decide(&self, sample_q: &S) -> S {
        if *sample_q > self.q0.clone() + self.xi.clone() {
            S::one()
        } else if *sample_q >= self.q0.clone() - self.xi.clone() {
            S::half()
        } else {
            S::zero()
        }
    }
}

pub type RuleFn<S> = Arc<dyn Fn(&Sample<S>) -> S + Send + Sync>;

#[derive(Clone)]
pub enum TreatmentRule<S> {
    Constant(S),
    EmpiricalSuccess(EmpiricalSuccess<S>),
    Table(RuleTable<S>),
    /// Arbitrary evaluator; outputs are checked against `[0, 1]`.
    Custom { name: String, f: RuleFn<S> },
}

impl<S: Scalar> fmt::Debug for TreatmentRule<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreatmentRule::Constant(c) => write!(f, "Constant({})", c.to_fraction_string()),
            TreatmentRule::EmpiricalSuccess(e) => write!(f, "{e:?}"),
            TreatmentRule::Table(t) => write!(f, "Table({} bits)", t.bits),
            TreatmentRule::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

pub fn constant_rule<S: Scalar>(c: S) -> Result<TreatmentRule<S>> {
    if !c.in_unit_interval() {
        return Err(Error::Rule("constant outside [0, 1]".into()));
    }
    Ok(TreatmentRule::Constant(c))
}

pub fn empirical_success_rule<S: Scalar>(q0: S, spec: QuantileSpec<S>, xi: S) -> TreatmentRule<S> {
    TreatmentRule::EmpiricalSuccess(EmpiricalSuccess { q0, spec, xi })
}

/// Quantile of the empirical distribution of `y`.
pub fn sample_quantile<S: Scalar>(y: &[S], spec: &QuantileSpec<S>) -> Result<S> {
    Ok(DiscreteDist::empirical(y)?.quantile(spec))
}

impl<S: Scalar> TreatmentRule<S> {
    pub fn evaluate(&self, sample: &Sample<S>) -> Result<S> {
        match self {
            TreatmentRule::Constant(c) => Ok(c.clone()),
            TreatmentRule::EmpiricalSuccess(esr) => match sample {
                Sample::Innovation { y1 } => Ok(esr.decide(&sample_quantile(y1, &esr.spec)?)),
                _ => Err(Error::Rule(
                    "the empirical success rule is defined for the innovation design only".into(),
                )),
            },
            TreatmentRule::Table(table) => {
                let bits = sample
                    .bits()
                    .ok_or_else(|| Error::Rule("table rule evaluated on a non-binary sample".into()))?;
                if bits.len() != table.bits {
                    return Err(Error::Rule(format!(
                        "table over {} bits evaluated on a sample with {} bits",
                        table.bits,
                        bits.len()
                    )));
                }
                Ok(table.get(&bits).clone())
            }
            TreatmentRule::Custom { name, f } => {
                let v = f(sample);
                if !v.in_unit_interval() {
                    return Err(Error::Rule(format!("rule {name} returned a value outside [0, 1]")));
                }
                Ok(v)
            }
        }
    }

    /// Tabular form over the binary samples of `design`, when the rule has one.
    pub fn to_table(&self, design: &Design<S>) -> Result<Option<RuleTable<S>>> {
        let bits = design.table_bits();
        match self {
            TreatmentRule::Table(t) => {
                if t.bits != bits {
                    return Err(Error::Rule(format!(
                        "table over {} bits does not fit a design with {bits} bits",
                        t.bits
                    )));
                }
                Ok(Some(t.clone()))
            }
            TreatmentRule::Constant(c) => RuleTable::from_fn(bits, |_| c.clone()).map(Some),
            _ => Ok(None),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TreatmentRule::Constant(c) => format!("const:{}", c.to_fraction_string()),
            TreatmentRule::EmpiricalSuccess(_) => "esr".into(),
            TreatmentRule::Table(t) => format!("table[{} bits]", t.bits),
            TreatmentRule::Custom { name, .. } => name.clone(),
        }
    }
}

/// Knobs for [`random_tabular_rule`]. Entries are 1 with probability
/// `p_one`, 0 with probability `p_zero`, otherwise `k/denominator` with
/// `k` uniform in `0..=denominator`.
#[derive(Clone, Copy, Debug)]
pub struct RandomTableParams {
    pub p_one: f64,
    pub p_zero: f64,
    pub denominator: i64,
}

impl Default for RandomTableParams {
    fn default() -> Self {
        RandomTableParams {
            p_one: 0.3,
            p_zero: 0.2,
            denominator: 12,
        }
    }
}

/// Deterministic pseudo-random table rule over the binary samples of `design`.
pub fn random_tabular_rule<S: Scalar>(
    design: &Design<S>,
    seed: u64,
    params: RandomTableParams,
) -> Result<TreatmentRule<S>> {
    let bits = design.table_bits();
    if bits > 20 {
        return Err(Error::Rule("random tables are limited to 20 bits".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..1usize << bits)
        .map(|_| {
            let u: f64 = rng.random();
            if u < params.p_one {
                S::one()
            } else if u < params.p_one + params.p_zero {
                S::zero()
            } else {
                let k = rng.random_range(0..=params.denominator);
                S::from_ratio(k, params.denominator)
            }
        })
        .collect();
    RuleTable::new(bits, values).map(TreatmentRule::Table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{binomial, Exact};

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    fn half_spec() -> QuantileSpec<Exact> {
        QuantileSpec::lower(q(1, 2)).unwrap()
    }

    fn innovation(ys: &[i64]) -> Sample<Exact> {
        Sample::Innovation {
            y1: ys.iter().map(|&y| q(y, 1)).collect(),
        }
    }

    #[test]
    fn constant_rules_ignore_the_sample() {
        let zero = constant_rule(q(0, 1)).unwrap();
        let half = constant_rule(q(1, 2)).unwrap();
        let s = innovation(&[1, 0, 1]);
        assert_eq!(zero.evaluate(&s).unwrap(), q(0, 1));
        assert_eq!(half.evaluate(&s).unwrap(), q(1, 2));
        assert!(constant_rule(q(3, 2)).is_err());
    }

    #[test]
    fn treat_everyone_aggregates_to_binomials() {
        let design: Design<Exact> = Design::Fixed { n0: 2, n1: 3 };
        let table = constant_rule(q(1, 1)).unwrap().to_table(&design).unwrap().unwrap();
        for j in 0..=3 {
            let total: Exact = table
                .values()
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    let b = index_bits(*i, 5);
                    !b[0] && !b[1] && b[2..].iter().filter(|x| **x).count() == j
                })
                .fold(q(0, 1), |acc, (_, v)| acc + v.clone());
            assert_eq!(total, binomial::<Exact>(3, j));
        }
    }

    #[test]
    fn sample_quantiles() {
        let s = half_spec();
        assert_eq!(sample_quantile(&[q(0, 1), q(0, 1), q(1, 1)], &s).unwrap(), q(0, 1));
        assert_eq!(sample_quantile(&vec![q(1, 1); 4], &s).unwrap(), q(1, 1));
        let sup = QuantileSpec::new(q(1, 2), q(1, 1)).unwrap();
        assert_eq!(sample_quantile(&[q(0, 1), q(1, 1)], &sup).unwrap(), q(1, 1));
        assert_eq!(sample_quantile::<Exact>(&[], &s), Err(Error::EmptySample));
    }

    #[test]
    fn empirical_success_decisions() {
        let xi = Exact::parse_literal("1e-8").unwrap();
        let esr = empirical_success_rule(q(1, 2), half_spec(), xi);
        assert_eq!(esr.evaluate(&innovation(&[1, 1, 1])).unwrap(), q(1, 1));
        assert_eq!(esr.evaluate(&innovation(&[0, 0, 1])).unwrap(), q(0, 1));
        let tie = Sample::Innovation { y1: vec![q(1, 2), q(1, 2), q(1, 1)] };
        assert_eq!(esr.evaluate(&tie).unwrap(), q(1, 2));
        let wrong = Sample::Fixed { y0: vec![], y1: vec![q(1, 1)] };
        assert!(esr.evaluate(&wrong).is_err());
    }

    #[test]
    fn tables_parse_and_evaluate() {
        let text = "# t | y\n00|00 -> 1\n00|01 -> 0\n00|10 -> 1/2\n00|11 -> 1/3\n\
                    01|00 -> 0\n01|01 -> 0\n01|10 -> 0\n01|11 -> 0\n\
                    10|00 -> 0\n10|01 -> 0\n10|10 -> 0\n10|11 -> 0\n\
                    11|00 -> 0\n11|01 -> 0\n11|10 -> 0\n11|11 -> 1\n";
        let table = RuleTable::<Exact>::parse(text, 4).unwrap();
        let rule = TreatmentRule::Table(table.clone());
        let s = Sample::Random { t: vec![false, false], y: vec![q(1, 1), q(0, 1)] };
        assert_eq!(rule.evaluate(&s).unwrap(), q(1, 2));
        let reparsed = RuleTable::<Exact>::parse(&table.to_text(), 4).unwrap();
        assert_eq!(reparsed, table);
        let non_binary = Sample::Random { t: vec![false, true], y: vec![q(1, 2), q(0, 1)] };
        assert!(rule.evaluate(&non_binary).is_err());
        assert!(RuleTable::<Exact>::parse("00 -> 1\n", 2).is_err());
        assert!(RuleTable::<Exact>::parse("0 -> 1\n0 -> 1\n", 1).is_err());
    }

    #[test]
    fn random_tables_are_deterministic_and_valid() {
        let design: Design<Exact> = Design::Random { n: 3, p: q(3, 10) };
        let a = random_tabular_rule(&design, 7, RandomTableParams::default()).unwrap();
        let b = random_tabular_rule(&design, 7, RandomTableParams::default()).unwrap();
        let (TreatmentRule::Table(a), TreatmentRule::Table(b)) = (a, b) else {
            panic!("expected tables");
        };
        assert_eq!(a, b);
        assert!(a.values().iter().all(|v| v.in_unit_interval()));
        assert_eq!(a.values().len(), 64);
    }

    #[test]
    fn bits_round_trip_through_design() {
        let design: Design<Exact> = Design::Fixed { n0: 2, n1: 1 };
        let bits = vec![true, false, true];
        let s = Sample::from_bits(&design, &bits).unwrap();
        assert!(s.matches(&design));
        assert_eq!(s.bits().unwrap(), bits);
    }
}
