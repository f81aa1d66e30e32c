//! The grid state space: distributions on `{0, 1/n, ..., 1}` with masses that
//! are multiples of `1/w`, plus the two untreated-outcome specifications.
//!
//! States are the compositions of `w` into `n + 1` parts, ordered
//! lexicographically from largest to smallest, so `(1, 0)` precedes `(0, 1)`.
//! [`index_of`] and [`state_at`] give the index bijection.

use crate::dist::{DiscreteDist, Dist, MixedDist, QuantileSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridState {
    pub n: usize,
    /// `masses[j]` units of `1/w` sit at point `j/n`.
    pub masses: Vec<u32>,
}

impl GridState {
    pub fn w(&self) -> u32 {
        self.masses.iter().sum()
    }

    pub fn to_dist<S: Scalar>(&self) -> Result<DiscreteDist<S>> {
        let w = self.w() as i64;
        if w == 0 {
            return Err(Error::InvalidDistribution("grid state with zero mass".into()));
        }
        let pairs = self
            .masses
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0)
            .map(|(j, m)| (S::from_ratio(j as i64, self.n as i64), S::from_ratio(*m as i64, w)))
            .collect();
        DiscreteDist::from_pairs(pairs)
    }
}

/// `C(a, b)` with overflow detection.
fn choose(a: u64, b: u64) -> Option<u64> {
    if b > a {
        return Some(0);
    }
    let b = b.min(a - b);
    let mut acc: u128 = 1;
    for i in 0..b {
        acc = acc * (a - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Number of compositions of `m` into `parts` non-negative parts.
fn compositions(m: u64, parts: u64) -> Option<u64> {
    if parts == 0 {
        return Some(u64::from(m == 0));
    }
    choose(m + parts - 1, parts - 1)
}

/// `C(w + n, n)`, the number of grid states.
pub fn state_count(n: usize, w: usize) -> Result<u64> {
    compositions(w as u64, n as u64 + 1)
        .ok_or_else(|| Error::Overflow(format!("state count for (n, w) = ({n}, {w})")))
}

pub struct StateIter {
    current: Option<Vec<u32>>,
    n: usize,
}

impl Iterator for StateIter {
    type Item = GridState;

    fn next(&mut self) -> Option<GridState> {
        let state = self.current.take()?;
        let out = GridState {
            n: self.n,
            masses: state.clone(),
        };
        let mut next = state;
        let last = next.len() - 1;
        if let Some(i) = (0..last).rev().find(|&i| next[i] > 0) {
            let tail: u32 = next[i + 1..].iter().sum();
            next[i] -= 1;
            for v in next[i + 1..].iter_mut() {
                *v = 0;
            }
            next[i + 1] = tail + 1;
            self.current = Some(next);
        }
        Some(out)
    }
}

/// Every composition of `w` into `n + 1` parts, starting from `(w, 0, ..., 0)`.
pub fn enumerate_states(n: usize, w: usize) -> Result<StateIter> {
    if n == 0 || w == 0 {
        return Err(Error::Domain("grid requires n >= 1 and w >= 1".into()));
    }
    state_count(n, w)?;
    let mut first = vec![0u32; n + 1];
    first[0] = w as u32;
    Ok(StateIter {
        current: Some(first),
        n,
    })
}

/// Position of `state` in [`enumerate_states`] order.
pub fn index_of(state: &GridState) -> Result<u64> {
    let mut remaining = state.w() as u64;
    let parts = state.masses.len() as u64;
    let mut index: u64 = 0;
    for (pos, &c) in state.masses.iter().enumerate() {
        let left = parts - pos as u64 - 1;
        if left == 0 {
            break;
        }
        for v in (c as u64 + 1)..=remaining {
            index = index
                .checked_add(compositions(remaining - v, left).ok_or_else(|| Error::Overflow("index".into()))?)
                .ok_or_else(|| Error::Overflow("index".into()))?;
        }
        remaining -= c as u64;
    }
    Ok(index)
}

/// Inverse of [`index_of`].
pub fn state_at(n: usize, w: usize, index: u64) -> Result<GridState> {
    let total = state_count(n, w)?;
    if index >= total {
        return Err(Error::Domain(format!("state index {index} >= {total}")));
    }
    let mut rest = index;
    let mut remaining = w as u64;
    let mut masses = Vec::with_capacity(n + 1);
    for pos in 0..=n {
        let left = (n - pos) as u64;
        if left == 0 {
            masses.push(remaining as u32);
            break;
        }
        let mut v = remaining;
        loop {
            let block = compositions(remaining - v, left).ok_or_else(|| Error::Overflow("index".into()))?;
            if rest < block {
                break;
            }
            rest -= block;
            v -= 1;
        }
        masses.push(v as u32);
        remaining -= v;
    }
    Ok(GridState { n, masses })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Y0Choice {
    /// Two atoms: `P(Y0 = 0) = alpha - epsilon`, the rest at `q0`.
    I,
    /// Piecewise-uniform density split at `q0`.
    II,
}

impl Y0Choice {
    pub fn label(&self) -> &'static str {
        match self {
            Y0Choice::I => "I",
            Y0Choice::II => "II",
        }
    }
}

impl std::str::FromStr for Y0Choice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "i" | "1" => Ok(Y0Choice::I),
            "II" | "ii" | "2" => Ok(Y0Choice::II),
            other => Err(Error::parse(other, "expected I or II")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Y0Spec<S> {
    pub choice: Y0Choice,
    pub q0: S,
    pub alpha: S,
    pub epsilon: S,
}

impl<S: Scalar> Y0Spec<S> {
    pub fn new(choice: Y0Choice, q0: S, alpha: S) -> Self {
        Y0Spec {
            choice,
            q0,
            alpha,
            epsilon: S::parse_literal("0.000001").expect("literal"),
        }
    }
}

/// Untreated distribution with lower `alpha`-quantile exactly `q0`.
pub fn y0_distribution<S: Scalar>(spec: &Y0Spec<S>) -> Result<Dist<S>> {
    let dist: Dist<S> = match spec.choice {
        Y0Choice::I => {
            let a = spec.alpha.clone() - spec.epsilon.clone();
            if a.lt_tol(&S::zero()) {
                return Err(Error::InvalidDistribution(
                    "choice I requires alpha >= epsilon".into(),
                ));
            }
            DiscreteDist::from_pairs(vec![
                (S::zero(), a.clone()),
                (spec.q0.clone(), S::one() - a),
            ])?
            .into()
        }
        Y0Choice::II => MixedDist::choice2(spec.alpha.clone(), spec.q0.clone())?.into(),
    };
    let q = dist.quantile(&QuantileSpec::lower(spec.alpha.clone())?);
    if !q.approx_eq(&spec.q0) {
        return Err(Error::InvalidDistribution(format!(
            "constructed Y0 has quantile {} instead of {}",
            q.to_fraction_string(),
            spec.q0.to_fraction_string()
        )));
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    #[test]
    fn small_enumerations() {
        let states: Vec<_> = enumerate_states(1, 1).unwrap().map(|s| s.masses).collect();
        assert_eq!(states, vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(enumerate_states(2, 2).unwrap().count(), 6);
        let states: Vec<_> = enumerate_states(2, 2).unwrap().map(|s| s.masses).collect();
        assert_eq!(
            states,
            vec![vec![2, 0, 0], vec![1, 1, 0], vec![1, 0, 1], vec![0, 2, 0], vec![0, 1, 1], vec![0, 0, 2]]
        );
    }

    #[test]
    fn default_grid_cardinality() {
        assert_eq!(state_count(6, 12).unwrap(), 18564);
        assert_eq!(enumerate_states(6, 12).unwrap().count(), 18564);
    }

    #[test]
    fn index_bijection() {
        for (i, s) in enumerate_states(3, 5).unwrap().enumerate() {
            assert_eq!(index_of(&s).unwrap(), i as u64);
            assert_eq!(state_at(3, 5, i as u64).unwrap(), s);
        }
        assert!(state_at(3, 5, 56).is_err());
    }

    #[test]
    fn overflow_is_detected() {
        assert!(state_count(200, 200).is_err());
    }

    #[test]
    fn grid_state_drops_zero_masses() {
        let s = GridState { n: 2, masses: vec![1, 0, 3] };
        let d = s.to_dist::<Exact>().unwrap();
        assert_eq!(d.support(), &[q(0, 1), q(1, 1)]);
        assert_eq!(d.masses(), &[q(1, 4), q(3, 4)]);
    }

    #[test]
    fn choice_one_atoms() {
        let spec = Y0Spec::new(Y0Choice::I, q(9, 10), q(1, 2));
        let d = y0_distribution(&spec).unwrap().to_discrete().unwrap();
        assert_eq!(d.masses(), &[q(499_999, 1_000_000), q(500_001, 1_000_000)]);
    }

    #[test]
    fn choice_two_densities() {
        let d = y0_distribution(&Y0Spec::new(Y0Choice::II, q(1, 2), q(1, 2))).unwrap();
        assert_eq!(d.cdf(&q(1, 3)).unwrap(), q(1, 3));
        let d = y0_distribution(&Y0Spec::new(Y0Choice::II, q(9, 10), q(1, 10))).unwrap();
        assert_eq!(d.cdf(&q(9, 10)).unwrap(), q(1, 10));
        assert_eq!(d.cdf(&q(19, 20)).unwrap(), q(11, 20));
    }

    #[test]
    fn quantile_is_q0_on_the_design_grid() {
        for alpha in [q(1, 10), q(1, 2), q(9, 10)] {
            for q0 in [q(1, 10), q(1, 2), q(9, 10)] {
                for choice in [Y0Choice::I, Y0Choice::II] {
                    let spec = Y0Spec::new(choice, q0.clone(), alpha.clone());
                    let d = y0_distribution(&spec).unwrap();
                    let qs = QuantileSpec::lower(alpha.clone()).unwrap();
                    assert_eq!(d.quantile(&qs), q0);
                }
            }
        }
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        assert!(y0_distribution(&Y0Spec::new(Y0Choice::I, q(1, 2), q(0, 1))).is_err());
        assert!(y0_distribution(&Y0Spec::new(Y0Choice::II, q(1, 1), q(1, 2))).is_err());
    }
}
