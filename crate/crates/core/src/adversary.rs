//! Worst-case states of nature.
//!
//! Each constructor returns an [`AdversaryCertificate`]: the state, the
//! perturbation `epsilon` that was needed, and the regret recomputed through
//! the exact engine. In the fixed and random designs every rule can be pushed
//! to regret 1 with Bernoulli marginals. In the innovation design a rule that
//! ever treats can be pushed to regret `q0`, and one that under-treats to
//! `1 - q0` by a point mass at 1.

use std::fmt;

use crate::dist::{DiscreteDist, Dist, QuantileSpec};
use crate::engine::{outcome_distribution, regret, Design, StateOfNature, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::rules::{index_bits, Sample, TreatmentRule};
use crate::scalar::Scalar;

/// Largest binary sample (in bits) the branch conditions are checked over.
const MAX_BRANCH_BITS: usize = 24;

/// How many powers of ten the epsilon search tries.
pub(crate) const EPSILON_STEPS: i32 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Untreated point mass at 0, treated zero-mass just below `alpha`.
    UntreatedAtZero,
    /// Treated point mass at 0, untreated zero-mass just below `alpha`.
    TreatedAtZero,
    /// `alpha = 0`: treated outcome is 0 with small probability.
    AlphaZeroTreated,
    /// `alpha = 0`: untreated outcome is 0 with small probability.
    AlphaZeroUntreated,
    /// `alpha = 1`, `r = 0`: regret is bounded by what degenerate states give.
    AlphaOneDegenerate,
    Lemma1,
    Q1EqualsOne,
}

impl Branch {
    pub fn label(&self) -> &'static str {
        match self {
            Branch::UntreatedAtZero => "a0=1,a1=alpha-eps",
            Branch::TreatedAtZero => "a0=alpha-eps,a1=1",
            Branch::AlphaZeroTreated => "a0=0,a1=eps",
            Branch::AlphaZeroUntreated => "a0=eps,a1=0",
            Branch::AlphaOneDegenerate => "alpha1-degenerate",
            Branch::Lemma1 => "lemma1",
            Branch::Q1EqualsOne => "q1-equals-1",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryCertificate<S> {
    pub branch: Branch,
    pub state: StateOfNature<S>,
    /// `None` when the construction needs no perturbation.
    pub epsilon: Option<S>,
    pub achieved_regret: S,
}

impl<S: Scalar> AdversaryCertificate<S> {
    /// Recomputes the regret of `rule` at the certified state.
    pub fn verify(&self, rule: &TreatmentRule<S>, design: &Design<S>, spec: &QuantileSpec<S>) -> Result<()> {
        let r = regret(rule, &self.state, design, spec)?;
        if r == self.achieved_regret || (!S::EXACT && r.approx_eq(&self.achieved_regret)) {
            Ok(())
        } else {
            Err(Error::Certification(format!(
                "certificate claims regret {} but the engine gives {}",
                self.achieved_regret.to_fraction_string(),
                r.to_fraction_string()
            )))
        }
    }

    /// Plain-text record with exact fractions, one `key: value` per line.
    pub fn to_record(&self) -> String {
        let eps = self
            .epsilon
            .as_ref()
            .map(|e| e.to_fraction_string())
            .unwrap_or_else(|| "none".into());
        format!(
            "branch: {}\ny0: {}\ny1: {}\nepsilon: {}\nregret: {}\n",
            self.branch,
            self.state.y0,
            self.state.y1,
            eps,
            self.achieved_regret.to_fraction_string()
        )
    }
}

pub(crate) fn epsilons<S: Scalar>() -> impl Iterator<Item = S> {
    let ten = S::from_ratio(10, 1);
    (1..=EPSILON_STEPS).map(move |k| S::one() / ten.pow(k as u32))
}

pub(crate) fn same<S: Scalar>(a: &S, b: &S) -> bool {
    if S::EXACT {
        a == b
    } else {
        a.approx_eq(b)
    }
}

/// Every binary sample of `design` together with its untreated outcomes.
fn binary_samples<S: Scalar>(design: &Design<S>) -> Result<Vec<(Sample<S>, Vec<bool>)>> {
    let bits = design.table_bits();
    if bits > MAX_BRANCH_BITS {
        return Err(Error::BudgetExceeded {
            needed: 1u128 << bits,
            budget: 1u128 << MAX_BRANCH_BITS,
        });
    }
    (0..1usize << bits)
        .map(|i| {
            let b = index_bits(i, bits);
            let untreated = match design {
                Design::Fixed { n0, .. } => b[..*n0].to_vec(),
                Design::Random { n, .. } => (0..*n).filter(|&k| !b[k]).map(|k| b[n + k]).collect(),
                Design::Innovation { .. } => Vec::new(),
            };
            Ok((Sample::from_bits(design, &b)?, untreated))
        })
        .collect()
}

fn certify_bernoulli<S: Scalar>(
    rule: &TreatmentRule<S>,
    design: &Design<S>,
    spec: &QuantileSpec<S>,
    branch: Branch,
    make: impl Fn(&S) -> Option<(S, S)>,
) -> Result<AdversaryCertificate<S>> {
    for eps in epsilons::<S>() {
        let Some((a0, a1)) = make(&eps) else { continue };
        let state = StateOfNature::bernoulli(a0, a1)?;
        let p_zero = outcome_distribution(rule, &state, design)?.cdf(&S::zero())?;
        let needed = if spec.alpha.is_zero_tol() { S::zero() } else { spec.alpha.clone() };
        if p_zero <= needed {
            continue;
        }
        let r = regret(rule, &state, design, spec)?;
        if same(&r, &S::one()) {
            return Ok(AdversaryCertificate {
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

fn worst_case_bernoulli<S: Scalar>(
    rule: &TreatmentRule<S>,
    design: &Design<S>,
    spec: &QuantileSpec<S>,
) -> Result<AdversaryCertificate<S>> {
    design.validate()?;
    let alpha = spec.alpha.clone();
    if alpha.approx_eq(&S::one()) {
        let mut best: Option<AdversaryCertificate<S>> = None;
        for (a0, a1) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let state = StateOfNature::bernoulli(S::from_ratio(a0, 1), S::from_ratio(a1, 1))?;
            let r = regret(rule, &state, design, spec)?;
            if best.as_ref().is_none_or(|b| r > b.achieved_regret) {
                best = Some(AdversaryCertificate {
                    branch: Branch::AlphaOneDegenerate,
                    state,
                    epsilon: None,
                    achieved_regret: r,
                });
            }
        }
        return Ok(best.expect("four candidates"));
    }
    let samples = binary_samples(design)?;
    if alpha.is_zero_tol() {
        let treats_all_ones = samples.iter().try_fold(false, |acc, (s, untreated)| -> Result<bool> {
            Ok(acc || (untreated.iter().all(|&b| b) && !rule.evaluate(s)?.is_zero_tol()))
        })?;
        return if treats_all_ones {
            certify_bernoulli(rule, design, spec, Branch::AlphaZeroTreated, |e| {
                Some((S::zero(), e.clone()))
            })
        } else {
            certify_bernoulli(rule, design, spec, Branch::AlphaZeroUntreated, |e| {
                Some((e.clone(), S::zero()))
            })
        };
    }
    let always_treats_zeros = samples.iter().try_fold(true, |acc, (s, untreated)| -> Result<bool> {
        Ok(acc && (untreated.iter().any(|&b| b) || rule.evaluate(s)?.approx_eq(&S::one())))
    })?;
    let fits = |e: &S| e.le_tol(&alpha);
    if always_treats_zeros {
        certify_bernoulli(rule, design, spec, Branch::TreatedAtZero, |e| {
            fits(e).then(|| (alpha.clone() - e.clone(), S::one()))
        })
    } else {
        certify_bernoulli(rule, design, spec, Branch::UntreatedAtZero, |e| {
            fits(e).then(|| (S::one(), alpha.clone() - e.clone()))
        })
    }
}

/// Bernoulli state with regret 1 in the fixed design.
pub fn worst_case_fixed<S: Scalar>(
    rule: &TreatmentRule<S>,
    n0: usize,
    n1: usize,
    spec: &QuantileSpec<S>,
) -> Result<AdversaryCertificate<S>> {
    worst_case_bernoulli(rule, &Design::Fixed { n0, n1 }, spec)
}

/// Bernoulli state with regret 1 in the random-assignment design.
pub fn worst_case_random<S: Scalar>(
    rule: &TreatmentRule<S>,
    n: usize,
    p: S,
    spec: &QuantileSpec<S>,
) -> Result<AdversaryCertificate<S>> {
    worst_case_bernoulli(rule, &Design::Random { n, p }, spec)
}

/// First sample over `candidates^n` on which `rule` treats with positive
/// probability.
pub fn find_witness<S: Scalar>(rule: &TreatmentRule<S>, n: usize, candidates: &[S]) -> Result<Vec<S>> {
    if candidates.is_empty() {
        return Err(Error::RuleIsZero);
    }
    let total = (candidates.len() as u128).checked_pow(n as u32);
    match total {
        Some(t) if t <= DEFAULT_BUDGET => {}
        _ => {
            return Err(Error::BudgetExceeded {
                needed: total.unwrap_or(u128::MAX),
                budget: DEFAULT_BUDGET,
            })
        }
    }
    let mut idx = vec![0usize; n];
    loop {
        let y1: Vec<S> = idx.iter().map(|&i| candidates[i].clone()).collect();
        let sample = Sample::Innovation { y1: y1.clone() };
        if rule.evaluate(&sample)?.gt_tol(&S::zero()) {
            return Ok(y1);
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return Err(Error::RuleIsZero);
            }
            idx[pos] += 1;
            if idx[pos] < candidates.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Treated distribution built around the witness: a base mass `(alpha+1)/2`
/// at 0 and the rest spread over the witness components by multiplicity.
pub(crate) fn lemma1_y1<S: Scalar>(alpha: &S, witness: &[S]) -> Result<DiscreteDist<S>> {
    let base = (alpha.clone() + S::one()) * S::half();
    if witness.is_empty() {
        return DiscreteDist::point_mass(S::zero());
    }
    let unit = (S::one() - base.clone()) / S::from_usize(witness.len());
    let mut pairs = vec![(S::zero(), base)];
    pairs.extend(witness.iter().map(|y| (y.clone(), unit.clone())));
    DiscreteDist::from_pairs(pairs)
}

pub(crate) fn two_point_y0<S: Scalar>(q0: &S, alpha: &S, eps: &S) -> Result<DiscreteDist<S>> {
    if q0.is_zero_tol() || alpha.is_zero_tol() {
        return DiscreteDist::point_mass(q0.clone());
    }
    let a = alpha.clone() - eps.clone();
    DiscreteDist::from_pairs(vec![(S::zero(), a.clone()), (q0.clone(), S::one() - a)])
}

/// State with regret exactly `q0` for a rule that treats some sample.
///
/// Without a witness, binary samples are searched; a rule that is zero on all
/// of them yields [`Error::RuleIsZero`].
pub fn worst_case_innovation<S: Scalar>(
    rule: &TreatmentRule<S>,
    n: usize,
    q0: S,
    spec: &QuantileSpec<S>,
    witness: Option<&[S]>,
) -> Result<AdversaryCertificate<S>> {
    let design = Design::Innovation { n, q0: q0.clone() };
    design.validate()?;
    let alpha = spec.alpha.clone();
    if alpha.approx_eq(&S::one()) {
        return Err(Error::Domain("the innovation adversary requires alpha < 1".into()));
    }
    if q0.is_zero_tol() {
        let state = StateOfNature::new(DiscreteDist::point_mass(S::zero())?, DiscreteDist::point_mass(S::zero())?);
        let r = regret(rule, &state, &design, spec)?;
        return Ok(AdversaryCertificate {
            branch: Branch::Lemma1,
            state,
            epsilon: None,
            achieved_regret: r,
        });
    }
    let witness = match witness {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Domain(format!("witness has {} components, expected {n}", w.len())));
            }
            if !rule.evaluate(&Sample::Innovation { y1: w.to_vec() })?.gt_tol(&S::zero()) {
                return Err(Error::Domain("the rule does not treat on the supplied witness".into()));
            }
            w.to_vec()
        }
        None => find_witness(rule, n, &[S::zero(), S::one()])?,
    };
    let y1 = lemma1_y1(&alpha, &witness)?;
    if alpha.is_zero_tol() {
        let state = StateOfNature::new(DiscreteDist::point_mass(q0.clone())?, y1);
        let r = regret(rule, &state, &design, spec)?;
        return certified(Branch::Lemma1, state, None, r, &q0);
    }
    for eps in epsilons::<S>() {
        if eps >= alpha {
            continue;
        }
        let state = StateOfNature::new(two_point_y0(&q0, &alpha, &eps)?, y1.clone());
        let p_zero = outcome_distribution(rule, &state, &design)?.cdf(&S::zero())?;
        if p_zero <= alpha {
            continue;
        }
        let r = regret(rule, &state, &design, spec)?;
        return certified(Branch::Lemma1, state, Some(eps), r, &q0);
    }
    Err(Error::Certification(format!(
        "no epsilon down to 1e-{EPSILON_STEPS} pushes P(Y_B = 0) above alpha"
    )))
}

fn certified<S: Scalar>(
    branch: Branch,
    state: StateOfNature<S>,
    epsilon: Option<S>,
    r: S,
    target: &S,
) -> Result<AdversaryCertificate<S>> {
    if !same(&r, target) {
        return Err(Error::Certification(format!(
            "branch {branch} reached regret {} instead of {}",
            r.to_fraction_string(),
            target.to_fraction_string()
        )));
    }
    Ok(AdversaryCertificate {
        branch,
        state,
        epsilon,
        achieved_regret: r,
    })
}

/// Treated point mass at 1 against the two-point untreated distribution with
/// quantile `q0`. This is the worst case for rules that rarely treat.
pub fn q1_equals_one_case<S: Scalar>(
    rule: &TreatmentRule<S>,
    n: usize,
    q0: S,
    spec: &QuantileSpec<S>,
) -> Result<AdversaryCertificate<S>> {
    let design = Design::Innovation { n, q0: q0.clone() };
    design.validate()?;
    let eps = S::parse_literal("0.000001")?;
    let alpha = spec.alpha.clone();
    let perturbed = !(q0.is_zero_tol() || alpha.is_zero_tol());
    if perturbed && eps > alpha {
        return Err(Error::Domain("alpha is smaller than the untreated perturbation".into()));
    }
    let state = StateOfNature::new(two_point_y0(&q0, &alpha, &eps)?, DiscreteDist::point_mass(S::one())?);
    let r = regret(rule, &state, &design, spec)?;
    Ok(AdversaryCertificate {
        branch: Branch::Q1EqualsOne,
        state,
        epsilon: perturbed.then_some(eps),
        achieved_regret: r,
    })
}

/// Maximal regret of the minimax rules in the innovation design.
pub fn maximal_regret_innovation<S: Scalar>(q0: &S) -> S {
    S::min_of(q0.clone(), S::one() - q0.clone())
}

fn known_y0_quantile<S: Scalar>(y0: &Dist<S>, alpha: &S) -> Result<S> {
    if alpha.is_zero_tol() || alpha.ge_tol(&S::one()) {
        return Err(Error::Domain("known-Y0 analysis requires alpha in (0, 1)".into()));
    }
    let q = y0.quantile(&QuantileSpec::lower(alpha.clone())?);
    if y0.cdf(&q)? <= *alpha {
        return Err(Error::UnsupportedBoundaryCase(format!(
            "F(q_alpha) = alpha at q_alpha = {}",
            q.to_fraction_string()
        )));
    }
    Ok(q)
}

/// Smallest `q` in `[0, q_alpha(Y0)]` with `delta + (1 - delta) F(q) >= alpha`.
pub fn q_delta<S: Scalar>(y0: &Dist<S>, alpha: &S, delta: &S) -> Result<S> {
    if !delta.in_unit_interval() {
        return Err(Error::Domain("delta must lie in [0, 1]".into()));
    }
    known_y0_quantile(y0, alpha)?;
    if delta.ge_tol(alpha) {
        return Ok(S::zero());
    }
    let level = (alpha.clone() - delta.clone()) / (S::one() - delta.clone());
    Ok(y0.quantile(&QuantileSpec::lower(level)?))
}

#[derive(Clone, Debug, PartialEq)]
pub enum MinimaxSet<S> {
    /// Only `delta = 1`.
    TreatOnly,
    /// Every `delta` in `[0, 1]`.
    All,
    /// `[0, upper]`, or `[0, upper)` when not `closed`.
    UpTo { upper: S, closed: bool },
}

impl<S: Scalar> MinimaxSet<S> {
    pub fn contains(&self, delta: &S) -> bool {
        match self {
            MinimaxSet::TreatOnly => delta.approx_eq(&S::one()),
            MinimaxSet::All => delta.in_unit_interval(),
            MinimaxSet::UpTo { upper, closed } => {
                !delta.lt_tol(&S::zero()) && if *closed { delta <= upper } else { delta < upper }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnownY0Minimax<S> {
    pub q0: S,
    pub set: MinimaxSet<S>,
    pub max_regret: S,
}

/// Whether the no-data rule `delta` is minimax regret when the whole
/// untreated distribution is known.
pub fn is_minimax_known_y0<S: Scalar>(y0: &Dist<S>, alpha: &S, delta: &S) -> Result<bool> {
    let q0 = known_y0_quantile(y0, alpha)?;
    let half = S::half();
    Ok(match q0.cmp_tol(&half) {
        std::cmp::Ordering::Less => delta.approx_eq(&S::one()),
        std::cmp::Ordering::Equal => true,
        std::cmp::Ordering::Greater => {
            q0.clone() - q_delta(y0, alpha, delta)? <= S::one() - q0
        }
    })
}

/// Minimax no-data rules with known untreated distribution.
///
/// For `q0 > 1/2` the endpoint is bracketed by bisection on the monotone
/// membership test and then snapped to `(alpha - L) / (1 - L)`, where `L` is
/// the left limit of the CDF at `2 q0 - 1`. Membership of the endpoint
/// itself decides whether the interval is closed.
pub fn minimax_set_known_y0<S: Scalar>(y0: &Dist<S>, alpha: &S) -> Result<KnownY0Minimax<S>> {
    let q0 = known_y0_quantile(y0, alpha)?;
    let half = S::half();
    let (set, max_regret) = match q0.cmp_tol(&half) {
        std::cmp::Ordering::Less => (MinimaxSet::TreatOnly, q0.clone()),
        std::cmp::Ordering::Equal => (MinimaxSet::All, q0.clone()),
        std::cmp::Ordering::Greater => {
            let (mut lo, mut hi) = (S::zero(), S::one());
            for _ in 0..60 {
                if !S::EXACT && (hi.clone() - lo.clone()).to_f64() < 1e-12 {
                    break;
                }
                let mid = (lo.clone() + hi.clone()) * S::half();
                if is_minimax_known_y0(y0, alpha, &mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let c = q0.clone() + q0.clone() - S::one();
            let left = y0.to_mixed().cdf_left(&c)?;
            let upper = (alpha.clone() - left.clone()) / (S::one() - left);
            if upper.lt_tol(&lo) || upper.gt_tol(&hi) {
                return Err(Error::Certification(format!(
                    "closed-form endpoint {} lies outside the bisection bracket [{}, {}]",
                    upper.to_fraction_string(),
                    lo.to_fraction_string(),
                    hi.to_fraction_string()
                )));
            }
            let closed = is_minimax_known_y0(y0, alpha, &upper)?;
            (MinimaxSet::UpTo { upper, closed }, S::one() - q0.clone())
        }
    };
    Ok(KnownY0Minimax { q0, set, max_regret })
}
