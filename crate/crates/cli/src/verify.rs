//! `verify`: invariant suites with one machine-readable line per property.

use std::sync::Arc;

use anyhow::{bail, Result};
use quantile_regret::adversary::{minimax_set_known_y0, q_delta};
use quantile_regret::covariates::{
    expected_assignments_cov, outcome_distribution_cov, outcome_distribution_cov_oracle, random_covariate_rule,
    CovariateState,
};
use quantile_regret::engine::{enumerate_oracle, expected_assignment, outcome_distribution, regret};
use quantile_regret::rules::{constant_rule, random_tabular_rule, RandomTableParams};
use quantile_regret::statespace::{enumerate_states, index_of, state_count};
use quantile_regret::{DiscreteDist, Design, Dist, Exact, QuantileSpec, Sample, Scalar, StateOfNature, TreatmentRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Settings;

pub const SUITES: &[&str] = &["cardinality", "sandwich", "oracle", "minimax-set"];

pub fn defaults() -> Settings {
    Settings::from_pairs([
        ("n-grid", "6".to_string()),
        ("w-grid", "12".to_string()),
        ("trials", "1000".to_string()),
        ("max-n", "8".to_string()),
        ("seed", "1".to_string()),
        ("exact", "true".to_string()),
    ])
    .expect("default keys are known")
}

#[derive(Debug, Serialize)]
pub struct PropertyResult {
    pub suite: &'static str,
    pub property: &'static str,
    pub checked: u64,
    pub failures: u64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
}

struct Tally {
    suite: &'static str,
    property: &'static str,
    checked: u64,
    failures: u64,
    first_failure: Option<String>,
}

impl Tally {
    fn new(suite: &'static str, property: &'static str) -> Self {
        Tally {
            suite,
            property,
            checked: 0,
            failures: 0,
            first_failure: None,
        }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures += 1;
            self.first_failure.get_or_insert_with(detail);
        }
    }

    fn done(self) -> PropertyResult {
        PropertyResult {
            suite: self.suite,
            property: self.property,
            checked: self.checked,
            failures: self.failures,
            pass: self.failures == 0 && self.checked > 0,
            first_failure: self.first_failure,
        }
    }
}

pub fn run(suite: &str, s: &Settings) -> Result<Vec<PropertyResult>> {
    match suite {
        "cardinality" => cardinality(s.parse("n-grid")?, s.parse("w-grid")?),
        "sandwich" => Ok(vec![sandwich(s.parse("trials")?, s.parse("seed")?)]),
        "oracle" => Ok(oracle(s.parse("max-n")?, s.parse("seed")?)),
        "minimax-set" => Ok(vec![minimax_set()]),
        "all" => {
            let mut out = Vec::new();
            for name in SUITES {
                out.extend(run(name, s)?);
            }
            Ok(out)
        }
        other => bail!("unknown suite `{other}`: expected one of {}, all", SUITES.join(", ")),
    }
}

fn q(n: i64, d: i64) -> Exact {
    Exact::from_ratio(n, d)
}

fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1u64, |acc, i| acc * (n - k + i) / i)
}

fn cardinality(n: usize, w: usize) -> Result<Vec<PropertyResult>> {
    let expected = binomial((n + w) as u64, n as u64);
    let mut count = Tally::new("cardinality", "state-count");
    let mut index = Tally::new("cardinality", "index-round-trip");
    let mut seen = 0u64;
    for (i, state) in enumerate_states(n, w)?.enumerate() {
        seen += 1;
        let back = index_of(&state)?;
        index.check(back == i as u64, || format!("state {i} maps back to {back}"));
    }
    count.check(seen == expected, || format!("enumerated {seen}, expected {expected}"));
    let counted = state_count(n, w)?;
    count.check(counted == expected, || format!("state_count gives {counted}, expected {expected}"));
    Ok(vec![count.done(), index.done()])
}

fn random_discrete(rng: &mut ChaCha8Rng, max_atoms: usize) -> DiscreteDist<Exact> {
    let atoms = rng.random_range(1..=max_atoms);
    let pairs: Vec<(Exact, i64)> = (0..atoms)
        .map(|_| (q(rng.random_range(0..=8), 8), rng.random_range(1..=5)))
        .collect();
    let total: i64 = pairs.iter().map(|(_, w)| w).sum();
    DiscreteDist::from_pairs(pairs.into_iter().map(|(x, w)| (x, q(w, total))).collect()).expect("valid atoms")
}

/// A table rule applied to the sample cut at 1/2, defined for any outcomes.
fn thresholded_rule(rng: &mut ChaCha8Rng, design: &Design<Exact>, seed: u64) -> TreatmentRule<Exact> {
    if rng.random_bool(0.2) {
        return constant_rule(q(rng.random_range(0..=4), 4)).expect("constant in range");
    }
    let Ok(TreatmentRule::Table(table)) = random_tabular_rule(design, seed, RandomTableParams::default()) else {
        return TreatmentRule::Constant(q(1, 2));
    };
    let half = q(1, 2);
    let cut = move |ys: &[Exact]| -> Vec<Exact> { ys.iter().map(|y| if *y >= half { q(1, 1) } else { q(0, 1) }).collect() };
    TreatmentRule::Custom {
        name: "thresholded".into(),
        f: Arc::new(move |s: &Sample<Exact>| {
            let binary = match s {
                Sample::Fixed { y0, y1 } => Sample::Fixed { y0: cut(y0), y1: cut(y1) },
                Sample::Random { t, y } => Sample::Random { t: t.clone(), y: cut(y) },
                Sample::Innovation { y1 } => Sample::Innovation { y1: cut(y1) },
            };
            table.get(&binary.bits().expect("binary after cut")).clone()
        }),
    }
}

fn sandwich(trials: u64, seed: u64) -> PropertyResult {
    let mut t = Tally::new("sandwich", "quantile-between-marginals");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..trials {
        let design = match i % 3 {
            0 => Design::Fixed {
                n0: rng.random_range(0..=2),
                n1: rng.random_range(0..=2),
            },
            1 => Design::Random {
                n: rng.random_range(0..=2),
                p: q(rng.random_range(1..=3), 4),
            },
            _ => Design::Innovation {
                n: rng.random_range(0..=3),
                q0: q(rng.random_range(0..=10), 10),
            },
        };
        let rule = thresholded_rule(&mut rng, &design, seed.wrapping_mul(7919).wrapping_add(i));
        let s = StateOfNature::new(random_discrete(&mut rng, 3), random_discrete(&mut rng, 3));
        let spec = QuantileSpec::new(q(rng.random_range(1..=19), 20), q(rng.random_range(0..=4), 4)).expect("valid spec");
        match outcome_distribution(&rule, &s, &design) {
            Ok(dist) => {
                let qb = dist.quantile(&spec);
                let (a, b) = (s.y0.quantile(&spec), s.y1.quantile(&spec));
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                t.check(lo <= qb && qb <= hi, || {
                    format!("trial {i}: {} outside [{}, {}]", qb.to_fraction_string(), lo.to_fraction_string(), hi.to_fraction_string())
                });
            }
            Err(e) => t.check(false, || format!("trial {i}: {e}")),
        }
    }
    t.done()
}

fn oracle(max_n: usize, seed: u64) -> Vec<PropertyResult> {
    let mut plain = Tally::new("oracle", "aggregation-equals-enumeration");
    let mut cov = Tally::new("oracle", "covariate-aggregation-equals-enumeration");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..=max_n {
        for rep in 0..3u64 {
            let s = StateOfNature::bernoulli(q(rng.random_range(0..=12), 12), q(rng.random_range(0..=12), 12))
                .expect("bernoulli state");
            let n0 = rng.random_range(0..=n);
            let designs = [
                Design::Fixed { n0, n1: n - n0 },
                Design::Random {
                    n,
                    p: q(rng.random_range(1..=4), 5),
                },
                Design::Innovation { n, q0: q(1, 2) },
            ];
            for design in designs {
                let rule_seed = seed.wrapping_mul(1000).wrapping_add(10 * n as u64 + rep);
                let result = random_tabular_rule(&design, rule_seed, RandomTableParams::default())
                    .and_then(|rule| Ok((expected_assignment(&rule, &s, &design)?, enumerate_oracle(&rule, &s, &design)?)));
                match result {
                    Ok((fast, slow)) => plain.check(fast == slow, || {
                        format!("{} n={n}: {} vs {}", design.name(), fast.to_fraction_string(), slow.to_fraction_string())
                    }),
                    Err(e) => plain.check(false, || format!("{} n={n}: {e}", design.name())),
                }
            }
        }
    }
    for i in 0..30u64 {
        let n = (i % 4) as usize % (max_n + 1);
        let design = match i % 3 {
            0 => {
                let n0 = rng.random_range(0..=n);
                Design::Fixed { n0, n1: n - n0 }
            }
            1 => Design::Random { n, p: q(1, 3) },
            _ => Design::Innovation { n, q0: q(2, 5) },
        };
        let f0 = q(rng.random_range(1..=4), 5);
        let fx = vec![f0.clone(), q(1, 1) - f0];
        let marginals = (0..2)
            .map(|_| {
                (
                    Dist::bernoulli(q(rng.random_range(0..=6), 6)).expect("bernoulli"),
                    Dist::bernoulli(q(rng.random_range(0..=6), 6)).expect("bernoulli"),
                )
            })
            .collect();
        let result = CovariateState::new(fx, marginals).and_then(|s| {
            let rule = random_covariate_rule(2, &design, seed.wrapping_mul(1000).wrapping_add(500 + i), RandomTableParams::default())?;
            let fast = outcome_distribution_cov(&rule, &s, &design)?.to_discrete();
            let slow = outcome_distribution_cov_oracle(&rule, &s, &design)?;
            let e = expected_assignments_cov(&rule, &s, &design)?;
            Ok(fast == Some(slow) && e.iter().all(|x| x.in_unit_interval()))
        });
        match result {
            Ok(ok) => cov.check(ok, || format!("covariate instance {i}: aggregated and enumerated laws differ")),
            Err(e) => cov.check(false, || format!("covariate instance {i}: {e}")),
        }
    }
    vec![plain.done(), cov.done()]
}

/// Closed-form minimax set against a grid search over the two adversary
/// families, for a three-atom untreated law with quantile above 1/2.
fn minimax_set() -> PropertyResult {
    let mut t = Tally::new("minimax-set", "closed-form-equals-grid");
    let alpha = q(1, 2);
    let y0: Dist<Exact> = DiscreteDist::from_pairs(vec![(q(0, 1), q(3, 10)), (q(3, 5), q(2, 5)), (q(1, 1), q(3, 10))])
        .expect("valid atoms")
        .into();
    let spec = QuantileSpec::lower(alpha.clone()).expect("valid spec");
    let q0 = y0.quantile(&spec);
    let ends = q_delta(&y0, &alpha, &q(0, 1)).and_then(|a| Ok((a, q_delta(&y0, &alpha, &q(1, 1))?)));
    match ends {
        Ok((at0, at1)) => {
            t.check(at0 == q0, || "q_delta(0) differs from the quantile".into());
            t.check(at1 == q(0, 1), || "q_delta(1) differs from 0".into());
        }
        Err(e) => t.check(false, || e.to_string()),
    }
    let set = match minimax_set_known_y0(&y0, &alpha) {
        Ok(s) => s,
        Err(e) => {
            t.check(false, || e.to_string());
            return t.done();
        }
    };
    let d = Design::Fixed { n0: 0, n1: 0 };
    let eps = q(1, 1_000_000_000);
    let families = [
        StateOfNature::new(
            y0.clone(),
            DiscreteDist::from_pairs(vec![
                (q(0, 1), alpha.clone() - eps.clone()),
                (q(1, 1), q(1, 1) - alpha.clone() + eps),
            ])
            .expect("valid atoms"),
        ),
        StateOfNature::new(y0.clone(), DiscreteDist::point_mass(q(0, 1)).expect("point mass")),
    ];
    let worst: Vec<Exact> = (0..=100)
        .map(|j| {
            let rule = TreatmentRule::Constant(q(j, 100));
            families
                .iter()
                .filter_map(|s| regret(&rule, s, &d, &spec).ok())
                .fold(q(0, 1), |a, b| if b > a { b } else { a })
        })
        .collect();
    let best = worst.iter().min().cloned().unwrap_or_else(|| q(0, 1));
    for (j, w) in worst.iter().enumerate() {
        let brute = *w == best;
        let claimed = set.set.contains(&q(j as i64, 100));
        t.check(brute == claimed, || format!("delta={j}/100: grid {brute}, closed form {claimed}"));
    }
    t.check(set.max_regret == best, || {
        format!("max regret {} vs grid {}", set.max_regret.to_fraction_string(), best.to_fraction_string())
    });
    t.done()
}
