use proptest::prelude::*;

use quantile_regret::adversary::{q_delta, worst_case_fixed, worst_case_random};
use quantile_regret::covariates::{outcome_distribution_cov, regret_cov, CovariateRule, CovariateState};
use quantile_regret::engine::{enumerate_oracle, expected_assignment, outcome_distribution, regret};
use quantile_regret::rules::{random_tabular_rule, RandomTableParams};
use quantile_regret::statespace::{index_of, state_at, state_count};
use quantile_regret::{mix, DiscreteDist, Design, Dist, Exact, QuantileSpec, Scalar, StateOfNature};

fn q(n: i64, d: i64) -> Exact {
    Exact::from_ratio(n, d)
}

/// Discrete distribution on the sixths with the given positive weights.
fn discrete(points: Vec<(u8, u8)>) -> DiscreteDist<Exact> {
    let total: i64 = points.iter().map(|(_, w)| *w as i64).sum();
    DiscreteDist::from_pairs(points.into_iter().map(|(x, w)| (q(x as i64, 6), q(w as i64, total))).collect()).unwrap()
}

fn atoms() -> impl Strategy<Value = Vec<(u8, u8)>> {
    prop::collection::vec((0u8..=6, 1u8..=5), 1..4)
}

fn design() -> impl Strategy<Value = Design<Exact>> {
    prop_oneof![
        (0usize..=3, 0usize..=3).prop_map(|(n0, n1)| Design::Fixed { n0, n1 }),
        (0usize..=3, 1i64..=4).prop_map(|(n, p)| Design::Random { n, p: q(p, 5) }),
        (0usize..=4, 0i64..=10).prop_map(|(n, k)| Design::Innovation { n, q0: q(k, 10) }),
    ]
}

fn spec() -> impl Strategy<Value = QuantileSpec<Exact>> {
    (1i64..20, 0i64..=4).prop_map(|(a, r)| QuantileSpec::new(q(a, 20), q(r, 4)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixture_quantile_is_sandwiched(y0 in atoms(), y1 in atoms(), e in 0i64..=12, spec in spec()) {
        let y0: Dist<Exact> = discrete(y0).into();
        let y1: Dist<Exact> = discrete(y1).into();
        let qb = mix(&y0, &y1, &q(e, 12)).unwrap().quantile(&spec);
        let (a, b) = (y0.quantile(&spec), y1.quantile(&spec));
        prop_assert!(qb >= a.clone().min(b.clone()));
        prop_assert!(qb <= a.max(b));
    }

    #[test]
    fn quantile_is_monotone_in_level(y in atoms(), a in 1i64..19, r in 0i64..=4) {
        let d = discrete(y);
        let lo = d.quantile(&QuantileSpec::new(q(a, 20), q(r, 4)).unwrap());
        let hi = d.quantile(&QuantileSpec::new(q(a + 1, 20), q(r, 4)).unwrap());
        prop_assert!(lo <= hi);
    }

    #[test]
    fn regret_lies_in_the_unit_interval(d in design(), seed in 0u64..1000, a0 in 0i64..=6, a1 in 0i64..=6, spec in spec()) {
        let rule = random_tabular_rule(&d, seed, RandomTableParams::default()).unwrap();
        let mut s = StateOfNature::bernoulli(q(a0, 6), q(a1, 6)).unwrap();
        if let Design::Innovation { q0, .. } = &d {
            // The untreated marginal must agree with the known quantile.
            s.y0 = Dist::point_mass(q0.clone()).unwrap();
        }
        let r = regret(&rule, &s, &d, &spec).unwrap();
        prop_assert!(r >= q(0, 1) && r <= q(1, 1));
    }

    #[test]
    fn aggregation_matches_enumeration(d in design(), seed in 0u64..1000, a0 in 0i64..=6, a1 in 0i64..=6) {
        let rule = random_tabular_rule(&d, seed, RandomTableParams::default()).unwrap();
        let s = StateOfNature::bernoulli(q(a0, 6), q(a1, 6)).unwrap();
        prop_assert_eq!(expected_assignment(&rule, &s, &d).unwrap(), enumerate_oracle(&rule, &s, &d).unwrap());
    }

    #[test]
    fn q_delta_decreases_in_delta(y in atoms(), a in 1i64..10, d1 in 0i64..=10, d2 in 0i64..=10) {
        let y0: Dist<Exact> = discrete(y).into();
        let alpha = q(a, 10);
        let qa = y0.quantile(&QuantileSpec::lower(alpha.clone()).unwrap());
        prop_assume!(y0.cdf(&qa).unwrap() > alpha);
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let at_lo = q_delta(&y0, &alpha, &q(lo, 10)).unwrap();
        let at_hi = q_delta(&y0, &alpha, &q(hi, 10)).unwrap();
        prop_assert!(at_hi <= at_lo);
        prop_assert!(at_lo <= qa);
    }

    #[test]
    fn single_covariate_is_the_plain_engine(d in design(), seed in 0u64..1000, a0 in 0i64..=6, a1 in 0i64..=6, spec in spec()) {
        let plain = random_tabular_rule(&d, seed, RandomTableParams::default()).unwrap();
        let s = StateOfNature::bernoulli(q(a0, 6), q(a1, 6)).unwrap();
        let cs = CovariateState::homogeneous(vec![q(1, 1)], s.y0.clone(), s.y1.clone()).unwrap();
        let rule = CovariateRule::Plain { k: 1, rule: plain.clone() };
        prop_assert_eq!(
            outcome_distribution_cov(&rule, &cs, &d).unwrap(),
            outcome_distribution(&plain, &s, &d).unwrap()
        );
        prop_assert_eq!(regret_cov(&rule, &cs, &d, &spec).unwrap(), regret(&plain, &s, &d, &spec).unwrap());
    }

    #[test]
    fn grid_index_round_trips(n in 1usize..6, w in 1usize..8, pick in 0u64..10_000) {
        let total = state_count(n, w).unwrap();
        let idx = pick % total;
        let s = state_at(n, w, idx).unwrap();
        prop_assert_eq!(s.w() as usize, w);
        prop_assert_eq!(index_of(&s).unwrap(), idx);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_fixed_rule_reaches_regret_one(n0 in 0usize..=2, n1 in 0usize..=3, seed in 0u64..1000, a in 1i64..10) {
        let rule = random_tabular_rule(&Design::Fixed { n0, n1 }, seed, RandomTableParams::default()).unwrap();
        let cert = worst_case_fixed(&rule, n0, n1, &QuantileSpec::lower(q(a, 10)).unwrap()).unwrap();
        prop_assert_eq!(cert.achieved_regret, q(1, 1));
    }

    #[test]
    fn every_random_rule_reaches_regret_one(n in 0usize..=3, seed in 0u64..1000, a in 1i64..10, p in 1i64..5) {
        let d = Design::Random { n, p: q(p, 5) };
        let rule = random_tabular_rule(&d, seed, RandomTableParams::default()).unwrap();
        let cert = worst_case_random(&rule, n, q(p, 5), &QuantileSpec::lower(q(a, 10)).unwrap()).unwrap();
        prop_assert_eq!(cert.achieved_regret, q(1, 1));
    }
}
