//! `adversary`: construct and certify a worst-case state for one rule.

use anyhow::{bail, Context, Result};
use quantile_regret::adversary::{q1_equals_one_case, worst_case_fixed, worst_case_innovation, worst_case_random};
use quantile_regret::covariates::{worst_case_cov, CovariateRule, CovariateTable};
use quantile_regret::rules::{constant_rule, empirical_success_rule, RuleTable};
use quantile_regret::{Design, Error, QuantileSpec, Scalar, TreatmentRule};

use crate::config::Settings;

pub fn defaults() -> Settings {
    Settings::from_pairs([
        ("design", "fixed".to_string()),
        ("n0", "0".to_string()),
        ("n1", "0".to_string()),
        ("sample-size", "0".to_string()),
        ("p", "1/2".to_string()),
        ("q0", "1/2".to_string()),
        ("alpha", "1/2".to_string()),
        ("r", "0".to_string()),
        ("xi", "1e-8".to_string()),
        ("covariates", "0".to_string()),
        ("exact", "true".to_string()),
    ])
    .expect("default keys are known")
}

/// Outcome of one certification: the printable record and whether the
/// independent recomputation agreed.
pub struct Outcome {
    pub record: String,
    pub certified: bool,
}

fn scalar<S: Scalar>(s: &Settings, key: &str) -> Result<S> {
    S::parse_literal(s.require(key)?).with_context(|| format!("setting `{key}`"))
}

pub fn design<S: Scalar>(s: &Settings) -> Result<Design<S>> {
    let d = match s.require("design")?.trim() {
        "fixed" => Design::Fixed {
            n0: s.parse("n0")?,
            n1: s.parse("n1")?,
        },
        "random" => Design::Random {
            n: s.parse("sample-size")?,
            p: scalar(s, "p")?,
        },
        "innovation" => Design::Innovation {
            n: s.parse("sample-size")?,
            q0: scalar(s, "q0")?,
        },
        other => bail!("setting `design` = `{other}`: expected fixed, random or innovation"),
    };
    d.validate()?;
    Ok(d)
}

fn describe<S: Scalar>(d: &Design<S>) -> String {
    match d {
        Design::Fixed { n0, n1 } => format!("fixed n0={n0} n1={n1}"),
        Design::Random { n, p } => format!("random n={n} p={}", p.to_fraction_string()),
        Design::Innovation { n, q0 } => format!("innovation n={n} q0={}", q0.to_fraction_string()),
    }
}

fn plain_rule<S: Scalar>(spec_text: &str, d: &Design<S>, spec: &QuantileSpec<S>, xi: &S) -> Result<TreatmentRule<S>> {
    let t = spec_text.trim();
    if t == "esr" {
        let Design::Innovation { q0, .. } = d else {
            bail!("the empirical success rule needs the innovation design");
        };
        return Ok(empirical_success_rule(q0.clone(), spec.clone(), xi.clone()));
    }
    if let Some(c) = t.strip_prefix("const:") {
        return Ok(constant_rule(S::parse_literal(c)?)?);
    }
    if let Some(path) = t.strip_prefix("table:") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading rule table {path}"))?;
        return Ok(TreatmentRule::Table(RuleTable::parse(&text, d.table_bits())?));
    }
    bail!("rule `{t}`: expected const:<c>, esr or table:<file>")
}

fn covariate_rule<S: Scalar>(
    spec_text: &str,
    k: usize,
    d: &Design<S>,
    spec: &QuantileSpec<S>,
    xi: &S,
) -> Result<CovariateRule<S>> {
    let t = spec_text.trim();
    if let Some(path) = t.strip_prefix("covtable:") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading covariate table {path}"))?;
        return Ok(CovariateRule::Table(CovariateTable::parse(&text, k, d)?));
    }
    if let Some(values) = t.strip_prefix("const:") {
        if values.contains(',') {
            let v = values.split(',').map(S::parse_literal).collect::<std::result::Result<Vec<_>, _>>()?;
            if v.len() != k {
                bail!("rule `{t}` has {} entries for {k} covariate values", v.len());
            }
            return Ok(CovariateRule::constant(v)?);
        }
    }
    Ok(CovariateRule::Plain {
        k,
        rule: plain_rule(t, d, spec, xi)?,
    })
}

pub fn run<S: Scalar>(rule_text: &str, s: &Settings) -> Result<Outcome> {
    let d = design::<S>(s)?;
    let spec = QuantileSpec::new(scalar::<S>(s, "alpha")?, scalar::<S>(s, "r")?)?;
    let xi = scalar::<S>(s, "xi")?;
    let k: usize = s.parse("covariates")?;
    let header = format!(
        "rule: {}\ndesign: {}\nalpha: {}\nr: {}\n",
        rule_text.trim(),
        describe(&d),
        spec.alpha.to_fraction_string(),
        spec.r.to_fraction_string()
    );
    if k > 0 {
        let rule = covariate_rule(rule_text, k, &d, &spec, &xi)?;
        let fx = match s.get("fx") {
            Some(_) => s
                .list("fx")?
                .iter()
                .map(|v| S::parse_literal(v))
                .collect::<std::result::Result<Vec<_>, _>>()
                .context("setting `fx`")?,
            None => vec![S::one() / S::from_usize(k); k],
        };
        let cert = worst_case_cov(&rule, &d, &fx, &spec)?;
        let check = cert.verify(&rule, &d, &spec);
        return Ok(finish(header, cert.to_record(), check));
    }
    let rule = plain_rule(rule_text, &d, &spec, &xi)?;
    let cert = match &d {
        Design::Fixed { n0, n1 } => worst_case_fixed(&rule, *n0, *n1, &spec)?,
        Design::Random { n, p } => worst_case_random(&rule, *n, p.clone(), &spec)?,
        Design::Innovation { n, q0 } => {
            let fallback = q1_equals_one_case(&rule, *n, q0.clone(), &spec)?;
            match worst_case_innovation(&rule, *n, q0.clone(), &spec, None) {
                Ok(c) if c.achieved_regret > fallback.achieved_regret => c,
                Ok(_) | Err(Error::RuleIsZero) => fallback,
                Err(e) => return Err(e.into()),
            }
        }
    };
    let check = cert.verify(&rule, &d, &spec);
    Ok(finish(header, cert.to_record(), check))
}

fn finish(header: String, body: String, check: quantile_regret::Result<()>) -> Outcome {
    let (status, certified) = match check {
        Ok(()) => ("certified: yes\n".to_string(), true),
        Err(e) => (format!("certified: no ({e})\n"), false),
    };
    Outcome {
        record: format!("{header}{body}{status}"),
        certified,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use quantile_regret::Exact;

    fn settings(pairs: &[(&'static str, &str)]) -> Settings {
        Settings::from_pairs(pairs.iter().map(|(k, v)| (*k, v.to_string())))
            .unwrap()
            .over(&defaults())
    }

    fn regret_line(record: &str) -> &str {
        record.lines().find_map(|l| l.strip_prefix("regret: ")).unwrap()
    }

    #[test]
    fn no_data_half_rule_reaches_one() {
        let out = run::<Exact>("const:0.5", &settings(&[])).unwrap();
        assert!(out.certified);
        assert_eq!(regret_line(&out.record), "1");
    }

    #[test]
    fn never_treating_innovation_reaches_one_minus_q0() {
        let s = settings(&[("design", "innovation"), ("q0", "0.9"), ("sample-size", "5")]);
        let out = run::<Exact>("const:0", &s).unwrap();
        assert!(out.certified);
        assert_eq!(regret_line(&out.record), "1/10");
    }

    #[test]
    fn esr_needs_innovation() {
        assert!(run::<Exact>("esr", &settings(&[])).is_err());
    }

    #[test]
    fn covariate_constant_vector_reaches_one() {
        let s = settings(&[("covariates", "2"), ("fx", "2/5,3/5"), ("n0", "1"), ("n1", "1")]);
        let out = run::<Exact>("const:0.25,0.75", &s).unwrap();
        assert!(out.certified);
        assert_eq!(regret_line(&out.record), "1");
    }
}
