//! Grid experiment for the innovation design: per-state regret of the
//! empirical success rule and the constant rules, with max/mean/min
//! aggregates and pairwise comparison proportions.
//!
//! Outcome quantiles are computed analytically from the mixture; Monte Carlo
//! noise enters only through the estimated assignment probability of the
//! empirical success rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::dist::{mix, DiscreteDist, Dist, QuantileSpec};
use crate::engine::{esr_outcome_probabilities, snap_zero, EsrOutcome};
use crate::error::{Error, Result};
use crate::rules::EmpiricalSuccess;
use crate::scalar::Scalar;
use crate::statespace::{enumerate_states, y0_distribution, GridState, Y0Choice, Y0Spec};

#[derive(Clone, Debug, PartialEq)]
pub enum SimRule<S> {
    EmpiricalSuccess,
    Constant(S),
}

impl<S: Scalar> SimRule<S> {
    /// Machine label, as accepted by the CLI.
    pub fn label(&self) -> String {
        match self {
            SimRule::EmpiricalSuccess => "esr".into(),
            SimRule::Constant(c) => format!("const:{}", c.to_fraction_string()),
        }
    }

    /// Column heading for rendered tables.
    pub fn heading(&self) -> String {
        match self {
            SimRule::EmpiricalSuccess => "δ^ES".into(),
            SimRule::Constant(c) => {
                let v = c.to_f64();
                if v == 0.0 || v == 1.0 {
                    format!("δ^{v}")
                } else {
                    format!("δ^{}", format_decimal(v, 3))
                }
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t == "esr" {
            return Ok(SimRule::EmpiricalSuccess);
        }
        if let Some(c) = t.strip_prefix("const:") {
            let c = S::parse_literal(c)?;
            if !c.in_unit_interval() {
                return Err(Error::Rule("constant outside [0, 1]".into()));
            }
            return Ok(SimRule::Constant(c));
        }
        Err(Error::parse(text, "expected `esr` or `const:<value>`"))
    }
}

/// How the empirical success rule's assignment probability is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McStrategy {
    /// Draws the counts of treat/tie/no-treat decisions over `R` replications
    /// from their multinomial law, using exact per-sample probabilities.
    /// Same distribution as [`McStrategy::Direct`], cost independent of `R`.
    Aggregated,
    /// Draws `R` samples of size `N` and evaluates the rule on each.
    Direct,
    /// Uses the exact expectation; no sampling.
    Exact,
}

impl std::str::FromStr for McStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "aggregated" => Ok(McStrategy::Aggregated),
            "direct" => Ok(McStrategy::Direct),
            "exact" => Ok(McStrategy::Exact),
            other => Err(Error::parse(other, "expected aggregated, direct or exact")),
        }
    }
}

impl McStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            McStrategy::Aggregated => "aggregated",
            McStrategy::Direct => "direct",
            McStrategy::Exact => "exact",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig<S> {
    pub alphas: Vec<S>,
    pub q0s: Vec<S>,
    pub choices: Vec<Y0Choice>,
    pub n_grid: usize,
    pub w_grid: usize,
    pub sample_size: usize,
    pub replications: u64,
    pub seed: u64,
    pub xi: S,
    pub r: S,
    pub epsilon: S,
    pub rules: Vec<SimRule<S>>,
    pub mc: McStrategy,
}

impl<S: Scalar> Default for ExperimentConfig<S> {
    fn default() -> Self {
        let tenth = |k| S::from_ratio(k, 10);
        ExperimentConfig {
            alphas: vec![tenth(1), tenth(5), tenth(9)],
            q0s: vec![tenth(1), tenth(5), tenth(9)],
            choices: vec![Y0Choice::I, Y0Choice::II],
            n_grid: 6,
            w_grid: 12,
            sample_size: 30,
            replications: 100_000,
            seed: 20_240_101,
            xi: S::parse_literal("1e-8").expect("literal"),
            r: S::zero(),
            epsilon: S::parse_literal("1e-6").expect("literal"),
            rules: vec![
                SimRule::EmpiricalSuccess,
                SimRule::Constant(S::one()),
                SimRule::Constant(S::half()),
                SimRule::Constant(S::zero()),
            ],
            mc: McStrategy::Aggregated,
        }
    }
}

impl<S: Scalar> ExperimentConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid == 0 || self.w_grid == 0 {
            return Err(Error::Config("grid requires n >= 1 and w >= 1".into()));
        }
        if self.sample_size == 0 {
            return Err(Error::Config("sample size must be positive".into()));
        }
        if self.replications == 0 && self.mc != McStrategy::Exact {
            return Err(Error::Config("replications must be positive".into()));
        }
        if self.rules.is_empty() {
            return Err(Error::Config("no rules selected".into()));
        }
        for a in &self.alphas {
            QuantileSpec::new(a.clone(), self.r.clone())?;
        }
        for q0 in &self.q0s {
            if !q0.in_unit_interval() {
                return Err(Error::Config("q0 outside [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Per-state random stream: the global seed selects the key and the state
/// index selects the stream, so results do not depend on scheduling.
pub fn rng_stream(global_seed: u64, state_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
    rng.set_stream(state_index);
    rng
}

/// Estimate of the assignment probability from the multinomial counts of
/// decisions over `reps` replications.
pub fn mc_assignment_aggregated<S: Scalar>(
    outcome: &EsrOutcome<S>,
    reps: u64,
    rng: &mut ChaCha8Rng,
) -> Result<S> {
    let p_treat = outcome.treat.to_f64().clamp(0.0, 1.0);
    let p_tie = outcome.tie.to_f64().clamp(0.0, 1.0);
    let n_treat = Binomial::new(reps, p_treat)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(rng);
    let rest = reps - n_treat;
    let cond = if p_treat >= 1.0 { 0.0 } else { (p_tie / (1.0 - p_treat)).clamp(0.0, 1.0) };
    let n_tie = Binomial::new(rest, cond)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(rng);
    Ok(S::from_ratio((2 * n_treat + n_tie) as i64, 2 * reps as i64))
}

/// Estimate of the assignment probability from `reps` literal samples.
pub fn mc_assignment_direct<S: Scalar>(
    esr: &EmpiricalSuccess<S>,
    y1: &DiscreteDist<S>,
    n: usize,
    reps: u64,
    rng: &mut ChaCha8Rng,
) -> Result<S> {
    let support = y1.support();
    let mut cum = Vec::with_capacity(support.len());
    let mut acc = 0.0;
    for m in y1.masses() {
        acc += m.to_f64();
        cum.push(acc);
    }
    let nf = S::from_usize(n);
    let target = esr.spec.alpha.clone() * nf;
    let k = (0..=n).find(|&k| S::from_usize(k).ge_tol(&target)).unwrap_or(n);
    let m = if S::from_usize(k).approx_eq(&target) { k + 1 } else { k };
    let r = &esr.spec.r;
    let order_stat = |counts: &[usize], order: usize| -> S {
        if order == 0 {
            return S::zero();
        }
        if order > n {
            return S::one();
        }
        let mut seen = 0;
        for (i, c) in counts.iter().enumerate() {
            seen += c;
            if seen >= order {
                return support[i].clone();
            }
        }
        S::one()
    };
    let mut counts = vec![0usize; support.len()];
    let mut twice_total: u64 = 0;
    for _ in 0..reps {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..n {
            let u: f64 = rng.random::<f64>() * acc;
            let idx = cum.partition_point(|c| *c <= u).min(support.len() - 1);
            counts[idx] += 1;
        }
        let value = if r.is_zero_tol() {
            order_stat(&counts, k)
        } else {
            r.clone() * order_stat(&counts, m) + (S::one() - r.clone()) * order_stat(&counts, k)
        };
        let d = esr.decide(&value);
        twice_total += if d.approx_eq(&S::one()) {
            2
        } else if d.is_zero_tol() {
            0
        } else {
            1
        };
    }
    Ok(S::from_ratio(twice_total as i64, 2 * reps as i64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateRecord<S> {
    pub state_index: u64,
    pub alpha: S,
    pub q0: S,
    pub y0_choice: Y0Choice,
    pub rule: String,
    pub e_hat: S,
    pub q1: S,
    pub q_b: S,
    pub regret: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleSummary<S> {
    pub rule: SimRule<S>,
    pub max: S,
    pub mean: S,
    pub min: S,
}

/// Share of states where the empirical success rule beats `against`.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison<S> {
    pub against: SimRule<S>,
    /// States with `R(ES) < R(rule) - xi`.
    pub strict: u64,
    /// States with `R(ES) < R(rule) + xi`.
    pub lenient: u64,
    pub states: u64,
}

impl<S> Comparison<S> {
    pub fn strict_pct(&self) -> f64 {
        100.0 * self.strict as f64 / self.states as f64
    }

    pub fn lenient_pct(&self) -> f64 {
        100.0 * self.lenient as f64 / self.states as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell<S> {
    pub y0_choice: Y0Choice,
    pub alpha: S,
    pub q0: S,
    pub summaries: Vec<RuleSummary<S>>,
    pub comparisons: Vec<Comparison<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegretReport<S> {
    pub cells: Vec<Cell<S>>,
    /// Ordered by choice, alpha, q0, state index, rule. Empty unless requested.
    pub records: Vec<StateRecord<S>>,
    pub states: u64,
}

impl<S: Scalar> RegretReport<S> {
    pub fn cell(&self, choice: Y0Choice, alpha: &S, q0: &S) -> Option<&Cell<S>> {
        self.cells
            .iter()
            .find(|c| c.y0_choice == choice && c.alpha.approx_eq(alpha) && c.q0.approx_eq(q0))
    }
}

impl<S: Scalar> Cell<S> {
    pub fn summary(&self, rule: &SimRule<S>) -> Option<&RuleSummary<S>> {
        self.summaries.iter().find(|s| s.rule == *rule)
    }

    pub fn comparison(&self, against: &SimRule<S>) -> Option<&Comparison<S>> {
        self.comparisons.iter().find(|c| c.against == *against)
    }
}

/// Per-state outputs for one rule under one untreated specification.
#[derive(Clone, Debug)]
struct RuleOutcome<S> {
    e_hat: S,
    q_b: S,
    regret: S,
}

struct StateOutcome<S> {
    q1: S,
    /// Indexed by choice, then rule.
    by_choice: Vec<Vec<RuleOutcome<S>>>,
}

fn esr_for<S: Scalar>(cfg: &ExperimentConfig<S>, alpha: &S, q0: &S) -> Result<EmpiricalSuccess<S>> {
    Ok(EmpiricalSuccess {
        q0: q0.clone(),
        spec: QuantileSpec::new(alpha.clone(), cfg.r.clone())?,
        xi: cfg.xi.clone(),
    })
}

/// Assignment probability of `rule` for one state.
fn assignment<S: Scalar>(
    rule: &SimRule<S>,
    esr: &EmpiricalSuccess<S>,
    y1: &DiscreteDist<S>,
    cfg: &ExperimentConfig<S>,
    state_index: u64,
) -> Result<S> {
    match rule {
        SimRule::Constant(c) => Ok(c.clone()),
        SimRule::EmpiricalSuccess => {
            let mut rng = rng_stream(cfg.seed, state_index);
            match cfg.mc {
                McStrategy::Exact => Ok(esr_outcome_probabilities(esr, y1, cfg.sample_size)?.expected()),
                McStrategy::Aggregated => {
                    let outcome = esr_outcome_probabilities(esr, y1, cfg.sample_size)?;
                    mc_assignment_aggregated(&outcome, cfg.replications, &mut rng)
                }
                McStrategy::Direct => {
                    mc_assignment_direct(esr, y1, cfg.sample_size, cfg.replications, &mut rng)
                }
            }
        }
    }
}

fn outcome_for<S: Scalar>(
    y0: &Dist<S>,
    y1: &Dist<S>,
    q0: &S,
    q1: &S,
    spec: &QuantileSpec<S>,
    e_hat: S,
) -> Result<RuleOutcome<S>> {
    let q_b = mix(y0, y1, &e_hat)?.quantile(spec);
    let regret = snap_zero(S::max_of(q0.clone(), q1.clone()) - q_b.clone());
    Ok(RuleOutcome { e_hat, q_b, regret })
}

/// Regret of one rule in one grid state.
pub fn simulate_state<S: Scalar>(
    rule: &SimRule<S>,
    state: &GridState,
    state_index: u64,
    y0: &Y0Spec<S>,
    cfg: &ExperimentConfig<S>,
) -> Result<StateRecord<S>> {
    let spec = QuantileSpec::new(y0.alpha.clone(), cfg.r.clone())?;
    let y1 = state.to_dist::<S>()?;
    let q1 = y1.quantile(&spec);
    let esr = esr_for(cfg, &y0.alpha, &y0.q0)?;
    let e_hat = assignment(rule, &esr, &y1, cfg, state_index)?;
    let y0d = y0_distribution(y0)?;
    let out = outcome_for(&y0d, &Dist::Discrete(y1), &y0.q0, &q1, &spec, e_hat)?;
    Ok(StateRecord {
        state_index,
        alpha: y0.alpha.clone(),
        q0: y0.q0.clone(),
        y0_choice: y0.choice,
        rule: rule.label(),
        e_hat: out.e_hat,
        q1,
        q_b: out.q_b,
        regret: out.regret,
    })
}

fn simulate_config<S: Scalar>(
    cfg: &ExperimentConfig<S>,
    states: &[GridState],
    alpha: &S,
    q0: &S,
) -> Result<Vec<StateOutcome<S>>> {
    let spec = QuantileSpec::new(alpha.clone(), cfg.r.clone())?;
    let esr = esr_for(cfg, alpha, q0)?;
    let y0s: Vec<Dist<S>> = cfg
        .choices
        .iter()
        .map(|c| {
            let mut s = Y0Spec::new(*c, q0.clone(), alpha.clone());
            s.epsilon = cfg.epsilon.clone();
            y0_distribution(&s)
        })
        .collect::<Result<_>>()?;
    states
        .par_iter()
        .enumerate()
        .map(|(idx, state)| {
            let y1 = state.to_dist::<S>()?;
            let q1 = y1.quantile(&spec);
            let e_hats: Vec<S> = cfg
                .rules
                .iter()
                .map(|rule| assignment(rule, &esr, &y1, cfg, idx as u64))
                .collect::<Result<_>>()?;
            let y1 = Dist::Discrete(y1);
            let by_choice = y0s
                .iter()
                .map(|y0| {
                    e_hats
                        .iter()
                        .map(|e| outcome_for(y0, &y1, q0, &q1, &spec, e.clone()))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StateOutcome { q1, by_choice })
        })
        .collect()
}

fn summarize<S: Scalar>(
    cfg: &ExperimentConfig<S>,
    outcomes: &[StateOutcome<S>],
    choice_idx: usize,
) -> (Vec<RuleSummary<S>>, Vec<Comparison<S>>) {
    let count = S::from_usize(outcomes.len());
    let summaries = cfg
        .rules
        .iter()
        .enumerate()
        .map(|(ri, rule)| {
            let mut it = outcomes.iter().map(|o| &o.by_choice[choice_idx][ri].regret);
            let first = it.next().cloned().unwrap_or_else(S::zero);
            let (mut max, mut min, mut sum) = (first.clone(), first.clone(), first);
            for r in it {
                if *r > max {
                    max = r.clone();
                }
                if *r < min {
                    min = r.clone();
                }
                sum = sum + r.clone();
            }
            RuleSummary {
                rule: rule.clone(),
                max,
                mean: sum / count.clone(),
                min,
            }
        })
        .collect();
    let mut comparisons = Vec::new();
    if let Some(es) = cfg.rules.iter().position(|r| *r == SimRule::EmpiricalSuccess) {
        for (ri, rule) in cfg.rules.iter().enumerate() {
            if ri == es {
                continue;
            }
            let mut strict = 0;
            let mut lenient = 0;
            for o in outcomes {
                let r_es = &o.by_choice[choice_idx][es].regret;
                let r_d = &o.by_choice[choice_idx][ri].regret;
                if *r_es < r_d.clone() - cfg.xi.clone() {
                    strict += 1;
                }
                if *r_es < r_d.clone() + cfg.xi.clone() {
                    lenient += 1;
                }
            }
            comparisons.push(Comparison {
                against: rule.clone(),
                strict,
                lenient,
                states: outcomes.len() as u64,
            });
        }
    }
    (summaries, comparisons)
}

/// Runs every `(choice, alpha, q0)` cell over the full grid.
pub fn run_experiment<S: Scalar>(cfg: &ExperimentConfig<S>, keep_records: bool) -> Result<RegretReport<S>> {
    cfg.validate()?;
    let states: Vec<GridState> = enumerate_states(cfg.n_grid, cfg.w_grid)?.collect();
    let mut per_config = Vec::with_capacity(cfg.alphas.len() * cfg.q0s.len());
    for alpha in &cfg.alphas {
        for q0 in &cfg.q0s {
            per_config.push((alpha, q0, simulate_config(cfg, &states, alpha, q0)?));
        }
    }
    let mut cells = Vec::new();
    let mut records = Vec::new();
    for (ci, choice) in cfg.choices.iter().enumerate() {
        for (alpha, q0, outcomes) in &per_config {
            let (summaries, comparisons) = summarize(cfg, outcomes, ci);
            cells.push(Cell {
                y0_choice: *choice,
                alpha: (*alpha).clone(),
                q0: (*q0).clone(),
                summaries,
                comparisons,
            });
            if keep_records {
                for (idx, o) in outcomes.iter().enumerate() {
                    for (ri, rule) in cfg.rules.iter().enumerate() {
                        let ro = &o.by_choice[ci][ri];
                        records.push(StateRecord {
                            state_index: idx as u64,
                            alpha: (*alpha).clone(),
                            q0: (*q0).clone(),
                            y0_choice: *choice,
                            rule: rule.label(),
                            e_hat: ro.e_hat.clone(),
                            q1: o.q1.clone(),
                            q_b: ro.q_b.clone(),
                            regret: ro.regret.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(RegretReport {
        cells,
        records,
        states: states.len() as u64,
    })
}

/// Rounds half away from zero to `digits` decimals and drops the leading
/// zero and trailing zeros: `0.10 -> ".1"`, `0.04 -> ".04"`, `0 -> "0"`.
pub fn format_decimal(x: f64, digits: u32) -> String {
    let scale = 10f64.powi(digits as i32);
    // The nudge absorbs binary representation error at exact half-way points.
    let scaled = x * scale;
    let rounded = (scaled + scaled.signum() * 1e-9).round() / scale;
    if rounded == 0.0 {
        return "0".into();
    }
    let mut s = format!("{:.*}", digits as usize, rounded.abs());
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if let Some(rest) = s.strip_prefix("0.") {
        s = format!(".{rest}");
    }
    if rounded < 0.0 {
        format!("-{s}")
    } else {
        s
    }
}

/// Percentages with one decimal: `33.33 -> "33.3"`, `100 -> "100"`, `0.5 -> ".5"`.
pub fn format_percent(x: f64) -> String {
    let scaled = x * 10.0;
    let rounded = (scaled + scaled.signum() * 1e-9).round() / 10.0;
    if rounded == 0.0 {
        return "0".into();
    }
    if rounded == 100.0 {
        return "100".into();
    }
    let s = format!("{rounded:.1}");
    match s.strip_prefix("0.") {
        Some(rest) => format!(".{rest}"),
        None => s,
    }
}

fn choice_title(choice: Y0Choice) -> &'static str {
    match choice {
        Y0Choice::I => "Case I: two-point Y0",
        Y0Choice::II => "Case II: piecewise-uniform Y0",
    }
}

/// Max and mean regret per rule, one block per `(choice, q0)` and one column
/// group per `alpha`.
pub fn render_table1<S: Scalar>(report: &RegretReport<S>, cfg: &ExperimentConfig<S>) -> String {
    let mut out = String::new();
    for choice in &cfg.choices {
        out.push_str(&format!("### {}\n\n", choice_title(*choice)));
        let mut header = String::from("| q0 | stat |");
        let mut rule_line = String::from("|    |      |");
        let mut sep = String::from("|---|---|");
        for alpha in &cfg.alphas {
            for (i, rule) in cfg.rules.iter().enumerate() {
                if i == 0 {
                    header.push_str(&format!(" α={} |", format_decimal(alpha.to_f64(), 3)));
                } else {
                    header.push_str(" |");
                }
                rule_line.push_str(&format!(" {} |", rule.heading()));
                sep.push_str("---|");
            }
        }
        out.push_str(&format!("{header}\n{sep}\n{rule_line}\n"));
        for q0 in &cfg.q0s {
            for (stat, pick) in [("max", 0usize), ("mean", 1usize)] {
                let mut line = format!("| {} | {} |", format_decimal(q0.to_f64(), 3), stat);
                for alpha in &cfg.alphas {
                    let cell = report.cell(*choice, alpha, q0);
                    for rule in &cfg.rules {
                        let v = cell
                            .and_then(|c| c.summary(rule))
                            .map(|s| if pick == 0 { s.max.to_f64() } else { s.mean.to_f64() });
                        match v {
                            Some(v) => line.push_str(&format!(" {} |", format_decimal(v, 2))),
                            None => line.push_str(" - |"),
                        }
                    }
                }
                out.push_str(&line);
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}

/// Strict and lenient proportions (in %) of states where the empirical
/// success rule beats each other rule.
pub fn render_table2<S: Scalar>(report: &RegretReport<S>, cfg: &ExperimentConfig<S>) -> String {
    let others: Vec<&SimRule<S>> = cfg
        .rules
        .iter()
        .filter(|r| **r != SimRule::EmpiricalSuccess)
        .collect();
    let mut out = String::new();
    for choice in &cfg.choices {
        out.push_str(&format!("### {}\n\n", choice_title(*choice)));
        let mut header = String::from("| q0 | kind |");
        let mut rule_line = String::from("|    |      |");
        let mut sep = String::from("|---|---|");
        for alpha in &cfg.alphas {
            for (i, rule) in others.iter().enumerate() {
                if i == 0 {
                    header.push_str(&format!(" α={} |", format_decimal(alpha.to_f64(), 3)));
                } else {
                    header.push_str(" |");
                }
                rule_line.push_str(&format!(" {} |", rule.heading()));
                sep.push_str("---|");
            }
        }
        out.push_str(&format!("{header}\n{sep}\n{rule_line}\n"));
        for q0 in &cfg.q0s {
            for (kind, strict) in [("strict", true), ("lenient", false)] {
                let mut line = format!("| {} | {} |", format_decimal(q0.to_f64(), 3), kind);
                for alpha in &cfg.alphas {
                    let cell = report.cell(*choice, alpha, q0);
                    for rule in &others {
                        match cell.and_then(|c| c.comparison(rule)) {
                            Some(c) => {
                                let pct = if strict { c.strict_pct() } else { c.lenient_pct() };
                                line.push_str(&format!(" {} |", format_percent(pct)));
                            }
                            None => line.push_str(" - |"),
                        }
                    }
                }
                out.push_str(&line);
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}
