//! `table1` and `table2`: the simulation study over the grid state space.

use anyhow::{Context, Result};
use quantile_regret::simulator::{
    render_table1, render_table2, run_experiment, ExperimentConfig, McStrategy, RegretReport, SimRule,
};
use quantile_regret::statespace::Y0Choice;
use quantile_regret::Scalar;

use crate::config::Settings;
use crate::output::OutputSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Table {
    One,
    Two,
}

pub fn defaults() -> Settings {
    let d = ExperimentConfig::<f64>::default();
    Settings::from_pairs([
        ("alpha", "0.1,0.5,0.9".to_string()),
        ("q0", "0.1,0.5,0.9".to_string()),
        ("y0-choice", "I,II".to_string()),
        ("n-grid", d.n_grid.to_string()),
        ("w-grid", d.w_grid.to_string()),
        ("sample-size", d.sample_size.to_string()),
        ("replications", d.replications.to_string()),
        ("seed", d.seed.to_string()),
        ("xi", "1e-8".to_string()),
        ("r", "0".to_string()),
        ("epsilon", "1e-6".to_string()),
        ("rules", "esr,const:1,const:0.5,const:0".to_string()),
        ("mc", d.mc.label().to_string()),
        ("exact", "false".to_string()),
        ("out", "results".to_string()),
    ])
    .expect("default keys are known")
}

pub fn experiment_config<S: Scalar>(s: &Settings) -> Result<ExperimentConfig<S>> {
    let scalars = |key: &str| -> Result<Vec<S>> {
        s.list(key)?
            .iter()
            .map(|v| S::parse_literal(v).with_context(|| format!("setting `{key}`")))
            .collect()
    };
    let scalar = |key: &str| -> Result<S> { S::parse_literal(s.require(key)?).with_context(|| format!("setting `{key}`")) };
    let choices = s
        .list("y0-choice")?
        .iter()
        .map(|c| c.parse::<Y0Choice>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .context("setting `y0-choice`")?;
    let rules = s
        .list("rules")?
        .iter()
        .map(|r| SimRule::parse(r))
        .collect::<std::result::Result<Vec<_>, _>>()
        .context("setting `rules`")?;
    let cfg = ExperimentConfig {
        alphas: scalars("alpha")?,
        q0s: scalars("q0")?,
        choices,
        n_grid: s.parse("n-grid")?,
        w_grid: s.parse("w-grid")?,
        sample_size: s.parse("sample-size")?,
        replications: s.parse("replications")?,
        seed: s.parse("seed")?,
        xi: scalar("xi")?,
        r: scalar("r")?,
        epsilon: scalar("epsilon")?,
        rules,
        mc: s.parse::<McStrategy>("mc")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn run<S: Scalar>(table: Table, settings: &Settings, out: &mut OutputSet, run_id: &str) -> Result<()> {
    let cfg = experiment_config::<S>(settings)?;
    let report = run_experiment(&cfg, true)?;
    out.add("per_state.csv", per_state_csv(&report, run_id)?);
    let footer = format!("\nrun `{run_id}`, manifest `manifest.json`\n");
    match table {
        Table::One => {
            out.add("aggregate.csv", aggregate_csv(&report, run_id)?);
            out.add("table1.md", format!("{}{footer}", render_table1(&report, &cfg)).into_bytes());
        }
        Table::Two => {
            out.add("comparisons.csv", comparisons_csv(&report, run_id)?);
            out.add("table2.md", format!("{}{footer}", render_table2(&report, &cfg)).into_bytes());
        }
    }
    Ok(())
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))
}

fn per_state_csv<S: Scalar>(report: &RegretReport<S>, run_id: &str) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(["run_id", "y0_choice", "alpha", "q0", "state_index", "rule", "e_hat", "q1", "q_b", "regret"])?;
    for rec in &report.records {
        w.write_record([
            run_id.to_string(),
            rec.y0_choice.label().to_string(),
            rec.alpha.to_fraction_string(),
            rec.q0.to_fraction_string(),
            rec.state_index.to_string(),
            rec.rule.clone(),
            rec.e_hat.to_fraction_string(),
            rec.q1.to_fraction_string(),
            rec.q_b.to_fraction_string(),
            rec.regret.to_fraction_string(),
        ])?;
    }
    finish(w)
}

fn aggregate_csv<S: Scalar>(report: &RegretReport<S>, run_id: &str) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(["run_id", "y0_choice", "alpha", "q0", "rule", "states", "max", "mean", "min"])?;
    for cell in &report.cells {
        for s in &cell.summaries {
            w.write_record([
                run_id.to_string(),
                cell.y0_choice.label().to_string(),
                cell.alpha.to_fraction_string(),
                cell.q0.to_fraction_string(),
                s.rule.label(),
                report.states.to_string(),
                s.max.to_fraction_string(),
                s.mean.to_fraction_string(),
                s.min.to_fraction_string(),
            ])?;
        }
    }
    finish(w)
}

fn comparisons_csv<S: Scalar>(report: &RegretReport<S>, run_id: &str) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record([
        "run_id",
        "y0_choice",
        "alpha",
        "q0",
        "against",
        "states",
        "strict",
        "lenient",
        "strict_pct",
        "lenient_pct",
    ])?;
    for cell in &report.cells {
        for c in &cell.comparisons {
            w.write_record([
                run_id.to_string(),
                cell.y0_choice.label().to_string(),
                cell.alpha.to_fraction_string(),
                cell.q0.to_fraction_string(),
                c.against.label(),
                c.states.to_string(),
                c.strict.to_string(),
                c.lenient.to_string(),
                format!("{}", c.strict_pct()),
                format!("{}", c.lenient_pct()),
            ])?;
        }
    }
    finish(w)
}
