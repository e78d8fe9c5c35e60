//! Split-level evaluation reports and the stage ablation table.

use std::io::Write;

use crate::error::{invalid, Result};

use super::pipeline::{EitNet, PipelineConfig, StageToggles};
use super::split::{make_split, SplitAxis, SplitPlan};
use super::synth::SyntheticAction;
use super::train::{evaluate, train_toy, EvalResult, TrainConfig, TrainOutcome};

/// Samples whose subject (or view) id is on the given side of `plan`.
pub fn split_samples<'a>(samples: &'a [SyntheticAction], plan: &SplitPlan, train: bool) -> Vec<&'a SyntheticAction> {
    samples
        .iter()
        .filter(|s| {
            let id = match plan.axis {
                SplitAxis::Subject => s.subject_id,
                SplitAxis::View => s.view_id,
            };
            plan.is_train(id) == train
        })
        .collect()
}

/// Trains a seeded model on the train side of `plan` and evaluates it on
/// the test side.
pub fn train_and_evaluate(
    samples: &[SyntheticAction],
    plan: &SplitPlan,
    pipeline: PipelineConfig,
    train: &TrainConfig,
) -> Result<(TrainOutcome, EvalResult)> {
    let train_set = split_samples(samples, plan, true);
    let test_set = split_samples(samples, plan, false);
    if train_set.is_empty() || test_set.is_empty() {
        return invalid(format!(
            "split leaves {} training and {} test samples",
            train_set.len(),
            test_set.len()
        ));
    }
    let model = EitNet::seeded(pipeline, train.seed)?;
    let outcome = train_toy(model, &train_set, train)?;
    let result = evaluate(&outcome.model, &test_set)?;
    Ok((outcome, result))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub axis: SplitAxis,
    pub seed: u64,
    pub accuracy: f64,
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub train_groups: usize,
    pub test_groups: usize,
}

impl MetricsRow {
    pub fn new(plan: &SplitPlan, r: &EvalResult) -> Self {
        Self {
            axis: plan.axis,
            seed: plan.seed,
            accuracy: r.accuracy,
            mpjpe: r.mpjpe,
            pa_mpjpe: r.pa_mpjpe,
            train_groups: plan.train_ids.len(),
            test_groups: plan.test_ids.len(),
        }
    }
}

pub const METRICS_HEADER: [&str; 7] =
    ["split_axis", "seed", "accuracy", "mpjpe", "pa_mpjpe", "train_groups", "test_groups"];

pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[MetricsRow], comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(METRICS_HEADER)?;
    for r in rows {
        out.write_record([
            r.axis.to_string(),
            r.seed.to_string(),
            format!("{:.2}", r.accuracy),
            format!("{:.3}", r.mpjpe),
            format!("{:.3}", r.pa_mpjpe),
            r.train_groups.to_string(),
            r.test_groups.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub toggles: StageToggles,
    pub accuracy: f64,
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
}

/// One trained-and-evaluated row per configuration, in the given order,
/// all on the same split.
pub fn run_ablation(
    samples: &[SyntheticAction],
    axis: SplitAxis,
    seed: u64,
    configurations: &[(&str, StageToggles)],
    train: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    if let Some((name, _)) = configurations.iter().find(|(_, t)| !t.any()) {
        return invalid(format!("configuration {name:?} disables every stage"));
    }
    let plan = make_split(axis, seed);
    configurations
        .iter()
        .map(|&(name, toggles)| {
            let pipeline = PipelineConfig { toggles, ..Default::default() };
            let (_, r) = train_and_evaluate(samples, &plan, pipeline, train)?;
            Ok(AblationRow { name: name.to_string(), toggles, accuracy: r.accuracy, mpjpe: r.mpjpe, pa_mpjpe: r.pa_mpjpe })
        })
        .collect()
}

/// Whether the first row's accuracy is at least every other row's.
pub fn first_row_leads(rows: &[AblationRow]) -> bool {
    match rows.split_first() {
        Some((first, rest)) => rest.iter().all(|r| first.accuracy >= r.accuracy),
        None => false,
    }
}

pub const ABLATION_HEADER: [&str; 7] =
    ["configuration", "detection", "i3d", "timesformer", "accuracy", "mpjpe", "pa_mpjpe"];

pub fn write_ablation_csv<W: Write>(mut w: W, rows: &[AblationRow], comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ABLATION_HEADER)?;
    let flag = |b: bool| if b { "on" } else { "off" }.to_string();
    for r in rows {
        out.write_record([
            r.name.clone(),
            flag(r.toggles.detection),
            flag(r.toggles.spatiotemporal),
            flag(r.toggles.temporal),
            format!("{:.2}", r.accuracy),
            format!("{:.3}", r.mpjpe),
            format!("{:.3}", r.pa_mpjpe),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_off_configuration_is_rejected() {
        let none: StageToggles = "none".parse().unwrap();
        let err = run_ablation(&[], SplitAxis::Subject, 0, &[("none", none)], &TrainConfig::default());
        assert!(err.is_err());
    }

    #[test]
    fn metrics_csv_schema() {
        let plan = make_split(SplitAxis::Subject, 7);
        let r = EvalResult { accuracy: 75.0, mpjpe: 5.0, pa_mpjpe: 1.0, predictions: Vec::new() };
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[MetricsRow::new(&plan, &r)], Some("seed=7")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# seed=7\nsplit_axis,seed,accuracy,mpjpe,pa_mpjpe,train_groups,test_groups\nsubject,7,75.00,5.000,1.000,6,4\n"
        );
    }
}
