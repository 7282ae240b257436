//! Cross-run comparison tables and plot-ready CSV extracts.

use std::collections::BTreeMap;

use hybridfl_core::energy::overhead_factor;
use hybridfl_core::stats::{bonferroni, cohens_d, mean, paired_t_test};

use crate::experiment::{ExperimentError, RunResult};

pub const COMPARE_HEADER: [&str; 13] = [
    "config",
    "runs",
    "seeds",
    "accuracy",
    "f1",
    "mcc",
    "training_time",
    "overhead_factor",
    "delta_accuracy",
    "t_statistic",
    "p_value",
    "p_bonferroni",
    "cohens_d",
];

pub const PLOT_HEADER: [&str; 5] = ["config", "accuracy", "overhead_factor", "mcc", "energy_kwh"];

/// One aggregated row of the comparison table. Statistics are `None` for the
/// baseline row and whenever fewer than two shared seeds exist.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub config: String,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub accuracy: f64,
    pub f1: f64,
    pub mcc: f64,
    pub training_time: f64,
    pub overhead_factor: Option<f64>,
    pub delta_accuracy: f64,
    pub t_statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub p_bonferroni: Option<f64>,
    pub cohens_d: Option<f64>,
}

fn find_baseline<'a>(groups: &'a BTreeMap<String, Vec<&RunResult>>, results: &[RunResult], baseline: &str) -> Option<&'a str> {
    if let Some((k, _)) = groups.get_key_value(baseline) {
        return Some(k);
    }
    let name = &results.iter().find(|r| r.experiment_id == baseline)?.configuration.experiment.name;
    groups.get_key_value(name).map(|(k, _)| k.as_str())
}

/// Groups runs by experiment name and compares each group to the baseline
/// group. `baseline` may be an experiment name or an experiment id.
pub fn compare_runs(results: &[RunResult], baseline: &str) -> Result<Vec<ComparisonRow>, ExperimentError> {
    if results.len() < 2 {
        return Err(ExperimentError::TooFewResults {
            needed: 2,
            got: results.len(),
        });
    }
    let mut groups: BTreeMap<String, Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        groups.entry(r.configuration.experiment.name.clone()).or_default().push(r);
    }
    let base_name = find_baseline(&groups, results, baseline)
        .ok_or_else(|| ExperimentError::MissingBaseline(baseline.to_string()))?
        .to_string();
    let base = &groups[&base_name];
    let avg = |runs: &[&RunResult], f: fn(&RunResult) -> f64| mean(&runs.iter().map(|r| f(r)).collect::<Vec<_>>());
    let base_acc = avg(base, |r| r.results.accuracy);
    let base_time = avg(base, |r| r.results.training_time);
    let base_by_seed: BTreeMap<u64, f64> = base
        .iter()
        .map(|r| (r.reproducibility.seed, r.results.accuracy))
        .collect();

    // Baseline first, then the others by name.
    let mut order = vec![base_name.clone()];
    order.extend(groups.keys().filter(|k| **k != base_name).cloned());

    let mut rows = Vec::with_capacity(order.len());
    for name in order {
        let runs = &groups[&name];
        let mut seeds: Vec<u64> = runs.iter().map(|r| r.reproducibility.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let accuracy = avg(runs, |r| r.results.accuracy);
        let training_time = avg(runs, |r| r.results.training_time);
        let mut row = ComparisonRow {
            config: name.clone(),
            runs: runs.len(),
            seeds,
            accuracy,
            f1: avg(runs, |r| r.results.f1),
            mcc: avg(runs, |r| r.results.mcc),
            training_time,
            overhead_factor: overhead_factor(training_time, base_time).ok(),
            delta_accuracy: accuracy - base_acc,
            t_statistic: None,
            p_value: None,
            p_bonferroni: None,
            cohens_d: None,
        };
        if name != base_name {
            let (a, b): (Vec<f64>, Vec<f64>) = runs
                .iter()
                .filter_map(|r| base_by_seed.get(&r.reproducibility.seed).map(|&ba| (r.results.accuracy, ba)))
                .unzip();
            if a.len() >= 2 {
                if let Ok(t) = paired_t_test(&a, &b) {
                    row.t_statistic = Some(t.statistic);
                    row.p_value = Some(t.p_value);
                }
                row.cohens_d = cohens_d(&a, &b).ok();
            }
        }
        rows.push(row);
    }

    let tested: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].p_value.is_some()).collect();
    if !tested.is_empty() {
        let ps: Vec<f64> = tested.iter().map(|&i| rows[i].p_value.unwrap()).collect();
        let adjusted = bonferroni(&ps, ps.len()).expect("m equals the number of p-values");
        for (&i, p) in tested.iter().zip(adjusted) {
            rows[i].p_bonferroni = Some(p);
        }
    }
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_comparison_csv<W: std::io::Write>(out: W, rows: &[ComparisonRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARE_HEADER)?;
    for r in rows {
        let seeds = r.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";");
        w.write_record([
            r.config.clone(),
            r.runs.to_string(),
            seeds,
            r.accuracy.to_string(),
            r.f1.to_string(),
            r.mcc.to_string(),
            r.training_time.to_string(),
            cell(r.overhead_factor),
            r.delta_accuracy.to_string(),
            cell(r.t_statistic),
            cell(r.p_value),
            cell(r.p_bonferroni),
            cell(r.cohens_d),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub config: String,
    pub accuracy: f64,
    pub overhead_factor: Option<f64>,
    pub mcc: f64,
    pub energy_kwh: Option<f64>,
}

/// One row per run. Overhead is relative to the mean training time of the
/// baseline group; without a baseline the first run's name is used.
pub fn plot_data(results: &[RunResult], baseline: Option<&str>) -> Result<Vec<PlotRow>, ExperimentError> {
    let first = results.first().ok_or(ExperimentError::TooFewResults { needed: 1, got: 0 })?;
    let wanted = baseline.unwrap_or(&first.configuration.experiment.name);
    let base_name = results
        .iter()
        .find(|r| r.configuration.experiment.name == wanted || r.experiment_id == wanted)
        .map(|r| r.configuration.experiment.name.clone())
        .ok_or_else(|| ExperimentError::MissingBaseline(wanted.to_string()))?;
    let base_times: Vec<f64> = results
        .iter()
        .filter(|r| r.configuration.experiment.name == base_name)
        .map(|r| r.results.training_time)
        .collect();
    let base_time = mean(&base_times);
    Ok(results
        .iter()
        .map(|r| PlotRow {
            config: r.configuration.experiment.name.clone(),
            accuracy: r.results.accuracy,
            overhead_factor: overhead_factor(r.results.training_time, base_time).ok(),
            mcc: r.results.mcc,
            energy_kwh: r.results.energy_kwh,
        })
        .collect())
}

pub fn write_plot_csv<W: std::io::Write>(out: W, rows: &[PlotRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PLOT_HEADER)?;
    for r in rows {
        w.write_record([
            r.config.clone(),
            r.accuracy.to_string(),
            cell(r.overhead_factor),
            r.mcc.to_string(),
            cell(r.energy_kwh),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Partition report: `client,size,class_0,...`.
pub fn write_partition_csv<W: std::io::Write>(out: W, histograms: &[Vec<usize>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let k = histograms.first().map_or(0, Vec::len);
    let mut header = vec!["client".to_string(), "size".to_string()];
    header.extend((0..k).map(|c| format!("class_{c}")));
    w.write_record(&header)?;
    for (i, h) in histograms.iter().enumerate() {
        let mut rec = vec![i.to_string(), h.iter().sum::<usize>().to_string()];
        rec.extend(h.iter().map(usize::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
