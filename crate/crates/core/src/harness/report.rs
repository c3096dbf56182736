//! Plot-ready CSV files and plain-text summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{ComparisonReport, Dataset, HarnessError, RunTrace, ScreeningOutcome, StudyReport};
use crate::backends::{P99_LATENCY, THROUGHPUT};
use crate::space::SearchSpace;

pub const SLO_CDF_FILE: &str = "slo_cdf.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Sorted latencies of the successful rows against the cumulative share of
/// all rows. Failed rows never enter, so the curve at the SLO equals the
/// feasible fraction.
pub fn slo_cdf(dataset: &Dataset) -> Vec<(f64, f64)> {
    let total = dataset.rows().len() as f64;
    let mut latencies: Vec<f64> =
        dataset.rows().iter().filter(|r| !r.sli.failed).map(|r| r.sli.p99_latency_ms).collect();
    latencies.sort_by(f64::total_cmp);
    latencies.into_iter().enumerate().map(|(i, l)| (l, (i + 1) as f64 / total)).collect()
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::File { path: dir.display().to_string(), source })
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| HarnessError::File { path: path.display().to_string(), source })?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|source| HarnessError::File { path: path.display().to_string(), source })
}

pub fn write_slo_cdf(dataset: &Dataset, path: &Path) -> Result<(), HarnessError> {
    let rows = slo_cdf(dataset).into_iter().map(|(l, f)| vec![l.to_string(), f.to_string()]);
    write_csv(path, &[P99_LATENCY, "cumulative_fraction"], rows)
}

pub fn dataset_summary(dataset: &Dataset) -> String {
    let space = dataset.space();
    let opt = dataset.optimum();
    let failed = dataset.rows().iter().filter(|r| r.sli.failed).count();
    let mut s = String::new();
    let _ = writeln!(s, "configurations: {}", dataset.rows().len());
    let _ = writeln!(s, "feasible fraction: {}", dataset.feasible_fraction());
    let _ = writeln!(s, "failed evaluations: {failed}");
    let _ = writeln!(s, "optimum utility: {}", opt.utility);
    let _ = writeln!(s, "optimum configuration: {}", space.config_key(&opt.config));
    if !opt.sli.failed {
        let _ = writeln!(s, "optimum {P99_LATENCY}: {}", opt.sli.p99_latency_ms);
    }
    s
}

/// Writes `dataset.csv` (unless it is `source` itself), `slo_cdf.csv` and
/// `summary.txt` into `dir`.
pub fn emit_dataset(dataset: &Dataset, source: Option<&Path>, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    create_dir(dir)?;
    let mut written = Vec::new();
    let csv_path = dir.join("dataset.csv");
    let same = source.is_some_and(|s| fs::canonicalize(s).ok() == fs::canonicalize(&csv_path).ok());
    if !same {
        dataset.write(&csv_path)?;
        written.push(csv_path);
    }
    let cdf = dir.join(SLO_CDF_FILE);
    write_slo_cdf(dataset, &cdf)?;
    written.push(cdf);
    let summary = dir.join(SUMMARY_FILE);
    write_text(&summary, &dataset_summary(dataset))?;
    written.push(summary);
    Ok(written)
}

pub fn comparison_summary(report: &ComparisonReport) -> String {
    let mut s = String::new();
    let runs = report.optimizers.first().map_or(0, |c| c.runs);
    let _ = writeln!(s, "runs per optimizer: {runs}");
    let _ = writeln!(s, "budget: {}", report.budget);
    let _ = writeln!(s, "optimum utility: {}", report.optimum_utility);
    let _ = writeln!(s, "slo line distance: {}", report.slo_line);
    let _ = writeln!(s, "optimizer,fraction_found_optimal,distance_q99");
    for c in &report.optimizers {
        let last = report.budget - 1;
        let _ = writeln!(s, "{},{},{}", c.name, c.fraction_found_optimal[last], c.distance_q99[last]);
    }
    s
}

/// One `compare_<optimizer>.csv` per optimizer plus `summary.txt`.
pub fn emit_comparison(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    create_dir(dir)?;
    let mut written = Vec::new();
    for c in &report.optimizers {
        let path = dir.join(format!("compare_{}.csv", c.name));
        let rows = c
            .fraction_found_optimal
            .iter()
            .zip(&c.distance_q99)
            .enumerate()
            .map(|(i, (f, d))| vec![(i + 1).to_string(), f.to_string(), d.to_string()]);
        write_csv(&path, &["n", "fraction_found_optimal", "distance_q99"], rows)?;
        written.push(path);
    }
    let summary = dir.join(SUMMARY_FILE);
    write_text(&summary, &comparison_summary(report))?;
    written.push(summary);
    Ok(written)
}

pub fn write_trace(trace: &RunTrace, space: &SearchSpace, path: &Path) -> Result<(), HarnessError> {
    let mut header = vec!["eval_index"];
    header.extend(space.parameters().iter().map(|p| p.name()));
    header.extend([P99_LATENCY, THROUGHPUT, "utility", "feasible", "failed", "best_so_far"]);
    let rows = trace.observations.iter().zip(&trace.best_so_far).map(|(o, best)| {
        let mut row = vec![o.eval_index.to_string()];
        row.extend(o.config.settings().iter().map(|v| v.to_string()));
        for k in [P99_LATENCY, THROUGHPUT] {
            row.push(if o.failed { String::new() } else { o.slis.get(k).map_or(String::new(), |v| v.to_string()) });
        }
        row.extend([o.utility.to_string(), o.feasible.to_string(), o.failed.to_string(), best.to_string()]);
        row
    });
    write_csv(path, &header, rows)
}

pub fn trace_summary(trace: &RunTrace, space: &SearchSpace) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "optimizer: {}", trace.optimizer);
    let _ = writeln!(s, "seed: {}", trace.seed);
    let _ = writeln!(s, "evaluations: {}", trace.observations.len());
    if let Some(best) = trace.best() {
        let _ = writeln!(s, "best utility: {}", best.utility);
        let _ = writeln!(s, "best feasible: {}", best.feasible);
        let _ = writeln!(s, "best found at: {}", best.eval_index);
        let _ = writeln!(s, "best configuration: {}", space.config_key(&best.config));
        for (name, value) in space.render(&best.config) {
            let _ = writeln!(s, "  {name}: {value}");
        }
    }
    if let Some(i) = trace.found_optimal_at {
        let _ = writeln!(s, "optimum sampled at: {i}");
    }
    s
}

/// `trace.csv` and `summary.txt`.
pub fn emit_trace(trace: &RunTrace, space: &SearchSpace, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    create_dir(dir)?;
    let path = dir.join(TRACE_FILE);
    write_trace(trace, space, &path)?;
    let summary = dir.join(SUMMARY_FILE);
    write_text(&summary, &trace_summary(trace, space))?;
    Ok(vec![path, summary])
}

pub fn screening_summary(outcome: &ScreeningOutcome) -> String {
    let r = &outcome.reduction;
    let mut s = String::new();
    let _ = writeln!(s, "planned trajectory points: {}", outcome.planned);
    let _ = writeln!(s, "distinct configurations evaluated: {}", outcome.observations.len());
    let _ = writeln!(s, "relaxed slo: {}", r.relaxed_slo);
    let _ = writeln!(s, "strict slo: {}", r.strict_slo);
    let _ = writeln!(s, "degenerate scaling: {}", r.degenerate);
    let _ = writeln!(s, "reduced space size: {}", r.reduced_space.size());
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

pub fn study_summary(report: &StudyReport) -> String {
    let n = report.repetitions.len();
    let mut s = String::new();
    if let Some(g) = &report.global_optimum {
        let _ = writeln!(s, "global optimum utility: {}", g.utility);
    }
    let _ = writeln!(s, "repetitions: {n}");
    let _ = writeln!(s, "screening+bo found reduced optimum: {}/{n}", report.screened_hits());
    if report.global_optimum.is_some() {
        let _ = writeln!(s, "standalone bo found global optimum: {}/{n}", report.standalone_hits());
    }
    let _ = writeln!(s, "standalone bo best feasible: {}/{n}", report.standalone_feasible());
    s
}

/// Per-repetition rows of a screening-versus-standalone study.
pub fn write_study(report: &StudyReport, path: &Path) -> Result<(), HarnessError> {
    let header = [
        "seed",
        "screening_cost",
        "reduced_budget",
        "reduced_size",
        "reduced_optimum",
        "screened_best",
        "screened_found_optimum",
        "standalone_best",
        "standalone_feasible",
        "standalone_found_optimum",
        "standalone_in_reduced",
    ];
    let rows = report.repetitions.iter().map(|r| {
        vec![
            r.seed.to_string(),
            r.screening_cost.to_string(),
            r.reduced_budget.to_string(),
            r.reduced_size.to_string(),
            r.reduced_optimum.to_string(),
            r.screened_best.utility.to_string(),
            r.screened_found_optimum.to_string(),
            r.standalone_best.utility.to_string(),
            r.standalone_best.feasible.to_string(),
            r.standalone_found_optimum.map_or(String::new(), |b| b.to_string()),
            r.standalone_in_reduced.to_string(),
        ]
    });
    write_csv(path, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::SliResult;
    use crate::harness::DatasetRow;
    use crate::space::{Configuration, ParameterSpec};

    fn dataset() -> Dataset {
        let space = SearchSpace::new(vec![ParameterSpec::new("a", 0, 3, 1, "").unwrap()]).unwrap();
        let rows = vec![
            DatasetRow {
                config: Configuration::new(vec![0]),
                sli: SliResult::failure("x"),
                utility: 11.0,
                feasible: false,
            },
            DatasetRow {
                config: Configuration::new(vec![1]),
                sli: SliResult::ok(900.0, 1.0),
                utility: 0.9,
                feasible: true,
            },
            DatasetRow {
                config: Configuration::new(vec![2]),
                sli: SliResult::ok(300.0, 1.0),
                utility: 0.4,
                feasible: true,
            },
            DatasetRow {
                config: Configuration::new(vec![3]),
                sli: SliResult::ok(1500.0, 1.0),
                utility: 1.5,
                feasible: false,
            },
        ];
        Dataset::new(space, rows, None).unwrap()
    }

    #[test]
    fn cdf_is_sorted_and_excludes_failures() {
        let cdf = slo_cdf(&dataset());
        assert_eq!(cdf, vec![(300.0, 0.25), (900.0, 0.5), (1500.0, 0.75)]);
    }

    #[test]
    fn dataset_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_dataset(&dataset(), None, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let cdf = fs::read_to_string(dir.path().join(SLO_CDF_FILE)).unwrap();
        assert_eq!(cdf, "p99_latency_ms,cumulative_fraction\n300,0.25\n900,0.5\n1500,0.75\n");
        let summary = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        assert!(summary.contains("optimum configuration: a=2"), "{summary}");
        assert!(summary.contains("feasible fraction: 0.5"));
    }
}
