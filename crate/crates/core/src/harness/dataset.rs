//! Exhaustive datasets: one stored observation per configuration.

use std::collections::{BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BatchEvaluator, HarnessError, LiveEvaluator};
use crate::backends::{ReplayBackend, SliResult, P99_LATENCY, THROUGHPUT};
use crate::optim::Observation;
use crate::space::{Configuration, ParameterSpec, SearchSpace};

const TAIL_COLUMNS: [&str; 5] = [P99_LATENCY, THROUGHPUT, "utility", "feasible", "failed"];

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub config: Configuration,
    pub sli: SliResult,
    pub utility: f64,
    pub feasible: bool,
}

impl DatasetRow {
    pub fn from_observation(obs: &Observation) -> Self {
        let sli = if obs.failed {
            SliResult::failure("failed during collection")
        } else {
            let get = |k: &str| obs.slis.get(k).copied().unwrap_or(f64::NAN);
            SliResult::ok(get(P99_LATENCY), get(THROUGHPUT))
        };
        Self { config: obs.config.clone(), sli, utility: obs.utility, feasible: obs.feasible }
    }

    pub fn observation(&self) -> Observation {
        Observation::new(self.config.clone(), self.sli.metrics(), self.utility, self.feasible, self.sli.failed)
    }

    fn record(&self) -> Vec<String> {
        let mut out: Vec<String> = self.config.settings().iter().map(|v| v.to_string()).collect();
        if self.sli.failed {
            out.extend([String::new(), String::new()]);
        } else {
            out.extend([self.sli.p99_latency_ms.to_string(), self.sli.throughput_rps.to_string()]);
        }
        out.extend([self.utility.to_string(), self.feasible.to_string(), self.sli.failed.to_string()]);
        out
    }

    fn parse(record: &csv::StringRecord, dims: usize, line: u64) -> Result<Self, HarnessError> {
        let bad = |what: &str| HarnessError::Dataset(format!("line {line}: {what}"));
        if record.len() != dims + TAIL_COLUMNS.len() {
            return Err(bad(&format!("expected {} fields, found {}", dims + TAIL_COLUMNS.len(), record.len())));
        }
        let settings = (0..dims)
            .map(|i| record[i].parse::<i64>().map_err(|_| bad(&format!("bad setting `{}`", &record[i]))))
            .collect::<Result<Vec<_>, _>>()?;
        let float = |i: usize| record[i].parse::<f64>().map_err(|_| bad(&format!("bad number `{}`", &record[i])));
        let flag = |i: usize| record[i].parse::<bool>().map_err(|_| bad(&format!("bad flag `{}`", &record[i])));
        let failed = flag(dims + 4)?;
        let sli = if failed {
            SliResult::failure("failed during collection")
        } else {
            SliResult::ok(float(dims)?, float(dims + 1)?)
        };
        Ok(Self { config: Configuration::new(settings), sli, utility: float(dims + 2)?, feasible: flag(dims + 3)? })
    }
}

/// Collection context stored next to a dataset so it can be re-scored and
/// its grid restored exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub parameters: Vec<ParameterSpec>,
    pub slo_metric: String,
    pub slo_threshold: f64,
    pub utility: String,
    pub weights: Vec<f64>,
    pub tenants: u32,
    #[serde(default)]
    pub rate_per_tenant: Option<f64>,
}

impl DatasetMeta {
    pub fn from_evaluator(evaluator: &LiveEvaluator<'_>) -> Self {
        let scorer = evaluator.scorer();
        Self {
            parameters: evaluator.space().parameters().to_vec(),
            slo_metric: scorer.slo().metric().to_string(),
            slo_threshold: scorer.slo().threshold(),
            utility: scorer.function().name().to_string(),
            weights: scorer.weights().as_slice().to_vec(),
            tenants: evaluator.workload().tenants(),
            rate_per_tenant: evaluator.workload().rate_per_tenant(),
        }
    }
}

/// `dataset.csv` -> `dataset.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

#[derive(Debug, Clone)]
pub struct Dataset {
    space: SearchSpace,
    rows: Vec<DatasetRow>,
    meta: Option<DatasetMeta>,
    optimum: usize,
}

impl Dataset {
    /// Rows may come in any order; they must cover the space exactly once.
    pub fn new(space: SearchSpace, mut rows: Vec<DatasetRow>, meta: Option<DatasetMeta>) -> Result<Self, HarnessError> {
        let size = space.size_u64().filter(|&s| s == rows.len() as u64).ok_or_else(|| {
            HarnessError::Dataset(format!("{} rows for a space of {} configurations", rows.len(), space.size()))
        })?;
        let mut keyed = Vec::with_capacity(size as usize);
        for row in rows.drain(..) {
            let ordinal = space.ordinal(&row.config)?;
            keyed.push((ordinal, row));
        }
        keyed.sort_by_key(|(o, _)| *o);
        if keyed.iter().enumerate().any(|(i, (o, _))| *o != i as u64) {
            return Err(HarnessError::Dataset("rows repeat some configurations and miss others".into()));
        }
        let rows: Vec<DatasetRow> = keyed.into_iter().map(|(_, r)| r).collect();
        let optimum = argmin(&rows);
        Ok(Self { space, rows, meta, optimum })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    /// Rows in enumeration order.
    pub fn rows(&self) -> &[DatasetRow] {
        &self.rows
    }

    pub fn meta(&self) -> Option<&DatasetMeta> {
        self.meta.as_ref()
    }

    /// Lowest utility; the first in enumeration order among equals.
    pub fn optimum(&self) -> &DatasetRow {
        &self.rows[self.optimum]
    }

    pub fn feasible_fraction(&self) -> f64 {
        self.rows.iter().filter(|r| r.feasible).count() as f64 / self.rows.len() as f64
    }

    pub fn replay_backend(&self) -> ReplayBackend {
        ReplayBackend::new(self.rows.iter().map(|r| (r.config.clone(), r.sli.clone())))
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let tmp = path.with_extension("csv.tmp");
        {
            let mut w = csv::Writer::from_writer(BufWriter::new(create(&tmp)?));
            w.write_record(header(&self.space))?;
            for row in &self.rows {
                w.write_record(row.record())?;
            }
            w.flush()?;
        }
        fs::rename(&tmp, path).map_err(|e| file_error(path, e))?;
        self.write_meta(path)
    }

    fn write_meta(&self, path: &Path) -> Result<(), HarnessError> {
        if let Some(meta) = &self.meta {
            let text = serde_json::to_string_pretty(meta).map_err(|e| HarnessError::Dataset(e.to_string()))?;
            let mp = meta_path(path);
            fs::write(&mp, text + "\n").map_err(|e| file_error(&mp, e))?;
        }
        Ok(())
    }

    /// Reads a dataset and its metadata file when present. Without metadata
    /// the grid is inferred from the values.
    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let mp = meta_path(path);
        let meta: Option<DatasetMeta> = match fs::read_to_string(&mp) {
            Ok(text) => {
                Some(serde_json::from_str(&text).map_err(|e| HarnessError::Dataset(format!("{}: {e}", mp.display())))?)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(file_error(&mp, e)),
        };
        let mut reader = csv::Reader::from_reader(File::open(path).map_err(|e| file_error(path, e))?);
        let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if names.len() <= TAIL_COLUMNS.len() || names[names.len() - TAIL_COLUMNS.len()..] != TAIL_COLUMNS {
            return Err(HarnessError::Dataset(format!(
                "{}: header must end with {}",
                path.display(),
                TAIL_COLUMNS.join(",")
            )));
        }
        let dims = names.len() - TAIL_COLUMNS.len();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            rows.push(DatasetRow::parse(&record?, dims, i as u64 + 2)?);
        }
        let space = match &meta {
            Some(m) => {
                let params = m
                    .parameters
                    .iter()
                    .map(|p| {
                        ParameterSpec::derived(p.name(), p.min(), p.max(), p.granularity(), p.suffix(), p.reference())
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let space = SearchSpace::new(params)?;
                let declared: Vec<&str> = space.parameters().iter().map(|p| p.name()).collect();
                if declared != names[..dims] {
                    return Err(HarnessError::Dataset(format!("{} does not match the dataset columns", mp.display())));
                }
                space
            }
            None => infer_space(&names[..dims], &rows)?,
        };
        Self::new(space, rows, meta)
    }
}

fn argmin(rows: &[DatasetRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.utility < rows[best].utility {
            best = i;
        }
    }
    best
}

fn header(space: &SearchSpace) -> Vec<String> {
    space.parameters().iter().map(|p| p.name().to_string()).chain(TAIL_COLUMNS.iter().map(|s| s.to_string())).collect()
}

fn infer_space(names: &[String], rows: &[DatasetRow]) -> Result<SearchSpace, HarnessError> {
    let mut params = Vec::with_capacity(names.len());
    for (d, name) in names.iter().enumerate() {
        let values: BTreeSet<i64> = rows.iter().map(|r| r.config.settings()[d]).collect();
        let (Some(&min), Some(&max)) = (values.first(), values.last()) else {
            return Err(HarnessError::Dataset("empty dataset".into()));
        };
        let step = values.iter().fold(0i64, |g, &v| gcd(g, v - min));
        if step == 0 {
            return Err(HarnessError::Dataset(format!(
                "parameter `{name}` takes a single value; its grid needs the metadata file"
            )));
        }
        params.push(ParameterSpec::new(name.clone(), min, max, step, "")?);
    }
    Ok(SearchSpace::new(params)?)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn create(path: &Path) -> Result<File, HarnessError> {
    File::create(path).map_err(|e| file_error(path, e))
}

fn file_error(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::File { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectOptions {
    /// Largest space collected without screening first.
    pub cap: u64,
    /// Rows between flushes of the partial file.
    pub checkpoint_every: usize,
}

impl Default for CollectOptions {
    fn default() -> Self {
        Self { cap: 100_000, checkpoint_every: 100 }
    }
}

/// Evaluates every configuration and writes `out`. Progress goes to
/// `<out>.partial` so an interrupted collection resumes where it stopped.
pub fn collect_exhaustive(
    evaluator: &LiveEvaluator<'_>,
    out: &Path,
    options: CollectOptions,
) -> Result<Dataset, HarnessError> {
    let space = evaluator.space();
    let size = match space.size_u64() {
        Some(s) if s <= options.cap => s as usize,
        _ => return Err(HarnessError::TooLarge { size: space.size().to_string(), cap: options.cap }),
    };
    let partial = PathBuf::from(format!("{}.partial", out.display()));
    let mut rows = resume(space, &partial)?;
    if !rows.is_empty() {
        log::info!("resuming {} after {} of {size} rows", partial.display(), rows.len());
    }
    rewrite_partial(space, &partial, &rows)?;

    let mut writer = csv::Writer::from_writer(BufWriter::new(
        OpenOptions::new().append(true).open(&partial).map_err(|e| file_error(&partial, e))?,
    ));
    let pending: Vec<Configuration> = space.enumerate().skip(rows.len()).collect();
    for chunk in pending.chunks(options.checkpoint_every.max(1)) {
        let (done, error) = match evaluator.evaluate_batch(chunk) {
            Ok(obs) => (obs, None),
            Err((obs, e)) => (obs, Some(e)),
        };
        for obs in &done {
            let row = DatasetRow::from_observation(obs);
            writer.write_record(row.record())?;
            rows.push(row);
        }
        writer.flush()?;
        if let Some(e) = error {
            return Err(e);
        }
        log::info!("collected {} of {size} configurations", rows.len());
    }
    drop(writer);

    let dataset = Dataset::new(space.clone(), rows, Some(DatasetMeta::from_evaluator(evaluator)))?;
    fs::rename(&partial, out).map_err(|e| file_error(out, e))?;
    dataset.write_meta(out)?;
    Ok(dataset)
}

/// Rows of an earlier partial file that match the enumeration prefix.
fn resume(space: &SearchSpace, partial: &Path) -> Result<Vec<DatasetRow>, HarnessError> {
    let file = match File::open(partial) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(file_error(partial, e)),
    };
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let expected = header(space);
    if reader.headers()?.iter().ne(expected.iter().map(String::as_str)) {
        return Err(HarnessError::Dataset(format!(
            "{} belongs to a different space; remove it to start over",
            partial.display()
        )));
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (record, expect) in reader.records().zip(space.enumerate()) {
        // a torn last line from an interrupted write ends the usable prefix
        let Ok(record) = record else { break };
        let Ok(row) = DatasetRow::parse(&record, space.dims(), rows.len() as u64 + 2) else { break };
        if row.config != expect || !seen.insert(row.config.clone()) {
            return Err(HarnessError::Dataset(format!(
                "{} is out of enumeration order at row {}; remove it to start over",
                partial.display(),
                rows.len() + 1
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn rewrite_partial(space: &SearchSpace, partial: &Path, rows: &[DatasetRow]) -> Result<(), HarnessError> {
    let tmp = PathBuf::from(format!("{}.tmp", partial.display()));
    {
        let mut w = csv::Writer::from_writer(BufWriter::new(create(&tmp)?));
        w.write_record(header(space))?;
        for row in rows {
            w.write_record(row.record())?;
        }
        w.flush()?;
        w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?.get_ref().sync_all()?;
    }
    fs::rename(&tmp, partial).map_err(|e| file_error(partial, e))
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::backends::{BackendError, EvalRequest, Experiment};
    use crate::utility::{CostWeights, Scorer, SloSpec, UtilityFunction, WorkloadPattern, WorkloadSpec};

    /// Latency falls with the sum of settings; fails hard once `fail_at`
    /// evaluations have happened.
    struct Counting {
        calls: AtomicUsize,
        fail_at: Option<usize>,
    }

    impl Experiment for Counting {
        fn evaluate(&self, r: &EvalRequest<'_>) -> Result<SliResult, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if self.fail_at == Some(n) {
                return Err(BackendError::Model("lost connection".into()));
            }
            let s: i64 = r.config.settings().iter().sum();
            if r.config.settings()[..2] == [0, 0] {
                return Ok(SliResult::failure("crash"));
            }
            Ok(SliResult::ok(2000.0 / s as f64, s as f64 * 0.5))
        }

        fn max_parallelism(&self) -> Option<usize> {
            Some(1)
        }
    }

    fn fixture() -> (SearchSpace, Scorer, WorkloadSpec) {
        let space = SearchSpace::new(vec![
            ParameterSpec::new("a", 0, 15, 1, "m").unwrap(),
            ParameterSpec::new("b", 0, 30, 2, "").unwrap(),
            ParameterSpec::new("c", 1, 2, 1, "").unwrap(),
        ])
        .unwrap();
        let scorer =
            Scorer::new(UtilityFunction::Teastore, SloSpec::latency_ms(100.0).unwrap(), CostWeights::uniform(3));
        (space, scorer, WorkloadSpec::new(2, Some(1.5), WorkloadPattern::Stable).unwrap())
    }

    #[test]
    fn collects_round_trips_and_finds_the_optimum() {
        let (space, scorer, workload) = fixture();
        let backend = Counting { calls: AtomicUsize::new(0), fail_at: None };
        let eval = LiveEvaluator::new(&space, &backend, &scorer, &workload);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("dataset.csv");
        let ds = collect_exhaustive(&eval, &out, CollectOptions::default()).unwrap();
        assert_eq!(ds.rows().len(), 512);
        assert!(!dir.path().join("dataset.csv.partial").exists());

        let brute =
            ds.rows().iter().enumerate().fold(0, |b, (i, r)| if r.utility < ds.rows()[b].utility { i } else { b });
        assert_eq!(ds.optimum(), &ds.rows()[brute]);

        let back = Dataset::read(&out).unwrap();
        assert_eq!(back.rows(), ds.rows());
        assert_eq!(back.space(), ds.space());
        assert_eq!(back.meta(), ds.meta());
        assert!(back.rows()[0].sli.failed);

        fs::remove_file(meta_path(&out)).unwrap();
        let inferred = Dataset::read(&out).unwrap();
        assert_eq!(inferred.space().size_u64(), Some(512));
        assert_eq!(inferred.optimum().config, ds.optimum().config);
    }

    #[test]
    fn interrupted_collection_resumes_without_reevaluating() {
        let (space, scorer, workload) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("dataset.csv");

        let flaky = Counting { calls: AtomicUsize::new(0), fail_at: Some(150) };
        let eval = LiveEvaluator::new(&space, &flaky, &scorer, &workload);
        assert!(collect_exhaustive(&eval, &out, CollectOptions::default()).is_err());
        assert!(!out.exists());

        let steady = Counting { calls: AtomicUsize::new(0), fail_at: None };
        let eval = LiveEvaluator::new(&space, &steady, &scorer, &workload);
        let ds = collect_exhaustive(&eval, &out, CollectOptions::default()).unwrap();
        assert_eq!(steady.calls.load(Ordering::SeqCst), 512 - 150);

        let fresh_backend = Counting { calls: AtomicUsize::new(0), fail_at: None };
        let fresh_dir = tempfile::tempdir().unwrap();
        let eval = LiveEvaluator::new(&space, &fresh_backend, &scorer, &workload);
        let fresh =
            collect_exhaustive(&eval, &fresh_dir.path().join("dataset.csv"), CollectOptions::default()).unwrap();
        assert_eq!(ds.rows(), fresh.rows());
    }

    #[test]
    fn torn_partial_line_is_dropped() {
        let (space, scorer, workload) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("dataset.csv");
        let flaky = Counting { calls: AtomicUsize::new(0), fail_at: Some(20) };
        let eval = LiveEvaluator::new(&space, &flaky, &scorer, &workload);
        assert!(collect_exhaustive(&eval, &out, CollectOptions::default()).is_err());
        let partial = dir.path().join("dataset.csv.partial");
        let mut text = fs::read_to_string(&partial).unwrap();
        text.push_str("0,2,1,12");
        fs::write(&partial, text).unwrap();

        let steady = Counting { calls: AtomicUsize::new(0), fail_at: None };
        let eval = LiveEvaluator::new(&space, &steady, &scorer, &workload);
        collect_exhaustive(&eval, &out, CollectOptions::default()).unwrap();
        assert_eq!(steady.calls.load(Ordering::SeqCst), 512 - 20);
    }

    #[test]
    fn oversized_spaces_are_refused() {
        let (space, scorer, workload) = fixture();
        let backend = Counting { calls: AtomicUsize::new(0), fail_at: None };
        let eval = LiveEvaluator::new(&space, &backend, &scorer, &workload);
        let dir = tempfile::tempdir().unwrap();
        let err =
            collect_exhaustive(&eval, &dir.path().join("d.csv"), CollectOptions { cap: 100, checkpoint_every: 10 })
                .unwrap_err();
        assert!(err.to_string().contains("screen the space first"), "{err}");
    }

    #[test]
    fn incomplete_rows_are_rejected() {
        let (space, _, _) = fixture();
        let row = DatasetRow {
            config: Configuration::new(vec![0, 0, 1]),
            sli: SliResult::ok(1.0, 1.0),
            utility: 0.0,
            feasible: true,
        };
        assert!(Dataset::new(space, vec![row], None).is_err());
    }
}
