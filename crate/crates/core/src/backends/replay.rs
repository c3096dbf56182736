//! Offline replay of a collected dataset.

use std::collections::HashMap;

use super::{BackendError, EvalRequest, Experiment, SliResult};
use crate::space::Configuration;

#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    rows: HashMap<Configuration, SliResult>,
}

impl ReplayBackend {
    pub fn new(rows: impl IntoIterator<Item = (Configuration, SliResult)>) -> Self {
        Self { rows: rows.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, config: &Configuration) -> Option<&SliResult> {
        self.rows.get(config)
    }
}

impl Experiment for ReplayBackend {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<SliResult, BackendError> {
        self.rows
            .get(request.config)
            .cloned()
            .ok_or_else(|| BackendError::Missing(request.space.config_key(request.config)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{ParameterSpec, SearchSpace};
    use crate::utility::{WorkloadPattern, WorkloadSpec};

    #[test]
    fn stored_rows_come_back_verbatim_and_gaps_are_errors() {
        let space = SearchSpace::new(vec![ParameterSpec::new("a", 0, 1, 1, "").unwrap()]).unwrap();
        let workload = WorkloadSpec::new(1, None, WorkloadPattern::Stable).unwrap();
        let present = Configuration::new(vec![0]);
        let absent = Configuration::new(vec![1]);
        let backend = ReplayBackend::new([(present.clone(), SliResult::ok(850.0, 40.0))]);
        let got = backend.evaluate(&EvalRequest { space: &space, config: &present, workload: &workload }).unwrap();
        assert_eq!(got, SliResult::ok(850.0, 40.0));
        let err = backend.evaluate(&EvalRequest { space: &space, config: &absent, workload: &workload }).unwrap_err();
        assert_eq!(err.to_string(), "configuration a=1 is not in the dataset");
    }
}
