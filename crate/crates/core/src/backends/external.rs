//! Benchmark runner executed as a child process.
//!
//! The runner gets one JSON document on stdin:
//! `{"params": {...}, "tenants": n, "rate_per_tenant": r, "timeout_s": t}`
//! and must print one JSON object of metric values on stdout, e.g.
//! `{"p99_latency_ms": 850, "throughput_rps": 40}`.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::os::unix::process::CommandExt;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::Duration;

use serde::Serialize;
use wait_timeout::ChildExt;

use super::{BackendError, EvalRequest, Experiment, SliResult, P99_LATENCY, THROUGHPUT};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExternalRequest {
    pub params: BTreeMap<String, String>,
    pub tenants: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_per_tenant: Option<f64>,
    pub timeout_s: u64,
}

#[derive(Debug, Clone)]
pub struct ExternalBackend {
    program: String,
    args: Vec<String>,
    retries: u32,
    timeout: Duration,
    parallelism: usize,
}

impl ExternalBackend {
    pub fn new(command: &[String], retries: u32, timeout: Duration) -> Result<Self, BackendError> {
        let (program, args) =
            command.split_first().ok_or_else(|| BackendError::Model("external backend needs a command".into()))?;
        Ok(Self { program: program.clone(), args: args.to_vec(), retries, timeout, parallelism: 1 })
    }

    /// Allows up to `n` runner processes at once.
    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self
    }

    fn attempt(&self, input: &[u8]) -> Result<Result<SliResult, String>, BackendError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0)
            .spawn()
            .map_err(|source| BackendError::Spawn { program: self.program.clone(), source })?;

        // a runner that exits without reading its input is judged by its exit status
        let _ = child.stdin.take().expect("piped").write_all(input);
        let stdout = drain(child.stdout.take().expect("piped"));
        let stderr = drain(child.stderr.take().expect("piped"));

        let Some(status) = child.wait_timeout(self.timeout)? else {
            kill_group(&mut child);
            return Ok(Err("timeout".into()));
        };
        let out = stdout.join().unwrap_or_default();
        let err = stderr.join().unwrap_or_default();
        if !status.success() {
            let detail = err.trim().lines().last().unwrap_or("").to_string();
            return Ok(Err(if detail.is_empty() {
                format!("runner {status}")
            } else {
                format!("runner {status}: {detail}")
            }));
        }
        Ok(parse_metrics(&out))
    }
}

fn drain<R: Read + Send + 'static>(mut pipe: R) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = String::new();
        let _ = pipe.read_to_string(&mut buf);
        buf
    })
}

/// Kills the runner and anything it started. Reader threads are left to
/// finish on their own once the pipes close.
fn kill_group(child: &mut Child) {
    // SAFETY: plain syscall on the process group created at spawn
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

fn parse_metrics(text: &str) -> Result<SliResult, String> {
    let values: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(text.trim()).map_err(|e| format!("malformed runner output: {e}"))?;
    let mut metrics = BTreeMap::new();
    for (k, v) in values {
        let x = v.as_f64().ok_or_else(|| format!("malformed runner output: `{k}` is not a number"))?;
        metrics.insert(k, x);
    }
    let p99 = metrics
        .remove(P99_LATENCY)
        .filter(|v| *v > 0.0 && v.is_finite())
        .ok_or_else(|| format!("malformed runner output: missing or invalid `{P99_LATENCY}`"))?;
    let throughput = metrics.remove(THROUGHPUT).unwrap_or(0.0);
    let mut result = SliResult::ok(p99, throughput);
    result.extra = metrics;
    Ok(result)
}

impl Experiment for ExternalBackend {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<SliResult, BackendError> {
        let doc = ExternalRequest {
            params: request.space.render(request.config),
            tenants: request.workload.tenants(),
            rate_per_tenant: request.workload.rate_per_tenant(),
            timeout_s: self.timeout.as_secs_f64().ceil() as u64,
        };
        let mut input = serde_json::to_vec(&doc).map_err(io::Error::other)?;
        input.push(b'\n');
        let key = request.space.config_key(request.config);
        let mut last = String::new();
        for attempt in 1..=self.retries + 1 {
            match self.attempt(&input)? {
                Ok(result) => return Ok(result),
                Err(reason) => {
                    log::warn!("runner attempt {attempt} for {key} failed: {reason}");
                    last = reason;
                }
            }
        }
        Ok(SliResult::failure(last))
    }

    fn max_parallelism(&self) -> Option<usize> {
        Some(self.parallelism)
    }
}
