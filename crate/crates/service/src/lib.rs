//! HTTP front end for the sandbox: `POST /v1/verify` runs a program against
//! test cases and returns its pass rate and judgment label, `GET /v1/healthz`
//! reports load.
//!
//! At most `workers` verifications execute at once. Up to `max_queue` more
//! wait for a slot; beyond that the service answers 503. Test processes are
//! additionally bounded by the sandbox's process-wide worker cap.

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use crl_core::corpus::TestCase;
use crl_core::critique::{label_candidates, CandidateSet};
use crl_core::sandbox::{
    global_worker_cap, run_tests, ExecLimits, RunnerSet, SandboxError, TestVerdict,
};
use serde::{Deserialize, Serialize};
use std::future::Future;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

/// Wire format version carried by every response body.
pub const API_VERSION: u32 = 1;

pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// Added to `timeout * tests` to get the server-side cap on one request.
pub const DEFAULT_OVERHEAD: Duration = Duration::from_secs(10);

/// Default extra allowance for runners with a compile step.
pub const COMPILE_ALLOWANCE: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub runners: RunnerSet,
    pub default_limits: ExecLimits,
    pub workers: usize,
    pub max_queue: usize,
    pub overhead: Duration,
    pub compile_allowance: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            runners: RunnerSet::default(),
            default_limits: ExecLimits::default(),
            workers: global_worker_cap(),
            max_queue: 256,
            overhead: DEFAULT_OVERHEAD,
            compile_allowance: COMPILE_ALLOWANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireTest {
    pub input: String,
    pub expected_output: String,
}

/// Per-request overrides of the server's default limits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitOverrides {
    pub wall_timeout_ms: Option<u64>,
    pub memory_limit_bytes: Option<u64>,
    pub max_output_bytes: Option<u64>,
}

impl LimitOverrides {
    pub fn apply(&self, base: ExecLimits) -> ExecLimits {
        ExecLimits {
            wall_timeout_ms: self.wall_timeout_ms.unwrap_or(base.wall_timeout_ms),
            memory_limit_bytes: self.memory_limit_bytes.unwrap_or(base.memory_limit_bytes),
            max_output_bytes: self.max_output_bytes.unwrap_or(base.max_output_bytes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub runner: String,
    pub source: String,
    pub tests: Vec<WireTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub version: u32,
    pub pass_rate: f64,
    pub passed: usize,
    pub total: usize,
    /// `pass_rate > label_threshold`.
    pub label: bool,
    pub verdicts: Vec<TestVerdict>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub version: u32,
    pub status: String,
    /// Requests waiting for a worker.
    pub queue_depth: usize,
    /// Requests currently executing.
    pub active: usize,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub version: u32,
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            version: API_VERSION,
            error: self.code.into(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

struct Shared {
    config: ServiceConfig,
    slots: Arc<Semaphore>,
    queued: AtomicUsize,
    active: AtomicUsize,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        let workers = config.workers.max(1);
        Self(Arc::new(Shared {
            slots: Arc::new(Semaphore::new(workers)),
            queued: AtomicUsize::new(0),
            active: AtomicUsize::new(0),
            config: ServiceConfig { workers, ..config },
        }))
    }

    pub fn health(&self) -> Health {
        Health {
            version: API_VERSION,
            status: "ok".into(),
            queue_depth: self.0.queued.load(Ordering::SeqCst),
            active: self.0.active.load(Ordering::SeqCst),
            workers: self.0.config.workers,
        }
    }
}

/// Upper bound on the execution time of one request: the per-test timeout
/// times the number of tests, plus the compile allowance when the runner
/// compiles, plus the overhead.
pub fn time_cap(
    limits: &ExecLimits,
    tests: usize,
    compiled: bool,
    config: &ServiceConfig,
) -> Duration {
    let per_test = Duration::from_millis(limits.wall_timeout_ms);
    let compile = if compiled {
        config.compile_allowance
    } else {
        Duration::ZERO
    };
    per_test.saturating_mul(tests.min(u32::MAX as usize) as u32) + compile + config.overhead
}

/// Checks a request and resolves it into the inputs of a sandbox run.
pub fn prepare(
    req: &VerifyRequest,
    config: &ServiceConfig,
) -> Result<(Vec<TestCase>, ExecLimits, f64), ApiError> {
    if config.runners.get(&req.runner).is_none() {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_runner",
            format!("no runner named `{}`", req.runner),
        ));
    }
    if req.tests.is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "empty_tests",
            "tests must be non-empty",
        ));
    }
    let threshold = req.label_threshold.unwrap_or(DEFAULT_THRESHOLD);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "bad_threshold",
            format!("label_threshold {threshold} must lie in (0, 1)"),
        ));
    }
    let limits = req.limits.unwrap_or_default().apply(config.default_limits);
    limits.validate().map_err(|e| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "bad_limits",
            e.to_string(),
        )
    })?;
    let tests = req
        .tests
        .iter()
        .map(|t| TestCase::new(t.input.clone(), t.expected_output.clone()))
        .collect();
    Ok((tests, limits, threshold))
}

/// The computation behind `/v1/verify`, without the HTTP layer.
pub fn verify_in_process(
    req: &VerifyRequest,
    config: &ServiceConfig,
) -> Result<VerifyResponse, ApiError> {
    let (tests, limits, threshold) = prepare(req, config)?;
    let runner = config.runners.get(&req.runner).expect("checked by prepare");
    execute(&req.source, &tests, &limits, runner, threshold)
}

fn execute(
    source: &str,
    tests: &[TestCase],
    limits: &ExecLimits,
    runner: &crl_core::sandbox::RunnerSpec,
    threshold: f64,
) -> Result<VerifyResponse, ApiError> {
    let started = Instant::now();
    let report = run_tests(source, tests, limits, runner, global_worker_cap()).map_err(|e| {
        let status = match e {
            SandboxError::RunnerNotFound { .. } | SandboxError::BadRunner(..) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            SandboxError::NoTests | SandboxError::InvalidLimits(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            SandboxError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, "sandbox", e.to_string())
    })?;
    let set = CandidateSet {
        problem_id: "request".into(),
        candidates: vec![(source.to_string(), report.clone())],
    };
    let label = label_candidates(&set, "", threshold)
        .map_err(|e| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "bad_threshold",
                e.to_string(),
            )
        })?
        .remove(0)
        .label
        .as_bool();
    Ok(VerifyResponse {
        version: API_VERSION,
        pass_rate: report.pass_rate,
        passed: report.passed,
        total: report.total,
        label,
        verdicts: report.verdicts,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}

/// Marks a request as executing until dropped.
struct Active(AppState);

impl Active {
    fn enter(state: &AppState) -> Self {
        state.0.active.fetch_add(1, Ordering::SeqCst);
        Self(state.clone())
    }
}

impl Drop for Active {
    fn drop(&mut self) {
        self.0 .0.active.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn verify(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<Json<VerifyResponse>, ApiError> {
    let req: VerifyRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string()))?;
    let shared = &state.0;
    let (tests, limits, threshold) = prepare(&req, &shared.config)?;
    let runner = shared
        .config
        .runners
        .get(&req.runner)
        .expect("checked by prepare")
        .clone();

    let permit = match shared.slots.clone().try_acquire_owned() {
        Ok(p) => p,
        Err(_) => {
            let admitted = shared
                .queued
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |q| {
                    (q < shared.config.max_queue).then_some(q + 1)
                })
                .is_ok();
            if !admitted {
                return Err(ApiError::new(
                    StatusCode::SERVICE_UNAVAILABLE,
                    "queue_full",
                    format!("{} requests already waiting", shared.config.max_queue),
                ));
            }
            let waited = shared.slots.clone().acquire_owned().await;
            shared.queued.fetch_sub(1, Ordering::SeqCst);
            waited.expect("semaphore is never closed")
        }
    };
    let active = Active::enter(&state);

    let cap = time_cap(
        &limits,
        tests.len(),
        runner.compile.is_some(),
        &shared.config,
    );
    // the slot stays taken until the sandbox returns, even past the cap
    let job = tokio::task::spawn_blocking(move || {
        let _held = (permit, active);
        execute(&req.source, &tests, &limits, &runner, threshold)
    });
    let result = match tokio::time::timeout(cap, job).await {
        Ok(joined) => joined.map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        })?,
        Err(_) => Err(ApiError::new(
            StatusCode::GATEWAY_TIMEOUT,
            "time_cap",
            format!("verification exceeded {} ms", cap.as_millis()),
        )),
    };
    result.map(Json)
}

async fn healthz(State(state): State<AppState>) -> Json<Health> {
    Json(state.health())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/verify", post(verify))
        .route("/v1/healthz", get(healthz))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then stops accepting connections and
/// drains in-flight requests.
pub async fn serve(
    listener: TcpListener,
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::new(config)))
        .with_graceful_shutdown(shutdown)
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_scales_with_tests_and_compile() {
        let l = ExecLimits {
            wall_timeout_ms: 500,
            ..ExecLimits::default()
        };
        let cfg = ServiceConfig {
            overhead: Duration::from_secs(1),
            ..ServiceConfig::default()
        };
        assert_eq!(time_cap(&l, 4, false, &cfg), Duration::from_millis(3000));
        assert_eq!(time_cap(&l, 4, true, &cfg), Duration::from_millis(63000));
    }

    #[test]
    fn overrides_replace_only_given_fields() {
        let base = ExecLimits::default();
        let o = LimitOverrides {
            wall_timeout_ms: Some(5),
            ..LimitOverrides::default()
        };
        let got = o.apply(base);
        assert_eq!(got.wall_timeout_ms, 5);
        assert_eq!(got.memory_limit_bytes, base.memory_limit_bytes);
    }

    #[test]
    fn prepare_maps_errors_to_statuses() {
        let cfg = ServiceConfig::default();
        let mut req = VerifyRequest {
            runner: "cobol99".into(),
            source: String::new(),
            tests: vec![],
            limits: None,
            label_threshold: None,
        };
        assert_eq!(
            prepare(&req, &cfg).unwrap_err().status,
            StatusCode::NOT_FOUND
        );
        req.runner = "python3".into();
        assert_eq!(
            prepare(&req, &cfg).unwrap_err().status,
            StatusCode::UNPROCESSABLE_ENTITY
        );
        req.tests.push(WireTest {
            input: String::new(),
            expected_output: String::new(),
        });
        req.label_threshold = Some(1.0);
        assert_eq!(prepare(&req, &cfg).unwrap_err().code, "bad_threshold");
        req.label_threshold = None;
        req.limits = Some(LimitOverrides {
            wall_timeout_ms: Some(0),
            ..LimitOverrides::default()
        });
        assert_eq!(prepare(&req, &cfg).unwrap_err().code, "bad_limits");
    }
}
