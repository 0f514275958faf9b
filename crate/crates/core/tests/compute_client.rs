//! Client side of the compute-worker protocol, driven against a scripted
//! fake worker (the real worker is a separate component).

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use honeycomb_core::tool_hub::{
    code_repl_spec, CodeReplTool, ComputeClient, ComputeError, ComputeRequest, FixtureCompute, ToolRegistry,
    ToolStatus, WorkerClient,
};
use serde_json::json;

fn worker(version: &str) -> WorkerClient {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/support/fake_worker.py");
    WorkerClient::new(vec![
        "python3".into(),
        script.display().to_string(),
        version.into(),
    ])
}

fn args(v: serde_json::Value) -> honeycomb_core::tool_hub::Args {
    v.as_object().unwrap().clone()
}

#[test]
fn snippet_and_atomic_round_trip() {
    let c = worker("1");
    let r = c.execute(&ComputeRequest::snippet("1+1", 5.0)).unwrap();
    assert_eq!((r.status, r.result), (ToolStatus::Ok, Some(json!(2))));
    let r = c
        .execute(&ComputeRequest::atomic_call(
            "mass_flow_rate",
            args(json!({"density": 1000.0, "area": 0.01, "velocity": 2.0})),
            5.0,
        ))
        .unwrap();
    assert_eq!(r.result, Some(json!(20.0)));
    let listed = c.list_atomics().unwrap();
    assert_eq!(listed[0].name, "mass_flow_rate");
}

#[test]
fn error_status_passes_through() {
    let r = worker("1").execute(&ComputeRequest::snippet("open('/etc/passwd')", 5.0)).unwrap();
    assert_eq!(r.status, ToolStatus::Error);
    assert!(r.diagnostics.unwrap().contains("file access"));
}

#[test]
fn handshake_version_mismatch_is_rejected() {
    let err = worker("2").execute(&ComputeRequest::snippet("1+1", 5.0)).unwrap_err();
    assert!(matches!(err, ComputeError::Worker(m) if m.contains("handshake")));
}

#[test]
fn hung_worker_times_out_and_is_replaced() {
    let c = worker("1");
    let start = Instant::now();
    let r = c.execute(&ComputeRequest::snippet("hang", 0.2)).unwrap();
    assert_eq!(r.status, ToolStatus::Timeout);
    assert!(start.elapsed() < Duration::from_secs(4));
    let r = c.execute(&ComputeRequest::snippet("2*21", 5.0)).unwrap();
    assert_eq!(r.result, Some(json!(42)));
}

#[test]
fn crash_and_garbage_recover() {
    let c = worker("1");
    assert!(c.execute(&ComputeRequest::snippet("crash", 5.0)).is_err());
    assert_eq!(c.execute(&ComputeRequest::snippet("1+1", 5.0)).unwrap().result, Some(json!(2)));
    assert!(matches!(
        c.execute(&ComputeRequest::snippet("garbage", 5.0)),
        Err(ComputeError::Protocol(_))
    ));
    assert_eq!(c.execute(&ComputeRequest::snippet("1+1", 5.0)).unwrap().result, Some(json!(2)));
}

#[test]
fn hundred_sequential_requests_share_one_worker() {
    let c = worker("1");
    for i in 0..100 {
        let req = match i % 3 {
            0 => ComputeRequest::snippet("1+1", 5.0),
            1 => ComputeRequest::snippet("open('x')", 5.0),
            _ => ComputeRequest::atomic_call(
                "mass_flow_rate",
                args(json!({"density": 1.0, "area": 2.0, "velocity": i})),
                5.0,
            ),
        };
        let r = c.execute(&req).unwrap();
        assert_eq!(r.status == ToolStatus::Ok, i % 3 != 1, "request {i}");
    }
}

#[test]
fn malformed_requests_never_reach_the_worker() {
    let c = WorkerClient::new(vec!["/nonexistent/worker".into()]);
    assert!(matches!(
        c.execute(&ComputeRequest::snippet("1+1", 0.0)),
        Err(ComputeError::Protocol(_))
    ));
}

#[test]
fn code_repl_uses_fixture_backend() {
    let compute = FixtureCompute::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/compute/compute.jsonl"))
        .unwrap();
    let mut registry = ToolRegistry::new();
    registry.register_tool(code_repl_spec(), Arc::new(CodeReplTool::new(Arc::new(compute)))).unwrap();
    let r = registry.invoke_tool("code_repl", &json!({"code": "1+1"}));
    assert_eq!(r.value, Some(json!(2)));
    let missing = registry.invoke_tool("code_repl", &json!({"code": "2+2"}));
    assert_eq!(missing.status, ToolStatus::Error);
}
