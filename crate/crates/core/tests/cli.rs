use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_tse");

fn tse(args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn schema() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/report.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn resolve<'a>(root: &'a Value, s: &'a Value) -> &'a Value {
    match s.get("$ref").and_then(Value::as_str) {
        Some(r) => root.pointer(r.trim_start_matches('#')).expect("ref resolves"),
        None => s,
    }
}

fn type_ok(t: &str, v: &Value) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "integer" => v.is_i64() || v.is_u64(),
        "number" => v.is_number(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => false,
    }
}

/// Check the subset of JSON Schema the report schema uses.
fn validate(root: &Value, s: &Value, v: &Value, at: &str, errs: &mut Vec<String>) {
    let s = resolve(root, s);
    if let Some(t) = s.get("type") {
        let ok = match t {
            Value::String(t) => type_ok(t, v),
            Value::Array(ts) => ts.iter().any(|t| type_ok(t.as_str().unwrap(), v)),
            _ => true,
        };
        if !ok {
            errs.push(format!("{at}: expected type {t}, got {v}"));
            return;
        }
    }
    if let Some(c) = s.get("const") {
        if c != v {
            errs.push(format!("{at}: expected {c}"));
        }
    }
    if let Some(Value::Array(options)) = s.get("enum") {
        if !options.contains(v) {
            errs.push(format!("{at}: {v} not in enum"));
        }
    }
    if let (Some(min), Some(n)) = (s.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if n < min {
            errs.push(format!("{at}: {n} below {min}"));
        }
    }
    if let Some(Value::Array(options)) = s.get("oneOf") {
        let matching = options
            .iter()
            .filter(|o| {
                let mut e = Vec::new();
                validate(root, o, v, at, &mut e);
                e.is_empty()
            })
            .count();
        if matching != 1 {
            errs.push(format!("{at}: {matching} oneOf branches match"));
        }
    }
    if let Value::Object(obj) = v {
        if let Some(Value::Array(req)) = s.get("required") {
            for k in req {
                if !obj.contains_key(k.as_str().unwrap()) {
                    errs.push(format!("{at}: missing {k}"));
                }
            }
        }
        let props = s.get("properties").and_then(Value::as_object);
        for (k, child) in obj {
            let path = format!("{at}.{k}");
            match (props.and_then(|p| p.get(k)), s.get("additionalProperties")) {
                (Some(ps), _) => validate(root, ps, child, &path, errs),
                (None, Some(Value::Bool(false))) => errs.push(format!("{at}: unexpected key {k}")),
                (None, Some(extra @ Value::Object(_))) => validate(root, extra, child, &path, errs),
                _ => {}
            }
        }
    }
    if let Value::Array(items) = v {
        let prefix = s.get("prefixItems").and_then(Value::as_array);
        for (i, child) in items.iter().enumerate() {
            let path = format!("{at}[{i}]");
            match (prefix.and_then(|p| p.get(i)), s.get("items")) {
                (Some(ps), _) => validate(root, ps, child, &path, errs),
                (None, Some(is)) => validate(root, is, child, &path, errs),
                _ => {}
            }
        }
        let n = items.len() as u64;
        if s.get("minItems").and_then(Value::as_u64).is_some_and(|m| n < m)
            || s.get("maxItems").and_then(Value::as_u64).is_some_and(|m| n > m)
        {
            errs.push(format!("{at}: {n} items out of range"));
        }
    }
}

fn report(args: &[&str]) -> Value {
    let out = tse(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn assert_valid(v: &Value) {
    let root = schema();
    let mut errs = Vec::new();
    validate(&root, &root, v, "$", &mut errs);
    assert!(errs.is_empty(), "{errs:#?}");
}

#[test]
fn reports_match_the_schema_in_every_mode() {
    let dir = std::env::temp_dir().join(format!("tse-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let trace = dir.join("t.txt");
    for mode in ["tse", "mpbse", "dse"] {
        let v = report(&[
            "--program", "programs/loop_null.wl", "--target", "deref", "--entry", "start",
            "--mode", mode, "--fork-limit", "1", "--format", "json",
            "--trace", trace.to_str().unwrap(),
        ]);
        assert_valid(&v);
        assert_eq!(v["mode"], mode);
    }
    let v = report(&["--program", "programs/alias_assert.wl", "--target", "fail", "--format", "json"]);
    assert_valid(&v);
    assert_eq!(v["reachable"], true);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn error_suite_reports_match_the_schema() {
    for entry in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("programs/errors")).unwrap() {
        let path = entry.unwrap().path();
        let v = report(&["--program", path.to_str().unwrap(), "--target", "end", "--edge-limit", "4", "--format", "json"]);
        assert_valid(&v);
    }
}

#[test]
fn schema_rejects_a_tampered_report() {
    let mut v = report(&["--program", "programs/alias_assert.wl", "--target", "fail", "--format", "json"]);
    v["stage"] = Value::String("sideways".into());
    v.as_object_mut().unwrap().remove("stats");
    let root = schema();
    let mut errs = Vec::new();
    validate(&root, &root, &v, "$", &mut errs);
    assert_eq!(errs.len(), 2, "{errs:#?}");
}

#[test]
fn replay_loop_reaches_through_forward_stage() {
    let v = report(&[
        "--program", "programs/loop_null.wl", "--target", "deref", "--entry", "start",
        "--fork-limit", "1", "--format", "json", "--deterministic",
    ]);
    assert_eq!(v["stage"], "gfse");
    assert_eq!(v["replay"]["line:2"], 50);
    assert_eq!(v["stats"]["gfse"]["paths"], 1);
    assert_eq!(v["stats"]["wall_ms"], 0);
}

#[test]
fn missing_target_is_a_usage_error() {
    let out = tse(&["--program", "programs/alias_assert.wl"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_label_is_an_input_error() {
    let out = tse(&["--program", "programs/alias_assert.wl", "--target", "nowhere"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unreadable_program_is_an_input_error() {
    let out = tse(&["--program", "programs/does_not_exist.wl", "--target", "fail"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unwritable_trace_is_an_io_error() {
    let out = tse(&[
        "--program", "programs/alias_assert.wl", "--target", "fail",
        "--trace", "/nonexistent-dir/trace.txt",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_eval_scheme_is_rejected() {
    let out = tse(&["--program", "programs/alias_assert.wl", "--target", "fail", "--eval-scheme", "periodic:0"]);
    assert_eq!(out.status.code(), Some(1));
    let ok = tse(&["--program", "programs/alias_assert.wl", "--target", "fail", "--eval-scheme", "periodic:4"]);
    assert!(ok.status.success());
}

#[test]
fn smtlib_export_holds_one_block_per_path() {
    let dir = std::env::temp_dir().join(format!("tse-smt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("q.smt2");
    let v = report(&[
        "--program", "programs/loop_null.wl", "--target", "deref", "--entry", "start",
        "--mode", "mpbse", "--fork-limit", "3", "--exhaustive", "--format", "json",
        "--smtlib-out", out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let paths = v["paths"].as_array().unwrap().len();
    assert_eq!(text.matches("(check-sat)").count(), paths);
    assert_eq!(text.matches("(reset)").count(), paths.saturating_sub(1));
    std::fs::remove_dir_all(&dir).unwrap();
}
