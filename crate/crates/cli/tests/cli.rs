use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_cycleforge");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CYCLEFORGE_SEED")
        .output()
        .expect("binary runs")
}

fn run_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(BIN)
        .args(args)
        .env_remove("CYCLEFORGE_SEED")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}); stderr: {}",
            String::from_utf8_lossy(&o.stderr)
        )
    })
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

fn load(name: &str) -> Value {
    let p = schema_dir().join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_valid(schema: &str, doc: &Value) {
    let mut opts = jsonschema::options();
    for shared in ["defs", "manifest"] {
        let s = load(shared);
        let id = s["$id"].as_str().unwrap().to_string();
        opts = opts.with_resource(id, jsonschema::Resource::from_contents(s).unwrap());
    }
    let validator = opts.build(&load(schema)).expect("schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(doc)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{schema} schema violations: {errors:#?}");
}

fn strip_wall_time(mut v: Value) -> Value {
    if let Some(m) = v.get_mut("manifest").and_then(Value::as_object_mut) {
        m.remove("wall_time_s");
    }
    v
}

struct Dir(tempfile::TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> String {
        self.0.path().join(name).to_str().unwrap().to_string()
    }

    fn write(&self, name: &str, text: &str) -> String {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn generate(&self, kind: &str, n: u32, d: usize) -> String {
        let p = self.path(&format!("{kind}-{n}-{d}.json"));
        let o = run(&[
            "generate",
            "--kind",
            kind,
            "--n",
            &n.to_string(),
            "--d",
            &d.to_string(),
            "-o",
            &p,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        p
    }
}

// f̄1 = π(2 − 1.25 r²) after z = 1 − r²/2 from f2; not decoupled.
const COUPLED: &str = r#"{"n":3,"d":1,"kind":"continuous",
 "a":[{"i":1,"j":0,"k":[0],"v":1},{"i":1,"j":0,"k":[1],"v":1},{"i":3,"j":0,"k":[0],"v":-1}],
 "b":[],
 "c":[[{"i":0,"j":0,"k":[0],"v":-1},{"i":0,"j":0,"k":[1],"v":1},{"i":2,"j":0,"k":[0],"v":1}]]}"#;

#[test]
fn pipeline_disc_attains_bound() {
    let dir = Dir::new();
    let spec = dir.generate("disc", 2, 1);
    let o = run(&["pipeline", &spec, "--eps", "1e-3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_valid("pipeline", &v);
    assert_eq!(v["bound"], 4);
    assert_eq!(v["found"], 4);
    assert_eq!(v["verified"], 4);
    assert!(v["max_distance"].as_f64().unwrap() < 0.05);
    assert_eq!(v["manifest"]["command"], "pipeline");
    assert_eq!(v["manifest"]["input_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn pipeline_zero_spec_exits_cleanly() {
    let dir = Dir::new();
    let spec = dir.write(
        "zero.json",
        r#"{"n":3,"d":1,"kind":"continuous","a":[],"b":[],"c":[[]]}"#,
    );
    let o = run(&["pipeline", &spec]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_valid("pipeline", &v);
    assert_eq!(v["bound"], 3);
    assert_eq!(v["found"], 0);
    assert_eq!(v["verified"], 0);
    assert_eq!(v["degenerate"], true);
}

#[test]
fn malformed_input_exits_one_without_report() {
    let dir = Dir::new();
    let cases = [
        r#"{"n":2,"d":1"#,
        r#"{"n":2,"d":1,"kind":"continuous","a":[],"b":[],"c":[[]],"extra":1}"#,
        r#"{"n":1,"d":1,"kind":"continuous","a":[{"i":2,"j":0,"k":[0],"v":1}],"b":[],"c":[[]]}"#,
        r#"{"n":1,"d":1,"kind":"continuous","a":[],"b":[],"c":[[]],"alpha":[]}"#,
    ];
    for (i, text) in cases.iter().enumerate() {
        let p = dir.write(&format!("bad{i}.json"), text);
        for cmd in ["pipeline", "average", "zeros", "verify"] {
            let o = run(&[cmd, &p]);
            assert_eq!(code(&o), 1, "{cmd} case {i}");
            assert!(o.stdout.is_empty(), "{cmd} case {i} printed a report");
        }
    }
    assert_eq!(code(&run(&["pipeline", &dir.path("missing.json")])), 1);
    assert_eq!(code(&run(&["nonsense"])), 1);
    assert_eq!(code(&run(&["pipeline"])), 1);
    assert_eq!(code(&run(&["--jobs", "0", "moments"])), 1);
    assert_eq!(
        code(&run(&[
            "generate", "--kind", "cubic", "--n", "2", "--d", "1"
        ])),
        1
    );
    assert_eq!(
        code(&run(&[
            "generate",
            "--kind",
            "disc",
            "--n",
            "2",
            "--d",
            "1",
            "--r-roots",
            "1"
        ])),
        1
    );
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn bad_seed_is_a_parse_error() {
    let dir = Dir::new();
    let spec = dir.generate("disc", 1, 1);
    let o = Command::new(BIN)
        .args(["zeros", &spec])
        .env("CYCLEFORGE_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn selfcheck_passes_quickly() {
    let start = Instant::now();
    let o = run(&["selfcheck"]);
    assert!(start.elapsed() < Duration::from_secs(60));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_valid("selfcheck", &v);
    assert_eq!(v["passed"], true);
    assert_eq!(v["checks"].as_array().unwrap().len(), 4);
}

#[test]
fn outputs_validate_against_schemas() {
    let dir = Dir::new();
    let spec = dir.generate("cont-odd", 3, 1);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&spec).unwrap()).unwrap();
    assert_valid("spec", &doc);
    assert_eq!(doc["manifest"]["command"], "generate");

    let o = run(&["moments", "--max-degree", "6"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_valid("moments", &v);
    assert_eq!(v["entries"].as_array().unwrap().len(), 3 * 28);

    let o = run(&["average", &spec, "--oracle-check"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_valid("average", &v);
    assert!(v["oracle"]["max_deviation"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["bezout_bound"], 3);

    let o = run(&["zeros", &spec]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_valid("zeros", &v);
    assert_eq!(v["count_report"]["found"], 3);

    let o = run(&["verify", &spec, "--study"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_valid("verify", &v);
    for st in v["studies"].as_array().unwrap() {
        let slope = st["order_estimate"].as_f64().unwrap();
        assert!((0.8..=1.2).contains(&slope), "slope {slope}");
    }
    assert_eq!(v["largest_verified_eps"], 1e-2);
}

#[test]
fn verify_consumes_zeros_output_and_traces() {
    let dir = Dir::new();
    let spec = dir.generate("disc", 2, 1);
    let zeros = dir.path("zeros.json");
    assert_eq!(code(&run(&["zeros", &spec, "-o", &zeros])), 0);
    let trace = dir.path("trace.csv");
    let o = run(&[
        "verify",
        &spec,
        "--zeros",
        &zeros,
        "--eps",
        "2e-3",
        "--trace",
        &trace,
        "--trace-zero",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["verified"], 4);
    assert!(v["search_complete"].is_null());

    let mut rdr = csv::Reader::from_path(&trace).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["t", "x", "y", "z1"]
    );
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|c| c.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 10);
    let (first, last) = (&rows[0], rows.last().unwrap());
    assert_eq!(first[0], 0.0);
    assert!((last[0] - 2.0 * std::f64::consts::PI).abs() < 0.05);
    assert!((first[1] - last[1]).abs() < 1e-8 && last[2].abs() < 1e-12);
}

#[test]
fn stdin_matches_file_input() {
    let dir = Dir::new();
    let spec = dir.generate("cont-even", 2, 1);
    let text = std::fs::read(&spec).unwrap();
    let a = json(&run(&["zeros", &spec]));
    let b = json(&run_stdin(&["zeros", "-"], &text));
    assert_eq!(a["zeros"], b["zeros"]);
    assert_eq!(a["manifest"]["input_sha256"], b["manifest"]["input_sha256"]);
}

#[test]
fn outputs_are_deterministic() {
    let dir = Dir::new();
    let spec = dir.generate("disc", 2, 1);
    let a = strip_wall_time(json(&run(&["pipeline", &spec, "--study"])));
    let b = strip_wall_time(json(&run(&["--jobs", "2", "pipeline", &spec, "--study"])));
    assert_eq!(a["zeros"], b["zeros"]);
    assert_eq!(a["verdicts"], b["verdicts"]);
    assert_eq!(a["studies"], b["studies"]);
    let c = strip_wall_time(json(&run(&["pipeline", &spec, "--study"])));
    assert_eq!(a, c);

    let coupled = dir.write("coupled.json", COUPLED);
    let seeded = |seed: &str| {
        let o = Command::new(BIN)
            .args(["zeros", &coupled])
            .env("CYCLEFORGE_SEED", seed)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        strip_wall_time(json(&o))
    };
    let (x, y) = (seeded("7"), seeded("7"));
    assert_eq!(x, y);
    assert_eq!(x["manifest"]["config"]["seed"], 7);
}

#[test]
fn coupled_system_uses_grid_search() {
    let dir = Dir::new();
    let spec = dir.write("coupled.json", COUPLED);
    let o = run(&["zeros", &spec]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_valid("zeros", &v);
    assert_eq!(v["method"], "grid-newton");
    let zs = v["zeros"].as_array().unwrap();
    assert_eq!(zs.len(), 1);
    let r = zs[0]["r"].as_f64().unwrap();
    assert!((r - 1.6f64.sqrt()).abs() < 1e-10);
    assert!((zs[0]["z"][0].as_f64().unwrap() - (1.0 - r * r / 2.0)).abs() < 1e-10);
}

#[test]
fn exhausted_budget_exits_two() {
    let dir = Dir::new();
    let spec = dir.write("coupled.json", COUPLED);
    let o = run(&["zeros", &spec, "--max-iterations", "1"]);
    assert_eq!(code(&o), 2);
    let v = json(&o);
    assert_eq!(v["complete"], false);
}

#[test]
fn failed_verification_exits_three() {
    let dir = Dir::new();
    let spec = dir.generate("disc", 1, 1);
    let o = run(&["verify", &spec, "--max-distance", "1e-9"]);
    assert_eq!(code(&o), 3);
    let v = json(&o);
    assert_eq!(v["verified"], 0);
    assert_eq!(v["simple"], 1);
}

#[test]
fn hopf_cycles_stay_near_origin() {
    let dir = Dir::new();
    let spec = dir.generate("hopf-disc", 2, 1);
    let v = json(&run(&["pipeline", &spec]));
    assert_eq!(v["found"], 2);
    assert_eq!(v["verified"], 2);
    for e in v["verdicts"].as_array().unwrap() {
        assert!(e["verdict"]["fixed_point"][0].as_f64().unwrap() < 0.02);
    }
}

#[test]
fn pretty_prints_tables() {
    let dir = Dir::new();
    let spec = dir.generate("disc", 1, 1);
    let o = run(&["--pretty", "pipeline", &spec]);
    assert_eq!(code(&o), 0);
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(serde_json::from_str::<Value>(&s).is_err());
    assert!(s.contains("verified") && s.contains("fixed point"));
}
