use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_polystab")
}

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../specs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary should execute")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process should exit normally")
}

fn json_file(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).expect("valid json")
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no error object on stderr: {text}"));
    serde_json::from_str::<Value>(line).expect("machine-parsable stderr")["error"].clone()
}

fn str_arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn analyze_classifies_the_projective_line_as_stable() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "analyze",
        str_arg(&spec("p1.json")),
        "--out",
        str_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let report = json_file(&dir.path().join("report.json"));
    assert_eq!(report["verdict"], "stable");
    assert_eq!(report["scalar_summary"]["s_hat"], 2.0);
    assert!(report["relative"]["phi_norm"].as_f64().unwrap() < 1e-9);
    assert_eq!(report["input"]["seed"], 42);

    let csv = fs::read_to_string(dir.path().join("phi.csv")).unwrap();
    assert!(csv.starts_with("x,phi,b_density\n"));
    assert!(csv.lines().count() > 64);
}

#[test]
fn analyze_flags_the_lopsided_interval_unstable() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "analyze",
        str_arg(&spec("interval_w01e.json")),
        "--out",
        str_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 20);

    let report = json_file(&dir.path().join("report.json"));
    assert_eq!(report["verdict"], "unstable");
    assert_eq!(report["mean_problem"]["verdict"], "unstable");
    // Weights (1/100, 1) give the extremal affine 297x/50 - 49/25; the
    // destabiliser for the mean problem is its affine complement.
    assert_eq!(report["extremal_affine"]["gradient"][0], "297/50");
    assert_eq!(report["extremal_affine"]["constant"], "-49/25");
    let norm = report["mean_problem"]["phi_norm"].as_f64().unwrap();
    let expect = (2.97_f64 * 2.97 / 3.0).sqrt();
    assert!((norm - expect).abs() < 1e-6, "norm {norm} vs {expect}");
}

#[test]
fn analyze_reports_the_semistable_trapezium_with_a_kernel_witness() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "analyze",
        str_arg(&spec("trapezium_l2.json")),
        "--out",
        str_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 10, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let report = json_file(&dir.path().join("report.json"));
    assert_eq!(report["verdict"], "semistable");
    assert_eq!(report["relative"]["verdict"], "semistable_strict");
    let witness = &report["relative"]["witness"];
    assert!(!witness.is_null(), "semistable verdicts carry a witness");
    assert_eq!(witness["l_value"], "0");
    assert!(report["relative"]["kernel_creases"].as_u64().unwrap() > 0);
    assert_eq!(report["extremal_affine"]["gradient"][0], "36/13");
}

#[test]
fn reports_are_byte_identical_across_reruns() {
    let scrub = |path: &Path| -> String {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("wall_ms"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        let out = run(&[
            "analyze",
            str_arg(&spec("interval_whalf1.json")),
            "--out",
            str_arg(dir.path()),
        ]);
        assert_eq!(code(&out), 20);
    }
    assert_eq!(
        scrub(&a.path().join("report.json")),
        scrub(&b.path().join("report.json"))
    );
    assert_eq!(
        fs::read(a.path().join("phi.csv")).unwrap(),
        fs::read(b.path().join("phi.csv")).unwrap()
    );
}

#[test]
fn decompose_refuses_stable_input() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "decompose",
        str_arg(&spec("square.json")),
        "--out",
        str_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
    let err = stderr_error(&out);
    assert_eq!(err["kind"], "decomposition");
    assert!(err["message"]
        .as_str()
        .unwrap()
        .contains("not unstable"));
}

#[test]
fn decompose_emits_one_piece_for_an_affine_minimiser() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "decompose",
        str_arg(&spec("trapezium_l2.json")),
        "--out",
        str_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let doc = json_file(&dir.path().join("decomposition.json"));
    assert_eq!(doc["summary"]["pl_detected"], true);
    assert_eq!(doc["summary"]["pieces"], 1);
    assert_eq!(doc["summary"]["volume_defect"], 0.0);
    assert_eq!(doc["summary"]["concavity_ok"], true);
    assert_eq!(doc["pieces"][0]["verdict"], "semistable_strict");
    assert_eq!(doc["pieces"][0]["local_density"]["gradient"][0], "36/13");
}

#[test]
fn flow_reports_monotone_energy_on_the_perturbed_line() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "flow",
        str_arg(&spec("p1.json")),
        "--resolution",
        "24",
        "--perturb",
        "0.5*x*(1-x)",
        "--t-end",
        "2",
        "--plot",
        "--out",
        str_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let report = json_file(&dir.path().join("report.json"));
    let flow = &report["flow"];
    assert_eq!(flow["monotone_energy"], true);
    assert!(flow["final_target_residual"].as_f64().unwrap() < 2e-3);
    assert!(
        flow["initial_calabi_energy"].as_f64().unwrap()
            > flow["final_calabi_energy"].as_f64().unwrap()
    );

    let csv = fs::read_to_string(dir.path().join("flow.csv")).unwrap();
    let energies: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(energies.len() > 10);
    assert!(energies
        .windows(2)
        .all(|p| p[1] <= p[0] + 1e-10));

    let svg = fs::read_to_string(dir.path().join("flow.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn flow_refuses_zero_weight_endpoints() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "flow",
        str_arg(&spec("interval_w01.json")),
        "--out",
        str_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
    let err = stderr_error(&out);
    assert_eq!(err["kind"], "flow");
    assert!(err["message"].as_str().unwrap().contains("zero sigma weight"));
}

#[test]
fn flow_rejects_malformed_perturbation_expressions() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "flow",
        str_arg(&spec("p1.json")),
        "--perturb",
        "0.5*(x",
        "--out",
        str_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(stderr_error(&out)["kind"], "perturb");
}

#[test]
fn sweep_classifies_the_trapezium_family() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "sweep",
        "trapezium",
        "--values",
        "1/2,1,2,4",
        "--resolution",
        "6",
        "--jobs",
        "2",
        "--out",
        str_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let index = json_file(&dir.path().join("index.json"));
    let items = index["items"].as_array().unwrap();
    assert_eq!(items.len(), 4);
    for item in items {
        assert_eq!(item["verdict"], "semistable", "item {item}");
        assert_eq!(item["s_hat"], 2.0);
        assert!(item["error"].is_null());
        let sub = dir.path().join(item["dir"].as_str().unwrap());
        for file in ["report.json", "spec.json", "phi.csv"] {
            assert!(sub.join(file).exists(), "{file} missing in {sub:?}");
        }
    }
}

#[test]
fn sweep_records_per_item_failures_and_continues() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "sweep",
        "trapezium",
        "--values",
        "0,2",
        "--resolution",
        "6",
        "--out",
        str_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 0);

    let index = json_file(&dir.path().join("index.json"));
    let items = index["items"].as_array().unwrap();
    assert_eq!(items[0]["verdict"], "error");
    assert!(items[0]["error"].as_str().unwrap().contains("degenerate"));
    assert_eq!(items[1]["verdict"], "semistable");
}

#[test]
fn sweep_splits_interval_weights_by_symmetry() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "sweep",
        "interval",
        "--values",
        "1/4,1",
        "--resolution",
        "16",
        "--out",
        str_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 0);

    let index = json_file(&dir.path().join("index.json"));
    let items = index["items"].as_array().unwrap();
    // Asymmetric weights destabilise the mean problem but stay relatively
    // stable; equal weights are stable outright.
    assert_eq!(items[0]["verdict"], "unstable");
    assert_eq!(items[1]["verdict"], "stable");
}

#[test]
fn missing_input_files_yield_structured_io_errors() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "analyze",
        str_arg(&dir.path().join("missing.json")),
        "--out",
        str_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(stderr_error(&out)["kind"], "io");
}
