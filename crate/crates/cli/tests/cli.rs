use std::path::Path;
use std::process::{Command, Output};

fn kit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coriolis-kit")).args(args).env("CORIOLIS_KIT_THREADS", "1").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn validate_bundled_model_succeeds() {
    let o = kit(&["validate", "--model", "arm6.json", "--samples", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("check,residual,tolerance,status"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn validate_reads_model_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.json");
    let model = coriolis_model_json("geared_pair");
    std::fs::write(&path, model).unwrap();
    let o = kit(&["validate", "--model", path.to_str().unwrap(), "--samples", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn coriolis_model_json(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/models").join(format!("{name}.json"));
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&kit(&["frobnicate"])), 2);
    assert_eq!(code(&kit(&["coriolis", "--model", "no_such_model"])), 2);
    assert_eq!(code(&kit(&["coriolis", "--model", "planar2r", "--state", "{\"q\":[0],\"v\":[0]}"])), 2);
    assert_eq!(code(&kit(&["simulate", "--model", "arm6", "--factorization", "beta=1", "--tfinal", "0.01"])), 2);
    assert_eq!(code(&kit(&["simulate", "--model", "point_mass", "--factorization", "gamma=1"])), 2);
    assert_eq!(code(&kit(&["regressors", "--model", "pendulum", "--which", "x"])), 2);
    assert_eq!(code(&kit(&["bench", "--sizes", "0"])), 2);
}

#[test]
fn broken_model_file_fails_validation_or_usage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"name\": 3}").unwrap();
    assert_eq!(code(&kit(&["validate", "--model", path.to_str().unwrap()])), 2);
}

#[test]
fn help_lists_an_example_per_subcommand() {
    let text = stdout(&kit(&["--help"]));
    for sub in ["coriolis", "christoffel", "regressors", "identify", "simulate", "bench", "validate"] {
        assert!(text.contains(&format!("coriolis-kit {sub} ")), "{sub} example missing");
        let sub_help = stdout(&kit(&[sub, "--help"]));
        assert!(sub_help.contains("Example:"), "{sub} --help lacks an example");
    }
}

fn parse_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn coriolis_matrix_is_written_with_one_based_indices() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let o = kit(&["coriolis", "--model", "planar2r", "--random", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().next().unwrap().starts_with("i[1-based],k[1-based],H_ik"));
    let rows = parse_rows(&text);
    assert_eq!(rows.len(), 4);
    assert_eq!((rows[0][0].as_str(), rows[3][1].as_str()), ("1", "2"));
    // the projected construction agrees with the recursion
    let p = stdout(&kit(&["coriolis", "--model", "planar2r", "--random", "--seed", "4", "--method", "projected"]));
    for (a, b) in rows.iter().zip(parse_rows(&p)) {
        let (x, y): (f64, f64) = (a[3].parse().unwrap(), b[3].parse().unwrap());
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn christoffel_algorithms_agree() {
    let get = |alg: &str| -> Vec<f64> {
        let o = kit(&["christoffel", "--model", "planar2r", "--random", "--seed", "2", "--algorithm", alg]);
        assert_eq!(code(&o), 0);
        parse_rows(&stdout(&o)).iter().map(|r| r[3].parse().unwrap()).collect()
    };
    let (fast, sweep, fd) = (get("fast"), get("sweep"), get("fd"));
    assert_eq!(fast.len(), 8);
    for k in 0..8 {
        assert!((fast[k] - sweep[k]).abs() < 1e-11);
        assert!((fast[k] - fd[k]).abs() < 1e-5);
    }
    assert_eq!(code(&kit(&["christoffel", "--model", "free_tree", "--algorithm", "fd"])), 2);
}

#[test]
fn regressors_take_reference_speeds_from_the_state_file() {
    let dir = tempfile::tempdir().unwrap();
    let st = dir.path().join("s.json");
    std::fs::write(&st, r#"{"q": [0.3], "v": [1.0], "vr": [0.5], "vr_dot": [2.0]}"#).unwrap();
    let o = kit(&["regressors", "--model", "pendulum", "--state", st.to_str().unwrap(), "--which", "y"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = parse_rows(&stdout(&o));
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r[0] == "y" && r[1] == "1" && r[2] == "1"));
    assert_eq!(rows[4][3], "Ixx[kg*m^2]");
}

#[test]
fn simulate_then_identify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("run.csv");
    let o = kit(&[
        "simulate",
        "--model",
        "pendulum",
        "--controller",
        "passivity",
        "--reference",
        "sine",
        "--tfinal",
        "2",
        "--dt",
        "1e-3",
        "--state",
        "{\"q\":[0.2],\"v\":[0]}",
        "--out",
        traj.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&traj).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t[s],q1,v1,s1,tau1,V[J]");
    assert_eq!(text.lines().count(), 2002);
    let o = kit(&["identify", "--model", "pendulum", "--trajectory", traj.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = parse_rows(&stdout(&o));
    assert_eq!(rows.len(), 10);
    // the pendulum's identifiable combination is close to the true one
    let hx: f64 = rows[1][3].parse().unwrap();
    let truth: f64 = rows[1][4].parse().unwrap();
    assert!((hx - truth).abs() < 1e-3 * (1.0 + truth.abs()), "{hx} vs {truth}");
}

#[test]
fn torsioned_point_mass_run_and_adaptive_log() {
    let o = kit(&[
        "simulate",
        "--model",
        "point_mass",
        "--no-gravity",
        "--state",
        "{\"q\":[0,0,0],\"v\":[0,1,0]}",
        "--theta-hat-scale",
        "0.9",
        "--factorization",
        "beta=-5",
        "--tfinal",
        "0.5",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 502);
    let o = kit(&["simulate", "--model", "point_mass", "--no-gravity", "--controller", "adaptive", "--gamma", "2", "--tfinal", "0.1", "--zero-order-hold"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let head = text.lines().next().unwrap();
    assert!(head.ends_with("theta10"), "{head}");
    let v: Vec<f64> = parse_rows(&text).iter().map(|r| r[13].parse().unwrap()).collect();
    assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn diverging_simulation_is_a_failure() {
    // a huge step blows the closed loop up
    let o = kit(&["simulate", "--model", "planar2r", "--kd", "1e6", "--dt", "0.5", "--tfinal", "200"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bench_writes_timings() {
    let o = kit(&["bench", "--family", "chain", "--sizes", "2,4,8", "--reps", "1"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("n,depth,coriolis_s"));
    assert_eq!(text.lines().count(), 4);
}
