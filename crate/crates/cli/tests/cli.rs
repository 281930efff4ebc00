use std::net::TcpListener;
use std::path::PathBuf;
use std::process::{Command, Output};

fn demo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

fn cos(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cos"));
    cmd.args(args).env_remove("COS_CONFIG");
    cmd
}

fn demo_flags() -> Vec<String> {
    let d = demo();
    vec![
        "--frames".into(),
        d.join("item_0001").display().to_string(),
        "--question".into(),
        "Which object is shown?".into(),
        "--oracle".into(),
        format!("mock:{}", d.join("mock_oracle.txt").display()),
        "--backend".into(),
        format!("toy:{}", d.join("toy_backend.txt").display()),
        "--num-shots".into(),
        "32".into(),
        "--tile-size".into(),
        "8".into(),
    ]
}

fn run_demo(extra: &[&str]) -> Output {
    cos(&["run"])
        .args(demo_flags())
        .args(extra)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn run_prints_one_answer_line() {
    let out = run_demo(&[]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "B\n");
}

#[test]
fn trace_goes_to_stderr() {
    let out = run_demo(&["--trace"]);
    assert_eq!(stdout(&out), "B\n");
    let err = stderr(&out);
    assert!(err.contains("step   0"), "{err}");
    assert!(err.contains("top5"), "{err}");
}

#[test]
fn zero_alpha_matches_plain_decoding() {
    for seed in ["1", "2", "3"] {
        let sampled = ["--sample", "3.0", "--seed", seed];
        let flat = run_demo(&[&sampled[..], &["--alpha-override", "0"]].concat());
        let plain = run_demo(&[&sampled[..], &["--baseline"]].concat());
        assert!(flat.status.success() && plain.status.success());
        assert_eq!(stdout(&flat), stdout(&plain));
    }
}

#[test]
fn ground_with_single_shot_groups() {
    let d = demo();
    let out = cos(&[
        "ground",
        "--group-size",
        "1",
        "--num-shots",
        "32",
        "--tile-size",
        "8",
        "--question",
        "q",
    ])
    .arg("--frames")
    .arg(d.join("item_0000"))
    .arg("--oracle")
    .arg(format!("mock:{}", d.join("mock_oracle.txt").display()))
    .output()
    .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let (code, json) = text.split_once('\n').unwrap();
    assert_eq!(code.len(), 32);
    assert_eq!(code.matches('1').count(), 3);
    let report: serde_json::Value = serde_json::from_str(json).unwrap();
    assert_eq!(report["groups"].as_array().unwrap().len(), 32);
}

#[test]
fn subshots_prints_maps() {
    let out = cos(&["subshots", "--code", "0110"]).output().unwrap();
    assert_eq!(
        stdout(&out),
        "code:     0110\npositive: 1 1 2 2\nnegative: 0 3 3 3\nalpha:    0.5\n"
    );
    let bad = cos(&["subshots", "--code", "01x"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_file_layers_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("cos.conf");
    std::fs::write(
        &conf,
        "num-shots = 16\ngroup-size = 2\nseed = 4\nmax-new-tokens = 3\n",
    )
    .unwrap();
    let out = cos(&["run", "--group-size", "8"])
        .args(
            demo_flags()
                .iter()
                .filter(|a| *a != "32")
                .filter(|a| *a != "--num-shots"),
        )
        .arg("--config")
        .arg(&conf)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let err = stderr(&out);
    for line in [
        "num-shots = 16",
        "group-size = 8",
        "seed = 4",
        "max-new-tokens = 3",
        "retries = 3",
    ] {
        assert!(err.lines().any(|l| l == line), "missing {line:?} in\n{err}");
    }

    let via_env = cos(&["run"])
        .args(demo_flags())
        .env("COS_CONFIG", &conf)
        .output()
        .unwrap();
    let err = stderr(&via_env);
    assert!(err.lines().any(|l| l == "num-shots = 32"), "{err}");
    assert!(err.lines().any(|l| l == "group-size = 2"), "{err}");
}

#[test]
fn exit_codes() {
    let usage = cos(&["run", "--frobnicate"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));

    let missing = cos(&["run", "--config", "/nonexistent/cos.conf"])
        .args(demo_flags())
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(3), "{}", stderr(&missing));

    let bad_key = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(bad_key.path(), "shots = 4\n").unwrap();
    let unknown = cos(&["run"])
        .args(demo_flags())
        .arg("--config")
        .arg(bad_key.path())
        .output()
        .unwrap();
    assert_eq!(unknown.status.code(), Some(2), "{}", stderr(&unknown));

    let no_frames = cos(&[
        "run",
        "--frames",
        "/nonexistent",
        "--question",
        "q",
        "--oracle",
    ])
    .arg(format!("mock:{}", demo().join("mock_oracle.txt").display()))
    .args(["--backend", "toy"])
    .output()
    .unwrap();
    assert_eq!(no_frames.status.code(), Some(3), "{}", stderr(&no_frames));

    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let url = format!("http://127.0.0.1:{port}");
    let unreachable = cos(&[
        "run",
        "--retries",
        "0",
        "--num-shots",
        "8",
        "--tile-size",
        "8",
        "--backend",
        "toy",
    ])
    .args([
        "--frames",
        &demo().join("item_0000").display().to_string(),
        "--question",
        "q",
    ])
    .args(["--oracle", &url])
    .output()
    .unwrap();
    assert_eq!(
        unreachable.status.code(),
        Some(4),
        "{}",
        stderr(&unreachable)
    );

    let mut flags = demo_flags();
    let at = flags.iter().position(|f| f == "--backend").unwrap();
    flags[at + 1] = url;
    let backend_down = cos(&["run"]).args(flags).output().unwrap();
    assert_eq!(
        backend_down.status.code(),
        Some(4),
        "{}",
        stderr(&backend_down)
    );
}

#[test]
fn bench_writes_report_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let d = demo();
    let out = cos(&[
        "bench",
        "--mode",
        "baseline",
        "--num-shots",
        "32",
        "--tile-size",
        "8",
    ])
    .arg("--manifest")
    .arg(d.join("manifest.jsonl"))
    .arg("--oracle")
    .arg(format!("mock:{}", d.join("mock_oracle.txt").display()))
    .args([
        "--backend",
        &format!("toy:{}", d.join("toy_backend.txt").display()),
    ])
    .arg("--out")
    .arg(&report)
    .output()
    .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("Short"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["mode"], "baseline");
    assert_eq!(json["items"].as_array().unwrap().len(), 3);
}
