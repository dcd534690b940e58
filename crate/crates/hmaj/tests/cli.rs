use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hmaj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmaj"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const CONSENSUS: &str =
    r#"{"schema_version":1,"master_seed":4,"counts":[0,50,0],"h":{"fixed":3},"max_rounds":10}"#;
const BIASED: &str = r#"{"schema_version":1,"master_seed":4,"counts":[600,300,100],"h":{"fixed":5},"max_rounds":200}"#;

#[test]
fn simulate_consensus_start() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", CONSENSUS);
    let out = dir.path().join("run");
    let o = hmaj(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("consensus_round=0"));
    let traj: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(traj["schema_version"], 1);
    assert_eq!(traj["master_seed"], 4);
    assert_eq!(traj["trajectory"]["consensus_round"], 0);

    // Existing outputs are never overwritten.
    let again = hmaj(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&again), 1);
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let bad_type = write(
        dir.path(),
        "a.json",
        r#"{"schema_version":1,"master_seed":4,"counts":[5,5],"h":{"fixed":3},"max_rounds":"ten"}"#,
    );
    let o = hmaj(&[
        "simulate",
        "--config",
        &bad_type,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("max_rounds"), "{}", stderr(&o));

    let unknown = write(
        dir.path(),
        "b.json",
        r#"{"schema_version":1,"master_seed":4,"counts":[5,5],"h":{"fixed":3},"max_rounds":3,"rounds":3}"#,
    );
    let o = hmaj(&[
        "simulate",
        "--config",
        &unknown,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("rounds"));

    let zero_h = write(
        dir.path(),
        "c.json",
        r#"{"schema_version":1,"master_seed":4,"counts":[5,5],"h":{"fixed":0},"max_rounds":3}"#,
    );
    assert_eq!(
        code(&hmaj(&[
            "simulate",
            "--config",
            &zero_h,
            "--out",
            out.to_str().unwrap()
        ])),
        2
    );

    let missing = dir.path().join("nope.json");
    assert_eq!(
        code(&hmaj(&[
            "simulate",
            "--config",
            missing.to_str().unwrap(),
            "--out",
            "x"
        ])),
        2
    );
    assert_eq!(code(&hmaj(&["simulate"])), 2);
}

#[test]
fn simulate_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", BIASED);
    let run = dir.path().join("run");
    let o = hmaj(&[
        "simulate",
        "--config",
        &cfg,
        "--seed",
        "99",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let printed = stdout(&o);
    assert!(printed.contains("outcome=consensus on 1"), "{printed}");

    let rep = dir.path().join("rep");
    let o = hmaj(&[
        "report",
        "--in",
        run.to_str().unwrap(),
        "--out",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(rep.join("runs.txt")).unwrap(), printed);
    let rec: serde_json::Value = serde_json::from_str(
        fs::read_to_string(run.join("records.jsonl"))
            .unwrap()
            .trim(),
    )
    .unwrap();
    assert_eq!(rec["master_seed"], 99);
}

#[test]
fn sweep_files_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "s.json",
        r#"{"schema_version":1,"master_seed":21,"n":[100,200,400],"k":[3],"h":{"fixed":3},
            "initial":{"balanced_plus_bias":{"lambda1":1.0}},"trials":5,"max_rounds":1000}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        code(&hmaj(&[
            "sweep",
            "--spec",
            &spec,
            "--workers",
            "1",
            "--out",
            a.to_str().unwrap()
        ])),
        0
    );
    assert_eq!(
        code(&hmaj(&[
            "sweep",
            "--spec",
            &spec,
            "--workers",
            "3",
            "--out",
            b.to_str().unwrap()
        ])),
        0
    );
    let ra = fs::read(a.join("records.jsonl")).unwrap();
    assert_eq!(ra, fs::read(b.join("records.jsonl")).unwrap());
    assert_eq!(ra.iter().filter(|&&c| c == b'\n').count(), 15);

    // Refuses to overwrite, appends on request.
    assert_eq!(
        code(&hmaj(&[
            "sweep",
            "--spec",
            &spec,
            "--out",
            a.to_str().unwrap()
        ])),
        1
    );
    assert_eq!(
        code(&hmaj(&[
            "sweep",
            "--spec",
            &spec,
            "--out",
            a.to_str().unwrap(),
            "--append"
        ])),
        0
    );
    assert_eq!(
        fs::read(a.join("records.jsonl")).unwrap().len(),
        2 * ra.len()
    );

    let rep = dir.path().join("rep");
    assert_eq!(
        code(&hmaj(&[
            "report",
            "--in",
            b.to_str().unwrap(),
            "--out",
            rep.to_str().unwrap()
        ])),
        0
    );
    let csv = fs::read_to_string(rep.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(
        csv.starts_with("cell_id,n,k,h,B0,trials,plurality_success_rate,median_consensus_round,")
    );
}

#[test]
fn sweep_spec_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "s.json",
        r#"{"schema_version":1,"master_seed":21,"n":[100],"k":[3],"h":{"fixed":3},
            "initial":"balanced","trials":0,"max_rounds":10}"#,
    );
    let o = hmaj(&[
        "sweep",
        "--spec",
        &spec,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("trials"));
}

#[test]
fn report_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    assert_eq!(
        code(&hmaj(&[
            "report",
            "--in",
            missing.to_str().unwrap(),
            "--out",
            "x"
        ])),
        2
    );

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        code(&hmaj(&[
            "report",
            "--in",
            empty.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ])),
        0
    );
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn oracle_reports() {
    let o = hmaj(&["oracle", "--h", "3", "--p", "0.6,0.4", "--report", "win"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["report"]["q"][0].as_f64().unwrap() - 0.648).abs() < 1e-12);
    assert!(v["master_seed"].is_null());

    let o = hmaj(&["oracle", "--h", "5", "--p", "1,1,1", "--report", "tiemap"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["passed"], true);

    let o = hmaj(&["oracle", "--h", "4", "--p", "0.2,0.8", "--report", "event"]);
    assert_eq!(code(&o), 2);
    let o = hmaj(&["oracle", "--h", "4", "--p", "0.5,x", "--report", "win"]);
    assert_eq!(code(&o), 2);
    // Beyond the enumeration guard.
    let o = hmaj(&[
        "oracle",
        "--h",
        "200",
        "--p",
        "1,1,1,1,1,1,1,1",
        "--report",
        "win",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn verify_dispatch() {
    let o = hmaj(&["verify", "--suite", "diff_equality"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("PASS diff_equality"));
    assert_eq!(
        stdout(&o).lines().filter(|l| !l.starts_with(' ')).count(),
        1
    );

    let o = hmaj(&["verify", "--suite", "lemma9"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).starts_with("FAIL lemma9"));

    assert_eq!(code(&hmaj(&["verify", "--suite", "nope"])), 2);
}
