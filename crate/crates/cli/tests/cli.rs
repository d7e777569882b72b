use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TREE: &str = r#"{"name":"v1","children":[
 {"name":"v2","children":[{"name":"v4","children":[{"name":"1"},{"name":"2"}]},{"name":"v5","children":[{"name":"3"},{"name":"4"}]}]},
 {"name":"v3","children":[{"name":"v6","children":[{"name":"5"},{"name":"6"}]},{"name":"v7","children":[{"name":"7"},{"name":"8"}]}]}]}"#;
const ROW: &str = "0.15,0.13,0.08,0.125,0.14,0.125,0.125,0.125";

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        ws.write("tree.json", TREE);
        ws.write("probs.csv", &format!("1,2,3,4,5,6,7,8\n{ROW}\n"));
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    fn run(&self, args: &[&str]) -> Output {
        self.run_env(args, &[])
    }

    fn run_env(&self, args: &[&str], env: &[(&str, &str)]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hiercp"));
        cmd.current_dir(self.dir.path()).args(args);
        for (k, v) in env {
            cmd.env(k, v);
        }
        cmd.output().unwrap()
    }

    fn predictor(&self, name: &str, method: &str, r: Option<usize>, tau: &str) {
        let r = r.map_or("null".to_string(), |r| r.to_string());
        self.write(
            name,
            &format!(
                r#"{{"method":"{method}","alpha":0.1,"r":{r},"randomized":true,"allow_empty":true,"seed":0,"tau_star":{tau},"n_cal":10}}"#
            ),
        );
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn lines_of(path: &Path) -> Vec<serde_json_lite::Line> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(serde_json_lite::parse)
        .collect()
}

/// Just enough parsing for prediction lines.
mod serde_json_lite {
    pub struct Line {
        pub classes: Vec<String>,
        pub nodes: Vec<String>,
        pub complexity: usize,
    }

    fn list(line: &str, key: &str) -> Vec<String> {
        let start = line.find(&format!("\"{key}\":[")).unwrap() + key.len() + 4;
        let end = start + line[start..].find(']').unwrap();
        line[start..end]
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.trim_matches('"').to_string())
            .collect()
    }

    pub fn parse(line: &str) -> Line {
        let c = line.find("\"repr_complexity\":").unwrap() + 18;
        let digits: String = line[c..]
            .chars()
            .take_while(|ch| ch.is_ascii_digit())
            .collect();
        Line {
            classes: list(line, "classes"),
            nodes: list(line, "nodes"),
            complexity: digits.parse().unwrap(),
        }
    }
}

#[test]
fn calibrate_reports_the_threshold() {
    let ws = Workspace::new();
    ws.write("labels.txt", "3\n");
    let o = ws.run(&[
        "calibrate",
        "--hierarchy",
        "tree.json",
        "--probs",
        "probs.csv",
        "--labels",
        "labels.txt",
        "--method",
        "crsvp",
        "--alpha",
        "0.5",
        "--fixed-u",
        "0.5",
        "--out",
        "pred.json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("N = 1"), "{out}");
    assert!(out.contains("m = 1"), "{out}");
    assert!(out.contains("tau* = 0.3825"), "{out}");
    assert!(ws.read("pred.json").contains("\"tau_star\": 0.3825"));

    let o = ws.run(&[
        "calibrate",
        "--hierarchy",
        "tree.json",
        "--probs",
        "probs.csv",
        "--labels",
        "labels.txt",
        "--method",
        "lac",
        "--alpha",
        "0.5",
        "--out",
        "lac.json",
    ]);
    assert!(stdout(&o).contains("tau* = 0.92"), "{}", stdout(&o));
}

#[test]
fn small_calibration_sets_give_the_full_set() {
    let ws = Workspace::new();
    ws.write(
        "probs4.csv",
        &format!("1,2,3,4,5,6,7,8\n{ROW}\n{ROW}\n{ROW}\n{ROW}\n"),
    );
    ws.write("labels4.txt", "1\n2\n3\n4\n");
    let o = ws.run(&[
        "calibrate",
        "--hierarchy",
        "tree.json",
        "--probs",
        "probs4.csv",
        "--labels",
        "labels4.txt",
        "--method",
        "aps",
        "--alpha",
        "0.1",
        "--out",
        "pred.json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("tau* = inf"));
    assert!(ws.read("pred.json").contains("\"tau_star\": \"inf\""));

    let o = ws.run(&[
        "predict",
        "--hierarchy",
        "tree.json",
        "--probs",
        "probs4.csv",
        "--predictor",
        "pred.json",
        "--out",
        "out.jsonl",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for line in lines_of(&ws.path("out.jsonl")) {
        assert_eq!(line.classes.len(), 8);
        assert_eq!(line.nodes, vec!["v1"]);
        assert_eq!(line.complexity, 1);
    }
}

#[test]
fn predict_matches_hand_traces() {
    let ws = Workspace::new();
    ws.predictor("crsvp.json", "crsvp", None, "0.3");
    let o = ws.run(&[
        "predict",
        "--hierarchy",
        "tree.json",
        "--probs",
        "probs.csv",
        "--predictor",
        "crsvp.json",
        "--fixed-u",
        "0.5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "{\"classes\":[\"1\",\"2\"],\"nodes\":[\"v4\"],\"size\":2,\"repr_complexity\":1}\n"
    );

    ws.predictor("r2.json", "crsvp-r", Some(2), "0.5");
    let o = ws.run(&[
        "predict",
        "--hierarchy",
        "tree.json",
        "--probs",
        "probs.csv",
        "--predictor",
        "r2.json",
        "--fixed-u",
        "0.5",
    ]);
    let line = serde_json_lite::parse(stdout(&o).trim());
    assert_eq!(line.classes, vec!["1", "2", "5"]);
    assert_eq!(line.nodes, vec!["v4", "5"]);
    assert_eq!(line.complexity, 2);
}

#[test]
fn evaluate_singletons() {
    let ws = Workspace::new();
    ws.write(
        "preds.jsonl",
        "{\"classes\":[\"1\"],\"nodes\":[\"1\"],\"size\":1,\"repr_complexity\":1}\n{\"classes\":[\"6\"],\"nodes\":[\"6\"],\"size\":1,\"repr_complexity\":1}\n",
    );
    ws.write("labels.txt", "1\n6\n");
    let o = ws.run(&[
        "evaluate",
        "--hierarchy",
        "tree.json",
        "--predictions",
        "preds.jsonl",
        "--labels",
        "labels.txt",
        "--out",
        "report.csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = ws.read("report.csv");
    assert_eq!(csv.lines().nth(1).unwrap(), "predictions,1,0,1,0,1,0");
    assert!(ws.read("report.json").contains("\"coverage\": 1.0"));
}

#[test]
fn oracle_check_reports_matches() {
    let ws = Workspace::new();
    let o = ws.run(&[
        "oracle-check",
        "--K",
        "8",
        "--trials",
        "200",
        "--r-max",
        "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "200/200 exact matches\n");
    let o = ws.run(&["oracle-check", "--K", "40", "--trials", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]:"));
}

#[test]
fn synth_then_benchmark_is_deterministic() {
    let ws = Workspace::new();
    let o = ws.run(&[
        "synth",
        "--k",
        "16",
        "--arity",
        "2",
        "--n",
        "300",
        "--concentration",
        "0.3",
        "--seed",
        "4",
        "--out",
        "data",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["hierarchy.json", "probs.csv", "labels.txt"] {
        assert!(ws.path("data").join(f).exists());
    }
    let args = [
        "benchmark",
        "--hierarchy",
        "data/hierarchy.json",
        "--probs",
        "data/probs.csv",
        "--labels",
        "data/labels.txt",
        "--methods",
        "crsvp,ncrsvp,crsvp-2,crsvp-K,aps,nps,lac",
        "--resamples",
        "10",
        "--seed",
        "1",
    ];
    let one = ws.run_env(&args, &[("RAYON_NUM_THREADS", "1")]);
    let four = ws.run_env(&args, &[("RAYON_NUM_THREADS", "4")]);
    assert!(one.status.success(), "{}", stderr(&one));
    assert_eq!(one.stdout, four.stdout);
    let text = stdout(&one);
    assert!(text.starts_with(
        "method,coverage,coverage_sd,size,size_sd,repr_complexity,repr_complexity_sd\n"
    ));
    assert_eq!(text.lines().count(), 8);

    let synthetic = [
        "benchmark",
        "--k",
        "16",
        "--n",
        "200",
        "--resamples",
        "3",
        "--methods",
        "crsvp,aps",
        "--out",
        "syn.csv",
    ];
    assert!(ws.run(&synthetic).status.success());
    let first = ws.read("syn.csv");
    assert!(ws.run(&synthetic).status.success());
    assert_eq!(first, ws.read("syn.csv"));
}

#[test]
fn predictions_are_identical_across_thread_counts() {
    let ws = Workspace::new();
    assert!(ws
        .run(&["synth", "--k", "32", "--n", "400", "--seed", "9", "--out", "d"])
        .status
        .success());
    let cal = ws.run(&[
        "calibrate",
        "--hierarchy",
        "d/hierarchy.json",
        "--probs",
        "d/probs.csv",
        "--labels",
        "d/labels.txt",
        "--method",
        "crsvp-r",
        "--r",
        "3",
        "--alpha",
        "0.2",
        "--seed",
        "5",
        "--out",
        "p.json",
    ]);
    assert!(cal.status.success(), "{}", stderr(&cal));
    let args = [
        "predict",
        "--hierarchy",
        "d/hierarchy.json",
        "--probs",
        "d/probs.csv",
        "--predictor",
        "p.json",
    ];
    let a = ws.run_env(&args, &[("RAYON_NUM_THREADS", "1")]);
    let b = ws.run_env(&args, &[("RAYON_NUM_THREADS", "8")]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    for line in stdout(&a).lines().map(serde_json_lite::parse) {
        assert!(line.complexity <= 3);
    }
}

#[test]
fn errors_have_kinds_and_exit_codes() {
    let ws = Workspace::new();
    ws.write("bad_labels.txt", "9\n");
    ws.write("labels.txt", "3\n");
    ws.write("bad.csv", "1,2,3,4,5,6,7,8\n0.5,0.5,0.5,0,0,0,0,0\n");
    ws.write("renamed.csv", &format!("1,2,3,4,5,6,7,x\n{ROW}\n"));
    let base = [
        "calibrate",
        "--hierarchy",
        "tree.json",
        "--method",
        "crsvp",
        "--out",
        "o.json",
    ];
    let cases: [(&[&str], i32, &str); 6] = [
        (
            &["--probs", "probs.csv", "--labels", "bad_labels.txt"],
            3,
            "data",
        ),
        (
            &["--probs", "bad.csv", "--labels", "labels.txt"],
            4,
            "numeric",
        ),
        (
            &["--probs", "renamed.csv", "--labels", "labels.txt"],
            3,
            "data",
        ),
        (
            &["--probs", "missing.csv", "--labels", "labels.txt"],
            3,
            "data",
        ),
        (
            &[
                "--probs",
                "probs.csv",
                "--labels",
                "labels.txt",
                "--alpha",
                "1.5",
            ],
            2,
            "usage",
        ),
        (
            &[
                "--probs",
                "probs.csv",
                "--labels",
                "labels.txt",
                "--fixed-u",
                "2",
            ],
            2,
            "usage",
        ),
    ];
    for (extra, code, kind) in cases {
        let args: Vec<&str> = base.iter().chain(extra.iter()).copied().collect();
        let o = ws.run(&args);
        assert_eq!(o.status.code(), Some(code), "{extra:?}: {}", stderr(&o));
        let err = stderr(&o);
        assert!(err.starts_with(&format!("error[{kind}]:")), "{err}");
        assert_eq!(err.lines().count(), 1, "{err}");
    }

    let o = ws.run(&["calibrate", "--method", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]:"));

    // a predictor calibrated on 8 classes refuses a 4-class hierarchy
    assert!(ws
        .run(&[
            "calibrate",
            "--hierarchy",
            "tree.json",
            "--probs",
            "probs.csv",
            "--labels",
            "labels.txt",
            "--method",
            "aps",
            "--alpha",
            "0.5",
            "--out",
            "aps.json",
        ])
        .status
        .success());
    ws.write(
        "small.json",
        r#"{"name":"r","children":[{"name":"a"},{"name":"b"},{"name":"c"},{"name":"d"}]}"#,
    );
    ws.write("small.csv", "a,b,c,d\n0.25,0.25,0.25,0.25\n");
    let o = ws.run(&[
        "predict",
        "--hierarchy",
        "small.json",
        "--probs",
        "small.csv",
        "--predictor",
        "aps.json",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[data]:"));
}
