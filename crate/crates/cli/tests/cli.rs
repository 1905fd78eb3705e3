use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cgpt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgpt"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CGPT_DATA_DIR")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_data_writes_csv_and_edges() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, edges) in [("additive", 2), ("interactive", 3)] {
        let csv = format!("{kind}.csv");
        let o = cgpt(
            &["gen-data", kind, "--seed", "0", "--out", &csv],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let text = fs::read_to_string(dir.path().join(&csv)).unwrap();
        assert_eq!(text.lines().count(), 6145);
        assert_eq!(text.lines().next().unwrap(), "C0,C1,C2,C3");
        let graph = fs::read_to_string(dir.path().join(format!("{kind}.graph.txt"))).unwrap();
        assert_eq!(graph.lines().count(), edges);
        assert!(graph.lines().all(|l| l.ends_with("->C3")));
    }
}

#[test]
fn gen_data_unwritable_path_is_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = cgpt(
        &["gen-data", "additive", "--out", "missing/dir/a.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = cgpt(&["train", "--model", "transformer"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    for id in ["leaky", "strict", "pure", "dlinear", "mlp"] {
        assert!(msg.contains(id), "{msg}");
    }
    assert_eq!(
        cgpt(&["train", "--revin", "maybe"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(cgpt(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(
        cgpt(&["report", "out", "--experiment", "4"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(cgpt(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn missing_dataset_is_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = cgpt(
        &[
            "train",
            "--dataset",
            "etth1",
            "--model",
            "dlinear",
            "--seeds",
            "0",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ETTh1.csv"), "{}", stderr(&o));
}

#[test]
fn train_eval_report_round() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("small.cfg"),
        "dataset=additive\nhorizon=1\nrevin=no\nseeds=0\nd_model=8\nd_ff=16\nmax_epochs=1\n\
         max_train_windows=128\nmax_eval_windows=64\nbatch=32\n",
    )
    .unwrap();
    let train = |model: &str, extra: &[&str]| {
        let mut args = vec![
            "train",
            "--config",
            "small.cfg",
            "--model",
            model,
            "--seeds",
            "0,1",
            "--out",
            "out",
        ];
        args.extend_from_slice(extra);
        cgpt(&args, dir.path())
    };
    for model in ["leaky", "strict", "pure"] {
        let o = train(model, &[]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let run = dir.path().join("out/additive/leaky/revin-no/1");
    for f in ["result.txt", "timing.txt", "model.ckpt"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let record = fs::read_to_string(run.join("result.txt")).unwrap();
    assert!(
        record.contains("horizon=1") && record.contains("revin=no"),
        "{record}"
    );

    let again = train("leaky", &[]);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--overwrite"));
    assert_eq!(train("leaky", &["--overwrite"]).status.code(), Some(0));

    let o = cgpt(
        &[
            "eval",
            "out/additive/leaky/revin-no/0/model.ckpt",
            "--split",
            "val",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = String::from_utf8_lossy(&o.stdout);
    assert!(
        line.contains("model=leaky") && line.contains("mse="),
        "{line}"
    );

    let o = cgpt(
        &[
            "report",
            "out",
            "--experiment",
            "3",
            "--output",
            "table.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 2, "{table}");
    assert!(rows[1].starts_with("additive,96->1,no,"), "{table}");

    let empty = cgpt(&["report", "nowhere", "--experiment", "1"], dir.path());
    assert_eq!(empty.status.code(), Some(2));
}
