use std::path::Path;
use std::process::{Command, Output};

fn antidote(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_antidote"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn blobs(dir: &Path) {
    let o = antidote(
        &[
            "gen-fixture",
            "--out",
            "blobs.csv",
            "--spread",
            "2.5",
            "--seed",
            "9",
            "--blob-labels",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

const RUN: [&str; 13] = [
    "run",
    "--data",
    "blobs.csv",
    "--combination",
    "kmeans+balance",
    "--alpha",
    "vanilla",
    "--v-start",
    "1",
    "--sre-stages",
    "1",
    "--max-v-fraction",
    "0.05",
];

#[test]
fn run_appends_a_table_row() {
    let dir = tempfile::tempdir().unwrap();
    blobs(dir.path());
    for _ in 0..2 {
        let mut args = RUN.to_vec();
        args.extend(["--out-csv", "table.csv", "--out-json", "r.json"]);
        let o = antidote(&args, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut r = csv::Reader::from_path(dir.path().join("table.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header.join(","),
        "combination,dataset,k,alpha,V_ratio,F_vanilla,F_antidote,silhouette_vanilla,silhouette_antidote,db_vanilla,db_antidote,ch_vanilla,ch_antidote,status,seed"
    );
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert_eq!(&row[0], "kmeans+balance");
        assert_eq!(&row[1], "blobs");
        let f_van: f64 = row[5].parse().unwrap();
        let f_anti: f64 = row[6].parse().unwrap();
        assert!(f_anti <= f_van);
        assert_eq!(row[6].split('.').nth(1).unwrap().len(), 4);
    }

    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert!(json["result"]["V"].is_object());
    assert!(json["comparison"]["quality_vanilla"]["silhouette"].is_number());
}

#[test]
fn missing_dataset_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = antidote(
        &[
            "run",
            "--data",
            "nowhere/missing.csv",
            "--combination",
            "kmeans+social",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere/missing.csv"));
}

#[test]
fn bad_arguments_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    blobs(dir.path());
    for args in [
        vec![
            "run",
            "--data",
            "blobs.csv",
            "--combination",
            "kmeans+fairness",
        ],
        vec![
            "run",
            "--data",
            "blobs.csv",
            "--combination",
            "kmeans+balance",
            "--k",
            "1",
        ],
        vec![
            "run",
            "--data",
            "blobs.csv",
            "--combination",
            "kmeans+balance",
            "--alpha",
            "0.5",
        ],
        vec![
            "run",
            "--data",
            "blobs.csv",
            "--combination",
            "kmeans+balance",
            "--group-column",
            "nope",
        ],
        vec!["frobnicate"],
    ] {
        let o = antidote(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn config_file_values_lose_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    blobs(dir.path());
    std::fs::write(
        dir.path().join("run.conf"),
        "# shared settings\ncombination = kmeans+social\ninner_budget = 30\nsre_stages = 1\nv_start = 1\nmax_outer_iters = 2\n",
    )
    .unwrap();
    let o = antidote(
        &[
            "run",
            "--config",
            "run.conf",
            "--data",
            "blobs.csv",
            "--inner-budget",
            "25",
            "--out-json",
            "r.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(json["combination"], "kmeans+social");
    assert_eq!(json["config"]["inner_budget"], 25);
    assert_eq!(json["config"]["max_outer_iters"], 2);

    let o = antidote(
        &["run", "--config", "absent.conf", "--data", "blobs.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.conf"));
}

#[test]
fn metrics_schema_and_single_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let o = antidote(
        &[
            "gen-fixture",
            "--out",
            "b.csv",
            "--blobs",
            "3",
            "--spread",
            "30",
            "--blob-labels",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let o = antidote(
        &["metrics", "--data", "b.csv", "--label-column", "blob"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["calinski_harabasz", "davies_bouldin", "silhouette"]);
    assert!(json["silhouette"].as_f64().unwrap() > 0.9);

    let labels: String = std::iter::once("label".to_string())
        .chain((0..200).map(|_| "7".to_string()))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(dir.path().join("one.csv"), labels).unwrap();
    let o = antidote(
        &[
            "metrics",
            "--data",
            "b.csv",
            "--features",
            "x0,x1",
            "--labels",
            "one.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("need ≥2 clusters"));
}

#[test]
fn metrics_from_centers() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "x,group\n0,a\n1,b\n10,a\n11,b\n").unwrap();
    std::fs::write(dir.path().join("c.csv"), "x\n0.5\n10.5\n").unwrap();
    let o = antidote(
        &["metrics", "--data", "d.csv", "--centers", "c.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((json["davies_bouldin"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert!((json["calinski_harabasz"].as_f64().unwrap() - 200.0).abs() < 1e-9);
}

#[test]
fn sweep_rows_and_sign() {
    let dir = tempfile::tempdir().unwrap();
    assert!(antidote(
        &["gen-fixture", "--kind", "line", "--out", "line.csv"],
        dir.path()
    )
    .status
    .success());
    let o = antidote(
        &[
            "sweep-lambda",
            "--data",
            "line.csv",
            "--v-start",
            "1",
            "--max-v-fraction",
            "0.1",
            "--alpha",
            "vanilla",
            "--out",
            "s.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(dir.path().join("s.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["lambda", "F_vanilla", "F_antidote", "difference"]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(&rows[0][0], "0.001000");
    assert_eq!(&rows[9][0], "0.010000");
    for row in &rows {
        let d: f64 = row[3].parse().unwrap();
        assert!(d >= -1e-9, "{row:?}");
    }

    let o = antidote(
        &[
            "sweep-lambda",
            "--data",
            "line.csv",
            "--lambdas",
            "0.005",
            "--v-start",
            "1",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);
}

#[test]
fn son_run_writes_na_k() {
    let dir = tempfile::tempdir().unwrap();
    assert!(antidote(
        &["gen-fixture", "--kind", "line", "--out", "line.csv"],
        dir.path()
    )
    .status
    .success());
    let o = antidote(
        &[
            "run",
            "--data",
            "line.csv",
            "--combination",
            "son+social",
            "--lambda",
            "0.004",
            "--v-start",
            "1",
            "--max-outer-iters",
            "1",
            "--out-csv",
            "t.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(dir.path().join("t.csv")).unwrap();
    let row = r.records().next().unwrap().unwrap();
    assert_eq!(&row[0], "son+social");
    assert_eq!(&row[2], "NA");
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = antidote(&["--help"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("sweep-lambda"));
}
