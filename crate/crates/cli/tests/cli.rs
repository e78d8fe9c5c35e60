use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn eitnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eitnet"))
        .args(args)
        .env_remove("EITNET_OUT")
        .output()
        .expect("spawn eitnet")
}

fn ok(args: &[&str]) -> Output {
    let out = eitnet(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs `args` twice into fresh directories and requires identical output trees.
fn assert_repeatable(args: &[&str]) -> BTreeMap<PathBuf, Vec<u8>> {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let mut full = args.to_vec();
        full.extend(["--out", d.path().to_str().unwrap()]);
        ok(&full);
    }
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(!fa.is_empty(), "{args:?} wrote nothing");
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{args:?}: {} differs between runs", k.display());
    }
    fa
}

fn text(f: &BTreeMap<PathBuf, Vec<u8>>, name: &str) -> String {
    String::from_utf8(f[Path::new(name)].clone()).unwrap()
}

fn small_dataset() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    ok(&["gen-data", "--seed", "3", "--repetitions", "1", "--out", d.path().to_str().unwrap()]);
    d
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = eitnet(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(eitnet(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(eitnet(&["train"]).status.code(), Some(2), "missing --seed is a usage error");
}

#[test]
fn invalid_config_exits_3_with_one_line() {
    let d = tempfile::tempdir().unwrap();
    let out_dir = d.path().to_str().unwrap();
    for args in [
        vec!["complexity", "--toggles", "det,xyz"],
        vec!["complexity", "--toggles", "none"],
        vec!["eval", "--seed", "1", "--axis", "diagonal"],
        vec!["train", "--seed", "1", "--lr", "-1"],
        vec!["simulate", "--seed", "1", "--duration", "3 fortnights"],
        vec!["simulate", "--seed", "1", "--threshold", "1.5"],
        vec!["run-pipeline", "--seed", "1", "--dataset", "/nonexistent/dataset"],
    ] {
        let mut full = args.clone();
        full.extend(["--out", out_dir]);
        let out = eitnet(&full);
        assert_eq!(out.status.code(), Some(3), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("eitnet: error: config: "), "{err}");
    }
}

#[test]
fn runtime_failure_exits_1() {
    let d = tempfile::tempdir().unwrap();
    let model = d.path().join("model");
    fs::create_dir_all(&model).unwrap();
    fs::write(model.join("model.txt"), "seed=1\ntoggles=det,i3d,tsf\n").unwrap();
    let out = eitnet(&["eval", "--seed", "1", "--model", model.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("eitnet: error: runtime: "));
}

#[test]
fn output_directory_defaults_to_env() {
    let d = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_eitnet"))
        .args(["complexity"])
        .env("EITNET_OUT", d.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.path().join("complexity.csv").is_file());
}

#[test]
fn simulate_is_byte_identical() {
    let f = assert_repeatable(&["simulate", "--cameras", "5", "--duration", "2s", "--seed", "1"]);
    let report = text(&f, "sim_report.csv");
    assert!(report.starts_with("# seed=1 "));
    assert!(report.lines().filter(|l| l.starts_with(char::is_numeric)).count() > 5);
    let threaded = assert_repeatable(&["simulate", "--cameras", "5", "--duration", "2s", "--seed", "1", "--threaded"]);
    assert_eq!(f, threaded);
}

#[test]
fn simulate_reads_camera_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("rig.txt");
    fs::write(&cfg, "id=4 period_us=40000 offset_us=900\nid=9 period_us=40000 jitter_us=300 drop_prob=0.1\n").unwrap();
    let f = assert_repeatable(&["simulate", "--cameras", cfg.to_str().unwrap(), "--duration", "500ms", "--seed", "2"]);
    let report = text(&f, "sim_report.csv");
    assert!(report.contains("\n4,") && report.contains("\n9,"));
    assert!(report.contains("window_period_us=40000"));
}

#[test]
fn gradcheck_and_complexity_are_repeatable() {
    let g = assert_repeatable(&["gradcheck", "--seed", "5"]);
    assert_eq!(text(&g, "gradcheck.csv").lines().count(), 6);
    let c = assert_repeatable(&["complexity", "--toggles", "det,tsf"]);
    let csv = text(&c, "complexity.csv");
    assert!(csv.lines().last().unwrap().starts_with("total,"));
    assert!(!csv.contains("i3d"));
}

#[test]
fn gen_data_is_repeatable() {
    let f = assert_repeatable(&["gen-data", "--seed", "4", "--repetitions", "1"]);
    let manifest = text(&f, "manifest.csv");
    assert!(manifest.starts_with("# seed=4 "));
    // comment, header, 10 subjects x 5 views x 4 actions
    assert_eq!(manifest.lines().count(), 2 + 200);
    assert_eq!(f.len(), 1 + 2 * 200);
}

#[test]
fn train_eval_and_pipeline_are_repeatable() {
    let data = small_dataset();
    let ds = data.path().to_str().unwrap();
    let trained = assert_repeatable(&["train", "--seed", "7", "--dataset", ds, "--epochs", "3"]);
    let curve = text(&trained, "learning_curve.csv");
    assert!(curve.starts_with("# seed=7 "));
    assert_eq!(curve.lines().count(), 2 + 3);
    assert!(trained.contains_key(Path::new("model/model.txt")));

    let model = tempfile::tempdir().unwrap();
    ok(&["train", "--seed", "7", "--dataset", ds, "--epochs", "3", "--out", model.path().to_str().unwrap()]);
    let model_dir = model.path().join("model");
    let m = model_dir.to_str().unwrap();
    let ev = assert_repeatable(&["eval", "--seed", "7", "--axis", "subject", "--dataset", ds, "--model", m]);
    let row = text(&ev, "metrics.csv").lines().last().unwrap().to_string();
    assert!(row.starts_with("subject,7,") && row.ends_with(",6,4"), "{row}");
    let ev = assert_repeatable(&["eval", "--seed", "7", "--axis", "view", "--dataset", ds, "--model", m]);
    assert!(text(&ev, "metrics.csv").trim_end().ends_with(",3,2"));

    let rp = assert_repeatable(&["run-pipeline", "--seed", "7", "--dataset", ds, "--model", m]);
    assert_eq!(text(&rp, "probabilities.csv").lines().count(), 2 + 200 * 4);
    assert_eq!(text(&rp, "predictions.csv").lines().count(), 2 + 200);
}

#[test]
fn eval_trains_when_no_model_is_given() {
    let data = small_dataset();
    let f = assert_repeatable(&["eval", "--seed", "7", "--dataset", data.path().to_str().unwrap(), "--epochs", "2"]);
    let csv = text(&f, "metrics.csv");
    assert!(csv.contains("\nsplit_axis,seed,accuracy,mpjpe,pa_mpjpe,train_groups,test_groups\n"));
    assert!(csv.trim_end().ends_with(",6,4"));
}

#[test]
fn ablate_is_repeatable() {
    let data = small_dataset();
    let f = assert_repeatable(&["ablate", "--seed", "7", "--dataset", data.path().to_str().unwrap(), "--epochs", "1"]);
    let csv = text(&f, "ablation.csv");
    let names: Vec<&str> = csv.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["full", "no_detection", "no_i3d", "no_timesformer"]);
}

#[test]
fn every_csv_ends_with_newline() {
    let data = small_dataset();
    let f = assert_repeatable(&["run-pipeline", "--seed", "1", "--dataset", data.path().to_str().unwrap()]);
    for (name, body) in &f {
        assert_eq!(body.last(), Some(&b'\n'), "{}", name.display());
    }
}
